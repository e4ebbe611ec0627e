import numpy as np

from src.models import ClassScores, Image, LabeledTimeline
from src.workflow.orchestrator import Session


def timeline(labels, fps=25.0, frames=None):
    return LabeledTimeline(session_id="t", fps=fps, labels=tuple(labels),
                           frames=None if frames is None else tuple(frames))


def scores(probs, kind="single"):
    return ClassScores(probs=np.asarray(probs, dtype=np.float64), kind=kind)


def solid(width, height, color):
    return Image.filled(width, height, color)


def as_session(synthetic, with_gaze=True):
    return Session(synthetic, synthetic.gaze if with_gaze else None,
                   session_id=synthetic.spec.session_id, fps=synthetic.spec.fps)
