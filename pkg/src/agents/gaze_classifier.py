"""
Gaze Classifier Agent - Embeds every classifier input, scores it and fuses the scores
"""
from typing import Any, Dict, Mapping, Optional, Tuple

from .base_agent import BaseAgent
from ..errors import ConfigError
from ..models import ClassScores, Image
from ..skills.classify_skill import (ClassEmbeddings, ClassifySkill, EmbeddingExtractor, FewShotCache,
                                     LinearProbe)

# Pipeline state key holding each input image
INPUT_KEYS = {"crop": "crop", "mask": "mask_chip", "frame": "frame_input"}


class GazeClassifier(BaseAgent):
    """
    Gaze Classifier Agent

    Responsibilities:
    - Embed the crop, mask and frame inputs that the run is configured for
    - Score each embedding zero-shot, with the few-shot cache adapter, or with the probe
    - Fuse the per-input scores and pick the top-1 class
    """

    def __init__(self, mode: str, inputs: Tuple[str, ...], extractors: Mapping[str, EmbeddingExtractor],
                 class_embeddings: Optional[ClassEmbeddings] = None,
                 caches: Optional[Mapping[str, FewShotCache]] = None,
                 probe: Optional[LinearProbe] = None, fusion: str = "prob"):
        """
        Args:
            mode: zero-shot, adapter or probe
            inputs: Input names among crop, mask, frame
            extractors: Extractor per input; inputs without one use the crop extractor
            class_embeddings: Needed by zero-shot and adapter modes
            caches: Few-shot cache per input; inputs without one use the crop cache
            probe: Needed by probe mode
            fusion: prob or logit
        """
        if mode in ("zero-shot", "adapter") and class_embeddings is None:
            raise ConfigError(f"classifier {mode!r} needs class embeddings")
        if mode == "adapter" and not caches:
            raise ConfigError("classifier 'adapter' needs a few-shot cache")
        if mode == "probe" and probe is None:
            raise ConfigError("classifier 'probe' needs a trained probe")
        unknown = [name for name in inputs if name not in INPUT_KEYS]
        if unknown or not inputs:
            raise ConfigError(f"unknown classifier inputs: {unknown or inputs}")

        self.skills_by_input = {
            name: ClassifySkill(extractors.get(name, extractors["crop"]), fusion) for name in inputs
        }

        super().__init__(
            name="classify",
            role="Semantic gaze classification",
            skills=list(self.skills_by_input.values()),
        )

        self.mode = mode
        self.inputs = inputs
        self.class_embeddings = class_embeddings
        self.caches = dict(caches or {})
        self.probe = probe
        self.fusion = fusion

    def score(self, name: str, img: Image, frame_id: Optional[str] = None) -> ClassScores:
        """Scores of one input image"""
        skill = self.skills_by_input[name]
        e = skill.embed(img, frame_id)
        if self.mode == "zero-shot":
            return skill.zero_shot_scores(e, self.class_embeddings)
        if self.mode == "adapter":
            cache = self.caches.get(name, self.caches.get("crop"))
            return skill.adapter_scores(e, cache, self.class_embeddings)
        return skill.probe_scores(e, self.probe)

    def execute(self, state: Dict[str, Any]) -> Dict[str, Any]:
        """
        Classify one frame from its prepared inputs

        Args:
            state: Must contain the state key of every configured input and 'frame_index'

        Returns:
            Fused 'scores' and the top-1 'label'
        """
        frame_id = str(state["frame_index"])
        scores = [self.score(name, state[INPUT_KEYS[name]], frame_id) for name in self.inputs]
        fused = scores[0] if len(scores) == 1 else self.skills_by_input[self.inputs[0]].fuse_scores(*scores)
        return {"scores": fused, "label": fused.top1(), "status": "ok"}
