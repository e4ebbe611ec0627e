"""
Run Log - Per-frame decisions and the failure-rate guardrail of a pipeline run
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel

from ..config import Config
from ..errors import PipelineError
from ..log import get_logger

logger = get_logger("runlog")


class FrameDecision(BaseModel):
    """Outcome of one frame"""

    frame_index: int
    status: str  # ok | invalid | failed
    label: Optional[int] = None
    top_score: Optional[float] = None
    stage: Optional[str] = None
    error: Optional[str] = None


class RunLog:
    """
    Audit trail of a pipeline run

    Provides:
    - Decision tracking per frame
    - Failure accounting against frames that carried a gaze estimate
    - A ceiling check that turns chronic failure into a hard error
    - A machine-readable summary for the report
    """

    def __init__(self, failure_ceiling: Optional[float] = None, metadata: Optional[Dict[str, Any]] = None):
        self.failure_ceiling = Config.FAILURE_CEILING if failure_ceiling is None else failure_ceiling
        self.decisions: List[FrameDecision] = []
        self.metadata = dict(metadata or {})

    def log_decision(self, frame_index: int, status: str, label: Optional[int] = None,
                     top_score: Optional[float] = None, stage: Optional[str] = None,
                     error: Optional[str] = None) -> FrameDecision:
        """
        Record the outcome of a frame

        Args:
            frame_index: Frame the decision is about
            status: ok, invalid (no gaze) or failed
            label: Predicted class for ok frames
            top_score: Score of the predicted class
            stage: Stage that failed
            error: Error description for failed frames
        """
        decision = FrameDecision(frame_index=frame_index, status=status, label=label,
                                 top_score=top_score, stage=stage, error=error)
        self.decisions.append(decision)
        if status == "failed":
            logger.warning("%s failed: %s", stage or "stage", error, extra={"frame": frame_index})
        return decision

    @property
    def gaze_frames(self) -> int:
        """Frames that carried a usable gaze estimate"""
        return sum(1 for d in self.decisions if d.status != "invalid")

    @property
    def failures(self) -> List[FrameDecision]:
        return [d for d in self.decisions if d.status == "failed"]

    def failure_rate(self) -> float:
        gaze = self.gaze_frames
        return len(self.failures) / gaze if gaze else 0.0

    def check_ceiling(self) -> None:
        """
        Raises:
            PipelineError: no frame carried a gaze estimate, or too many frames failed
        """
        if not self.decisions:
            raise PipelineError("session has no frames")
        if self.gaze_frames == 0:
            raise PipelineError("no frame carried a valid gaze estimate")
        rate = self.failure_rate()
        if rate > self.failure_ceiling:
            raise PipelineError(
                f"{len(self.failures)} of {self.gaze_frames} frames failed "
                f"({rate:.1%} > {self.failure_ceiling:.0%} ceiling)")

    def failures_by_stage(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for d in self.failures:
            counts[d.stage or "unknown"] = counts.get(d.stage or "unknown", 0) + 1
        return dict(sorted(counts.items()))

    def summary(self) -> Dict[str, Any]:
        """Counts for the report; free of timestamps so reruns stay identical"""
        statuses = [d.status for d in self.decisions]
        return {
            **self.metadata,
            "frames": len(self.decisions),
            "classified": statuses.count("ok"),
            "invalid_gaze": statuses.count("invalid"),
            "failed": statuses.count("failed"),
            "failure_rate": round(self.failure_rate(), 6),
            "failures_by_stage": self.failures_by_stage(),
        }

    def generate_audit_log(self) -> Dict[str, Any]:
        """
        Machine-readable audit log

        Returns:
            Summary plus every decision
        """
        return {
            "summary": self.summary(),
            "decisions": [d.model_dump() for d in self.decisions],
        }
