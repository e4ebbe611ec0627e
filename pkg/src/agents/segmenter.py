"""
Segmenter Agent - Point-prompted object mask around the gaze
"""
from typing import Any, Dict

from .base_agent import BaseAgent
from ..skills.segment_skill import MaskProvider, SegmentSkill


class Segmenter(BaseAgent):
    """
    Segmenter Agent

    Responsibilities:
    - Ask the mask provider for the object under the gaze point
    - Render the background-zeroed, box-cropped mask input
    """

    def __init__(self, provider: MaskProvider, segment_skill: SegmentSkill):
        super().__init__(
            name="segment",
            role="Object mask extraction at the gaze point",
            skills=[segment_skill],
        )

        self.provider = provider
        self.segment_skill = segment_skill

    def execute(self, state: Dict[str, Any]) -> Dict[str, Any]:
        """
        Args:
            state: Must contain 'clean', 'gaze' and 'frame_index'

        Returns:
            'mask_chip' and 'mask_area'
        """
        clean = state["clean"]
        mask = self.provider.mask(clean, state["gaze"], state["frame_index"])
        return {
            "mask_chip": self.segment_skill.render_masked(clean, mask),
            "mask_area": mask.area,
        }
