"""
Gaze Locator Agent - Resolves the gaze point and cuts the classifier inputs around it
"""
from typing import Any, Dict, Tuple

from .base_agent import BaseAgent
from ..models import Image
from ..skills.locate_skill import CropSpec, LocateSkill


class GazeLocator(BaseAgent):
    """
    Gaze Locator Agent

    Responsibilities:
    - Take the logged gaze estimate, or detect the overlay marker when none is logged
    - Remove the rendered marker from the frame
    - Produce the gaze-centred crop and, when requested, the whole-frame input
    """

    def __init__(self, spec: CropSpec, overlay_radius: int = 6, overlay_threshold: int = 300,
                 inputs: Tuple[str, ...] = ("crop", "mask")):
        locate_skill = LocateSkill(spec, overlay_radius, overlay_threshold)

        super().__init__(
            name="locate",
            role="Gaze point resolution and crop extraction",
            skills=[locate_skill],
        )

        self.locate_skill = locate_skill
        self.inputs = inputs

    def execute(self, state: Dict[str, Any]) -> Dict[str, Any]:
        """
        Resolve the gaze point of a frame and erase the overlay around it

        Args:
            state: Must contain 'image'; 'record' is the logged gaze (or None)

        Returns:
            'gaze' (None for frames logged invalid) and the overlay-free 'clean' frame
        """
        image: Image = state["image"]
        gaze = self.locate_skill.resolve_gaze(image, state.get("record"))
        if gaze is None:
            return {"gaze": None, "status": "invalid"}
        return {"gaze": gaze, "clean": self.locate_skill.erase_overlay(image, gaze)}

    def crop(self, state: Dict[str, Any]) -> Dict[str, Any]:
        """
        Cut the classifier inputs from the overlay-free frame

        Returns:
            'crop' and, for frame-level inputs, 'frame_input', both resized to the input side
        """
        clean: Image = state["clean"]
        update: Dict[str, Any] = {"crop": self.locate_skill.gaze_crop(clean, state["gaze"])}
        if "frame" in self.inputs:
            update["frame_input"] = self.locate_skill.resize_bilinear(clean, self.locate_skill.spec.resize_to)
        return update
