"""
Locate Skill - Finds the rendered gaze dot and cuts gaze-centred crops
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import CropTooLarge, InvalidSize, RangeError
from ..models import GazeRecord, Image, PixelPoint


class CropSpec(BaseModel):
    """Square crop side and classifier input side"""

    model_config = ConfigDict(frozen=True)

    size: int = Field(default=128, ge=2)
    resize_to: int = Field(default=224, ge=1)


def greenness(pixels: np.ndarray) -> np.ndarray:
    """Per-pixel score 2G - R - B as int16"""
    r = pixels[..., 0].astype(np.int16)
    g = pixels[..., 1].astype(np.int16)
    b = pixels[..., 2].astype(np.int16)
    return 2 * g - r - b


class LocateSkill:
    """
    Agent Skill: Gaze Localization

    Finds the overlay marker, removes it, and extracts square crops around the gaze.
    """

    def __init__(self, spec: Optional[CropSpec] = None, overlay_radius: int = 6,
                 overlay_threshold: int = 300):
        """
        Args:
            spec: Crop size and output side
            overlay_radius: Radius around the gaze point searched for overlay pixels
            overlay_threshold: Greenness at or above which a pixel counts as overlay
        """
        self.spec = spec or CropSpec()
        self.overlay_radius = overlay_radius
        self.overlay_threshold = overlay_threshold

    def find_gaze_dot(self, img: Image) -> PixelPoint:
        """
        Pixel with the highest greenness; ties go to the first in row-major order

        Args:
            img: Frame with a rendered gaze overlay

        Returns:
            PixelPoint of the marker
        """
        # argmax returns the first occurrence of the maximum
        flat = int(np.argmax(greenness(img.pixels)))
        row, col = divmod(flat, img.width)
        return PixelPoint(x=col, y=row)

    def resolve_gaze(self, img: Image, record: Optional[GazeRecord] = None) -> Optional[PixelPoint]:
        """
        Gaze point for a frame: the logged estimate when present, else the detector

        Returns None when the log marks the frame invalid.
        """
        if record is None:
            return self.find_gaze_dot(img)
        if not record.valid:
            return None
        point = record.point
        if not point.inside(img):
            raise RangeError(f"gaze ({point.x},{point.y}) outside {img.width}x{img.height} frame")
        return point

    def erase_overlay(self, img: Image, center: PixelPoint) -> Image:
        """
        Replace overlay pixels near the gaze point by the median of the surrounding ring

        Pixels within overlay_radius whose greenness reaches overlay_threshold are
        treated as overlay. The ring is the one-pixel band just outside the radius.
        """
        if self.overlay_radius <= 0:
            return img

        r = self.overlay_radius
        y0, y1 = max(0, center.y - r - 1), min(img.height, center.y + r + 2)
        x0, x1 = max(0, center.x - r - 1), min(img.width, center.x + r + 2)
        window = img.pixels[y0:y1, x0:x1]

        yy, xx = np.mgrid[y0:y1, x0:x1]
        dist2 = (yy - center.y) ** 2 + (xx - center.x) ** 2
        overlay = (dist2 <= r * r) & (greenness(window) >= self.overlay_threshold)
        if not overlay.any():
            return img

        ring = (dist2 > r * r) & ~overlay
        if ring.any():
            fill = np.median(window[ring], axis=0)
        else:
            fill = np.median(window[~overlay], axis=0) if (~overlay).any() else np.zeros(3)

        pixels = img.pixels.copy()
        pixels[y0:y1, x0:x1][overlay] = np.rint(fill).astype(np.uint8)
        return Image(pixels=pixels)

    def crop_square(self, img: Image, center: PixelPoint, spec: Optional[CropSpec] = None) -> Image:
        """
        size x size window around the centre, shifted to stay inside the frame

        The window starts at c - floor(size / 2) and is moved (never padded) when it
        would cross a border, so the centre pixel is always inside the output.

        Raises:
            CropTooLarge: size exceeds the smaller frame side
            RangeError: centre outside the frame
        """
        spec = spec or self.spec
        size = spec.size
        if size > min(img.width, img.height):
            raise CropTooLarge(f"crop {size} does not fit a {img.width}x{img.height} frame")
        if not center.inside(img):
            raise RangeError(f"crop centre ({center.x},{center.y}) outside the frame")

        x0 = min(max(center.x - size // 2, 0), img.width - size)
        y0 = min(max(center.y - size // 2, 0), img.height - size)
        return Image(pixels=img.pixels[y0:y0 + size, x0:x0 + size])

    def resize_bilinear(self, img: Image, side: int) -> Image:
        """
        Bilinear resize to side x side with half-pixel centres

        Source coordinates are (dst + 0.5) * in / out - 0.5, clamped to the image.

        Raises:
            InvalidSize: side < 1
        """
        if side < 1:
            raise InvalidSize(f"resize side must be positive, got {side}")
        return Image(pixels=resize_array(img.pixels, side, side))

    def gaze_crop(self, img: Image, center: PixelPoint) -> Image:
        """Crop around the gaze and resize to the classifier input side"""
        return self.resize_bilinear(self.crop_square(img, center), self.spec.resize_to)


def _axis_weights(n_in: int, n_out: int):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_array(pixels: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize of an (h, w, c) uint8 array to (height, width, c)"""
    if pixels.shape[0] == height and pixels.shape[1] == width:
        return pixels

    ylo, yhi, wy = _axis_weights(pixels.shape[0], height)
    xlo, xhi, wx = _axis_weights(pixels.shape[1], width)

    data = pixels.astype(np.float64)
    top = data[ylo]
    bottom = data[yhi]
    wy = wy[:, None, None]
    rows = top * (1.0 - wy) + bottom * wy

    wx = wx[None, :, None]
    out = rows[:, xlo] * (1.0 - wx) + rows[:, xhi] * wx
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
