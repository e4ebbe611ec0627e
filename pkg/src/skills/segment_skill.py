"""
Segment Skill - Point-prompted object masks and masked classifier inputs
A region-growing baseline and an adapter for masks precomputed by an external segmenter
"""
from collections import deque
from pathlib import Path
from typing import Optional, Protocol, Tuple, Union

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import ndimage

from ..errors import FormatError, IoError, ShapeError
from ..models import Image, PixelPoint
from .locate_skill import resize_array

# 4-connectivity
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

# up, down, left, right
_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class Mask(BaseModel):
    """Binary occupancy over a frame, row-major (height, width) bool array"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    bits: np.ndarray

    @field_validator("bits")
    @classmethod
    def _binary(cls, bits: np.ndarray) -> np.ndarray:
        if not isinstance(bits, np.ndarray) or bits.ndim != 2:
            raise ValueError("mask bits must be a 2-D array")
        bits = bits.astype(bool, copy=False)
        if not bits.any():
            raise ValueError("mask must have at least one set pixel")
        view = bits.view()
        view.flags.writeable = False
        return view

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def bbox(self) -> Tuple[int, int, int, int]:
        """Tight bounding box as (x0, y0, x1, y1), end-exclusive"""
        rows = np.flatnonzero(self.bits.any(axis=1))
        cols = np.flatnonzero(self.bits.any(axis=0))
        return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1


class RegionGrowConfig(BaseModel):
    """Colour-distance threshold and growth cap for the flood fill"""

    model_config = ConfigDict(frozen=True)

    tau: float = Field(default=30.0, ge=0)
    max_pixels: int = Field(default=250_000, ge=1)


class MaskProvider(Protocol):
    """A segmenter answering a point prompt with one mask"""

    def mask(self, img: Image, seed: PixelPoint, frame_index: int) -> Mask:
        ...


class SegmentSkill:
    """
    Agent Skill: Point-Prompted Segmentation

    Grows object masks from the gaze point and renders masked chips for classification.
    """

    def __init__(self, config: Optional[RegionGrowConfig] = None, resize_to: int = 224):
        self.config = config or RegionGrowConfig()
        self.resize_to = resize_to

    def grow_region(self, img: Image, seed: PixelPoint,
                    cfg: Optional[RegionGrowConfig] = None) -> Mask:
        """
        4-connected flood fill from the seed

        Admits pixels whose Euclidean RGB distance to the seed pixel is at most tau.
        Growth is breadth-first with neighbours visited up, down, left, right, and stops
        once max_pixels pixels are admitted.

        Args:
            img: Source frame
            seed: Point prompt inside the frame
            cfg: Overrides the skill's configuration

        Returns:
            Mask containing the seed
        """
        cfg = cfg or self.config
        if not seed.inside(img):
            raise ShapeError(f"seed ({seed.x},{seed.y}) outside {img.width}x{img.height} frame")

        admissible = self._admissible(img, seed, cfg.tau)

        # Without a binding cap the BFS result is exactly the seed's connected component
        labels, _ = ndimage.label(admissible, structure=_CROSS)
        component = labels == labels[seed.y, seed.x]
        if int(component.sum()) <= cfg.max_pixels:
            return Mask(bits=component)

        return Mask(bits=_bfs(admissible, seed, cfg.max_pixels))

    def _admissible(self, img: Image, seed: PixelPoint, tau: float) -> np.ndarray:
        diff = img.pixels.astype(np.int32) - np.asarray(img.pixel(seed.x, seed.y), dtype=np.int32)
        dist2 = np.einsum("ijk,ijk->ij", diff, diff)
        return np.sqrt(dist2) <= tau

    def render_masked(self, img: Image, mask: Mask, resize_to: Optional[int] = None) -> Image:
        """
        Zero the background, crop to the mask's bounding box, resize to the input side

        Raises:
            ShapeError: mask and image dimensions differ
        """
        side = self.resize_to if resize_to is None else resize_to
        chip = self.masked_chip(img, mask)
        return Image(pixels=resize_array(chip.pixels, side, side))

    def masked_chip(self, img: Image, mask: Mask) -> Image:
        """Background-zeroed bounding-box chip before resizing"""
        if (mask.width, mask.height) != (img.width, img.height):
            raise ShapeError(
                f"mask {mask.width}x{mask.height} does not match image {img.width}x{img.height}")
        x0, y0, x1, y1 = mask.bbox()
        chip = img.pixels[y0:y1, x0:x1].copy()
        chip[~mask.bits[y0:y1, x0:x1]] = 0
        return Image(pixels=chip)


class RegionGrowSegmenter:
    """MaskProvider backed by the region-growing baseline"""

    def __init__(self, skill: SegmentSkill):
        self.skill = skill

    def mask(self, img: Image, seed: PixelPoint, frame_index: int) -> Mask:
        return self.skill.grow_region(img, seed)


class ExternalMaskSegmenter:
    """MaskProvider reading `<root>/<video_id>/<frame_index>.pbm`"""

    def __init__(self, root: Union[str, Path], video_id: str):
        self.root = Path(root)
        self.video_id = video_id

    def path_for(self, frame_index: int) -> Path:
        return self.root / self.video_id / f"{frame_index}.pbm"

    def mask(self, img: Image, seed: PixelPoint, frame_index: int) -> Mask:
        return load_external_mask(self.path_for(frame_index), img.width, img.height)


def load_external_mask(path: Union[str, Path], width: int, height: int) -> Mask:
    """
    Read a binary PBM (P4) mask; black (1) bits are the object

    Raises:
        IoError: unreadable file
        ShapeError: dimensions differ from the frame
        FormatError: the mask is empty
    """
    try:
        with PILImage.open(path) as pil:
            gray = np.asarray(pil.convert("L"))
    except (OSError, UnidentifiedImageError) as e:
        raise IoError(f"cannot read mask {path}: {e}") from e

    if gray.shape != (height, width):
        raise ShapeError(f"mask {gray.shape[1]}x{gray.shape[0]} does not match frame {width}x{height}")
    bits = gray == 0
    if not bits.any():
        raise FormatError(f"mask {path} has no set pixels")
    return Mask(bits=bits)


def write_mask(mask: Mask, path: Union[str, Path]) -> None:
    """Write a mask as binary PBM (P4)"""
    gray = np.where(mask.bits, 0, 255).astype(np.uint8)
    pil = PILImage.fromarray(gray, "L").convert("1", dither=PILImage.Dither.NONE)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        pil.save(path, "PPM")
    except OSError as e:
        raise IoError(f"cannot write mask {path}: {e}") from e


def _bfs(admissible: np.ndarray, seed: PixelPoint, cap: int) -> np.ndarray:
    height, width = admissible.shape
    admitted = np.zeros_like(admissible, dtype=bool)
    admitted[seed.y, seed.x] = True
    count = 1
    queue = deque([(seed.y, seed.x)])

    while queue and count < cap:
        y, x = queue.popleft()
        for dy, dx in _NEIGHBOURS:
            ny, nx = y + dy, x + dx
            if 0 <= ny < height and 0 <= nx < width and admissible[ny, nx] and not admitted[ny, nx]:
                admitted[ny, nx] = True
                count += 1
                queue.append((ny, nx))
                if count >= cap:
                    break
    return admitted
