"""
Synthesis Skill - Desk-scale egocentric sessions with known ground truth
Coloured class regions, a scripted gaze path and an optional green gaze overlay
"""
from typing import Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import SpecError
from ..models import GazeRecord, Image, LabeledTimeline
from .classify_skill import ClassEmbeddings, EmbeddingExtractor

# Colours keep 2G - R - B well below the overlay marker's score
DEFAULT_PALETTE: Tuple[Tuple[int, int, int], ...] = (
    (230, 180, 150),
    (30, 30, 120),
    (200, 60, 200),
    (240, 220, 60),
    (60, 120, 220),
    (150, 150, 150),
    (120, 80, 40),
)
BACKGROUND = (20, 20, 20)
DOT_CENTER = (0, 255, 0)
DOT_RIM = (40, 220, 40)
DOT_RADIUS = 3
GAZE_JITTER = 3


class Region(BaseModel):
    """Axis-aligned rectangle painted in one colour for one class"""

    model_config = ConfigDict(frozen=True)

    class_index: int = Field(ge=0)
    x: int = Field(ge=0)
    y: int = Field(ge=0)
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    color: Tuple[int, int, int]

    def overlaps(self, other: "Region") -> bool:
        return (self.x < other.x + other.width and other.x < self.x + self.width
                and self.y < other.y + other.height and other.y < self.y + self.height)

    @property
    def center(self) -> Tuple[int, int]:
        return self.x + self.width // 2, self.y + self.height // 2


class SyntheticSessionSpec(BaseModel):
    """Description of a synthetic session"""

    model_config = ConfigDict(frozen=True)

    n_frames: int = Field(default=500, ge=1)
    width: int = Field(default=640, ge=8)
    height: int = Field(default=480, ge=8)
    n_classes: int = Field(default=7, ge=1)
    regions: Optional[Tuple[Region, ...]] = None
    script: Optional[Tuple[Tuple[int, int], ...]] = None
    render_dot: bool = True
    noise: float = Field(default=0.0, ge=0)
    seed: int = 0
    fps: float = Field(default=25.0, gt=0)
    session_id: str = "synthetic"


class SyntheticSession:
    """
    Lazily rendered frames plus the gaze log and ground truth of a spec

    Frames are rendered on demand; frame i depends only on (spec, i).
    """

    def __init__(self, spec: SyntheticSessionSpec, regions: Tuple[Region, ...],
                 gaze: List[GazeRecord], truth: LabeledTimeline):
        self.spec = spec
        self.regions = regions
        self.gaze = gaze
        self.truth = truth
        self._base = _paint_regions(spec.width, spec.height, regions)

    def __len__(self) -> int:
        return self.spec.n_frames

    def frame(self, index: int) -> Image:
        pixels = self._base.copy()
        if self.spec.noise > 0:
            rng = np.random.default_rng([self.spec.seed, index])
            noise = rng.normal(0.0, self.spec.noise * 255.0, size=pixels.shape)
            pixels = np.clip(np.rint(pixels + noise), 0, 255).astype(np.uint8)
        if self.spec.render_dot:
            record = self.gaze[index]
            _draw_dot(pixels, record.x, record.y)
        return Image(pixels=pixels)

    def __iter__(self) -> Iterator[Tuple[int, Image]]:
        for index in range(self.spec.n_frames):
            yield index, self.frame(index)

    def region_chip(self, class_index: int) -> Image:
        """Plain patch of a class colour (a prototype for class embeddings)"""
        for region in self.regions:
            if region.class_index == class_index:
                return Image.filled(32, 32, region.color)
        raise SpecError(f"class {class_index} has no region")


class SynthesisSkill:
    """
    Agent Skill: Synthetic Session Generation

    Builds sessions whose gaze targets are known by construction.
    """

    def generate_synthetic_session(self, spec: SyntheticSessionSpec) -> SyntheticSession:
        """
        Frames, gaze log and ground-truth timeline for a spec

        Raises:
            SpecError: overlapping regions, bad class indices, regions outside the frame
                or an empty script
        """
        regions = spec.regions if spec.regions is not None else default_regions(spec)
        if not regions:
            raise SpecError("session needs at least one region")
        _check_regions(regions, spec)
        by_class = {r.class_index: r for r in regions}

        script = spec.script if spec.script is not None else self._random_script(spec, sorted(by_class))
        if not script:
            raise SpecError("script has no entries")
        for class_index, dwell in script:
            if class_index not in by_class:
                raise SpecError(f"script visits class {class_index} which has no region")
            if dwell < 1:
                raise SpecError("script dwell lengths must be positive")

        labels = _expand_script(script, spec.n_frames)
        rng = np.random.default_rng(spec.seed)
        gaze: List[GazeRecord] = []
        frame_ms = 1000.0 / spec.fps
        for index, class_index in enumerate(labels):
            region = by_class[class_index]
            cx, cy = region.center
            jx, jy = rng.integers(-GAZE_JITTER, GAZE_JITTER + 1, size=2)
            x = int(np.clip(cx + jx, region.x, region.x + region.width - 1))
            y = int(np.clip(cy + jy, region.y, region.y + region.height - 1))
            gaze.append(GazeRecord(frame_index=index, timestamp_ms=int(round(index * frame_ms)),
                                   x=x, y=y, valid=True))

        truth = LabeledTimeline(session_id=spec.session_id, fps=spec.fps, labels=tuple(labels))
        return SyntheticSession(spec, tuple(regions), gaze, truth)

    def prototype_class_embeddings(self, session: SyntheticSession, extractor: EmbeddingExtractor,
                                   temperature: float = 0.01) -> ClassEmbeddings:
        """Class embeddings from the plain colour chip of every class region"""
        chips = [session.region_chip(c) for c in range(session.spec.n_classes)]
        return ClassEmbeddings.from_prototypes([extractor.embed(chip) for chip in chips], temperature)

    def _random_script(self, spec: SyntheticSessionSpec, classes: List[int]) -> Tuple[Tuple[int, int], ...]:
        rng = np.random.default_rng([spec.seed, 1])
        script = []
        total = 0
        previous = None
        while total < spec.n_frames:
            choices = [c for c in classes if c != previous] or classes
            class_index = int(choices[rng.integers(len(choices))])
            dwell = int(rng.integers(5, 41))
            script.append((class_index, dwell))
            total += dwell
            previous = class_index
        return tuple(script)


def default_regions(spec: SyntheticSessionSpec) -> Tuple[Region, ...]:
    """Grid layout, four columns, one region per class with a margin to its cell"""
    cols = min(4, spec.n_classes)
    rows = -(-spec.n_classes // cols)
    cell_w, cell_h = spec.width // cols, spec.height // rows
    margin = max(1, min(cell_w, cell_h) // 16)
    regions = []
    for c in range(spec.n_classes):
        row, col = divmod(c, cols)
        regions.append(Region(
            class_index=c,
            x=col * cell_w + margin,
            y=row * cell_h + margin,
            width=cell_w - 2 * margin,
            height=cell_h - 2 * margin,
            color=DEFAULT_PALETTE[c % len(DEFAULT_PALETTE)],
        ))
    return tuple(regions)


def _check_regions(regions, spec: SyntheticSessionSpec) -> None:
    seen = set()
    for region in regions:
        if region.class_index >= spec.n_classes:
            raise SpecError(f"region class {region.class_index} outside the {spec.n_classes} classes")
        if region.class_index in seen:
            raise SpecError(f"two regions for class {region.class_index}")
        seen.add(region.class_index)
        if region.x + region.width > spec.width or region.y + region.height > spec.height:
            raise SpecError(f"region for class {region.class_index} leaves the frame")
    for i, a in enumerate(regions):
        for b in regions[i + 1:]:
            if a.overlaps(b):
                raise SpecError(f"regions for classes {a.class_index} and {b.class_index} overlap")


def _expand_script(script, n_frames: int) -> List[int]:
    """Repeat the script as needed and cut it to n_frames"""
    labels: List[int] = []
    while len(labels) < n_frames:
        for class_index, dwell in script:
            labels.extend([class_index] * dwell)
    return labels[:n_frames]


def _paint_regions(width: int, height: int, regions) -> np.ndarray:
    pixels = np.empty((height, width, 3), dtype=np.uint8)
    pixels[:] = BACKGROUND
    for r in regions:
        pixels[r.y:r.y + r.height, r.x:r.x + r.width] = r.color
    return pixels


def _draw_dot(pixels: np.ndarray, x: int, y: int) -> None:
    """Rim disc with a single pure-green centre pixel, the unique greenness maximum"""
    h, w = pixels.shape[:2]
    y0, y1 = max(0, y - DOT_RADIUS), min(h, y + DOT_RADIUS + 1)
    x0, x1 = max(0, x - DOT_RADIUS), min(w, x + DOT_RADIUS + 1)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    disc = (yy - y) ** 2 + (xx - x) ** 2 <= DOT_RADIUS * DOT_RADIUS
    pixels[y0:y1, x0:x1][disc] = DOT_RIM
    pixels[y, x] = DOT_CENTER
