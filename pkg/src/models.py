"""
Shared domain models for the gaze pipeline
Images, gaze records, annotations, class scores and labelled timelines
"""
from typing import FrozenSet, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import TaxonomyError

DEFAULT_TAXONOMY: Tuple[str, ...] = (
    "Infant",
    "Vitals Monitor",
    "Video Laryngoscope Screen",
    "Airway Equipment",
    "Airway Provider",
    "Non-Team Member",
    "Other Physical Objects",
)

ScoreKind = Literal["single", "multi"]


class ClassTaxonomy(BaseModel):
    """Ordered class names; the order defines every score vector index"""

    model_config = ConfigDict(frozen=True)

    labels: Tuple[str, ...] = DEFAULT_TAXONOMY

    @field_validator("labels")
    @classmethod
    def _unique(cls, labels: Tuple[str, ...]) -> Tuple[str, ...]:
        if not labels:
            raise ValueError("taxonomy must name at least one class")
        if len(set(labels)) != len(labels):
            raise ValueError("taxonomy labels must be unique")
        return labels

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, name: str) -> int:
        """
        Resolve a class name to its index

        Raises:
            TaxonomyError: name is not in the taxonomy
        """
        try:
            return self.labels.index(name.strip())
        except ValueError:
            raise TaxonomyError(f"unknown class label: {name!r}") from None

    def name(self, index: int) -> str:
        return self.labels[index]

    @classmethod
    def from_file(cls, path: str) -> "ClassTaxonomy":
        """One class name per line; blank lines ignored"""
        with open(path, encoding="utf-8") as f:
            names = tuple(line.strip() for line in f if line.strip())
        return cls(labels=names)


class Image(BaseModel):
    """
    RGB image, 8 bits per channel

    Pixels are held as a read-only (height, width, 3) uint8 array in row-major order.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pixels: np.ndarray

    @field_validator("pixels")
    @classmethod
    def _rgb8(cls, pixels: np.ndarray) -> np.ndarray:
        if not isinstance(pixels, np.ndarray):
            raise ValueError("pixels must be a numpy array")
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"pixels must have shape (height, width, 3), got {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if pixels.dtype != np.uint8:
            raise ValueError("pixels must be uint8")
        view = pixels.view()
        view.flags.writeable = False
        return view

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def pixel(self, x: int, y: int) -> Tuple[int, int, int]:
        r, g, b = self.pixels[y, x]
        return int(r), int(g), int(b)

    def to_bytes(self) -> bytes:
        """Row-major RGB buffer of length width * height * 3"""
        return np.ascontiguousarray(self.pixels).tobytes()

    @classmethod
    def from_array(cls, array: np.ndarray) -> "Image":
        return cls(pixels=np.ascontiguousarray(array, dtype=np.uint8))

    @classmethod
    def filled(cls, width: int, height: int, color: Tuple[int, int, int]) -> "Image":
        pixels = np.empty((height, width, 3), dtype=np.uint8)
        pixels[:] = color
        return cls(pixels=pixels)


class PixelPoint(BaseModel):
    """Integer pixel position: x is the column, y the row"""

    model_config = ConfigDict(frozen=True)

    x: int
    y: int

    def inside(self, img: Image) -> bool:
        return 0 <= self.x < img.width and 0 <= self.y < img.height


class GazeRecord(BaseModel):
    """Per-frame gaze estimate"""

    model_config = ConfigDict(frozen=True)

    frame_index: int = Field(ge=0)
    timestamp_ms: int = Field(ge=0)
    x: int
    y: int
    valid: bool

    @property
    def point(self) -> PixelPoint:
        return PixelPoint(x=self.x, y=self.y)


class AnnotatedFrame(BaseModel):
    """One annotator's labels for one frame"""

    model_config = ConfigDict(frozen=True)

    frame_index: int = Field(ge=0)
    labels: FrozenSet[int]
    annotator_id: str

    @field_validator("labels")
    @classmethod
    def _non_empty(cls, labels: FrozenSet[int]) -> FrozenSet[int]:
        if not labels:
            raise ValueError("an annotated frame needs at least one label")
        if min(labels) < 0:
            raise ValueError("label indices must be non-negative")
        return labels

    @property
    def primary_label(self) -> int:
        return min(self.labels)


class ClassScores(BaseModel):
    """Per-class scores: a distribution (single) or independent probabilities (multi)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    probs: np.ndarray
    kind: ScoreKind = "single"

    @field_validator("probs", mode="before")
    @classmethod
    def _as_array(cls, probs) -> np.ndarray:
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty 1-D array")
        view = probs.view()
        view.flags.writeable = False
        return view

    @model_validator(mode="after")
    def _check(self) -> "ClassScores":
        probs = self.probs
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError("probs must be finite and non-negative")
        if self.kind == "single" and abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError("single-label probs must sum to 1")
        if self.kind == "multi" and np.any(probs > 1):
            raise ValueError("multi-label probs must lie in [0, 1]")
        return self

    @property
    def n_classes(self) -> int:
        return int(self.probs.size)

    def top1(self) -> int:
        # np.argmax returns the first maximum, i.e. the lowest index on ties
        return int(np.argmax(self.probs))


class LabeledTimeline(BaseModel):
    """Per-frame class labels of one session; None marks an unlabelled frame"""

    model_config = ConfigDict(frozen=True)

    session_id: str = "session"
    fps: float = Field(default=25.0, gt=0)
    labels: Tuple[Optional[int], ...]
    frames: Optional[Tuple[int, ...]] = None

    @model_validator(mode="after")
    def _check(self) -> "LabeledTimeline":
        if len(self.labels) < 1:
            raise ValueError("a timeline needs at least one frame")
        if any(label is not None and label < 0 for label in self.labels):
            raise ValueError("label indices must be non-negative")
        if self.frames is not None:
            if len(self.frames) != len(self.labels):
                raise ValueError("frames and labels differ in length")
            if any(b <= a for a, b in zip(self.frames, self.frames[1:])):
                raise ValueError("frame indices must be strictly increasing")
        return self

    @property
    def frame_indices(self) -> Tuple[int, ...]:
        if self.frames is not None:
            return self.frames
        return tuple(range(len(self.labels)))

    @property
    def labeled(self) -> List[int]:
        return [label for label in self.labels if label is not None]

    def check_labels(self, n_classes: int) -> "LabeledTimeline":
        """Raises TaxonomyError when a label index falls outside [0, n_classes)"""
        for frame, label in zip(self.frame_indices, self.labels):
            if label is not None and label >= n_classes:
                raise TaxonomyError(f"timeline {self.session_id!r} frame {frame}: "
                                    f"label {label} outside [0, {n_classes})")
        return self

    def stretches(self) -> List[List[Optional[int]]]:
        """Splits the labels wherever the frame indices skip"""
        frames = self.frame_indices
        runs: List[List[Optional[int]]] = [[self.labels[0]]]
        for i in range(1, len(self.labels)):
            if frames[i] != frames[i - 1] + 1:
                runs.append([])
            runs[-1].append(self.labels[i])
        return runs

    def __len__(self) -> int:
        return len(self.labels)
