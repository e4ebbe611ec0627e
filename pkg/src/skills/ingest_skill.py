"""
Ingest Skill - Parses session inputs and prepares training data
Gaze logs, annotations, timelines, frame files, dataset splits and flip augmentation
"""
import csv
import io
import math
import re
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Protocol, Sequence, TextIO, Tuple, Union

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import EmptyInput, EmptyLabels, FormatError, InvalidInput, IoError, OrderError, RangeError
from ..models import AnnotatedFrame, ClassTaxonomy, GazeRecord, Image, LabeledTimeline

GAZE_HEADER = ("frame", "timestamp_ms", "x", "y", "valid")
ANNOTATION_HEADER = ("frame", "labels", "annotator")
TIMELINE_HEADER = ("frame", "label")
MANIFEST_MAGIC = "# gaze-split v1"
FRAME_SUFFIXES = (".ppm", ".bmp")

TextSource = Union[str, TextIO]


class SplitManifest(BaseModel):
    """Train/validation frame ids per source video"""

    model_config = ConfigDict(frozen=True)

    seed: int
    ratio: float = Field(gt=0, lt=1)
    train_ids: Dict[str, Tuple[int, ...]]
    val_ids: Dict[str, Tuple[int, ...]]

    @model_validator(mode="after")
    def _disjoint(self) -> "SplitManifest":
        for video in set(self.train_ids) | set(self.val_ids):
            if set(self.train_ids.get(video, ())) & set(self.val_ids.get(video, ())):
                raise ValueError(f"train and val overlap for video {video!r}")
        return self

    def to_text(self) -> str:
        """Versioned text form; byte-identical for identical manifests"""
        lines = [MANIFEST_MAGIC, f"seed={self.seed}", f"ratio={self.ratio!r}"]
        for part, ids in (("train", self.train_ids), ("val", self.val_ids)):
            for video in sorted(ids):
                lines.append(f"{part},{video}," + " ".join(str(i) for i in ids[video]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SplitManifest":
        lines = text.splitlines()
        if not lines or lines[0].strip() != MANIFEST_MAGIC:
            raise FormatError("missing split manifest header", row=1)
        seed = ratio = None
        parts: Dict[str, Dict[str, Tuple[int, ...]]] = {"train": {}, "val": {}}
        for row, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                if line.startswith("seed="):
                    seed = int(line[5:])
                elif line.startswith("ratio="):
                    ratio = float(line[6:])
                else:
                    part, video, ids = line.split(",", 2)
                    parts[part][video] = tuple(int(i) for i in ids.split())
            except (ValueError, KeyError) as e:
                raise FormatError(f"bad manifest line: {line!r}", row=row) from e
        if seed is None or ratio is None:
            raise FormatError("manifest lacks seed or ratio")
        return cls(seed=seed, ratio=ratio, train_ids=parts["train"], val_ids=parts["val"])


class FrameSource(Protocol):
    """Anything that yields (frame_index, Image) pairs in frame order"""

    def __iter__(self) -> Iterator[Tuple[int, Image]]:
        ...


class DirectoryFrameSource:
    """
    Frames stored as numbered image files (`000042.ppm`, `42.bmp`, ...)

    Files are read lazily in ascending frame order.
    """

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise IoError(f"frame directory not found: {self.directory}")

        self.paths: Dict[int, Path] = {}
        for path in self.directory.iterdir():
            if path.suffix.lower() in FRAME_SUFFIXES and re.fullmatch(r"\d+", path.stem):
                index = int(path.stem)
                if index in self.paths:
                    raise FormatError(f"duplicate frame index {index} in {self.directory}")
                self.paths[index] = path

    def indices(self) -> List[int]:
        return sorted(self.paths)

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self) -> Iterator[Tuple[int, Image]]:
        for index in self.indices():
            yield index, read_image(self.paths[index])


class IngestSkill:
    """
    Agent Skill: Session Ingestion

    Parses gaze logs and annotations against a taxonomy and frame size, builds
    deterministic splits and produces flip augmentations.
    """

    def __init__(self, taxonomy: Optional[ClassTaxonomy] = None,
                 frame_size: Tuple[int, int] = (1920, 1080)):
        """
        Args:
            taxonomy: Class taxonomy used to resolve label names
            frame_size: (width, height) used to range-check gaze coordinates
        """
        self.taxonomy = taxonomy or ClassTaxonomy()
        self.width, self.height = frame_size

    def parse_gaze_log(self, text: TextSource) -> List[GazeRecord]:
        """
        Parse a `frame,timestamp_ms,x,y,valid` CSV

        Args:
            text: CSV text or an open text stream

        Returns:
            Gaze records in frame order

        Raises:
            FormatError: missing header or malformed row
            OrderError: frame indices not strictly increasing
            RangeError: valid row with coordinates outside the frame
        """
        reader = csv.reader(_as_stream(text))
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != GAZE_HEADER:
            raise FormatError(f"expected header {','.join(GAZE_HEADER)}", row=0)

        records: List[GazeRecord] = []
        previous = -1
        for row, fields in enumerate(reader, start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(GAZE_HEADER):
                raise FormatError(f"expected {len(GAZE_HEADER)} fields, got {len(fields)}", row=row)

            try:
                frame = int(fields[0])
                timestamp = int(fields[1])
                x = _parse_coordinate(fields[2])
                y = _parse_coordinate(fields[3])
                valid = _parse_bool(fields[4])
            except ValueError as e:
                raise FormatError(str(e), row=row) from None

            if frame < 0 or timestamp < 0:
                raise FormatError("frame and timestamp must be non-negative", row=row)
            if frame <= previous:
                raise OrderError(f"frame {frame} does not follow frame {previous}", row=row)
            if valid and not (0 <= x < self.width and 0 <= y < self.height):
                raise RangeError(
                    f"gaze ({x},{y}) outside {self.width}x{self.height} frame", row=row)

            previous = frame
            records.append(GazeRecord(frame_index=frame, timestamp_ms=timestamp,
                                      x=x, y=y, valid=valid))
        return records

    def serialize_gaze_log(self, records: Iterable[GazeRecord]) -> str:
        """Inverse of parse_gaze_log in normalized form"""
        lines = [",".join(GAZE_HEADER)]
        for r in records:
            lines.append(f"{r.frame_index},{r.timestamp_ms},{r.x},{r.y},{int(r.valid)}")
        return "\n".join(lines) + "\n"

    def parse_annotations(self, text: TextSource) -> List[AnnotatedFrame]:
        """
        Parse a `frame,labels,annotator` CSV with `;`-separated label names

        The header line is optional.

        Raises:
            TaxonomyError: unknown label name
            EmptyLabels: a row without labels
            FormatError: malformed row
        """
        annotations: List[AnnotatedFrame] = []
        for row, fields in enumerate(csv.reader(_as_stream(text)), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if row == 1 and tuple(f.strip() for f in fields) == ANNOTATION_HEADER:
                continue
            if len(fields) != 3:
                raise FormatError(f"expected 3 fields, got {len(fields)}", row=row)

            try:
                frame = int(fields[0])
            except ValueError:
                raise FormatError(f"bad frame index {fields[0]!r}", row=row) from None
            if frame < 0:
                raise FormatError("frame index must be non-negative", row=row)

            names = [n.strip() for n in fields[1].split(";") if n.strip()]
            if not names:
                raise EmptyLabels("no labels given", row=row)

            labels = frozenset(self.taxonomy.index(n) for n in names)
            annotations.append(AnnotatedFrame(frame_index=frame, labels=labels,
                                              annotator_id=fields[2].strip()))
        return annotations

    def serialize_annotations(self, annotations: Iterable[AnnotatedFrame]) -> str:
        lines = [",".join(ANNOTATION_HEADER)]
        for a in annotations:
            names = ";".join(self.taxonomy.name(i) for i in sorted(a.labels))
            lines.append(_csv_line([str(a.frame_index), names, a.annotator_id]))
        return "\n".join(lines) + "\n"

    def annotations_to_timeline(self, annotations: Sequence[AnnotatedFrame],
                                annotator: Optional[str] = None,
                                session_id: str = "session", fps: float = 25.0) -> LabeledTimeline:
        """
        Reduce one annotator's frames to a single-label timeline

        Multi-label frames keep their lowest-index label.
        """
        selected = [a for a in annotations if annotator is None or a.annotator_id == annotator]
        if not selected:
            raise EmptyInput(f"no annotations for annotator {annotator!r}")
        by_frame: Dict[int, int] = {}
        for a in selected:
            if a.frame_index in by_frame:
                raise FormatError(f"frame {a.frame_index} annotated twice")
            by_frame[a.frame_index] = a.primary_label
        frames = tuple(sorted(by_frame))
        return LabeledTimeline(session_id=session_id, fps=fps, frames=frames,
                               labels=tuple(by_frame[f] for f in frames))

    def parse_timeline(self, text: TextSource, session_id: str = "session",
                       fps: float = 25.0) -> LabeledTimeline:
        """Parse a `frame,label` CSV; an empty label marks an unlabelled frame"""
        reader = csv.reader(_as_stream(text))
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TIMELINE_HEADER:
            raise FormatError("expected header frame,label", row=0)

        frames: List[int] = []
        labels: List[Optional[int]] = []
        for row, fields in enumerate(reader, start=1):
            if not fields:
                continue
            if len(fields) != 2:
                raise FormatError(f"expected 2 fields, got {len(fields)}", row=row)
            try:
                frame = int(fields[0])
            except ValueError:
                raise FormatError(f"bad frame index {fields[0]!r}", row=row) from None
            if frames and frame <= frames[-1]:
                raise OrderError(f"frame {frame} does not follow frame {frames[-1]}", row=row)
            frames.append(frame)
            labels.append(self.taxonomy.index(fields[1]) if fields[1].strip() else None)

        if not frames:
            raise EmptyInput("timeline has no frames")
        return LabeledTimeline(session_id=session_id, fps=fps,
                               frames=tuple(frames), labels=tuple(labels))

    def serialize_timeline(self, timeline: LabeledTimeline) -> str:
        lines = [",".join(TIMELINE_HEADER)]
        for frame, label in zip(timeline.frame_indices, timeline.labels):
            name = "" if label is None else self.taxonomy.name(label)
            lines.append(_csv_line([str(frame), name]))
        return "\n".join(lines) + "\n"

    def split_dataset(self, frames: Sequence[Tuple[str, int]], ratio: float,
                      seed: int) -> SplitManifest:
        """
        Stratified, seeded train/val split

        Videos are processed in sorted order; each video's frame ids are shuffled with
        the shared generator and the first round(ratio * n) go to training.

        Args:
            frames: (video_id, frame_id) pairs
            ratio: Training fraction in (0, 1)
            seed: Shuffle seed

        Returns:
            SplitManifest with per-video sorted id lists
        """
        if not frames:
            raise EmptyInput("no frames to split")
        if not 0 < ratio < 1:
            raise InvalidInput(f"ratio must lie in (0, 1), got {ratio}")

        by_video: Dict[str, List[int]] = {}
        seen = set()
        for video, frame in frames:
            if (video, frame) in seen:
                raise InvalidInput(f"duplicate frame {video}/{frame}")
            seen.add((video, frame))
            by_video.setdefault(video, []).append(int(frame))

        rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
        train: Dict[str, Tuple[int, ...]] = {}
        val: Dict[str, Tuple[int, ...]] = {}
        for video in sorted(by_video):
            ids = np.array(sorted(by_video[video]), dtype=np.int64)
            shuffled = ids[rng.permutation(ids.size)]
            n_train = math.floor(ratio * ids.size + 0.5)
            train[video] = tuple(sorted(int(i) for i in shuffled[:n_train]))
            val[video] = tuple(sorted(int(i) for i in shuffled[n_train:]))

        return SplitManifest(seed=seed, ratio=ratio, train_ids=train, val_ids=val)

    def select_shots(self, timeline: LabeledTimeline, shots: int, seed: int,
                     allowed: Optional[Iterable[int]] = None) -> List[Tuple[int, int]]:
        """
        Seeded pick of up to `shots` labelled frames per class for a few-shot cache

        Args:
            timeline: Ground-truth labels
            shots: Frames per class
            seed: Selection seed
            allowed: Restrict the pick to these frame indices (e.g. a training split)

        Returns:
            (frame_index, label) pairs in frame order
        """
        if shots < 1:
            raise InvalidInput(f"shots must be positive, got {shots}")
        keep = None if allowed is None else set(allowed)
        by_class: Dict[int, List[int]] = {}
        for frame, label in zip(timeline.frame_indices, timeline.labels):
            if label is not None and (keep is None or frame in keep):
                by_class.setdefault(label, []).append(frame)
        if not by_class:
            raise EmptyInput("no labelled frames to pick shots from")

        rng = np.random.default_rng(seed)
        picked: List[Tuple[int, int]] = []
        for label in sorted(by_class):
            frames = np.array(by_class[label])
            chosen = frames[rng.permutation(frames.size)[:shots]]
            picked.extend((int(f), label) for f in chosen)
        return sorted(picked)

    def augment_flips(self, img: Image) -> List[Image]:
        """
        [original, horizontal, vertical, diagonal] flips

        The diagonal flip is the horizontal+vertical composition (180 degree rotation),
        so every output keeps the input dimensions.
        """
        px = img.pixels
        return [
            img,
            Image.from_array(px[:, ::-1]),
            Image.from_array(px[::-1, :]),
            Image.from_array(px[::-1, ::-1]),
        ]


def read_image(path: Union[str, Path]) -> Image:
    """
    Read a binary PPM (P6) or 24-bit BMP frame

    Raises:
        IoError: file missing or not a decodable image
    """
    try:
        with PILImage.open(path) as pil:
            return Image.from_array(np.asarray(pil.convert("RGB")))
    except (OSError, UnidentifiedImageError) as e:
        raise IoError(f"cannot read image {path}: {e}") from e


def write_image(img: Image, path: Union[str, Path]) -> None:
    """Write a frame as PPM (P6) or 24-bit BMP depending on the suffix"""
    suffix = Path(path).suffix.lower()
    formats = {".ppm": "PPM", ".bmp": "BMP"}
    if suffix not in formats:
        raise InvalidInput(f"unsupported image suffix {suffix!r}")
    try:
        PILImage.fromarray(np.ascontiguousarray(img.pixels), "RGB").save(path, formats[suffix])
    except OSError as e:
        raise IoError(f"cannot write image {path}: {e}") from e


def frame_filename(frame_index: int, suffix: str = ".ppm") -> str:
    return f"{frame_index:06d}{suffix}"


def _as_stream(text: TextSource) -> TextIO:
    return io.StringIO(text) if isinstance(text, str) else text


def _csv_line(fields: List[str]) -> str:
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator="").writerow(fields)
    return buffer.getvalue()


def _parse_coordinate(value: str) -> int:
    number = float(value)
    if not math.isfinite(number):
        raise ValueError(f"non-finite coordinate {value!r}")
    return int(math.floor(number + 0.5))


def _parse_bool(value: str) -> bool:
    normalized = value.strip().lower()
    if normalized in ("1", "true"):
        return True
    if normalized in ("0", "false"):
        return False
    raise ValueError(f"bad validity flag {value!r}")
