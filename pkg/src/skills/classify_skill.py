"""
Classify Skill - Embeddings and per-class scores
Zero-shot similarity, a few-shot cache adapter and a trained linear probe
"""
import struct
from pathlib import Path
from typing import Dict, List, Literal, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.special import expit, log_softmax, logit, softmax

from ..errors import (DivergenceError, EmbeddingLookupError, EmptyCache, FormatError, InvalidInput,
                      IoError, KindError, RangeError, ShapeError, TaxonomyError)
from ..models import ClassScores, ClassTaxonomy, Image

HeadMode = Literal["single", "multi"]

BUILTIN_DIM = 88
CACHE_MAGIC = b"GZCACHE1"
PROBE_MAGIC = b"GZPROBE1"
_NORM_TOLERANCE = 1e-6


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise InvalidInput("cannot normalize a zero vector")
    return matrix / norms


def _readonly(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


class Embedding(BaseModel):
    """Unit-norm feature vector"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _unit(cls, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("embedding must be a non-empty vector")
        if abs(float(np.linalg.norm(values)) - 1.0) > _NORM_TOLERANCE:
            raise ValueError("embedding must have unit L2 norm")
        return _readonly(values)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    @classmethod
    def normalized(cls, values: np.ndarray) -> "Embedding":
        return cls(values=_unit_rows(np.asarray(values, dtype=np.float64)))


class ClassEmbeddings(BaseModel):
    """One unit vector per taxonomy class plus the softmax temperature"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: np.ndarray
    temperature: float = Field(default=0.01, gt=0)

    @field_validator("matrix", mode="before")
    @classmethod
    def _check_rows(cls, matrix) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] == 0:
            raise ValueError("class embeddings must be a non-empty K x d matrix")
        if np.any(np.abs(np.linalg.norm(matrix, axis=1) - 1.0) > _NORM_TOLERANCE):
            raise ValueError("class embedding rows must be unit-norm")
        return _readonly(matrix)

    @property
    def n_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def random(cls, n_classes: int, dim: int, seed: int, temperature: float = 0.01) -> "ClassEmbeddings":
        """Deterministic Gaussian directions for synthetic runs"""
        rng = np.random.default_rng(seed)
        return cls(matrix=_unit_rows(rng.standard_normal((n_classes, dim))), temperature=temperature)

    @classmethod
    def from_prototypes(cls, embeddings: Sequence["Embedding"], temperature: float = 0.01) -> "ClassEmbeddings":
        """Class vectors taken from one representative embedding per class"""
        return cls(matrix=np.stack([e.values for e in embeddings]), temperature=temperature)

    @classmethod
    def load(cls, path: Union[str, Path], taxonomy: ClassTaxonomy,
             temperature: float = 0.01) -> "ClassEmbeddings":
        """
        Read `name,v1,...,vd` rows and order them by the taxonomy

        Rows are re-normalized after parsing.
        """
        rows: Dict[str, np.ndarray] = {}
        for row, line in enumerate(_read_lines(path), start=1):
            if not line.strip():
                continue
            name, *values = line.split(",")
            try:
                rows[name.strip()] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise FormatError(f"bad class embedding row for {name!r}", row=row) from None

        missing = [name for name in taxonomy.labels if name not in rows]
        if missing:
            raise TaxonomyError(f"class embeddings missing for: {', '.join(missing)}")
        extra = sorted(set(rows) - set(taxonomy.labels))
        if extra:
            raise TaxonomyError(f"class embeddings for unknown classes: {', '.join(extra)}")
        dims = {rows[name].size for name in taxonomy.labels}
        if len(dims) != 1:
            raise ShapeError("class embedding rows differ in dimension")
        matrix = np.stack([rows[name] for name in taxonomy.labels])
        return cls(matrix=_unit_rows(matrix), temperature=temperature)

    def save(self, path: Union[str, Path], taxonomy: ClassTaxonomy) -> None:
        lines = [",".join([name] + [repr(float(v)) for v in row])
                 for name, row in zip(taxonomy.labels, self.matrix)]
        _write_text(path, "\n".join(lines) + "\n")


class FewShotCache(BaseModel):
    """Labelled key embeddings with residual weight alpha and sharpness beta"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    keys: np.ndarray
    values: np.ndarray
    alpha: float = Field(default=1.0, ge=0)
    beta: float = Field(default=5.5, gt=0)

    @field_validator("keys", "values", mode="before")
    @classmethod
    def _matrix(cls, matrix) -> np.ndarray:
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError("cache keys and values must be matrices")
        return _readonly(matrix)

    @model_validator(mode="after")
    def _check(self) -> "FewShotCache":
        keys, values = self.keys, self.values
        if keys.shape[0] != values.shape[0]:
            raise ValueError("cache keys and values differ in row count")
        if keys.shape[0] and np.any(np.abs(np.linalg.norm(keys, axis=1) - 1.0) > _NORM_TOLERANCE):
            raise ValueError("cache keys must be unit-norm")
        if values.shape[0] and not np.allclose(values.sum(axis=1), 1.0):
            raise ValueError("cache value rows must be one-hot")
        return self

    @property
    def size(self) -> int:
        return self.keys.shape[0]

    @property
    def n_classes(self) -> int:
        return self.values.shape[1]

    @classmethod
    def build(cls, embeddings: Sequence["Embedding"], labels: Sequence[int], n_classes: int,
              alpha: float = 1.0, beta: float = 5.5) -> "FewShotCache":
        keys = np.stack([e.values for e in embeddings]) if embeddings else np.zeros((0, 0))
        values = np.zeros((len(labels), n_classes), dtype=np.float64)
        if len(labels):
            values[np.arange(len(labels)), np.asarray(labels)] = 1.0
        return cls(keys=np.array(keys, dtype=np.float64), values=values, alpha=alpha, beta=beta)

    def save(self, path: Union[str, Path]) -> None:
        """Binary: magic, d, K, N, alpha, beta, keys (N x d), values (N x K) as <f4"""
        header = CACHE_MAGIC + struct.pack("<IIIdd", self.keys.shape[1], self.n_classes,
                                           self.size, self.alpha, self.beta)
        body = self.keys.astype("<f4").tobytes() + self.values.astype("<f4").tobytes()
        _write_bytes(path, header + body)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FewShotCache":
        data = _read_bytes(path)
        head = len(CACHE_MAGIC) + struct.calcsize("<IIIdd")
        if data[:len(CACHE_MAGIC)] != CACHE_MAGIC or len(data) < head:
            raise FormatError(f"{path} is not a few-shot cache file")
        dim, k, n, alpha, beta = struct.unpack("<IIIdd", data[len(CACHE_MAGIC):head])
        keys, values = _split_matrices(data[head:], [(n, dim), (n, k)], path)
        if n:
            keys = _unit_rows(keys)
        return cls(keys=keys, values=values, alpha=alpha, beta=beta)


class LinearProbe(BaseModel):
    """Affine head over embeddings: softmax (single) or per-class sigmoid (multi)"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    W: np.ndarray
    b: np.ndarray
    head_mode: HeadMode = "single"

    @field_validator("W", "b", mode="before")
    @classmethod
    def _finite(cls, array) -> np.ndarray:
        array = np.array(array, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise ValueError("probe parameters must be finite")
        return _readonly(array)

    @model_validator(mode="after")
    def _check(self) -> "LinearProbe":
        if self.W.ndim != 2 or self.b.ndim != 1 or self.W.shape[0] != self.b.shape[0]:
            raise ValueError("probe needs W of shape K x d and b of length K")
        return self

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    def save(self, path: Union[str, Path]) -> None:
        """Binary: magic, d, K, head flag, W (K x d), b (K) as <f4"""
        flag = 0 if self.head_mode == "single" else 1
        header = PROBE_MAGIC + struct.pack("<III", self.dim, self.n_classes, flag)
        _write_bytes(path, header + self.W.astype("<f4").tobytes() + self.b.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LinearProbe":
        data = _read_bytes(path)
        head = len(PROBE_MAGIC) + struct.calcsize("<III")
        if data[:len(PROBE_MAGIC)] != PROBE_MAGIC or len(data) < head:
            raise FormatError(f"{path} is not a linear probe file")
        dim, k, flag = struct.unpack("<III", data[len(PROBE_MAGIC):head])
        W, b = _split_matrices(data[head:], [(k, dim), (k,)], path)
        return cls(W=W, b=b, head_mode="single" if flag == 0 else "multi")


class TrainConfig(BaseModel):
    """SGD settings for the linear probe"""

    model_config = ConfigDict(frozen=True)

    lr: float = Field(default=0.1, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    weight_decay: float = Field(default=0.0001, ge=0)
    milestones: Tuple[int, ...] = (60, 80)
    gamma: float = Field(default=0.1, gt=0)
    epochs: int = Field(default=100, ge=0)
    batch_size: int = Field(default=32, ge=1)
    seed: int = 0
    schedule: Literal["multistep", "cosine"] = "multistep"
    warmup_epochs: int = Field(default=0, ge=0)

    def lr_at(self, epoch: int) -> float:
        """Learning rate used during a (0-based) epoch"""
        if self.schedule == "multistep":
            passed = sum(1 for m in self.milestones if epoch >= m)
            return self.lr * self.gamma ** passed

        if epoch < self.warmup_epochs:
            return self.lr * (epoch + 1) / self.warmup_epochs
        span = max(1, self.epochs - self.warmup_epochs)
        progress = (epoch - self.warmup_epochs) / span
        return 0.5 * self.lr * (1.0 + np.cos(np.pi * progress))


class TrainResult(BaseModel):
    """Trained probe and the mean training loss of every epoch"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    probe: LinearProbe
    losses: Tuple[float, ...]


class EmbeddingExtractor(Protocol):
    """Maps an image (and optionally its frame id) to an Embedding"""

    dim: int

    def embed(self, img: Image, frame_id: Optional[str] = None) -> Embedding:
        ...


class HistogramThumbnailExtractor:
    """
    Built-in extractor: 3 x 8-bin colour histogram + 8 x 8 grayscale thumbnail

    Histograms are per-channel pixel fractions, the thumbnail is an area average of
    luma in [0, 1]; the 88 values are L2-normalized together.
    """

    dim = BUILTIN_DIM
    bins = 8
    thumb = 8

    def embed(self, img: Image, frame_id: Optional[str] = None) -> Embedding:
        px = img.pixels
        n = px.shape[0] * px.shape[1]
        hist = [np.bincount((px[..., c] >> 5).ravel(), minlength=self.bins) / n for c in range(3)]

        luma = (px[..., 0] * 0.299 + px[..., 1] * 0.587 + px[..., 2] * 0.114) / 255.0
        thumb = _area_mean(luma, self.thumb, self.thumb).ravel()

        values = np.concatenate(hist + [thumb])
        return Embedding(values=values / np.linalg.norm(values))


class PrecomputedExtractor:
    """Embeddings loaded from a `frame_id,v1,...,vd` file"""

    def __init__(self, path: Union[str, Path]):
        self.vectors: Dict[str, np.ndarray] = {}
        for row, line in enumerate(_read_lines(path), start=1):
            if not line.strip():
                continue
            key, *values = line.split(",")
            try:
                self.vectors[key.strip()] = _unit_rows(np.array([float(v) for v in values]))
            except (ValueError, InvalidInput):
                raise FormatError(f"bad embedding row for frame {key!r}", row=row) from None
        dims = {v.size for v in self.vectors.values()}
        if len(dims) > 1:
            raise ShapeError(f"{path}: embeddings differ in dimension")
        self.dim = dims.pop() if dims else 0

    def embed(self, img: Image, frame_id: Optional[str] = None) -> Embedding:
        if frame_id is None or frame_id not in self.vectors:
            raise EmbeddingLookupError(f"no precomputed embedding for frame {frame_id!r}")
        return Embedding(values=self.vectors[frame_id])


class ClassifySkill:
    """
    Agent Skill: Semantic Gaze Classification

    Scores embeddings against class embeddings, a few-shot cache or a linear probe and
    fuses the scores of several inputs.
    """

    def __init__(self, extractor: Optional[EmbeddingExtractor] = None, fusion: Literal["prob", "logit"] = "prob"):
        self.extractor = extractor or HistogramThumbnailExtractor()
        self.fusion = fusion

    def embed(self, img: Image, frame_id: Optional[str] = None) -> Embedding:
        return self.extractor.embed(img, frame_id)

    def zero_shot_scores(self, e: Embedding, ce: ClassEmbeddings) -> ClassScores:
        """softmax(cos(e, class_k) / T)"""
        return ClassScores(probs=softmax(self._zero_shot_logits(e, ce)), kind="single")

    def _zero_shot_logits(self, e: Embedding, ce: ClassEmbeddings) -> np.ndarray:
        if e.dim != ce.dim:
            raise ShapeError(f"embedding dim {e.dim} != class embedding dim {ce.dim}")
        return (ce.matrix @ e.values) / ce.temperature

    def affinities(self, e: Embedding, cache: FewShotCache) -> np.ndarray:
        """exp(-beta * (1 - cos(e, key_i))) for every cache key"""
        if cache.size == 0:
            raise EmptyCache("few-shot cache is empty")
        if cache.keys.shape[1] != e.dim:
            raise ShapeError(f"embedding dim {e.dim} != cache key dim {cache.keys.shape[1]}")
        return np.exp(-cache.beta * (1.0 - cache.keys @ e.values))

    def adapter_scores(self, e: Embedding, cache: FewShotCache, ce: ClassEmbeddings) -> ClassScores:
        """softmax(alpha * A @ values + cos(e, class) / T)"""
        affinity = self.affinities(e, cache)
        if cache.n_classes != ce.n_classes:
            raise ShapeError("cache and class embeddings disagree on the class count")
        logits = self._zero_shot_logits(e, ce)
        if cache.alpha != 0:
            logits = cache.alpha * (affinity @ cache.values) + logits
        return ClassScores(probs=softmax(logits), kind="single")

    def probe_scores(self, e: Embedding, probe: LinearProbe) -> ClassScores:
        """softmax(We + b) for single-label heads, sigmoid(We + b) for multi-label heads"""
        if e.dim != probe.dim:
            raise ShapeError(f"embedding dim {e.dim} != probe dim {probe.dim}")
        z = probe.W @ e.values + probe.b
        if probe.head_mode == "single":
            return ClassScores(probs=softmax(z), kind="single")
        return ClassScores(probs=expit(z), kind="multi")

    def fuse_scores(self, *scores: ClassScores, mode: Optional[str] = None) -> ClassScores:
        """
        Combine the scores of several inputs

        `prob` mode takes the arithmetic mean of the probabilities; `logit` mode averages
        log-probabilities (single) or logits (multi) and re-applies the activation.

        Raises:
            KindError: mixed kinds
            ShapeError: different class counts
        """
        if not scores:
            raise InvalidInput("nothing to fuse")
        kind = scores[0].kind
        if any(s.kind != kind for s in scores):
            raise KindError("cannot fuse single-label and multi-label scores")
        if len({s.n_classes for s in scores}) != 1:
            raise ShapeError("cannot fuse scores over different class counts")

        mode = mode or self.fusion
        if mode == "prob":
            total = scores[0].probs
            for s in scores[1:]:
                total = total + s.probs
            probs = total / len(scores)
            if kind == "single":
                probs = probs / probs.sum()
            return ClassScores(probs=probs, kind=kind)

        if kind == "single":
            mean_log = sum(np.log(np.maximum(s.probs, 1e-300)) for s in scores) / len(scores)
            return ClassScores(probs=softmax(mean_log), kind=kind)
        clipped = [np.clip(s.probs, 1e-12, 1 - 1e-12) for s in scores]
        return ClassScores(probs=expit(sum(logit(p) for p in clipped) / len(scores)), kind=kind)

    def predict_topk(self, s: ClassScores, k: int) -> List[int]:
        """k class indices by descending score, ties by ascending index"""
        if not 1 <= k <= s.n_classes:
            raise RangeError(f"k must lie in [1, {s.n_classes}], got {k}")
        order = sorted(range(s.n_classes), key=lambda i: (-s.probs[i], i))
        return order[:k]

    def train_probe(self, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
                    n_classes: int, head_mode: HeadMode = "single") -> TrainResult:
        """
        Minibatch SGD with momentum on cross-entropy (single) or binary cross-entropy (multi)

        Weight decay is added to the weight gradient as wd * W. Each epoch reshuffles the
        samples with a seeded generator, and the learning rate follows cfg's schedule.

        Args:
            features: N x d matrix
            labels: N class indices (single) or N x K binary matrix (multi)
            cfg: Optimizer settings
            n_classes: K
            head_mode: single or multi

        Returns:
            TrainResult with the probe and per-epoch mean loss

        Raises:
            DivergenceError: loss became NaN or infinite
        """
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise InvalidInput("features must be an N x d matrix with N >= 1")
        Y = targets_matrix(labels, n_classes, head_mode)
        if Y.shape[0] != X.shape[0]:
            raise ShapeError("features and labels differ in sample count")

        n, d = X.shape
        rng = np.random.default_rng(cfg.seed)
        bound = 1.0 / np.sqrt(d)
        W = rng.uniform(-bound, bound, size=(n_classes, d))
        b = rng.uniform(-bound, bound, size=n_classes)
        vW = np.zeros_like(W)
        vb = np.zeros_like(b)

        losses: List[float] = []
        for epoch in range(cfg.epochs):
            lr = cfg.lr_at(epoch)
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, gW, gb = loss_and_gradients(W, b, X[idx], Y[idx], head_mode)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch)
                gW = gW + cfg.weight_decay * W
                vW = cfg.momentum * vW + gW
                vb = cfg.momentum * vb + gb
                W = W - lr * vW
                b = b - lr * vb
                total += loss * idx.size
            epoch_loss = total / n
            if not np.isfinite(epoch_loss) or not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise DivergenceError(epoch)
            losses.append(float(epoch_loss))

        probe = LinearProbe(W=W, b=b, head_mode=head_mode)
        return TrainResult(probe=probe, losses=tuple(losses))


def targets_matrix(labels: np.ndarray, n_classes: int, head_mode: HeadMode) -> np.ndarray:
    """One-hot (single) or validated binary (multi) N x K target matrix"""
    labels = np.asarray(labels)
    if head_mode == "single":
        if labels.ndim != 1:
            raise ShapeError("single-label targets must be a vector of class indices")
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise RangeError("class index out of range")
        Y = np.zeros((labels.size, n_classes))
        Y[np.arange(labels.size), labels.astype(np.intp)] = 1.0
        return Y
    if labels.ndim != 2 or labels.shape[1] != n_classes:
        raise ShapeError("multi-label targets must be an N x K matrix")
    if not np.all((labels == 0) | (labels == 1)):
        raise InvalidInput("multi-label targets must be 0/1")
    return labels.astype(np.float64)


def loss_and_gradients(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray,
                       head_mode: HeadMode) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Mean data loss and its gradients for a linear head

    Cross-entropy is averaged over samples; binary cross-entropy over all N x K entries.
    """
    Z = X @ W.T + b
    m = X.shape[0]
    if head_mode == "single":
        log_p = log_softmax(Z, axis=1)
        loss = -float(np.sum(Y * log_p)) / m
        G = (np.exp(log_p) - Y) / m
    else:
        loss = float(np.sum(np.logaddexp(0.0, Z) - Y * Z)) / Y.size
        G = (expit(Z) - Y) / Y.size
    return loss, G.T @ X, G.sum(axis=0)


def _area_mean(values: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Average over a rows x cols grid of near-equal blocks"""
    h, w = values.shape
    # Images smaller than the grid are upsampled by nearest neighbour first
    if h < rows:
        values = values[(np.arange(rows) * h) // rows]
    if w < cols:
        values = values[:, (np.arange(cols) * w) // cols]
    h, w = values.shape
    r_edges = (np.arange(rows) * h) // rows
    c_edges = (np.arange(cols) * w) // cols
    sums = np.add.reduceat(np.add.reduceat(values, r_edges, axis=0), c_edges, axis=1)
    counts = np.outer(np.diff(np.append(r_edges, h)), np.diff(np.append(c_edges, w)))
    return sums / counts


def _split_matrices(body: bytes, shapes, path) -> List[np.ndarray]:
    sizes = [int(np.prod(shape)) for shape in shapes]
    if len(body) != 4 * sum(sizes):
        raise FormatError(f"{path}: payload length does not match header")
    flat = np.frombuffer(body, dtype="<f4").astype(np.float64)
    out, offset = [], 0
    for shape, size in zip(shapes, sizes):
        out.append(flat[offset:offset + size].reshape(shape).copy())
        offset += size
    return out


def _read_lines(path: Union[str, Path]) -> List[str]:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read().splitlines()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def _read_bytes(path: Union[str, Path]) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def _write_bytes(path: Union[str, Path], data: bytes) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(data)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _write_text(path: Union[str, Path], text: str) -> None:
    _write_bytes(path, text.encode("utf-8"))
