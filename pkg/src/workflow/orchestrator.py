"""
Gaze Pipeline Orchestrator using LangGraph
Runs every frame through locate -> crop -> segment -> classify and collects the timeline
"""
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, TypedDict, Union

import numpy as np
from langgraph.graph import END, StateGraph

from ..agents.base_agent import BaseAgent
from ..agents.gaze_classifier import INPUT_KEYS, GazeClassifier
from ..agents.gaze_locator import GazeLocator
from ..agents.segmenter import Segmenter
from ..config import Config, PipelineConfig
from ..errors import FormatError, GazeError, InvalidInput
from ..governance.run_log import RunLog
from ..log import get_logger
from ..models import ClassScores, ClassTaxonomy, GazeRecord, Image, LabeledTimeline, PixelPoint
from ..skills.classify_skill import (ClassEmbeddings, Embedding, EmbeddingExtractor, FewShotCache,
                                     HistogramThumbnailExtractor, LinearProbe, PrecomputedExtractor)
from ..skills.ingest_skill import IngestSkill
from ..skills.locate_skill import CropSpec
from ..skills.segment_skill import (ExternalMaskSegmenter, MaskProvider, RegionGrowConfig,
                                    RegionGrowSegmenter, SegmentSkill)
from .streaming import stream_frames

logger = get_logger("pipeline")

Stage = Callable[[List[Image]], Any]


class FrameState(TypedDict, total=False):
    """
    State carried through the per-frame graph
    """
    # Input
    frame_index: int
    image: Image
    record: Optional[GazeRecord]

    # Gaze locator outputs
    gaze: Optional[PixelPoint]
    clean: Image
    crop: Image
    frame_input: Image

    # Segmenter outputs
    mask_chip: Image
    mask_area: int

    # Classifier outputs
    scores: ClassScores
    label: Optional[int]

    # Workflow control
    status: str
    stage: Optional[str]
    error: Optional[str]


class Session:
    """Frames of one recording plus its (optional) gaze log"""

    def __init__(self, frames: Iterable[Tuple[int, Image]], gaze: Optional[Sequence[GazeRecord]] = None,
                 session_id: str = "session", fps: float = 25.0):
        self.frames = frames
        self.gaze = gaze
        self.session_id = session_id
        self.fps = fps

    def records(self) -> Dict[int, GazeRecord]:
        return {r.frame_index: r for r in self.gaze} if self.gaze is not None else {}


class PipelineResources:
    """Extractors, class embeddings, caches, probe and mask provider of a run"""

    def __init__(self, extractors: Mapping[str, EmbeddingExtractor], provider: MaskProvider,
                 class_embeddings: Optional[ClassEmbeddings] = None,
                 caches: Optional[Mapping[str, FewShotCache]] = None,
                 probe: Optional[LinearProbe] = None):
        self.extractors = dict(extractors)
        self.provider = provider
        self.class_embeddings = class_embeddings
        self.caches = dict(caches or {})
        self.probe = probe

    @classmethod
    def from_config(cls, cfg: PipelineConfig, taxonomy: ClassTaxonomy,
                    class_embeddings: Optional[ClassEmbeddings] = None,
                    caches: Optional[Mapping[str, FewShotCache]] = None,
                    probe: Optional[LinearProbe] = None) -> "PipelineResources":
        """
        Load everything the config references; explicit arguments take precedence

        Class embeddings fall back to seeded random directions when no file is given.
        Cache alpha and beta are taken from the config.
        """
        extractors: Dict[str, EmbeddingExtractor] = {
            "crop": (PrecomputedExtractor(cfg.crop_embeddings_path) if cfg.crop_embeddings_path
                     else HistogramThumbnailExtractor()),
        }
        if cfg.mask_embeddings_path:
            extractors["mask"] = PrecomputedExtractor(cfg.mask_embeddings_path)

        if class_embeddings is None:
            if cfg.class_embeddings_path:
                class_embeddings = ClassEmbeddings.load(cfg.class_embeddings_path, taxonomy, cfg.temperature)
            else:
                class_embeddings = ClassEmbeddings.random(
                    taxonomy.size, extractors["crop"].dim, cfg.seed, cfg.temperature)

        if caches is None:
            loaded = {}
            if cfg.cache_path:
                loaded["crop"] = FewShotCache.load(cfg.cache_path)
            if cfg.mask_cache_path:
                loaded["mask"] = FewShotCache.load(cfg.mask_cache_path)
            caches = loaded
        caches = {name: cache.model_copy(update={"alpha": cfg.alpha, "beta": cfg.beta})
                  for name, cache in caches.items()}

        if probe is None and cfg.probe_path:
            probe = LinearProbe.load(cfg.probe_path)

        return cls(extractors, _mask_provider(cfg), class_embeddings, caches, probe)


class PipelineResult:
    """Predicted timeline, the per-frame score log and the run's audit trail"""

    def __init__(self, timeline: LabeledTimeline, scores: Sequence[Optional[ClassScores]], run_log: RunLog):
        self.timeline = timeline
        self.scores = tuple(scores)
        self.run_log = run_log

    def scores_csv(self, taxonomy: ClassTaxonomy) -> str:
        """`frame,status,label,kind,p0..pK-1,error` rows, one per frame"""
        k = taxonomy.size
        lines = ["frame,status,label,kind," + ",".join(f"p{i}" for i in range(k)) + ",error"]
        for decision, scores in zip(self.run_log.decisions, self.scores):
            label = "" if decision.label is None else taxonomy.name(decision.label)
            if scores is None:
                probs = [""] * k
                kind = ""
            else:
                probs = [f"{p:.9f}" for p in scores.probs]
                kind = scores.kind
            error = (decision.error or "").replace(",", ";").replace("\n", " ")
            lines.append(",".join([str(decision.frame_index), decision.status, label, kind, *probs, error]))
        return "\n".join(lines) + "\n"


class GazePipeline:
    """
    Orchestrates the per-frame gaze classification workflow
    """

    def __init__(self, cfg: PipelineConfig, resources: PipelineResources,
                 taxonomy: Optional[ClassTaxonomy] = None):
        self.cfg = cfg
        self.taxonomy = taxonomy or cfg.taxonomy()
        self.resources = resources
        self.inputs = tuple(cfg.inputs.split("+"))

        # Initialize all agents
        self.locator = GazeLocator(CropSpec(size=cfg.crop_size, resize_to=cfg.resize_to),
                                   cfg.overlay_radius, cfg.overlay_threshold, self.inputs)
        self.segmenter = Segmenter(
            resources.provider,
            SegmentSkill(RegionGrowConfig(tau=cfg.region_tau, max_pixels=cfg.region_max_pixels), cfg.resize_to))
        self.classifier = GazeClassifier(
            cfg.classifier, self.inputs, resources.extractors, resources.class_embeddings,
            resources.caches, resources.probe, cfg.fusion)

        # Build the workflow graph
        self.workflow = self._build_workflow()
        for agent in self.stages:
            logger.debug("stage %s", agent.describe())

    @property
    def stages(self) -> List[BaseAgent]:
        agents: List[BaseAgent] = [self.locator]
        if "mask" in self.inputs:
            agents.append(self.segmenter)
        agents.append(self.classifier)
        return agents

    def _build_workflow(self):
        """
        Build the LangGraph workflow

        Returns:
            Compiled StateGraph
        """
        workflow = StateGraph(FrameState)
        uses_mask = "mask" in self.inputs

        # Add nodes for each stage
        workflow.add_node("locate", self._guard("locate", self.locator.execute))
        workflow.add_node("crop", self._guard("crop", self.locator.crop))
        if uses_mask:
            workflow.add_node("segment", self._guard("segment", self.segmenter.execute))
        workflow.add_node("classify", self._guard("classify", self.classifier.execute))

        # Frames without gaze or with a failed stage leave the graph early
        workflow.set_entry_point("locate")
        workflow.add_conditional_edges("locate", _route, {"continue": "crop", "stop": END})
        workflow.add_conditional_edges(
            "crop", _route, {"continue": "segment" if uses_mask else "classify", "stop": END})
        if uses_mask:
            workflow.add_conditional_edges("segment", _route, {"continue": "classify", "stop": END})
        workflow.add_edge("classify", END)

        return workflow.compile()

    def _guard(self, stage: str, fn: Callable[[FrameState], Dict[str, Any]]):
        def node(state: FrameState) -> Dict[str, Any]:
            try:
                return fn(state)
            except Exception as e:
                return {"status": "failed", "stage": stage, "error": f"{type(e).__name__}: {e}"}
        return node

    def process_frame(self, frame_index: int, image: Image,
                      record: Optional[GazeRecord] = None) -> FrameState:
        """
        Run one frame through the graph

        Returns:
            Final frame state; status is ok, invalid or failed
        """
        return self.workflow.invoke({
            "frame_index": frame_index,
            "image": image,
            "record": record,
            "status": "pending",
        })

    def prepare_inputs(self, frame_index: int, image: Image,
                       record: Optional[GazeRecord] = None) -> Dict[str, Image]:
        """
        Classifier input images of one frame, without classifying

        Raises:
            GazeError: a stage failed; InvalidInput when the frame has no gaze
        """
        state: Dict[str, Any] = {"frame_index": frame_index, "image": image, "record": record}
        state.update(self.locator.execute(state))
        if state["gaze"] is None:
            raise InvalidInput(f"frame {frame_index} has no valid gaze")
        state.update(self.locator.crop(state))
        if "mask" in self.inputs:
            state.update(self.segmenter.execute(state))
        return {name: state[INPUT_KEYS[name]] for name in self.inputs}

    def embed_inputs(self, frame_index: int, image: Image, record: Optional[GazeRecord] = None,
                     augment: bool = False) -> Dict[str, List[Embedding]]:
        """Embeddings of every input image; with augment, of its four flips"""
        ingest = IngestSkill(self.taxonomy)
        out: Dict[str, List[Embedding]] = {}
        for name, img in self.prepare_inputs(frame_index, image, record).items():
            skill = self.classifier.skills_by_input[name]
            variants = ingest.augment_flips(img) if augment else [img]
            out[name] = [skill.embed(v, str(frame_index)) for v in variants]
        return out

    def run(self, session: Session) -> "PipelineResult":
        """
        Execute the workflow over every frame of a session

        Args:
            session: Frames and gaze log

        Returns:
            PipelineResult with the timeline, per-frame scores and run log

        Raises:
            PipelineError: no frame had a valid gaze, or the failure ceiling was exceeded
        """
        records = session.records()
        run_log = RunLog(metadata={
            "session": session.session_id,
            "classifier": self.cfg.classifier,
            "inputs": self.cfg.inputs,
            "segmenter": self.cfg.segmenter,
            "fusion": self.cfg.fusion,
        })
        logger.info("run start: session %s, %s classifier on %s", session.session_id,
                    self.cfg.classifier, self.cfg.inputs)

        def work(item: Tuple[int, Image]) -> FrameState:
            index, image = item
            return self.process_frame(index, image, records.get(index))

        frames: List[int] = []
        labels: List[Optional[int]] = []
        scores: List[Optional[ClassScores]] = []
        for state in stream_frames(session.frames, work, workers=self.cfg.workers,
                                   queue_size=Config.QUEUE_SIZE,
                                   paced_fps=self.cfg.fps if self.cfg.paced else None):
            index = state["frame_index"]
            status = state.get("status", "failed")
            frames.append(index)
            if status == "ok":
                frame_scores = state["scores"]
                labels.append(state["label"])
                scores.append(frame_scores)
                run_log.log_decision(index, "ok", state["label"], float(frame_scores.probs[state["label"]]))
            else:
                labels.append(None)
                scores.append(None)
                run_log.log_decision(index, status, stage=state.get("stage"), error=state.get("error"))

        run_log.check_ceiling()
        summary = run_log.summary()
        logger.info("run finish: %d frames, %d classified, %d invalid, %d failed", summary["frames"],
                    summary["classified"], summary["invalid_gaze"], summary["failed"])

        timeline = LabeledTimeline(session_id=session.session_id, fps=session.fps,
                                   labels=tuple(labels), frames=tuple(frames))
        return PipelineResult(timeline, scores, run_log)

    def bench_stages(self) -> List[Tuple[str, Stage]]:
        """
        Built-in throughput pipelines over frames carrying the overlay

        zero-shot: locate, crop, embed the crop, zero-shot scores
        adapter: the same with the few-shot cache (only when a crop cache is loaded)
        full: the configured graph, segmentation and fusion included
        """
        locate = self.locator.locate_skill
        crop_skill = self.classifier.skills_by_input.get("crop") or next(iter(self.classifier.skills_by_input.values()))
        ce = self.resources.class_embeddings
        cache = self.resources.caches.get("crop")

        def crop_embedding(img: Image) -> Embedding:
            gaze = locate.find_gaze_dot(img)
            return crop_skill.embed(locate.gaze_crop(locate.erase_overlay(img, gaze), gaze))

        def zero_shot(batch: List[Image]) -> None:
            for img in batch:
                crop_skill.zero_shot_scores(crop_embedding(img), ce)

        def adapter(batch: List[Image]) -> None:
            for img in batch:
                crop_skill.adapter_scores(crop_embedding(img), cache, ce)

        def full(batch: List[Image]) -> None:
            for i, img in enumerate(batch):
                state = self.process_frame(i, img)
                if state.get("status") == "failed":
                    raise _StageFailure(state.get("error") or "frame failed")

        stages: List[Tuple[str, Stage]] = []
        if ce is not None:
            stages.append(("zero-shot", zero_shot))
            if cache is not None:
                stages.append(("adapter", adapter))
        stages.append(("full", full))
        return stages


class _StageFailure(GazeError):
    """A benchmarked frame failed inside the graph"""


def run_pipeline(cfg: PipelineConfig, session: Session,
                 resources: Optional[PipelineResources] = None,
                 taxonomy: Optional[ClassTaxonomy] = None) -> PipelineResult:
    """
    Classify every frame of a session

    Args:
        cfg: Validated pipeline configuration
        session: Frames and optional gaze log
        resources: Preloaded models; loaded from cfg when omitted
        taxonomy: Class taxonomy; read from cfg when omitted

    Returns:
        PipelineResult
    """
    taxonomy = taxonomy or cfg.taxonomy()
    if resources is None:
        cfg.validate_paths()
        resources = PipelineResources.from_config(cfg, taxonomy)
    return GazePipeline(cfg, resources, taxonomy).run(session)


def build_caches(pipeline: GazePipeline, session: Session, truth: LabeledTimeline, shots: int,
                 seed: int, allowed: Optional[Iterable[int]] = None) -> Dict[str, FewShotCache]:
    """
    Few-shot caches (one per classifier input) from `shots` labelled frames per class

    Frames whose inputs cannot be prepared are skipped with a warning.
    """
    picked = dict(IngestSkill(pipeline.taxonomy).select_shots(truth, shots, seed, allowed))
    records = session.records()
    keys: Dict[str, List[Embedding]] = {name: [] for name in pipeline.inputs}
    labels: List[int] = []
    for index, image in session.frames:
        if index not in picked:
            continue
        try:
            embedded = pipeline.embed_inputs(index, image, records.get(index))
        except GazeError as e:
            logger.warning("shot skipped: %s", e, extra={"frame": index})
            continue
        for name, vectors in embedded.items():
            keys[name].extend(vectors)
        labels.append(picked[index])

    cfg = pipeline.cfg
    caches = {name: FewShotCache.build(vectors, labels, pipeline.taxonomy.size, cfg.alpha, cfg.beta)
              for name, vectors in keys.items()}
    logger.info("few-shot caches built from %d frames", len(labels))
    return caches


def collect_features(pipeline: GazePipeline, session: Session,
                     truth: Union[LabeledTimeline, Mapping[int, FrozenSet[int]]],
                     allowed: Optional[Iterable[int]] = None, augment: bool = False,
                     input_name: str = "crop") -> Tuple[List[Embedding], List[Any]]:
    """
    Embeddings and targets of labelled frames, for probe training

    A timeline yields one class index per sample; a frame -> label-set mapping (from
    multi-label annotations) yields the frame's label set.
    """
    if isinstance(truth, LabeledTimeline):
        wanted: Dict[int, Any] = {f: label for f, label in zip(truth.frame_indices, truth.labels)
                                  if label is not None}
    else:
        wanted = dict(truth)
    if allowed is not None:
        keep = set(allowed)
        wanted = {f: target for f, target in wanted.items() if f in keep}

    records = session.records()
    features: List[Embedding] = []
    labels: List[Any] = []
    for index, image in session.frames:
        if index not in wanted:
            continue
        try:
            embedded = pipeline.embed_inputs(index, image, records.get(index), augment)
        except GazeError as e:
            logger.warning("training frame skipped: %s", e, extra={"frame": index})
            continue
        vectors = embedded.get(input_name) or next(iter(embedded.values()))
        features.extend(vectors)
        labels.extend([wanted[index]] * len(vectors))
    return features, labels


def label_set_matrix(labels: Sequence[Any], n_classes: int) -> np.ndarray:
    """N x K 0/1 targets from class indices or label sets"""
    Y = np.zeros((len(labels), n_classes))
    for i, label in enumerate(labels):
        Y[i, sorted(label) if isinstance(label, (set, frozenset)) else [label]] = 1.0
    return Y


def parse_scores_csv(text: str) -> Dict[int, ClassScores]:
    """Scores of the classified frames in a `scores.csv` written by PipelineResult"""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("frame,status,label,kind,"):
        raise FormatError("expected a scores log header", row=0)
    n_classes = len(lines[0].split(",")) - 5
    scores: Dict[int, ClassScores] = {}
    for row, line in enumerate(lines[1:], start=1):
        fields = line.split(",")
        if len(fields) != n_classes + 5:
            raise FormatError(f"expected {n_classes + 5} fields, got {len(fields)}", row=row)
        if fields[1] != "ok":
            continue
        try:
            probs = np.array([float(p) for p in fields[4:4 + n_classes]])
            frame = int(fields[0])
        except ValueError:
            raise FormatError("bad number in scores log", row=row) from None
        # Stored with 9 decimals; renormalize single-label rows before validation
        if fields[3] == "single":
            probs = probs / probs.sum()
        scores[frame] = ClassScores(probs=probs, kind=fields[3])
    return scores


def _route(state: FrameState) -> str:
    return "stop" if state.get("status") in ("invalid", "failed") else "continue"


def _mask_provider(cfg: PipelineConfig) -> MaskProvider:
    if cfg.segmenter == "external":
        return ExternalMaskSegmenter(cfg.mask_root, cfg.video_id)
    skill = SegmentSkill(RegionGrowConfig(tau=cfg.region_tau, max_pixels=cfg.region_max_pixels), cfg.resize_to)
    return RegionGrowSegmenter(skill)
