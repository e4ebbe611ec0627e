"""
Command-line interface for the gaze pipeline
Subcommands for every stage, from ingestion and synthesis to reports
"""
import argparse
import itertools
import json
import sys
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from .config import Config, PipelineConfig
from .errors import ConfigError, EmptyInput, FormatError, GazeError, InvalidInput, IoError
from .log import configure_logging, get_logger
from .models import ClassTaxonomy, LabeledTimeline
from .skills.analytics_skill import AnalyticsSkill
from .skills.bench_skill import BenchConfig, BenchSkill, cycle_workload, rep_table_csv, summary_table_csv
from .skills.classify_skill import HistogramThumbnailExtractor, TrainConfig
from .skills.ingest_skill import DirectoryFrameSource, IngestSkill, SplitManifest, frame_filename, write_image
from .skills.metrics_skill import EvalRecord, MetricsSkill, format_metrics_csv, format_metrics_text, parse_metrics_csv
from .skills.reporting_skill import ReportingSkill
from .skills.segment_skill import write_mask
from .skills.synthesis_skill import SynthesisSkill, SyntheticSessionSpec
from .workflow.orchestrator import (GazePipeline, PipelineResources, Session, build_caches, collect_features,
                                    label_set_matrix, parse_scores_csv)

logger = get_logger("cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PIPELINE = 3

BENCH_FRAMES = 32
BENCH_SHOTS = 4


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1"""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# Flag name -> PipelineConfig field
_PIPELINE_FLAGS = {
    "taxonomy": "taxonomy_path",
    "crop_size": "crop_size",
    "resize_to": "resize_to",
    "segmenter": "segmenter",
    "region_tau": "region_tau",
    "mask_root": "mask_root",
    "video_id": "video_id",
    "classifier": "classifier",
    "fusion": "fusion",
    "inputs": "inputs",
    "alpha": "alpha",
    "beta": "beta",
    "temperature": "temperature",
    "class_embeddings": "class_embeddings_path",
    "cache": "cache_path",
    "mask_cache": "mask_cache_path",
    "probe": "probe_path",
    "crop_embeddings": "crop_embeddings_path",
    "mask_embeddings": "mask_embeddings_path",
    "seed": "seed",
    "workers": "workers",
    "paced": "paced",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="gaze", description="Semantic gaze classification for egocentric sessions")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    pipeline = _ArgumentParser(add_help=False)
    pipeline.add_argument("--config", help="Versioned TOML pipeline config")
    pipeline.add_argument("--taxonomy", help="Class names, one per line")
    pipeline.add_argument("--crop-size", type=int)
    pipeline.add_argument("--resize-to", type=int)
    pipeline.add_argument("--segmenter", choices=["region-grow", "external"])
    pipeline.add_argument("--region-tau", type=float)
    pipeline.add_argument("--mask-root")
    pipeline.add_argument("--video-id")
    pipeline.add_argument("--classifier", choices=["zero-shot", "adapter", "probe"])
    pipeline.add_argument("--fusion", choices=["prob", "logit"])
    pipeline.add_argument("--inputs", choices=["crop", "mask", "crop+mask", "frame+crop+mask"])
    pipeline.add_argument("--alpha", type=float)
    pipeline.add_argument("--beta", type=float)
    pipeline.add_argument("--temperature", type=float)
    pipeline.add_argument("--class-embeddings")
    pipeline.add_argument("--cache")
    pipeline.add_argument("--mask-cache")
    pipeline.add_argument("--probe")
    pipeline.add_argument("--crop-embeddings")
    pipeline.add_argument("--mask-embeddings")
    pipeline.add_argument("--seed", type=int)
    pipeline.add_argument("--workers", type=int)
    pipeline.add_argument("--paced", action="store_true", default=None, help="Release frames at the config fps")

    session = _ArgumentParser(add_help=False)
    session.add_argument("--frames", required=True, help="Directory of numbered .ppm/.bmp frames")
    session.add_argument("--gaze", help="Gaze log CSV; without it the overlay marker is detected")

    p = sub.add_parser("ingest", help="Validate and normalize a gaze log and annotations")
    p.add_argument("--gaze", required=True)
    p.add_argument("--annotations")
    p.add_argument("--annotator")
    p.add_argument("--taxonomy")
    p.add_argument("--width", type=int, default=1920)
    p.add_argument("--height", type=int, default=1080)
    p.add_argument("--fps", type=float, default=Config.SYNTH_FPS)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("split", help="Seeded per-video train/val split of labelled frames")
    p.add_argument("timelines", nargs="+", help="Timeline CSVs; the file stem is the video id")
    p.add_argument("--taxonomy")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("locate", parents=[pipeline, session], help="Write gaze crops")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_locate)

    p = sub.add_parser("segment", parents=[pipeline, session], help="Write masks and masked chips")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_segment)

    p = sub.add_parser("classify", parents=[pipeline, session], help="Run the pipeline over a session")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("adapt", parents=[pipeline, session], help="Build few-shot caches")
    p.add_argument("--truth", required=True, help="Ground-truth timeline CSV")
    p.add_argument("--shots", type=int, default=16)
    p.add_argument("--manifest", help="Split manifest; only training frames are used")
    p.add_argument("--out", required=True, help="Crop cache path")
    p.add_argument("--mask-out", help="Mask cache path")
    p.set_defaults(handler=cmd_adapt)

    p = sub.add_parser("train-probe", parents=[pipeline, session], help="Train a linear probe")
    p.add_argument("--truth", help="Single-label timeline CSV")
    p.add_argument("--annotations", help="Multi-label annotation CSV")
    p.add_argument("--annotator")
    p.add_argument("--head", choices=["single", "multi"], default="single",
                   help="softmax head on class indices or sigmoid head on label sets")
    p.add_argument("--manifest")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--schedule", choices=["multistep", "cosine"], default="multistep")
    p.add_argument("--warmup-epochs", type=int, default=0)
    p.add_argument("--augment", action="store_true", help="Add the three flips of every crop")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train_probe)

    p = sub.add_parser("evaluate", help="Top-k, mAP, F1 and annotator agreement")
    p.add_argument("--scores", help="scores.csv from classify")
    p.add_argument("--truth", help="Ground-truth timeline CSV")
    p.add_argument("--annotations", help="Multi-label annotation CSV used as truth")
    p.add_argument("--annotator")
    p.add_argument("--kappa", nargs=2, metavar=("RATER1", "RATER2"), help="Two timeline CSVs")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--average", choices=["micro", "macro"], default="micro")
    p.add_argument("--taxonomy")
    p.add_argument("--out", help="metrics.csv path")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("analyze", help="Frequencies, z-tests, transitions and dwell")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--collapse-runs", action="store_true")
    p.add_argument("--taxonomy")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("bench", parents=[pipeline], help="Throughput of the built-in pipelines")
    p.add_argument("--frames", help="Frame directory; synthetic 1080p frames when omitted")
    p.add_argument("--pipelines", default="zero-shot,adapter,full")
    p.add_argument("--batch-size", type=int, action="append")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--frames-per-rep", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("synth", help="Generate a synthetic session with known ground truth")
    p.add_argument("--n-frames", type=int, default=500)
    p.add_argument("--width", type=int, default=Config.SYNTH_WIDTH)
    p.add_argument("--height", type=int, default=Config.SYNTH_HEIGHT)
    p.add_argument("--fps", type=float, default=Config.SYNTH_FPS)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--no-dot", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("report", help="CSV tables, SVG charts, HTML and summary")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth")
    p.add_argument("--metrics", help="metrics.csv from evaluate")
    p.add_argument("--audit", help="audit.json from classify")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--collapse-runs", action="store_true")
    p.add_argument("--taxonomy")
    p.add_argument("--fps", type=float, default=Config.SYNTH_FPS)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run a subcommand and map errors to exit codes

    Returns:
        0 success, 1 usage, 2 data error, 3 pipeline failure
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging(args.log_level or Config.LOG_LEVEL)
    try:
        args.handler(args)
    except GazeError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except Exception as e:
        logger.exception("pipeline failure: %s", e)
        return EXIT_PIPELINE
    return EXIT_OK


# Subcommands

def cmd_ingest(args: argparse.Namespace) -> None:
    ingest = IngestSkill(_taxonomy(args.taxonomy), (args.width, args.height))
    out = _out_dir(args.out)
    records = ingest.parse_gaze_log(_read_text(args.gaze))
    _write_text(out / "gaze.csv", ingest.serialize_gaze_log(records))
    valid = sum(1 for r in records if r.valid)
    print(f"gaze records: {len(records)} ({valid} valid)")

    if args.annotations:
        annotations = ingest.parse_annotations(_read_text(args.annotations))
        _write_text(out / "annotations.csv", ingest.serialize_annotations(annotations))
        timeline = ingest.annotations_to_timeline(annotations, args.annotator,
                                                  session_id=Path(args.gaze).stem, fps=args.fps)
        _write_text(out / "truth.csv", ingest.serialize_timeline(timeline))
        print(f"annotated frames: {len(annotations)}, timeline frames: {len(timeline)}")


def cmd_split(args: argparse.Namespace) -> None:
    ingest = IngestSkill(_taxonomy(args.taxonomy))
    frames = []
    for path in args.timelines:
        timeline = ingest.parse_timeline(_read_text(path))
        video = Path(path).stem
        frames.extend((video, f) for f, label in zip(timeline.frame_indices, timeline.labels)
                      if label is not None)
    manifest = ingest.split_dataset(frames, args.ratio, args.seed)
    _write_text(Path(args.out), manifest.to_text())
    n_train = sum(len(v) for v in manifest.train_ids.values())
    n_val = sum(len(v) for v in manifest.val_ids.values())
    print(f"train frames: {n_train}, val frames: {n_val}")


def cmd_locate(args: argparse.Namespace) -> None:
    cfg, pipeline, session = _pipeline(args, classifier="zero-shot", inputs="crop")
    out = _out_dir(args.out)
    records = session.records()
    rows = ["frame,x,y"]
    for index, image in session.frames:
        state = pipeline.locator.execute({"image": image, "record": records.get(index)})
        if state["gaze"] is None:
            continue
        state.update(pipeline.locator.crop(state))
        write_image(state["crop"], out / frame_filename(index))
        rows.append(f"{index},{state['gaze'].x},{state['gaze'].y}")
    _write_text(out / "gaze_points.csv", "\n".join(rows) + "\n")
    print(f"crops written: {len(rows) - 1}")


def cmd_segment(args: argparse.Namespace) -> None:
    cfg, pipeline, session = _pipeline(args, classifier="zero-shot", inputs="crop+mask")
    out = _out_dir(args.out)
    records = session.records()
    written = 0
    for index, image in session.frames:
        state: Dict[str, Any] = {"frame_index": index, "image": image, "record": records.get(index)}
        state.update(pipeline.locator.execute(state))
        if state["gaze"] is None:
            continue
        mask = pipeline.segmenter.provider.mask(state["clean"], state["gaze"], index)
        write_mask(mask, out / f"{index}.pbm")
        write_image(pipeline.segmenter.segment_skill.render_masked(state["clean"], mask),
                    out / frame_filename(index))
        written += 1
    print(f"masks written: {written}")


def cmd_classify(args: argparse.Namespace) -> None:
    cfg, pipeline, session = _pipeline(args)
    result = pipeline.run(session)
    out = _out_dir(args.out)
    ingest = IngestSkill(pipeline.taxonomy)
    _write_text(out / "timeline.csv", ingest.serialize_timeline(result.timeline))
    _write_text(out / "scores.csv", result.scores_csv(pipeline.taxonomy))
    _write_text(out / "audit.json", json.dumps(result.run_log.generate_audit_log(), indent=2, sort_keys=True) + "\n")
    _write_text(out / "config.toml", cfg.to_toml())
    summary = result.run_log.summary()
    print(f"frames: {summary['frames']}, classified: {summary['classified']}, "
          f"invalid gaze: {summary['invalid_gaze']}, failed: {summary['failed']}")


def cmd_adapt(args: argparse.Namespace) -> None:
    cfg, pipeline, session = _pipeline(args, classifier="zero-shot")
    truth = IngestSkill(pipeline.taxonomy).parse_timeline(_read_text(args.truth))
    caches = build_caches(pipeline, session, truth, args.shots, cfg.seed, _train_ids(args, cfg))
    caches["crop" if "crop" in caches else next(iter(caches))].save(args.out)
    if args.mask_out and "mask" in caches:
        caches["mask"].save(args.mask_out)
    print(f"cache entries: {next(iter(caches.values())).size}")


def cmd_train_probe(args: argparse.Namespace) -> None:
    if bool(args.truth) == bool(args.annotations):
        raise ConfigError("train-probe needs exactly one of --truth and --annotations")
    cfg, pipeline, session = _pipeline(args, classifier="zero-shot", inputs="crop")
    truth = _training_truth(args, pipeline.taxonomy)
    features, labels = collect_features(pipeline, session, truth, _train_ids(args, cfg), args.augment)
    if not features:
        raise InvalidInput("no training frames could be embedded")

    n_classes = pipeline.taxonomy.size
    targets = label_set_matrix(labels, n_classes) if args.head == "multi" else np.asarray(labels)
    train_cfg = TrainConfig(lr=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
                            epochs=args.epochs, batch_size=args.batch_size, seed=cfg.seed,
                            schedule=args.schedule, warmup_epochs=args.warmup_epochs)
    skill = pipeline.classifier.skills_by_input["crop"]
    result = skill.train_probe(np.stack([e.values for e in features]), targets, train_cfg,
                               n_classes, head_mode=args.head)
    result.probe.save(args.out)
    final = result.losses[-1] if result.losses else float("nan")
    print(f"{args.head}-label probe trained on {len(features)} samples, final loss {final:.6f}")


def _training_truth(args: argparse.Namespace, taxonomy: ClassTaxonomy):
    """A timeline for --truth or a single-label head, else frame -> label set"""
    ingest = IngestSkill(taxonomy)
    if args.truth:
        return ingest.parse_timeline(_read_text(args.truth))
    annotations = ingest.parse_annotations(_read_text(args.annotations))
    if args.head == "single":
        return ingest.annotations_to_timeline(annotations, args.annotator)

    label_sets: Dict[int, FrozenSet[int]] = {}
    for a in annotations:
        if args.annotator is not None and a.annotator_id != args.annotator:
            continue
        if a.frame_index in label_sets:
            raise FormatError(f"frame {a.frame_index} annotated twice")
        label_sets[a.frame_index] = a.labels
    if not label_sets:
        raise EmptyInput(f"no annotations for annotator {args.annotator!r}")
    return label_sets


def cmd_evaluate(args: argparse.Namespace) -> None:
    taxonomy = _taxonomy(args.taxonomy)
    ingest = IngestSkill(taxonomy)
    skill = MetricsSkill()
    metrics: Dict[str, float] = {}

    if args.scores:
        scores = parse_scores_csv(_read_text(args.scores))
        if args.annotations:
            annotations = ingest.parse_annotations(_read_text(args.annotations))
            truth = {a.frame_index: a.labels for a in annotations
                     if args.annotator is None or a.annotator_id == args.annotator}
        elif args.truth:
            timeline = ingest.parse_timeline(_read_text(args.truth))
            truth = {f: frozenset([label]) for f, label in zip(timeline.frame_indices, timeline.labels)
                     if label is not None}
        else:
            raise ConfigError("evaluate --scores needs --truth or --annotations")
        records = [EvalRecord(scores=scores[f], truth=truth[f]) for f in sorted(scores) if f in truth]
        metrics.update(skill.evaluate(records, args.threshold, args.average))

    if args.kappa:
        first, second = (ingest.parse_timeline(_read_text(p)) for p in args.kappa)
        metrics["kappa"] = skill.cohens_kappa(first, second)

    if not metrics:
        raise ConfigError("evaluate needs --scores or --kappa")
    if args.out:
        _write_text(Path(args.out), format_metrics_csv(metrics))
    sys.stdout.write(format_metrics_text(metrics))


def cmd_analyze(args: argparse.Namespace) -> None:
    taxonomy = _taxonomy(args.taxonomy)
    pred, truth = _timelines(args, taxonomy)
    summary = AnalyticsSkill(taxonomy).summarize(pred, truth, args.alpha, args.collapse_runs)
    reporting = ReportingSkill(taxonomy)
    out = _out_dir(args.out)
    _write_text(out / "frequencies.csv", reporting.frequency_csv(summary))
    _write_text(out / "ztests.csv", reporting.ztest_csv(summary))
    _write_text(out / "transitions.csv", reporting.transitions_csv(summary))
    _write_text(out / "dwell.csv", reporting.dwell_csv(summary))
    sys.stdout.write(reporting.summary_text(summary, None, None, None))


def cmd_bench(args: argparse.Namespace) -> None:
    cfg = _config(args)
    taxonomy = cfg.taxonomy()
    cfg.validate_paths(require_models=False)
    synthesis = SynthesisSkill()
    synthetic = None
    class_embeddings = None
    if args.frames:
        frames = [img for _, img in itertools.islice(DirectoryFrameSource(args.frames), BENCH_FRAMES)]
        if not frames:
            raise InvalidInput(f"no frames in {args.frames}")
    else:
        synthetic = synthesis.generate_synthetic_session(SyntheticSessionSpec(
            n_frames=BENCH_FRAMES, width=1920, height=1080, n_classes=taxonomy.size, seed=cfg.seed))
        frames = [img for _, img in synthetic]
        class_embeddings = synthesis.prototype_class_embeddings(
            synthetic, HistogramThumbnailExtractor(), cfg.temperature)

    zero_shot_cfg = cfg.model_copy(update={"classifier": "zero-shot"})
    resources = PipelineResources.from_config(cfg, taxonomy, class_embeddings)
    if synthetic is not None and not resources.caches:
        helper = GazePipeline(zero_shot_cfg, resources, taxonomy)
        resources.caches = build_caches(helper, Session(synthetic, synthetic.gaze), synthetic.truth,
                                        BENCH_SHOTS, cfg.seed)

    runnable = {"zero-shot": True, "adapter": bool(resources.caches), "probe": resources.probe is not None}
    if not runnable[cfg.classifier]:
        logger.warning("classifier %s has no model loaded; benchmarking zero-shot instead", cfg.classifier)
        cfg = zero_shot_cfg
    pipeline = GazePipeline(cfg, resources, taxonomy)

    wanted = [name.strip() for name in args.pipelines.split(",") if name.strip()]
    stages = [(name, stage, cycle_workload(frames)) for name, stage in pipeline.bench_stages()
              if name in wanted]
    if not stages:
        raise ConfigError(f"no runnable pipeline among {wanted}")
    cfgs = [BenchConfig(batch_size=b, repetitions=args.reps, warmup_batches=args.warmup,
                        frames_per_rep=args.frames_per_rep) for b in (args.batch_size or [1, 8])]

    cells = BenchSkill().bench_matrix(stages, cfgs)
    out = _out_dir(args.out)
    _write_text(out / "bench_reps.csv", rep_table_csv(cells))
    _write_text(out / "bench_summary.csv", summary_table_csv(cells))
    sys.stdout.write(summary_table_csv(cells))


def cmd_synth(args: argparse.Namespace) -> None:
    synthesis = SynthesisSkill()
    taxonomy = ClassTaxonomy()
    spec = SyntheticSessionSpec(n_frames=args.n_frames, width=args.width, height=args.height,
                                n_classes=taxonomy.size, render_dot=not args.no_dot, noise=args.noise,
                                seed=args.seed, fps=args.fps, session_id=Path(args.out).name or "synthetic")
    session = synthesis.generate_synthetic_session(spec)

    out = _out_dir(args.out)
    frames_dir = _out_dir(str(out / "frames"))
    for index, image in session:
        write_image(image, frames_dir / frame_filename(index))

    ingest = IngestSkill(taxonomy, (spec.width, spec.height))
    _write_text(out / "gaze.csv", ingest.serialize_gaze_log(session.gaze))
    _write_text(out / "truth.csv", ingest.serialize_timeline(session.truth))
    synthesis.prototype_class_embeddings(session, HistogramThumbnailExtractor()).save(
        out / "class_embeddings.csv", taxonomy)
    print(f"synthetic session: {spec.n_frames} frames at {spec.width}x{spec.height} in {out}")


def cmd_report(args: argparse.Namespace) -> None:
    taxonomy = _taxonomy(args.taxonomy)
    pred, truth = _timelines(args, taxonomy)
    pred = pred.model_copy(update={"fps": args.fps})
    analytics = AnalyticsSkill(taxonomy).summarize(pred, truth, args.alpha, args.collapse_runs)
    metrics = parse_metrics_csv(_read_text(args.metrics)) if args.metrics else None
    run_summary = None
    if args.audit:
        try:
            run_summary = json.loads(_read_text(args.audit))["summary"]
        except (ValueError, KeyError) as e:
            raise IoError(f"cannot read audit log {args.audit}: {e}") from e
    written = ReportingSkill(taxonomy).emit_report(args.out, pred, analytics, metrics, None, run_summary)
    print(f"report files: {len(written)} in {args.out}")


# Helpers

def _config(args: argparse.Namespace, **forced: Any) -> PipelineConfig:
    overrides = {field: getattr(args, flag, None) for flag, field in _PIPELINE_FLAGS.items()}
    overrides.update(forced)
    if getattr(args, "config", None):
        return PipelineConfig.from_toml(args.config, overrides)
    return PipelineConfig.build(None, overrides)


def _pipeline(args: argparse.Namespace, **forced: Any):
    """Config, pipeline and session for the frame-level subcommands"""
    cfg = _config(args, **forced)
    cfg.validate_paths()
    taxonomy = cfg.taxonomy()
    source = DirectoryFrameSource(args.frames)
    if not len(source):
        raise InvalidInput(f"no frames in {args.frames}")

    gaze = None
    if args.gaze:
        first = next(iter(source))[1]
        ingest = IngestSkill(taxonomy, (first.width, first.height))
        gaze = ingest.parse_gaze_log(_read_text(args.gaze))

    resources = PipelineResources.from_config(cfg, taxonomy)
    pipeline = GazePipeline(cfg, resources, taxonomy)
    session = Session(source, gaze, session_id=cfg.video_id, fps=cfg.fps)
    return cfg, pipeline, session


def _train_ids(args: argparse.Namespace, cfg: PipelineConfig) -> Optional[List[int]]:
    if not args.manifest:
        return None
    manifest = SplitManifest.from_text(_read_text(args.manifest))
    if cfg.video_id not in manifest.train_ids:
        raise InvalidInput(f"manifest has no training frames for video {cfg.video_id!r}")
    return list(manifest.train_ids[cfg.video_id])


def _timelines(args: argparse.Namespace, taxonomy: ClassTaxonomy):
    ingest = IngestSkill(taxonomy)
    pred = ingest.parse_timeline(_read_text(args.pred), session_id=Path(args.pred).parent.name or "session")
    truth: Optional[LabeledTimeline] = None
    if args.truth:
        truth = ingest.parse_timeline(_read_text(args.truth), session_id="truth")
    return pred, truth


def _taxonomy(path: Optional[str]) -> ClassTaxonomy:
    if path is None:
        return ClassTaxonomy()
    try:
        return ClassTaxonomy.from_file(path)
    except OSError as e:
        raise IoError(f"cannot read taxonomy {path}: {e}") from e


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {out}: {e}") from e
    return out


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
