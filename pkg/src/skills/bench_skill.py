"""
Bench Skill - Throughput measurement with warm-up and repetitions
"""
import itertools
import os
import platform
import time
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..config import Config
from ..errors import BenchAborted, InvalidInput
from ..log import get_logger
from ..models import Image

logger = get_logger("bench")

Stage = Callable[[List[Image]], Any]
WorkloadFactory = Callable[[], Iterable[Image]]


class BenchConfig(BaseModel):
    """One benchmark configuration"""

    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(default=1, ge=1)
    repetitions: int = Field(default=10, ge=1)
    warmup_batches: int = Field(default=10, ge=1)
    frames_per_rep: int = Field(default=50, ge=1)

    @property
    def frames_needed(self) -> int:
        return self.warmup_batches * self.batch_size + self.repetitions * self.frames_per_rep


class BenchReport(BaseModel):
    """Per-repetition throughput of one pipeline under one configuration"""

    model_config = ConfigDict(frozen=True)

    pipeline_name: str
    config: BenchConfig
    fps_per_rep: Tuple[float, ...]
    mean_fps: float
    std_fps: float
    hardware: str = "unknown"


class BenchCell(BaseModel):
    """One pipeline x config cell; report is None when the stage aborted"""

    model_config = ConfigDict(frozen=True)

    pipeline_name: str
    config: BenchConfig
    report: Optional[BenchReport] = None
    error: Optional[str] = None


class BenchSkill:
    """
    Agent Skill: Throughput Benchmarking

    Runs a batched stage over a frame workload: untimed warm-up batches, then timed
    repetitions measured with a monotonic clock.
    """

    def __init__(self, hardware: Optional[str] = None):
        self.hardware = hardware or hardware_description()

    def measure_fps(self, stage: Stage, workload: Iterable[Image], cfg: BenchConfig,
                    pipeline_name: str = "stage") -> BenchReport:
        """
        Measure frames per second of a batched stage

        Frames for each repetition are drawn before its timer starts, so only stage
        calls are timed.

        Raises:
            InvalidInput: the workload runs out of frames
            BenchAborted: the stage raised
        """
        frames = iter(workload)

        for _ in range(cfg.warmup_batches):
            batch = _take(frames, cfg.batch_size)
            self._call(stage, batch, pipeline_name)

        resolution = time.get_clock_info("perf_counter").resolution
        rates: List[float] = []
        for rep in range(cfg.repetitions):
            rep_frames = _take(frames, cfg.frames_per_rep)
            batches = [rep_frames[i:i + cfg.batch_size]
                       for i in range(0, len(rep_frames), cfg.batch_size)]

            start = time.perf_counter()
            for batch in batches:
                self._call(stage, batch, pipeline_name)
            elapsed = max(time.perf_counter() - start, resolution)

            rates.append(cfg.frames_per_rep / elapsed)
            logger.debug("%s rep %d: %.2f fps", pipeline_name, rep, rates[-1])

        values = np.asarray(rates)
        return BenchReport(
            pipeline_name=pipeline_name,
            config=cfg,
            fps_per_rep=tuple(rates),
            mean_fps=float(values.mean()),
            std_fps=float(values.std()),
            hardware=self.hardware,
        )

    def bench_matrix(self, pipelines: Sequence[Tuple[str, Stage, WorkloadFactory]],
                     cfgs: Sequence[BenchConfig]) -> List[BenchCell]:
        """
        Every pipeline under every configuration, one cell at a time

        A cell whose stage raises is recorded with its error; the others still run.
        """
        if not pipelines or not cfgs:
            raise InvalidInput("bench_matrix needs at least one pipeline and one config")

        cells: List[BenchCell] = []
        for name, stage, workload in pipelines:
            for cfg in cfgs:
                try:
                    report = self.measure_fps(stage, workload(), cfg, pipeline_name=name)
                    cells.append(BenchCell(pipeline_name=name, config=cfg, report=report))
                    logger.info("%s batch %d: %.2f fps", name, cfg.batch_size, report.mean_fps)
                except BenchAborted as e:
                    logger.error("%s batch %d aborted: %s", name, cfg.batch_size, e)
                    cells.append(BenchCell(pipeline_name=name, config=cfg, error=str(e)))
        return cells

    def _call(self, stage: Stage, batch: List[Image], pipeline_name: str) -> None:
        try:
            stage(batch)
        except Exception as e:
            raise BenchAborted(pipeline_name, e) from e


def cycle_workload(frames: Sequence[Image]) -> WorkloadFactory:
    """Workload factory repeating a fixed frame list forever"""
    if not frames:
        raise InvalidInput("workload needs at least one frame")
    return lambda: itertools.cycle(frames)


def rep_table_csv(cells: Sequence[BenchCell]) -> str:
    """`pipeline,batch_size,rep,fps` rows for every successful cell"""
    lines = ["pipeline,batch_size,rep,fps"]
    for cell in cells:
        if cell.report is None:
            continue
        for rep, fps in enumerate(cell.report.fps_per_rep):
            lines.append(f"{cell.pipeline_name},{cell.config.batch_size},{rep},{fps:.4f}")
    return "\n".join(lines) + "\n"


def summary_table_csv(cells: Sequence[BenchCell]) -> str:
    """One row per cell in the style of a per-hardware FPS table"""
    lines = ["pipeline,batch_size,repetitions,mean_fps,std_fps,hardware,error"]
    for cell in cells:
        if cell.report is None:
            lines.append(f"{cell.pipeline_name},{cell.config.batch_size},{cell.config.repetitions},,,,"
                         f"\"{(cell.error or '').replace(chr(34), chr(39))}\"")
            continue
        r = cell.report
        lines.append(f"{cell.pipeline_name},{cell.config.batch_size},{cell.config.repetitions},"
                     f"{r.mean_fps:.2f},{r.std_fps:.2f},\"{r.hardware}\",")
    return "\n".join(lines) + "\n"


def hardware_description() -> str:
    """`cpu / gpu` from the environment; missing identifiers become `unknown`"""
    cpu = _cpu_model() or platform.processor() or "unknown"
    return f"{cpu} / {Config.GPU_MODEL or 'unknown'}"


def _cpu_model(cpuinfo: Path = Path("/proc/cpuinfo")) -> Optional[str]:
    if cpuinfo.exists():
        try:
            for line in cpuinfo.read_text(errors="replace").splitlines():
                if line.lower().startswith("model name"):
                    return line.split(":", 1)[1].strip()
        except OSError:
            pass
    return os.environ.get("PROCESSOR_IDENTIFIER")


def _take(frames, count: int) -> List[Image]:
    batch = list(itertools.islice(frames, count))
    if len(batch) < count:
        raise InvalidInput("benchmark workload ran out of frames")
    return batch
