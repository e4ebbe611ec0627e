"""
Configuration module for the gaze pipeline
Environment-backed defaults plus the versioned pipeline config file
"""
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .models import ClassTaxonomy

# Load environment variables
load_dotenv()

CONFIG_VERSION = 1


class Config:
    """
    Central process-wide settings read from the environment
    """

    LOG_LEVEL = os.getenv("GAZE_LOG_LEVEL", "INFO")

    # Streaming: bounded hand-off between stages, never more than 64 frames in flight
    MAX_QUEUE_SIZE = 64
    QUEUE_SIZE = min(int(os.getenv("GAZE_QUEUE_SIZE", "64")), MAX_QUEUE_SIZE)

    # Fraction of gaze-carrying frames allowed to fail before a run is aborted
    FAILURE_CEILING = float(os.getenv("GAZE_FAILURE_CEILING", "0.5"))

    GPU_MODEL = os.getenv("GAZE_GPU_MODEL", "unknown")

    # Synthetic session defaults
    SYNTH_WIDTH = 640
    SYNTH_HEIGHT = 480
    SYNTH_FPS = 25

    @classmethod
    def queue_size(cls, requested: Optional[int] = None) -> int:
        """
        Clamp a requested queue size to the allowed range

        Args:
            requested: Desired size, or None for the configured default

        Returns:
            Queue size between 1 and MAX_QUEUE_SIZE
        """
        size = cls.QUEUE_SIZE if requested is None else requested
        return max(1, min(size, cls.MAX_QUEUE_SIZE))


class PipelineConfig(BaseModel):
    """Settings for one pipeline run; loaded from a TOML file, then flag overrides"""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    config_version: int = CONFIG_VERSION
    taxonomy_path: Optional[str] = None

    crop_size: int = Field(default=128, ge=2)
    resize_to: int = Field(default=224, ge=1)

    segmenter: Literal["region-grow", "external"] = "region-grow"
    region_tau: float = Field(default=30.0, ge=0)
    region_max_pixels: int = Field(default=250_000, ge=1)
    mask_root: Optional[str] = None
    video_id: str = "session"

    classifier: Literal["zero-shot", "adapter", "probe"] = "adapter"
    fusion: Literal["prob", "logit"] = "prob"
    inputs: Literal["crop", "mask", "crop+mask", "frame+crop+mask"] = "crop+mask"
    alpha: float = Field(default=1.0, ge=0)
    beta: float = Field(default=5.5, gt=0)
    temperature: float = Field(default=0.01, gt=0)

    class_embeddings_path: Optional[str] = None
    cache_path: Optional[str] = None
    mask_cache_path: Optional[str] = None
    probe_path: Optional[str] = None
    crop_embeddings_path: Optional[str] = None
    mask_embeddings_path: Optional[str] = None

    overlay_radius: int = Field(default=6, ge=0)
    overlay_threshold: int = Field(default=300, ge=-510, le=510)

    seed: int = 0
    workers: int = Field(default=1, ge=1)
    paced: bool = False
    fps: float = Field(default=25.0, gt=0)

    @field_validator("config_version")
    @classmethod
    def _known_version(cls, version: int) -> int:
        if version != CONFIG_VERSION:
            raise ValueError(f"unsupported config_version {version} (expected {CONFIG_VERSION})")
        return version

    @classmethod
    def from_toml(cls, path: str, overrides: Optional[Dict[str, Any]] = None) -> "PipelineConfig":
        """
        Load a config file and apply overrides

        Args:
            path: TOML file path
            overrides: Values that replace file values (None entries are ignored)

        Returns:
            Validated PipelineConfig
        """
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid config {path}: {e}") from e

        # Accept either a flat file or a [pipeline] table
        data = data.get("pipeline", data)
        return cls.build(data, overrides)

    @classmethod
    def build(cls, data: Optional[Dict[str, Any]] = None,
              overrides: Optional[Dict[str, Any]] = None) -> "PipelineConfig":
        merged = dict(data or {})
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
        try:
            return cls(**merged)
        except ValidationError as e:
            raise ConfigError(str(e)) from e

    def validate_paths(self, require_models: bool = True) -> None:
        """
        Check that every referenced file exists and required ones are set

        Args:
            require_models: Also demand the cache or probe path the classifier needs

        Raises:
            ConfigError: a path is missing or a required path is unset
        """
        for field in ("taxonomy_path", "class_embeddings_path", "cache_path", "mask_cache_path",
                      "probe_path", "crop_embeddings_path", "mask_embeddings_path", "mask_root"):
            value = getattr(self, field)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{field} does not exist: {value}")

        if require_models and self.classifier == "adapter" and self.cache_path is None:
            raise ConfigError("classifier 'adapter' requires cache_path")
        if require_models and self.classifier == "probe" and self.probe_path is None:
            raise ConfigError("classifier 'probe' requires probe_path")
        if self.segmenter == "external" and self.mask_root is None:
            raise ConfigError("segmenter 'external' requires mask_root")

    def taxonomy(self) -> ClassTaxonomy:
        if self.taxonomy_path is None:
            return ClassTaxonomy()
        return ClassTaxonomy.from_file(self.taxonomy_path)

    def to_toml(self) -> str:
        """Serialize as a flat TOML document (None values omitted)"""
        lines = []
        for key, value in self.model_dump().items():
            if value is None:
                continue
            if isinstance(value, bool):
                lines.append(f"{key} = {'true' if value else 'false'}")
            elif isinstance(value, (int, float)):
                lines.append(f"{key} = {value!r}")
            else:
                escaped = str(value).replace("\\", "\\\\").replace('"', '\\"')
                lines.append(f'{key} = "{escaped}"')
        return "\n".join(lines) + "\n"
