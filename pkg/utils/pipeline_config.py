"""
Pipeline configuration document
One JSON document holding every stage's parameters; unknown keys are rejected
"""

import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.baselines import BaselineConfig
from core.detect import DEDUPLICATED_DETECT, ButterworthConfig, DetectConfig
from core.preprocess import DenoiseConfig
from core.render import RenderSpec
from core.track import ClassifyConfig, TrackConfig

logger = logging.getLogger("PipelineConfig")


class StatsConfig(BaseModel):
    """Where and when traffic indices are computed (empty lists fall back to whole-fiber defaults)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    profile_positions: List[float] = []  # meters; default: fiber midpoint
    window: Optional[Tuple[float, float]] = None  # seconds; default: whole recording
    interval_s: float = Field(60.0, gt=0)
    segments: List[Tuple[float, float]] = []  # meters; default: whole fiber
    instants: List[float] = []  # seconds; default: averaged over the window

    @model_validator(mode="after")
    def _ordered_ranges(self):
        if self.window is not None and not self.window[1] > self.window[0]:
            raise ValueError(f"stats window {self.window} is empty")
        for seg in self.segments:
            if not seg[1] > seg[0]:
                raise ValueError(f"segment {seg} is empty")
        return self


class PipelineConfig(BaseModel):
    """All stage parameters; defaults are the published field settings"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    schema_version: Literal[1] = 1
    denoise: DenoiseConfig = DenoiseConfig()
    butterworth: ButterworthConfig = ButterworthConfig()
    detect: DetectConfig = DetectConfig()
    track: TrackConfig = TrackConfig()
    classify: ClassifyConfig = ClassifyConfig()
    stats: StatsConfig = StatsConfig()
    baseline: BaselineConfig = BaselineConfig()
    render: RenderSpec = RenderSpec()
    rng_seed: int = 0


CONFIG_PRESETS = {
    "default": PipelineConfig(),
    "deduplicated": PipelineConfig(detect=DEDUPLICATED_DETECT),
}


def default_config() -> PipelineConfig:
    return PipelineConfig()


def preset_config(name: str) -> PipelineConfig:
    """Named configuration; 'deduplicated' merges entry peaks closer than 1.5 s"""
    if name not in CONFIG_PRESETS:
        raise ValueError(f"unknown config preset {name!r}, expected one of {sorted(CONFIG_PRESETS)}")
    return CONFIG_PRESETS[name]


def load_config(path) -> PipelineConfig:
    """Validate a JSON config document"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        return PipelineConfig.model_validate_json(path.read_text())
    except ValidationError as e:
        logger.error(f"Invalid config {path}: {e}")
        raise


def dump_config(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
