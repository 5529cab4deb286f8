"""Campaign configuration: one YAML file, validated before any stage runs.

Relative paths are resolved against the directory of the config file. The
``ASVATTACK_OUTPUT_ROOT`` environment variable, when set, replaces
``output_root``.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

OUTPUT_ROOT_ENV = "ASVATTACK_OUTPUT_ROOT"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSpec(_Strict):
    id: str
    path: str


class SyntheticSpec(_Strict):
    n_speakers: int = Field(8, ge=1)
    utterances_per_speaker: int = Field(10, ge=1)
    duration: float = Field(1.0, gt=0)
    seed: int = 1
    offset: int = 0
    prefix: str = "spk"


class DataSpec(_Strict):
    trial_list: str
    audio_root: Optional[str] = None    # default: <output>/corpus
    fraction: float = Field(0.25, gt=0, le=1)
    synthetic: Optional[SyntheticSpec] = None


class AttackSpec(_Strict):
    alpha: float = Field(0.004, gt=0)
    steps: int = Field(20, ge=0)
    epsilon: float = Field(0.08, ge=0)
    loss: Literal["cosine"] = "cosine"
    max_ensemble_rounds: int = Field(10, ge=1)
    methods: list[Literal["pgd", "ensemble_pgd"]] = ["pgd", "ensemble_pgd"]
    chunk_size: int = Field(32, ge=1)


class RoomSpec(_Strict):
    distance_m: float = Field(0.3, gt=0)
    angle_deg: float = 90.0
    dims: tuple[float, float, float] = (4.0, 3.5, 2.8)
    absorption: float = Field(0.7, gt=0, le=1)
    ir_wav: Optional[str] = None


class ChannelSpec(_Strict):
    speakers: list[str] = ["speaker_high", "speaker_medium", "speaker_low"]
    mics: list[str] = ["mic_ios", "mic_android_high", "mic_android_low"]
    presets_file: Optional[str] = None
    room: RoomSpec = RoomSpec()


class DetectionSpec(_Strict):
    train: SyntheticSpec = SyntheticSpec(n_speakers=8, utterances_per_speaker=10, seed=7, offset=300)
    max_per_cell: int = Field(40, ge=1)
    codec_bits: int = Field(6, ge=2, le=16)
    shrinkage: float = Field(0.1, ge=0, le=1)


class CampaignConfig(_Strict):
    master_seed: int = 0
    workers: int = Field(1, ge=1)
    output_root: str = "runs/campaign"
    precision: Literal["float32", "float64"] = "float32"
    persist_audio: Literal["all", "digital"] = "all"
    models: list[ModelSpec]
    data: DataSpec
    attack: AttackSpec = AttackSpec()
    channel: ChannelSpec = ChannelSpec()
    detection: DetectionSpec = DetectionSpec()
    base_dir: str = Field("", exclude=True)

    @field_validator("models")
    @classmethod
    def _unique_ids(cls, v):
        ids = [m.id for m in v]
        if len(set(ids)) != len(ids):
            raise ValueError(f"model ids must be unique, got {ids}")
        if not ids:
            raise ValueError("at least one model is required")
        return v

    @model_validator(mode="after")
    def _ensemble_needs_models(self):
        if "ensemble_pgd" in self.attack.methods and len(self.models) < 2:
            raise ValueError("ensemble_pgd needs at least two models (leave-one-out)")
        return self

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    @property
    def output_dir(self) -> Path:
        env = os.environ.get(OUTPUT_ROOT_ENV)
        return Path(env) if env else self.resolve(self.output_root)

    @property
    def audio_dir(self) -> Path:
        if self.data.audio_root is None:
            return self.output_dir / "corpus"
        return self.resolve(self.data.audio_root)

    @property
    def model_ids(self) -> list[str]:
        return [m.id for m in self.models]


def load_config(path: str | Path) -> CampaignConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if "base_dir" in raw:
        raise ConfigError(f"{path}: 'base_dir' is reserved")
    try:
        return CampaignConfig(**raw, base_dir=str(path.resolve().parent))
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from None
