"""Parametric loudspeaker and microphone tiers.

None of the numbers below describe real hardware. They were chosen so that
the tiers are ordered: cheaper devices cut more bandwidth, colour the
spectrum more, distort harder and (for microphones) add more noise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigError, PresetKindError

LOUDSPEAKER = "loudspeaker"
MICROPHONE = "microphone"
SPEAKER_TIERS = ("high", "medium", "low")
MIC_TIERS = ("ios", "android_high", "android_low")


@dataclass(frozen=True)
class DevicePreset:
    """One device tier.

    ``band_limit`` is ``(low, high)`` in Hz, either end may be None (no
    filter). ``nonlinearity`` is the tanh soft-clip drive; 0 disables it.
    ``frequency_response`` is a sparse list of ``(Hz, dB)`` points,
    interpolated in dB over log-frequency. ``noise_floor`` is in dBFS,
    microphones only, None for no noise.
    """

    kind: str
    tier: str
    band_limit: tuple[float | None, float | None] = (None, None)
    nonlinearity: float = 0.0
    frequency_response: tuple[tuple[float, float], ...] = field(default_factory=tuple)
    noise_floor: float | None = None
    sample_rate: int = 16000

    def __post_init__(self):
        if self.kind not in (LOUDSPEAKER, MICROPHONE):
            raise ValueError(f"kind must be {LOUDSPEAKER!r} or {MICROPHONE!r}, got {self.kind!r}")
        nyq = self.sample_rate / 2
        lo, hi = self.band_limit
        for f in (lo, hi):
            if f is not None and not 0 < f < nyq:
                raise ValueError(f"cutoff {f} Hz outside (0, {nyq})")
        if lo is not None and hi is not None and lo >= hi:
            raise ValueError(f"band limit low cutoff {lo} must be below high cutoff {hi}")
        if self.nonlinearity < 0:
            raise ValueError("nonlinearity drive must be >= 0")
        if self.noise_floor is not None:
            if self.kind != MICROPHONE:
                raise ValueError("only microphones carry a noise floor")
            if not self.noise_floor < 0:
                raise ValueError(f"noise_floor must be < 0 dBFS, got {self.noise_floor}")
        pts = tuple((float(f), float(g)) for f, g in self.frequency_response)
        if any(not 0 < f <= nyq for f, _ in pts):
            raise ValueError("EQ points must lie in (0, nyquist]")
        object.__setattr__(self, "frequency_response", tuple(sorted(pts)))
        object.__setattr__(self, "band_limit", (lo, hi))

    @property
    def id(self) -> str:
        return f"{'speaker' if self.kind == LOUDSPEAKER else 'mic'}_{self.tier}"

    def require(self, kind: str) -> "DevicePreset":
        if self.kind != kind:
            raise PresetKindError(f"{self.id} is a {self.kind}, expected a {kind}")
        return self


def flat(kind: str, tier: str = "identity") -> DevicePreset:
    """Transparent device: no EQ, no band limit, no clipping, no noise."""
    return DevicePreset(kind, tier)


_SPEAKERS = [
    DevicePreset(LOUDSPEAKER, "high", (80.0, 7000.0), 0.3,
                 ((100, -1.0), (1000, 0.0), (6000, 0.5), (7500, -1.0))),
    DevicePreset(LOUDSPEAKER, "medium", (150.0, 6500.0), 1.5,
                 ((200, -3.0), (1000, 0.0), (3000, 2.0), (6000, -3.0))),
    DevicePreset(LOUDSPEAKER, "low", (300.0, 4500.0), 3.0,
                 ((350, -5.0), (900, 2.0), (2500, 4.0), (4200, -5.0))),
]
_MICS = [
    DevicePreset(MICROPHONE, "ios", (60.0, 7200.0), 0.0,
                 ((100, -0.5), (1000, 0.0), (7000, -0.5)), noise_floor=-80.0),
    DevicePreset(MICROPHONE, "android_high", (100.0, 6500.0), 0.2,
                 ((150, -2.0), (3000, 1.5), (6500, -3.0)), noise_floor=-70.0),
    DevicePreset(MICROPHONE, "android_low", (250.0, 4000.0), 0.8,
                 ((300, -4.0), (1500, 3.0), (3500, -4.0)), noise_floor=-55.0),
]


def preset_registry() -> dict[str, list[DevicePreset]]:
    return {"speakers": list(_SPEAKERS), "mics": list(_MICS)}


def get_preset(preset_id: str) -> DevicePreset:
    for p in _SPEAKERS + _MICS:
        if p.id == preset_id:
            return p
    raise KeyError(f"unknown device preset {preset_id!r}")


def device_grid(speakers=None, mics=None) -> list[tuple[DevicePreset, DevicePreset]]:
    """All (speaker, mic) combinations in registry order (speaker-major)."""
    reg = preset_registry()
    return list(itertools.product(speakers or reg["speakers"], mics or reg["mics"]))


def device_key(speaker: DevicePreset, mic: DevicePreset) -> str:
    return f"{speaker.id}+{mic.id}"


def preset_from_dict(d: dict) -> DevicePreset:
    try:
        band = d.get("band_limit") or (None, None)
        return DevicePreset(
            kind=d["kind"],
            tier=d["tier"],
            band_limit=(band[0], band[1]),
            nonlinearity=float(d.get("nonlinearity", 0.0)),
            frequency_response=tuple(tuple(p) for p in d.get("frequency_response", ())),
            noise_floor=d.get("noise_floor"),
            sample_rate=int(d.get("sample_rate", 16000)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad device preset {d!r}: {exc}") from None


def preset_to_dict(p: DevicePreset) -> dict:
    return {
        "kind": p.kind,
        "tier": p.tier,
        "band_limit": list(p.band_limit),
        "nonlinearity": p.nonlinearity,
        "frequency_response": [list(x) for x in p.frequency_response],
        "noise_floor": p.noise_floor,
        "sample_rate": p.sample_rate,
    }


def load_presets(path: str | Path) -> dict[str, list[DevicePreset]]:
    """Read a YAML file with ``speakers:`` and ``mics:`` lists of preset mappings."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    unknown = set(data) - {"speakers", "mics"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    out = {k: [preset_from_dict(d) for d in data.get(k, [])] for k in ("speakers", "mics")}
    for p in out["speakers"]:
        p.require(LOUDSPEAKER)
    for p in out["mics"]:
        p.require(MICROPHONE)
    return out
