"""Dataset manifest: combinatorial accounting plus per-file provenance.

Layout under the output root::

    audio/digital/<method>/<slot>/<trial index>.wav
    audio/ota/<method>/<slot>/<speaker>+<mic>/<trial index>.wav

where ``slot`` names the model the sample was made for: ``s-<model>`` (PGD
with that surrogate) or ``wo-<model>`` (ensemble of all the others).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..errors import NonUniquePathError
from ..trials import TrialPair
from .records import ENSEMBLE, PGD


def derive_seed(*parts) -> int:
    """Stable 31-bit seed from any printable parts (master seed, trial key, ...)."""
    return int.from_bytes(hashlib.sha256(repr(parts).encode()).digest()[:4], "little") & 0x7FFFFFFF


def slot_name(method: str, model: str) -> str:
    return f"s-{model}" if method == PGD else f"wo-{model}"


def surrogates_for(method: str, model: str, all_models: Sequence[str]) -> list[str]:
    if method == PGD:
        return [model]
    if method == ENSEMBLE:
        return [m for m in all_models if m != model]
    raise ValueError(f"unknown attack method {method!r}")


def digital_path(method: str, model: str, index: int) -> str:
    return f"audio/digital/{method}/{slot_name(method, model)}/{index:05d}.wav"


def ota_path(method: str, model: str, device: str, index: int) -> str:
    return f"audio/ota/{method}/{slot_name(method, model)}/{device}/{index:05d}.wav"


@dataclass
class Manifest:
    base_count: int
    victims: list[str]
    attacks: list[str]
    speakers: list[str]
    mics: list[str]
    master_seed: int = 0
    entries: list[dict] = field(default_factory=list)
    digital_entries: list[dict] = field(default_factory=list)

    @property
    def expected_total(self) -> int:
        return self.base_count * len(self.victims) * len(self.attacks) * len(self.speakers) * len(self.mics)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "base_count": self.base_count,
            "victims": self.victims,
            "attacks": self.attacks,
            "speakers": self.speakers,
            "mics": self.mics,
            "master_seed": self.master_seed,
            "expected_total": self.expected_total,
            "entries": self.entries,
            "digital_entries": self.digital_entries,
        }

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")
        return path


def build_manifest(trials: Sequence[TrialPair] | int, victims: Sequence[str], attacks: Sequence[str],
                   speakers: Sequence[str], mics: Sequence[str], master_seed: int = 0,
                   all_models: Sequence[str] | None = None, with_entries: bool = True) -> Manifest:
    """Enumerate every generated file.

    ``trials`` is the attacked base set, or just its size when only the
    accounting is wanted (placeholder trial ids are used then).
    """
    if isinstance(trials, int):
        keys = [(f"trial{i:05d}", None, None) for i in range(trials)]
    else:
        keys = [(t.key, t.enroll, t.test) for t in trials]
    models = list(all_models or victims)
    m = Manifest(len(keys), list(victims), list(attacks), list(speakers), list(mics), master_seed)
    if not with_entries:
        return m
    seen: set[str] = set()

    def claim(p: str) -> str:
        if p in seen:
            raise NonUniquePathError(f"duplicate manifest path {p}")
        seen.add(p)
        return p

    for method in attacks:
        for model in victims:
            surr = surrogates_for(method, model, models)
            for i, (key, enroll, test) in enumerate(keys):
                tseed = derive_seed(master_seed, key)
                base = {"trial": key, "enroll": enroll, "test": test, "method": method,
                        "surrogates": surr, "target": model, "trial_seed": tseed}
                src = claim(digital_path(method, model, i))
                m.digital_entries.append({**base, "path": src, "device": "digital"})
                for spk in speakers:
                    for mic in mics:
                        dev = f"{spk}+{mic}"
                        m.entries.append({
                            **base, "path": claim(ota_path(method, model, dev, i)), "source": src,
                            "speaker": spk, "mic": mic, "device": dev,
                            "channel_seed": derive_seed(tseed, dev),
                        })
    m.entries.sort(key=lambda e: e["path"])
    m.digital_entries.sort(key=lambda e: e["path"])
    return m
