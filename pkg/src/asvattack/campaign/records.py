"""Per-trial attack outcomes and surrogate x victim success matrices."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import EmptyInputError

PGD = "pgd"
ENSEMBLE = "ensemble_pgd"
METHODS = (PGD, ENSEMBLE)
DIGITAL = "digital"

WHITE_BOX = "white-box"
TRANSFER = "transfer"
ENSEMBLE_SURROGATE = "ensemble-surrogate"
ENSEMBLE_TRANSFER = "ensemble-transfer"


def record_key(trial: str, method: str, surrogates: Sequence[str], victim: str, device: str, seed: int) -> str:
    blob = json.dumps([trial, method, list(surrogates), victim, device, seed])
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def row_label(method: str, surrogates: Sequence[str], all_models: Sequence[str]) -> str:
    """``"ecapa"`` for PGD, ``"w/o rawnet"`` for a leave-one-out ensemble."""
    if method == PGD:
        return surrogates[0]
    left_out = [m for m in all_models if m not in surrogates]
    if len(left_out) == 1:
        return f"w/o {left_out[0]}"
    return "+".join(surrogates)


@dataclass(frozen=True)
class AttackRecord:
    trial: str                  # TrialPair.key
    method: str
    surrogates: tuple[str, ...]
    victim: str
    device: str                 # "digital" or "<speaker>+<mic>"
    pre_score: float
    post_score: float
    threshold: float
    success: bool
    seed: int
    audio: str = ""
    row: str = ""

    def __post_init__(self):
        object.__setattr__(self, "surrogates", tuple(self.surrogates))
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.success != (self.post_score >= self.threshold):
            raise ValueError(f"success flag {self.success} disagrees with score {self.post_score} "
                             f"vs threshold {self.threshold}")

    @property
    def key(self) -> str:
        return record_key(self.trial, self.method, self.surrogates, self.victim, self.device, self.seed)

    @property
    def tag(self) -> str:
        inside = self.victim in self.surrogates
        if self.method == PGD:
            return WHITE_BOX if inside else TRANSFER
        return ENSEMBLE_SURROGATE if inside else ENSEMBLE_TRANSFER

    def to_json(self) -> str:
        d = asdict(self)
        d["surrogates"] = list(self.surrogates)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "AttackRecord":
        return cls(**json.loads(line))


def read_records(path: str | Path) -> list[AttackRecord]:
    path = Path(path)
    if not path.exists():
        return []
    return [AttackRecord.from_json(line) for line in path.read_text().splitlines() if line.strip()]


def success_rate(records: Iterable[AttackRecord]) -> float:
    """100 * successes / attacks."""
    n = hits = 0
    for r in records:
        n += 1
        hits += bool(r.success)
    if n == 0:
        raise EmptyInputError("success rate of an empty record set is undefined")
    return 100.0 * hits / n


@dataclass
class SuccessMatrix:
    """Success rates indexed by (row, victim, device).

    Rows are surrogates for PGD and leave-one-out ensembles for ensemble PGD;
    devices are ``["digital"]`` or the replay grid.
    """

    method: str
    rows: list[str]
    victims: list[str]
    devices: list[str]
    cells: dict[tuple[str, str, str], float] = field(default_factory=dict)
    counts: dict[tuple[str, str, str], int] = field(default_factory=dict)
    tags: dict[tuple[str, str], str] = field(default_factory=dict)

    def get(self, row: str, victim: str, device: str = DIGITAL) -> float:
        return self.cells[(row, victim, device)]

    def pooled(self, row: str, victim: str, devices: Sequence[str] | None = None) -> float:
        """Count-weighted mean over devices (all of them by default)."""
        devs = self.devices if devices is None else devices
        n = sum(self.counts[(row, victim, d)] for d in devs)
        return sum(self.cells[(row, victim, d)] * self.counts[(row, victim, d)] for d in devs) / n

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rows": self.rows,
            "victims": self.victims,
            "devices": self.devices,
            "cells": [
                {"row": r, "victim": v, "device": d, "success_rate": self.cells[(r, v, d)],
                 "attacks": self.counts[(r, v, d)], "tag": self.tags[(r, v)]}
                for r in self.rows for v in self.victims for d in self.devices if (r, v, d) in self.cells
            ],
        }


def matrix_from_records(records: Sequence[AttackRecord], method: str, models: Sequence[str],
                        devices: Sequence[str] = (DIGITAL,)) -> SuccessMatrix:
    """Aggregate stored records into a matrix; nothing but the records is used."""
    mine = [r for r in records if r.method == method and r.device in devices]
    groups: dict[tuple[str, str, str], list[AttackRecord]] = {}
    tags: dict[tuple[str, str], str] = {}
    rows: list[str] = []
    for r in mine:
        row = r.row or row_label(method, r.surrogates, models)
        groups.setdefault((row, r.victim, r.device), []).append(r)
        tags[(row, r.victim)] = r.tag
        if row not in rows:
            rows.append(row)
    order = {m: i for i, m in enumerate(models)}

    def row_order(label: str) -> tuple:
        base = label[4:] if label.startswith("w/o ") else label
        return (order.get(base, len(order)), label)

    rows.sort(key=row_order)
    victims = [m for m in models if any(k[1] == m for k in groups)]
    m = SuccessMatrix(method, rows, victims, list(devices), tags=tags)
    for k, recs in groups.items():
        m.cells[k] = success_rate(recs)
        m.counts[k] = len(recs)
    return m
