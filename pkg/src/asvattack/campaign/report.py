"""Success matrices and EER tables rendered from persisted records.

Nothing here touches models or audio: ``matrices.json`` and the text tables
are a pure function of ``records.jsonl`` (plus ``detection/eer.json``), which
is what makes reruns and resumed runs byte-identical.

``matrices.json`` schema (version 1)::

    {"schema": 1, "models": [...], "devices": [...],
     "matrices": {<method>: {"digital": <matrix>, "ota": <matrix>}}}

with ``<matrix>`` as produced by :meth:`SuccessMatrix.to_dict`.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .records import DIGITAL, METHODS, AttackRecord, SuccessMatrix, matrix_from_records, read_records

MATRICES = "matrices.json"
TABLE_DIGITAL = "table_digital.txt"
TABLE_OTA = "table_ota.txt"
TABLE_DETECTION = "table_detection.txt"

METHOD_TITLES = {"pgd": "PGD", "ensemble_pgd": "Ensemble PGD"}


def _fmt(v: float | None) -> str:
    return "-" if v is None else f"{v:.1f}"


def _grid(rows: list[list[str]], right_from: int = 1) -> str:
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for r in rows:
        cells = [s.rjust(w) if c >= right_from else s.ljust(w) for c, (s, w) in enumerate(zip(r, widths))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def build_matrices(records: Sequence[AttackRecord], models: Sequence[str],
                   devices: Sequence[str]) -> dict[str, dict[str, SuccessMatrix]]:
    out = {}
    for method in METHODS:
        if not any(r.method == method for r in records):
            continue
        out[method] = {"digital": matrix_from_records(records, method, models, (DIGITAL,))}
        present = [d for d in devices if any(r.method == method and r.device == d for r in records)]
        if present:
            out[method]["ota"] = matrix_from_records(records, method, models, present)
    return out


def render_digital(mats: dict[str, dict[str, SuccessMatrix]], models: Sequence[str]) -> str:
    """Surrogate (or left-out model) rows by victim columns, one block per method."""
    header = ["Attack", "S \\ V", *models]
    rows = [header]
    for method, pair in mats.items():
        m = pair["digital"]
        for k, row in enumerate(m.rows):
            rows.append([METHOD_TITLES[method] if k == 0 else "", row,
                         *[_fmt(m.cells.get((row, v, DIGITAL))) for v in models]])
    return _grid(rows, right_from=2)


def _split(device: str) -> tuple[str, str]:
    spk, mic = device.split("+")
    return spk.removeprefix("speaker_"), mic.removeprefix("mic_")


def render_ota(mats: dict[str, dict[str, SuccessMatrix]], models: Sequence[str], devices: Sequence[str]) -> str:
    """Method / surrogate / speaker rows by victim x mic columns."""
    speakers = list(dict.fromkeys(_split(d)[0] for d in devices))
    mics = list(dict.fromkeys(_split(d)[1] for d in devices))
    top = ["", "", "Victim"] + [v if j == 0 else "" for v in models for j in range(len(mics))]
    sub = ["Attack", "Surrogate", "Speaker \\ Mic"] + [mic for _ in models for mic in mics]
    rows = [top, sub]
    for method, pair in mats.items():
        if "ota" not in pair:
            continue
        m = pair["ota"]
        first = True
        for row in m.rows:
            for i, spk in enumerate(speakers):
                cells = []
                for v in models:
                    for mic in mics:
                        cells.append(_fmt(m.cells.get((row, v, f"speaker_{spk}+mic_{mic}"))))
                rows.append([METHOD_TITLES[method] if first else "", row if i == 0 else "", spk, *cells])
                first = False
    return _grid(rows, right_from=3)


def render_detection(doc: dict, devices: Sequence[str]) -> str:
    """EER (%) per device cell plus the pooled overall column."""
    cols = [f"{s}/{m}" for s, m in map(_split, devices)]
    rows = [["Row", "Spoof", "Train", *cols, "Overall"]]
    for row, r in doc["rows"].items():
        cells = [_fmt(r["cells"].get(d)) for d in devices]
        rows.append([row, r["spoof"], r["train"], *cells, _fmt(r["overall"])])
    return _grid(rows, right_from=3)


def write_report_files(out_dir: str | Path, models: Sequence[str], devices: Sequence[str]) -> dict[str, Path]:
    out_dir = Path(out_dir)
    records = read_records(out_dir / "records.jsonl")
    mats = build_matrices(records, models, devices)
    doc = {"schema": 1, "models": list(models), "devices": list(devices),
           "matrices": {k: {kind: m.to_dict() for kind, m in pair.items()} for k, pair in mats.items()}}
    paths = {"matrices": out_dir / MATRICES, "digital": out_dir / TABLE_DIGITAL, "ota": out_dir / TABLE_OTA}
    paths["matrices"].write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    paths["digital"].write_text(render_digital(mats, models))
    paths["ota"].write_text(render_ota(mats, models, devices))
    eer = out_dir / "detection" / "eer.json"
    if eer.exists():
        paths["detection"] = out_dir / TABLE_DETECTION
        paths["detection"].write_text(render_detection(json.loads(eer.read_text()), devices))
    return paths


def write_reports(camp, detection: dict | None = None) -> dict[str, Path]:
    return write_report_files(camp.out, camp.model_ids, camp.device_keys)


def load_matrices(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
