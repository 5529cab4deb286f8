"""Countermeasure evaluation over the campaign's audio.

Test rows (bonafide side is always clean digital speech):

====  =====================  ==========================  ===========
row   detector trained on    spoof samples               cells
====  =====================  ==========================  ===========
1     digital bonafide       OTA bonafide                devices
2a/b  digital bonafide       digital adversarial         one
3a/b  digital bonafide       OTA adversarial             devices
4a/b  OTA bonafide           same set as 3a/b            devices
====  =====================  ==========================  ===========

a = PGD, b = ensemble PGD. Every set is capped at ``max_per_cell`` samples
drawn with seeds derived from the master seed.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..audio import Waveform, read_wav, write_wav
from ..detector.model import (
    BONAFIDE,
    BONAFIDE_DIGITAL,
    BONAFIDE_OTA,
    SPOOF,
    DetectorConfig,
    DetectorModel,
    detection_eer,
    extract,
    train_detector,
    write_score_file,
)
from ..errors import InsufficientDataError
from ..synth import CorpusConfig, make_corpus
from .manifest import derive_seed, digital_path, ota_path
from .records import ENSEMBLE, PGD

DETECTION_DIR = "detection"
ROW_SUFFIX = {PGD: "a", ENSEMBLE: "b"}
OTA_BONAFIDE_DIR = "audio/ota_bonafide"


def _cap(items: list, n: int, seed: int) -> list:
    """At most ``n`` items, chosen by ``seed``, in their original order."""
    if len(items) <= n:
        return list(items)
    pick = np.random.default_rng(seed).choice(len(items), n, replace=False)
    return [items[i] for i in sorted(pick)]


def _flat(utt: str) -> str:
    return utt.replace("/", "_").removesuffix(".wav")


def training_sets(camp) -> dict[str, list[Waveform]]:
    """Digital bonafide training speech and its OTA counterpart."""
    spec = camp.cfg.detection.train
    corpus = make_corpus(CorpusConfig(n_speakers=spec.n_speakers, utterances_per_speaker=spec.utterances_per_speaker,
                                      duration=spec.duration, seed=spec.seed, prefix=spec.prefix), offset=spec.offset)
    digital = [w for w, _ in corpus]
    devs = camp.devices
    ota = []
    for k, w in enumerate(digital):
        spk, mic = devs[k % len(devs)]
        ota.append(camp.ota_wave(w, derive_seed(camp.cfg.master_seed, "ota-train", w.id), spk, mic))
    return {BONAFIDE_DIGITAL: digital, BONAFIDE_OTA: ota}


class _Set:
    """Named waveforms with features extracted once."""

    def __init__(self, name: str, ids: list[str], waves: list[Waveform], cfg: DetectorConfig):
        self.name, self.ids, self.waves = name, ids, waves
        self.stats = extract(waves, cfg.features, cfg.workers) if waves else np.zeros((0, 0))


def evaluation_sets(camp, cfg: DetectorConfig) -> tuple[_Set, dict[str, dict[str, _Set]]]:
    """Bonafide test set and the spoof sets keyed by set name then cell."""
    master = camp.cfg.master_seed
    cap = camp.cfg.detection.max_per_cell
    out = camp.out
    bona_ids = _cap(sorted({t.test for t in camp.attacked}), cap, derive_seed(master, "det-bonafide"))
    bona = _Set("bonafide", bona_ids, [camp.audio(u) for u in bona_ids], cfg)

    spoof: dict[str, dict[str, _Set]] = {"ota-bonafide": {}}
    for (spk, mic), dev in zip(camp.devices, camp.device_keys):
        waves, ids = [], []
        for u in bona_ids:
            w = camp.ota_wave(camp.audio(u), derive_seed(master, "ota-bonafide", u, dev), spk, mic)
            rel = f"{OTA_BONAFIDE_DIR}/{dev}/{_flat(u)}.wav"
            write_wav(out / rel, w)
            waves.append(w)
            ids.append(rel)
        spoof["ota-bonafide"][dev] = _Set(dev, ids, waves, cfg)

    for method in camp.cfg.attack.methods:
        pool = [(slot, i) for slot in camp.model_ids for i in range(len(camp.attacked))
                if (out / digital_path(method, slot, i)).exists()]
        pick = _cap(pool, cap, derive_seed(master, "det-digital", method))
        ids = [digital_path(method, s, i) for s, i in pick]
        spoof[f"digital-{method}"] = {"digital": _Set("digital", ids, [read_wav(out / p) for p in ids], cfg)}
        cells = {}
        for (spk, mic), dev in zip(camp.devices, camp.device_keys):
            pick = _cap(pool, cap, derive_seed(master, "det-ota", method, dev))
            ids, waves = [], []
            for slot, i in pick:
                src = digital_path(method, slot, i)
                seed = derive_seed(camp.trial_seed(camp.attacked[i]), dev)
                waves.append(camp.ota_wave(read_wav(out / src), seed, spk, mic))
                ids.append(ota_path(method, slot, dev, i))
            cells[dev] = _Set(dev, ids, waves, cfg)
        spoof[f"ota-{method}"] = cells
    return bona, spoof


def _evaluate(det: DetectorModel, bona: _Set, cells: dict[str, _Set], row: str, score_dir: Path) -> dict:
    b = det.score_stats(bona.stats)
    ids, scores, labels = list(bona.ids), list(b), [BONAFIDE] * len(b)
    out, pooled = {}, []
    for key, s_set in cells.items():
        if not s_set.waves:
            continue
        s = det.score_stats(s_set.stats)
        out[key] = 100.0 * detection_eer(b, s)
        pooled.append(s)
        ids += s_set.ids
        scores += list(s)
        labels += [SPOOF] * len(s)
    if not pooled:
        raise InsufficientDataError(f"row {row}: no spoof samples")
    write_score_file(score_dir / f"row{row}.txt", ids, scores, labels)
    return {"cells": out, "overall": 100.0 * detection_eer(b, np.concatenate(pooled))}


def run_detection(camp, conditions: Sequence[str] = (BONAFIDE_DIGITAL, BONAFIDE_OTA)) -> dict:
    """Train the requested detectors and evaluate the table rows; EERs in percent.

    Results merge into ``detection/eer.json`` so the two training conditions
    can be run by separate invocations.
    """
    dcfg = camp.cfg.detection
    cfg = DetectorConfig(shrinkage=dcfg.shrinkage, codec_bits=dcfg.codec_bits, workers=camp.cfg.workers)
    ddir = camp.out / DETECTION_DIR
    ddir.mkdir(parents=True, exist_ok=True)
    train = training_sets(camp)
    bona, spoof = evaluation_sets(camp, cfg)

    inputs = {"bonafide": bona.ids}
    for name, cells in spoof.items():
        inputs[name] = sorted(i for s in cells.values() for i in s.ids)
    for name, ids in inputs.items():
        (ddir / "inputs").mkdir(exist_ok=True)
        (ddir / "inputs" / f"{name}.txt").write_text("".join(i + "\n" for i in ids))

    path = ddir / "eer.json"
    rows = json.loads(path.read_text())["rows"] if path.exists() else {}
    for cond in conditions:
        det = train_detector(train[cond], cfg, cond)
        det.save(ddir / f"detector_{cond}.json")
        plan = []
        if cond == BONAFIDE_DIGITAL:
            plan.append(("1", "ota-bonafide", None))
            for m in camp.cfg.attack.methods:
                plan.append(("2" + ROW_SUFFIX[m], f"digital-{m}", m))
                plan.append(("3" + ROW_SUFFIX[m], f"ota-{m}", m))
        else:
            for m in camp.cfg.attack.methods:
                plan.append(("4" + ROW_SUFFIX[m], f"ota-{m}", m))
        for row, set_name, method in plan:
            res = _evaluate(det, bona, spoof[set_name], row, ddir / "scores")
            rows[row] = {"train": cond, "spoof": set_name, "attack": method, **res}
    doc = {"rows": dict(sorted(rows.items())), "bonafide_test": len(bona.ids),
           "max_per_cell": dcfg.max_per_cell}
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return doc
