"""End-to-end acceptance checks on the shipped toy campaign.

Every criterion prints one ``PASS``/``FAIL`` line (run with ``-s`` to see them,
or read ``test_output.txt``). The campaign itself runs once per session in a
temporary workspace; a second workspace is interrupted part-way and resumed,
and its outputs are compared byte-for-byte with the first.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from asvattack.asv.metrics import eer_from_scores
from asvattack.asv.model import cosine_objective, embed, load_model
from asvattack.attack.pgd import AttackConfig, pgd_attack_batch
from asvattack.audio import read_wav
from asvattack.campaign.manifest import build_manifest
from asvattack.campaign.runner import CampaignInterrupted, run_campaign
from asvattack.config import load_config
from asvattack.toy import ARCHS, data_dir, init_workspace
from asvattack.trials import IMPOSTOR, read_trial_list
from oracles import brute_force_eer

pytestmark = pytest.mark.acceptance

MODELS = list(ARCHS)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


@pytest.fixture(scope="session")
def campaign(tmp_path_factory):
    cfg = load_config(init_workspace(tmp_path_factory.mktemp("toy-a")))
    t0 = time.perf_counter()
    summary = run_campaign(cfg)
    summary["seconds"] = time.perf_counter() - t0
    return cfg, summary


@pytest.fixture(scope="session")
def matrices(campaign):
    return json.loads((campaign[0].output_dir / "matrices.json").read_text())


def cells(matrices, method, device="digital"):
    part = matrices["matrices"][method]["digital" if device == "digital" else "ota"]
    return {(c["row"], c["victim"]): c["success_rate"] for c in part["cells"] if c["device"] == device}


def test_campaign_ran_clean(campaign):
    cfg, summary = campaign
    trials = read_trial_list(cfg.output_dir / "trials_subset.txt")
    n_imp = sum(t.label == IMPOSTOR for t in trials)
    ok = summary["failures"] == 0 and n_imp >= 200
    report("toy campaign", ok, f"{summary['records']} records, {summary['failures']} failures, "
           f"{n_imp} attacked impostor trials, {summary['seconds']:.0f} s")
    assert ok


def test_white_box_potency(campaign, matrices):
    cfg, _ = campaign
    out = cfg.output_dir
    pgd = cells(matrices, "pgd")
    # default S=20: white-box cell dominates its row
    dominated = all(pgd[(s, s)] >= pgd[(s, v)] for s in MODELS for v in MODELS)
    # convergence mode: an independent run with the step count raised
    thresholds = json.loads((out / "thresholds.json").read_text())
    trials = [t for t in read_trial_list(out / "trials_subset.txt") if t.label == IMPOSTOR][:96]
    xs = [read_wav(out / "corpus" / t.test) for t in trials]
    enrolls = [read_wav(out / "corpus" / t.enroll) for t in trials]
    rates = {}
    for arch in MODELS:
        m = load_model(cfg.resolve(next(x.path for x in cfg.models if x.id == arch))).with_dtype(torch.float32)
        adv = pgd_attack_batch(m, xs, enrolls, AttackConfig(steps=60))
        e = np.stack([embed(m, w).vector for w, _ in adv])
        r = np.stack([embed(m, w).vector for w in enrolls])
        rates[arch] = 100.0 * np.mean(np.sum(e * r, 1) >= thresholds[arch])
    converged = min(rates.values()) >= 95.0
    report("white-box potency (S=60)", converged,
           ", ".join(f"{k} {v:.1f}%" for k, v in rates.items()) + " (need >= 95%)")
    report("white-box >= transfer (S=20)", dominated,
           ", ".join(f"{s} diag {pgd[(s, s)]:.1f} vs max transfer "
                     f"{max(pgd[(s, v)] for v in MODELS if v != s):.1f}" for s in MODELS))
    assert converged and dominated


def test_ensemble_transferability(matrices):
    pgd, ens = cells(matrices, "pgd"), cells(matrices, "ensemble_pgd")
    gaps = {}
    for v in MODELS:
        best = max(pgd[(s, v)] for s in MODELS if s != v)
        gaps[v] = ens[(f"w/o {v}", v)] - best
    ok = all(g >= 0 for g in gaps.values())
    report("ensemble >= best single transfer", ok, ", ".join(f"{v} {g:+.1f}" for v, g in gaps.items()))
    assert ok


def test_ensemble_gap(matrices):
    pgd, ens = cells(matrices, "pgd"), cells(matrices, "ensemble_pgd")
    gaps = {v: ens[(f"w/o {v}", v)] - max(pgd[(s, v)] for s in MODELS if s != v) for v in MODELS}
    ok = max(gaps.values()) >= 10.0
    report("ensemble gap >= 10 points on some victim", ok, f"largest gap {max(gaps.values()):.1f} points")
    assert ok


def test_budget_exactness(campaign):
    cfg, _ = campaign
    out = cfg.output_dir
    man = json.loads((out / "manifest.json").read_text())
    worst, bad = 0.0, 0
    for e in man["digital_entries"]:
        x = read_wav(out / "corpus" / e["test"]).samples
        adv = read_wav(out / e["path"]).samples
        d = float(np.max(np.abs(adv - x)))
        worst = max(worst, d)
        bad += d > cfg.attack.epsilon or np.max(np.abs(adv)) > 1.0
    ok = bad == 0
    report("budget exactness", ok, f"{len(man['digital_entries'])} samples, {bad} violations, "
           f"max |dx| {worst:.6f} <= {cfg.attack.epsilon}")
    assert ok


def test_gradient_correctness():
    from asvattack.synth import make_corpus
    from asvattack.toy import EVAL_CORPUS, EVAL_OFFSET

    corpus = make_corpus(EVAL_CORPUS, offset=EVAL_OFFSET)
    rels = {}
    for arch in MODELS:
        m = load_model(data_dir() / "models" / f"{arch}.asvm")
        x = np.array(corpus[1][0].samples)
        target = embed(m, corpus[42][0]).vector
        coords = np.random.default_rng(11).choice(x.size, 32, replace=False)
        _, g = cosine_objective(m, x[None], target[None])
        h = 1e-4
        plus = np.repeat(x[None], 32, 0)
        minus = plus.copy()
        plus[np.arange(32), coords] += h
        minus[np.arange(32), coords] -= h
        t = np.repeat(target[None], 32, 0)
        fd = (cosine_objective(m, plus, t, need_grad=False)[0]
              - cosine_objective(m, minus, t, need_grad=False)[0]) / (2 * h)
        rels[arch] = np.linalg.norm(g[0, coords] - fd) / np.linalg.norm(fd)
    ok = max(rels.values()) < 1e-3
    report("gradient vs finite differences", ok, ", ".join(f"{k} {v:.1e}" for k, v in rels.items()) + " (< 1e-3)")
    assert ok


def test_eer_oracle():
    rng = np.random.default_rng(99)
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(2, 1001))
        ng = int(rng.integers(1, n))
        s = np.clip(rng.normal(0, 0.35, n), -1, 1)
        if k % 3 == 0:
            s = np.round(s, 2)
        s[:ng] = np.clip(s[:ng] + rng.uniform(0, 0.8), -1, 1)
        eer, thr = eer_from_scores(s[:ng], s[ng:])
        ref_eer, ref_thr = brute_force_eer(s[:ng], s[ng:])
        worst = max(worst, abs(eer - ref_eer), abs(thr - ref_thr))
    ok = worst < 1e-9
    report("EER oracle", ok, f"100 sets, worst deviation {worst:.1e} (< 1e-9)")
    assert ok


def test_ota_not_above_digital(matrices):
    # pooled over the 9 devices, per (attack row, victim) pair
    over, worst = [], -100.0
    for method in ("pgd", "ensemble_pgd"):
        dig = cells(matrices, method)
        for key, d in dig.items():
            ota = [cells(matrices, method, dev)[key] for dev in matrices["devices"]]
            diff = float(np.mean(ota)) - d
            worst = max(worst, diff)
            if diff > 1e-9:
                over.append(f"{method} {key[0]}->{key[1]} {np.mean(ota):.2f} > {d:.2f}")
    ok = not over
    report("OTA <= digital (pooled per pair)", ok,
           f"worst OTA - digital {worst:+.2f} points" + ("; " + "; ".join(over) if over else ""))
    assert ok


def test_tier_ordering(matrices):
    def aggregate(dev):
        vals = [v for m in ("pgd", "ensemble_pgd") for v in cells(matrices, m, dev).values()]
        return float(np.mean(vals))

    hi, lo = aggregate("speaker_high+mic_ios"), aggregate("speaker_low+mic_android_low")
    ok = hi >= lo
    report("tier ordering", ok, f"(high, ios) {hi:.1f}% vs (low, android_low) {lo:.1f}%")
    assert ok


def test_manifest_accounting(campaign):
    m = build_manifest(4368, MODELS, ["pgd", "ensemble_pgd"], ["s_high", "s_medium", "s_low"],
                       ["m_ios", "m_android_high", "m_android_low"])
    full_ok = m.expected_total == len(m.entries) == 314496
    cfg, _ = campaign
    out = cfg.output_dir
    man = json.loads((out / "manifest.json").read_text())
    ota = sorted(p.relative_to(out).as_posix() for p in (out / "audio" / "ota").rglob("*.wav"))
    digital = sorted(p.relative_to(out).as_posix() for p in (out / "audio" / "digital").rglob("*.wav"))
    census_ok = (ota == sorted(e["path"] for e in man["entries"]) and len(ota) == man["expected_total"]
                 and digital == sorted(e["path"] for e in man["digital_entries"]))
    report("manifest accounting", full_ok and census_ok,
           f"4368-trial configuration -> {len(m.entries)} files; toy census {len(ota)} OTA + "
           f"{len(digital)} digital vs manifest {man['expected_total']}")
    assert full_ok and census_ok


def test_detection_asymmetry(campaign):
    rows = json.loads((campaign[0].output_dir / "detection" / "eer.json").read_text())["rows"]
    e = {k: v["overall"] for k, v in rows.items()}
    drops = {a: e[f"2{a}"] - e[f"3{a}"] for a in "ab"}
    asym = min(drops.values()) >= 15.0
    matched = all(e[f"4{a}"] > e[f"3{a}"] for a in "ab")
    report("detection asymmetry", asym, ", ".join(f"row2{a} {e['2' + a]:.1f} vs row3{a} {e['3' + a]:.1f}"
                                                   for a in "ab") + " (need >= 15 points)")
    report("matched OTA training raises EER", matched,
           ", ".join(f"row4{a} {e['4' + a]:.1f} vs row3{a} {e['3' + a]:.1f}" for a in "ab"))
    assert asym and matched


def test_determinism(campaign, tmp_path_factory):
    cfg_a, summary_a = campaign
    cfg_b = load_config(init_workspace(tmp_path_factory.mktemp("toy-b")))
    with pytest.raises(CampaignInterrupted):
        run_campaign(cfg_b, stop_after=summary_a["attacks"] // 3)
    run_campaign(cfg_b)
    names = ["manifest.json", "matrices.json", "detection/eer.json", "table_digital.txt", "table_ota.txt"]
    same = {n: (cfg_a.output_dir / n).read_bytes() == (cfg_b.output_dir / n).read_bytes() for n in names}
    ok = all(same.values())
    report("determinism (second run interrupted and resumed)", ok,
           ", ".join(f"{n} {'identical' if s else 'DIFFERS'}" for n, s in same.items()))
    assert ok
