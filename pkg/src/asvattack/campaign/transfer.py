"""In-memory transfer matrices (no files), sharing the crafting step with the runner."""
from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from ..asv.metrics import decision_threshold
from ..asv.model import EmbedderModel, embed_batch
from ..attack.pgd import AttackConfig, ensemble_pgd_attack_batch, pgd_attack_batch
from ..audio import Waveform, quantize_pcm16, quantize_toward
from ..channel import RoomSetup, apply_channel
from ..channel.presets import DevicePreset
from ..trials import IMPOSTOR, TrialPair
from .manifest import derive_seed, surrogates_for
from .records import DIGITAL, PGD, AttackRecord, SuccessMatrix, matrix_from_records, row_label


def craft(method: str, surrogates: Sequence[EmbedderModel], xs: Sequence[Waveform],
          enrolls: Sequence[Waveform], cfg: AttackConfig, thresholds: Mapping[str, float]) -> list[Waveform]:
    """Adversarial versions of ``xs``, already on the 16-bit PCM grid.

    Inputs of unequal length are attacked in per-length batches. Rounding goes
    towards the clean sample, so the L-inf budget holds after storage.
    """
    adv: list[Waveform | None] = [None] * len(xs)
    groups: dict[int, list[int]] = {}
    for k, x in enumerate(xs):
        groups.setdefault(len(x), []).append(k)
    for ks in groups.values():
        gx, ge = [xs[k] for k in ks], [enrolls[k] for k in ks]
        if method == PGD:
            m = surrogates[0]
            out = pgd_attack_batch(m, gx, ge, cfg, thresholds.get(m.model_id))
        else:
            out = ensemble_pgd_attack_batch(surrogates, gx, ge, cfg, thresholds)
        for k, (w, _trace) in zip(ks, out):
            adv[k] = w.with_samples(quantize_toward(w.samples, xs[k].samples))
    return adv


def replay(x: Waveform, speaker: DevicePreset, room: RoomSetup, mic: DevicePreset, seed: int) -> Waveform:
    """One pass through the simulated channel, stored as 16-bit PCM."""
    y = apply_channel(x, speaker, room, mic, seed=seed)
    return y.with_samples(quantize_pcm16(y.samples))


def cosine_scores(model: EmbedderModel, waves: Sequence[Waveform], enrolls: Sequence[Waveform]) -> np.ndarray:
    a = embed_batch(model, list(waves))
    b = embed_batch(model, list(enrolls))
    return np.clip(np.sum(a * b, axis=1), -1.0, 1.0)


def transfer_matrix(models: Sequence[EmbedderModel], method: str, trials: Sequence[TrialPair],
                    audio: Mapping[str, Waveform] | Callable[[str], Waveform],
                    cfg: AttackConfig = AttackConfig(), thresholds: Mapping[str, float] | None = None,
                    channel: tuple[Sequence[DevicePreset], Sequence[DevicePreset], RoomSetup] | None = None,
                    master_seed: int = 0) -> tuple[SuccessMatrix, list[AttackRecord]]:
    """Attack the impostor trials from every slot and score every victim.

    PGD gives one row per surrogate; ensemble PGD one leave-one-out row per
    model. ``channel = (speakers, mics, room)`` replays every sample over the
    device grid and the matrix columns become (victim, device). Thresholds
    default to each model's EER threshold on ``trials``.
    """
    get = audio if callable(audio) else audio.__getitem__
    ids = [m.model_id for m in models]
    by_id = dict(zip(ids, models))
    if thresholds is None:
        thresholds = {m.model_id: decision_threshold(m, trials, get) for m in models}
    attacked = [t for t in trials if t.label == IMPOSTOR]
    xs = [get(t.test) for t in attacked]
    enrolls = [get(t.enroll) for t in attacked]
    seeds = [derive_seed(master_seed, t.key) for t in attacked]
    pre = {v: cosine_scores(by_id[v], xs, enrolls) for v in ids}
    devices = [] if channel is None else [(s, m) for s in channel[0] for m in channel[1]]
    records = []
    for slot in ids:
        surr = surrogates_for(method, slot, ids)
        if not surr:
            continue
        adv = craft(method, [by_id[s] for s in surr], xs, enrolls, cfg, thresholds)
        row = row_label(method, surr, ids)
        variants = [(DIGITAL, adv, seeds)] if channel is None else []
        for spk, mic in devices:
            dev = f"{spk.id}+{mic.id}"
            dseeds = [derive_seed(s, dev) for s in seeds]
            variants.append((dev, [replay(w, spk, channel[2], mic, s) for w, s in zip(adv, dseeds)], dseeds))
        for dev, waves, dseeds in variants:
            for v in ids:
                post = cosine_scores(by_id[v], waves, enrolls)
                thr = thresholds[v]
                for k, t in enumerate(attacked):
                    records.append(AttackRecord(t.key, method, surr, v, dev, float(pre[v][k]), float(post[k]),
                                                thr, bool(post[k] >= thr), dseeds[k], row=row))
    devs = [DIGITAL] if channel is None else [f"{s.id}+{m.id}" for s, m in devices]
    return matrix_from_records(records, method, ids, devs), records
