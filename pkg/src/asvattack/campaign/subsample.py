"""Speaker-stratified subsampling of a trial list."""
from __future__ import annotations

import hashlib
import math
from typing import Sequence

import numpy as np

from ..errors import EmptyInputError
from ..trials import GENUINE, TrialPair


def largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Integers proportional to ``weights`` summing to ``total`` (Hamilton's method).

    Ties in the remainders go to the earlier index.
    """
    w = np.asarray(weights, dtype=np.float64)
    if total == 0 or w.sum() == 0:
        return [0] * len(w)
    quota = w * total / w.sum()
    base = np.floor(quota).astype(int)
    short = total - int(base.sum())
    order = sorted(range(len(w)), key=lambda i: (-(quota[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base.tolist()


def _seed(seed: int, stratum: str) -> int:
    return int.from_bytes(hashlib.sha256(f"{seed}:{stratum}".encode()).digest()[:8], "little")


def subsample_trials(trials: Sequence[TrialPair], fraction: float = 0.25, seed: int = 0) -> list[TrialPair]:
    """Keep ``fraction`` of the trials with the same per-speaker distribution.

    The kept total is ``round(fraction * len(trials))``, split over enrollment
    speakers by largest remainder, then within each speaker over genuine and
    impostor trials the same way. Output preserves the input order.
    """
    if not trials:
        raise EmptyInputError("cannot subsample an empty trial list")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(trials)
    strata: dict[str, list[int]] = {}
    for i, t in enumerate(trials):
        strata.setdefault(t.enroll_speaker or "", []).append(i)
    speakers = sorted(strata)
    total = int(math.floor(fraction * len(trials) + 0.5))
    per_speaker = largest_remainder([len(strata[s]) for s in speakers], total)
    keep: list[int] = []
    for spk, k in zip(speakers, per_speaker):
        idx = strata[spk]
        gen = [i for i in idx if trials[i].label == GENUINE]
        imp = [i for i in idx if trials[i].label != GENUINE]
        k_gen, k_imp = largest_remainder([len(gen), len(imp)], k)
        rng = np.random.default_rng(_seed(seed, spk))
        for pool, k_pool in ((gen, k_gen), (imp, k_imp)):
            if k_pool:
                keep.extend(int(pool[j]) for j in rng.choice(len(pool), k_pool, replace=False))
    return [trials[i] for i in sorted(keep)]
