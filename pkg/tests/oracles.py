"""Independent reference computations used by the tests.

Nothing here imports the code under test; each routine is the slow, obvious
version of the thing being checked.
"""
from __future__ import annotations

import math

import numpy as np


def brute_force_eer(genuine, impostor):
    """EER by enumerating every threshold, rule "accept iff score >= t".

    Candidate thresholds are the distinct scores plus one above the maximum.
    Between two consecutive candidates the error rates are interpolated
    linearly and the crossing of FRR and FAR is returned.
    """
    gen, imp = list(map(float, genuine)), list(map(float, impostor))
    cands = sorted(set(gen) | set(imp))
    cands.append(math.nextafter(cands[-1], math.inf))
    pts = []
    for t in cands:
        frr = sum(1 for s in gen if s < t) / len(gen)
        far = sum(1 for s in imp if s >= t) / len(imp)
        pts.append((t, frr, far))
    for (t0, frr0, far0), (t1, frr1, far1) in zip(pts, pts[1:]):
        d0, d1 = frr0 - far0, frr1 - far1
        if d0 == 0:
            return far0, t0
        if d0 < 0 <= d1:
            if d1 == 0:
                return far1, t1
            w = -d0 / (d1 - d0)
            return far0 + w * (far1 - far0), t0 + w * (t1 - t0)
    t, frr, far = pts[-1]
    return far, t


def direct_convolution(x, h):
    """Full linear convolution as an explicit double sum."""
    x, h = np.asarray(x, float), np.asarray(h, float)
    y = np.zeros(x.size + h.size - 1)
    for k, hk in enumerate(h):
        if hk != 0.0:
            y[k:k + x.size] += hk * x
    return y


def clamp_each(x_adv, x_orig, eps):
    """Per-sample clamp into [x0 - eps, x0 + eps] and then [-1, 1]."""
    out = []
    for a, o in zip(x_adv, x_orig):
        lo, hi = max(o - eps, -1.0), min(o + eps, 1.0)
        out.append(min(max(a, lo), hi))
    return np.array(out)


def cosine(a, b):
    a, b = list(map(float, a)), list(map(float, b))
    dot = sum(p * q for p, q in zip(a, b))
    na = math.sqrt(sum(p * p for p in a))
    nb = math.sqrt(sum(q * q for q in b))
    return dot / (na * nb)


def count_by(items, key):
    out = {}
    for it in items:
        k = key(it)
        out[k] = out.get(k, 0) + 1
    return out


def thd(signal, sample_rate, f0, harmonics=8):
    """Total harmonic distortion from DFT bins at k * f0 (integer bins assumed)."""
    spec = np.abs(np.fft.rfft(signal * np.hanning(signal.size)))
    bin_of = lambda f: int(round(f * signal.size / sample_rate))
    fund = spec[bin_of(f0)]
    power = sum(spec[bin_of(k * f0)] ** 2 for k in range(2, harmonics + 1) if k * f0 < sample_rate / 2)
    return math.sqrt(power) / fund


def dominant_frequency(signal, sample_rate):
    spec = np.abs(np.fft.rfft(signal))
    return int(np.argmax(spec)) * sample_rate / signal.size
