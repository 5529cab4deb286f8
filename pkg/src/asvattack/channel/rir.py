"""Shoebox-room impulse responses by the image-source method.

Every image source contributes one integer-delay tap of amplitude
beta^reflections / (4 pi r), with beta = sqrt(1 - absorption) the pressure
reflection coefficient shared by all six walls.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..audio import read_wav
from ..errors import DegenerateImpulseResponseError, PositionOutsideRoomError

SPEED_OF_SOUND = 343.0
DEFAULT_ROOM = (4.0, 3.5, 2.8)


def direct_delay(distance: float, sample_rate: int = 16000, c: float = SPEED_OF_SOUND) -> int:
    return int(round(distance / c * sample_rate))


def _inside(p, dims) -> bool:
    return all(0.0 < x < d for x, d in zip(p, dims))


def generate_rir(room_dims, source_pos, mic_pos, absorption: float, seed: int | None = None,
                 sample_rate: int = 16000, length: float = 0.08, normalize: bool = True,
                 max_order: int | None = None) -> np.ndarray:
    """Impulse response from ``source_pos`` to ``mic_pos`` in a shoebox room.

    ``absorption`` is the wall energy absorption in (0, 1]; 1 gives the free
    field (direct path only). With ``normalize`` the response has unit energy,
    otherwise taps keep their physical 1/(4 pi r) scale. ``seed`` adds a
    sub-millimetre jitter to the image positions so that different seeds give
    different (but statistically identical) late reflections.
    """
    dims = np.asarray(room_dims, dtype=np.float64)
    src = np.asarray(source_pos, dtype=np.float64)
    mic = np.asarray(mic_pos, dtype=np.float64)
    if dims.shape != (3,) or np.any(dims <= 0):
        raise ValueError(f"room dimensions must be three positive lengths, got {room_dims}")
    if not _inside(src, dims) or not _inside(mic, dims):
        raise PositionOutsideRoomError(f"source {tuple(src)} and mic {tuple(mic)} must lie inside room {tuple(dims)}")
    if not 0.0 < absorption <= 1.0:
        raise ValueError(f"absorption must be in (0, 1], got {absorption}")
    n_taps = max(int(round(length * sample_rate)), direct_delay(np.linalg.norm(src - mic), sample_rate) + 1)
    beta = math.sqrt(1.0 - absorption)
    if max_order is None:
        max_order = 0 if beta == 0.0 else int(math.ceil(length * SPEED_OF_SOUND / dims.min())) + 1

    n = np.arange(-max_order, max_order + 1)
    h = np.zeros(n_taps)
    rng = np.random.default_rng(seed) if seed is not None else None
    for px, py, pz in np.ndindex(2, 2, 2):
        p = np.array([px, py, pz])
        grid = np.stack(np.meshgrid(n, n, n, indexing="ij"), -1).reshape(-1, 3)
        img = (1 - 2 * p) * src + 2 * grid * dims
        refl = np.abs(grid - p).sum(1) + np.abs(grid).sum(1)
        if beta == 0.0:
            keep = refl == 0
            img, refl = img[keep], refl[keep]
        if rng is not None:
            # leave the direct path exact
            img = img + (refl > 0)[:, None] * rng.uniform(-5e-4, 5e-4, img.shape)
        dist = np.linalg.norm(img - mic, axis=1)
        delay = np.round(dist / SPEED_OF_SOUND * sample_rate).astype(int)
        ok = delay < n_taps
        amp = beta ** refl[ok] / (4 * np.pi * dist[ok])
        np.add.at(h, delay[ok], amp)
    if normalize:
        h = h / np.sqrt(np.sum(h ** 2))
    return h


@dataclass(frozen=True, eq=False)
class RoomSetup:
    """Replay geometry plus the impulse response used for it."""

    impulse_response: np.ndarray
    distance_m: float = 0.3
    angle_deg: float = 90.0
    seed: int = 0

    def __post_init__(self):
        h = np.array(self.impulse_response, dtype=np.float64, copy=True).ravel()
        energy = float(np.sum(h ** 2)) if h.size else 0.0
        if h.size == 0 or not np.isfinite(energy) or energy == 0.0:
            raise DegenerateImpulseResponseError("impulse response must have finite, nonzero energy")
        h.setflags(write=False)
        object.__setattr__(self, "impulse_response", h)

    @classmethod
    def simulated(cls, distance_m: float = 0.3, angle_deg: float = 90.0, room_dims=DEFAULT_ROOM,
                  absorption: float = 0.7, seed: int = 0, sample_rate: int = 16000,
                  length: float = 0.08) -> "RoomSetup":
        """Source ``distance_m`` from the mic at ``angle_deg`` in the horizontal plane.

        The mic sits off-centre at 1.2 m height; the default absorption is a
        heavily treated room.
        """
        mic = np.array([room_dims[0] * 0.45, room_dims[1] * 0.4, 1.2])
        a = math.radians(angle_deg)
        src = mic + distance_m * np.array([math.cos(a), math.sin(a), 0.0])
        h = generate_rir(room_dims, src, mic, absorption, seed=seed, sample_rate=sample_rate, length=length)
        return cls(h, distance_m, angle_deg, seed)

    @classmethod
    def identity(cls) -> "RoomSetup":
        return cls(np.array([1.0]), 0.0, 0.0, 0)

    @classmethod
    def from_wav(cls, path: str | Path, distance_m: float = 0.3, angle_deg: float = 90.0) -> "RoomSetup":
        """Use a measured mono impulse response stored as 16-bit WAV."""
        return cls(read_wav(path).samples, distance_m, angle_deg, 0)
