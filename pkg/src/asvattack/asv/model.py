"""Embedder model abstraction, cosine scoring and input gradients."""
from __future__ import annotations

import hashlib
import json
import copy
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import torch
from torch import nn

from ..audio import DEFAULT_SAMPLE_RATE, Waveform
from ..errors import (
    DimensionMismatchError,
    InputTooShortError,
    ModelFormatError,
    NonDifferentiableModelError,
    NonFiniteGradientError,
    SampleRateMismatchError,
)
from .architectures import build_network

MAGIC = b"ASVEMBD\x00"
FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class SpeakerEmbedding:
    vector: np.ndarray
    model_id: str = ""

    def __post_init__(self):
        v = np.array(self.vector, dtype=np.float64, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dimension(self) -> int:
        return self.vector.size


class EmbedderModel:
    """Immutable wrapper around a torch network mapping waveforms to embeddings.

    Any ``nn.Module`` taking a ``(batch, samples)`` float tensor and returning
    ``(batch, dim)`` can be wrapped, which is how pretrained systems plug in.
    ``dtype`` is the compute precision; float32 roughly halves attack cost on
    CPU, float64 is what the gradient checks use.
    """

    def __init__(self, net: nn.Module, model_id: str, sample_rate: int = DEFAULT_SAMPLE_RATE,
                 metadata: dict | None = None, min_length: int | None = None,
                 differentiable: bool = True, dtype: torch.dtype = torch.float64):
        net = net.to(dtype).eval()
        for p in net.parameters():
            p.requires_grad_(False)
        with torch.no_grad():
            probe = net(torch.zeros(1, max(min_length or getattr(net, "min_length", 4000), 4000),
                                    dtype=dtype) + 1e-3)
        d = object.__setattr__
        d(self, "net", net)
        d(self, "model_id", model_id)
        d(self, "sample_rate", sample_rate)
        d(self, "metadata", dict(metadata or {}))
        d(self, "min_length", int(min_length if min_length is not None else getattr(net, "min_length", 1)))
        d(self, "embedding_dimension", int(probe.shape[-1]))
        d(self, "differentiable", differentiable)
        d(self, "dtype", dtype)
        d(self, "_fingerprint", None)

    def __setattr__(self, name, value):
        raise AttributeError("EmbedderModel is immutable")

    def __repr__(self):
        return f"EmbedderModel({self.model_id!r}, arch={self.metadata.get('arch')!r}, dim={self.embedding_dimension})"

    @property
    def arch(self) -> str:
        return self.metadata.get("arch", "custom")

    @property
    def fingerprint(self) -> str:
        if self._fingerprint is None:
            h = hashlib.sha256(str(self.dtype).encode())
            for name, t in self.net.state_dict().items():
                h.update(name.encode())
                h.update(t.detach().cpu().numpy().astype("<f8").tobytes())
            object.__setattr__(self, "_fingerprint", h.hexdigest())
        return self._fingerprint

    def with_dtype(self, dtype: torch.dtype) -> "EmbedderModel":
        """Copy of this model computing in ``dtype`` (same id and metadata)."""
        if dtype == self.dtype:
            return self
        return EmbedderModel(copy.deepcopy(self.net), self.model_id, self.sample_rate, self.metadata,
                             self.min_length, self.differentiable, dtype)

    def tensor(self, a: np.ndarray) -> torch.Tensor:
        return torch.tensor(np.asarray(a), dtype=self.dtype)

    def check_input(self, x: Waveform) -> None:
        if x.sample_rate != self.sample_rate:
            raise SampleRateMismatchError(
                f"{self.model_id} expects {self.sample_rate} Hz input, got {x.sample_rate} Hz")
        if len(x) < self.min_length:
            raise InputTooShortError(
                f"{self.model_id} needs at least {self.min_length} samples, got {len(x)}")

    def raw(self, batch: torch.Tensor) -> torch.Tensor:
        """Unnormalised network output for a ``(B, N)`` tensor."""
        return self.net(batch)


def _normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if not np.all(np.isfinite(v)) or np.any(norm == 0):
        raise NonFiniteGradientError("embedding is zero or non-finite; cosine is undefined")
    return v / norm


def embed(model: EmbedderModel, x: Waveform) -> SpeakerEmbedding:
    model.check_input(x)
    with torch.no_grad():
        out = model.raw(model.tensor(x.samples).unsqueeze(0))[0].double().numpy()
    return SpeakerEmbedding(_normalize(out), model.model_id)


def embed_batch(model: EmbedderModel, waves: list[Waveform], batch_size: int = 32) -> np.ndarray:
    """Unit-norm embeddings for many waveforms; groups equal lengths into batches."""
    out = np.empty((len(waves), model.embedding_dimension))
    by_len: dict[int, list[int]] = {}
    for i, w in enumerate(waves):
        model.check_input(w)
        by_len.setdefault(len(w), []).append(i)
    with torch.no_grad():
        for idx in by_len.values():
            for s in range(0, len(idx), batch_size):
                chunk = idx[s:s + batch_size]
                x = model.tensor(np.stack([waves[i].samples for i in chunk]))
                out[chunk] = model.raw(x).double().numpy()
    return _normalize(out)


def score(a: SpeakerEmbedding, b: SpeakerEmbedding) -> float:
    """Cosine similarity, exactly symmetric and clipped to [-1, 1]."""
    if a.dimension != b.dimension:
        raise DimensionMismatchError(f"embedding dimensions differ: {a.dimension} vs {b.dimension}")
    denom = np.linalg.norm(a.vector) * np.linalg.norm(b.vector)
    if denom == 0:
        raise DimensionMismatchError("cosine of a zero vector is undefined")
    return float(np.clip(np.dot(a.vector, b.vector) / denom, -1.0, 1.0))


Target = Union[Waveform, SpeakerEmbedding, np.ndarray]


def _target_vector(model: EmbedderModel, target: Target) -> np.ndarray:
    if isinstance(target, Waveform):
        return embed(model, target).vector
    vec = target.vector if isinstance(target, SpeakerEmbedding) else np.asarray(target, dtype=np.float64)
    if vec.shape != (model.embedding_dimension,):
        raise DimensionMismatchError(
            f"enrollment vector has shape {vec.shape}, model dimension is {model.embedding_dimension}")
    return vec


def cosine_objective(model: EmbedderModel, batch: np.ndarray, targets: np.ndarray,
                     need_grad: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Cosine between ``model(batch[i])`` and fixed ``targets[i]``, with input gradients.

    The enrollment side is a constant, so the gradient flows only through the
    test branch. Returns ``(J, dJ/dx)`` with shapes ``(B,)`` and ``(B, N)``.
    """
    if need_grad and not model.differentiable:
        raise NonDifferentiableModelError(f"{model.model_id} does not expose input gradients")
    x = model.tensor(batch)
    tgt = model.tensor(targets)
    if need_grad:
        x.requires_grad_(True)
    with torch.set_grad_enabled(need_grad):
        out = model.raw(x)
        j = (out * tgt).sum(-1) / (out.norm(dim=-1) * tgt.norm(dim=-1))
        if not torch.all(torch.isfinite(j)):
            raise NonFiniteGradientError(f"{model.model_id}: cosine objective is not finite")
        if not need_grad:
            return j.double().numpy(), None
        (grad,) = torch.autograd.grad(j.sum(), x)
    g = grad.double().numpy()
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(f"{model.model_id}: input gradient is not finite")
    return j.detach().double().numpy(), g


def input_gradient(model: EmbedderModel, x: Waveform, x_enroll: Target) -> np.ndarray:
    """Gradient of cos(embed(x), embed(x_enroll)) with respect to the samples of ``x``.

    ``x_enroll`` may be a waveform or a precomputed (not necessarily
    normalised) enrollment vector.
    """
    model.check_input(x)
    target = _target_vector(model, x_enroll)
    _, g = cosine_objective(model, x.samples[None, :], target[None, :])
    return g[0]


def save_model(model: EmbedderModel, path: str | Path) -> Path:
    """Write the model as ``MAGIC | version | header length | JSON header | float64 tensors``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors, index, offset = [], [], 0
    for name, t in model.net.state_dict().items():
        arr = t.detach().cpu().numpy().astype("<f8")
        tensors.append(arr.tobytes())
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": "<f8"})
        offset += arr.nbytes
    header = {
        "format": "asv-embedder",
        "model_id": model.model_id,
        "sample_rate": model.sample_rate,
        "embedding_dimension": model.embedding_dimension,
        "min_length": model.min_length,
        "metadata": model.metadata,
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for chunk in tensors:
            fh.write(chunk)
    return path


def read_model_header(path: str | Path) -> tuple[dict, bytes]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ModelFormatError(f"{path}: not an embedder container (bad magic)")
    version, hlen = struct.unpack_from("<HI", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported container version {version}")
    start = len(MAGIC) + struct.calcsize("<HI")
    header = json.loads(data[start:start + hlen])
    return header, data[start + hlen:]


def load_model(path: str | Path) -> EmbedderModel:
    header, payload = read_model_header(path)
    meta = header["metadata"]
    net = build_network(meta["arch"], header["embedding_dimension"], **meta.get("net_kwargs", {}))
    state = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(payload, dtype=entry["dtype"], count=count, offset=entry["offset"])
        state[entry["name"]] = torch.from_numpy(arr.reshape(entry["shape"]).copy())
    net.load_state_dict(state)
    return EmbedderModel(net, header["model_id"], header["sample_rate"], meta, header["min_length"])
