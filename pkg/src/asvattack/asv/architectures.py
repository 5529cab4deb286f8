"""Small differentiable speaker-embedding networks.

Four deliberately different designs stand in for the large victim systems:
a TDNN over log-mel frames (``xvec``), a squeeze-excite TDNN with attentive
statistics pooling (``ecapa``), a 2-D residual CNN over a log spectrogram
(``resnet``) and a learned complex waveform filterbank (``rawnet``). All activations
are smooth so input gradients can be checked by finite differences.
"""
from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

N_FFT = 512
WIN = 400
HOP = 160


def mel_filterbank(n_mels: int, n_fft: int = N_FFT, sample_rate: int = 16000,
                   fmin: float = 20.0, fmax: float = 7600.0) -> np.ndarray:
    freqs = np.linspace(0, sample_rate / 2, n_fft // 2 + 1)
    to_mel = lambda hz: 2595.0 * np.log10(1.0 + hz / 700.0)
    from_mel = lambda m: 700.0 * (10 ** (m / 2595.0) - 1.0)
    edges = from_mel(np.linspace(to_mel(fmin), to_mel(fmax), n_mels + 2))
    fb = np.zeros((n_mels, freqs.size))
    for i in range(n_mels):
        lo, mid, hi = edges[i:i + 3]
        fb[i] = np.clip(np.minimum((freqs - lo) / (mid - lo), (hi - freqs) / (hi - mid)), 0.0, None)
    return fb


class _PowerSpectrogram(torch.autograd.Function):
    """|rfft(window * frame)|^2 over non-centred frames, with a hand-written backward.

    Autograd through ``torch.stft`` costs about ten forward passes on CPU; the
    closed form is one inverse real FFT plus an overlap-add.
    """

    @staticmethod
    def forward(ctx, x, window):
        spec = torch.fft.rfft(x.unfold(-1, WIN, HOP) * window, n=N_FFT)
        ctx.save_for_backward(spec, window)
        ctx.length = x.shape[-1]
        return spec.real ** 2 + spec.imag ** 2

    @staticmethod
    def backward(ctx, grad):
        spec, window = ctx.saved_tensors
        # dL/dframe[n] = 2 * Re(sum_k grad_k * X_k * e^{+2 pi i k n / N}), k over the one-sided bins
        a = grad * spec
        a = torch.cat([a[..., :1].real.to(a.dtype), a[..., 1:-1] / 2, a[..., -1:].real.to(a.dtype)], dim=-1)
        g_frames = 2 * N_FFT * torch.fft.irfft(a, n=N_FFT)[..., :WIN] * window
        b, t, _ = g_frames.shape
        per_frame = -(-WIN // HOP)
        chunks = F.pad(g_frames, (0, per_frame * HOP - WIN)).reshape(b, t, per_frame, HOP)
        out = g_frames.new_zeros(b, max(ctx.length, (t + per_frame - 1) * HOP))
        for j in range(per_frame):
            out[:, j * HOP:(j + t) * HOP] += chunks[:, :, j, :].reshape(b, t * HOP)
        return out[:, :ctx.length], None


def power_spectrogram(x: torch.Tensor, window: torch.Tensor) -> torch.Tensor:
    """(B, N) -> (B, bins, frames) power spectrum, 25 ms Hann frames every 10 ms."""
    return _PowerSpectrogram.apply(x, window).transpose(1, 2)


def n_frames(length: int) -> int:
    return 1 + (length - WIN) // HOP


def min_samples(frames: int) -> int:
    return WIN + (frames - 1) * HOP


def stats_pool(h: torch.Tensor) -> torch.Tensor:
    mu = h.mean(-1)
    sd = torch.sqrt(((h - mu.unsqueeze(-1)) ** 2).mean(-1) + 1e-5)
    return torch.cat([mu, sd], dim=-1)


class LogMel(nn.Module):
    def __init__(self, n_mels: int, sample_rate: int = 16000):
        super().__init__()
        self.register_buffer("fb", torch.tensor(mel_filterbank(n_mels, sample_rate=sample_rate)))
        self.register_buffer("window", torch.hann_window(WIN, dtype=torch.float64))

    def forward(self, x):
        m = torch.log(torch.matmul(self.fb, power_spectrogram(x, self.window)) + 1e-6)
        return m - m.mean(-1, keepdim=True)


class XVecNet(nn.Module):
    arch = "xvec"

    def __init__(self, embedding_dim: int = 32, channels: int = 48, n_mels: int = 30):
        super().__init__()
        self.front = LogMel(n_mels)
        self.tdnn = nn.ModuleList([
            nn.Conv1d(n_mels, channels, 5),
            nn.Conv1d(channels, channels, 3, dilation=2),
            nn.Conv1d(channels, channels, 3, dilation=3),
            nn.Conv1d(channels, channels, 1),
        ])
        self.out = nn.Linear(2 * channels, embedding_dim)
        self.min_length = min_samples(15)

    def forward(self, x):
        h = self.front(x)
        for conv in self.tdnn:
            h = F.silu(conv(h))
        return self.out(stats_pool(h))


class EcapaNet(nn.Module):
    arch = "ecapa"

    def __init__(self, embedding_dim: int = 32, channels: int = 48, n_mels: int = 40):
        super().__init__()
        self.front = LogMel(n_mels)
        self.inp = nn.Conv1d(n_mels, channels, 5, padding=2)
        self.block = nn.Conv1d(channels, channels, 3, dilation=2, padding=2)
        self.se_down = nn.Linear(channels, channels // 4)
        self.se_up = nn.Linear(channels // 4, channels)
        self.att_hidden = nn.Conv1d(channels, 16, 1)
        self.att_out = nn.Conv1d(16, 1, 1)
        self.out = nn.Linear(2 * channels, embedding_dim)
        self.min_length = min_samples(4)

    def forward(self, x):
        h = F.silu(self.inp(self.front(x)))
        r = F.silu(self.block(h))
        gate = torch.sigmoid(self.se_up(F.silu(self.se_down(r.mean(-1)))))
        h = h + r * gate.unsqueeze(-1)
        w = torch.softmax(self.att_out(torch.tanh(self.att_hidden(h))), dim=-1)
        mu = (h * w).sum(-1)
        sd = torch.sqrt(((h - mu.unsqueeze(-1)) ** 2 * w).sum(-1) + 1e-5)
        return self.out(torch.cat([mu, sd], dim=-1))


class ResNetNet(nn.Module):
    arch = "resnet"

    def __init__(self, embedding_dim: int = 32, channels: int = 8, n_bands: int = 64):
        super().__init__()
        self.n_bands = n_bands
        self.register_buffer("window", torch.hann_window(WIN, dtype=torch.float64))
        self.stem = nn.Conv2d(1, channels, 3, stride=2, padding=1)
        self.res_a = nn.Conv2d(channels, channels, 3, padding=1)
        self.res_b = nn.Conv2d(channels, channels, 3, padding=1)
        self.down = nn.Conv2d(channels, 2 * channels, 3, stride=2, padding=1)
        self.out = nn.Linear(2 * channels * (n_bands // 4), embedding_dim)
        self.min_length = min_samples(8)

    def forward(self, x):
        p = power_spectrogram(x, self.window)[:, 1:257]
        b, bins, t = p.shape
        p = p.reshape(b, self.n_bands, bins // self.n_bands, t).mean(2)
        s = torch.log(p + 1e-6)
        s = (s - s.mean(-1, keepdim=True)).unsqueeze(1)
        h = F.silu(self.stem(s))
        h = h + self.res_b(F.silu(self.res_a(h)))
        h = F.silu(self.down(F.silu(h)))
        return self.out(h.mean(-1).flatten(1))


def gabor_bank(n_filters: int, kernel: int, sample_rate: int = 16000) -> np.ndarray:
    """Cosine and sine Gabor filters at mel-spaced centres, shape (2 * n_filters, kernel)."""
    to_mel = lambda hz: 2595.0 * np.log10(1.0 + hz / 700.0)
    from_mel = lambda m: 700.0 * (10 ** (m / 2595.0) - 1.0)
    edges = from_mel(np.linspace(to_mel(60.0), to_mel(7800.0), n_filters + 2))
    t = (np.arange(kernel) - (kernel - 1) / 2) / sample_rate
    bank = []
    for lo, fc, hi in zip(edges[:-2], edges[1:-1], edges[2:]):
        # envelope width follows the band; capped so the filter fits in the kernel
        sigma = min(1.0 / (np.pi * (hi - lo)), (kernel - 1) / (6 * sample_rate))
        env = np.exp(-0.5 * (t / sigma) ** 2)
        for carrier in (np.cos, np.sin):
            h = env * carrier(2 * np.pi * fc * t)
            bank.append(h / np.linalg.norm(env))
    return np.stack(bank)


class RawNetNet(nn.Module):
    """Learned complex filterbank on the raw waveform, energy envelopes, TDNN."""

    arch = "rawnet"

    def __init__(self, embedding_dim: int = 32, channels: int = 48, n_filters: int = 32,
                 kernel: int = 161, stride: int = 16):
        super().__init__()
        self.filters = nn.Conv1d(1, 2 * n_filters, kernel, stride=stride, bias=False)
        with torch.no_grad():
            self.filters.weight.copy_(torch.tensor(gabor_bank(n_filters, kernel)).unsqueeze(1))
        self.pool = HOP // stride
        self.conv1 = nn.Conv1d(n_filters, channels, 3)
        self.conv2 = nn.Conv1d(channels, channels, 3, dilation=2)
        self.out = nn.Linear(2 * channels, embedding_dim)
        self.min_length = kernel + 10 * HOP

    def forward(self, x):
        y = self.filters(x.unsqueeze(1))
        y = y.reshape(y.shape[0], -1, 2, y.shape[-1])
        e = F.avg_pool1d((y ** 2).sum(2), self.pool, self.pool)
        e = torch.log(e + 1e-6)
        e = e - e.mean(-1, keepdim=True)
        h = F.silu(self.conv1(e))
        h = F.silu(self.conv2(h))
        return self.out(stats_pool(h))


ARCHITECTURES = {cls.arch: cls for cls in (XVecNet, EcapaNet, ResNetNet, RawNetNet)}


def build_network(arch: str, embedding_dim: int = 32, **kwargs) -> nn.Module:
    try:
        cls = ARCHITECTURES[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}") from None
    return cls(embedding_dim=embedding_dim, **kwargs).double()


def count_parameters(net: nn.Module) -> int:
    return sum(math.prod(p.shape) for p in net.parameters())
