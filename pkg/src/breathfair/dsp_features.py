"""MFCC feature extraction: power spectrogram, mel filterbank, cepstra.

The chain is the common audio-analysis default: centered Hann frames over a
reflect-padded signal, a Slaney-scale area-normalized mel filterbank, dB
conversion with an absolute power floor and a top-dB clamp, then an
orthonormal DCT-II along the mel axis keeping the first n_mfcc rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.fft import dct


class DegenerateFilter(Exception):
    """A mel triangle is narrower than one FFT bin (n_mels too large)."""


@dataclass(frozen=True)
class DspConfig:
    frame_length: int = 2048
    hop_length: int = 512
    n_mels: int = 128
    n_mfcc: int = 40
    fmin: float = 0.0
    fmax: float | None = None  # defaults to sample_rate / 2
    amin: float = 1e-10
    top_db: float = 80.0

    def __post_init__(self):
        if not 0 < self.hop_length <= self.frame_length:
            raise ValueError("need 0 < hop_length <= frame_length")
        if self.n_mfcc > self.n_mels:
            raise ValueError("n_mfcc must not exceed n_mels")
        if self.amin <= 0:
            raise ValueError("amin must be positive")

    def resolved_fmax(self, sample_rate: int) -> float:
        fmax = sample_rate / 2 if self.fmax is None else self.fmax
        if not self.fmin < fmax <= sample_rate / 2:
            raise ValueError("need fmin < fmax <= sample_rate/2")
        return fmax


@dataclass(frozen=True)
class MfccMatrix:
    coefficients: np.ndarray  # (n_mfcc, n_frames)
    config: DspConfig
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.coefficients.shape[1]


def hann_window(length: int) -> np.ndarray:
    # periodic variant, as used for spectral analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def frame_count(n_samples: int, hop_length: int) -> int:
    return 1 + n_samples // hop_length


def power_spectrogram(samples: Sequence[float], cfg: DspConfig) -> np.ndarray:
    """|rFFT|^2 of centered Hann frames; shape (frame_length/2 + 1, n_frames).

    The signal is reflect-padded by frame_length/2 on each side, so frame t
    is centered on sample t * hop_length.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 1:
        raise ValueError("need at least one sample")
    pad = cfg.frame_length // 2
    mode = "reflect" if x.size > 1 else "edge"
    padded = np.pad(x, pad, mode=mode)
    n_frames = frame_count(x.size, cfg.hop_length)
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.frame_length)
    frames = frames[::cfg.hop_length][:n_frames]
    spec = np.abs(np.fft.rfft(frames * hann_window(cfg.frame_length), axis=1)) ** 2
    return spec.T


def hz_to_mel(freq) -> np.ndarray:
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(freq, dtype=float)
    mel = f * 3.0 / 200.0
    log_step = np.log(6.4) / 27.0
    high = f >= 1000.0
    if np.any(high):
        mel = np.where(high, 15.0 + np.log(np.maximum(f, 1e-30) / 1000.0) / log_step, mel)
    return mel


def mel_to_hz(mel) -> np.ndarray:
    m = np.asarray(mel, dtype=float)
    f = m * 200.0 / 3.0
    log_step = np.log(6.4) / 27.0
    return np.where(m >= 15.0, 1000.0 * np.exp(log_step * (m - 15.0)), f)


def mel_edge_frequencies(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """n_mels + 2 mel-equidistant edge frequencies in Hz."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(cfg: DspConfig, sample_rate: int, freqs: np.ndarray | None = None,
                   normalize: bool = True) -> np.ndarray:
    """Triangular Slaney-scale filters; shape (n_mels, len(freqs)).

    `freqs` defaults to the rFFT bin frequencies for cfg.frame_length. With
    `normalize`, each triangle is scaled by 2 / (f_upper - f_lower) so the
    filter integrates to about the same area; without it, each triangle
    peaks at 1 at its centre frequency.
    """
    fmax = cfg.resolved_fmax(sample_rate)
    if freqs is None:
        freqs = np.linspace(0.0, sample_rate / 2.0, cfg.frame_length // 2 + 1)
    edges = mel_edge_frequencies(cfg.n_mels, cfg.fmin, fmax)
    spans = edges[2:] - edges[:-2]
    if np.any(spans < sample_rate / cfg.frame_length):
        raise DegenerateFilter(
            f"n_mels={cfg.n_mels} gives triangles narrower than one FFT bin")
    fdiff = np.diff(edges)
    ramps = edges[:, None] - freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    if not np.all(weights.any(axis=1)):
        raise DegenerateFilter("some mel filter has no support on the FFT grid")
    if normalize:
        weights *= (2.0 / spans)[:, None]
    return weights


def mfcc(samples: Sequence[float], sample_rate: int, cfg: DspConfig) -> MfccMatrix:
    """40-by-frames cepstral matrix (or cfg.n_mfcc rows) of a signal.

    Mel energies are floored at cfg.amin before the 10*log10 conversion and
    clamped at max - top_db, then transformed by an orthonormal DCT-II over
    the mel axis.
    """
    spec = power_spectrogram(samples, cfg)
    fb = mel_filterbank(cfg, sample_rate)
    mel_power = fb @ spec
    db = 10.0 * np.log10(np.maximum(mel_power, cfg.amin))
    db = np.maximum(db, db.max() - cfg.top_db)
    coeffs = dct(db, type=2, axis=0, norm="ortho")[:cfg.n_mfcc]
    return MfccMatrix(coefficients=coeffs, config=replace(cfg), sample_rate=sample_rate)


def summarize(m: MfccMatrix) -> np.ndarray:
    """Collapse frames to one vector: per-coefficient mean."""
    if m.n_frames < 1:
        raise ValueError("need at least one frame")
    return m.coefficients.mean(axis=1)
