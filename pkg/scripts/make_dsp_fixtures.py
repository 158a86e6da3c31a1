#!/usr/bin/env python3
"""Regenerate tests/fixtures/mfcc_oracle.npz.

Freezes MFCC matrices for a bank of synthetic signals, computed by the
from-scratch reference below, which deliberately shares no code with the
package: full FFT instead of rFFT, per-bin loop-built triangle filters, and
an explicit DCT-II basis matrix. Both paths target the same published
definition (centered Hann frames over reflect padding, Slaney mel scale
with 2/span area normalization, 10*log10 with a 1e-10 floor and 80 dB
clamp, orthonormal DCT-II), so agreement to ~1e-4 relative Frobenius norm
pins the production implementation.

Inputs are stored alongside the expected matrices so tests need no shared
signal code. Run from the repo root.
"""

import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "mfcc_oracle.npz"

SR = 22050
N_FFT = 2048
HOP = 512
N_MELS = 128
N_MFCC = 40
AMIN = 1e-10
TOP_DB = 80.0


def _hz_to_mel(f: float) -> float:
    if f < 1000.0:
        return f * 3.0 / 200.0
    return 15.0 + math.log(f / 1000.0) / (math.log(6.4) / 27.0)


def _mel_to_hz(m: float) -> float:
    if m < 15.0:
        return m * 200.0 / 3.0
    return 1000.0 * math.exp((math.log(6.4) / 27.0) * (m - 15.0))


def reference_mfcc(x: np.ndarray) -> np.ndarray:
    pad = N_FFT // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = 1 + len(x) // HOP
    window = np.array([0.5 - 0.5 * math.cos(2.0 * math.pi * n / N_FFT)
                       for n in range(N_FFT)])
    spec = np.empty((N_FFT // 2 + 1, n_frames))
    for t in range(n_frames):
        frame = xp[t * HOP:t * HOP + N_FFT] * window
        full = np.fft.fft(frame)
        spec[:, t] = np.abs(full[:N_FFT // 2 + 1]) ** 2

    lo_mel = _hz_to_mel(0.0)
    hi_mel = _hz_to_mel(SR / 2.0)
    edges = [_mel_to_hz(lo_mel + (hi_mel - lo_mel) * i / (N_MELS + 1))
             for i in range(N_MELS + 2)]
    bin_freqs = [SR / 2.0 * k / (N_FFT // 2) for k in range(N_FFT // 2 + 1)]
    fb = np.zeros((N_MELS, N_FFT // 2 + 1))
    for m in range(N_MELS):
        f0, f1, f2 = edges[m], edges[m + 1], edges[m + 2]
        for k, f in enumerate(bin_freqs):
            if f0 < f < f2:
                up = (f - f0) / (f1 - f0)
                down = (f2 - f) / (f2 - f1)
                fb[m, k] = max(0.0, min(up, down))
        fb[m] *= 2.0 / (f2 - f0)

    mel = fb @ spec
    db = 10.0 * np.log10(np.maximum(mel, AMIN))
    db = np.maximum(db, db.max() - TOP_DB)

    basis = np.empty((N_MFCC, N_MELS))
    for k in range(N_MFCC):
        scale = math.sqrt(1.0 / N_MELS) if k == 0 else math.sqrt(2.0 / N_MELS)
        for n in range(N_MELS):
            basis[k, n] = scale * math.cos(math.pi * k * (2 * n + 1) / (2 * N_MELS))
    return basis @ db


def signal_bank() -> dict[str, np.ndarray]:
    n = SR  # one second each
    t = np.arange(n) / SR
    rng1 = np.random.default_rng(101)
    rng2 = np.random.default_rng(202)
    sweep = np.sin(2.0 * np.pi * (200.0 * t + 0.5 * (4000.0 - 200.0) / 1.0 * t * t))
    tones = sum(a * np.sin(2.0 * np.pi * f * t)
                for a, f in ((0.5, 330.0), (0.3, 1250.0), (0.2, 4100.0)))
    impulse = np.zeros(n)
    impulse[n // 3] = 1.0
    am = np.sin(2.0 * np.pi * 880.0 * t) * (0.6 + 0.4 * np.sin(2.0 * np.pi * 3.0 * t))
    return {
        "silence": np.zeros(n),
        "dc": np.full(n, 0.25),
        "sine440": np.sin(2.0 * np.pi * 440.0 * t),
        "sine1k": 0.8 * np.sin(2.0 * np.pi * 1000.0 * t),
        "sine3k7": 0.6 * np.sin(2.0 * np.pi * 3700.0 * t),
        "sweep": sweep,
        "noise_a": 0.5 * rng1.standard_normal(n),
        "noise_b": 0.1 * rng2.standard_normal(n),
        "tones": np.asarray(tones),
        "am_burst": am,
    }


def main() -> None:
    payload: dict[str, np.ndarray] = {}
    for name, x in signal_bank().items():
        payload[f"input_{name}"] = x
        payload[f"mfcc_{name}"] = reference_mfcc(x)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(OUT, **payload)
    print(f"wrote {OUT} ({len(signal_bank())} fixtures)")


if __name__ == "__main__":
    main()
