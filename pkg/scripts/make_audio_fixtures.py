#!/usr/bin/env python3
"""Regenerate the checked-in audio fixtures.

- tests/fixtures/sine440_48k.wav: one second of a full-scale 440 Hz sine at
  48 kHz, written as 32-bit float WAV by the struct-based writer below (kept
  independent of the package's own codec on purpose).
- tests/fixtures/resample_oracle.json: RMS and dominant frequency of a
  reference resample (scipy.signal.resample_poly) of a 440 Hz sine from
  44100 to 22050 Hz, frozen for comparison against the package resampler.

Run from the repo root; needs scipy (dev environment only).
"""

import json
import struct
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def write_float32_wav(path: Path, samples: np.ndarray, rate: int) -> None:
    payload = samples.astype("<f4").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 3, 1, rate, rate * 4, 4, 32,
        b"data", len(payload),
    )
    path.write_bytes(header + payload)


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)

    n = 48000
    sine = np.sin(2.0 * np.pi * 440.0 * np.arange(n) / n)
    write_float32_wav(FIXTURES / "sine440_48k.wav", sine, 48000)

    src = np.sin(2.0 * np.pi * 440.0 * np.arange(44100) / 44100.0)
    ref = resample_poly(src, 1, 2)
    mid = ref[200:-200]
    spectrum = np.abs(np.fft.rfft(mid))
    peak_hz = float(np.argmax(spectrum) * 22050.0 / len(mid))
    oracle = {
        "source_rate": 44100,
        "target_rate": 22050,
        "tone_hz": 440.0,
        "rms_input": float(np.sqrt(np.mean(src ** 2))),
        "rms_reference": float(np.sqrt(np.mean(mid ** 2))),
        "reference_peak_hz": peak_hz,
    }
    (FIXTURES / "resample_oracle.json").write_text(
        json.dumps(oracle, indent=1) + "\n", encoding="utf-8")
    print(f"wrote fixtures under {FIXTURES}")


if __name__ == "__main__":
    main()
