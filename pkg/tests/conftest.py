import struct
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def wav_bytes(payload: bytes, audio_format: int, n_channels: int, rate: int,
              bits: int) -> bytes:
    """Minimal RIFF/WAVE container around raw sample bytes.

    Kept independent of the package codec so decoder tests do not test the
    encoder against itself.
    """
    block = bits // 8 * n_channels
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, audio_format, n_channels, rate, rate * block, block, bits,
        b"data", len(payload),
    )
    return header + payload


def write_pcm16_wav(path, samples, rate, n_channels=1):
    ints = np.asarray(samples)
    payload = ints.astype("<i2").tobytes()
    Path(path).write_bytes(wav_bytes(payload, 1, n_channels, rate, 16))


def write_float32_wav(path, samples, rate, n_channels=1):
    payload = np.asarray(samples, dtype="<f4").tobytes()
    Path(path).write_bytes(wav_bytes(payload, 3, n_channels, rate, 32))


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES
