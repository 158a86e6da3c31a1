"""WAV decoding, band-limited resampling, and corpus/metadata ingestion.

Decoding is a small RIFF/WAVE parser covering the PCM encodings breathing
corpora actually ship (16/24/32-bit integer and 32-bit float). Everything
is normalized to mono float64 in [-1, 1]; multi-channel input is mixed by
per-frame arithmetic mean.
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 22050

# windowed-sinc resampler: Kaiser window, 32 zero crossings per side
KAISER_BETA = 8.6
ZERO_CROSSINGS = 32


class MalformedContainer(Exception):
    """The file is not a well-formed RIFF/WAVE container."""


class UnsupportedEncoding(Exception):
    """The WAV encoding is not PCM 16/24/32-bit int or 32-bit float."""


class EmptyAudio(Exception):
    """The data chunk holds no complete frame."""


class MissingColumn(Exception):
    """Metadata CSV header or row does not match the expected columns."""


class BadEnumValue(Exception):
    """Metadata row holds an invalid sex/label/age value."""


class DuplicateRow(Exception):
    """Metadata repeats a (patient_id, filename) pair."""


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"


class Label(str, Enum):
    COPD = "copd"
    COVID = "covid"


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray  # mono float64, amplitudes in [-1, 1]
    sample_rate: int
    source_path: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 1:
            raise ValueError("samples must be 1-D mono")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    sex: Sex
    age: int
    label: Label
    filename: str


@dataclass(frozen=True)
class CorpusEntry:
    record: PatientRecord
    path: Path
    duration_seconds: float
    sample_rate: int


@dataclass(frozen=True)
class Reject:
    record: PatientRecord
    reason: str


@dataclass(frozen=True)
class CorpusIndex:
    entries: tuple[CorpusEntry, ...]
    rejects: tuple[Reject, ...]

    def summary(self) -> dict[str, dict[str, int]]:
        """Decoded-entry counts per label per sex."""
        counts = {label.value: {sex.value: 0 for sex in Sex} for label in Label}
        for e in self.entries:
            counts[e.record.label.value][e.record.sex.value] += 1
        return counts


# ---------------------------------------------------------------------------
# WAV codec
# ---------------------------------------------------------------------------

def _parse_chunks(raw: bytes) -> tuple[bytes, bytes]:
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedContainer("missing RIFF/WAVE signature")
    fmt = data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedContainer(f"chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise MalformedContainer("no fmt chunk")
    if data is None:
        raise MalformedContainer("no data chunk")
    return fmt, data


def decode_wav(path) -> Waveform:
    """Decode a PCM WAV file to mono float64 in [-1, 1].

    Integer samples are scaled by 2^(bits-1); channels are mixed by
    arithmetic mean per frame.
    """
    raw = Path(path).read_bytes()
    fmt, data = _parse_chunks(raw)
    if len(fmt) < 16:
        raise MalformedContainer("fmt chunk too short")
    audio_format, n_channels, sample_rate, _byte_rate, _block_align, bits = \
        struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format == 0xFFFE:  # WAVE_FORMAT_EXTENSIBLE: code leads the GUID
        if len(fmt) < 26:
            raise MalformedContainer("extensible fmt chunk too short")
        (audio_format,) = struct.unpack_from("<H", fmt, 24)
    if n_channels < 1 or sample_rate <= 0:
        raise MalformedContainer("invalid channel count or sample rate")

    if audio_format == 1 and bits == 16:
        width, kind = 2, "<i2"
    elif audio_format == 1 and bits == 24:
        width, kind = 3, "i24"
    elif audio_format == 1 and bits == 32:
        width, kind = 4, "<i4"
    elif audio_format == 3 and bits == 32:
        width, kind = 4, "<f4"
    else:
        raise UnsupportedEncoding(f"format code {audio_format} at {bits} bits")

    frame_bytes = width * n_channels
    n_frames = len(data) // frame_bytes
    if n_frames == 0:
        raise EmptyAudio(f"{path}: no complete audio frame")
    usable = data[:n_frames * frame_bytes]

    if kind == "i24":
        b = np.frombuffer(usable, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        vals = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        vals = np.where(vals & 0x800000, vals - (1 << 24), vals)
        flat = vals.astype(np.float64) / float(1 << 23)
    elif kind == "<f4":
        flat = np.frombuffer(usable, dtype="<f4").astype(np.float64)
    else:
        ints = np.frombuffer(usable, dtype=kind)
        flat = ints.astype(np.float64) / float(1 << (bits - 1))

    x = flat.reshape(n_frames, n_channels).mean(axis=1)
    return Waveform(samples=x, sample_rate=int(sample_rate), source_path=str(path))


def encode_wav(w: Waveform, path, encoding: str = "float32") -> None:
    """Write a Waveform as 32-bit float (lossless round trip for float32
    payloads) or 16-bit PCM."""
    if encoding == "float32":
        payload = w.samples.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    elif encoding == "pcm16":
        clipped = np.clip(np.round(w.samples * (1 << 15)), -(1 << 15), (1 << 15) - 1)
        payload = clipped.astype("<i2").tobytes()
        audio_format, bits = 1, 16
    else:
        raise ValueError("encoding must be 'float32' or 'pcm16'")
    block_align = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, audio_format, 1, w.sample_rate,
        w.sample_rate * block_align, block_align, bits,
        b"data", len(payload),
    )
    Path(path).write_bytes(header + payload)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _kaiser(z: np.ndarray) -> np.ndarray:
    inside = np.abs(z) <= 1.0
    out = np.zeros_like(z)
    out[inside] = np.i0(KAISER_BETA * np.sqrt(1.0 - z[inside] ** 2)) / np.i0(KAISER_BETA)
    return out


def to_mono_resampled(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited resample via Kaiser-windowed sinc interpolation.

    Exact filter phases are evaluated per output sample (the infinite-
    resolution limit of a polyphase table). Identity, bit-equal, when the
    rates already match. Output length is round(len * target / source).
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return Waveform(w.samples, w.sample_rate, w.source_path)
    ratio = target_rate / w.sample_rate
    n_out = int(round(len(w.samples) * target_rate / w.sample_rate))
    scale = min(1.0, ratio)  # cutoff at the lower Nyquist
    half = int(np.ceil(ZERO_CROSSINGS / scale)) + 1
    xpad = np.concatenate([np.zeros(half), w.samples, np.zeros(half)])
    offsets = np.arange(-half, half + 1)
    y = np.empty(n_out)
    step = w.sample_rate / target_rate
    block = 8192
    for start in range(0, n_out, block):
        idx = np.arange(start, min(start + block, n_out))
        centre = idx * step
        base = np.floor(centre).astype(np.int64)
        u = offsets[None, :] - (centre - base)[:, None]
        taps = scale * np.sinc(u * scale) * _kaiser(u * scale / ZERO_CROSSINGS)
        rows = xpad[base[:, None] + offsets[None, :] + half]
        y[idx] = np.einsum("bt,bt->b", taps, rows)
    return Waveform(samples=y, sample_rate=int(target_rate), source_path=w.source_path)


# ---------------------------------------------------------------------------
# metadata and corpus layout
# ---------------------------------------------------------------------------

METADATA_COLUMNS = ("patient_id", "sex", "age", "label", "filename")


def load_metadata(path) -> list[PatientRecord]:
    """Parse metadata.csv; enums are case-insensitive, duplicates rejected."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != METADATA_COLUMNS:
            raise MissingColumn(
                "metadata header must be exactly %s" % ",".join(METADATA_COLUMNS))
        records: list[PatientRecord] = []
        seen: set[tuple[str, str]] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(METADATA_COLUMNS):
                raise MissingColumn(f"line {lineno}: expected {len(METADATA_COLUMNS)} fields")
            pid, sex_s, age_s, label_s, filename = (c.strip() for c in row)
            try:
                sex = Sex(sex_s.lower())
            except ValueError:
                raise BadEnumValue(f"line {lineno}: sex {sex_s!r}") from None
            try:
                label = Label(label_s.lower())
            except ValueError:
                raise BadEnumValue(f"line {lineno}: label {label_s!r}") from None
            try:
                age = int(age_s)
                if age < 0:
                    raise ValueError
            except ValueError:
                raise BadEnumValue(f"line {lineno}: age {age_s!r}") from None
            key = (pid, filename)
            if key in seen:
                raise DuplicateRow(f"line {lineno}: duplicate {key}")
            seen.add(key)
            records.append(PatientRecord(pid, sex, age, label, filename))
    return records


def scan_corpus(root, records: list[PatientRecord]) -> CorpusIndex:
    """Join records to <root>/audio/<filename>, probing that each decodes.

    Nothing here is fatal: missing or undecodable files land in the rejects
    list (sorted by filename) with a reason.
    """
    audio_dir = Path(root) / "audio"
    if not audio_dir.is_dir():
        raise FileNotFoundError(f"{root} has no audio/ subdirectory")
    entries: list[CorpusEntry] = []
    rejects: list[Reject] = []
    for rec in records:
        path = audio_dir / rec.filename
        if not path.is_file():
            rejects.append(Reject(rec, "FileMissing"))
            continue
        try:
            w = decode_wav(path)
        except (MalformedContainer, UnsupportedEncoding, EmptyAudio) as exc:
            rejects.append(Reject(rec, f"{type(exc).__name__}: {exc}"))
            continue
        entries.append(CorpusEntry(rec, path, w.duration_seconds, w.sample_rate))
    rejects.sort(key=lambda r: r.record.filename)
    if rejects:
        log.warning("scan_corpus rejected %d of %d records", len(rejects), len(records))
    return CorpusIndex(entries=tuple(entries), rejects=tuple(rejects))
