"""Corpus pre-processing: duration threshold, 7x2s segmentation, featurizing,
zero filtering, class balancing, and patient-grouped train/test splitting.

Positive class is COVID (label bit 1); COPD is 0. The model feature vector
is [sex, age, mfcc_00..mfcc_39] with sex encoded male=1, female=0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .audio_ingest import (CorpusEntry, CorpusIndex, Label, Sex, Waveform,
                           decode_wav, to_mono_resampled)
from .dsp_features import DspConfig, mfcc, summarize

MIN_SECONDS = 14.0
SEGMENT_SECONDS = 2.0
N_SEGMENTS = 7
N_MFCC_FEATURES = 40
MODEL_VECTOR_LENGTH = 2 + N_MFCC_FEATURES

SEX_ENCODING = {Sex.MALE: 1.0, Sex.FEMALE: 0.0}
POSITIVE_LABEL = Label.COVID


class EmptySelection(Exception):
    """No recording satisfies the duration threshold."""


class TooShort(Exception):
    """A recording is shorter than the segmentation window."""


class InsufficientPatients(Exception):
    """Grouped splitting needs at least two patients per label."""


@dataclass(frozen=True)
class Instance:
    patient_id: str
    segment_index: int
    features: np.ndarray  # 40 MFCC frame means
    sex: Sex
    age: int
    label: int  # 1 = covid (positive), 0 = copd

    def __post_init__(self):
        if len(self.features) != N_MFCC_FEATURES:
            raise ValueError(f"expected {N_MFCC_FEATURES} features")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")

    def model_vector(self) -> np.ndarray:
        return np.concatenate(([SEX_ENCODING[self.sex], float(self.age)], self.features))


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    group_by_patient: bool = True
    stratify_by_label: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")


def label_bit(label: Label) -> int:
    return 1 if label is POSITIVE_LABEL else 0


def instances_to_arrays(instances: Sequence[Instance]) -> tuple[np.ndarray, np.ndarray, list[str], list[str]]:
    """(X, y, sex groups, patient ids) ready for fitting."""
    X = np.array([inst.model_vector() for inst in instances])
    y = np.array([inst.label for inst in instances], dtype=int)
    groups = [inst.sex.value for inst in instances]
    pids = [inst.patient_id for inst in instances]
    return X, y, groups, pids


def select_recordings(corpus: CorpusIndex, min_seconds: float = MIN_SECONDS) -> CorpusIndex:
    """Keep entries lasting at least min_seconds (inclusive boundary)."""
    kept = tuple(e for e in corpus.entries if e.duration_seconds >= min_seconds)
    if not kept:
        raise EmptySelection(f"no recording is at least {min_seconds} s long")
    return CorpusIndex(entries=kept, rejects=corpus.rejects)


def segment_waveform(w: Waveform, n_segments: int = N_SEGMENTS,
                     segment_seconds: float = SEGMENT_SECONDS) -> list[np.ndarray]:
    """First n_segments * segment_seconds of audio as contiguous windows."""
    seg_len = int(round(segment_seconds * w.sample_rate))
    needed = n_segments * seg_len
    if len(w.samples) < needed:
        raise TooShort(
            f"{w.source_path or 'waveform'}: {len(w.samples)} samples < {needed} needed")
    return [w.samples[k * seg_len:(k + 1) * seg_len] for k in range(n_segments)]


def segment_and_featurize(entry: CorpusEntry, cfg: DspConfig,
                          sample_rate: int | None = None) -> list[Instance]:
    """Decode, resample, cut the first 14 s into 7 windows, featurize each."""
    target_rate = sample_rate or entry.sample_rate
    w = to_mono_resampled(decode_wav(entry.path), target_rate)
    rec = entry.record
    out = []
    for k, segment in enumerate(segment_waveform(w)):
        features = summarize(mfcc(segment, w.sample_rate, cfg))
        out.append(Instance(
            patient_id=rec.patient_id, segment_index=k, features=features,
            sex=rec.sex, age=rec.age, label=label_bit(rec.label),
        ))
    return out


def featurize_corpus(corpus: CorpusIndex, cfg: DspConfig,
                     sample_rate: int) -> list[Instance]:
    instances: list[Instance] = []
    for entry in corpus.entries:
        instances.extend(segment_and_featurize(entry, cfg, sample_rate))
    return instances


def filter_zero(instances: Sequence[Instance]) -> list[Instance]:
    """Drop every instance of any patient with an all-zero feature vector.

    Single zero coefficients are legitimate cepstral values; only a fully
    zero vector marks a dead segment, and removal is per patient.
    """
    zero_patients = {i.patient_id for i in instances if not np.any(i.features)}
    return [i for i in instances if i.patient_id not in zero_patients]


def balance_classes(instances: Sequence[Instance],
                    rng: np.random.Generator) -> list[Instance]:
    """Downsample the majority class uniformly to the minority count."""
    by_label: dict[int, list[int]] = {0: [], 1: []}
    for k, inst in enumerate(instances):
        by_label[inst.label].append(k)
    if not by_label[0] or not by_label[1]:
        raise ValueError("both classes must be present before balancing")
    n0, n1 = len(by_label[0]), len(by_label[1])
    if n0 == n1:
        return list(instances)
    majority = 0 if n0 > n1 else 1
    target = min(n0, n1)
    chosen = rng.choice(len(by_label[majority]), size=target, replace=False)
    keep = set(by_label[1 - majority]) | {by_label[majority][j] for j in chosen}
    return [inst for k, inst in enumerate(instances) if k in keep]


def group_composition(instances: Sequence[Instance]) -> dict[str, dict[str, int]]:
    """Instance counts per label per sex, for the run log."""
    counts = {label.value: {sex.value: 0 for sex in Sex} for label in Label}
    for inst in instances:
        name = POSITIVE_LABEL.value if inst.label == 1 else Label.COPD.value
        counts[name][inst.sex.value] += 1
    return counts


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_train_test(instances: Sequence[Instance], spec: SplitSpec,
                     rng: np.random.Generator) -> tuple[list[Instance], list[Instance]]:
    """Stratified split; with group_by_patient all of a patient's instances
    land on the same side. Deterministic given the generator state.

    Stratification uses (label, sex) cells: sex-conditional class priors are
    then stable across sides, not just the label proportions. Each label
    still needs at least 2 patients overall (one per side).
    """
    test_rows: set[int] = set()
    if spec.group_by_patient:
        pid_rows: dict[str, list[int]] = {}
        pid_cell: dict[str, tuple] = {}
        for k, inst in enumerate(instances):
            pid_rows.setdefault(inst.patient_id, []).append(k)
            pid_cell[inst.patient_id] = (inst.label, inst.sex.value)
        for label in sorted({c[0] for c in pid_cell.values()}):
            with_label = [p for p, c in pid_cell.items() if c[0] == label]
            if len(with_label) < 2:
                raise InsufficientPatients(
                    f"label {label}: need at least 2 patients, have {len(with_label)}")
        cells = sorted(set(pid_cell.values())) if spec.stratify_by_label else [None]
        for cell in cells:
            pids = sorted(p for p in pid_rows if cell is None or pid_cell[p] == cell)
            if len(pids) < 2:
                continue  # a singleton cell stays in train: the model must see it
            n_test = min(max(_round_half_up(spec.test_fraction * len(pids)), 1),
                         len(pids) - 1)
            order = rng.permutation(len(pids))
            for j in order[:n_test]:
                test_rows.update(pid_rows[pids[j]])
    else:
        cells = (sorted({(inst.label, inst.sex.value) for inst in instances})
                 if spec.stratify_by_label else [None])
        for cell in cells:
            rows = [k for k, inst in enumerate(instances)
                    if cell is None or (inst.label, inst.sex.value) == cell]
            if len(rows) < 2:
                raise InsufficientPatients(f"cell {cell}: need at least 2 instances")
            n_test = min(max(_round_half_up(spec.test_fraction * len(rows)), 1), len(rows) - 1)
            order = rng.permutation(len(rows))
            test_rows.update(rows[j] for j in order[:n_test])
    train = [inst for k, inst in enumerate(instances) if k not in test_rows]
    test = [inst for k, inst in enumerate(instances) if k in test_rows]
    return train, test


# ---------------------------------------------------------------------------
# feature cache CSV
# ---------------------------------------------------------------------------

FEATURE_COLUMNS = ("patient_id", "segment_index", "sex", "age", "label",
                   *(f"mfcc_{k:02d}" for k in range(N_MFCC_FEATURES)))


def write_feature_csv(instances: Iterable[Instance], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_COLUMNS)
        for inst in instances:
            label = POSITIVE_LABEL.value if inst.label == 1 else Label.COPD.value
            writer.writerow([
                inst.patient_id, inst.segment_index, inst.sex.value, inst.age, label,
                *(f"{v:.6f}" for v in inst.features),
            ])


def read_feature_csv(path) -> list[Instance]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FEATURE_COLUMNS:
            raise ValueError(f"{path}: not a feature cache CSV")
        out = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            pid, seg, sex, age, label = row[:5]
            out.append(Instance(
                patient_id=pid, segment_index=int(seg),
                features=np.array([float(v) for v in row[5:]]),
                sex=Sex(sex.lower()), age=int(age),
                label=label_bit(Label(label.lower())),
            ))
    return out
