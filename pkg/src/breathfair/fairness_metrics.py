"""Group fairness metrics over binary predictions.

Every rate is a ratio of exact integer counts, divided once at the end, so
two implementations counting the same events produce bit-identical floats.
Groups are arbitrary hashable labels; the primary use is two sexes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

log = logging.getLogger(__name__)


class EmptyGroup(Exception):
    """A metric was requested for an empty prediction set or group."""


class UndefinedRate(Exception):
    """A group lacks the labels needed for the requested rate."""

    def __init__(self, group: Hashable, which: str):
        super().__init__(f"{which} undefined for group {group!r} (zero denominator)")
        self.group = group
        self.which = which


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def size(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ParityReport:
    rates: dict[Hashable, float]
    dp_ratio: float
    dp_difference: float


@dataclass(frozen=True)
class OddsReport:
    tpr: dict[Hashable, float]
    fpr: dict[Hashable, float]
    fnr: dict[Hashable, float]
    eo_ratio: float
    eo_difference: float


def _check_lengths(*seqs: Sequence) -> int:
    n = len(seqs[0])
    if any(len(s) != n for s in seqs):
        raise ValueError("predictions, labels, and groups must have equal length")
    return n


def selection_rate(predictions: Sequence[int]) -> float:
    """Fraction of instances predicted positive."""
    if len(predictions) == 0:
        raise EmptyGroup("selection rate of an empty prediction set")
    return sum(1 for p in predictions if p) / len(predictions)


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Fraction of predictions matching the labels."""
    n = _check_lengths(predictions, labels)
    if n == 0:
        raise EmptyGroup("accuracy of an empty prediction set")
    return sum(1 for p, y in zip(predictions, labels) if bool(p) == bool(y)) / n


def _min_max_ratio(values: Mapping[Hashable, float], what: str) -> tuple[float, float]:
    lo, hi = min(values.values()), max(values.values())
    if hi == 0.0:
        # Degenerate but defined: nobody is selected anywhere.
        log.warning("all %s are zero; reporting ratio=1, difference=0", what)
        return 1.0, 0.0
    return lo / hi, hi - lo


def demographic_parity(predictions: Sequence[int],
                       groups: Sequence[Hashable]) -> ParityReport:
    """Per-group selection rates with their min/max ratio and max-min gap."""
    _check_lengths(predictions, groups)
    by_group: dict[Hashable, list[int]] = {}
    for p, g in zip(predictions, groups):
        by_group.setdefault(g, []).append(1 if p else 0)
    if len(by_group) < 2:
        raise EmptyGroup("demographic parity needs at least two groups")
    rates = {g: sum(ps) / len(ps) for g, ps in sorted(by_group.items(), key=lambda kv: str(kv[0]))}
    ratio, diff = _min_max_ratio(rates, "group selection rates")
    return ParityReport(rates=rates, dp_ratio=ratio, dp_difference=diff)


def confusion_by_group(predictions: Sequence[int], labels: Sequence[int],
                       groups: Sequence[Hashable]) -> dict[Hashable, ConfusionCounts]:
    """Exact per-group confusion counts."""
    _check_lengths(predictions, labels, groups)
    counts: dict[Hashable, list[int]] = {}
    for p, y, g in zip(predictions, labels, groups):
        c = counts.setdefault(g, [0, 0, 0, 0])  # tp, fp, tn, fn
        if bool(y):
            if bool(p):
                c[0] += 1
            else:
                c[3] += 1
        else:
            if bool(p):
                c[1] += 1
            else:
                c[2] += 1
    return {g: ConfusionCounts(*c) for g, c in sorted(counts.items(), key=lambda kv: str(kv[0]))}


def group_rates(predictions: Sequence[int], labels: Sequence[int],
                groups: Sequence[Hashable]) -> tuple[dict[Hashable, ConfusionCounts], dict[str, dict[Hashable, float]]]:
    """Confusion counts plus tpr/fpr/fnr/tnr per group.

    Raises UndefinedRate when a group has no positives (tpr, fnr) or no
    negatives (fpr, tnr).
    """
    confusion = confusion_by_group(predictions, labels, groups)
    rates: dict[str, dict[Hashable, float]] = {"tpr": {}, "fpr": {}, "fnr": {}, "tnr": {}}
    for g, c in confusion.items():
        pos = c.tp + c.fn
        neg = c.fp + c.tn
        if pos == 0:
            raise UndefinedRate(g, "tpr/fnr")
        if neg == 0:
            raise UndefinedRate(g, "fpr/tnr")
        rates["tpr"][g] = c.tp / pos
        rates["fnr"][g] = c.fn / pos
        rates["fpr"][g] = c.fp / neg
        rates["tnr"][g] = c.tn / neg
    return confusion, rates


def equalized_odds(predictions: Sequence[int], labels: Sequence[int],
                   groups: Sequence[Hashable]) -> OddsReport:
    """Equalized-odds ratio/difference over per-group TPR and FPR.

    Ratio is the smaller of the TPR and FPR min/max ratios; difference is
    the larger of the TPR and FPR max-min gaps.
    """
    _, rates = group_rates(predictions, labels, groups)
    if len(rates["tpr"]) < 2:
        raise EmptyGroup("equalized odds needs at least two groups")
    tpr_ratio, tpr_diff = _min_max_ratio(rates["tpr"], "group TPRs")
    fpr_ratio, fpr_diff = _min_max_ratio(rates["fpr"], "group FPRs")
    return OddsReport(
        tpr=rates["tpr"], fpr=rates["fpr"], fnr=rates["fnr"],
        eo_ratio=min(tpr_ratio, fpr_ratio),
        eo_difference=max(tpr_diff, fpr_diff),
    )
