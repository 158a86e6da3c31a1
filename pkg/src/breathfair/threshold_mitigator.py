"""Per-group randomized threshold policies for post-hoc bias mitigation.

A fitted policy replaces the single 0.5 score cutoff with one small mixture
of `score > threshold` rules per sensitive group (sentinel thresholds of
-inf/+inf give the constant all-positive/all-negative rules). Mixtures are
chosen so that, in expectation on the fitting data, the groups agree on the
constrained quantity -- the selection rate for demographic parity, the
(FPR, TPR) operating point for equalized odds -- while overall accuracy is
maximized over a lattice of candidate target points.

Demographic parity works on each group's selection-rate/accuracy trade-off
envelope; equalized odds intersects the groups' ROC convex hulls. Both are
the standard randomized-threshold constructions for these constraints.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .fairness_metrics import EmptyGroup, UndefinedRate
from .seeding import keyed_uniform, text_key

DEMOGRAPHIC_PARITY = "demographic_parity"
EQUALIZED_ODDS = "equalized_odds"
CONSTRAINTS = (DEMOGRAPHIC_PARITY, EQUALIZED_ODDS)

DEFAULT_DP_GRID = 100
DEFAULT_EO_GRID = 1000


class UnknownGroup(Exception):
    """apply_policy saw a group the policy was not fitted for."""


@dataclass(frozen=True)
class GroupMixture:
    """Randomized decision rule: pick threshold t_i with probability w_i,
    then predict positive iff score > t_i."""

    thresholds: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.thresholds) != len(self.weights) or not self.thresholds:
            raise ValueError("thresholds and weights must be equal-length and non-empty")
        if any(w < -1e-12 for w in self.weights):
            raise ValueError("mixture weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")

    def expected_positive_rate(self, scores: np.ndarray) -> float:
        """Expected fraction predicted positive over the mixture."""
        scores = np.asarray(scores, dtype=float)
        return float(sum(w * np.mean(scores > t) for t, w in zip(self.thresholds, self.weights)))

    def decide(self, score: float, u: float) -> int:
        """Deterministic decision given a uniform draw u in [0, 1)."""
        acc = 0.0
        for t, w in zip(self.thresholds, self.weights):
            acc += w
            if u < acc:
                return int(score > t)
        return int(score > self.thresholds[-1])


@dataclass(frozen=True)
class ThresholdPolicy:
    constraint: str
    mixtures: dict[Hashable, GroupMixture]
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        # sentinel thresholds serialize as "inf"/"-inf" strings so the
        # document stays strictly valid JSON
        return {
            "constraint": self.constraint,
            "groups": {
                str(g): {
                    "thresholds": [t if math.isfinite(t) else str(t)
                                   for t in m.thresholds],
                    "weights": list(m.weights),
                }
                for g, m in sorted(self.mixtures.items(), key=lambda kv: str(kv[0]))
            },
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ThresholdPolicy":
        mixtures = {
            g: GroupMixture(tuple(float(t) for t in spec["thresholds"]),
                            tuple(spec["weights"]))
            for g, spec in payload["groups"].items()
        }
        return cls(constraint=payload["constraint"], mixtures=mixtures,
                   diagnostics=payload.get("diagnostics", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ThresholdPolicy":
        return cls.from_dict(json.loads(text))


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct scores, plus -inf/+inf sentinels.

    Strict `score > t` comparison plus midpoint placement means no training
    score ever ties with a threshold.
    """
    u = np.unique(np.asarray(scores, dtype=float))
    mids = 0.5 * (u[:-1] + u[1:])
    return np.concatenate(([-np.inf], mids, [np.inf]))


def _dedupe_max_y(points: list[tuple[float, float, float]]) -> list[tuple[float, float, float]]:
    """Sort by x; keep one point per x with maximal y (lowest threshold on ties)."""
    points.sort(key=lambda p: (p[0], p[1], -p[2]))
    out: list[tuple[float, float, float]] = []
    for p in points:
        if out and out[-1][0] == p[0]:
            out[-1] = p
        else:
            out.append(p)
    return out


def _upper_hull(points: list[tuple[float, float, float]]) -> list[tuple[float, float, float]]:
    """Upper concave envelope of (x, y, tag) points sorted by distinct x."""
    hull: list[tuple[float, float, float]] = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1, _), (x2, y2, _) = hull[-2], hull[-1]
            # pop the middle point when it is on or below the chord
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0.0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def _mixture_on_hull(hull: list[tuple[float, float, float]],
                     x: float) -> tuple[float, GroupMixture]:
    """Value and realizing mixture of the hull envelope at abscissa x.

    On an exact vertex hit the topmost vertex at that abscissa wins (the
    ROC hull may open with a vertical riser above (0, 0))."""
    xs = [v[0] for v in hull]
    j = bisect.bisect_right(xs, x) - 1
    if j >= 0 and hull[j][0] == x:
        return hull[j][1], GroupMixture((hull[j][2],), (1.0,))
    xa, ya, ta = hull[j]
    xb, yb, tb = hull[j + 1]
    p = (xb - x) / (xb - xa)
    return p * ya + (1.0 - p) * yb, GroupMixture((ta, tb), (p, 1.0 - p))


# ---------------------------------------------------------------------------
# demographic parity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    selection_rate: float
    accuracy: float
    mixture: GroupMixture


def dp_tradeoff_curve(scores: Sequence[float], labels: Sequence[int],
                      grid_size: int = DEFAULT_DP_GRID) -> list[CurvePoint]:
    """Best achievable accuracy at each lattice selection rate for one group.

    Candidate deterministic rules are swept over all thresholds; the upper
    concave envelope of their (selection rate, accuracy) points is evaluated
    at every lattice rate k/grid_size, where mixing the two bracketing
    envelope vertices realizes the lattice rate exactly in expectation.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.size == 0:
        raise EmptyGroup("cannot fit a trade-off curve on an empty group")
    points = []
    for t in candidate_thresholds(scores):
        preds = scores > t
        points.append((float(np.mean(preds)), float(np.mean(preds == (labels == 1))), float(t)))
    hull = _upper_hull(_dedupe_max_y(points))
    curve = []
    for k in range(grid_size + 1):
        r = k / grid_size
        acc, mixture = _mixture_on_hull(hull, r)
        curve.append(CurvePoint(selection_rate=r, accuracy=acc, mixture=mixture))
    return curve


def fit_demographic_parity(group_data: Mapping[Hashable, tuple[Sequence[float], Sequence[int]]],
                           grid_size: int = DEFAULT_DP_GRID) -> ThresholdPolicy:
    """Maximize data-weighted accuracy subject to equal expected selection rates.

    The common rate is searched over the lattice {0, 1/grid_size, ..., 1};
    ties keep the lowest rate.
    """
    if not group_data:
        raise EmptyGroup("no groups to fit")
    names = sorted(group_data, key=str)
    sizes = {g: len(group_data[g][0]) for g in names}
    total = sum(sizes.values())
    if total == 0 or any(sizes[g] == 0 for g in names):
        raise EmptyGroup("every group needs at least one fitting instance")
    curves = {g: dp_tradeoff_curve(*group_data[g], grid_size=grid_size) for g in names}
    best_k, best_obj = 0, -math.inf
    for k in range(grid_size + 1):
        obj = sum(sizes[g] / total * curves[g][k].accuracy for g in names)
        if obj > best_obj:
            best_k, best_obj = k, obj
    return ThresholdPolicy(
        constraint=DEMOGRAPHIC_PARITY,
        mixtures={g: curves[g][best_k].mixture for g in names},
        diagnostics={
            "target_selection_rate": best_k / grid_size,
            "objective": best_obj,
            "grid_size": grid_size,
            "group_weights": {str(g): sizes[g] / total for g in names},
        },
    )


# ---------------------------------------------------------------------------
# equalized odds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RocHull:
    """Upper convex hull of one group's threshold ROC points.

    Vertices run from (0, 0) to (1, 1); FPR is strictly increasing except
    for a possible vertical riser above (0, 0) when some threshold already
    has a zero false-positive rate. Each vertex carries the threshold
    realizing it.
    """

    vertices: tuple[tuple[float, float, float], ...]  # (fpr, tpr, threshold)

    def tpr_at(self, fpr: float) -> float:
        return _mixture_on_hull(list(self.vertices), fpr)[0]

    def mixture_at(self, fpr: float) -> tuple[float, GroupMixture]:
        return _mixture_on_hull(list(self.vertices), fpr)


def roc_convex_hull(scores: Sequence[float], labels: Sequence[int]) -> RocHull:
    """ROC hull from a full threshold sweep; needs both label values present."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0:
        raise UndefinedRate("<group>", "tpr")
    if n_neg == 0:
        raise UndefinedRate("<group>", "fpr")
    points = []
    for t in candidate_thresholds(scores):
        preds = scores > t
        fpr = float(np.sum(preds & ~pos)) / n_neg
        tpr = float(np.sum(preds & pos)) / n_pos
        points.append((fpr, tpr, float(t)))
    hull = _upper_hull(_dedupe_max_y(points))
    if hull[0][1] > 0.0:  # keep the (0, 0) anchor below any vertical riser
        hull.insert(0, (0.0, 0.0, math.inf))
    return RocHull(vertices=tuple(hull))


def _merge_components(parts: list[tuple[float, float]]) -> GroupMixture:
    """Combine (threshold, weight) parts: sum duplicate thresholds, drop zeros."""
    combined: dict[float, float] = {}
    for t, w in parts:
        if w > 0.0:
            combined[t] = combined.get(t, 0.0) + w
    if not combined:
        # all mass degenerated away (can only happen with weight-0 inputs)
        combined[math.inf] = 1.0
    thresholds = tuple(sorted(combined))
    weights = tuple(combined[t] for t in thresholds)
    scale = sum(weights)
    return GroupMixture(thresholds, tuple(w / scale for w in weights))


def fit_equalized_odds(group_data: Mapping[Hashable, tuple[Sequence[float], Sequence[int]]],
                       fpr_grid_size: int = DEFAULT_EO_GRID) -> ThresholdPolicy:
    """Maximize accuracy subject to equal expected (FPR, TPR) across groups.

    The target FPR is searched over a lattice; the target TPR is the lower
    envelope (pointwise min) of the per-group ROC hulls, which every group
    can reach. A group whose hull sits above the target mixes its hull point
    at the target FPR with the rate-matched coin flip (itself a mixture of
    the two sentinel rules), pulling its expected TPR down onto the target.
    """
    if not group_data:
        raise EmptyGroup("no groups to fit")
    names = sorted(group_data, key=str)
    sizes = {g: len(group_data[g][0]) for g in names}
    total = sum(sizes.values())
    if total == 0 or any(sizes[g] == 0 for g in names):
        raise EmptyGroup("every group needs at least one fitting instance")
    hulls = {g: roc_convex_hull(*group_data[g]) for g in names}
    base_rate = {g: float(np.mean(np.asarray(group_data[g][1]) == 1)) for g in names}

    best_k, best_obj, best_env = 0, -math.inf, 0.0
    for k in range(fpr_grid_size + 1):
        x = k / fpr_grid_size
        env = min(hulls[g].tpr_at(x) for g in names)
        obj = sum(
            sizes[g] / total * (env * base_rate[g] + (1.0 - x) * (1.0 - base_rate[g]))
            for g in names
        )
        if obj > best_obj:
            best_k, best_obj, best_env = k, obj, env
    x_star = best_k / fpr_grid_size
    y_star = best_env

    mixtures: dict[Hashable, GroupMixture] = {}
    for g in names:
        hull_y, hull_mix = hulls[g].mixture_at(x_star)
        if hull_y <= y_star + 1e-12:
            mixtures[g] = hull_mix
        else:
            lam = (y_star - x_star) / (hull_y - x_star)
            parts = [(t, lam * w) for t, w in zip(hull_mix.thresholds, hull_mix.weights)]
            parts.append((-math.inf, (1.0 - lam) * x_star))
            parts.append((math.inf, (1.0 - lam) * (1.0 - x_star)))
            mixtures[g] = _merge_components(parts)
    return ThresholdPolicy(
        constraint=EQUALIZED_ODDS,
        mixtures=mixtures,
        diagnostics={
            "target_fpr": x_star,
            "target_tpr": y_star,
            "objective": best_obj,
            "fpr_grid_size": fpr_grid_size,
            "group_weights": {str(g): sizes[g] / total for g in names},
        },
    )


# ---------------------------------------------------------------------------
# application and diagnostics
# ---------------------------------------------------------------------------

def _as_key(instance_id) -> int:
    return instance_id if isinstance(instance_id, int) else text_key(str(instance_id))


def apply_policy(policy: ThresholdPolicy, score: float, group: Hashable,
                 seed: int, instance_id) -> int:
    """Randomized prediction, derandomized by the (seed, instance_id) key.

    The same key always yields the same prediction, independent of call
    order, so repeated reports are bit-reproducible.
    """
    mixture = policy.mixtures.get(group)
    if mixture is None:
        raise UnknownGroup(f"policy has no mixture for group {group!r}")
    return mixture.decide(float(score), keyed_uniform(seed, _as_key(instance_id)))


def apply_policy_batch(policy: ThresholdPolicy, scores: Sequence[float],
                       groups: Sequence[Hashable], seed: int,
                       instance_ids: Sequence) -> np.ndarray:
    if not (len(scores) == len(groups) == len(instance_ids)):
        raise ValueError("scores, groups, and instance_ids must have equal length")
    return np.array([
        apply_policy(policy, s, g, seed, i)
        for s, g, i in zip(scores, groups, instance_ids)
    ], dtype=int)


def expected_selection_rates(policy: ThresholdPolicy,
                             group_data: Mapping[Hashable, tuple[Sequence[float], Sequence[int]]],
                             ) -> dict[Hashable, float]:
    """Analytic per-group selection rates of the policy on the given scores."""
    return {
        g: policy.mixtures[g].expected_positive_rate(np.asarray(scores, dtype=float))
        for g, (scores, _labels) in group_data.items()
    }


def expected_group_odds(policy: ThresholdPolicy,
                        group_data: Mapping[Hashable, tuple[Sequence[float], Sequence[int]]],
                        ) -> dict[Hashable, tuple[float, float]]:
    """Analytic per-group (FPR, TPR) of the policy on the given data."""
    out: dict[Hashable, tuple[float, float]] = {}
    for g, (scores, labels) in group_data.items():
        scores = np.asarray(scores, dtype=float)
        labels = np.asarray(labels, dtype=int)
        pos = labels == 1
        if not pos.any() or pos.all():
            raise UndefinedRate(g, "fpr/tpr")
        mixture = policy.mixtures[g]
        fpr = mixture.expected_positive_rate(scores[~pos])
        tpr = mixture.expected_positive_rate(scores[pos])
        out[g] = (fpr, tpr)
    return out
