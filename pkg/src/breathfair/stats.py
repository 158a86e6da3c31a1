"""Welch's t-test, percentage improvement, and repeated-run aggregation.

The p-value is computed from the Student-t survival function through the
regularized incomplete beta function, evaluated with the standard
continued-fraction expansion (modified Lentz iteration).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class ZeroBaseline(Exception):
    """Percentage improvement is undefined when the 'before' value is zero."""


@dataclass(frozen=True)
class WelchResult:
    """Two-sample Welch test outcome; `degenerate` flags zero-variance pairs."""

    t: float
    df: float
    p: float
    mean_a: float
    mean_b: float
    degenerate: bool = False


@dataclass(frozen=True)
class RunSamples:
    """Paired before/after samples of one metric across repeated runs."""

    metric: str
    before: tuple[float, ...]
    after: tuple[float, ...]

    def __post_init__(self):
        if len(self.before) != len(self.after):
            raise ValueError("before/after run counts differ for %r" % self.metric)


@dataclass(frozen=True)
class MetricSummary:
    metric: str
    mean_before: float
    std_before: float
    stderr_before: float
    mean_after: float
    std_after: float
    stderr_after: float
    welch: WelchResult
    pct_improvement: float | None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "mu_before": self.mean_before,
            "mu_after": self.mean_after,
            "std_before": self.std_before,
            "std_after": self.std_after,
            "stderr_before": self.stderr_before,
            "stderr_after": self.stderr_after,
            "t": self.welch.t,
            "df": self.welch.df,
            "p": self.welch.p,
            "degenerate": self.welch.degenerate,
            "pct_improvement": self.pct_improvement,
        }


def _mean_and_var(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean = math.fsum(xs) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, var


def _beta_continued_fraction(a: float, b: float, x: float,
                             tol: float = 1e-15, max_iter: int = 300) -> float:
    # Modified Lentz iteration for the continued fraction of I_x(a, b).
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        num = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError("incomplete-beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    # Use the expansion on whichever side converges fast, mirror the other.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """Survival function P(T > t) of Student's t with `df` degrees of freedom."""
    if df <= 0.0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t))
    return tail if t > 0.0 else 1.0 - tail


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Two-sided Welch test of mean(a) vs mean(b) with unequal variances.

    Variances use the n-1 denominator; degrees of freedom follow the
    Welch-Satterthwaite approximation. When both samples have zero variance
    the result is flagged degenerate instead of raising, so batch reports
    never abort: equal means give t=0, p=1; unequal means give |t|=inf, p=0.
    """
    n_a, n_b = len(a), len(b)
    if n_a < 2 or n_b < 2:
        raise ValueError("Welch test needs at least two observations per sample")
    mean_a, var_a = _mean_and_var(a)
    mean_b, var_b = _mean_and_var(b)
    sa, sb = var_a / n_a, var_b / n_b
    if sa + sb == 0.0:  # includes underflow of tiny variances
        if mean_a == mean_b:
            return WelchResult(0.0, 0.0, 1.0, mean_a, mean_b, degenerate=True)
        t = math.inf if mean_a > mean_b else -math.inf
        return WelchResult(t, 0.0, 0.0, mean_a, mean_b, degenerate=True)
    t = (mean_a - mean_b) / math.sqrt(sa + sb)
    # Welch-Satterthwaite, written scale-invariantly so tiny variances
    # cannot underflow: df = 1 / (u^2/(n_a-1) + (1-u)^2/(n_b-1)).
    u = sa / (sa + sb)
    df = 1.0 / (u * u / (n_a - 1) + (1.0 - u) ** 2 / (n_b - 1))
    p = 2.0 * student_t_sf(abs(t), df)
    return WelchResult(t, df, min(p, 1.0), mean_a, mean_b)


def percent_improvement(before: float, after: float) -> float:
    """100 * |before - after| / before."""
    if before == 0.0:
        raise ZeroBaseline("cannot compute improvement over a zero baseline")
    return 100.0 * abs(before - after) / before


def summarize_runs(samples: Sequence[RunSamples]) -> dict[str, MetricSummary]:
    """Mean/std/stderr per phase plus Welch test and improvement per metric."""
    out: dict[str, MetricSummary] = {}
    for s in samples:
        n = len(s.before)
        mean_b, var_b = _mean_and_var(s.before)
        mean_a, var_a = _mean_and_var(s.after)
        std_b, std_a = math.sqrt(var_b), math.sqrt(var_a)
        welch = welch_t_test(s.before, s.after)
        try:
            pct = percent_improvement(mean_b, mean_a)
        except ZeroBaseline:
            pct = None
        out[s.metric] = MetricSummary(
            metric=s.metric,
            mean_before=mean_b, std_before=std_b, stderr_before=std_b / math.sqrt(n),
            mean_after=mean_a, std_after=std_a, stderr_after=std_a / math.sqrt(n),
            welch=welch, pct_improvement=pct,
        )
    return out
