"""Rank correlation and Student-t tests, self-contained."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def rank_average(x) -> np.ndarray:
    """1-based ranks with ties given their mean rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    n = len(x)
    # walk runs of equal values
    while i < n:
        j = i + 1
        while j < n and xs[j] == xs[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0
        i = j
    return ranks


def pearson(x, y) -> float:
    """Pearson r; 0.0 when either input is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    yc = y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if den == 0.0:
        return 0.0
    return float(np.clip((xc @ yc) / den, -1.0, 1.0))


@dataclass(frozen=True)
class Correlation:
    rho: float
    degenerate: bool = False

    def __float__(self) -> float:
        return self.rho


def spearman_full(x, y) -> Correlation:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"spearman: need equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 3:
        raise ValueError("spearman: need at least 3 values")
    if np.all(x == x[0]) or np.all(y == y[0]):
        return Correlation(0.0, degenerate=True)
    return Correlation(pearson(rank_average(x), rank_average(y)))


def spearman(x, y) -> float:
    """Spearman rho (Pearson of mean ranks); constant input gives 0."""
    return spearman_full(x, y).rho


# ---------------------------------------------------------------------------
# Student t


def _betacf(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"betainc_reg: x={x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, df: float) -> float:
    if math.isnan(t):
        return math.nan
    if math.isinf(t):
        return 0.0
    return betainc_reg(0.5 * df, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTest:
    t: float
    p: float
    d: float  # Cohen's d
    df: int
    n: int
    mean: float
    degenerate: bool = False


def ttest_1samp(sample, mu0: float = 0.0) -> TTest:
    """Two-tailed one-sample t-test against ``mu0``; zero variance is flagged degenerate."""
    x = np.asarray(sample, dtype=float).ravel()
    n = len(x)
    if n < 2:
        raise ValueError("ttest_1samp: need n >= 2")
    diff = x.mean() - mu0
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        return TTest(math.nan, math.nan, math.nan, n - 1, n, float(x.mean()), degenerate=True)
    t = diff / (sd / math.sqrt(n))
    return TTest(float(t), t_two_tailed_p(t, n - 1), float(diff / sd), n - 1, n, float(x.mean()))


def ttest_paired(a, b) -> TTest:
    """Paired two-tailed t-test on ``a - b``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"ttest_paired: sample lengths differ ({len(a)} vs {len(b)})")
    return ttest_1samp(a - b, 0.0)


def stats_battery(sample, other=None, mu0: float = 0.0) -> TTest:
    """One-sample test of ``sample`` against ``mu0``, or paired test when ``other`` is given."""
    if other is None:
        return ttest_1samp(sample, mu0)
    return ttest_paired(sample, other)
