"""Onset detection, per-phase summaries and the hypothesis tests used in reports."""
from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .protocol import Trace
from .special import f_sf, norm_sf, t_ppf_two_sided, t_sf_two_sided

__all__ = [
    "PhaseSummary",
    "TestResult",
    "anova_oneway",
    "detect_onset",
    "percentage_change",
    "phase_summary",
    "shapiro_wilk",
    "t_one_sample",
    "t_two_sample",
]

ONSET_BASELINE_SAMPLES = 10
ONSET_RUN = 3
ONSET_DROP = 10.0


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p: float
    df: tuple[float, ...]
    ci95: tuple[float, float] | None = None

    __test__ = False  # keep pytest from collecting this as a test class

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p-value {self.p!r} outside [0, 1]")
        if any(not d > 0 for d in self.df):
            raise ValueError("degrees of freedom must be positive")

    def as_dict(self) -> dict:
        out = {"statistic": self.statistic, "p": self.p, "df": list(self.df)}
        if self.ci95 is not None:
            out["ci95"] = list(self.ci95)
        return out


@dataclass(frozen=True)
class PhaseSummary:
    phase_index: int
    mean_r: float
    median_r: float
    onset_s: float | None


def detect_onset(trace: Trace, phase_index: int) -> float | None:
    """Time from phase start to the first resistance collapse, or None.

    The baseline R0 is the median of the first ten peak samples of the phase.
    Onset is the first sample that starts a run of three consecutive samples
    below R0/10.
    """
    mask = trace.phase == phase_index
    if not mask.any():
        raise ValueError(f"phase {phase_index} not present in trace")
    r = trace.r[mask]
    t = trace.t[mask]
    if len(r) < ONSET_BASELINE_SAMPLES + ONSET_RUN:
        raise ValueError(f"phase {phase_index} has {len(r)} samples; need at least "
                         f"{ONSET_BASELINE_SAMPLES + ONSET_RUN}")
    limit = float(np.median(r[:ONSET_BASELINE_SAMPLES])) / ONSET_DROP
    below = r < limit
    run = below[:len(r) - ONSET_RUN + 1].copy()
    for k in range(1, ONSET_RUN):
        run &= below[k:len(r) - ONSET_RUN + 1 + k]
    hits = np.flatnonzero(run)
    if len(hits) == 0:
        return None
    return float(t[hits[0]] - trace.phase_start(phase_index))


def phase_summary(trace: Trace) -> list[PhaseSummary]:
    if len(trace) == 0:
        raise ValueError("empty trace")
    out = []
    for k in trace.phases():
        r = trace.r[trace.phase == k]
        try:
            onset = detect_onset(trace, k)
        except ValueError:
            onset = None  # too few samples to establish a baseline
        out.append(PhaseSummary(k, float(np.mean(r)), float(np.median(r)), onset))
    return out


def percentage_change(before: float, after: float) -> float:
    """Percent reduction from ``before`` to ``after``; positive means a drop."""
    if not before > 0:
        raise ValueError(f"before must be positive, got {before!r}")
    return 100.0 * (1.0 - after / before)


# Royston (1995) AS R94 polynomial coefficients
_SW_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)


def _poly(c: Sequence[float], x: float) -> float:
    return sum(ck * x ** k for k, ck in enumerate(c))


def _sw_coefficients(n: int) -> np.ndarray:
    """Half-vector of Shapiro-Wilk weights a_1 >= a_2 >= ... (length n//2)."""
    half = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    nd = NormalDist()
    m = np.array([nd.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)])
    summ2 = 2.0 * float(np.dot(m, m))
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _poly(_SW_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_SW_C2, rsn)
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2)
                        / (1.0 - 2.0 * a1 ** 2 - 2.0 * a2 ** 2))
        a = -m / fac
        a[0], a[1] = a1, a2
    else:
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1 ** 2))
        a = -m / fac
        a[0] = a1
    return a


def shapiro_wilk(xs: Sequence[float]) -> TestResult:
    """Shapiro-Wilk W and p-value (Royston's AS R94 approximation, 3 <= n <= 5000)."""
    x = np.sort(np.asarray(xs, dtype=float))
    n = len(x)
    if not 3 <= n <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= 5000, got n={n}")
    rng = x[-1] - x[0]
    if not rng > 0:
        raise ValueError("zero sample variance")
    half = _sw_coefficients(n)
    a = np.zeros(n)
    a[:n // 2] = -half
    a[n - n // 2:] = half[::-1]
    # W as the squared correlation of the ordered data with the weights;
    # this form keeps 1 - W accurate when W is close to 1
    xr = x / rng
    asa = a - a.mean()
    xsx = xr - xr.mean()
    ssa = float(np.dot(asa, asa))
    ssx = float(np.dot(xsx, xsx))
    sax = float(np.dot(asa, xsx))
    ssassx = math.sqrt(ssa * ssx)
    w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx)
    w = 1.0 - w1

    if n == 3:
        p = (6.0 / math.pi) * (math.asin(math.sqrt(min(w, 1.0))) - math.pi / 3.0)
        return TestResult(w, min(1.0, max(0.0, p)), (n,))
    y = math.log(w1) if w1 > 0 else -math.inf
    if n <= 11:
        gamma = _poly(_SW_G, n)
        if y >= gamma:
            return TestResult(w, 1e-99, (n,))
        y = -math.log(gamma - y)
        mu = _poly(_SW_C3, n)
        sigma = math.exp(_poly(_SW_C4, n))
    else:
        ln = math.log(n)
        mu = _poly(_SW_C5, ln)
        sigma = math.exp(_poly(_SW_C6, ln))
    return TestResult(w, norm_sf((y - mu) / sigma), (n,))


def anova_oneway(groups: Sequence[Sequence[float]]) -> TestResult:
    """One-way ANOVA F test with df (k-1, N-k)."""
    arrays = [np.asarray(g, dtype=float) for g in groups]
    k = len(arrays)
    if k < 2:
        raise ValueError("ANOVA needs at least two groups")
    if any(len(g) < 2 for g in arrays):
        raise ValueError("every group needs at least two values")
    n_total = sum(len(g) for g in arrays)
    grand = float(np.concatenate(arrays).mean())
    ssb = sum(len(g) * (float(g.mean()) - grand) ** 2 for g in arrays)
    ssw = sum(float(np.sum((g - g.mean()) ** 2)) for g in arrays)
    if not ssw > 0:
        raise ValueError("zero within-group variance")
    df1, df2 = k - 1, n_total - k
    f = (ssb / df1) / (ssw / df2)
    return TestResult(f, f_sf(f, df1, df2), (df1, df2))


def t_one_sample(xs: Sequence[float], mu0: float = 0.0) -> TestResult:
    """Two-sided one-sample t test with a 95% confidence interval for the mean."""
    x = np.asarray(xs, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("one-sample t test needs n >= 2")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    if not sd > 0:
        raise ValueError("zero sample variance")
    se = sd / math.sqrt(n)
    df = n - 1
    t = (mean - mu0) / se
    half = t_ppf_two_sided(0.05, df) * se
    return TestResult(t, t_sf_two_sided(t, df), (df,), (mean - half, mean + half))


def t_two_sample(xs: Sequence[float], ys: Sequence[float]) -> TestResult:
    """Pooled-variance (Student) two-sample t test, two-sided."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    n1, n2 = len(x), len(y)
    if n1 < 2 or n2 < 2:
        raise ValueError("each sample needs n >= 2")
    df = n1 + n2 - 2
    pooled = (float(np.sum((x - x.mean()) ** 2)) + float(np.sum((y - y.mean()) ** 2))) / df
    if not pooled > 0:
        raise ValueError("zero pooled variance")
    t = (float(x.mean()) - float(y.mean())) / math.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
    return TestResult(t, t_sf_two_sided(t, df), (df,))
