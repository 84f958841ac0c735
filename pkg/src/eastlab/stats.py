"""Estimators and tests used by the experiment harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from statsmodels.duration.survfunc import SurvfuncRight

from .errors import ConfigurationError, StatisticalError

__all__ = [
    "ChiSquareResult",
    "FitResult",
    "KaplanMeier",
    "binomial_pvalue",
    "chi_square_gof",
    "chi_square_two_sample",
    "dkw_epsilon",
    "fit_exponential_tail",
    "fit_linear",
    "kaplan_meier",
    "standard_error",
]


@dataclass(frozen=True)
class FitResult:
    """A fitted model with a confidence interval for its main parameter.

    ``ci`` bounds the slope (linear) or the rate (exponential tail).
    ``n_boot`` is 0 when the interval is analytic.
    """

    model: str
    estimates: dict
    ci: tuple
    ci_level: float
    goodness: dict
    n_boot: int = 0

    def __post_init__(self):
        lo, hi = self.ci
        if not lo <= hi:
            raise StatisticalError(f"unordered confidence interval {self.ci}")

    def excludes_zero(self) -> bool:
        lo, hi = self.ci
        return lo > 0 or hi < 0

    def as_dict(self) -> dict:
        return {"model": self.model, "estimates": dict(self.estimates), "ci": list(self.ci),
                "ci_level": self.ci_level, "goodness": dict(self.goodness), "n_boot": self.n_boot}


def fit_linear(x, y, ci_level: float = 0.99) -> FitResult:
    """Least-squares line with R² and a Student-t interval for the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigurationError("x and y must be 1-d arrays of equal length")
    if x.size < 3:
        raise ConfigurationError("a linear fit needs at least 3 points")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise ConfigurationError("non-finite input")
    if np.ptp(x) == 0:
        raise ConfigurationError("degenerate input: x has zero variance")
    res = sps.linregress(x, y)
    fitted = res.intercept + res.slope * x
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    half = sps.t.ppf(0.5 + ci_level / 2, x.size - 2) * res.stderr if x.size > 2 else math.inf
    return FitResult("linear", {"slope": float(res.slope), "intercept": float(res.intercept),
                                "slope_stderr": float(res.stderr)},
                     (float(res.slope - half), float(res.slope + half)), ci_level, {"r2": r2})


def fit_exponential_tail(samples, threshold: float | None = None, censored=None, *,
                         n_boot: int = 1000, ci_level: float = 0.99, seed: int = 0,
                         min_tail: int = 100) -> FitResult:
    """Rate of an exponential tail beyond ``threshold`` (default: the median).

    The estimate is the censored maximum-likelihood rate: the number of
    uncensored samples beyond the threshold divided by their total excess
    time.  The interval is a percentile bootstrap over the tail samples.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1)
    censored = (np.zeros(samples.size, dtype=bool) if censored is None
                else np.asarray(censored, dtype=bool).reshape(-1))
    if censored.shape != samples.shape:
        raise ConfigurationError("censoring flags must match the samples")
    if samples.size == 0 or not np.all(np.isfinite(samples)):
        raise ConfigurationError("samples must be finite and non-empty")
    if np.ptp(samples) == 0:
        raise ConfigurationError("degenerate input: samples have zero variance")
    if threshold is None:
        threshold = float(np.median(samples))
    tail = samples > threshold
    if int(tail.sum()) < min_tail:
        raise StatisticalError(f"only {int(tail.sum())} samples beyond the threshold; need {min_tail}")
    excess = samples[tail] - threshold
    events = ~censored[tail]
    exposure = float(math.fsum(excess))
    if events.sum() == 0:
        raise StatisticalError("no uncensored samples beyond the threshold")
    rate = float(events.sum()) / exposure
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, excess.size, size=(n_boot, excess.size))
    boot = events[idx].sum(axis=1) / excess[idx].sum(axis=1)
    alpha = 1.0 - ci_level
    lo, hi = np.quantile(boot, [alpha / 2, 1 - alpha / 2])
    observed = excess[events]
    ks = sps.kstest(observed, "expon", args=(0, 1 / rate)).statistic if observed.size else math.nan
    estimates = {"rate": rate, "threshold": float(threshold), "n_tail": int(excess.size),
                 "n_events": int(events.sum()), "exposure": exposure}
    return FitResult("exponential-tail", estimates, (float(lo), float(hi)), ci_level,
                     {"ks": float(ks)}, int(n_boot))


@dataclass(frozen=True)
class KaplanMeier:
    """Kaplan–Meier survival estimate: ``survival[k]`` holds on ``[times[k], times[k+1])``."""

    times: np.ndarray
    survival: np.ndarray
    n: int
    n_censored: int

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right")
        return np.where(k == 0, 1.0, self.survival[np.maximum(k - 1, 0)])

    def sup_distance(self, survival_fn) -> float:
        """Supremum over ``t`` of the gap to a continuous survival function."""
        if self.times.size == 0:
            return 0.0
        exact = np.asarray(survival_fn(self.times), dtype=float)
        before = np.concatenate(([1.0], self.survival[:-1]))
        return float(max(np.max(np.abs(exact - self.survival)), np.max(np.abs(exact - before))))


def kaplan_meier(times, censored=None) -> KaplanMeier:
    """Survival estimate from right-censored times."""
    times = np.asarray(times, dtype=float).reshape(-1)
    censored = (np.zeros(times.size, dtype=bool) if censored is None
                else np.asarray(censored, dtype=bool).reshape(-1))
    if times.size == 0:
        raise ConfigurationError("no samples")
    if np.all(censored):
        return KaplanMeier(np.empty(0), np.empty(0), int(times.size), int(times.size))
    sf = SurvfuncRight(times, (~censored).astype(int))
    return KaplanMeier(np.asarray(sf.surv_times, dtype=float), np.asarray(sf.surv_prob, dtype=float),
                       int(times.size), int(censored.sum()))


def dkw_epsilon(n: int, alpha: float = 0.01) -> float:
    """Half-width of the Dvoretzky–Kiefer–Wolfowitz band with coverage ``1 - alpha``."""
    if n <= 0 or not 0 < alpha < 1:
        raise ConfigurationError("need n > 0 and 0 < alpha < 1")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def standard_error(p_hat, n) -> np.ndarray:
    """Binomial standard error ``sqrt(p (1 - p) / n)``."""
    return np.sqrt(np.asarray(p_hat) * (1 - np.asarray(p_hat)) / np.asarray(n))


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    pvalue: float
    observed: tuple = field(default=())
    expected: tuple = field(default=())


def _pool(observed: np.ndarray, expected: np.ndarray, min_expected: float):
    order = np.argsort(expected, kind="stable")
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for k in order:
        acc_o += observed[k]
        acc_e += expected[k]
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp:
            obs[-1] += acc_o
            exp[-1] += acc_e
        else:
            obs.append(acc_o)
            exp.append(acc_e)
    return np.array(obs), np.array(exp)


def chi_square_gof(observed, probs, min_expected: float = 5.0) -> ChiSquareResult:
    """Pearson goodness-of-fit test of counts against cell probabilities.

    Cells whose expected count is below ``min_expected`` are merged, smallest first.
    """
    observed = np.asarray(observed, dtype=float).reshape(-1)
    probs = np.asarray(probs, dtype=float).reshape(-1)
    if observed.shape != probs.shape:
        raise ConfigurationError("observed counts and probabilities differ in length")
    total = observed.sum()
    if total <= 0:
        raise StatisticalError("no observations")
    expected = probs / probs.sum() * total
    obs, exp = _pool(observed, expected, min_expected)
    if obs.size < 2:
        return ChiSquareResult(0.0, 0, 1.0, tuple(obs), tuple(exp))
    stat, pvalue = sps.chisquare(obs, exp)
    return ChiSquareResult(float(stat), int(obs.size - 1), float(pvalue), tuple(obs), tuple(exp))


def chi_square_two_sample(counts_a, counts_b) -> ChiSquareResult:
    """Homogeneity test of two count vectors over the same cells."""
    table = np.vstack([np.asarray(counts_a, dtype=float), np.asarray(counts_b, dtype=float)])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return ChiSquareResult(0.0, 0, 1.0)
    stat, pvalue, dof, _ = sps.chi2_contingency(table, correction=False)
    return ChiSquareResult(float(stat), int(dof), float(pvalue))


def binomial_pvalue(k: int, n: int, p: float) -> float:
    """Two-sided exact binomial test."""
    return float(sps.binomtest(int(k), int(n), float(p)).pvalue)
