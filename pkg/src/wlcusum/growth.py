"""Cumulative drift (growth) functions and the diagnostics built on them.

For a model with per-observation KL increments kl(lag) = expected_llr(lag),
the growth function is

    g(n) = sum_{lag=0}^{n-1} kl(lag),   g(0) = 0,

the total drift the detection statistic accumulates over the first n
post-change observations. Detection delays behave like g^{-1}(threshold), so
window sizing and delay theory both run through the inverse, which is taken
over the piecewise-linear interpolation between the integer knots.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass

import numpy as np

from .models import BetaWaveModel, ObservationModel

__all__ = [
    "GrowthCurve",
    "GrowthConditionReport",
    "Lemma1Report",
    "check_growth_condition",
    "lemma1_diagnostics",
]

_SATURATION_CAP = 50_000_000  # hard stop for inverse extension


class GrowthCurve:
    """Lazily extended cache of cumulative KL increments for one model.

    Thread-safe: cache extension happens under a lock. Instances survive
    pickling (the lock is recreated), so they can ride along into worker
    processes, though plans normally resolve growth-derived quantities before
    dispatch.
    """

    def __init__(self, model: ObservationModel | None = None, *, increments=None):
        if (model is None) == (increments is None):
            raise ValueError("provide exactly one of model or increments")
        self._model = model
        self._increments = increments if increments is not None else model.expected_llr_lags
        # _cum[j] == g(j); index 0 is the empty sum
        self._cum = np.zeros(1)
        self._lock = threading.Lock()
        self._warned_past_peak = False
        if isinstance(model, BetaWaveModel):
            self._peak_lag = math.ceil(model.theta[1])
        else:
            self._peak_lag = None

    @classmethod
    def from_increments(cls, increments) -> "GrowthCurve":
        """Curve over an arbitrary increment function (vectorized over lag)."""
        return cls(increments=increments)

    @property
    def model(self):
        return self._model

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def _warn_if_past_peak(self, n: int):
        if self._peak_lag is not None and n - 1 > self._peak_lag and not self._warned_past_peak:
            self._warned_past_peak = True
            warnings.warn(
                "growth evaluated past the wave peak: KL increments decay back "
                "toward zero there, so the cumulative drift saturates and the "
                "inverse becomes unreliable",
                RuntimeWarning,
                stacklevel=3,
            )

    def _extend_to(self, n: int):
        with self._lock:
            have = len(self._cum) - 1
            if n <= have:
                return
            lags = np.arange(have, n)
            inc = np.asarray(self._increments(lags), dtype=float)
            if np.any(inc < 0):
                raise ValueError("negative KL increment; growth must be nondecreasing")
            self._cum = np.concatenate([self._cum, self._cum[-1] + np.cumsum(inc)])

    def growth(self, n: int) -> float:
        """g(n), the cumulative expected LLR over the first n post-change steps."""
        n = int(n)
        if n < 0:
            raise ValueError(f"n must be >= 0, got {n}")
        self._warn_if_past_peak(n)
        self._extend_to(n)
        return float(self._cum[n])

    def growth_inverse(self, x: float) -> float:
        """Smallest real t with the interpolated g(t) >= x.

        On plateaus (consecutive knots with equal value, which happens where a
        KL increment is exactly zero) the largest t with g(t) == x is returned;
        this is the conservative choice for window sizing. Inverse queries that
        exceed everything the curve can accumulate raise ValueError.
        """
        x = float(x)
        if x < 0:
            raise ValueError(f"x must be >= 0, got {x}")
        # extend until the cache covers x
        while self._cum[-1] < x:
            have = len(self._cum) - 1
            target = max(64, 2 * have)
            if self._peak_lag is not None:
                self._warn_if_past_peak(target)
            if have >= _SATURATION_CAP:
                raise ValueError(
                    f"growth_inverse({x!r}): curve saturated near {self._cum[-1]!r} "
                    "without reaching the target"
                )
            before = self._cum[-1]
            self._extend_to(target)
            gained = self._cum[-1] - before
            if gained <= abs(x) * 1e-15 and self._cum[-1] < x:
                raise ValueError(
                    f"growth_inverse({x!r}): increments have decayed to nothing at "
                    f"n={len(self._cum) - 1} with g={self._cum[-1]!r}; the target "
                    "exceeds the total drift this model accumulates"
                )
        j = int(np.searchsorted(self._cum, x, side="left"))
        if self._cum[j] == x:
            # walk right across any plateau
            while True:
                if j + 1 >= len(self._cum):
                    self._extend_to(j + 1)
                if self._cum[j + 1] != x:
                    break
                j += 1
            return float(j)
        # strictly increasing segment [j-1, j]; solve the linear piece exactly
        lo, hi = self._cum[j - 1], self._cum[j]
        return (j - 1) + (x - lo) / (hi - lo)


@dataclass
class GrowthConditionReport:
    """log g^{-1}(x) / x over a log-spaced grid, plus the admissibility flag.

    The procedure's delay guarantees need log g^{-1}(x) to grow sublinearly in
    x; empirically that shows up as this ratio falling. `satisfied` is True
    when the ratio decreased monotonically over the top decade of the grid.
    """

    x: np.ndarray
    ratio: np.ndarray
    satisfied: bool
    x_max: float

    def as_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "ratio": [float(v) for v in self.ratio],
            "satisfied": bool(self.satisfied),
            "x_max": float(self.x_max),
        }


def check_growth_condition(
    curve: GrowthCurve, x_max: float, points_per_decade: int = 10
) -> GrowthConditionReport:
    """Probe log g^{-1}(x)/x on a log grid up to x_max and flag the trend."""
    x_max = float(x_max)
    if x_max <= 1.0:
        raise ValueError(f"x_max must exceed 1, got {x_max}")
    if points_per_decade < 1:
        raise ValueError(f"points_per_decade must be >= 1, got {points_per_decade}")
    decades = math.log10(x_max)
    num = max(2, round(points_per_decade * decades) + 1)
    xs = np.logspace(0.0, decades, num)
    inv = np.array([curve.growth_inverse(x) for x in xs])
    if np.any(inv <= 0):
        raise ValueError("growth_inverse hit 0 on the grid; raise the grid start")
    ratio = np.log(inv) / xs
    top = xs >= x_max / 10.0
    satisfied = bool(np.all(np.diff(ratio[top]) < 0))
    return GrowthConditionReport(x=xs, ratio=ratio, satisfied=satisfied, x_max=x_max)


@dataclass
class Lemma1Report:
    """Finite-horizon check of the two delay-theory sufficient conditions.

    variance_ratio[i] is sum of LLR variances over the first ns[i] post-change
    steps divided by g(ns[i])^2; the condition wants it tending to 0.
    time_shift_min is the minimum over hypothesis lags l and shifts d of
    E[Z_l under lag l+d] - E[Z_l under lag l]; nonnegative means later change
    points are never harder, the second condition.
    """

    ns: np.ndarray
    variance_ratio: np.ndarray
    time_shift_min: float

    def as_dict(self) -> dict:
        return {
            "n": [int(v) for v in self.ns],
            "variance_ratio": [float(v) for v in self.variance_ratio],
            "time_shift_min": float(self.time_shift_min),
        }


def lemma1_diagnostics(
    model: ObservationModel, n_max: int, shift_max: int = 10
) -> Lemma1Report:
    n_max = int(n_max)
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    curve = GrowthCurve(model)
    variances = np.array([model.llr_variance(lag) for lag in range(n_max)])
    ns = np.arange(2, n_max + 1)
    g = np.array([curve.growth(int(n)) for n in ns])
    if np.any(g <= 0):
        raise ValueError("growth must be positive from n=2 for the variance ratio")
    ratio = np.cumsum(variances)[1:] / g**2
    shift_min = math.inf
    for lag in range(n_max):
        base = model.expected_llr_mismatch(lag, lag)
        for d in range(1, shift_max + 1):
            shift_min = min(shift_min, model.expected_llr_mismatch(lag, lag + d) - base)
    return Lemma1Report(ns=ns, variance_ratio=ratio, time_shift_min=float(shift_min))
