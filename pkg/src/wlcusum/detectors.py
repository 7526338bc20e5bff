"""Sequential detectors built on banks of change-point hypotheses.

Every detector keeps one cumulative log-likelihood-ratio sum lambda_{n,k} per
hypothesized change point k and alarms when a max over the bank crosses its
threshold. Internally the banks are stored in lag order (entry 0 is the newest
hypothesis k = n), because all implemented models have LLR coefficients that
depend on (n, k) only through the lag n - k; one vectorized multiply-add per
step updates the whole bank.

The window-limited variants evict hypotheses older than the window, capping
per-step work; the full-history variant is the exact reference and is the one
whose statistic cannot be simplified into a one-number recursion once the
post-change family drifts with the lag.

Detectors remain steppable after an alarm: the alarm flag is reported per
step, and monitoring code decides whether to stop.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .models import ObservationModel

__all__ = [
    "DetectorOutput",
    "StoppingRecord",
    "WlCusum",
    "FullCusum",
    "WlGlr",
    "SrStatistic",
    "theta_grid",
    "run_until_alarm",
    "trajectory_to_csv",
]


@dataclass
class DetectorOutput:
    """One step's result.

    k_star is the hypothesized change point achieving the max (ties broken
    toward the smallest k); when every hypothesis is negative the empty
    "no change yet" hypothesis wins and k_star = time + 1. theta_hat is the
    maximizing grid point for GLR detectors, None elsewhere.
    """

    time: int
    statistic: float
    alarm: bool
    k_star: int
    theta_hat: float | tuple | None = None


@dataclass
class StoppingRecord:
    """Outcome of running a detector over a stream until its first alarm."""

    time: int
    censored: bool
    statistic: float


def _bank_argmax(lam: np.ndarray, n: int) -> tuple[float, int]:
    """Max over a lag-ordered bank with smallest-k tie-breaking.

    Returns (statistic, k_star) where statistic = max(0, max lambda). The
    empty hypothesis (value 0, index n+1) wins only when every real
    hypothesis is strictly negative.
    """
    best = float(lam.max())
    if best < 0.0:
        return 0.0, n + 1
    # smallest k == largest lag; ties resolved toward the oldest hypothesis
    i = int(np.flatnonzero(lam == best)[-1])
    return best, n - i


class WlCusum:
    """Window-limited CuSum: max over hypotheses k in {max(1, n-m) .. n}.

    Per-step cost is O(window). With threshold b = |ln alpha| the mean time to
    false alarm is at least e^b regardless of the window size.
    """

    def __init__(self, model: ObservationModel, threshold: float, window: int):
        window = int(window)
        if window < 0:
            raise ValueError(f"window must be >= 0, got {window}")
        self.model = model
        self.threshold = float(threshold)
        self.window = window
        slopes, intercepts = model.llr_terms(np.arange(window + 1))
        self._slopes = np.asarray(slopes, dtype=float)
        self._intercepts = np.asarray(intercepts, dtype=float)
        self.reset()

    def reset(self):
        self.time = 0
        self._lam = np.empty(0)
        self.statistic = 0.0

    def hypotheses(self) -> list[tuple[int, float]]:
        """Active (k, lambda_{n,k}) pairs, newest hypothesis first."""
        n = self.time
        return [(n - lag, float(v)) for lag, v in enumerate(self._lam)]

    def step(self, x: float) -> DetectorOutput:
        s = self.model.sufficient_stat(x)  # raises off-support, state unchanged
        n = self.time + 1
        keep = min(len(self._lam), self.window)
        lam = np.empty(keep + 1)
        lam[0] = 0.0
        lam[1:] = self._lam[:keep]
        lam += self._slopes[: keep + 1] * s + self._intercepts[: keep + 1]
        self._lam = lam
        self.time = n
        self.statistic, k_star = _bank_argmax(lam, n)
        return DetectorOutput(
            time=n,
            statistic=self.statistic,
            alarm=self.statistic >= self.threshold,
            k_star=k_star,
        )


class FullCusum:
    """Full-history CuSum: max over every hypothesis k in {1 .. n}.

    O(n) per step and O(n) memory; the exact reference the window-limited
    detector approximates from below. Intended for desk-scale runs and tests.
    """

    def __init__(self, model: ObservationModel, threshold: float):
        self.model = model
        self.threshold = float(threshold)
        self._cap = 64
        slopes, intercepts = model.llr_terms(np.arange(self._cap))
        self._slopes = np.asarray(slopes, dtype=float)
        self._intercepts = np.asarray(intercepts, dtype=float)
        self.reset()

    def reset(self):
        self.time = 0
        self._lam = np.empty(0)
        self.statistic = 0.0

    def hypotheses(self) -> list[tuple[int, float]]:
        n = self.time
        return [(n - lag, float(v)) for lag, v in enumerate(self._lam)]

    def _ensure_capacity(self, n: int):
        while self._cap < n:
            self._cap *= 2
            slopes, intercepts = self.model.llr_terms(np.arange(self._cap))
            self._slopes = np.asarray(slopes, dtype=float)
            self._intercepts = np.asarray(intercepts, dtype=float)

    def step(self, x: float) -> DetectorOutput:
        s = self.model.sufficient_stat(x)
        n = self.time + 1
        self._ensure_capacity(n)
        lam = np.empty(n)
        lam[0] = 0.0
        lam[1:] = self._lam
        lam += self._slopes[:n] * s + self._intercepts[:n]
        self._lam = lam
        self.time = n
        self.statistic, k_star = _bank_argmax(lam, n)
        return DetectorOutput(
            time=n,
            statistic=self.statistic,
            alarm=self.statistic >= self.threshold,
            k_star=k_star,
        )


def theta_grid(bounds, counts) -> np.ndarray:
    """Evaluation grid over a parameter box, cell midpoints per dimension.

    bounds: (lo, hi) for a scalar parameter or a sequence of (lo, hi) pairs.
    counts: points per dimension (int, or one int per dimension). Returns a
    (G,) array for one dimension, else a (G, d) array whose rows are in
    lexicographic order (so first-index argmax picks the smallest theta).
    Midpoints keep open-interval boxes honest: neither endpoint is a point.
    """
    arr = np.asarray(bounds, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2)
        scalar = True
    else:
        scalar = False
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"bounds must be (lo, hi) or a sequence of pairs, got {bounds!r}")
    d = arr.shape[0]
    if np.isscalar(counts) or isinstance(counts, (int, np.integer)):
        counts = [int(counts)] * d
    counts = [int(c) for c in counts]
    if len(counts) != d or any(c < 1 for c in counts):
        raise ValueError(f"counts must give >= 1 points per dimension, got {counts!r}")
    axes = []
    for (lo, hi), c in zip(arr, counts):
        if not (lo < hi):
            raise ValueError(f"need lo < hi in every dimension, got ({lo}, {hi})")
        axes.append(lo + (np.arange(c) + 0.5) * (hi - lo) / c)
    if scalar:
        return axes[0]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


class WlGlr:
    """Window-limited GLR-CuSum: max over hypotheses and a grid of theta.

    The post-change parameter is unknown inside a box; each grid point gets its
    own LLR bank (built by overriding the model's theta) and the statistic is
    the max over grid points and hypotheses. Per-step cost O(window * grid).
    """

    def __init__(self, model: ObservationModel, threshold: float, window: int, grid):
        window = int(window)
        if window < 0:
            raise ValueError(f"window must be >= 0, got {window}")
        grid = np.asarray(grid, dtype=float)
        if grid.ndim == 1:
            points = [float(t) for t in grid]
        elif grid.ndim == 2:
            points = [tuple(float(v) for v in row) for row in grid]
        else:
            raise ValueError("grid must be a (G,) or (G, d) array of theta points")
        if not points:
            raise ValueError("grid must contain at least one theta point")
        self.model = model
        self.threshold = float(threshold)
        self.window = window
        self.grid = points
        lags = np.arange(window + 1)
        slopes, intercepts = [], []
        for t in points:
            s, c = model.with_theta(t).llr_terms(lags)
            slopes.append(s)
            intercepts.append(c)
        self._slopes = np.asarray(slopes, dtype=float)  # (G, window+1)
        self._intercepts = np.asarray(intercepts, dtype=float)
        self.reset()

    def reset(self):
        self.time = 0
        self._lam = np.empty((len(self.grid), 0))
        self.statistic = 0.0

    def step(self, x: float) -> DetectorOutput:
        s = self.model.sufficient_stat(x)
        n = self.time + 1
        keep = min(self._lam.shape[1], self.window)
        count = keep + 1
        lam = np.empty((len(self.grid), count))
        lam[:, 0] = 0.0
        lam[:, 1:] = self._lam[:, :keep]
        lam += self._slopes[:, :count] * s + self._intercepts[:, :count]
        self._lam = lam
        self.time = n
        per_lag = lam.max(axis=0)
        self.statistic, k_star = _bank_argmax(per_lag, n)
        if k_star == n + 1:
            theta_hat = None
        else:
            col = lam[:, n - k_star]
            # grid rows are lexicographically ordered; argmax takes the first
            theta_hat = self.grid[int(np.argmax(col))]
        return DetectorOutput(
            time=n,
            statistic=self.statistic,
            alarm=self.statistic >= self.threshold,
            k_star=k_star,
            theta_hat=theta_hat,
        )


class SrStatistic:
    """Shiryaev-Roberts statistic R_n = sum over k <= n of exp(lambda_{n,k}).

    Kept in the log domain so overflow cannot corrupt the accumulation.
    Under the pre-change law, E[R_n] = n exactly, which makes this the
    Monte-Carlo oracle backing the false-alarm calibration. Full history,
    desk-scale use.
    """

    def __init__(self, model: ObservationModel, threshold: float = math.inf):
        self.model = model
        self.threshold = float(threshold)
        self._cap = 64
        slopes, intercepts = model.llr_terms(np.arange(self._cap))
        self._slopes = np.asarray(slopes, dtype=float)
        self._intercepts = np.asarray(intercepts, dtype=float)
        self.reset()

    def reset(self):
        self.time = 0
        self._lam = np.empty(0)

    @property
    def log_value(self) -> float:
        if len(self._lam) == 0:
            return -math.inf  # R_0 = 0
        return float(logsumexp(self._lam))

    @property
    def value(self) -> float:
        return float(math.exp(min(self.log_value, 709.0)) if self.log_value < math.inf else math.inf)

    def _ensure_capacity(self, n: int):
        while self._cap < n:
            self._cap *= 2
            slopes, intercepts = self.model.llr_terms(np.arange(self._cap))
            self._slopes = np.asarray(slopes, dtype=float)
            self._intercepts = np.asarray(intercepts, dtype=float)

    def step(self, x: float) -> DetectorOutput:
        s = self.model.sufficient_stat(x)
        n = self.time + 1
        self._ensure_capacity(n)
        lam = np.empty(n)
        lam[0] = 0.0
        lam[1:] = self._lam
        lam += self._slopes[:n] * s + self._intercepts[:n]
        self._lam = lam
        self.time = n
        value = self.value
        _, k_star = _bank_argmax(lam, n)
        return DetectorOutput(
            time=n,
            statistic=value,
            alarm=value >= self.threshold,
            k_star=k_star,
        )


def run_until_alarm(detector, observations, max_steps: int | None = None) -> StoppingRecord:
    """Feed observations until the first alarm.

    Steps are counted from this call, so pass a freshly built (or reset)
    detector for stopping-time semantics. A nonpositive threshold alarms on
    the first observation since the statistics are nonnegative. censored=True
    means the stream ran out (or max_steps was hit) without an alarm.
    """
    if max_steps is not None:
        max_steps = int(max_steps)
        if max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {max_steps}")
    steps = 0
    statistic = 0.0
    for x in observations:
        out = detector.step(x)
        steps += 1
        statistic = out.statistic
        if out.alarm:
            return StoppingRecord(time=steps, censored=False, statistic=statistic)
        if max_steps is not None and steps >= max_steps:
            break
    return StoppingRecord(time=steps, censored=True, statistic=statistic)


def trajectory_to_csv(outputs, path):
    """Write per-step detector outputs as CSV.

    Columns: time, statistic, alarm (0/1), k_star, then the theta estimate
    (theta_hat for scalar grids, theta0..theta{d-1} for boxes) when present.
    """
    outputs = list(outputs)
    theta_cols: list[str] = []
    for out in outputs:
        if out.theta_hat is not None:
            if isinstance(out.theta_hat, tuple):
                theta_cols = [f"theta{i}" for i in range(len(out.theta_hat))]
            else:
                theta_cols = ["theta_hat"]
            break
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "statistic", "alarm", "k_star", *theta_cols])
        for out in outputs:
            row = [out.time, repr(float(out.statistic)), int(out.alarm), out.k_star]
            if theta_cols:
                if out.theta_hat is None:
                    row.extend([""] * len(theta_cols))
                elif isinstance(out.theta_hat, tuple):
                    row.extend(repr(float(v)) for v in out.theta_hat)
                else:
                    row.append(repr(float(out.theta_hat)))
            writer.writerow(row)
