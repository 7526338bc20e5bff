"""Shared test helpers."""

import numpy as np

from wlcusum.models import ObservationModel


class ShiftModel(ObservationModel):
    """Stationary N(0,1) -> N(delta,1) mean shift.

    The post-change law does not depend on the lag, so the classical
    one-number Page recursion W_n = max(0, W_{n-1} + Z_n) is exact and serves
    as an independent oracle for the bank-based detectors.
    """

    def __init__(self, delta: float):
        self.delta = float(delta)

    def sufficient_stat(self, x):
        x = float(x)
        if not np.isfinite(x):
            raise ValueError(f"observation must be finite, got {x}")
        return x

    def llr_terms(self, lags):
        lags = np.asarray(lags)
        slopes = np.full(lags.shape, self.delta, dtype=float)
        intercepts = np.full(lags.shape, -0.5 * self.delta**2, dtype=float)
        return slopes, intercepts

    def log_pre_density(self, x):
        return -0.5 * float(x) ** 2 - 0.5 * np.log(2.0 * np.pi)

    def log_post_density(self, x, n, k):
        return -0.5 * (float(x) - self.delta) ** 2 - 0.5 * np.log(2.0 * np.pi)

    def sample_pre(self, rng, size=None):
        return rng.normal(0.0, 1.0, size=size)

    def sample_post_lags(self, rng, lags):
        lags = np.asarray(lags)
        return rng.normal(self.delta, 1.0, size=lags.shape)

    def scalar_llr(self, x) -> float:
        return self.delta * float(x) - 0.5 * self.delta**2
