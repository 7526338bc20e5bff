"""Observation models for sequential change detection.

Each model pairs a fixed pre-change density p0 with a family of post-change
densities p1(.; lag) indexed by the time elapsed since the change point.
The post-change family is allowed to drift with that lag, which is what makes
the detection problem non-stationary.

All three concrete models admit a log-likelihood ratio that is affine in a
scalar sufficient statistic of the observation,

    Z(x; lag) = slope(lag) * t(x) + intercept(lag),

with t(x) = x for the Gaussian models and t(x) = log(x) for the Beta model.
Detectors exploit this to update whole banks of hypotheses with a handful of
vectorized operations per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, stats

__all__ = [
    "SupportError",
    "ObservationModel",
    "GemModel",
    "DecayModel",
    "BetaWaveModel",
    "wave_multiplier",
    "build_model",
]


class SupportError(ValueError):
    """Observation lies outside the support of the model's densities."""


def _check_lag(lag) -> int:
    if isinstance(lag, (bool, float)) and not float(lag).is_integer():
        raise ValueError(f"lag must be a non-negative integer, got {lag!r}")
    lag = int(lag)
    if lag < 0:
        raise ValueError(f"lag must be a non-negative integer, got {lag}")
    return lag


def _check_times(n, k) -> int:
    """Validate a (time, hypothesized change point) pair; returns the lag."""
    n, k = int(n), int(k)
    if k < 1:
        raise ValueError(f"change-point index k must be >= 1, got {k}")
    if n < k:
        raise ValueError(f"time n={n} precedes hypothesized change point k={k}")
    return n - k


class ObservationModel:
    """Shared behaviour for pre/post density pairs with lag-indexed drift.

    Subclasses provide densities, samplers, the affine log-likelihood-ratio
    coefficients, and moment formulas. Instances are immutable and safe to
    share across threads and worker processes.
    """

    # -- densities ---------------------------------------------------------

    def log_pre_density(self, x: float) -> float:
        raise NotImplementedError

    def log_post_density(self, x: float, n: int, k: int) -> float:
        raise NotImplementedError

    def log_likelihood_ratio(self, x: float, n: int, k: int) -> float:
        """log p1(x; n - k) - log p0(x) for an observation at time n >= k."""
        lag = _check_times(n, k)
        self.sufficient_stat(x)  # reject out-of-support x before evaluating
        return self.log_post_density(x, n, k) - self.log_pre_density(x)

    # -- affine representation used by detectors ---------------------------

    def sufficient_stat(self, x: float) -> float:
        """Scalar statistic t(x); raises SupportError off the support."""
        raise NotImplementedError

    def llr_terms(self, lags: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(slopes, intercepts) with Z(x; lag) = slope * t(x) + intercept."""
        raise NotImplementedError

    # -- sampling ----------------------------------------------------------

    def sample_pre(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def sample_post_lags(self, rng: np.random.Generator, lags: np.ndarray):
        raise NotImplementedError

    def sample_post(self, rng: np.random.Generator, n: int, nu: int) -> float:
        """One draw from the post-change density at time n, change at nu."""
        lag = _check_times(n, nu)
        return float(self.sample_post_lags(rng, np.array([lag]))[0])

    def sample_segment(self, rng: np.random.Generator, nu, start: int, length: int):
        """Draws for times start .. start+length-1 with change point nu.

        nu may be math.inf for a pure pre-change stream. Times are 1-based;
        the observation at time n is post-change iff n >= nu, at lag n - nu.
        """
        if length <= 0:
            return np.empty(0)
        times = np.arange(start, start + length)
        if math.isinf(nu):
            return np.asarray(self.sample_pre(rng, size=length), dtype=float)
        nu = int(nu)
        n_pre = int(np.count_nonzero(times < nu))
        out = np.empty(length)
        if n_pre:
            out[:n_pre] = self.sample_pre(rng, size=n_pre)
        if n_pre < length:
            out[n_pre:] = self.sample_post_lags(rng, times[n_pre:] - nu)
        return out

    # -- moments -----------------------------------------------------------

    def expected_llr(self, lag: int) -> float:
        """Mean of Z(X; lag) when X is post-change at that same lag.

        This is the per-observation KL divergence between the lag-`lag`
        post-change density and the pre-change density; it is the increment
        of the cumulative drift (growth) function.
        """
        lag = _check_lag(lag)
        return float(self.expected_llr_lags(np.array([lag]))[0])

    def expected_llr_lags(self, lags: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def expected_llr_mismatch(self, hyp_lag: int, true_lag: int) -> float:
        """Mean of the lag-`hyp_lag` LLR when the data sit at `true_lag`."""
        raise NotImplementedError

    def llr_variance(self, lag: int) -> float:
        """Variance of Z(X; lag) when X is post-change at that same lag."""
        raise NotImplementedError

    # -- post-change parameter override (GLR grids) -------------------------

    def with_theta(self, theta) -> "ObservationModel":
        """Copy of this model with the post-change drift parameter replaced."""
        raise NotImplementedError

    @property
    def theta_dim(self) -> int:
        raise NotImplementedError


def _norm_logpdf(x: float, mean: float, var: float) -> float:
    return -0.5 * math.log(2.0 * math.pi * var) - (x - mean) ** 2 / (2.0 * var)


def _check_real(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise SupportError(f"observation must be a finite real number, got {x!r}")
    return x


@dataclass(frozen=True)
class GemModel(ObservationModel):
    """Gaussian observations whose post-change mean grows exponentially.

    Pre-change:  X ~ N(mu0, sigma0_sq)
    Post-change: X at lag l ~ N(mu0 * exp(theta * l), sigma0_sq), l = n - nu.

    The log-likelihood ratio against a change at k is

        Z(x; l) = (mu0 / sigma0_sq) (e^{theta l} - 1) x
                  - mu0^2 (e^{2 theta l} - 1) / (2 sigma0_sq),  l = n - k,

    and the per-observation KL divergence at lag l is
    mu0^2 (e^{theta l} - 1)^2 / (2 sigma0_sq).
    """

    mu0: float
    sigma0_sq: float
    theta: float

    def __post_init__(self):
        if not (self.mu0 > 0):
            raise ValueError(f"mu0 must be > 0, got {self.mu0}")
        if not (self.sigma0_sq > 0):
            raise ValueError(f"sigma0_sq must be > 0, got {self.sigma0_sq}")
        if not (self.theta > 0):
            raise ValueError(f"theta must be > 0, got {self.theta}")

    def log_pre_density(self, x: float) -> float:
        return _norm_logpdf(_check_real(x), self.mu0, self.sigma0_sq)

    def log_post_density(self, x: float, n: int, k: int) -> float:
        lag = _check_times(n, k)
        mean = self.mu0 * math.exp(self.theta * lag)
        return _norm_logpdf(_check_real(x), mean, self.sigma0_sq)

    def sufficient_stat(self, x: float) -> float:
        return _check_real(x)

    def llr_terms(self, lags):
        lags = np.asarray(lags, dtype=float)
        with np.errstate(over="ignore"):
            growth = np.exp(self.theta * lags)
            slopes = self.mu0 / self.sigma0_sq * (growth - 1.0)
            intercepts = -self.mu0**2 / (2.0 * self.sigma0_sq) * (growth**2 - 1.0)
        # at extreme lags the quadratic term overflows; the ratio itself tends
        # to -inf for any bounded observation, so pin it there instead of
        # letting inf * x - inf turn into NaN inside a detector bank
        dead = ~(np.isfinite(slopes) & np.isfinite(intercepts))
        if np.any(dead):
            slopes = np.where(dead, 0.0, slopes)
            intercepts = np.where(dead, -np.inf, intercepts)
        return slopes, intercepts

    def sample_pre(self, rng, size=None):
        return rng.normal(self.mu0, math.sqrt(self.sigma0_sq), size)

    def sample_post_lags(self, rng, lags):
        means = self.mu0 * np.exp(self.theta * np.asarray(lags, dtype=float))
        return rng.normal(means, math.sqrt(self.sigma0_sq))

    def expected_llr_lags(self, lags):
        lags = np.asarray(lags, dtype=float)
        return self.mu0**2 / (2.0 * self.sigma0_sq) * (np.exp(self.theta * lags) - 1.0) ** 2

    def expected_llr_mismatch(self, hyp_lag, true_lag):
        l, t = _check_lag(hyp_lag), _check_lag(true_lag)
        a = math.exp(self.theta * l) - 1.0
        return (
            self.mu0**2
            / self.sigma0_sq
            * (a * math.exp(self.theta * t) - (math.exp(2.0 * self.theta * l) - 1.0) / 2.0)
        )

    def llr_variance(self, lag):
        lag = _check_lag(lag)
        # slope^2 * Var[X]; the observation variance is sigma0_sq at every lag
        return self.mu0**2 / self.sigma0_sq * (math.exp(self.theta * lag) - 1.0) ** 2

    def with_theta(self, theta):
        return replace(self, theta=float(theta))

    @property
    def theta_dim(self):
        return 1


@dataclass(frozen=True)
class DecayModel(ObservationModel):
    """Gaussian observations whose post-change mean decays polynomially.

    Pre-change:  X ~ N(0, sigma_sq)
    Post-change: X at lag l ~ N(mu1 * (l + 1)^{-theta}, sigma_sq),
    with 0 < theta < 1/2 so the cumulative drift still diverges.
    """

    mu1: float
    sigma_sq: float
    theta: float

    def __post_init__(self):
        if not (self.mu1 > 0):
            raise ValueError(f"mu1 must be > 0, got {self.mu1}")
        if not (self.sigma_sq > 0):
            raise ValueError(f"sigma_sq must be > 0, got {self.sigma_sq}")
        if not (0.0 < self.theta < 0.5):
            raise ValueError(f"theta must lie in (0, 0.5), got {self.theta}")

    def _post_mean(self, lags):
        return self.mu1 * (np.asarray(lags, dtype=float) + 1.0) ** (-self.theta)

    def log_pre_density(self, x: float) -> float:
        return _norm_logpdf(_check_real(x), 0.0, self.sigma_sq)

    def log_post_density(self, x: float, n: int, k: int) -> float:
        lag = _check_times(n, k)
        return _norm_logpdf(_check_real(x), float(self._post_mean(lag)), self.sigma_sq)

    def sufficient_stat(self, x: float) -> float:
        return _check_real(x)

    def llr_terms(self, lags):
        means = self._post_mean(lags)
        return means / self.sigma_sq, -(means**2) / (2.0 * self.sigma_sq)

    def sample_pre(self, rng, size=None):
        return rng.normal(0.0, math.sqrt(self.sigma_sq), size)

    def sample_post_lags(self, rng, lags):
        return rng.normal(self._post_mean(lags), math.sqrt(self.sigma_sq))

    def expected_llr_lags(self, lags):
        return self._post_mean(lags) ** 2 / (2.0 * self.sigma_sq)

    def expected_llr_mismatch(self, hyp_lag, true_lag):
        l, t = _check_lag(hyp_lag), _check_lag(true_lag)
        m_l = float(self._post_mean(l))
        m_t = float(self._post_mean(t))
        return (m_l * m_t - m_l**2 / 2.0) / self.sigma_sq

    def llr_variance(self, lag):
        lag = _check_lag(lag)
        return float(self._post_mean(lag)) ** 2 / self.sigma_sq

    def with_theta(self, theta):
        return replace(self, theta=float(theta))

    @property
    def theta_dim(self):
        return 1


def wave_multiplier(theta, lag):
    """Bell-shaped multiplier applied to the Beta shape parameter after a change.

        h(lag) = 1 + (10^{theta0} / theta2) * exp(-(lag - theta1)^2 / (2 theta2^2))

    theta = (theta0, theta1, theta2): log10 amplitude, peak location (days since
    the change), and peak width. Always >= 1, so the post-change mean fraction
    never drops below the pre-change mean. Vectorized over lag.
    """
    t0, t1, t2 = (float(v) for v in theta)
    if not (t2 > 0):
        raise ValueError(f"theta2 must be > 0, got {t2}")
    if t0 < 0 or t1 < 0:
        raise ValueError(f"theta0 and theta1 must be >= 0, got {theta}")
    lag = np.asarray(lag, dtype=float)
    out = 1.0 + 10.0**t0 / t2 * np.exp(-((lag - t1) ** 2) / (2.0 * t2**2))
    return out if out.ndim else float(out)


def _beta_focus_points(a: float, b: float) -> list[float]:
    """Interior abscissae marking where a Beta(a, b) density concentrates.

    Both Beta densities involved here are extremely concentrated (b is of
    order 1e5 in the epidemic application), so adaptive quadrature over (0, 1)
    needs hints or it will step right over the spike.
    """
    mean = a / (a + b)
    sd = math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))
    pts = [mean + c * sd for c in (-30.0, -5.0, 0.0, 5.0, 30.0, 200.0)]
    return [p for p in pts if 0.0 < p < 1.0]


@dataclass(frozen=True)
class BetaWaveModel(ObservationModel):
    """Beta-distributed fractions with a transient wave after the change.

    Pre-change:  X ~ Beta(a0, b0)
    Post-change: X at lag l ~ Beta(a0 * h(l), b0), h from wave_multiplier.

    Since h >= 1 rises to a single peak and relaxes back toward 1, the
    post-change distributions drift away from p0 and then return to it;
    moments with no closed form (KL divergence, LLR variance) are computed by
    adaptive quadrature with absolute tolerance 1e-10.
    """

    a0: float
    b0: float
    theta: tuple[float, float, float]

    def __post_init__(self):
        if not (self.a0 > 0):
            raise ValueError(f"a0 must be > 0, got {self.a0}")
        if not (self.b0 > 0):
            raise ValueError(f"b0 must be > 0, got {self.b0}")
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        if len(self.theta) != 3:
            raise ValueError(f"theta must be a (theta0, theta1, theta2) triple, got {self.theta}")
        wave_multiplier(self.theta, 0.0)  # validates the triple

    def h(self, lag):
        return wave_multiplier(self.theta, lag)

    def _post_shape(self, lags):
        return self.a0 * np.asarray(self.h(lags), dtype=float)

    def log_pre_density(self, x: float) -> float:
        x = float(x)
        if math.isnan(x) or x < 0.0 or x > 1.0:
            raise SupportError(f"observation must lie in [0, 1], got {x!r}")
        # -inf (or +inf for shape < 1) is acceptable at the boundary
        return float(stats.beta.logpdf(x, self.a0, self.b0))

    def log_post_density(self, x: float, n: int, k: int) -> float:
        lag = _check_times(n, k)
        x = float(x)
        if math.isnan(x) or x < 0.0 or x > 1.0:
            raise SupportError(f"observation must lie in [0, 1], got {x!r}")
        return float(stats.beta.logpdf(x, float(self._post_shape(lag)), self.b0))

    def sufficient_stat(self, x: float) -> float:
        x = float(x)
        if not (0.0 < x < 1.0):  # also rejects NaN
            raise SupportError(f"observation must lie strictly inside (0, 1), got {x!r}")
        return math.log(x)

    def llr_terms(self, lags):
        from scipy.special import gammaln

        a1 = self._post_shape(lags)
        slopes = a1 - self.a0
        intercepts = (
            gammaln(a1 + self.b0)
            - gammaln(a1)
            - gammaln(self.a0 + self.b0)
            + gammaln(self.a0)
        )
        return slopes, np.asarray(intercepts, dtype=float)

    def sample_pre(self, rng, size=None):
        return rng.beta(self.a0, self.b0, size)

    def sample_post_lags(self, rng, lags):
        return rng.beta(self._post_shape(lags), self.b0)

    def _llr_moment_under(self, hyp_lag: int, true_lag: int, power: int) -> float:
        """E[ Z(X; hyp_lag)^power ] with X ~ Beta(a0 h(true_lag), b0), by quadrature."""
        slopes, intercepts = self.llr_terms(np.array([hyp_lag]))
        s, c = float(slopes[0]), float(intercepts[0])
        a_true = float(self._post_shape(true_lag))
        dist = stats.beta(a_true, self.b0)

        def integrand(x):
            return (s * math.log(x) + c) ** power * dist.pdf(x)

        val, _ = integrate.quad(
            integrand,
            0.0,
            1.0,
            points=_beta_focus_points(a_true, self.b0),
            limit=300,
            epsabs=1e-10,
            epsrel=1e-10,
        )
        return val

    def expected_llr_lags(self, lags):
        lags = np.atleast_1d(np.asarray(lags))
        return np.array([self._llr_moment_under(_check_lag(l), _check_lag(l), 1) for l in lags])

    def expected_llr_mismatch(self, hyp_lag, true_lag):
        return self._llr_moment_under(_check_lag(hyp_lag), _check_lag(true_lag), 1)

    def llr_variance(self, lag):
        lag = _check_lag(lag)
        m1 = self._llr_moment_under(lag, lag, 1)
        m2 = self._llr_moment_under(lag, lag, 2)
        return m2 - m1**2

    def with_theta(self, theta):
        return replace(self, theta=tuple(float(v) for v in theta))

    @property
    def theta_dim(self):
        return 3


_MODEL_KINDS = {
    "gem": (GemModel, ("mu0", "sigma0_sq", "theta")),
    "decay": (DecayModel, ("mu1", "sigma_sq", "theta")),
    "betawave": (BetaWaveModel, ("a0", "b0", "theta")),
}


def build_model(kind: str, **params) -> ObservationModel:
    """Construct a model from a flat configuration (CLI flags, config files).

    kind is one of 'gem', 'decay', 'betawave'. For 'betawave', theta may be
    given either as a triple or as separate theta0/theta1/theta2 entries.
    """
    key = kind.lower()
    if key not in _MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(_MODEL_KINDS)}")
    cls, fields = _MODEL_KINDS[key]
    if key == "betawave" and "theta" not in params:
        try:
            params = {
                "a0": params["a0"],
                "b0": params["b0"],
                "theta": (params["theta0"], params["theta1"], params["theta2"]),
            }
        except KeyError as exc:
            raise ValueError(f"betawave model requires a0, b0, theta0, theta1, theta2") from exc
    missing = [f for f in fields if f not in params]
    if missing:
        raise ValueError(f"model {kind!r} missing parameters: {missing}")
    extra = [f for f in params if f not in fields]
    if extra:
        raise ValueError(f"model {kind!r} got unexpected parameters: {extra}")
    return cls(**{f: params[f] for f in fields})
