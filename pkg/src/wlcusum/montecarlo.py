"""Monte-Carlo evaluation: false-alarm and delay estimation for detectors.

Trials are independent work items. Trial i draws its observations from a
dedicated RNG substream keyed by (master seed, i), so results are bit-for-bit
reproducible no matter how trials are scheduled across workers, and estimates
are invariant to the worker count. Results are reduced in trial-index order.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .calibration import GlrThresholdInputs, cusum_threshold, window_size
from .detectors import FullCusum, WlCusum, WlGlr, run_until_alarm
from .growth import GrowthCurve
from .models import ObservationModel

__all__ = [
    "TrialPlan",
    "DelayEstimate",
    "OcRow",
    "QqReport",
    "run_trials",
    "estimate_mtfa",
    "estimate_add",
    "operating_characteristic",
    "geometric_qq",
    "oc_to_csv",
    "qq_to_csv",
]

_STREAM_BLOCK = 512
_MAX_DEFAULT_STEPS = 10_000_000

_DETECTOR_KINDS = ("wl-cusum", "full-cusum", "wl-glr")


@dataclass(frozen=True, eq=False)
class TrialPlan:
    """Everything one batch of trials needs, picklable for worker dispatch.

    nu is the true change point (1-based); math.inf means no change ever
    happens (false-alarm runs). max_steps=None picks a default: 50 * e^b for
    false-alarm runs, nu - 1 + 100 * g^{-1}(b) for delay runs.
    """

    model: ObservationModel
    detector: str
    threshold: float
    window: int | None = None
    grid: object = None
    nu: float = math.inf
    num_trials: int = 1000
    seed: int = 0
    max_steps: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.detector not in _DETECTOR_KINDS:
            raise ValueError(f"detector must be one of {_DETECTOR_KINDS}, got {self.detector!r}")
        if self.detector == "wl-glr" and self.grid is None:
            raise ValueError("wl-glr needs a theta grid")
        if not math.isinf(self.nu):
            if float(self.nu) != int(self.nu) or int(self.nu) < 1:
                raise ValueError(f"nu must be an integer >= 1 or math.inf, got {self.nu}")
        if int(self.num_trials) < 1:
            raise ValueError(f"num_trials must be >= 1, got {self.num_trials}")
        if int(self.workers) < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    def resolved_max_steps(self) -> int:
        if self.max_steps is not None:
            steps = int(self.max_steps)
            if steps < 1:
                raise ValueError(f"max_steps must be >= 1, got {steps}")
            return steps
        b = float(self.threshold)
        if math.isinf(self.nu):
            budget = 50.0 * math.exp(min(b, 30.0))
            return int(min(max(budget, 50.0), _MAX_DEFAULT_STEPS))
        horizon = 0.0
        if b > 0.0:
            horizon = GrowthCurve(self.model).growth_inverse(b)
        return int(self.nu) - 1 + int(min(max(100.0 * horizon, 50.0), _MAX_DEFAULT_STEPS))


def _build_detector(plan: TrialPlan):
    if plan.detector == "wl-cusum":
        return WlCusum(plan.model, plan.threshold, plan.window)
    if plan.detector == "full-cusum":
        return FullCusum(plan.model, plan.threshold)
    return WlGlr(plan.model, plan.threshold, plan.window, plan.grid)


def _stream(model, rng, nu, max_steps, block=_STREAM_BLOCK):
    produced = 0
    while produced < max_steps:
        k = min(block, max_steps - produced)
        seg = model.sample_segment(rng, nu, produced + 1, k)
        yield from seg
        produced += k


def _run_chunk(plan: TrialPlan, start: int, stop: int, max_steps: int):
    times = np.empty(stop - start, dtype=np.int64)
    censored = np.empty(stop - start, dtype=bool)
    for i in range(start, stop):
        rng = np.random.default_rng([plan.seed, i])
        detector = _build_detector(plan)
        rec = run_until_alarm(detector, _stream(plan.model, rng, plan.nu, max_steps), max_steps)
        times[i - start] = rec.time
        censored[i - start] = rec.censored
    return times, censored


def run_trials(plan: TrialPlan) -> tuple[np.ndarray, np.ndarray]:
    """Stopping times and censoring flags for every trial, in trial order."""
    if plan.detector != "full-cusum" and plan.window is None:
        raise ValueError(
            f"{plan.detector} needs a window before trials can run; "
            "window=None is only a placeholder for per-alpha sizing"
        )
    max_steps = plan.resolved_max_steps()
    n = int(plan.num_trials)
    if plan.workers == 1:
        return _run_chunk(plan, 0, n, max_steps)
    chunk = max(1, math.ceil(n / (plan.workers * 4)))
    bounds = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]
    times = np.empty(n, dtype=np.int64)
    censored = np.empty(n, dtype=bool)
    with ProcessPoolExecutor(max_workers=plan.workers) as pool:
        futures = [pool.submit(_run_chunk, plan, a, b, max_steps) for a, b in bounds]
        for (a, b), fut in zip(bounds, futures):
            t, c = fut.result()
            times[a:b] = t
            censored[a:b] = c
    return times, censored


@dataclass
class DelayEstimate:
    """Mean stopping-time summary with censoring bookkeeping.

    Censored trials (no alarm before the step cap) enter the mean at the cap,
    so a nonzero censor_rate means the reported mean is a lower bound.
    """

    mean: float
    stderr: float
    num_uncensored: int
    censor_rate: float
    num_false_starts: int = 0

    @property
    def lower_bound_only(self) -> bool:
        return self.censor_rate > 0.0


def _summarize(values: np.ndarray, num_uncensored: int, censor_rate: float, false_starts=0):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else math.inf
    return DelayEstimate(
        mean=mean,
        stderr=stderr,
        num_uncensored=int(num_uncensored),
        censor_rate=float(censor_rate),
        num_false_starts=int(false_starts),
    )


def estimate_mtfa(plan: TrialPlan, results=None) -> DelayEstimate:
    """Mean time to false alarm under the pre-change law (plan.nu must be inf).

    Pass results=(times, censored) from an earlier run_trials(plan) to reuse
    simulations already on hand; otherwise the trials run here.
    """
    if not math.isinf(plan.nu):
        raise ValueError("MTFA estimation requires nu = math.inf (no change)")
    times, censored = results if results is not None else run_trials(plan)
    est = _summarize(times, (~censored).sum(), censored.mean())
    if est.censor_rate > 0:
        warnings.warn(
            f"{censored.sum()} of {len(times)} false-alarm trials hit the step cap; "
            "the MTFA estimate is a lower bound",
            RuntimeWarning,
            stacklevel=2,
        )
    return est


def estimate_add(plan: TrialPlan, results=None) -> DelayEstimate:
    """Average detection delay (tau - nu + 1) conditioned on tau >= nu.

    Trials that alarm before the change (false starts) are excluded from the
    average and counted in num_false_starts. Censored trials contribute the
    cap as a lower bound; a censor rate above 5% triggers a warning. As with
    estimate_mtfa, results=(times, censored) reuses existing simulations.
    """
    if math.isinf(plan.nu):
        raise ValueError("delay estimation requires a finite change point nu")
    nu = int(plan.nu)
    times, censored = results if results is not None else run_trials(plan)
    ok = censored | (times >= nu)  # censored streams never alarmed at all
    false_starts = int((~ok).sum())
    if not ok.any():
        raise ValueError("every trial alarmed before the change point; raise the threshold")
    delays = times[ok] - nu + 1
    cens = censored[ok]
    est = _summarize(delays, (~cens).sum(), cens.mean(), false_starts)
    if est.censor_rate > 0.05:
        warnings.warn(
            f"censor rate {est.censor_rate:.1%} exceeds 5%; "
            "the delay estimate is badly truncated, raise max_steps",
            RuntimeWarning,
            stacklevel=2,
        )
    return est


@dataclass
class OcRow:
    """One operating-characteristic point: calibration plus measured delay."""

    alpha: float
    threshold: float
    window: int | None
    delay: DelayEstimate


def operating_characteristic(
    template: TrialPlan,
    alphas,
    *,
    safety: float = 1.1,
    glr_inputs: GlrThresholdInputs | None = None,
) -> list[OcRow]:
    """Delay-vs-alpha curve with per-alpha calibrated threshold and window.

    The same master seed (hence the same observation paths) is reused across
    alphas, which smooths the curve the way common random numbers do. For
    wl-glr templates, pass glr_inputs (its alpha field is overridden per row);
    wl-cusum rows use b = |ln alpha|. A window fixed in the template is kept;
    window=None sizes it per alpha from the growth curve.
    """
    if math.isinf(template.nu):
        raise ValueError("operating characteristics are delay curves; set a finite nu")
    curve = GrowthCurve(template.model)
    rows = []
    for alpha in alphas:
        if template.detector == "wl-glr":
            if glr_inputs is None:
                raise ValueError("wl-glr operating characteristic needs glr_inputs")
            b = replace(glr_inputs, alpha=float(alpha)).solve()
        else:
            b = cusum_threshold(alpha)
        m = template.window
        if m is None and template.detector != "full-cusum":
            m = window_size(curve, alpha, safety)
        plan = replace(template, threshold=b, window=m, max_steps=template.max_steps)
        rows.append(OcRow(alpha=float(alpha), threshold=b, window=m, delay=estimate_add(plan)))
    return rows


def oc_to_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["alpha", "threshold", "window", "delay_mean", "delay_stderr",
             "num_uncensored", "censor_rate"]
        )
        for r in rows:
            writer.writerow(
                [repr(r.alpha), repr(r.threshold), r.window, repr(r.delay.mean),
                 repr(r.delay.stderr), r.delay.num_uncensored, repr(r.delay.censor_rate)]
            )


@dataclass
class QqReport:
    """Quantile-quantile comparison of stopping times against a geometric law.

    p_hat = 1 / mean is the moment fit on {1, 2, ...}; correlation is the
    Pearson correlation of (theoretical, empirical) quantile pairs. Values
    near 1 say the false-alarm mechanism behaves like a memoryless clock.
    """

    p_hat: float
    probs: np.ndarray
    empirical: np.ndarray
    theoretical: np.ndarray
    correlation: float
    num_samples: int

    def as_dict(self) -> dict:
        return {
            "p_hat": float(self.p_hat),
            "probs": [float(v) for v in self.probs],
            "empirical": [float(v) for v in self.empirical],
            "theoretical": [float(v) for v in self.theoretical],
            "correlation": float(self.correlation),
            "num_samples": int(self.num_samples),
        }


def geometric_qq(times, probs=None) -> QqReport:
    """Compare uncensored stopping times against the fitted geometric law.

    Requires at least 100 uncensored samples; constant samples have no
    quantile spread and raise ValueError.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 100:
        raise ValueError(f"need at least 100 uncensored stopping times, got {times.shape}")
    if np.any(times < 1):
        raise ValueError("stopping times must be >= 1")
    if times.min() == times.max():
        raise ValueError("stopping times are constant; a QQ comparison is undefined")
    if probs is None:
        probs = np.arange(1, 100) / 100.0
    probs = np.asarray(probs, dtype=float)
    p_hat = 1.0 / times.mean()
    empirical = np.quantile(times, probs)
    theoretical = stats.geom.ppf(probs, p_hat)
    if theoretical.min() == theoretical.max():
        raise ValueError("fitted geometric quantiles are constant; p_hat is degenerate")
    corr = float(np.corrcoef(theoretical, empirical)[0, 1])
    return QqReport(
        p_hat=float(p_hat),
        probs=probs,
        empirical=empirical,
        theoretical=theoretical,
        correlation=corr,
        num_samples=len(times),
    )


def qq_to_csv(report: QqReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prob", "theoretical", "empirical"])
        for p, t, e in zip(report.probs, report.theoretical, report.empirical):
            writer.writerow([repr(float(p)), repr(float(t)), repr(float(e))])
