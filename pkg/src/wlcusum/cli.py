"""Command-line front end for calibration, simulation, diagnostics, and monitoring.

Every subcommand writes its tables as CSV and its summaries as JSON under
--out (default ./out), plus a run manifest (config echo, library versions,
wall time, output list). Stochastic subcommands require --seed and reproduce
byte-identically on rerun. Exit codes: 0 success, 1 runtime failure (partial
outputs are removed), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from datetime import date
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .calibration import (
    GlrThresholdInputs,
    cusum_threshold,
    glr_threshold,
    glr_threshold_residual,
    window_size,
)
from .detectors import theta_grid
from .epidata import (
    fit_beta_prechange,
    fit_wave_shape,
    load_case_csv,
    monitor,
    to_fraction_series,
)
from .growth import GrowthCurve, check_growth_condition, lemma1_diagnostics
from .models import build_model
from .montecarlo import (
    TrialPlan,
    estimate_add,
    estimate_mtfa,
    geometric_qq,
    oc_to_csv,
    operating_characteristic,
    qq_to_csv,
    run_trials,
)

_MTFA_ALPHA_FLOOR = 1e-4

_MODEL_PARAMS = {
    "gem": ("mu0", "sigma0_sq", "theta"),
    "decay": ("mu1", "sigma_sq", "theta"),
    "betawave": ("a0", "b0", "theta0", "theta1", "theta2"),
}


# ---------------------------------------------------------------------------
# argparse value parsers (failures become exit-2 usage errors)


def _box_type(text: str):
    try:
        pairs = []
        for part in text.split(","):
            lo, hi = part.split(":")
            lo, hi = float(lo), float(hi)
            if not lo < hi:
                raise ValueError
            pairs.append((lo, hi))
        if not pairs:
            raise ValueError
        return tuple(pairs)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated lo:hi pairs (lo < hi) like '0.1:5,1:20,0.1:5', "
            f"got {text!r}"
        ) from None


def _counts_type(text: str):
    try:
        counts = tuple(int(part) for part in text.split(","))
        if not counts or any(c < 1 for c in counts):
            raise ValueError
        return counts
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated positive integers like '10,10,10', got {text!r}"
        ) from None


def _floats_type(text: str):
    try:
        values = tuple(float(part) for part in text.split(","))
        if not values:
            raise ValueError
        return values
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers like '1e-2,1e-3', got {text!r}"
        ) from None


def _date_type(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an ISO date like 2020-06-01, got {text!r}") from None


# ---------------------------------------------------------------------------
# shared plumbing


def _build_model_from_args(args):
    names = _MODEL_PARAMS[args.model]
    params = {}
    for name in names:
        value = getattr(args, name, None)
        if value is None:
            raise ValueError(f"model '{args.model}' requires --{name.replace('_', '-')}")
        params[name] = value
    return build_model(args.model, **params)


def _theta_box_array(args, model) -> np.ndarray:
    if args.theta_box is None:
        raise ValueError(f"detector '{args.detector}' requires --theta-box")
    box = np.asarray(args.theta_box, dtype=float)
    if box.shape != (model.theta_dim, 2):
        raise ValueError(
            f"--theta-box must give {model.theta_dim} lo:hi pairs for model "
            f"'{args.model}', got {box.shape[0]}"
        )
    return box


def _grid_counts(args, dim: int):
    counts = getattr(args, "grid_counts", None)
    if counts is None:
        counts = (10,) * dim
    elif len(counts) == 1:
        counts = counts * dim
    elif len(counts) != dim:
        raise ValueError(f"--grid-counts needs 1 or {dim} entries, got {len(counts)}")
    return counts


def _resolve_run_setup(args, model):
    """Threshold, window, and grid for the simulate/estimate subcommands."""
    grid = None
    glr_inputs = None
    if args.detector == "wl-glr":
        box = _theta_box_array(args, model)
        grid = theta_grid(box, _grid_counts(args, box.shape[0]))
        volume = float(np.prod(box[:, 1] - box[:, 0]))
        epsilon = args.epsilon if args.epsilon is not None else 1.0
        glr_inputs = GlrThresholdInputs(
            alpha=args.alpha if args.alpha is not None else 0.5,
            theta_volume=volume,
            dim=box.shape[0],
            epsilon=epsilon,
        )

    if args.threshold is not None:
        b = float(args.threshold)
    elif args.alpha is not None:
        b = glr_inputs.solve() if glr_inputs is not None else cusum_threshold(args.alpha)
    else:
        raise ValueError("need --threshold or --alpha to set the detection threshold")

    window = args.window
    if window is None and args.detector != "full-cusum":
        if args.model == "betawave":
            raise ValueError(
                "the Beta wave model has no usable growth inverse for window "
                "sizing; pass --window explicitly"
            )
        alpha_eff = args.alpha if args.alpha is not None else math.exp(-b)
        window = window_size(GrowthCurve(model), alpha_eff, args.safety)
    return b, window, grid, glr_inputs


def _write_json(path: Path, payload, written: list) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    written.append(path)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, date):
        return obj.isoformat()
    return str(obj)


def _trials_to_csv(path: Path, times, censored, written: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "time", "censored"])
        for i, (t, c) in enumerate(zip(times, censored)):
            writer.writerow([i, int(t), int(c)])
    written.append(path)


def _delay_dict(est) -> dict:
    return {
        "mean": est.mean,
        "stderr": est.stderr,
        "num_uncensored": est.num_uncensored,
        "censor_rate": est.censor_rate,
        "num_false_starts": est.num_false_starts,
        "lower_bound_only": est.lower_bound_only,
    }


# ---------------------------------------------------------------------------
# subcommand handlers: (args, out_dir, written) -> payload printed as JSON


def _cmd_calibrate(args, out_dir, written):
    model = _build_model_from_args(args)
    if args.theta_box is not None:
        box = _theta_box_array(args, model)
        volume = float(np.prod(box[:, 1] - box[:, 0]))
        epsilon = args.epsilon if args.epsilon is not None else 1.0
        b = glr_threshold(args.alpha, volume, box.shape[0], epsilon)
        residual = glr_threshold_residual(b, args.alpha, volume, box.shape[0], epsilon)
        eps_out = epsilon
    else:
        b = cusum_threshold(args.alpha)
        residual = 0.0
        eps_out = None
    if args.window is not None:
        m = int(args.window)
    elif args.model == "betawave":
        m = 20
    else:
        m = window_size(GrowthCurve(model), args.alpha, args.safety)
    payload = {"b": b, "m": m, "epsilon": eps_out, "residual": residual}
    _write_json(out_dir / "calibrate.json", payload, written)
    return payload


def _cmd_simulate_oc(args, out_dir, written):
    model = _build_model_from_args(args)
    grid = None
    glr_inputs = None
    if args.detector == "wl-glr":
        box = _theta_box_array(args, model)
        grid = theta_grid(box, _grid_counts(args, box.shape[0]))
        volume = float(np.prod(box[:, 1] - box[:, 0]))
        epsilon = args.epsilon if args.epsilon is not None else 1.0
        glr_inputs = GlrThresholdInputs(
            alpha=args.alphas[0], theta_volume=volume, dim=box.shape[0], epsilon=epsilon
        )
    template = TrialPlan(
        model=model,
        detector=args.detector,
        threshold=1.0,  # replaced per alpha
        window=args.window,
        grid=grid,
        nu=args.nu,
        num_trials=args.trials,
        seed=args.seed,
        max_steps=args.max_steps,
        workers=args.workers,
    )
    rows = operating_characteristic(template, args.alphas, safety=args.safety,
                                    glr_inputs=glr_inputs)
    oc_to_csv(rows, out_dir / "oc.csv")
    written.append(out_dir / "oc.csv")
    payload = {
        "rows": [
            {
                "alpha": r.alpha,
                "threshold": r.threshold,
                "window": r.window,
                "delay": _delay_dict(r.delay),
            }
            for r in rows
        ]
    }
    _write_json(out_dir / "oc_summary.json", payload, written)
    return payload


def _cmd_simulate_qq(args, out_dir, written):
    model = _build_model_from_args(args)
    b, window, grid, _ = _resolve_run_setup(args, model)
    plan = TrialPlan(
        model=model,
        detector=args.detector,
        threshold=b,
        window=window,
        grid=grid,
        nu=math.inf,
        num_trials=args.trials,
        seed=args.seed,
        max_steps=args.max_steps,
        workers=args.workers,
    )
    times, censored = run_trials(plan)
    kept = times[~censored]
    if len(kept) < 100:
        raise ValueError(
            f"only {len(kept)} of {len(times)} trials alarmed before the step cap; "
            "need at least 100 stopping times for a quantile fit "
            "(raise --trials or --max-steps, or lower the threshold)"
        )
    report = geometric_qq(kept)
    qq_to_csv(report, out_dir / "qq.csv")
    written.append(out_dir / "qq.csv")
    payload = {
        "p_hat": report.p_hat,
        "correlation": report.correlation,
        "num_samples": report.num_samples,
        "threshold": b,
        "window": window,
        "num_censored": int(censored.sum()),
    }
    _write_json(out_dir / "qq_summary.json", payload, written)
    return payload


def _cmd_estimate_mtfa(args, out_dir, written):
    model = _build_model_from_args(args)
    b, window, grid, _ = _resolve_run_setup(args, model)
    alpha_eff = args.alpha if args.alpha is not None else math.exp(-b)
    if alpha_eff < _MTFA_ALPHA_FLOOR and not args.force:
        raise ValueError(
            f"MTFA estimation at alpha={alpha_eff:.3g} needs on the order of "
            f"{1 / alpha_eff:.0f} observations per trial; pass --force to run anyway"
        )
    plan = TrialPlan(
        model=model,
        detector=args.detector,
        threshold=b,
        window=window,
        grid=grid,
        nu=math.inf,
        num_trials=args.trials,
        seed=args.seed,
        max_steps=args.max_steps,
        workers=args.workers,
    )
    times, censored = run_trials(plan)
    est = estimate_mtfa(plan, results=(times, censored))
    _trials_to_csv(out_dir / "mtfa_trials.csv", times, censored, written)
    payload = {"mtfa": _delay_dict(est), "threshold": b, "window": window,
               "target_lower_bound": 1.0 / alpha_eff}
    _write_json(out_dir / "mtfa_summary.json", payload, written)
    return payload


def _cmd_estimate_add(args, out_dir, written):
    model = _build_model_from_args(args)
    b, window, grid, _ = _resolve_run_setup(args, model)
    plan = TrialPlan(
        model=model,
        detector=args.detector,
        threshold=b,
        window=window,
        grid=grid,
        nu=args.nu,
        num_trials=args.trials,
        seed=args.seed,
        max_steps=args.max_steps,
        workers=args.workers,
    )
    times, censored = run_trials(plan)
    est = estimate_add(plan, results=(times, censored))
    _trials_to_csv(out_dir / "add_trials.csv", times, censored, written)
    payload = {"add": _delay_dict(est), "threshold": b, "window": window, "nu": args.nu}
    _write_json(out_dir / "add_summary.json", payload, written)
    return payload


def _cmd_diagnostics(args, out_dir, written):
    model = _build_model_from_args(args)
    growth = check_growth_condition(
        GrowthCurve(model), args.x_max, points_per_decade=args.points_per_decade
    )
    lemma1 = lemma1_diagnostics(model, args.n_max, shift_max=args.shift_max)
    with open(out_dir / "growth_condition.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "log_inverse_over_x"])
        for x, r in zip(growth.x, growth.ratio):
            writer.writerow([repr(float(x)), repr(float(r))])
    written.append(out_dir / "growth_condition.csv")
    with open(out_dir / "lemma1.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "variance_ratio"])
        for n, r in zip(lemma1.ns, lemma1.variance_ratio):
            writer.writerow([int(n), repr(float(r))])
    written.append(out_dir / "lemma1.csv")
    payload = {
        "growth_condition": {"satisfied": growth.satisfied, "x_max": growth.x_max},
        "variance_ratio_range": [float(np.min(lemma1.variance_ratio)),
                                 float(np.max(lemma1.variance_ratio))],
        "time_shift_min": lemma1.time_shift_min,
    }
    _write_json(out_dir / "diagnostics.json", payload, written)
    return payload


def _load_fractions(args):
    series = load_case_csv(args.input, args.population, cumulative=args.cumulative)
    return to_fraction_series(series, window=args.ma_window)


def _prechange_fit(fractions, start_index: int, days: int):
    if start_index < days:
        raise ValueError(
            f"--start-date needs {days} smoothed days before it for the "
            f"pre-change fit, have {start_index}"
        )
    return fit_beta_prechange(fractions.slice(start_index - days, start_index), days)


def _cmd_monitor_epi(args, out_dir, written):
    fractions = _load_fractions(args)
    start = fractions.index(args.start_date)
    beta = _prechange_fit(fractions, start, args.prechange_days)
    segment = fractions.slice(start, len(fractions.fractions))
    result = monitor(
        segment,
        beta,
        args.theta_box,
        alpha=args.alpha,
        window=args.window,
        grid_counts=_grid_counts(args, 3),
        epsilon=args.epsilon if args.epsilon is not None else 1.0,
        threshold=args.threshold,
    )
    result.to_csv(out_dir / "trajectory.csv")
    written.append(out_dir / "trajectory.csv")
    payload = {
        "region": segment.region,
        "population": segment.population,
        "beta_fit": beta.as_dict(),
        "threshold": result.threshold,
        "num_days": len(segment.fractions),
        "first_alarm_date": result.first_alarm_date,
        "first_alarm_index": result.first_alarm_index,
    }
    _write_json(out_dir / "monitor_summary.json", payload, written)
    return payload


def _cmd_fit_epi(args, out_dir, written):
    fractions = _load_fractions(args)
    start = fractions.index(args.start_date)
    stop = fractions.index(args.end_date) + 1 if args.end_date is not None else len(fractions.fractions)
    if stop <= start:
        raise ValueError("--end-date must not precede --start-date")
    beta = _prechange_fit(fractions, start, args.prechange_days)
    fit = fit_wave_shape(
        fractions.slice(start, stop),
        beta,
        args.theta_box,
        restarts=args.restarts,
        tol=args.tol,
        seed=args.seed,
    )
    payload = {"beta_fit": beta.as_dict(), "wave_fit": fit.as_dict(),
               "num_days": stop - start}
    _write_json(out_dir / "fit_summary.json", payload, written)
    return payload


# ---------------------------------------------------------------------------
# parser assembly


def _add_output_flag(parser):
    parser.add_argument("--out", default="out", help="output directory (default: ./out)")


def _add_model_flags(parser):
    group = parser.add_argument_group("model")
    group.add_argument("--model", required=True, choices=sorted(_MODEL_PARAMS))
    group.add_argument("--mu0", type=float, help="gem: pre-change mean")
    group.add_argument("--sigma0-sq", dest="sigma0_sq", type=float, help="gem: variance")
    group.add_argument("--theta", type=float, help="gem/decay: drift parameter")
    group.add_argument("--mu1", type=float, help="decay: initial post-change mean")
    group.add_argument("--sigma-sq", dest="sigma_sq", type=float, help="decay: variance")
    group.add_argument("--a0", type=float, help="betawave: pre-change Beta shape a")
    group.add_argument("--b0", type=float, help="betawave: pre-change Beta shape b")
    group.add_argument("--theta0", type=float, help="betawave: wave height exponent")
    group.add_argument("--theta1", type=float, help="betawave: wave peak day")
    group.add_argument("--theta2", type=float, help="betawave: wave width")


def _add_detector_flags(parser, *, include_alpha=True):
    group = parser.add_argument_group("detector")
    group.add_argument("--detector", default="wl-cusum",
                       choices=["wl-cusum", "full-cusum", "wl-glr"])
    group.add_argument("--window", type=int,
                       help="window size m (default: sized from the growth curve)")
    if include_alpha:
        group.add_argument("--alpha", type=float,
                           help="false-alarm rate used to set the threshold")
        group.add_argument("--threshold", type=float,
                           help="detection threshold b (overrides --alpha)")
    group.add_argument("--theta-box", type=_box_type,
                       help="post-change parameter box, e.g. '0.1:5,1:20,0.1:5'")
    group.add_argument("--grid-counts", type=_counts_type,
                       help="GLR grid points per dimension, e.g. '10,10,10' (default 10)")
    group.add_argument("--epsilon", type=float,
                       help="GLR threshold-equation drift bound (default 1.0)")
    group.add_argument("--safety", type=float, default=1.1,
                       help="window safety factor (default 1.1)")


def _add_trial_flags(parser, *, default_trials):
    group = parser.add_argument_group("simulation")
    group.add_argument("--trials", type=int, default=default_trials)
    group.add_argument("--seed", type=int, required=True,
                       help="master seed; reruns with the same seed are byte-identical")
    group.add_argument("--max-steps", type=int,
                       help="per-trial step cap (default: sized from the threshold)")
    group.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def _add_epi_input_flags(parser):
    group = parser.add_argument_group("input")
    group.add_argument("--input", required=True, help="CSV with header date,cases")
    group.add_argument("--population", type=float, required=True)
    group.add_argument("--cumulative", action="store_true",
                       help="treat the cases column as cumulative totals")
    group.add_argument("--ma-window", type=int, default=4,
                       help="moving-average width in days (default 4)")
    group.add_argument("--start-date", type=_date_type, required=True,
                       help="first day of monitoring / wave fitting (ISO)")
    group.add_argument("--prechange-days", type=int, default=20,
                       help="days before start-date used for the Beta fit (default 20)")
    group.add_argument("--theta-box", type=_box_type, required=True,
                       help="wave parameter box, e.g. '0.1:5,1:20,0.1:5'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wlcusum",
        description="Window-limited CuSum/GLR change detection: calibration, "
                    "simulation, diagnostics, and epidemic monitoring.",
    )
    parser.add_argument("--version", action="version", version=f"wlcusum {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("calibrate", help="threshold and window for a target false-alarm rate")
    _add_output_flag(p)
    _add_model_flags(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--window", type=int, help="override the computed window")
    p.add_argument("--theta-box", type=_box_type,
                   help="calibrate the GLR threshold over this box instead of plain CuSum")
    p.add_argument("--epsilon", type=float, help="GLR drift bound (default 1.0)")
    p.add_argument("--safety", type=float, default=1.1)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("simulate-oc", help="delay vs alpha operating characteristic")
    _add_output_flag(p)
    _add_model_flags(p)
    _add_detector_flags(p, include_alpha=False)
    p.add_argument("--alphas", type=_floats_type, required=True,
                   help="comma-separated false-alarm rates, e.g. '1e-2,1e-3,1e-4'")
    p.add_argument("--nu", type=int, required=True, help="true change point (1-based)")
    _add_trial_flags(p, default_trials=1000)
    p.set_defaults(func=_cmd_simulate_oc)

    p = sub.add_parser("simulate-qq", help="geometric QQ fit of pre-change stopping times")
    _add_output_flag(p)
    _add_model_flags(p)
    _add_detector_flags(p)
    _add_trial_flags(p, default_trials=1000)
    p.set_defaults(func=_cmd_simulate_qq)

    p = sub.add_parser("estimate-mtfa", help="mean time to false alarm")
    _add_output_flag(p)
    _add_model_flags(p)
    _add_detector_flags(p)
    _add_trial_flags(p, default_trials=2000)
    p.add_argument("--force", action="store_true",
                   help=f"allow alpha below {_MTFA_ALPHA_FLOOR} despite the cost")
    p.set_defaults(func=_cmd_estimate_mtfa)

    p = sub.add_parser("estimate-add", help="average detection delay at a known change point")
    _add_output_flag(p)
    _add_model_flags(p)
    _add_detector_flags(p)
    p.add_argument("--nu", type=int, required=True, help="true change point (1-based)")
    _add_trial_flags(p, default_trials=2000)
    p.set_defaults(func=_cmd_estimate_add)

    p = sub.add_parser("diagnostics", help="growth-condition and LLR-regularity reports")
    _add_output_flag(p)
    _add_model_flags(p)
    p.add_argument("--x-max", type=float, default=100.0)
    p.add_argument("--points-per-decade", type=int, default=10)
    p.add_argument("--n-max", type=int, default=50)
    p.add_argument("--shift-max", type=int, default=10)
    p.set_defaults(func=_cmd_diagnostics)

    p = sub.add_parser("monitor-epi", help="run the GLR monitor over a case-count CSV")
    _add_output_flag(p)
    _add_epi_input_flags(p)
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--grid-counts", type=_counts_type,
                   help="GLR grid points per dimension (default 10,10,10)")
    p.add_argument("--epsilon", type=float, help="GLR drift bound (default 1.0)")
    p.add_argument("--threshold", type=float, help="override the calibrated threshold")
    p.set_defaults(func=_cmd_monitor_epi)

    p = sub.add_parser("fit-epi", help="fit Beta pre-change law and wave shape to a CSV")
    _add_output_flag(p)
    _add_epi_input_flags(p)
    p.add_argument("--end-date", type=_date_type,
                   help="last day of the wave segment (default: end of series)")
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the optimizer's restart draws (default 0)")
    p.set_defaults(func=_cmd_fit_epi)

    return parser


def _write_manifest(out_dir: Path, args, written: list, wall_time: float) -> Path:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.subcommand,
        "config": config,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "wlcusum": __version__,
        },
        "wall_time_s": wall_time,
        "outputs": [p.name for p in written],
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    started = time.perf_counter()
    try:
        payload = args.func(args, out_dir, written)
    except Exception as exc:
        for path in written:
            path.unlink(missing_ok=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_manifest(out_dir, args, written, time.perf_counter() - started)
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
