"""Command line entry point: ``crpslearn {simulate,combine,evaluate}``.

Every option may also be given in a JSON file passed with ``--config``;
keys are the long option names with dashes or underscores.  Flags given on
the command line win over the file.

Exit codes: 0 success, 1 computational error, 2 usage or input error.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .baselines import EWA_ETA_GRID, EwaBank, NaiveCombiner, QuantileRegressionCombiner
from .evaluate import DegenerateDifferentialError, crps_series, cumulative_difference, dm_test, ql_profile
from .grid import ExpertPanel, ObservationStream, ValidationError, validate_panel
from .simulate import SPEC_KINDS, CombinerSpec, SimSpec, run_study
from .tuning import LAMBDA_GRID, TuningGrid

log = logging.getLogger("crpslearn")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# option parsing helpers


def _floats(value, name):
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [s for s in str(value).split(",") if s.strip()]
    try:
        return tuple(float(x) for x in items)
    except ValueError:
        raise UsageError(f"--{name}: expected comma separated numbers, got {value!r}") from None


def _ints(value, name):
    vals = _floats(value, name)
    if any(v != int(v) for v in vals):
        raise UsageError(f"--{name}: expected integers, got {value!r}")
    return tuple(int(v) for v in vals)


def _words(value):
    if isinstance(value, (list, tuple)):
        return tuple(str(v).strip() for v in value)
    return tuple(s.strip() for s in str(value).split(",") if s.strip())


def _forget_option(value, name="forget-grid"):
    """``none`` -> None, ``auto`` -> "auto", else a tuple of rates."""
    if value is None or str(value).lower() == "none":
        return None
    if str(value).lower() == "auto":
        return "auto"
    rates = _floats(value, name)
    if not rates or any(not 0.0 <= r < 1.0 for r in rates):
        raise UsageError(f"--{name}: rates must lie in [0, 1)")
    return rates


def _out_dir(path):
    out = Path(path)
    if not out.is_dir():
        raise UsageError(f"output directory does not exist: {out}")
    return out


DEFAULTS = {
    "simulate": {
        "dgp": "static", "T": None, "reps": None, "seed": None, "specs": None,
        "algorithms": "BOAG", "forget_grid": None, "full_scale": False, "out": ".",
        "workers": None, "record_weights": True,
    },
    "combine": {
        "experts": None, "obs": None, "out": ".", "methods": "pointwise", "forget_grid": "none",
        "lambda_grid": None, "qr_window": 30, "ewa_etas": None,
    },
    "evaluate": {
        "obs": None, "forecasts": None, "names": None, "baseline": None, "out": ".",
        "dm_lag": 0, "hln": False,
    },
}


def build_parser():
    parser = argparse.ArgumentParser(prog="crpslearn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation study")
    sim.add_argument("--config")
    sim.add_argument("--dgp", choices=("static", "drifting"))
    sim.add_argument("--T", help="comma separated horizons (default 32,128,512 static, 512 drifting)")
    sim.add_argument("--reps", type=int, help="repetitions (default 100, or 1000 with --full-scale)")
    sim.add_argument("--seed", type=int, help="master seed (required)")
    sim.add_argument("--specs", help=f"comma separated subset of {','.join(SPEC_KINDS)}")
    sim.add_argument("--algorithms", help="BOAG, EWAG or BOAG,EWAG")
    sim.add_argument("--forget-grid", help="none, auto or comma separated rates; adds forget variants")
    sim.add_argument("--full-scale", action="store_const", const=True)
    sim.add_argument("--record-weights", action=argparse.BooleanOptionalAction)
    sim.add_argument("--workers", type=int, help="worker processes (default from CRPSLEARN_WORKERS)")
    sim.add_argument("--out")

    comb = sub.add_parser("combine", help="combine expert quantiles online")
    comb.add_argument("--config")
    comb.add_argument("--experts", help="CSV: time,expert,probability,value")
    comb.add_argument("--obs", help="CSV: time,value")
    comb.add_argument("--methods", help="comma separated: " + ",".join(COMBINE_METHODS))
    comb.add_argument("--forget-grid", help="none, auto or comma separated rates (BOA methods)")
    comb.add_argument("--lambda-grid", help="comma separated smoothing parameters for p-smooth")
    comb.add_argument("--qr-window", type=int)
    comb.add_argument("--ewa-etas", help="comma separated EWA learning rates")
    comb.add_argument("--out")

    ev = sub.add_parser("evaluate", help="score and compare combined forecasts")
    ev.add_argument("--config")
    ev.add_argument("--obs", help="CSV: time,value")
    ev.add_argument("--forecasts", nargs="+", help="CSV files: time,probability,value")
    ev.add_argument("--names", help="comma separated method names (default: file stems)")
    ev.add_argument("--baseline", help="method the differences refer to (default: first)")
    ev.add_argument("--dm-lag", type=int, help="Newey-West truncation lag (default 0)")
    ev.add_argument("--hln", action="store_const", const=True, help="small-sample correction")
    ev.add_argument("--out")
    return parser


def resolve(args):
    """Merge command line flags, the JSON config and built-in defaults."""
    defaults = DEFAULTS[args.command]
    cfg = {}
    if args.config:
        raw = io.load_config(args.config)
        for key, value in raw.items():
            k = key.replace("-", "_")
            if k not in defaults:
                raise UsageError(f"{args.config}: unknown setting {key!r} for {args.command}")
            cfg[k] = value
    merged = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else cfg.get(key, default)
    return argparse.Namespace(command=args.command, **merged)


# ---------------------------------------------------------------------------
# simulate

TABLE1_COLUMNS = (
    ("No Forget", "Pointwise"), ("No Forget", "P-Smooth"), ("Forget", "Pointwise"), ("Forget", "P-Smooth"),
)


def simulation_specs(dgp, kinds, algorithms, forget):
    specs = []
    for algorithm in algorithms:
        for kind in kinds:
            if algorithm == "EWAG" and kind.startswith("P-"):
                continue
            specs.append(CombinerSpec(kind, algorithm=algorithm))
            if forget is not None:
                specs.append(CombinerSpec(kind, algorithm=algorithm, forget=forget))
    return tuple(specs)


def table1(result, T):
    """Mean and standard error of the mean CRPS-scale loss in the four forget layouts."""
    labels = {(("Forget" if s.forget != (0.0,) else "No Forget"), s.kind): s.label
              for s in result.spec.specs if s.algorithm == "BOAG"}
    if not all(c in labels for c in TABLE1_COLUMNS):
        return None
    return [(f"{a} {b}", result.mean(labels[(a, b)], T), result.se(labels[(a, b)], T))
            for a, b in TABLE1_COLUMNS]


def cmd_simulate(o):
    if o.seed is None:
        raise UsageError("simulate requires --seed")
    out = _out_dir(o.out)
    if o.dgp not in ("static", "drifting"):
        raise UsageError(f"unknown dgp {o.dgp!r}")
    T = _ints(o.T, "T") if o.T is not None else ((32, 128, 512) if o.dgp == "static" else (512,))
    reps = o.reps if o.reps is not None else (1000 if o.full_scale else 100)
    if o.specs is not None:
        kinds = _words(o.specs)
    else:
        kinds = SPEC_KINDS if o.dgp == "static" else ("Pointwise", "P-Smooth")
    bad = [k for k in kinds if k not in SPEC_KINDS]
    if bad:
        raise UsageError(f"--specs: unknown spec(s) {', '.join(bad)}; choose from {', '.join(SPEC_KINDS)}")
    algorithms = tuple(a.upper() for a in _words(o.algorithms))
    if not algorithms or any(a not in ("BOAG", "EWAG") for a in algorithms):
        raise UsageError("--algorithms: choose from BOAG, EWAG")
    forget_raw = o.forget_grid if o.forget_grid is not None else ("none" if o.dgp == "static" else "auto")
    forget = _forget_option(forget_raw)
    specs = simulation_specs(o.dgp, kinds, algorithms, forget)

    try:
        spec = SimSpec(o.dgp, T, reps, int(o.seed), specs=specs, record_weights=bool(o.record_weights))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    log.info("simulating %s: %d reps, horizons %s, %d specs", o.dgp, reps, T, len(specs))
    result = run_study(spec, workers=o.workers)

    io.write_csv(out / "results.csv", ("spec", "T", "metric", "mean", "se"), result.rows())
    plot_rows = [(label, T_, metric, mean) for label, T_, metric, mean, _ in result.rows()]
    Tmax = spec.T[-1]
    for label, losses in result.config_losses.items():
        plot_rows.extend((f"{label} | {cfg}", Tmax, "crps", v) for cfg, v in losses.items())
    io.write_csv(out / "plot_data.csv", ("config", "T", "metric", "value"), plot_rows)
    io.write_csv(out / "distance_profile.csv", ("config", "T", "probability", "distance"), (
        (label, T_, float(p), float(d))
        for (label, T_), prof in result.profiles.items() for p, d in zip(spec.grid.probs, prof)
    ))
    if result.weights:
        names = ("expert1", "expert2")
        io.write_csv(out / "weights_example.csv", ("config", "time", "expert", "probability", "weight"), (
            (label, t + 1, names[k], float(p), float(w[t, m, k]))
            for label, w in result.weights.items()
            for t in range(w.shape[0]) for k in range(w.shape[2]) for m, p in enumerate(spec.grid.probs)
        ))

    lines = [f"{'spec':<24}{'T':>6}  {'mean QL':>10}  {'CRPS':>10}  {'distance':>10}"]
    for s in spec.specs:
        for T_ in spec.T:
            lines.append(f"{s.label:<24}{T_:>6}  {result.mean(s.label, T_):>10.5f}  "
                         f"{result.mean(s.label, T_, 'crps'):>10.5f}  {result.mean(s.label, T_, 'distance'):>10.6f}")
    tab = table1(result, Tmax)
    if tab is not None:
        io.write_csv(out / "table1.csv", ("column", "mean", "se"), tab)
        lines.append("")
        lines.append(f"Mean loss (standard error), T={Tmax}, {reps} repetitions")
        lines.append("".join(f"{c:>22}" for c, _, _ in tab))
        lines.append("".join(f"{f'{m:.4f} ({s:.2g})':>22}" for _, m, s in tab))
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# combine

COMBINE_METHODS = ("naive", "pointwise", "b-smooth", "b-constant", "p-smooth", "p-constant",
                   "ewag", "qr-convex", "qr-linear")
_KIND = {"pointwise": "Pointwise", "b-smooth": "B-Smooth", "b-constant": "B-Constant",
         "p-smooth": "P-Smooth", "p-constant": "P-Constant"}


def build_combiner(method, grid, K, T, forget=None, lambdas=None, etas=None, qr_window=30):
    if method == "naive":
        return TuningGrid([NaiveCombiner(grid, K)])
    if method in _KIND:
        kind = _KIND[method]
        lam = lambdas if lambdas is not None else (LAMBDA_GRID if kind == "P-Smooth" else None)
        spec = CombinerSpec(kind, forget=forget if forget is not None else (0.0,), lambdas=lam)
        return spec.build(grid, K, T)
    if method == "ewag":
        return TuningGrid([EwaBank(grid, K, etas=etas or EWA_ETA_GRID, gradient=True)])
    if method in ("qr-convex", "qr-linear"):
        return TuningGrid([QuantileRegressionCombiner(grid, K, window=qr_window, constraint=method[3:])])
    raise UsageError(f"unknown method {method!r}; choose from {', '.join(COMBINE_METHODS)}")


def combine_online(tg, values, y):
    """Run a tuning grid over a panel; returns forecasts ``(T, M)`` and weights ``(T, M, K)``."""
    T, M, K = values.shape
    forecasts = np.empty((T, M))
    weights = np.empty((T, M, K))
    for t in range(T):
        weights[t] = tg.weights().weights
        forecasts[t] = tg.step(values[t], y[t])
    return forecasts, weights


def cmd_combine(o):
    if not o.experts or not o.obs:
        raise UsageError("combine requires --experts and --obs")
    out = _out_dir(o.out)
    times, names, grid, values = io.read_experts_csv(o.experts)
    obs_times, y = io.read_observations_csv(o.obs)
    if list(obs_times) != list(times):
        missing = sorted(set(times) - set(obs_times))[:3]
        extra = sorted(set(obs_times) - set(times))[:3]
        raise ValidationError(
            f"time axis mismatch between {o.experts} and {o.obs}: "
            f"missing observations for {missing}, observations without forecasts at {extra}"
        )
    validate_panel(ExpertPanel(values, tuple(names)), grid, ObservationStream(y, tuple(times)))

    methods = _words(o.methods)
    bad = [m for m in methods if m not in COMBINE_METHODS]
    if not methods or bad:
        raise UsageError(f"--methods: unknown method(s) {', '.join(bad)}; choose from {', '.join(COMBINE_METHODS)}")
    forget = _forget_option(o.forget_grid)
    lambdas = _floats(o.lambda_grid, "lambda-grid") if o.lambda_grid is not None else None
    etas = _floats(o.ewa_etas, "ewa-etas") if o.ewa_etas is not None else None
    if o.qr_window < 1:
        raise UsageError("--qr-window must be >= 1")

    loss_rows = []
    for method in methods:
        tg = build_combiner(method, grid, len(names), len(times), forget, lambdas, etas, o.qr_window)
        log.info("combining with %s (%d configurations)", method, len(tg))
        forecasts, weights = combine_online(tg, values, y)
        io.write_quantiles_csv(out / f"{method}_quantiles.csv", times, grid, forecasts)
        io.write_weights_csv(out / f"{method}_weights.csv", times, names, grid, weights)
        loss = crps_series(forecasts, y, grid)
        loss_rows.extend((t, method, float(v)) for t, v in zip(times, loss.values))
        print(f"{method:<12} mean CRPS {loss.mean():.6f}")
    io.write_csv(out / "losses.csv", ("time", "method", "crps"), loss_rows)
    return 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(o):
    if not o.obs or not o.forecasts:
        raise UsageError("evaluate requires --obs and --forecasts")
    out = _out_dir(o.out)
    files = list(o.forecasts) if isinstance(o.forecasts, (list, tuple)) else [o.forecasts]
    names = _words(o.names) if o.names is not None else tuple(Path(f).stem for f in files)
    if len(names) != len(files):
        raise UsageError(f"--names lists {len(names)} names for {len(files)} forecast files")
    if len(set(names)) != len(names):
        raise UsageError(f"method names must be unique, got {', '.join(names)}")
    baseline = o.baseline if o.baseline is not None else names[0]
    if baseline not in names:
        raise UsageError(f"--baseline {baseline!r} is not one of {', '.join(names)}")

    obs_times, y = io.read_observations_csv(o.obs)
    grid, series, profiles = None, {}, {}
    for name, path in zip(names, files):
        times, g, forecasts = io.read_quantiles_csv(path)
        if list(times) != list(obs_times):
            raise ValidationError(f"time axis mismatch between {path} and {o.obs}")
        if grid is None:
            grid = g
        elif g != grid:
            raise ValidationError(f"grid axis mismatch: {path} uses a different probability grid")
        series[name] = crps_series(forecasts, y, grid, label=name)
        profiles[name] = ql_profile(forecasts, y, grid)

    base = series[baseline]
    io.write_csv(out / "crps.csv", ("method", "mean_crps", "difference_to_baseline"), (
        (n, series[n].mean(), series[n].mean() - base.mean()) for n in names
    ))
    io.write_csv(out / "ql_profile.csv", ("probability", "method", "mean_loss"), (
        (float(p), n, float(profiles[n][m])) for m, p in enumerate(grid.probs) for n in names
    ))
    io.write_csv(out / "cumulative_difference.csv", ("time", "method", "value"), (
        (t, n, float(v)) for n in names for t, v in zip(obs_times, cumulative_difference(series[n], base))
    ))
    dm_rows = []
    for a in names:
        row = [a]
        for b in names:
            try:
                row.append(dm_test(series[a], series[b], lag=o.dm_lag, hln=bool(o.hln)).p_value)
            except DegenerateDifferentialError:
                row.append("NA")
        dm_rows.append(row)
    io.write_csv(out / "dm_pvalues.csv", ("method",) + tuple(names), dm_rows)

    width = max(len(n) for n in names) + 2
    print(f"{'method':<{width}}{'mean CRPS':>12}{'vs ' + baseline:>16}")
    for n in names:
        print(f"{n:<{width}}{series[n].mean():>12.6f}{series[n].mean() - base.mean():>16.6f}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "combine": cmd_combine, "evaluate": cmd_evaluate}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](resolve(args))
    except (UsageError, io.SchemaError, ValidationError, OSError) as exc:
        print(f"crpslearn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any module failure maps to exit code 1
        print(f"crpslearn {args.command}: computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
