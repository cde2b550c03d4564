"""Command-line entry point: ``timeblind <subcommand> ...``.

Every run writes its outputs plus ``metadata.txt`` (resolved parameters,
version, kernel backend) into ``--out``. Validation failures exit with
status 2 and a single ``error: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .io import FormatError, read_matrix, save_fitted, write_csv, write_kv


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _lambda_spec(text: str):
    """``a,b,c`` or ``linspace:LO:HI``."""
    if text.startswith("linspace:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("use linspace:LO:HI")
        return ("linspace", float(parts[1]), float(parts[2]))
    return _floats(text)


def _add_model_flags(p, default_S=None):
    p.add_argument("--d", type=int, required=True, help="ambient dimension")
    p.add_argument("--k", type=int, required=True, help="signal dimension")
    p.add_argument("--sigma2", type=float, required=True, help="residual noise floor")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--S", type=float, default=None, help="signal eigenvalue; excess is S - sigma2")
    g.add_argument("--lambdas", type=_lambda_spec, default=None, help="spike excesses: a,b,... or linspace:LO:HI")
    p.set_defaults(default_S=default_S)


def _model_from_args(args):
    from .model import make_model

    if args.S is not None:
        S = args.S
        source = f"S={S}"
    elif args.lambdas is None and args.default_S is not None:
        S = args.default_S
        source = f"S={S} (default)"
    else:
        S = None
    if S is not None:
        if S < args.sigma2:
            raise UsageError(f"--S {S} is below --sigma2 {args.sigma2}")
        lam = np.full(max(args.k, 0), S - args.sigma2)
    elif args.lambdas is None or isinstance(args.lambdas, tuple):
        lo, hi = (1.0, 10.0) if args.lambdas is None else args.lambdas[1:]
        lam = np.linspace(lo, hi, max(args.k, 0))
        source = f"linspace:{lo}:{hi}"
    else:
        lam = np.asarray(args.lambdas)
        source = "explicit"
    try:
        model = make_model(args.d, args.k, lam, args.sigma2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return model, source


def _interval_from_args(args):
    from .model import TimeInterval

    if args.tau is not None:
        lo, hi = args.tau, 1.0 - args.tau
    else:
        lo, hi = args.t_lo, args.t_hi
    try:
        return TimeInterval(lo, hi)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_interval_flags(p, lo, hi):
    p.add_argument("--tau", type=float, default=None, help="use the interval [tau, 1 - tau]")
    p.add_argument("--t-lo", type=float, default=lo)
    p.add_argument("--t-hi", type=float, default=hi)


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _metadata(out: Path, args, extra: dict) -> None:
    fields = {"subcommand": args.command, "version": __version__, "backend": BACKEND}
    for key, value in sorted(vars(args).items()):
        if key in ("command", "func", "default_S") or value is None:
            continue
        fields[f"arg.{key}"] = value if not isinstance(value, tuple) else ":".join(map(str, value))
    fields.update(extra)
    write_kv(out / "metadata.txt", fields)


def cmd_clock(args):
    from .sweep import clock_table, write_clock_table

    try:
        rows = clock_table(args.sigma2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _prepare_out(args.out)
    write_clock_table(out / "clock.csv", rows)
    _metadata(out, args, {"rows": len(rows)})
    for s2, t_star, vmin in rows:
        print(f"sigma2={s2:.6g} t_star={t_star:.6f} clock_min={vmin:.6f}")


def cmd_estimate(args):
    from .model import TimeInterval
    from .sweep import binned_mae, error_histogram

    if args.n < 1000:
        raise UsageError(f"--n must be >= 1000, got {args.n}")
    if args.n < 10 * args.mae_bins:
        raise UsageError(f"--n must be >= 10 * --mae-bins ({10 * args.mae_bins})")
    model, source = _model_from_args(args)
    if args.t is not None:
        if not 0.0 <= args.t <= 1.0:
            raise UsageError("--t must lie in [0, 1]")
        t_mode = args.t
    else:
        t_mode = _interval_from_args(args)
    out = _prepare_out(args.out)
    hist = error_histogram(model, args.n, t_mode, args.branch, args.bins, args.seed)
    hist.write(out / "histogram.csv")
    mae = binned_mae(model, args.n, args.mae_bins, args.branch, args.seed)
    mae.write(out / "binned_mae.csv")
    summary = {
        "empirical_std": hist.empirical_std,
        "theory_std": hist.theory_std,
        "std_ratio": hist.empirical_std / hist.theory_std,
        "mae": hist.mae,
        "discard_rate": hist.n_discarded / hist.n_total,
        "n_used": hist.n_used,
        "n_discarded": hist.n_discarded,
        "t_star": mae.t_star,
    }
    write_kv(out / "summary.txt", summary)
    _metadata(
        out,
        args,
        {
            "lambda_source": source,
            "t_mode": t_mode if isinstance(t_mode, float) else f"uniform:{t_mode.lo}:{t_mode.hi}",
            "binned_mae.edge_mass": mae.edge_mass,
            "binned_mae.discarded": int(mae.discarded.sum()),
        },
    )
    print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in summary.items()))


def cmd_decompose(args):
    from .decomposition import decompose

    model, source = _model_from_args(args)
    interval = _interval_from_args(args)
    _check_mc(args)
    out = _prepare_out(args.out)
    rep = decompose(model, interval, args.n_outer, args.grid, args.seed, args.estimator, args.jobs)
    write_kv(out / "report.txt", rep.to_dict())
    _metadata(out, args, {"lambda_source": source, "interval": [interval.lo, interval.hi]})
    print(
        f"term1={rep.term1:.6g} coupling_variance={rep.coupling_variance:.6g} "
        f"total={rep.total_timeblind_variance:.6g} gap={rep.gap:.6g} ratio={rep.ratio:.6g} "
        f"mc_se={rep.mc_standard_error:.3g}"
    )


def _check_mc(args):
    if args.n_outer < 100:
        raise UsageError(f"--n-outer must be >= 100, got {args.n_outer}")
    if args.grid < 2:
        raise UsageError(f"--grid must be >= 2, got {args.grid}")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")


def cmd_sweep(args):
    from .sweep import sweep_dk

    if not args.d or not args.k or min(args.d) < 1 or min(args.k) < 0:
        raise UsageError("--d and --k need positive, non-empty lists")
    if args.S is not None and args.S < args.sigma2:
        raise UsageError(f"--S {args.S} is below --sigma2 {args.sigma2}")
    if not args.sigma2 > 0:
        raise UsageError("--sigma2 must be > 0")
    interval = _interval_from_args(args)
    _check_mc(args)
    out = _prepare_out(args.out)
    table = sweep_dk(args.d, args.k, args.S, args.sigma2, interval, args.n_outer, args.grid, args.seed, args.jobs)
    table.write(out / "sweep.csv")
    _metadata(
        out,
        args,
        {
            "interval": [interval.lo, interval.hi],
            "spike_convention": "S is the signal eigenvalue; excess = S - sigma2",
            "cell_seed": "mix_seed(seed, d, k)",
            "cells": len(table.rows),
            "skipped_inadmissible": ";".join(f"{d}x{k}" for d, k in table.skipped) or "none",
        },
    )
    for r in table.rows:
        print(f"d={r.d} k={r.k} gap={r.gap:.6g} ratio={r.ratio:.6g} mc_se={r.mc_se:.3g}")
    if table.skipped:
        print(f"skipped {len(table.skipped)} cells with k >= d")


def cmd_ot(args):
    from .model import term_one
    from .ot import MODES, coupling_cost_stats

    if not args.batch or min(args.batch) < 1:
        raise UsageError("--batch sizes must be >= 1")
    if args.n_batches < 1:
        raise UsageError("--n-batches must be >= 1")
    model, source = _model_from_args(args)
    out = _prepare_out(args.out)
    rows = []
    for b in args.batch:
        for mode in MODES:
            s = coupling_cost_stats(model, mode, b, args.n_batches, args.seed)
            rows.append((s.mode, s.batch_size, s.n_batches, s.mean_pair_cost, s.std_error))
            print(f"mode={s.mode} batch={b} mean_pair_cost={s.mean_pair_cost:.6g} se={s.std_error:.3g}")
    write_csv(out / "ot.csv", ["mode", "batch_size", "n_batches", "mean_pair_cost", "std_error"], rows)
    _metadata(out, args, {"lambda_source": source, "term1": term_one(model)})


def cmd_fit(args):
    from .pca import fit_spiked, parse_rank_rule
    from .sweep import estimate_on_data

    try:
        rule = parse_rank_rule(args.rank_rule)
        X = read_matrix(args.input)
    except (FormatError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from None
    try:
        fit = fit_spiked(X, rule)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _prepare_out(args.out)
    save_fitted(out, fit)
    extra = {"n_rows": X.shape[0], "d": X.shape[1], "k": fit.k, "sigma2": fit.sigma2}
    print(f"k={fit.k} sigma2={fit.sigma2:.6g} explained_fraction={fit.explained_fraction:.6g}")
    if args.then_estimate:
        est = estimate_on_data(fit, X, args.then_estimate, args.seed)
        write_kv(out / "estimate.txt", vars(est))
        print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in vars(est).items()))
    _metadata(out, args, extra)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="timeblind", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("clock", help="critical point table for residual noise floors")
    c.add_argument("--sigma2", type=_floats, required=True)
    c.add_argument("--out", default="runs/clock")
    c.set_defaults(func=cmd_clock)

    e = sub.add_parser("estimate", help="estimator error histogram and binned MAE")
    _add_model_flags(e)
    e.add_argument("--n", type=int, default=10_000)
    e.add_argument("--t", type=float, default=None, help="fixed time instead of a uniform interval")
    _add_interval_flags(e, 0.0, 1.0)
    e.add_argument("--branch", choices=["descending", "ascending"], default="descending")
    e.add_argument("--bins", type=int, default=101)
    e.add_argument("--mae-bins", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="runs/estimate")
    e.set_defaults(func=cmd_estimate)

    for name, func, helptext in (
        ("decompose", cmd_decompose, "three-term decomposition for one model"),
        ("sweep", cmd_sweep, "decomposition over a (d, k) grid"),
    ):
        s = sub.add_parser(name, help=helptext)
        if name == "decompose":
            _add_model_flags(s, default_S=10.0)
        else:
            s.add_argument("--d", type=_ints, required=True)
            s.add_argument("--k", type=_ints, required=True)
            s.add_argument("--S", type=float, default=10.0)
            s.add_argument("--sigma2", type=float, default=0.01)
        _add_interval_flags(s, 0.15, 0.85)
        s.add_argument("--n-outer", type=int, default=200_000)
        s.add_argument("--grid", type=int, default=2000)
        s.add_argument("--estimator", choices=["conditional", "by_subtraction"], default="conditional")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--out", default=f"runs/{name}")
        s.set_defaults(func=func)

    o = sub.add_parser("ot", help="pair cost under independent vs mini-batch OT coupling")
    _add_model_flags(o, default_S=10.0)
    o.add_argument("--batch", type=_ints, default=[1, 8, 64])
    o.add_argument("--n-batches", type=int, default=500)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", default="runs/ot")
    o.set_defaults(func=cmd_ot)

    f = sub.add_parser("fit", help="fit a spiked model to a data matrix (CSV or SPKD)")
    f.add_argument("--input", required=True)
    f.add_argument("--rank-rule", default="threshold:0.95", help="fixed:K or threshold:F")
    f.add_argument("--then-estimate", type=int, default=0, metavar="N")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", default="runs/fit")
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
