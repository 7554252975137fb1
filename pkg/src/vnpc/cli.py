"""Command-line interface: ``vnpc {elbow,fit,study,simulate}``.

Exit codes: 0 success, 2 I/O error, 3 invalid configuration or data,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .io import DataError, ensure_dir, load_series, save_draws, save_series, save_traces, svg_polyline, write_csv
from .sampler import ChainFailure, McmcConfig, run_chain
from .study import MODELS, Procedure, StudyConfig, run_study, simulate_model, true_spectrum
from .summary import summarize
from .var import RankDeficiencyError, StationarityError, TransferSingularityError, elbow_table, select_order_aic

EXIT_OK, EXIT_IO, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("vnpc")


class ConfigError(ValueError):
    pass


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; keys mirror long flags."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.lstrip("-").replace("-", "_")] = v
    return out


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _add_data_flags(p):
    p.add_argument("--data", help="CSV path, or a builtin model name (var2, vma1)")
    p.add_argument("--n", type=int, default=256, help="length when --data names a builtin model")
    p.add_argument("--columns", help="comma-separated column names or indices")
    p.add_argument("--standardize", action="store_true", default=None)
    p.add_argument("--diff", action="store_true", default=None)


def _add_mcmc_flags(p):
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--thin", type=int, default=None)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--kmax", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vnpc", description="Bayesian spectral density matrix estimation")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, helptext in [
        ("elbow", "negative maximised log-likelihood by VAR order"),
        ("fit", "run one procedure and write draws and summaries"),
        ("study", "replication study against analytic truths"),
        ("simulate", "write a builtin model realisation as CSV"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="key = value file; command-line flags take precedence")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        if name in ("elbow", "fit"):
            _add_data_flags(p)
            p.add_argument("--plots", action="store_true", default=None)
        if name == "elbow":
            p.add_argument("--pmax", type=int, default=None)
        if name in ("fit", "study"):
            _add_mcmc_flags(p)
        if name == "fit":
            p.add_argument("--procedure", choices=("vnpc", "vnp", "var"), default=None)
            p.add_argument("--order", default=None, help="VAR order; 'aic' selects it for var")
            p.add_argument("--pair", default=None, help="i,j series pair for coherency (1-based)")
        if name == "study":
            p.add_argument("--models", default=None, help="comma list from var2,vma1")
            p.add_argument("--sizes", default=None, help="comma list of sample sizes")
            p.add_argument("--reps", type=int, default=None)
            p.add_argument("--procedures", default=None, help="comma list, e.g. vnpc1,vnp,var")
            p.add_argument("--workers", type=int, default=None)
        if name == "simulate":
            p.add_argument("--model", choices=MODELS, default=None)
            p.add_argument("--n", type=int, default=None)
    return ap


DEFAULTS = {
    "seed": 0, "n": 256, "pmax": 10, "procedure": "vnpc", "order": "1", "standardize": False, "diff": False,
    "plots": False, "model": "var2", "models": "var2,vma1", "sizes": "256", "reps": 30, "procedures": "vnpc1,vnp,var",
}
_INT_KEYS = {"seed", "n", "pmax", "iters", "burnin", "thin", "L", "kmax", "reps", "workers"}
_BOOL_KEYS = {"standardize", "diff", "plots"}


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Merge config-file values under command-line flags, then defaults."""
    file_vals = read_config_file(args.config) if getattr(args, "config", None) else {}
    known = vars(args)
    for k in file_vals:
        if k not in known:
            raise ConfigError(f"unknown config key {k!r} for command {args.command}")
    for k, cur in list(known.items()):
        if cur is not None or k in ("command", "config", "verbose"):
            continue
        v = file_vals.get(k, DEFAULTS.get(k))
        if v is None:
            continue
        if k in _INT_KEYS:
            v = int(v)
        elif k in _BOOL_KEYS:
            v = _bool(v)
        setattr(args, k, v)
    return args


def _load(args) -> tuple[np.ndarray, list[str], str | None]:
    if args.data is None:
        raise ConfigError("--data is required (CSV path or builtin model name)")
    if args.data in MODELS:
        z = simulate_model(args.data, args.n, args.seed)
        return z, ["z1", "z2"], args.data
    cols = [c.strip() for c in args.columns.split(",")] if args.columns else None
    z, names = load_series(args.data, cols, standardize=args.standardize, diff=args.diff)
    return z, names, None


def mcmc_config(args, procedure: str, order: int) -> McmcConfig:
    kw = {"procedure": procedure, "order": order, "seed": args.seed}
    for flag, fieldname in [("iters", "iterations"), ("burnin", "burn_in"), ("thin", "thin"), ("L", "L"), ("kmax", "k_max")]:
        v = getattr(args, flag, None)
        if v is not None:
            kw[fieldname] = v
    if "iterations" in kw and "burn_in" not in kw:
        kw["burn_in"] = min(kw["iterations"] // 2, McmcConfig.burn_in)
    return McmcConfig(**kw)


def cmd_elbow(args) -> int:
    z, _, _ = _load(args)
    table = elbow_table(z, args.pmax)
    out = ensure_dir(args.out or ".")
    table.to_csv(Path(out) / "elbow.csv")
    svg_polyline(Path(out) / "elbow.svg", table.orders, {"-max log-lik": table.neg_max_loglik}, "Elbow plot", "order p", "negative maximised log-likelihood")
    for p, v in zip(table.orders, table.neg_max_loglik):
        print(f"{p}\t{v:.6f}")
    return EXIT_OK


def _order(args, z) -> int:
    if args.procedure == "vnp":
        return 0
    if str(args.order).lower() == "aic":
        if args.procedure != "var":
            raise ConfigError("order 'aic' is only available for the var procedure")
        return select_order_aic(z, 10)
    try:
        p = int(args.order)
    except ValueError as exc:
        raise ConfigError(f"invalid order {args.order!r}") from exc
    if p < 1:
        raise ConfigError(f"procedure {args.procedure} needs order >= 1; use --procedure vnp for a white-noise working model")
    return p


def _hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def cmd_fit(args) -> int:
    z, names, builtin = _load(args)
    p = _order(args, z)
    cfg = mcmc_config(args, args.procedure, p)
    pair = None
    if args.pair:
        i, j = (int(s) - 1 for s in args.pair.split(","))
        if not (0 <= i < z.shape[1] and 0 <= j < z.shape[1] and i != j):
            raise ConfigError(f"invalid series pair {args.pair!r}")
        pair = (i, j)
    out = ensure_dir(args.out or "vnpc_out")
    config_record = {k: v for k, v in asdict(cfg).items() if k not in ("levy", "bernstein")}
    config_record.update(data=args.data, columns=args.columns, standardize=args.standardize, diff=args.diff, n=int(z.shape[0]), d=int(z.shape[1]))
    try:
        draws = run_chain(z, cfg)
    except ChainFailure as exc:
        with open(Path(out) / "summary.json", "w") as fh:
            json.dump({"status": "failed", "partial": True, "error": str(exc), "config": config_record}, fh, indent=2)
        raise
    truth = true_spectrum(builtin, draws.omegas) if builtin else None
    bundle = summarize(draws, truth, pair=pair if z.shape[1] > 1 else None)
    save_draws(Path(out) / "draws.bin", draws.f, draws.omegas, draws.n)
    save_traces(Path(out) / "traces.csv", draws)
    deterministic = {
        "status": "ok",
        "config": config_record,
        "series": names,
        "seed": cfg.seed,
        "acceptance": draws.acceptance,
        "M": draws.M,
        "order": draws.order,
    }
    deterministic.update(xi=bundle.xi, widths=bundle.widths(), **bundle.scalars)
    # wall time is excluded so identical runs hash identically
    deterministic["content_hash"] = _hash(deterministic)
    bundle.write(out, {**deterministic, "wall_time": draws.wall_time})
    if args.plots:
        _plots(out, bundle, draws)
    print(f"wrote {out}: M={draws.M}, xi={bundle.xi:.4g}, acceptance={ {k: round(v, 3) for k, v in draws.acceptance.items()} }")
    return EXIT_OK


def _plots(out, bundle, draws) -> None:
    for idx, lab in enumerate(bundle.labels):
        t = bundle.component_table(idx)
        svg_polyline(
            Path(out) / f"summary_{lab}.svg", t[:, 0],
            {"median": t[:, 1], "pointwise 90%": t[:, 2], "": t[:, 3], "uniform 90%": t[:, 4], " ": t[:, 5]},
            lab, "frequency", lab,
        )
    if bundle.coherency_median is not None:
        svg_polyline(Path(out) / "coherency.svg", bundle.omegas, {"median": bundle.coherency_median, "lo": bundle.coherency_lo, "hi": bundle.coherency_hi}, "squared coherency", "frequency", "")
    svg_polyline(Path(out) / "trace_k.svg", draws.iters, {"k": draws.k}, "k trace", "iteration", "k")


def cmd_study(args) -> int:
    mcmc = mcmc_config(args, "vnpc", 1)
    if args.iters is None:
        mcmc = McmcConfig(iterations=20000, burn_in=8000, thin=mcmc.thin, L=mcmc.L if args.L else 20, k_max=mcmc.k_max)
    elif args.L is None:
        mcmc.L = 20
    procs = tuple(s.strip() for s in args.procedures.split(","))
    for p in procs:
        try:
            Procedure.parse(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    cfg = StudyConfig(
        models=tuple(s.strip() for s in args.models.split(",")),
        sizes=tuple(int(s) for s in args.sizes.split(",")),
        replications=args.reps,
        procedures=procs,
        master_seed=args.seed,
        mcmc=mcmc,
        workers=args.workers,
        out_dir=args.out or "study_out",
    )
    table, _ = run_study(cfg)
    for e in table:
        print(
            f"{e['model']:5s} n={e['n']:<5d} {e['procedure']:9s} L1={e.get('L1', float('nan')):.4f} "
            f"L2={e.get('L2', float('nan')):.4f} cov={e.get('coverage', float('nan')):.3f} failed={e['failed']}"
        )
    return EXIT_OK


def cmd_simulate(args) -> int:
    n = args.n or 256
    z = simulate_model(args.model, n, args.seed)
    out = args.out or f"{args.model}_n{n}.csv"
    save_series(out, z)
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {"elbow": cmd_elbow, "fit": cmd_fit, "study": cmd_study, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = resolve(args)
        return COMMANDS[args.command](args)
    except (DataError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ChainFailure, StationarityError, TransferSingularityError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, RankDeficiencyError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
