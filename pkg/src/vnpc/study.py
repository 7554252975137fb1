"""Replication study: simulate, fit each procedure, score against the analytic truth."""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .io import ensure_dir, fmt
from .sampler import ChainFailure, McmcConfig, run_chain, run_var_baseline
from .summary import coverage_and_width, l1_l2_error, pointwise_median
from .timefreq import FrequencyGrid
from .var import VAR2_PARAMS, VMA1_SIGMA, VMA1_THETA, select_order_aic, simulate_var, simulate_vma, var_spectral_density, vma_spectral_density

log = logging.getLogger(__name__)

MODELS = ("var2", "vma1")
WIDTH_LABELS = ("f11", "Re_f12", "Im_f12", "f22")
AIC_MAX_ORDER = 10


def simulate_model(model: str, n: int, seed) -> np.ndarray:
    if model == "var2":
        return simulate_var(VAR2_PARAMS, n, seed)
    if model == "vma1":
        return simulate_vma(VMA1_THETA, VMA1_SIGMA, n, seed)
    raise ValueError(f"unknown model {model!r}; choose from {MODELS}")


def true_spectrum(model: str, omegas: np.ndarray) -> np.ndarray:
    if model == "var2":
        return var_spectral_density(VAR2_PARAMS, omegas)
    if model == "vma1":
        return vma_spectral_density(VMA1_THETA, VMA1_SIGMA, omegas)
    raise ValueError(f"unknown model {model!r}")


@dataclass(frozen=True)
class Procedure:
    """``vnpc`` with an order, ``vnp``, or ``var`` with an order (None means AIC)."""

    name: str
    order: int | None = None

    @classmethod
    def parse(cls, text: str) -> "Procedure":
        m = re.fullmatch(r"\s*(vnpc|vnp|var)\s*(?:\(?\s*(\d+|aic)\s*\)?)?\s*", text.lower())
        if not m:
            raise ValueError(f"cannot parse procedure {text!r} (examples: vnpc1, vnp, var, var2)")
        name, arg = m.groups()
        order = None if arg in (None, "aic") else int(arg)
        if name == "vnpc" and order is None:
            order = 1
        if name == "vnpc" and order < 1:
            raise ValueError("vnpc needs order >= 1; use vnp for a white-noise working model")
        if name == "vnp":
            order = None
        if name == "var" and order is not None and order < 1:
            raise ValueError("var needs order >= 1")
        return cls(name, order)

    @property
    def label(self) -> str:
        if self.name == "vnp":
            return "VNP"
        if self.name == "var" and self.order is None:
            return "VAR(AIC)"
        return f"{self.name.upper()}({self.order})"


@dataclass
class StudyConfig:
    models: tuple[str, ...] = MODELS
    sizes: tuple[int, ...] = (256,)
    replications: int = 30
    procedures: tuple[str, ...] = ("vnpc1", "vnp", "var")
    master_seed: int = 2024
    mcmc: McmcConfig = field(default_factory=lambda: McmcConfig(iterations=20000, burn_in=8000, thin=5, L=20))
    workers: int | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("need at least one replication")
        for m in self.models:
            if m not in MODELS:
                raise ValueError(f"unknown model {m!r}")
        for p in self.procedures:
            Procedure.parse(p)


def replication_seeds(master: int, model: str, n: int, rep: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent (data, chain) streams determined by the master seed and the cell."""
    tag = [MODELS.index(model), n, rep]
    data, chain = np.random.SeedSequence([master, *tag]).spawn(2)
    return data, chain


def _chain_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def fit_procedure(z: np.ndarray, proc: Procedure, mcmc: McmcConfig, seed: int):
    if proc.name == "var":
        p = proc.order if proc.order is not None else select_order_aic(z, AIC_MAX_ORDER)
        return run_var_baseline(z, p, replace(mcmc, procedure="var", order=p, seed=seed))
    if proc.name == "vnp":
        return run_chain(z, replace(mcmc, procedure="vnp", order=0, seed=seed))
    return run_chain(z, replace(mcmc, procedure="vnpc", order=proc.order, seed=seed))


def score(draws, truth: np.ndarray) -> dict:
    med = pointwise_median(draws)
    l1, l2 = l1_l2_error(med, truth, draws.omegas)
    covered, widths = coverage_and_width(draws, truth)
    return {"L1": l1, "L2": l2, "covered": bool(covered), "widths": [float(w) for w in widths], "order": int(draws.order)}


def run_replication(args: tuple) -> list[dict]:
    """One replication: one simulated data set, every procedure fitted to it."""
    model, n, rep, procs, mcmc, master, out_dir = args
    data_ss, chain_ss = replication_seeds(master, model, n, rep)
    z = simulate_model(model, n, np.random.default_rng(data_ss))
    truth = true_spectrum(model, FrequencyGrid(n).omegas)
    results = []
    for i, text in enumerate(procs):
        proc = Procedure.parse(text)
        seed = _chain_seed(chain_ss.spawn(len(procs))[i])
        row = {"model": model, "n": n, "rep": rep, "procedure": proc.label}
        try:
            draws = fit_procedure(z, proc, mcmc, seed)
            row.update(score(draws, truth), failed=False, wall_time=draws.wall_time, acceptance=draws.acceptance)
        except (ChainFailure, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("replication %s/%d/%d %s failed: %s", model, n, rep, proc.label, exc)
            row.update(failed=True, error=str(exc))
        results.append(row)
    if out_dir:
        d = ensure_dir(Path(out_dir) / f"{model}_n{n}" / f"rep{rep:04d}")
        with open(Path(d) / "result.json", "w") as fh:
            json.dump(results, fh, indent=2, default=float)
    return results


def aggregate(rows: list[dict]) -> list[dict]:
    """Table rows per (procedure, model, n); failed replications are excluded and counted."""
    cells: dict[tuple, list[dict]] = {}
    for r in sorted(rows, key=lambda r: (r["model"], r["n"], r["procedure"], r["rep"])):
        cells.setdefault((r["procedure"], r["model"], r["n"]), []).append(r)
    table = []
    for (proc, model, n), rs in cells.items():
        ok = [r for r in rs if not r["failed"]]
        entry = {"procedure": proc, "model": model, "n": n, "replications": len(ok), "failed": len(rs) - len(ok)}
        if ok:
            widths = np.array([r["widths"] for r in ok])
            entry.update(
                L1=float(np.mean([r["L1"] for r in ok])),
                L2=float(np.mean([r["L2"] for r in ok])),
                coverage=float(np.mean([r["covered"] for r in ok])),
                **{f"width_{lab}": float(np.median(widths[:, i])) for i, lab in enumerate(WIDTH_LABELS[: widths.shape[1]])},
            )
        table.append(entry)
    return table


REPORT_COLUMNS = ["procedure", "model", "n", "replications", "failed", "L1", "L2", "coverage"] + [f"width_{w}" for w in WIDTH_LABELS]


def write_report(path, table: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for e in table:
            vals = []
            for c in REPORT_COLUMNS:
                v = e.get(c, "")
                vals.append(fmt(v) if isinstance(v, float) else str(v))
            fh.write(",".join(vals) + "\n")


def run_study(cfg: StudyConfig) -> tuple[list[dict], list[dict]]:
    """Returns ``(table, per-replication rows)``; writes ``study_report.csv`` if ``out_dir`` is set."""
    jobs = [
        (model, n, rep, tuple(cfg.procedures), cfg.mcmc, cfg.master_seed, cfg.out_dir)
        for model in cfg.models
        for n in cfg.sizes
        for rep in range(cfg.replications)
    ]
    workers = cfg.workers or os.cpu_count() or 1
    if workers == 1:
        nested = [run_replication(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            nested = list(ex.map(run_replication, jobs))
    rows = [r for rs in nested for r in rs]
    table = aggregate(rows)
    if cfg.out_dir:
        ensure_dir(cfg.out_dir)
        write_report(Path(cfg.out_dir) / "study_report.csv", table)
        with open(Path(cfg.out_dir) / "study_config.json", "w") as fh:
            json.dump(asdict(cfg), fh, indent=2, default=str)
    return table, rows
