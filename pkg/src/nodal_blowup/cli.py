"""``nbl``: command-line runner for the radial, spectral, parabolic and 3-D studies.

Every subcommand reads a YAML configuration (see :mod:`nodal_blowup.config`),
writes CSV tables and JSON verdicts into ``--out`` and records a
``manifest.json`` with the config hash, package versions and wall-clock.
Floats in CSV are written with 17 significant digits, so reruns of the same
configuration give byte-identical tables.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import os
import platform
import signal
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .cartesian import (
    TwoBubbleSeed,
    ball_grid,
    criterion_integral_3d,
    cube_grid,
    field_rayleigh,
    first_eigenpair_3d,
    load_voxels,
    newton_stationary,
)
from .config import SUBCOMMANDS, ConfigError, RunConfig, evolution_config, load_config
from .criterion import (
    SweepRow,
    blowup_prediction,
    criterion_integral,
    criterion_row,
    positivity_onset,
)
from .limit import derrick_residual, limit_eigenpair, sobolev_level, sobolev_level_exact
from .parabolic import BlowupVerdict, blowup_window, evolve_theta, prepare_frame
from .spectrum import (
    StudyRow,
    assemble_study,
    first_eigenpair,
    study_reference,
    study_row,
    study_row_for,
)
from .stationary import (
    ProblemParams,
    energy_report,
    knodal_solution,
    trend_report,
    trend_row,
)

log = logging.getLogger("nodal_blowup")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_INTERRUPTED = 0, 1, 2, 130
TRACE_POINTS = 2000


# -- formatting -------------------------------------------------------------

def fmt(value) -> str:
    """CSV cell text: floats with 17 significant digits, lists joined by ';'."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    if isinstance(value, (list, tuple, np.ndarray)):
        return ";".join(fmt(v) for v in value)
    return str(value)


def jsonable(value):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(jsonable(payload), indent=2, allow_nan=False) + "\n")


class RowWriter:
    """CSV table with a fixed header; each row is flushed as soon as it is written."""

    def __init__(self, path: Path, columns):
        self.path = path
        self.columns = list(columns)
        self._fh = open(path, "w", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(self.columns)
        self._fh.flush()
        self.rows = 0

    def write(self, row: dict) -> None:
        extra = set(row) - set(self.columns)
        if extra:
            raise KeyError(f"columns not in the {self.path.name} schema: {sorted(extra)}")
        self._csv.writerow([fmt(row.get(c)) for c in self.columns])
        self._fh.flush()
        self.rows += 1

    def close(self) -> None:
        self._fh.close()


# -- run context ------------------------------------------------------------

@dataclass
class RunContext:
    config: RunConfig
    out: Path
    workers: int = 1
    seed: int = 0
    outputs: list = field(default_factory=list)
    _writers: list = field(default_factory=list)

    def table(self, name: str, columns) -> RowWriter:
        w = RowWriter(self.out / name, columns)
        self._writers.append(w)
        self.outputs.append(name)
        return w

    def json(self, name: str, payload) -> None:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        write_json(path, payload)
        self.outputs.append(name)

    def close(self) -> None:
        for w in self._writers:
            w.close()

    @contextlib.contextmanager
    def mapper(self):
        """Ordered map over a process pool (plain ``map`` for one worker)."""
        if self.workers <= 1:
            yield map
            return
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            yield pool.map


def _tap(mapper, sink):
    """Wrap ``mapper`` so each result reaches ``sink`` as soon as it arrives, in order."""
    def tapped(fn, *iterables):
        for item in mapper(fn, *iterables):
            sink(item)
            yield item
    return tapped


def versions() -> dict:
    return {
        "artifact": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
    }


def _error_payload(exc: BaseException, subcommand: str | None) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc), "subcommand": subcommand}
    if isinstance(exc, ConfigError):
        payload["violations"] = exc.violations
    return payload


def _error_text(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


_CAUGHT = (ValueError, ArithmeticError, RuntimeError)


# -- limit ------------------------------------------------------------------

LIMIT_COLUMNS = ["n", "trunc_radius", "n_nodes", "lambda_star", "lambda_extrapolated",
                 "sobolev_level", "sobolev_closed_form", "derrick_residual", "error"]


def limit_row(n: int, trunc_radius: float, n_nodes: int, extrapolate: bool) -> dict:
    row = {"n": n, "trunc_radius": trunc_radius, "n_nodes": n_nodes}
    try:
        lp = limit_eigenpair(n, trunc_radius, n_nodes, extrapolate=extrapolate)
        row.update(
            lambda_star=lp.lambda_star,
            lambda_extrapolated=lp.lambda_extrapolated,
            sobolev_level=sobolev_level(n),
            sobolev_closed_form=sobolev_level_exact(n),
            derrick_residual=derrick_residual(n),
        )
    except _CAUGHT as exc:
        row["error"] = _error_text(exc)
    return row


def run_limit(ctx: RunContext) -> None:
    c = ctx.config.params
    table = ctx.table("limit.csv", LIMIT_COLUMNS)
    ns = c["n_list"]
    with ctx.mapper() as m:
        for row in m(limit_row, ns, [c["trunc_radius"]] * len(ns), [c["n_nodes"]] * len(ns),
                     [c["extrapolate"]] * len(ns)):
            table.write(row)


# -- stationary -------------------------------------------------------------

STATIONARY_COLUMNS = ["n", "p", "k", "nodal_radii", "m_p", "m_p_plus", "m_p_minus",
                      "grad_sq_total", "grad_sq_plus", "grad_sq_minus", "lp1_norm",
                      "crit_plus", "crit_minus", "e_p", "residual", "newton_residual", "error"]


def _stationary_fields(sol) -> dict:
    e = energy_report(sol)
    return {
        "nodal_radii": list(sol.nodal_radii),
        "m_p": sol.m_p, "m_p_plus": sol.m_p_plus, "m_p_minus": sol.m_p_minus,
        "grad_sq_total": e.grad_sq_total, "grad_sq_plus": e.grad_sq_plus,
        "grad_sq_minus": e.grad_sq_minus, "lp1_norm": e.lp1_norm,
        "crit_plus": e.crit_plus, "crit_minus": e.crit_minus, "e_p": e.e_p,
        "residual": sol.residual, "newton_residual": sol.newton_residual,
    }


def stationary_task(params: ProblemParams, n_nodes: int, p_margin: float, cluster):
    """``(csv row, trend row or None)`` for one exponent."""
    row = {"n": params.dim, "p": params.p, "k": params.k}
    try:
        sol = knodal_solution(params, n_nodes, cluster, p_margin)
        row.update(_stationary_fields(sol))
        return row, (trend_row(sol) if params.dim > 2 else None)
    except _CAUGHT as exc:
        row["error"] = _error_text(exc)
        return row, None


def _trend_summary(n, k, trends, tail) -> dict:
    if n <= 2 or len(trends) < 3 or any(t is None for t in trends):
        return {"flags": None, "note": "trends need n > 2 and at least 3 solved exponents"}
    rep = trend_report(n, k, trends, tail)
    return {"flags": rep.flags, "tail": rep.tail, "rows": [asdict(r) for r in rep.rows]}


def run_stationary(ctx: RunContext) -> None:
    c = ctx.config.params
    table = ctx.table("stationary.csv", STATIONARY_COLUMNS)
    params = [ProblemParams(c["n"], p, c["k"]) for p in c["p_list"]]
    m_len = len(params)
    trends = []
    with ctx.mapper() as m:
        for row, tr in m(stationary_task, params, [c["n_nodes"]] * m_len,
                         [c["p_margin"]] * m_len, [c["cluster_strength"]] * m_len):
            table.write(row)
            trends.append(tr)
    ctx.json("stationary_trends.json", _trend_summary(c["n"], c["k"], trends, c["tail"]))


# -- spectrum ---------------------------------------------------------------

SPECTRUM_COLUMNS = ["n", "p", "k", "lambda", "lambda_tilde", "lambda_star_ref", "l2_gap_phi",
                    "h1_bound_check", "lambda_gap", "h1_energy", "tail_mass_tilde",
                    "tail_mass_star", "bubble_gap", "error"]


def _spectrum_fields(row, lambda_star) -> dict:
    return {
        "p": row.p, "lambda": row.lam, "lambda_tilde": row.lambda_tilde,
        "lambda_star_ref": lambda_star, "l2_gap_phi": row.l2_gap_phi,
        "h1_bound_check": row.h1_bound_ok, "lambda_gap": row.lambda_gap,
        "h1_energy": row.h1_energy, "tail_mass_tilde": row.tail_mass_tilde,
        "tail_mass_star": row.tail_mass_star, "bubble_gap": row.bubble_gap,
        "error": row.error,
    }


def _study_summary(study) -> dict:
    return {
        "lambda_star": study.lambda_star,
        "lambda_star_radius": study.lambda_star_radius,
        "tail": study.tail,
        "lambda_gap_shrinking": study.lambda_gap_shrinking,
        "phi_gap_shrinking": study.phi_gap_shrinking,
    }


def run_spectrum(ctx: RunContext) -> None:
    c = ctx.config.params
    n, k, ps = c["n"], c["k"], c["p_list"]
    limit = study_reference(n, k, ps[-1])
    table = ctx.table("spectrum.csv", SPECTRUM_COLUMNS)
    sink = lambda r: table.write({"n": n, "k": k, **_spectrum_fields(r, limit.best_lambda)})
    params = [ProblemParams(n, p, k) for p in ps]
    with ctx.mapper() as m:
        rows = list(_tap(m, sink)(study_row, params, [limit] * len(ps), [c["r_cmp"]] * len(ps),
                                  [c["n_nodes"]] * len(ps)))
    ctx.json("spectrum_summary.json", _study_summary(assemble_study(n, k, limit, rows, c["tail"])))


# -- criterion --------------------------------------------------------------

CRITERION_COLUMNS = ["n", "p", "k", "i_p", "j_p", "identity_residual", "rescaled_j",
                     "limit_target", "sign", "prediction", "lambda", "noise_floor", "limit_gap",
                     "error"]


def _criterion_fields(report) -> dict:
    return {
        "i_p": report.i_p, "j_p": report.j_p, "identity_residual": report.identity_residual,
        "rescaled_j": report.rescaled_j, "limit_target": report.limit_target,
        "sign": report.sign, "prediction": blowup_prediction(report).outcome,
        "lambda": report.lam, "noise_floor": report.noise_floor, "limit_gap": report.limit_gap,
    }


def _criterion_csv_row(n, k, row: SweepRow) -> dict:
    out = {"n": n, "p": row.p, "k": k, "error": row.error}
    if row.report is not None:
        out.update(_criterion_fields(row.report))
    return out


def run_criterion(ctx: RunContext) -> None:
    c = ctx.config.params
    n, k, ps = c["n"], c["k"], c["p_list"]
    table = ctx.table("criterion.csv", CRITERION_COLUMNS)
    params = [ProblemParams(n, p, k) for p in ps]
    with ctx.mapper() as m:
        rows = []
        for row in m(criterion_row, params, [c["n_nodes"]] * len(ps)):
            table.write(_criterion_csv_row(n, k, row))
            rows.append(row)
    ctx.json("criterion_summary.json", {"n": n, "k": k, "p_hat": positivity_onset(rows)})


# -- parabolic --------------------------------------------------------------

THETA_COLUMNS = ["theta", "outcome", "t_estimate_or_final_sup", "t_estimate_physical",
                 "exponent_fit", "decay_rate", "max_drift", "reason", "steps",
                 "max_energy_increase", "refined_outcome", "refined_t_estimate_or_final_sup",
                 "stable", "error"]


def _headline(verdict: BlowupVerdict):
    o = verdict.outcome
    if o.kind == "BlowUp":
        return o.t_estimate
    if o.kind == "Global":
        return o.final_sup
    return None


def verdict_payload(verdict: BlowupVerdict) -> dict:
    times, sups, energies = verdict.decimated(TRACE_POINTS)
    outcome = asdict(verdict.outcome)
    if verdict.kind == "BlowUp":
        outcome["t_estimate_physical"] = verdict.physical_time(verdict.outcome.t_estimate)
    return {
        "outcome": outcome,
        "steps": verdict.steps,
        "max_energy_increase": verdict.max_energy_increase,
        "energy_ok": verdict.energy_ok,
        "time_scale": verdict.time_scale,
        "trace": {"times": times, "sup": sups, "energy": energies},
    }


def _theta_fields(verdict: BlowupVerdict) -> dict:
    o = verdict.outcome
    row = {
        "outcome": o.kind, "t_estimate_or_final_sup": _headline(verdict),
        "steps": verdict.steps, "max_energy_increase": verdict.max_energy_increase,
    }
    if o.kind == "BlowUp":
        row.update(t_estimate_physical=verdict.physical_time(o.t_estimate),
                   exponent_fit=o.exponent_fit)
    elif o.kind == "Global":
        row["decay_rate"] = o.decay_rate
    elif o.kind == "NearStationary":
        row["max_drift"] = o.max_drift
    else:
        row["reason"] = o.reason
    return row


def theta_task(theta: float, frame, config, fine_frame=None, fine_config=None):
    """``(verdict or error text, refined verdict or error text or None)``."""
    def one(fr, cfg):
        try:
            return evolve_theta(fr, theta, cfg)
        except _CAUGHT as exc:
            return _error_text(exc)

    coarse = one(frame, config)
    fine = one(fine_frame, fine_config) if fine_frame is not None else None
    return coarse, fine


def _theta_row(theta, coarse, fine) -> dict:
    row = {"theta": theta}
    if isinstance(coarse, BlowupVerdict):
        row.update(_theta_fields(coarse))
    else:
        row["error"] = coarse
    if fine is not None:
        if isinstance(fine, BlowupVerdict):
            row["refined_outcome"] = fine.kind
            row["refined_t_estimate_or_final_sup"] = _headline(fine)
            row["stable"] = isinstance(coarse, BlowupVerdict) and fine.kind == coarse.kind
        else:
            row["stable"] = False
            row["error"] = "; ".join(filter(None, [row.get("error"), f"refined: {fine}"]))
    return row


def _theta_file(theta: float) -> str:
    return f"theta_{theta!r}.json"


def _sweep(ctx: RunContext, params: ProblemParams, thetas, c, refine: bool, prefix: str):
    cfg = evolution_config(c)
    frame = prepare_frame(params, cfg, c["n_nodes"])
    fine_frame = fine_cfg = None
    if refine:
        fine_cfg = cfg.refined()
        fine_frame = prepare_frame(params, fine_cfg, 2 * c["n_nodes"] - 1)
    table = ctx.table(f"{prefix}.csv", THETA_COLUMNS)
    verdicts = {}
    m_len = len(thetas)
    with ctx.mapper() as m:
        results = m(theta_task, thetas, [frame] * m_len, [cfg] * m_len,
                    [fine_frame] * m_len, [fine_cfg] * m_len)
        for theta, (coarse, fine) in zip(thetas, results):
            table.write(_theta_row(theta, coarse, fine))
            if isinstance(coarse, BlowupVerdict):
                verdicts[theta] = coarse
                payload = {"n": params.dim, "p": params.p, "k": params.k, "theta": theta,
                           **verdict_payload(coarse)}
                if isinstance(fine, BlowupVerdict):
                    payload["refined"] = verdict_payload(fine)
                ctx.json(f"{prefix}/{_theta_file(theta)}", payload)
    return verdicts


def run_evolve(ctx: RunContext) -> None:
    c = ctx.config.params
    params = ProblemParams(c["n"], c["p"], c["k"])
    verdicts = _sweep(ctx, params, [c["theta"]], c, False, "evolve")
    if c["theta"] not in verdicts:
        raise RuntimeError(f"evolution failed for theta={c['theta']}")
    v = verdicts[c["theta"]]
    ctx.json("evolve.json", {"n": params.dim, "p": params.p, "k": params.k,
                             "theta": c["theta"], **verdict_payload(v)})


def run_sweep_theta(ctx: RunContext) -> None:
    c = ctx.config.params
    params = ProblemParams(c["n"], c["p"], c["k"])
    verdicts = _sweep(ctx, params, c["theta_list"], c, c["refine_check"], "sweep_theta")
    ctx.json("sweep_theta_summary.json", {
        "n": params.dim, "p": params.p, "k": params.k,
        "window": blowup_window(verdicts),
        "outcomes": {repr(t): v.kind for t, v in verdicts.items()},
    })


# -- cartesian --------------------------------------------------------------

CARTESIAN_COLUMNS = ["domain", "cells", "p", "outcome", "residual", "iterations", "m_p",
                     "nodal_regions", "lambda", "rayleigh", "i_p", "j_p", "identity_residual",
                     "rescaled_j", "limit_target", "sign", "prediction", "noise_floor", "label"]


def _domain(c, cells):
    if c["voxel_file"] is not None:
        return load_voxels(c["voxel_file"])
    return cube_grid(cells) if c["domain"] == "cube" else ball_grid(cells)


def _field_solve(c, grid):
    center = tuple(c["center"]) if c["center"] is not None else grid.center
    seed = TwoBubbleSeed(center, c["mu_plus"], c["mu_minus"], c["amplitude"], c["offset"])
    return newton_stationary(grid, c["p"], seed, tol=c["tol"], max_iter=c["max_iter"])


def run_cartesian(ctx: RunContext) -> None:
    c = ctx.config.params
    grid = _domain(c, c["cells"])
    sol = _field_solve(c, grid)
    eig = first_eigenpair_3d(sol)
    coarse = None
    if c["coarse_cells"] is not None:
        cs = _field_solve(c, _domain(c, c["coarse_cells"]))
        coarse = (cs, first_eigenpair_3d(cs))
    report = criterion_integral_3d(sol, eig, coarse)
    table = ctx.table("cartesian.csv", CARTESIAN_COLUMNS)
    name = c["voxel_file"] if c["voxel_file"] is not None else c["domain"]
    row = {
        "domain": name, "cells": "x".join(str(s - 2) for s in grid.mask.shape),
        "p": sol.p, "outcome": sol.outcome, "residual": sol.residual,
        "iterations": sol.iterations, "m_p": sol.m_p, "nodal_regions": sol.nodal_regions,
        "rayleigh": field_rayleigh(sol), "label": sol.label,
        **_criterion_fields(report),
    }
    row.pop("limit_gap")
    table.write(row)
    ctx.json("cartesian.json", {
        "label": sol.label, "outcome": sol.outcome, "a_p": sol.a_p,
        "positive_at_max": sol.positive_at_max, "residual_history": sol.residual_history,
        "eigen_iterations": eig.iterations, "eigen_residual": eig.residual,
        "i_p_coarse": report.i_p_coarse,
    })


# -- study ------------------------------------------------------------------

@dataclass
class StudyResult:
    stationary: dict
    spectrum: StudyRow
    criterion: SweepRow
    trend: object = None


def study_task(params: ProblemParams, limit, n_nodes: int, r_cmp: float) -> StudyResult:
    """Stationary, spectral and criterion results for one exponent from a single solve."""
    base = {"n": params.dim, "p": params.p, "k": params.k}
    try:
        sol = knodal_solution(params, n_nodes=n_nodes)
        eig = first_eigenpair(sol)
    except _CAUGHT as exc:
        err = _error_text(exc)
        return StudyResult({**base, "error": err}, StudyRow(params.p, error=err),
                           SweepRow(params.p, error=err))
    try:
        srow = study_row_for(sol, eig, limit, r_cmp)
    except _CAUGHT as exc:
        srow = StudyRow(params.p, error=_error_text(exc))
    try:
        crit = SweepRow(params.p, criterion_integral(sol, eig))
    except _CAUGHT as exc:
        crit = SweepRow(params.p, error=_error_text(exc))
    return StudyResult({**base, **_stationary_fields(sol)}, srow, crit, trend_row(sol))


def run_study(ctx: RunContext) -> None:
    c = ctx.config.params
    n, k, ps = c["n"], c["k"], c["p_list"]
    limit = study_reference(n, k, ps[-1])
    t_stat = ctx.table("study_stationary.csv", STATIONARY_COLUMNS)
    t_spec = ctx.table("study_spectrum.csv", SPECTRUM_COLUMNS)
    t_crit = ctx.table("study_criterion.csv", CRITERION_COLUMNS)
    params = [ProblemParams(n, p, k) for p in ps]
    results = []
    with ctx.mapper() as m:
        for res in m(study_task, params, [limit] * len(ps), [c["n_nodes"]] * len(ps),
                     [c["r_cmp"]] * len(ps)):
            t_stat.write(res.stationary)
            t_spec.write({"n": n, "k": k, **_spectrum_fields(res.spectrum, limit.best_lambda)})
            t_crit.write(_criterion_csv_row(n, k, res.criterion))
            results.append(res)
    evolve_p = c["evolve_p"] if c["evolve_p"] is not None else ps[-1]
    verdicts = _sweep(ctx, ProblemParams(n, evolve_p, k), c["theta_list"], c, False,
                      "study_theta")
    spectral = assemble_study(n, k, limit, [r.spectrum for r in results], c["tail"])
    ctx.json("study_summary.json", {
        "n": n, "k": k,
        "stationary_trends": _trend_summary(n, k, [r.trend for r in results], c["tail"]),
        "spectrum": _study_summary(spectral),
        "p_hat": positivity_onset([r.criterion for r in results]),
        "evolve_p": evolve_p,
        "window": blowup_window(verdicts),
        "outcomes": {repr(t): v.kind for t, v in verdicts.items()},
    })


RUNNERS = {
    "limit": run_limit,
    "stationary": run_stationary,
    "spectrum": run_spectrum,
    "criterion": run_criterion,
    "evolve": run_evolve,
    "sweep-theta": run_sweep_theta,
    "cartesian": run_cartesian,
    "study": run_study,
}


# -- entry points -----------------------------------------------------------

def _sigterm(signum, frame):
    raise KeyboardInterrupt


def run(config: RunConfig, out, workers: int = 1, seed: int = 0) -> int:
    """Execute a validated config; returns the process exit status.

    The manifest is written before the first solve (``complete: false``) and
    rewritten at the end, so an interrupted run leaves its flushed rows and
    an incomplete manifest behind.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(config, out, workers, seed)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    manifest = {
        "schema_version": config.schema_version,
        "subcommand": config.subcommand,
        "config_sha256": config.digest,
        "config": config.params,
        "workers": workers,
        "seed": seed,
        "versions": versions(),
        "started_utc": started,
        "complete": False,
    }
    write_json(out / "manifest.json", manifest)
    status, error = EXIT_OK, None
    try:
        RUNNERS[config.subcommand](ctx)
    except KeyboardInterrupt as exc:
        status, error = EXIT_INTERRUPTED, {"error": "Interrupted", "message": str(exc)}
        log.warning("interrupted; partial rows kept")
    except Exception as exc:  # any module failure becomes an error record
        status, error = EXIT_FAILURE, _error_payload(exc, config.subcommand)
        log.error("%s failed: %s", config.subcommand, _error_text(exc))
    finally:
        ctx.close()
    manifest.update(
        complete=status == EXIT_OK,
        wall_clock_seconds=time.perf_counter() - t0,
        outputs=ctx.outputs,
    )
    if error is not None:
        manifest["error"] = error
        write_json(out / "error.json", error)
        if status == EXIT_FAILURE:
            print(json.dumps(jsonable(error)), file=sys.stderr)
    write_json(out / "manifest.json", manifest)
    return status


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=RUNNERS[name].__name__.replace("run_", "") + " run")
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (overrides params.out)")
        p.add_argument("--workers", type=_positive, default=1, help="worker processes")
        p.add_argument("--seed", type=_u64, default=0,
                       help="reserved; every algorithm here is deterministic")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("NBL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.command)
    except (ConfigError, OSError) as exc:
        print(json.dumps(_error_payload(exc, args.command)), file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or config.params.get("out")
    if not out:
        print(json.dumps({"error": "ConfigError", "subcommand": args.command,
                          "message": "no output directory: pass --out or set params.out"}),
              file=sys.stderr)
        return EXIT_CONFIG
    previous = signal.signal(signal.SIGTERM, _sigterm)
    try:
        return run(config, out, args.workers, args.seed)
    finally:
        signal.signal(signal.SIGTERM, previous)


if __name__ == "__main__":
    sys.exit(main())
