"""Execute one validated :class:`ExperimentConfig` and collect a :class:`RunReport`."""
from __future__ import annotations

import csv
import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import acceptance
from . import applications as app
from .brenier import (MonotonicityError, lipschitz_estimate, potential_density, quantile_map,
                      radial_brenier, radial_log_density, verify_logderiv_identity)
from .config import ConfigError, ExperimentConfig, build_grid, build_potential, build_profile, build_set, build_V
from .flow import (EmptyCoreError, empirical_lipschitz, limit_map, logconcavity_monitor,
                   pushforward_residual, round_trip_error, simulate_advection)
from .gaussian import (GaussianPair, InvariantBreach, brenier_linear, commutator_diagnostics,
                       asymmetry_refinement, contraction_certificate, integrate_matrix_flow)
from .semigroup import (DIRICHLET, REFLECTING, HeatSemigroup, InstabilityError, fit_decay_rate,
                        initial_field, quantitative_bounds_report, write_snapshots_csv)

log = logging.getLogger(__name__)

NUMERICAL_ERRORS = (InstabilityError, InvariantBreach, EmptyCoreError, MonotonicityError,
                    FloatingPointError, np.linalg.LinAlgError)

DEFAULT_TOLERANCES = {
    "gaussian": {"invariant": 1e-6, "contraction": 1e-8, "commuting_recovery": 1e-6},
    "semigroup": {"mass": 1e-10, "max_principle": 1e-12, "gradient": 1e-6, "smoothing": 1e-6,
                  "grid_factor": 10.0, "symmetry": 1e-12},
    "flow": {"lipschitz": 5e-3, "round_trip": 1e-6, "pushforward": 5e-3, "quantile_map": 1e-3},
    "brenier1d": {"lipschitz": 1e-4, "contraction": 1e-10, "logderiv": 1e-4, "pushforward": 1e-12},
    "correlation": {"z": 2.0},
}


class NumericalAbort(RuntimeError):
    """Raised by the runner for numerical failures (CLI exit code 3)."""


@dataclass
class RunReport:
    id: str
    scenario: str
    seed: int
    status: str = "passed"
    wall_time: float = 0.0
    metrics: dict = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    error: str | None = None

    def check(self, name: str, value, tolerance, passed: bool) -> None:
        if name in self.invariants:
            raise KeyError(f"invariant {name!r} reported twice")
        self.invariants[name] = {"passed": bool(passed), "value": _plain(value),
                                 "tolerance": _plain(tolerance)}

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.invariants.values())

    def to_json(self) -> dict:
        return {"id": self.id, "scenario": self.scenario, "seed": self.seed, "status": self.status,
                "wall_time": self.wall_time, "metrics": _plain(self.metrics),
                "invariants": self.invariants, "artifacts": self.artifacts, "error": self.error}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(_plain(v), sort_keys=True)
    return str(v)


def write_rows(path: Path, rows: list[dict]) -> None:
    """Tidy CSV with columns in first-seen order and round-trip float formatting."""
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


class Tol:
    def __init__(self, kind: str, overrides: dict, scale: float):
        self.base = dict(DEFAULT_TOLERANCES.get(kind, {}))
        unknown = set(overrides) - set(self.base)
        if unknown and kind != "acceptance-suite":
            raise ConfigError(f"unknown tolerances for {kind}: {sorted(unknown)}")
        self.base.update(overrides)
        self.scale = scale

    def __getitem__(self, key):
        return self.base[key] * self.scale


# ---------------------------------------------------------------------------
# scenario kinds; each fills the report and returns {filename: writer}


def run_gaussian(cfg: ExperimentConfig, rep: RunReport, tol: Tol) -> dict:
    p = cfg.raw["pair"]
    try:
        pair = (GaussianPair.from_affine(p["A"], p["b"], p["B"]) if p.get("b")
                else GaussianPair(p["A"], p["B"]))
    except ValueError as exc:
        raise ConfigError(f"pair: {exc}") from None
    res = integrate_matrix_flow(pair, dt=cfg.get("dt", 1e-3), stop_tol=1e-8,
                                abort_tol=max(1e-5, tol["invariant"]))
    cert = contraction_certificate(res.T, tol["contraction"])
    mesh = np.linspace(0.0, float(res.times[-1]), 11)
    diag = commutator_diagnostics(pair, mesh, res)
    rep.metrics.update({"n": pair.n, "commuting": pair.commuting, "t_end": float(res.times[-1]),
                        "steps": len(res.times) - 1, "stopped": res.stopped,
                        "max_residual": res.max_residual, "sigma_max": cert["sigma_max"],
                        "max_commutator": diag["max_commutator"],
                        "final_asymmetry": diag["final_asymmetry"], "T_minus_Copt": diag["map_gap"],
                        "T": res.T, "L_inf": res.L_inf})
    rep.check("flow_invariant", res.max_residual, tol["invariant"], res.max_residual <= tol["invariant"])
    rep.check("contraction", cert["sigma_max"], 1 + tol["contraction"], cert["passed"])
    if not pair.commuting:
        # recorded with a step-size error bar; no verdict either way
        ref = asymmetry_refinement(pair, dts=(2 * cfg.get("dt", 1e-3), cfg.get("dt", 1e-3)))
        rep.metrics.update({"asymmetry_by_dt": dict(zip(map(str, ref["dts"]), ref["asymmetry"])),
                            "asymmetry_error_bar": ref["error_bar"]})
    if pair.commuting:
        rep.check("commuting_recovery", diag["map_gap"], tol["commuting_recovery"],
                  diag["map_gap"] <= tol["commuting_recovery"])

    def trajectory(path):
        n = pair.n
        rows = []
        for s in res.states(stride=max(1, len(res.times) // 1000)):
            row = {"t": s.t}
            row.update({f"M{i}{j}": s.M[i, j] for i in range(n) for j in range(n)})
            row.update({f"L{i}{j}": s.L[i, j] for i in range(n) for j in range(n)})
            rows.append(row)
        write_rows(path, rows)

    return {"trajectory.csv": trajectory}


def run_semigroup(cfg: ExperimentConfig, rep: RunReport, tol: Tol) -> dict:
    U = build_potential(cfg.raw["potential"])
    V = build_V(cfg.raw["V"], U.decomposition)
    setup = build_grid(cfg.raw["grid"], U, V)
    grid, bc = setup.grid, setup.bc
    R = float(np.max(np.abs(grid.bounds)))
    dt, horizon = float(cfg.raw["dt"]), float(cfg.raw["horizon"])
    every = float(cfg.get("snapshot_every", horizon / 10))
    solver = HeatSemigroup(setup.U, grid, bc)
    f0 = initial_field(grid, setup.V_grid, bc, R if bc == DIRICHLET else None)
    times = sorted({round(k * every, 12) for k in range(int(round(horizon / every)) + 1)} | {horizon})
    snaps = solver.evolve(f0, horizon, dt, times)
    sup0 = float(f0.values.max())
    mass = max(s.diagnostics["mass_rel_change"] for s in snaps)
    growth = solver.stats["max_growth"] / sup0
    under = -min(solver.stats["min_value"], 0.0) / sup0
    h = float(np.max(grid.h))
    mon = logconcavity_monitor(snaps, tol_grid=tol["grid_factor"] * h, radial_dim=setup.radial_dim)
    rep.metrics.update({"R": R, "h": h, "bc": bc, "steps": solver.stats["steps"],
                        "mass_rel_change": mass, "max_growth": growth, "undershoot": under,
                        "min_hessian_eig": mon["min_eig"]})
    if bc == REFLECTING:
        rep.check("mass_conservation", mass, tol["mass"], mass <= tol["mass"])
    rep.check("max_principle", max(growth, under), tol["max_principle"],
              max(growth, under) <= tol["max_principle"])
    if bc == REFLECTING and not setup.radial_dim:
        qb = quantitative_bounds_report(snaps, rtol=tol["gradient"])
        rep.metrics.update({"gradient_ratio": qb["max_gradient_ratio"],
                            "smoothing_ratio": qb["max_smoothing_ratio"]})
        rep.check("gradient_bound", qb["max_gradient_ratio"], 1 + tol["gradient"], qb["gradient_bound_passed"])
        rep.check("smoothing_bound", qb["max_smoothing_ratio"], 1 + tol["smoothing"],
                  qb["max_smoothing_ratio"] <= 1 + tol["smoothing"])
    if bc == DIRICHLET:
        rep.check("log_concavity", mon["min_eig"], -mon["tol_grid"], mon["passed"])
    centred = U.quad is None or not np.any(U.quad.b)
    if centred and not setup.radial_dim:
        # x -> -x maps the grid to itself and leaves U and V unchanged
        flip = tuple(range(grid.d))
        sym = max(float(np.max(np.abs(s.values - np.flip(s.values, flip)))) for s in snaps) / sup0
        rep.check("reflection_symmetry", sym, tol["symmetry"], sym <= tol["symmetry"])
    # decay against the qualitative gap scale (int |x| dmu)^-2; no verdict
    late = [s for s in snaps if s.t >= horizon / 2]
    r = np.linalg.norm(grid.points(), axis=-1)
    moment = float(np.sum(solver.mass * r) / np.sum(solver.mass))
    rep.metrics.update({"decay_rate": fit_decay_rate([s.t for s in late], [s.diagnostics["L2_mu"] for s in late]),
                        "gap_scale": moment**-2})

    def diagnostics(path):
        rows = []
        for s, m in zip(snaps, mon["series"]):
            rows.append({"t": s.t, **{k: s.diagnostics[k] for k in ("L1_mu", "L2_mu", "sup_core", "mass_rel_change")},
                         "min_hessian_eig": m["min_eig"]})
        write_rows(path, rows)

    return {"snapshots.csv": lambda p: write_snapshots_csv(p, snaps), "diagnostics.csv": diagnostics}


def _seed_points(spec: dict, d: int, radial: bool):
    lo, hi, count = spec["lo"], spec["hi"], spec["count"]
    if radial:
        lo = max(lo, 0.0)
    ax = np.linspace(lo, hi, count)
    if d == 1:
        return ax[:, None]
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def run_flow(cfg: ExperimentConfig, rep: RunReport, tol: Tol) -> dict:
    U = build_potential(cfg.raw["potential"])
    V = build_V(cfg.raw["V"], U.decomposition)
    setup = build_grid(cfg.raw["grid"], U, V)
    grid = setup.grid
    dt = float(cfg.raw["dt"])
    R = float(np.max(np.abs(grid.bounds)))
    sim = simulate_advection(setup.U, setup.V_grid, grid, dt, float(cfg.get("horizon", 400.0)),
                             bc=setup.bc, cutoff_R=R if setup.bc == DIRICHLET else None,
                             l2_tol=1e-8)
    seeds = _seed_points(cfg.get("seeds", {"lo": -3.0, "hi": 3.0, "count": 601}), grid.d, grid.radial)
    fdt = float(cfg.get("flow_dt", dt))
    lm = limit_map(sim.field, seeds, l2_tol=1e-8, dt=fdt)
    ok = lm.valid()
    rng = np.random.default_rng(cfg.seed)
    sub = seeds[rng.choice(len(seeds), size=min(200, len(seeds)), replace=False)]
    rt = round_trip_error(sim.field, sub, lm.t_star, fdt)
    lip = empirical_lipschitz(seeds[ok], lm.values[ok], pairs=200, seed=cfg.seed) if ok.sum() > 1 else 0.0
    disp = float(np.max(np.linalg.norm(lm.values[ok] - seeds[ok], axis=-1))) if ok.any() else 0.0
    rep.metrics.update({"t_star": lm.t_star, "stop_criterion": lm.criterion, "escaped": int((~ok).sum()),
                        "max_displacement": disp, "lipschitz": lip, "round_trip": rt["max_error"],
                        "sup_W_final": float(sim.field.sup_W[-1])})
    rep.check("lipschitz", lip, 1 + tol["lipschitz"], lip <= 1 + tol["lipschitz"])
    rep.check("round_trip", rt["max_error"], tol["round_trip"], rt["max_error"] <= tol["round_trip"])
    rows = [{"x": s[0], **({"y": s[1]} if grid.d == 2 else {}), "T_x": v[0],
             **({"T_y": v[1]} if grid.d == 2 else {}), "valid": bool(k)}
            for s, v, k in zip(seeds, lm.values, ok)]
    if grid.d == 1 and not grid.radial and U.decomposition.k == 1:
        rho = U.profiles[0]
        vfun = lambda x: V.value(np.asarray(x, dtype=float)[..., None])  # noqa: E731
        src, tgt = potential_density(rho), potential_density(rho, vfun)
        xs = seeds[ok, 0]
        pr = pushforward_residual(xs, lm.values[ok, 0], src, tgt)
        ref = quantile_map(src, tgt, xs)
        gap = float(np.max(np.abs(ref.ys - lm.values[ok, 0])))
        rep.metrics.update({"pushforward_residual": pr, "quantile_map_gap": gap})
        rep.check("pushforward", pr, tol["pushforward"], pr <= tol["pushforward"])
        rep.check("quantile_map", gap, tol["quantile_map"], gap <= tol["quantile_map"])
        it = iter(ref.ys)
        for r in rows:
            if r["valid"]:
                r["quantile_map"] = next(it)
    return {"limit_map.csv": lambda p: write_rows(p, rows)}


V_RADIAL: dict[str, Callable] = {
    "r": lambda r: r,
    "r2": lambda r: r**2 / 2,
    "zero": lambda r: np.zeros_like(np.asarray(r, dtype=float)),
    "logcosh": lambda r: np.log(np.cosh(r)),
}


def run_brenier1d(cfg: ExperimentConfig, rep: RunReport, tol: Tol) -> dict:
    rho = build_profile(cfg.raw["profile"])
    v = V_RADIAL[cfg.raw["v"]]
    n = int(cfg.raw["dimension"])
    try:
        T = radial_brenier(rho, v, n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = verify_logderiv_identity(T, radial_log_density(rho, n), v, exclude_origin=True)
    lip = lipschitz_estimate(T)
    rep.metrics.update({"n": n, "lipschitz": lip, "max_T_minus_x": T.info["max_T_minus_x"],
                        "logderiv_residual": res["max_residual"],
                        "pushforward_residual": T.info["pushforward_residual"]})
    rep.check("lipschitz", lip, 1 + tol["lipschitz"], lip <= 1 + tol["lipschitz"])
    rep.check("contraction_to_origin", T.info["max_T_minus_x"], tol["contraction"],
              T.info["max_T_minus_x"] <= tol["contraction"])
    rep.check("logderiv_identity", res["max_residual"], tol["logderiv"], res["max_residual"] <= tol["logderiv"])
    rep.check("pushforward_exactness", T.info["pushforward_residual"], tol["pushforward"],
              T.info["pushforward_residual"] <= tol["pushforward"])
    return {"map.csv": T.to_csv}


def run_correlation(cfg: ExperimentConfig, rep: RunReport, tol: Tol) -> dict:
    U = build_potential(cfg.raw["potential"])
    dec = U.decomposition
    A = build_set(cfg.raw["sets"]["A"], dec)
    B = build_set(cfg.raw["sets"]["B"], dec)
    sampler = app.ProductSampler(U, seed=cfg.seed)
    N = int(cfg.get("N", 1_000_000))
    probe = sampler.sample(min(N, 100_000), stream=1000)
    audit = sampler.ks_audit(probe)
    sa, sb = app.check_set(A, probe[:20000], cfg.seed), app.check_set(B, probe[:20000], cfg.seed)
    res = app.estimate_correlation(A, B, sampler, N, z=tol["z"])
    rep.metrics.update({"N": res.N, "mu_A": res.mu_A, "mu_B": res.mu_B, "mu_AB": res.mu_AB,
                        "gap": res.gap, "stderr": res.stderr, "degenerate": res.degenerate,
                        "reruns": res.reruns, "ks": audit["statistics"], "ks_bound": audit["bound"]})
    rep.check("sampler_ks", max(audit["statistics"].values()), audit["bound"], audit["passed"])
    rep.check("set_A_structure", {k: v for k, v in sa.items() if k != "passed"}, 0, sa["passed"])
    rep.check("set_B_structure", {k: v for k, v in sb.items() if k != "passed"}, 0, sb["passed"])
    rep.check("correlation_gap", res.gap / res.stderr if res.stderr else 0.0, -tol["z"], res.passed)
    row = res.as_row(cfg.id) | {"degenerate": res.degenerate}
    return {"correlation.csv": lambda p: write_rows(p, [row])}


def run_acceptance_suite(cfg: ExperimentConfig, rep: RunReport, scale: float,
                         parallel: int = 1) -> dict:
    results = acceptance.run_all(cfg.get("criteria"), scale, cfg.tolerances, cfg.seed, parallel)
    return acceptance_outputs(results, rep)


def acceptance_outputs(results, rep: RunReport) -> dict:
    for r in results:
        rep.check(f"criterion_{r.number}", r.metrics, r.runtime_limit, r.passed)
    rep.metrics["summary"] = acceptance.summary_table(results)
    rep.metrics["runtimes"] = {r.number: r.runtime for r in results}
    files = {"acceptance.csv": lambda p: write_rows(p, [
        {"criterion": r.number, "title": r.title, "passed": r.passed,
         **{f"metric:{k}": v for k, v in r.metrics.items()},
         "failed_checks": [k for k, v in r.checks.items() if not v]} for r in results])}
    for r in results:
        if r.rows:
            files[f"criterion_{r.number:02d}.csv"] = (lambda rows: lambda p: write_rows(p, rows))(r.rows)
    return files


RUNNERS = {"gaussian": run_gaussian, "semigroup": run_semigroup, "flow": run_flow,
           "brenier1d": run_brenier1d, "correlation": run_correlation}


def execute(cfg: ExperimentConfig, out_root: Path, scale: float = 1.0, parallel: int = 1) -> RunReport:
    """Run one config and write ``report.json`` plus CSVs under ``out_root/<id>``.

    Files are written to a staging directory and moved into place at the end,
    so a run that fails before producing results leaves no partial output.
    Numerical failures still write a report with ``status = "aborted"``.
    """
    rep = RunReport(cfg.id, cfg.scenario, cfg.seed)
    t0 = time.perf_counter()
    files: dict = {}
    try:
        with np.errstate(over="raise", invalid="ignore", divide="ignore"):
            if cfg.scenario == "acceptance-suite":
                files = run_acceptance_suite(cfg, rep, scale, parallel)
            else:
                files = RUNNERS[cfg.scenario](cfg, rep, Tol(cfg.scenario, cfg.tolerances, scale))
        rep.status = "passed" if rep.passed else "failed"
    except NUMERICAL_ERRORS as exc:
        rep.status = "aborted"
        rep.error = f"{type(exc).__name__}: {exc}"
        files = {}
    rep.wall_time = time.perf_counter() - t0
    _publish(out_root / cfg.id, rep, files)
    if rep.status == "aborted":
        raise NumericalAbort(rep.error)
    return rep


def _publish(target: Path, rep: RunReport, files: dict) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
    try:
        for name, writer in files.items():
            writer(stage / name)
            rep.artifacts.append(str(target / name))
        (stage / "report.json").write_text(json.dumps(rep.to_json(), indent=2, sort_keys=True) + "\n")
        rep.artifacts.append(str(target / "report.json"))
        if target.exists():
            shutil.rmtree(target)
        os.replace(stage, target)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
