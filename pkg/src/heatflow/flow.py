"""Advection field ``W_t = -grad log P_t^U(e^{-V})`` and its flow maps.

The forward flow ``dS/dt = W_t(S)`` carries ``nu`` to ``nu_t``; running it
backwards gives ``T_t``, which pushes ``nu_t`` back onto ``nu``. Jacobians
follow the variational equation ``dJ/dt = B_t J`` with ``B_t`` the
(symmetrized) discrete Hessian of ``Z_t = -log f_t``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .semigroup import (CORE_THRESHOLD, EPS_FLOOR, REFLECTING, Grid, GridField, HeatSemigroup,
                        discrete_hessian, initial_field, stencil_core)

log = logging.getLogger(__name__)


class EmptyCoreError(RuntimeError):
    """No grid node satisfies the core threshold."""


# ---------------------------------------------------------------------------
# field construction


@njit(cache=True)
def _cr_weights(s, w):
    """Catmull--Rom (C^1 cubic) weights at offsets -1..2."""
    s2 = s * s
    s3 = s2 * s
    w[0] = 0.5 * (-s3 + 2 * s2 - s)
    w[1] = 0.5 * (3 * s3 - 5 * s2 + 2)
    w[2] = 0.5 * (-3 * s3 + 4 * s2 + s)
    w[3] = 0.5 * (s3 - s2)


@njit(cache=True)
def _interp_1d(F0, F1, c0, c1, theta, x0, h, X):
    P = X.shape[0]
    N, C = F0.shape
    out = np.zeros((P, C))
    ok = np.ones(P, dtype=np.bool_)
    w = np.empty(4)
    for p in range(P):
        u = (X[p, 0] - x0[0]) / h[0]
        i = int(np.floor(u))
        if i < 1 or i > N - 3:
            ok[p] = False
            continue
        _cr_weights(u - i, w)
        for a in range(4):
            j = i - 1 + a
            if not (c0[j] and c1[j]):
                ok[p] = False
            for c in range(C):
                out[p, c] += w[a] * ((1.0 - theta) * F0[j, c] + theta * F1[j, c])
    return out, ok


@njit(cache=True)
def _interp_2d(F0, F1, c0, c1, theta, x0, h, X):
    P = X.shape[0]
    N0, N1, C = F0.shape
    out = np.zeros((P, C))
    ok = np.ones(P, dtype=np.bool_)
    wx = np.empty(4)
    wy = np.empty(4)
    for p in range(P):
        u = (X[p, 0] - x0[0]) / h[0]
        v = (X[p, 1] - x0[1]) / h[1]
        i = int(np.floor(u))
        j = int(np.floor(v))
        if i < 1 or i > N0 - 3 or j < 1 or j > N1 - 3:
            ok[p] = False
            continue
        _cr_weights(u - i, wx)
        _cr_weights(v - j, wy)
        for a in range(4):
            for b in range(4):
                ia = i - 1 + a
                jb = j - 1 + b
                if not (c0[ia, jb] and c1[ia, jb]):
                    ok[p] = False
                wab = wx[a] * wy[b]
                for c in range(C):
                    out[p, c] += wab * ((1.0 - theta) * F0[ia, jb, c] + theta * F1[ia, jb, c])
    return out, ok


@dataclass
class AdvectionField:
    """Snapshots of ``W`` and ``B = D^2 Z`` on a uniform window.

    Space: Catmull--Rom cubic (1D) or bicubic (2D); time: linear. A query is
    valid only if every stencil node lies in the core at both bracketing
    snapshots. ``sup_W`` and ``l2_dist`` hold full-grid diagnostics per
    snapshot for the stopping rule.
    """

    times: np.ndarray
    axes: tuple
    W: np.ndarray
    B: np.ndarray
    core: np.ndarray
    sup_W: np.ndarray
    l2_dist: np.ndarray
    radial: bool = False
    continuity: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def h(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    def _time_bracket(self, t):
        m = len(self.times)
        if m == 1:
            return 0, 0.0
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, m - 2))
        span = self.times[k + 1] - self.times[k]
        theta = float(np.clip((t - self.times[k]) / span, 0.0, 1.0))
        return k, theta

    @property
    def packed(self) -> np.ndarray:
        """``W`` and flattened ``B`` in one channel axis, for a single gather."""
        if "packed" not in self._cache:
            m = len(self.times)
            shape = self.W.shape[1:-1]
            self._cache["packed"] = np.ascontiguousarray(np.concatenate(
                [self.W.reshape(m, *shape, self.d), self.B.reshape(m, *shape, self.d ** 2)],
                axis=-1))
            self._cache["core"] = np.ascontiguousarray(self.core)
        return self._cache["packed"]

    def sample(self, t: float, X):
        """``(W, B, valid)`` at time ``t`` for points ``X`` of shape ``(P, d)``."""
        X = np.ascontiguousarray(np.asarray(X, dtype=float).reshape(-1, self.d))
        d = self.d
        F = self.packed
        core = self._cache["core"]
        k, theta = self._time_bracket(t)
        k1 = min(k + 1, len(self.times) - 1)
        x0 = np.array([a[0] for a in self.axes])
        h = self.h
        kern = _interp_1d if d == 1 else _interp_2d
        v, ok = kern(F[k], F[k1], core[k], core[k1], theta, x0, h, X)
        return v[:, :d], v[:, d:].reshape(-1, d, d), ok

    def stop_time(self, stop_tol: float = 1e-4, l2_tol: float = 1e-6):
        """First stored time meeting ``sup|W| < stop_tol`` or ``L2 < l2_tol``."""
        hit_w = np.flatnonzero(self.sup_W < stop_tol)
        hit_l = np.flatnonzero(self.l2_dist < l2_tol)
        cands = [(int(h[0]), name) for h, name in ((hit_w, "sup_W"), (hit_l, "L2")) if h.size]
        if not cands:
            return float(self.times[-1]), None
        i, name = min(cands)
        return float(self.times[i]), name


class AdvectionBuilder:
    """Accumulates advection snapshots while the semigroup marches.

    ``window`` is the half-width of the stored region (per axis; default the
    whole grid) and ``stride`` the spatial subsampling of stored nodes.
    ``log_weight`` is ``-U`` at the grid nodes (including the radial shell
    factor), used only for the continuity-equation residual.
    """

    def __init__(self, grid: Grid, window=None, stride: int = 1,
                 core_threshold: float = CORE_THRESHOLD, log_weight=None,
                 continuity_every: int = 1):
        self.grid = grid
        self.stride = int(stride)
        self.core_threshold = core_threshold
        self.log_weight = log_weight
        self.continuity_every = continuity_every
        if grid.radial and self.stride % 2 == 0:
            raise ValueError("radial windows need an odd stride")
        self._sel = self._select(window)
        self.times, self.W, self.B, self.core = [], [], [], []
        self.sup_W, self.l2 = [], []
        self.continuity = []
        self._prev = None

    def _select(self, window):
        sels = []
        for k, a in enumerate(self.grid.axes):
            if self.grid.radial:
                start = (self.stride - 1) // 2
                idx = np.arange(start, a.size, self.stride)
                if window is not None:
                    idx = idx[a[idx] <= window]
            else:
                half = np.inf if window is None else np.broadcast_to(window, (self.grid.d,))[k]
                centre = int(np.argmin(np.abs(a)))
                idx = np.arange(centre % self.stride, a.size, self.stride)
                idx = idx[np.abs(a[idx]) <= half + 1e-12]
            sels.append(idx)
        return sels

    def axes(self):
        out = []
        for k, a in enumerate(self.grid.axes):
            x = a[self._sel[k]]
            if self.grid.radial:
                x = np.concatenate([-x[::-1], x])
            out.append(x)
        return tuple(out)

    def _restrict(self, arr, odd: bool = False):
        sub = arr[np.ix_(*self._sel)] if self.grid.d == 2 else arr[self._sel[0]]
        if self.grid.radial:
            mirrored = -sub[::-1] if odd else sub[::-1]
            sub = np.concatenate([mirrored, sub])
        return sub

    def add(self, t: float, values, l2_dist: float = np.nan) -> None:
        f = np.asarray(values, dtype=float)
        grid = self.grid
        fmax = float(f.max())
        core = (f >= self.core_threshold * fmax) & (f > EPS_FLOOR)
        if not core.any():
            raise EmptyCoreError(f"empty core at t={t}")
        Z = -np.log(np.maximum(f, EPS_FLOOR))
        if grid.radial:
            # even extension across r = 0 for the stencils
            Zx = np.concatenate([Z[:1], Z, Z[-1:]])
            cx = np.concatenate([core[:1], core, [False]])
            h = grid.h[0]
            W = (Zx[2:] - Zx[:-2]) / (2 * h)
            B = (Zx[2:] - 2 * Zx[1:-1] + Zx[:-2]) / h**2
            good = core & cx[2:] & cx[:-2]
            Wv = W[..., None]
            Bv = B[..., None, None]
        else:
            H, inner = discrete_hessian(grid, Z)
            good = stencil_core(core, grid.d)
            comps = []
            for k in range(grid.d):
                g = np.zeros(grid.shape)
                c = [slice(1, -1) if j == k else slice(None) for j in range(grid.d)]
                p = [slice(2, None) if j == k else slice(None) for j in range(grid.d)]
                m = [slice(None, -2) if j == k else slice(None) for j in range(grid.d)]
                g[tuple(c)] = (Z[tuple(p)] - Z[tuple(m)]) / (2 * grid.h[k])
                comps.append(g)
            Wv = np.stack(comps, axis=-1)
            Bv = H[..., None, None] if grid.d == 1 else H
        sup_w = float(np.max(np.linalg.norm(Wv[good], axis=-1))) if good.any() else 0.0
        if self._prev is not None and self.log_weight is not None \
                and len(self.times) % self.continuity_every == 0:
            self.continuity.append(self._continuity(self._prev, (t, f), good))
        self._prev = (t, f.copy())
        self.times.append(float(t))
        self.W.append(self._restrict(Wv, odd=True))
        self.B.append(self._restrict(Bv))
        self.core.append(self._restrict(good))
        self.sup_W.append(sup_w)
        self.l2.append(float(l2_dist))

    def _continuity(self, prev, cur, good):
        """``max |d_t f - e^{U} div(e^{-U} f grad log f)|`` over the core interior."""
        (t0, f0), (t1, f1) = prev, cur
        dt = t1 - t0
        fm = 0.5 * (f0 + f1)
        Z = np.log(np.maximum(fm, EPS_FLOOR))
        wgt = np.exp(self.log_weight - np.max(self.log_weight))
        div = np.zeros_like(fm)
        for k in range(self.grid.d):
            q = wgt * fm * np.gradient(Z, self.grid.h[k], axis=k)
            div += np.gradient(q, self.grid.h[k], axis=k)
        with np.errstate(divide="ignore", invalid="ignore"):
            Lf = div / wgt
        resid = (f1 - f0) / dt - Lf
        mask = stencil_core(good, self.grid.d)
        if self.grid.d == 1:
            mask[:2] = mask[-2:] = False
        else:
            mask[:2, :] = mask[-2:, :] = mask[:, :2] = mask[:, -2:] = False
        return {"t": float(t1), "dt": float(dt),
                "residual": float(np.max(np.abs(resid[mask]))) if mask.any() else 0.0}

    def build(self) -> AdvectionField:
        if len(self.times) < 1:
            raise ValueError("no snapshots added")
        return AdvectionField(
            times=np.array(self.times), axes=self.axes(), W=np.array(self.W),
            B=np.array(self.B), core=np.array(self.core), sup_W=np.array(self.sup_W),
            l2_dist=np.array(self.l2), radial=self.grid.radial, continuity=list(self.continuity),
        )


def build_advection(snapshots: list[GridField], window=None, stride: int = 1,
                    log_weight=None) -> AdvectionField:
    """Advection field from stored snapshots (at least two time points)."""
    if len(snapshots) < 2:
        raise ValueError("at least two snapshots are required")
    b = AdvectionBuilder(snapshots[0].grid, window, stride, log_weight=log_weight)
    for s in snapshots:
        b.add(s.t, s.values, s.diagnostics.get("L2_mu", np.nan))
    return b.build()


@dataclass
class Simulation:
    """Output of :func:`simulate_advection`."""

    field: AdvectionField
    snapshots: list
    solver: HeatSemigroup
    t_star: float
    criterion: str | None
    info: dict


def simulate_advection(U, V: Callable, grid: Grid, dt: float, horizon: float,
                       bc: str = REFLECTING, window=None, stride: int = 1,
                       time_stride: int = 1, stop_tol: float = 1e-4, l2_tol: float = 1e-6,
                       stop_early: bool = True, snapshot_times=(), cutoff_R=None,
                       continuity_every: int = 1) -> Simulation:
    """March ``f_t = P_t^U e^{-V}`` and stream advection snapshots.

    Snapshots for the field are taken every ``time_stride`` steps; full
    :class:`GridField` copies are kept only at ``snapshot_times``. With
    ``stop_early`` the march ends at the first stored time meeting the
    stopping rule.
    """
    solver = HeatSemigroup(U, grid, bc)
    f0 = initial_field(grid, V, bc, cutoff_R)
    mean0 = solver.integral(f0.values)
    logw = -(solver.gen.potential_nodes)
    if grid.radial:
        n = U.n
        logw = logw + (n - 1) * np.log(grid.axes[0])
    builder = AdvectionBuilder(grid, window, stride, log_weight=logw,
                               continuity_every=continuity_every)
    keep = {int(round(t / dt)) for t in snapshot_times}
    snaps = []
    t_star, crit = None, None
    for s, (t, vals) in enumerate(solver.march(f0, horizon, dt)):
        if s in keep:
            g = GridField(grid, vals.copy(), t, bc)
            g.diagnostics.update(solver.distances(g, mean0, mean0))
            snaps.append(g)
        if s % time_stride:
            continue
        l2 = float(np.sqrt(np.sum(solver.mass * (vals - mean0) ** 2)))
        builder.add(t, vals, l2)
        if t_star is None and (builder.sup_W[-1] < stop_tol or l2 < l2_tol):
            t_star = t
            crit = "sup_W" if builder.sup_W[-1] < stop_tol else "L2"
            if stop_early:
                break
    fld = builder.build()
    info = {"mass_rel_change": abs(solver.integral(vals) - mean0) / mean0 if mean0 else 0.0,
            "stopped": t_star is not None}
    if t_star is None:
        t_star = float(fld.times[-1])
        log.warning("horizon %.3g reached before the stopping rule", horizon)
    fld.info.update(info, t_star=t_star, criterion=crit)
    return Simulation(fld, snaps, solver, float(t_star), crit, info)


# ---------------------------------------------------------------------------
# flows


@dataclass
class FlowEnsemble:
    """Trajectories and Jacobians of a seed ensemble."""

    seeds: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    jacobians: np.ndarray
    escaped: np.ndarray
    direction: str
    asymmetry: np.ndarray = None

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def final_jacobian(self) -> np.ndarray:
        return self.jacobians[-1]

    @property
    def n_escaped(self) -> int:
        return int(np.count_nonzero(self.escaped))

    def _gram_eigs(self):
        J = self.final_jacobian[~self.escaped]
        if J.size == 0:
            return np.zeros((0, self.seeds.shape[1]))
        G = np.swapaxes(J, -1, -2) @ J - np.eye(J.shape[-1])
        return np.linalg.eigvalsh(G)

    def expansion_certificate(self, tol: float = 1e-6) -> dict:
        """min eig(J^T J - I) >= -tol (forward flow)."""
        e = self._gram_eigs()
        v = float(e.min()) if e.size else 0.0
        return {"min_eig": v, "passed": v >= -tol, "escaped": self.n_escaped}

    def contraction_certificate(self, tol: float = 1e-6) -> dict:
        """max eig(J^T J - I) <= tol (backward flow)."""
        e = self._gram_eigs()
        v = float(e.max()) if e.size else 0.0
        return {"max_eig": v, "passed": v <= tol, "escaped": self.n_escaped}

    def to_csv(self, path) -> None:
        d = self.seeds.shape[1]
        head = ["seed", "t"] + [f"x{i}" for i in range(d)] + \
               [f"J{i}{j}" for i in range(d) for j in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for k, t in enumerate(self.times):
                for s in range(self.seeds.shape[0]):
                    w.writerow([s, f"{t:.10g}"] + [f"{v:.17g}" for v in self.positions[k, s]]
                               + [f"{v:.17g}" for v in self.jacobians[k, s].ravel()])


def _integrate(field: AdvectionField, seeds, t0: float, t1: float, dt: float,
               backward: bool, record_every: int) -> FlowEnsemble:
    X = np.array(seeds, dtype=float).reshape(len(seeds), -1)
    if X.shape[1] != field.d:
        raise ValueError("seed dimension does not match the field")
    P, d = X.shape
    J = np.broadcast_to(np.eye(d), (P, d, d)).copy()
    span = t1 - t0
    nsteps = int(round(span / dt)) if span > 0 else 0
    if nsteps and abs(nsteps * dt - span) > 1e-9 * max(1.0, span):
        dt = span / nsteps
    sign = -1.0 if backward else 1.0
    clock = (lambda tau: t1 - tau) if backward else (lambda tau: t0 + tau)
    _, _, ok0 = field.sample(clock(0.0), X)
    escaped = ~ok0
    times, pos, jac, asym = [0.0], [X.copy()], [J.copy()], [0.0]
    for s in range(nsteps):
        tau = s * dt
        live = ~escaped
        if not live.any():
            break
        x, j = X[live], J[live]
        w1, b1, o1 = field.sample(clock(tau), x)
        x2, j2 = x + 0.5 * dt * sign * w1, j + 0.5 * dt * sign * (b1 @ j)
        w2, b2, o2 = field.sample(clock(tau + 0.5 * dt), x2)
        x3, j3 = x + 0.5 * dt * sign * w2, j + 0.5 * dt * sign * (b2 @ j2)
        w3, b3, o3 = field.sample(clock(tau + 0.5 * dt), x3)
        x4, j4 = x + dt * sign * w3, j + dt * sign * (b3 @ j3)
        w4, b4, o4 = field.sample(clock(tau + dt), x4)
        ok = o1 & o2 & o3 & o4
        xn = x + (dt / 6.0) * sign * (w1 + 2 * w2 + 2 * w3 + w4)
        jn = j + (dt / 6.0) * sign * (b1 @ j + 2 * (b2 @ j2) + 2 * (b3 @ j3) + b4 @ j4)
        idx = np.flatnonzero(live)
        X[idx[ok]] = xn[ok]
        J[idx[ok]] = jn[ok]
        escaped[idx[~ok]] = True
        if (s + 1) % record_every == 0 or s + 1 == nsteps:
            times.append((s + 1) * dt)
            pos.append(X.copy())
            jac.append(J.copy())
            asym.append(float(np.max(np.linalg.norm(J - np.swapaxes(J, -1, -2), axis=(-2, -1)))))
    if escaped.any():
        log.info("%d of %d seeds left the core", int(escaped.sum()), P)
    tt = np.array(times)
    tt = t1 - tt if backward else t0 + tt
    return FlowEnsemble(np.array(seeds, dtype=float).reshape(P, d), tt, np.array(pos),
                        np.array(jac), escaped, "backward" if backward else "forward",
                        np.array(asym))


def integrate_forward(field: AdvectionField, seeds, t_end: float, dt: float = 1e-3,
                      record_every: int = 100) -> FlowEnsemble:
    """RK4 for ``dS/dt = W_t(S)`` and ``dJ/dt = B_t J`` on ``[0, t_end]``."""
    return _integrate(field, seeds, 0.0, t_end, dt, False, record_every)


def integrate_backward(field: AdvectionField, seeds, t: float, dt: float = 1e-3,
                       record_every: int = 100) -> FlowEnsemble:
    """``T_t``: solve ``dY/dtau = -W_{t - tau}(Y)`` for ``tau`` in ``[0, t]``."""
    return _integrate(field, seeds, 0.0, t, dt, True, record_every)


@dataclass
class LimitMap:
    seeds: np.ndarray
    values: np.ndarray
    t_star: float
    criterion: str | None
    residual_sup_W: float
    partial: bool
    ensemble: FlowEnsemble

    def valid(self) -> np.ndarray:
        return ~self.ensemble.escaped


def limit_map(field: AdvectionField, seeds, stop_tol: float = 1e-4, l2_tol: float = 1e-6,
              dt: float = 1e-3) -> LimitMap:
    """``T = T_{t*}`` at the first stored time meeting the stopping rule."""
    t_star, crit = field.stop_time(stop_tol, l2_tol)
    i = int(np.argmin(np.abs(field.times - t_star)))
    ens = integrate_backward(field, seeds, t_star, dt)
    if crit is None:
        log.warning("stopping rule not met; limit map is partial")
    return LimitMap(ens.seeds, ens.final, t_star, crit, float(field.sup_W[i]), crit is None, ens)


# ---------------------------------------------------------------------------
# certificates


def pushforward_residual(xs, Tx, source, target) -> float:
    """``sup |F_target(T x) - F_source(x)|`` (1D; densities normalized on construction)."""
    xs = np.asarray(xs, dtype=float).ravel()
    Tx = np.asarray(Tx, dtype=float).ravel()
    return float(np.max(np.abs(target.cdf(Tx) - source.cdf(xs))))


def energy_distance(X, Y, max_points: int = 2000, seed: int = 0) -> float:
    """Multivariate energy distance ``2E|X-Y| - E|X-X'| - E|Y-Y'|`` on subsamples."""
    from scipy.spatial.distance import cdist

    rng = np.random.default_rng(seed)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if len(X) > max_points:
        X = X[rng.choice(len(X), max_points, replace=False)]
    if len(Y) > max_points:
        Y = Y[rng.choice(len(Y), max_points, replace=False)]
    return float(2 * cdist(X, Y).mean() - cdist(X, X).mean() - cdist(Y, Y).mean())


def pushforward_statistic(pushed, target_samples, n_proj: int = 32, seed: int = 0) -> dict:
    """Sliced KS statistic over random directions plus the energy distance."""
    from scipy.stats import ks_2samp

    rng = np.random.default_rng(seed)
    pushed = np.asarray(pushed, dtype=float)
    target_samples = np.asarray(target_samples, dtype=float)
    d = pushed.shape[1]
    dirs = rng.normal(size=(n_proj, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ks = max(ks_2samp(pushed @ u, target_samples @ u).statistic for u in dirs)
    return {"ks_max": float(ks), "energy": energy_distance(pushed, target_samples, seed=seed)}


def empirical_lipschitz(seeds, values, pairs: int = 200, seed: int = 0,
                        min_separation: float = 0.0) -> float:
    """Largest ``|T x - T y| / |x - y|`` over random seed pairs."""
    rng = np.random.default_rng(seed)
    X = np.asarray(seeds, dtype=float).reshape(len(seeds), -1)
    Y = np.asarray(values, dtype=float).reshape(len(values), -1)
    ratios = []
    while len(ratios) < pairs:
        i, j = rng.integers(0, len(X), size=2)
        dx = np.linalg.norm(X[i] - X[j])
        if dx <= min_separation or i == j:
            continue
        ratios.append(np.linalg.norm(Y[i] - Y[j]) / dx)
    return float(max(ratios))


def round_trip_error(field: AdvectionField, seeds, t: float, dt: float = 1e-3) -> dict:
    """``max |T_t(S_t(x)) - x|`` over seeds that stay in the core."""
    fwd = integrate_forward(field, seeds, t, dt)
    back = integrate_backward(field, fwd.final, t, dt)
    ok = ~(fwd.escaped | back.escaped)
    err = np.linalg.norm(back.final - fwd.seeds, axis=-1)
    return {"max_error": float(err[ok].max()) if ok.any() else 0.0,
            "escaped": int(np.count_nonzero(~ok)), "forward": fwd, "backward": back}


def logconcavity_monitor(snapshots: list[GridField], tol_grid: float | None = None,
                         core_threshold: float = CORE_THRESHOLD, boundary_margin: float = 0.0,
                         radial_dim: int | None = None) -> dict:
    """Minimum eigenvalue of the discrete Hessian of ``-log f_t`` over the core.

    ``tol_grid`` defaults to ``10 h``. ``boundary_margin`` drops nodes within
    that distance of the outer boundary (reflecting boundaries force a
    flat, hence non-log-concave, boundary layer). Radial grids add the
    angular eigenvalue ``Z'(r)/r``.
    """
    grid = snapshots[0].grid
    h = float(np.max(grid.h))
    tol = 10 * h if tol_grid is None else tol_grid
    series = []
    for snap in snapshots:
        core = snap.core_mask(core_threshold)
        if boundary_margin > 0:
            pts = grid.points()
            for k, (lo, hi) in enumerate(grid.bounds):
                x = pts[..., k]
                near = (x > hi - boundary_margin)
                if not grid.radial:
                    near |= x < lo + boundary_margin
                core &= ~near
        Z = -snap.log_values()
        H, inner = discrete_hessian(grid, Z)
        ok = stencil_core(core, grid.d)
        if grid.radial:
            ok[0] = core[0] and core[1]
            H = H.copy()
            H[0] = (Z[1] - Z[0]) / grid.h[0] ** 2  # even extension across r = 0
        if not ok.any():
            series.append({"t": snap.t, "min_eig": float("nan"), "nodes": 0})
            continue
        if grid.d == 1:
            eig = H[ok]
            if grid.radial and radial_dim and radial_dim > 1:
                r = grid.axes[0]
                Zp = np.gradient(Z, r)
                eig = np.minimum(eig, (Zp / r)[ok])
        else:
            a, b, c = H[..., 0, 0][ok], H[..., 0, 1][ok], H[..., 1, 1][ok]
            eig = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b**2)
        series.append({"t": snap.t, "min_eig": float(eig.min()), "nodes": int(ok.sum())})
    worst = min((s["min_eig"] for s in series if np.isfinite(s["min_eig"])), default=0.0)
    return {"series": series, "tol_grid": tol, "min_eig": worst, "passed": worst >= -tol,
            "boundary_margin": boundary_margin, "margin_applied": bool(boundary_margin > 0)}


def refinement_ratios(errors) -> dict:
    """Successive error ratios ``e_k / e_{k+1}`` for a halving sequence."""
    e = np.asarray(errors, dtype=float)
    ratios = (e[:-1] / e[1:]).tolist() if e.size > 1 else []
    return {"errors": e.tolist(), "ratios": ratios,
            "min_ratio": float(min(ratios)) if ratios else float("nan")}
