"""Finite-volume discretization of the diffusion semigroup ``P_t^U``.

The generator ``L f = Delta f - <grad U, grad f>`` is written in flux form,
``L f = e^U div(e^{-U} grad f)``, on vertex-centred (line, box) or
cell-centred (radial) grids. With reflecting boundaries the discrete operator
``K`` satisfies ``m^T K = 0`` for the node masses ``m_i = vol_i e^{-U_i}``,
which is the discrete form of ``int L f dmu = 0``; ``K`` is self-adjoint in
``l2(m)``. Time stepping is Crank--Nicolson in 1D and Peaceman--Rachford ADI
in 2D, started with two implicit-Euler half steps (Rannacher smoothing).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
from numba import njit

from .potentials import RadialProfile, StructuredPotential

log = logging.getLogger(__name__)

REFLECTING = "reflecting"
DIRICHLET = "dirichlet_cutoff"
BOUNDARY_CONDITIONS = (REFLECTING, DIRICHLET)
EPS_FLOOR = 1e-300
CORE_THRESHOLD = 1e-9


class InstabilityError(RuntimeError):
    """The time stepper broke the maximum principle or positivity."""


class PecletWarning(UserWarning):
    """Cell Peclet number above 1; exponential fitting is switched on."""


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid:
    """Tensor grid with explicit node coordinates per axis.

    ``radial=True`` marks a 1D grid in the radial variable ``r`` on
    ``[0, R]`` with nodes at cell centres ``(i + 1/2) h``.
    """

    axes: tuple
    bounds: tuple
    radial: bool = False

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "bounds", tuple(tuple(map(float, b)) for b in self.bounds))
        if len(axes) not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        for a in axes:
            if a.size < 16:
                raise ValueError("at least 16 nodes per axis are required")
            d = np.diff(a)
            if not np.allclose(d, d[0], rtol=1e-9, atol=0):
                raise ValueError("grid spacing must be uniform")
        if self.radial and len(axes) != 1:
            raise ValueError("radial grids are one-dimensional")

    @classmethod
    def line(cls, R: float, nodes: int) -> "Grid":
        return cls((np.linspace(-R, R, nodes),), ((-R, R),))

    @classmethod
    def line_spacing(cls, R: float, h: float) -> "Grid":
        nodes = int(round(2 * R / h)) + 1
        R = 0.5 * h * (nodes - 1)
        return cls.line(R, nodes)

    @classmethod
    def radial_grid(cls, R: float, nodes: int) -> "Grid":
        h = R / nodes
        return cls((h * (np.arange(nodes) + 0.5),), ((0.0, R),), radial=True)

    @classmethod
    def box(cls, R, nodes) -> "Grid":
        R = np.broadcast_to(np.asarray(R, dtype=float), (2,))
        nodes = np.broadcast_to(np.asarray(nodes), (2,))
        return cls(tuple(np.linspace(-r, r, int(m)) for r, m in zip(R, nodes)),
                   tuple((-r, r) for r in R))

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def h(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``grid.shape + (d,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.points(), axis=-1)

    def axis_volumes(self, k: int) -> np.ndarray:
        a = self.axes[k]
        lo, hi = self.bounds[k]
        faces = np.concatenate([[lo], 0.5 * (a[1:] + a[:-1]), [hi]])
        return np.diff(faces)

    def volumes(self) -> np.ndarray:
        vols = [self.axis_volumes(k) for k in range(self.d)]
        if self.d == 1:
            return vols[0]
        return np.multiply.outer(vols[0], vols[1])

    def boundary_mask(self) -> np.ndarray:
        """Nodes that carry Dirichlet data (outer nodes; radial: the last one)."""
        mask = np.zeros(self.shape, dtype=bool)
        if self.radial:
            mask[-1] = True
            return mask
        if self.d == 1:
            mask[[0, -1]] = True
        else:
            mask[[0, -1], :] = True
            mask[:, [0, -1]] = True
        return mask


# ---------------------------------------------------------------------------
# effective potentials


@dataclass(frozen=True)
class RadialDrift:
    """Radial reduction of ``rho(|x|)`` on ``R^n``: effective potential on ``r``.

    ``value(r) = rho(r) - (n-1) log r`` and ``drift(r) = rho'(r) - (n-1)/r``.
    The ``r^{n-1}`` factor is kept as an exact geometric weight so the
    finite-volume faces see the true shell areas.
    """

    profile: RadialProfile
    n: int

    def smooth_value(self, pts):
        return self.profile(np.abs(np.asarray(pts)[..., 0]))

    def log_geometric(self, pts):
        r = np.abs(np.asarray(pts)[..., 0])
        with np.errstate(divide="ignore"):
            return (self.n - 1) * np.log(r) if self.n > 1 else np.zeros_like(r)

    def value(self, pts):
        return self.smooth_value(pts) - self.log_geometric(pts)

    def drift(self, r):
        r = np.asarray(r, dtype=float)
        return self.profile.derivative(r, 1) - (self.n - 1) / r

    def gradient(self, pts):
        return self.drift(np.asarray(pts)[..., 0])[..., None]


def radial_reduce(profile: RadialProfile, n: int) -> RadialDrift:
    """Effective 1D drift ``r -> rho'(r) - (n-1)/r`` of the radial heat operator."""
    if int(n) != n or n < 1:
        raise ValueError("ambient dimension must be an integer >= 1")
    return RadialDrift(profile, int(n))


@dataclass(frozen=True)
class FunctionPotential:
    """Adapter for a plain callable ``U(points)``; ``points`` has shape (..., d)."""

    fn: Callable
    grad: Callable | None = None

    def value(self, pts):
        return np.asarray(self.fn(np.asarray(pts, dtype=float)), dtype=float)

    def gradient(self, pts):
        return self.grad(pts)


def _smooth_and_geometric(U, pts):
    if isinstance(U, RadialDrift):
        return U.smooth_value(pts), U.log_geometric(pts)
    return np.asarray(U.value(pts), dtype=float), np.zeros(np.shape(pts)[:-1])


# ---------------------------------------------------------------------------
# generator


def _bernoulli(z):
    """``z / (e^z - 1)`` with the removable singularity at 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - 0.5 * z, safe / np.expm1(safe))


@dataclass
class DiscreteGenerator:
    """Flux-form discretization of ``L`` on a grid.

    ``lower[k]``, ``diag[k]``, ``upper[k]`` hold the tridiagonal coefficients
    acting along axis ``k`` (arrays of grid shape; ``lower`` couples node
    ``i`` to ``i-1``). ``mass`` is the discrete invariant measure, normalized
    to sum 1 (reflecting case).
    """

    grid: Grid
    bc: str
    lower: list
    diag: list
    upper: list
    mass: np.ndarray
    potential_nodes: np.ndarray
    peclet_faces: int = 0
    _factors: dict = field(default_factory=dict, repr=False)

    def apply_axis(self, f, k):
        f = np.asarray(f)
        out = self.diag[k] * f
        sl_hi = [slice(None)] * f.ndim
        sl_lo = [slice(None)] * f.ndim
        sl_hi[k], sl_lo[k] = slice(1, None), slice(None, -1)
        sl_hi, sl_lo = tuple(sl_hi), tuple(sl_lo)
        out[sl_lo] += self.upper[k][sl_lo] * f[sl_hi]
        out[sl_hi] += self.lower[k][sl_hi] * f[sl_lo]
        return out

    def apply(self, f):
        """Discrete ``L f`` (rows at Dirichlet nodes are zero)."""
        return sum(self.apply_axis(f, k) for k in range(self.grid.d))

    def apply_adjoint(self, rho):
        """Discrete Fokker--Planck operator on densities w.r.t. counting measure.

        ``K^T rho``; the mass vector is annihilated in the reflecting case.
        """
        rho = np.asarray(rho, dtype=float)
        out = np.zeros_like(rho)
        for k in range(self.grid.d):
            out += self.diag[k] * rho
            sl_hi = [slice(None)] * rho.ndim
            sl_lo = [slice(None)] * rho.ndim
            sl_hi[k], sl_lo[k] = slice(1, None), slice(None, -1)
            sl_hi, sl_lo = tuple(sl_hi), tuple(sl_lo)
            out[sl_hi] += self.upper[k][sl_lo] * rho[sl_lo]
            out[sl_lo] += self.lower[k][sl_hi] * rho[sl_hi]
        return out

    def _factor(self, k, a):
        """Thomas factors of ``I - a K_k`` as one long tridiagonal system."""
        key = (k, float(a))
        if key not in self._factors:
            lo = np.moveaxis(self.lower[k], k, -1)
            dg = np.moveaxis(self.diag[k], k, -1)
            up = np.moveaxis(self.upper[k], k, -1)
            sub = (-a * lo).copy()
            sup = (-a * up).copy()
            # decouple consecutive lines of the flattened system
            sub[..., 0] = 0.0
            sup[..., -1] = 0.0
            self._factors[key] = _thomas_factor(np.ascontiguousarray(sub.ravel()),
                                                np.ascontiguousarray((1.0 - a * dg).ravel()),
                                                np.ascontiguousarray(sup.ravel()))
        return self._factors[key]

    def solve_axis(self, rhs, k, a):
        """Solve ``(I - a K_k) x = rhs`` along axis ``k``."""
        sub, cp, inv = self._factor(k, a)
        moved = np.moveaxis(rhs, k, -1)
        shape = moved.shape
        x = _thomas_solve(sub, cp, inv, np.ascontiguousarray(moved.ravel()))
        return np.moveaxis(x.reshape(shape), -1, k)


@njit(cache=True)
def _thomas_factor(sub, diag, sup):
    n = diag.size
    cp = np.empty(n)
    inv = np.empty(n)
    inv[0] = 1.0 / diag[0]
    cp[0] = sup[0] * inv[0]
    for i in range(1, n):
        den = diag[i] - sub[i] * cp[i - 1]
        if den == 0.0:
            raise ZeroDivisionError("singular tridiagonal system")
        inv[i] = 1.0 / den
        cp[i] = sup[i] * inv[i]
    return sub, cp, inv


@njit(cache=True)
def _thomas_solve(sub, cp, inv, rhs):
    n = rhs.size
    x = np.empty(n)
    x[0] = rhs[0] * inv[0]
    for i in range(1, n):
        x[i] = (rhs[i] - sub[i] * x[i - 1]) * inv[i]
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def build_generator(U, grid: Grid, bc: str = REFLECTING, warn: bool = True) -> DiscreteGenerator:
    """Second-order flux-form discretization of ``Delta - <grad U, grad>``.

    ``U`` is a :class:`StructuredPotential` (dimension matching the grid), a
    :class:`RadialDrift`, or anything with a ``value(points)`` method. Faces
    whose cell Peclet number ``|dU| / 2`` exceeds 1 use Scharfetter--Gummel
    (exponential fitting) weights; a :class:`PecletWarning` is emitted.
    """
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    if isinstance(U, StructuredPotential) and U.n != grid.d:
        raise ValueError("potential dimension does not match the grid")
    if grid.radial and not isinstance(U, RadialDrift):
        raise ValueError("radial grids need a RadialDrift potential")
    pts = grid.points()
    Un, Gn = _smooth_and_geometric(U, pts)
    vol = grid.volumes()
    lowers, diags, uppers = [], [], []
    n_peclet = 0
    for k in range(grid.d):
        a = grid.axes[k]
        h = a[1] - a[0]
        face_axes = list(grid.axes)
        face_axes[k] = 0.5 * (a[1:] + a[:-1])
        fpts = np.stack(np.meshgrid(*face_axes, indexing="ij"), axis=-1)
        Uf, Gf = _smooth_and_geometric(U, fpts)
        lo_sl = [slice(None)] * grid.d
        hi_sl = [slice(None)] * grid.d
        lo_sl[k], hi_sl[k] = slice(None, -1), slice(1, None)
        lo_sl, hi_sl = tuple(lo_sl), tuple(hi_sl)
        Ul, Ur = Un[lo_sl], Un[hi_sl]
        dU = Ur - Ul
        stiff = np.abs(dU) / 2.0 > 1.0
        n_peclet += int(np.count_nonzero(stiff))
        # face coefficient relative to the left node: e^{U_l} * w_face
        mid_left = np.exp(Ul - Uf)
        sg_left = _bernoulli(dU)
        rel_left = np.where(stiff, sg_left, mid_left)
        rel_right = np.where(stiff, _bernoulli(-dU), np.exp(Ur - Uf))
        with np.errstate(divide="ignore", invalid="ignore"):
            geo_left = np.exp(Gf - Gn[lo_sl])
            geo_right = np.exp(Gf - Gn[hi_sl])
        vol_k = vol
        upper = np.zeros(grid.shape)
        lower = np.zeros(grid.shape)
        upper[lo_sl] = rel_left * geo_left / (h * vol_k[lo_sl] / _cross_volume(grid, k)[lo_sl])
        lower[hi_sl] = rel_right * geo_right / (h * vol_k[hi_sl] / _cross_volume(grid, k)[hi_sl])
        diag = -(upper + lower)
        if bc == DIRICHLET:
            bmask = grid.boundary_mask()
            upper[bmask] = lower[bmask] = diag[bmask] = 0.0
        lowers.append(lower)
        diags.append(diag)
        uppers.append(upper)
    if n_peclet and warn:
        warnings.warn(f"{n_peclet} faces with cell Peclet number > 1; "
                      "using exponential-fitting weights", PecletWarning, stacklevel=2)
    logm = np.log(vol) + Gn - (Un - np.min(Un))
    mass = np.exp(logm - np.max(logm))
    mass /= mass.sum()
    return DiscreteGenerator(grid, bc, lowers, diags, uppers, mass, Un, n_peclet)


def _cross_volume(grid: Grid, k: int) -> np.ndarray:
    """Volume of a node's cell in the directions transverse to axis ``k``."""
    if grid.d == 1:
        return np.ones(grid.shape)
    other = grid.axis_volumes(1 - k)
    return np.broadcast_to(other[None, :] if k == 0 else other[:, None], grid.shape)


# ---------------------------------------------------------------------------
# fields and the cutoff


@dataclass(frozen=True)
class GridField:
    """Nonnegative samples of ``f(., t)`` on a grid, with boundary tag."""

    grid: Grid
    values: np.ndarray
    t: float = 0.0
    bc: str = REFLECTING
    eps_floor: float = EPS_FLOOR
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError("values do not match the grid shape")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def core_mask(self, threshold: float = CORE_THRESHOLD) -> np.ndarray:
        vmax = float(self.values.max())
        return (self.values >= threshold * vmax) & (self.values > self.eps_floor)

    def log_values(self) -> np.ndarray:
        return np.log(np.maximum(self.values, self.eps_floor))

    def with_values(self, values, t=None) -> "GridField":
        return replace(self, values=values, t=self.t if t is None else t, diagnostics={})


def chi(s):
    """Cutoff: 1 on [0, 1/2], ``exp(1 - 1/(1 - (2s-1)^2))`` on (1/2, 1), 0 beyond."""
    s = np.asarray(s, dtype=float)
    u = 2.0 * s - 1.0
    inner = np.clip(1.0 - u**2, 1e-300, None)
    with np.errstate(over="ignore"):
        mid = np.exp(1.0 - 1.0 / inner)
    return np.where(s <= 0.5, 1.0, np.where(s < 1.0, mid, 0.0))


@dataclass(frozen=True)
class CutoffProfile:
    """The fixed log-concave cutoff ``chi`` used for the Dirichlet reduction."""

    def __call__(self, s):
        return chi(s)

    def neg_log(self, s):
        s = np.asarray(s, dtype=float)
        u = 2.0 * s - 1.0
        with np.errstate(divide="ignore"):
            return np.where(s <= 0.5, 0.0, np.where(s < 1.0, 1.0 / (1.0 - u**2) - 1.0, np.inf))


def apply_cutoff(f: GridField, R: float) -> GridField:
    """Multiply by ``chi(|x| / R)``."""
    lo = min(min(abs(b[0]), abs(b[1])) if b[0] < 0 else b[1] for b in f.grid.bounds)
    if R <= 0 or R > lo + 1e-12:
        raise ValueError("cutoff radius must lie within the grid bounds")
    return f.with_values(f.values * chi(f.grid.radius() / R))


def field_from_function(grid: Grid, fn: Callable, t: float = 0.0, bc: str = REFLECTING) -> GridField:
    """Sample ``fn(points)`` on the grid (points have shape ``grid.shape + (d,)``)."""
    vals = np.asarray(fn(grid.points()), dtype=float)
    if bc == DIRICHLET:
        vals = np.where(grid.boundary_mask(), 0.0, vals)
    return GridField(grid, vals, t, bc)


def initial_field(grid: Grid, V, bc: str = REFLECTING, cutoff_R: float | None = None) -> GridField:
    """``exp(-V)`` on the grid, normalized to max 1 and optionally cut off."""
    pts = grid.points()
    if grid.radial:
        # radial V is evaluated on (r, 0, ..., 0)
        Vn = np.asarray(V(pts), dtype=float)
    else:
        Vn = np.asarray(V(pts), dtype=float)
    vals = np.exp(-(Vn - Vn.min()))
    f = GridField(grid, vals, 0.0, bc)
    if cutoff_R is not None:
        f = apply_cutoff(f, cutoff_R)
    if bc == DIRICHLET:
        f = f.with_values(np.where(grid.boundary_mask(), 0.0, f.values))
    return f


# ---------------------------------------------------------------------------
# stepping


class HeatSemigroup:
    """Single-owner stepper for ``df/dt = L f`` on a fixed grid."""

    def __init__(self, U, grid: Grid, bc: str = REFLECTING, rannacher: bool = True,
                 warn: bool = True):
        self.gen = build_generator(U, grid, bc, warn=warn)
        self.grid = grid
        self.bc = bc
        self.rannacher = rannacher
        self.stats = {"steps": 0, "max_growth": 0.0, "min_value": np.inf}

    @property
    def mass(self) -> np.ndarray:
        return self.gen.mass

    def integral(self, f) -> float:
        """``int f dmu`` against the discrete normalized invariant measure."""
        return float(np.sum(self.gen.mass * np.asarray(f)))

    def _implicit(self, f, a):
        for k in range(self.grid.d):
            f = self.gen.solve_axis(f, k, a)
        return f

    def _cn(self, f, dt):
        a = 0.5 * dt
        if self.grid.d == 1:
            return self.gen.solve_axis(f + a * self.gen.apply_axis(f, 0), 0, a)
        half = self.gen.solve_axis(f + a * self.gen.apply_axis(f, 1), 0, a)
        return self.gen.solve_axis(half + a * self.gen.apply_axis(half, 0), 1, a)

    def advance(self, values, dt, startup: bool = False):
        """One step of size ``dt``; ``startup`` uses two implicit half steps."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        if startup:
            out = self._implicit(self._implicit(values, 0.5 * dt), 0.5 * dt)
        else:
            out = self._cn(values, dt)
        if self.bc == DIRICHLET:
            out[self.grid.boundary_mask()] = 0.0
        return out

    def step(self, field: GridField, dt: float) -> GridField:
        """Crank--Nicolson (ADI in 2D) update with max-principle checks."""
        vals = self.advance(field.values, dt)
        self._record(field.values, vals)
        return field.with_values(vals, t=field.t + dt)

    def _record(self, old, new):
        _check_step(old, new)
        st = self.stats
        st["steps"] += 1
        st["max_growth"] = max(st["max_growth"], float(np.max(new) - np.max(old)))
        st["min_value"] = min(st["min_value"], float(np.min(new)))

    def march(self, f0: GridField, horizon: float, dt: float, every: int = 1):
        """Yield ``(t, values)`` every ``every`` steps up to ``horizon``.

        The initial state is yielded first. Aborts with
        :class:`InstabilityError` if the maximum grows by more than 1e-8.
        """
        if np.any(f0.values < 0):
            raise ValueError("initial data must be nonnegative")
        nsteps = int(round(horizon / dt))
        if nsteps < 1 or abs(nsteps * dt - horizon) > 1e-9 * max(1.0, horizon):
            raise ValueError("horizon must be a positive multiple of dt")
        vals = f0.values.copy()
        yield f0.t, vals
        for s in range(1, nsteps + 1):
            new = self.advance(vals, dt, startup=(self.rannacher and s == 1))
            self._record(vals, new)
            vals = new
            if s % every == 0 or s == nsteps:
                yield f0.t + s * dt, vals

    def evolve(self, f0: GridField, horizon: float, dt: float,
               snapshot_times: Iterable[float] | None = None) -> list[GridField]:
        """Snapshots of ``P_t f0`` at the requested times (default: 0 and horizon).

        Each snapshot carries convergence diagnostics: ``L1``/``L2`` distances
        in ``L_p(mu)`` and the sup distance on the core to the ``mu``-mean of
        ``f0``, plus the relative mass change and running maximum.
        """
        times = sorted(set([0.0, horizon] if snapshot_times is None else snapshot_times))
        steps = {int(round(t / dt)): t for t in times}
        mean0 = self.integral(f0.values)
        mass_ref = mean0
        out = []
        step_idx = 0
        for t, vals in self.march(f0, horizon, dt):
            if step_idx in steps:
                snap = GridField(self.grid, vals.copy(), t, self.bc)
                snap.diagnostics.update(self.distances(snap, mean0, mass_ref))
                out.append(snap)
            step_idx += 1
        return out

    def distances(self, snap: GridField, mean0: float, mass_ref: float) -> dict:
        dev = snap.values - mean0
        core = snap.core_mask()
        mass_now = self.integral(snap.values)
        return {
            "L1_mu": float(np.sum(self.gen.mass * np.abs(dev))),
            "L2_mu": float(np.sqrt(np.sum(self.gen.mass * dev**2))),
            "sup_core": float(np.max(np.abs(dev[core]))) if core.any() else float("nan"),
            "mass": mass_now,
            "mass_rel_change": abs(mass_now - mass_ref) / abs(mass_ref) if mass_ref else 0.0,
            "max": float(snap.values.max()),
            "min": float(snap.values.min()),
        }


def _check_step(old, new):
    m_old = float(np.max(old))
    m_new = float(np.max(new))
    if m_new > m_old + 1e-8 * max(1.0, m_old):
        raise InstabilityError(f"maximum grew from {m_old:.17g} to {m_new:.17g}")
    if float(np.min(new)) < -1e-12 * max(1.0, m_old):
        raise InstabilityError(f"positivity violated: min {float(np.min(new)):.3e}")


def step(field: GridField, dt: float, U, rannacher: bool = False) -> GridField:
    """Functional single step (builds the generator each call)."""
    solver = HeatSemigroup(U, field.grid, field.bc, rannacher=False)
    return solver.step(field, dt)


def evolve(f0: GridField, horizon: float, dt: float, snapshot_times=None, U=None) -> list[GridField]:
    if U is None:
        raise ValueError("a potential U is required")
    return HeatSemigroup(U, f0.grid, f0.bc).evolve(f0, horizon, dt, snapshot_times)


def positivity_threshold(gen: DiscreteGenerator) -> float:
    """Largest ``dt`` for which the explicit half of Crank--Nicolson is monotone."""
    worst = max(float(np.max(-d)) for d in gen.diag)
    return 2.0 / worst if worst > 0 else np.inf


# ---------------------------------------------------------------------------
# domain truncation


def tail_mass_1d(U, R: float, radial_dim: int | None = None, n_quad: int = 20001) -> float:
    """``mu`` mass outside ``[-R, R]`` (or beyond ``R`` on the ray) by quadrature."""
    from scipy import integrate

    if radial_dim is None:
        fn = lambda x: np.exp(-(U(np.array([[x]]))[0] - U0))  # noqa: E731
        U0 = float(U(np.zeros((1, 1)))[0])
        total = integrate.quad(fn, -np.inf, np.inf, limit=400, epsabs=0, epsrel=1e-13)[0]
        tail = (integrate.quad(fn, R, np.inf, limit=400, epsabs=0, epsrel=1e-10)[0]
                + integrate.quad(fn, -np.inf, -R, limit=400, epsabs=0, epsrel=1e-10)[0])
        return tail / total
    n = radial_dim
    fn = lambda r: r ** (n - 1) * np.exp(-U(r))  # noqa: E731
    total = integrate.quad(fn, 0, np.inf, limit=400, epsabs=0, epsrel=1e-13)[0]
    tail = integrate.quad(fn, R, np.inf, limit=400, epsabs=0, epsrel=1e-10)[0]
    return tail / total


def choose_radius(U, tol: float = 1e-10, radial_dim: int | None = None, start: float = 2.0) -> float:
    """Smallest half-width (on a 0.5 lattice) with tail mass below ``tol``."""
    R = start
    while tail_mass_1d(U, R, radial_dim) >= tol:
        R += 0.5
        if R > 1e3:
            raise ValueError("tail mass does not decay")
    return R


# ---------------------------------------------------------------------------
# diagnostics


def _interior_gradient(grid: Grid, arr):
    """Centred gradient at interior nodes; returns (components, interior mask)."""
    comps = []
    inner = np.ones(grid.shape, dtype=bool)
    for k in range(grid.d):
        h = grid.h[k]
        g = np.zeros(grid.shape)
        sl_c = [slice(None)] * grid.d
        sl_p = [slice(None)] * grid.d
        sl_m = [slice(None)] * grid.d
        sl_c[k], sl_p[k], sl_m[k] = slice(1, -1), slice(2, None), slice(None, -2)
        g[tuple(sl_c)] = (arr[tuple(sl_p)] - arr[tuple(sl_m)]) / (2 * h)
        edge = [slice(None)] * grid.d
        edge[k] = [0, -1]
        inner[tuple(edge)] = False
        comps.append(g)
    return comps, inner


def gradient_norm(grid: Grid, arr) -> tuple[np.ndarray, np.ndarray]:
    comps, inner = _interior_gradient(grid, arr)
    return np.sqrt(sum(c**2 for c in comps)), inner


def quantitative_bounds_report(snapshots: list[GridField], V0_grad_sup: float | None = None,
                               rtol: float = 1e-6, core_threshold: float = CORE_THRESHOLD) -> dict:
    """Check the gradient bound and the smoothing estimate on a run.

    gradient bound:  ``max |grad(-log f_t)|`` over the core versus the same
    quantity at ``t = 0`` (or ``V0_grad_sup`` when given);
    smoothing:       ``|grad f_t|_inf * sqrt(2t) <= |f_0|_inf``.
    """
    f0 = snapshots[0]
    grid = f0.grid
    sup_f0 = float(np.max(f0.values))
    rows = []
    ref = V0_grad_sup
    for snap in snapshots:
        core = snap.core_mask(core_threshold)
        gz, inner = gradient_norm(grid, -snap.log_values())
        # both stencil neighbours must be in the core
        ok = inner & core
        for k in range(grid.d):
            for shift in (1, -1):
                ok &= np.roll(core, shift, axis=k)
        excluded = int(np.count_nonzero(core & inner & ~ok))
        gmax = float(np.max(gz[ok])) if ok.any() else 0.0
        gf, inner_f = gradient_norm(grid, snap.values)
        gfmax = float(np.max(gf[inner_f]))
        rows.append({"t": snap.t, "grad_neglog_sup": gmax, "grad_f_sup": gfmax,
                     "excluded_nodes": excluded})
    if ref is None:
        ref = rows[0]["grad_neglog_sup"]
    grad_ok = all(r["grad_neglog_sup"] <= ref * (1 + rtol) + 1e-300 for r in rows)
    smooth_vals = [r["grad_f_sup"] * np.sqrt(2 * r["t"]) for r in rows if r["t"] > 0]
    smooth_ok = all(v <= sup_f0 * (1 + rtol) for v in smooth_vals)
    return {
        "rows": rows,
        "grad_V0_sup": ref,
        "sup_f0": sup_f0,
        "gradient_bound_passed": bool(grad_ok),
        "max_gradient_ratio": max(r["grad_neglog_sup"] for r in rows) / ref if ref else 0.0,
        "smoothing_bound_passed": bool(smooth_ok),
        "max_smoothing_ratio": max(smooth_vals) / sup_f0 if smooth_vals else 0.0,
        "passed": bool(grad_ok and smooth_ok),
    }


def fit_decay_rate(times, distances, floor: float = 1e-13) -> float:
    """Least-squares slope of ``-log distance`` against time."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    keep = d > floor
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(t[keep], np.log(d[keep]), 1)[0]
    return float(-slope)


def stationarity_check(gen: DiscreteGenerator, dt: float) -> dict:
    """Adjoint (Fokker--Planck) step applied to the invariant density.

    Returns the sup change of ``e^{-U}`` under one implicit adjoint step,
    and the constant ``C`` in ``change <= C h^2``.
    """
    rho = gen.mass.copy()
    change = np.max(np.abs(dt * gen.apply_adjoint(rho))) / np.max(rho)
    h2 = float(np.max(gen.grid.h) ** 2)
    return {"sup_change": float(change), "C": float(change / h2)}


def discrete_hessian(grid: Grid, arr):
    """Centred second differences; returns ``(H, interior mask)``.

    1D: ``H`` has grid shape. 2D: shape ``grid.shape + (2, 2)``.
    """
    h = grid.h
    inner = np.zeros(grid.shape, dtype=bool)
    if grid.d == 1:
        H = np.zeros(grid.shape)
        H[1:-1] = (arr[2:] - 2 * arr[1:-1] + arr[:-2]) / h[0] ** 2
        inner[1:-1] = True
        return H, inner
    H = np.zeros(grid.shape + (2, 2))
    c = (slice(1, -1), slice(1, -1))
    H[c + (0, 0)] = (arr[2:, 1:-1] - 2 * arr[1:-1, 1:-1] + arr[:-2, 1:-1]) / h[0] ** 2
    H[c + (1, 1)] = (arr[1:-1, 2:] - 2 * arr[1:-1, 1:-1] + arr[1:-1, :-2]) / h[1] ** 2
    xy = (arr[2:, 2:] - arr[2:, :-2] - arr[:-2, 2:] + arr[:-2, :-2]) / (4 * h[0] * h[1])
    H[c + (0, 1)] = xy
    H[c + (1, 0)] = xy
    inner[c] = True
    return H, inner


def stencil_core(core: np.ndarray, d: int) -> np.ndarray:
    """Nodes whose full 3^d stencil lies in ``core``."""
    ok = core.copy()
    if d == 1:
        ok[1:-1] &= core[2:] & core[:-2]
        ok[[0, -1]] = False
        return ok
    out = np.zeros_like(core)
    inner = core[1:-1, 1:-1].copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            inner &= core[1 + di:core.shape[0] - 1 + di, 1 + dj:core.shape[1] - 1 + dj]
    out[1:-1, 1:-1] = inner
    return out


def write_snapshots_csv(path, snapshots: list[GridField]) -> None:
    """Dump snapshots as tidy CSV: axis coordinates, value, t."""
    import csv

    grid = snapshots[0].grid
    names = ["r"] if grid.radial else (["x"] if grid.d == 1 else ["x", "y"])
    pts = grid.points().reshape(-1, grid.d)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["value", "t"])
        for snap in snapshots:
            for p, v in zip(pts, snap.values.ravel()):
                w.writerow([f"{c:.10g}" for c in p] + [f"{v:.17g}", f"{snap.t:.10g}"])
