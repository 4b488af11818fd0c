"""One-dimensional and radial Brenier maps by CDF inversion.

CDFs are tabulated with composite Gauss--Legendre panels (exact to roundoff
for the smooth log-concave densities used here) and inverted by bracketed
Newton iteration with a bisection fallback.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .potentials import DomainError, RadialProfile, SubspaceDecomposition

GL_ORDER = 20
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)
LOG_TAIL = 46.0  # truncate where the density is e^{-46} ~ 1e-20 below its peak


class PreconditionError(ValueError):
    """Input violates a stated hypothesis (e.g. a decreasing ``v``)."""


class MonotonicityError(RuntimeError):
    """Map samples are not strictly increasing."""


def _find_edge(logp, start, direction, peak, step=0.5, limit=1e4):
    x = start
    while logp(np.array([x]))[0] > peak - LOG_TAIL:
        x += direction * step
        step *= 1.25
        if abs(x) > limit:
            raise DomainError("density does not decay; heavy tail")
    return x


@dataclass
class Density1D:
    """Normalized density ``exp(logpdf)`` on ``[lo, hi]`` (infinite ends truncated).

    Infinite endpoints are replaced by the point where the density falls
    ``e^{-46}`` below its maximum. ``panels`` sets the CDF table resolution.
    """

    logpdf: Callable
    lo: float = -np.inf
    hi: float = np.inf
    panels: int = 4000
    name: str = ""
    _edges: np.ndarray = field(init=False, repr=False)
    _cum: np.ndarray = field(init=False, repr=False)
    _ccum: np.ndarray = field(init=False, repr=False)
    _shift: float = field(init=False, repr=False)
    log_norm: float = field(init=False)

    def __post_init__(self):
        finite_lo, finite_hi = np.isfinite(self.lo), np.isfinite(self.hi)
        a = self.lo if finite_lo else -50.0
        b = self.hi if finite_hi else 50.0
        probe = np.linspace(a, b, 20001)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = np.asarray(self.logpdf(probe), dtype=float)
        lp = np.where(np.isnan(lp), -np.inf, lp)
        if not np.any(np.isfinite(lp)):
            raise DomainError("density vanishes on the probe interval")
        i = int(np.argmax(lp))
        peak, xpk = float(lp[i]), float(probe[i])
        lo = self.lo if finite_lo else _find_edge(self.logpdf, xpk, -1, peak)
        hi = self.hi if finite_hi else _find_edge(self.logpdf, xpk, +1, peak)
        self.lo, self.hi = float(lo), float(hi)
        self._shift = peak
        self._edges = np.linspace(self.lo, self.hi, self.panels + 1)
        a, b = self._edges[:-1], self._edges[1:]
        mass = self._panel_integral(a, b)
        self._cum = np.concatenate([[0.0], np.cumsum(mass)])
        total = self._cum[-1]
        if not np.isfinite(total) or total <= 0:
            raise DomainError("density has no finite positive mass")
        self._cum /= total
        self._ccum = np.concatenate([np.cumsum(mass[::-1])[::-1], [0.0]]) / total
        self.log_norm = float(np.log(total) + peak)

    def _raw(self, x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = np.exp(np.asarray(self.logpdf(x), dtype=float) - self._shift)
        return np.nan_to_num(v, nan=0.0, posinf=0.0)

    def _panel_integral(self, a, b):
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        return 0.5 * (b - a)[..., 0] * (self._raw(x) @ _GL_W)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = np.exp(np.asarray(self.logpdf(x), dtype=float) - self.log_norm)
        return np.where(inside, np.nan_to_num(v, nan=0.0), 0.0)

    def log_pdf(self, x):
        return np.asarray(self.logpdf(np.asarray(x, dtype=float)), dtype=float) - self.log_norm

    def _locate(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        k = np.clip(np.searchsorted(self._edges, x, side="right") - 1, 0, self.panels - 1)
        return x, k

    def cdf(self, x):
        x, k = self._locate(x)
        part = self._panel_integral(self._edges[k], x) / np.exp(self.log_norm - self._shift)
        return np.clip(self._cum[k] + part, 0.0, 1.0)

    def sf(self, x):
        """Survival function ``1 - F``, accurate in the upper tail."""
        x, k = self._locate(x)
        part = self._panel_integral(x, self._edges[k + 1]) / np.exp(self.log_norm - self._shift)
        return np.clip(self._ccum[k + 1] + part, 0.0, 1.0)

    def normalization_residual(self) -> float:
        """``|int p - 1|`` re-evaluated on a doubled panel count."""
        e = np.linspace(self.lo, self.hi, 2 * self.panels + 1)
        total = self._panel_integral(e[:-1], e[1:]).sum() / np.exp(self.log_norm - self._shift)
        return float(abs(total - 1.0))

    def _invert(self, levels, upper: bool, tol: float, max_iter: int):
        flat = np.asarray(levels, dtype=float).ravel()
        if upper:
            k = np.clip(self.panels - np.searchsorted(self._ccum[::-1], flat, side="left"),
                        0, self.panels - 1)
            fn, sign = self.sf, -1.0
        else:
            k = np.clip(np.searchsorted(self._cum, flat, side="right") - 1, 0, self.panels - 1)
            fn, sign = self.cdf, 1.0
        a = self._edges[k].copy()
        b = self._edges[k + 1].copy()
        x = 0.5 * (a + b)
        # relative tolerance: tail levels are tiny
        scale = np.clip(flat, 1e-300, 1.0)
        for _ in range(max_iter):
            r = sign * (fn(x) - flat)   # increasing in x either way
            done = np.abs(r) <= tol * scale
            if done.all():
                break
            a = np.where(r < 0, x, a)
            b = np.where(r > 0, x, b)
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - r / self.pdf(x)
            bad = ~np.isfinite(xn) | (xn <= a) | (xn >= b)
            xn = np.where(bad, 0.5 * (a + b), xn)
            x = np.where(done, x, xn)
            if np.all(done | (b - a <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))):
                break
        return x

    def quantile(self, u, tol: float = 1e-14, max_iter: int = 200):
        """Inverse CDF by safeguarded Newton iteration."""
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("quantile level outside [0, 1]")
        return self._invert(u, False, tol, max_iter).reshape(u.shape)

    def isf(self, s, tol: float = 1e-14, max_iter: int = 200):
        """Inverse survival function."""
        s = np.asarray(s, dtype=float)
        if np.any((s < 0) | (s > 1)):
            raise DomainError("survival level outside [0, 1]")
        return self._invert(s, True, tol, max_iter).reshape(s.shape)

    def transport(self, source: "Density1D", xs):
        """``F^{-1}(F_source(x))``, using survival functions above the median."""
        xs = np.asarray(xs, dtype=float)
        u = source.cdf(xs)
        out = np.empty_like(xs)
        lower = u <= 0.5
        out[lower] = self.quantile(u[lower])
        out[~lower] = self.isf(source.sf(xs[~lower]))
        return out

    def mean(self) -> float:
        e = self._edges
        a, b = e[:-1, None], e[1:, None]
        x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        w = 0.5 * (b - a) * _GL_W
        return float(np.sum(w * x * self.pdf(x)))


def gaussian_density(sigma: float = 1.0, mean: float = 0.0, **kw) -> Density1D:
    return Density1D(lambda x: -0.5 * ((np.asarray(x) - mean) / sigma) ** 2, **kw)


def potential_density(rho: Callable, v: Callable | None = None, radial_dim: int | None = None,
                      **kw) -> Density1D:
    """``exp(-rho - v)`` on the line, or ``r^{n-1} exp(-rho - v)`` on the ray."""
    def logpdf(x):
        x = np.asarray(x, dtype=float)
        r = np.abs(x) if radial_dim else x
        out = -np.asarray(rho(r), dtype=float)
        if v is not None:
            out = out - np.asarray(v(r), dtype=float)
        if radial_dim and radial_dim > 1:
            with np.errstate(divide="ignore"):
                out = out + (radial_dim - 1) * np.log(r)
        return out

    if radial_dim:
        kw.setdefault("lo", 0.0)
    return Density1D(logpdf, **kw)


@dataclass
class MonotoneMap1D:
    """Sampled non-decreasing map with a monotone (PCHIP) interpolant."""

    xs: np.ndarray
    ys: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        if self.xs.shape != self.ys.shape or self.xs.ndim != 1 or self.xs.size < 2:
            raise ValueError("xs and ys must be matching 1D arrays")
        if np.any(np.diff(self.xs) <= 0):
            raise ValueError("abscissae must be strictly increasing")
        if np.any(np.diff(self.ys) <= 0):
            raise MonotonicityError("map samples are not strictly increasing")
        self._interp = PchipInterpolator(self.xs, self.ys, extrapolate=False)

    def __call__(self, x):
        return self._interp(np.asarray(x, dtype=float))

    def slopes(self):
        """Second-order finite-difference derivative at the samples."""
        return np.gradient(self.ys, self.xs, edge_order=2)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.xs, self.ys]), delimiter=",",
                   header="x,T", comments="", fmt="%.17g")


def quantile_map(source: Density1D, target: Density1D, xs) -> MonotoneMap1D:
    """``T(x) = F_target^{-1}(F_source(x))`` at the sample points ``xs``."""
    xs = np.asarray(xs, dtype=float)
    u = source.cdf(xs)
    if np.any(u > target.cdf(target.hi) + 1e-12):
        raise DomainError("target mass deficit")
    ys = target.transport(source, xs)
    resid = float(np.max(np.abs(target.cdf(ys) - u)))
    return MonotoneMap1D(xs, ys, {"pushforward_residual": resid})


def verify_logderiv_identity(T: MonotoneMap1D, rho: Callable, v: Callable | None = None,
                             exclude_origin: bool = False) -> dict:
    """Residual of ``log T' + rho(x) - rho(T x) - v(T x) = const``.

    The constant is fixed at the median sample. ``rho`` must already include
    any ``-(n-1) log r`` term in the radial case; the origin can be excluded.
    """
    if np.any(np.diff(T.ys) <= 0):
        raise MonotonicityError("map samples are not strictly increasing")
    x, y = T.xs, T.ys
    d = T.slopes()
    keep = np.ones_like(x, dtype=bool)
    if exclude_origin:
        keep &= x > 0
    vy = np.zeros_like(y) if v is None else np.asarray(v(y), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.log(d) + np.asarray(rho(x)) - np.asarray(rho(y)) - vy
    g = g[keep]
    ref = g[len(g) // 2]
    resid = np.abs(g - ref)
    return {"max_residual": float(np.nanmax(resid)), "offset": float(ref),
            "samples": int(g.size)}


def lipschitz_estimate(T: MonotoneMap1D) -> float:
    """Largest slope between consecutive samples."""
    return float(np.max(np.diff(T.ys) / np.diff(T.xs)))


def radial_log_density(profile: Callable, n: int) -> Callable:
    """``rho_1(r) = rho(r) - (n-1) log r``."""
    def rho1(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.asarray(profile(r)) - (n - 1) * np.log(r) if n > 1 else np.asarray(profile(r))
    return rho1


def radial_brenier(rho: RadialProfile | Callable, v: Callable, n: int, xs=None,
                   panels: int = 4000, tol: float = 1e-10) -> MonotoneMap1D:
    """Brenier map of ``r^{n-1} e^{-rho} dr`` onto ``r^{n-1} e^{-rho-v} dr`` on the ray.

    ``v`` must be non-decreasing; the contraction-to-origin check
    ``T(r) <= r`` is stored in ``info``.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be an integer >= 1")
    source = potential_density(rho, None, radial_dim=n, panels=panels)
    mesh = np.linspace(0.0, source.hi, 20001)
    dv = np.diff(np.asarray(v(mesh), dtype=float))
    if np.any(dv < -tol):
        raise PreconditionError("v must be non-decreasing on the ray")
    target = potential_density(rho, v, radial_dim=n, panels=panels)
    if xs is None:
        xs = np.linspace(0.0, float(source.quantile(1 - 1e-9)), 4001)
    xs = np.asarray(xs, dtype=float)
    ys = target.transport(source, xs)
    if xs[0] == 0.0:
        ys[0] = 0.0
    T = MonotoneMap1D(xs, ys)
    T.info.update({
        "pushforward_residual": float(np.max(np.abs(target.cdf(ys) - source.cdf(xs)))),
        "max_T_minus_x": float(np.max(ys - xs)),
        "contraction_to_origin": bool(np.all(ys <= xs + tol)),
        "n": int(n),
    })
    return T


def wasserstein2_1d(source: Density1D, target: Density1D, check: bool = True) -> float:
    """Squared W2 distance ``int (T(x) - x)^2 dmu(x)`` via the quantile coupling.

    Evaluated on the source's Gauss--Legendre panels, which is the
    ``u``-integral ``int_0^1 (F_s^{-1} - F_t^{-1})^2 du`` after substituting
    ``u = F_s(x)``. With ``check`` the value is recomputed on half the panels;
    disagreement beyond ``1e-6`` relative signals a non-converging tail.
    """
    def _compute(panels):
        e = np.linspace(source.lo, source.hi, panels + 1)
        a, b = e[:-1, None], e[1:, None]
        x = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        w = 0.5 * (b - a) * _GL_W
        p = source.pdf(x)
        tx = target.transport(source, x.ravel()).reshape(x.shape)
        return float(np.sum(w * p * (tx - x) ** 2))

    val = _compute(source.panels)
    if check:
        coarse = _compute(max(source.panels // 2, 50))
        if abs(coarse - val) > 1e-6 * max(val, 1e-12) + 1e-14:
            raise DomainError("W2 integral not converging under refinement")
    return val


def blockwise_radial_map(maps: Sequence[MonotoneMap1D], dec: SubspaceDecomposition,
                         E0_matrix=None) -> Callable:
    """Assemble ``x -> (C x_0, T_1(|x_1|) x_1/|x_1|, ...)`` from radial block maps."""
    sl = dec.slices()

    def T(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        if dec.dim_E0:
            C = np.eye(dec.dim_E0) if E0_matrix is None else np.asarray(E0_matrix)
            out[..., sl[0]] = x[..., sl[0]] @ C.T
        for m, s in zip(maps, sl[1:]):
            y = x[..., s]
            r = np.linalg.norm(y, axis=-1, keepdims=True)
            safe = np.where(r > 0, r, 1.0)
            out[..., s] = np.where(r > 0, m(r) / safe, 0.0) * y
        return out

    return T


def coordinate_monotonicity_check(T: Callable, dec: SubspaceDecomposition, points,
                                  tol: float = 1e-4) -> dict:
    """Blockwise coefficients ``a_i(x) = |Proj_i T(x)| / |Proj_i x|``; pass iff ``a_i <= 1 + tol``."""
    pts = np.asarray(points, dtype=float)
    Tx = np.asarray(T(pts), dtype=float)
    sl = dec.slices()
    coeffs = []
    for i, s in enumerate(sl[1:], start=1):
        rx = np.linalg.norm(pts[..., s], axis=-1)
        rt = np.linalg.norm(Tx[..., s], axis=-1)
        live = rx > 1e-12
        coeffs.append(rt[live] / rx[live])
    a_max = [float(c.max()) if c.size else 0.0 for c in coeffs]
    a_min = [float(c.min()) if c.size else 0.0 for c in coeffs]
    violations = int(sum(np.count_nonzero(c > 1 + tol) for c in coeffs))
    return {"a_max": a_max, "a_min": a_min, "violations": violations,
            "passed": violations == 0}


def radial_coefficients(T: MonotoneMap1D) -> np.ndarray:
    """``a(r) = T(r)/r`` at the nonzero samples of a radial map."""
    live = T.xs > 0
    return T.ys[live] / T.xs[live]
