"""Structured potentials U and symmetric convex potentials V.

A structured potential lives on ``R^n = E_0 + E_1 + ... + E_k`` where the
blocks are consecutive, axis-aligned groups of coordinates::

    U(x) = Q(x_0) + sum_i rho_i(|x_i|)

with ``Q`` quadratic on ``E_0`` and each ``rho_i`` a radial profile. All
evaluators are vectorized over leading axes: a point array has shape
``(..., n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

VALIDATION_TOL = 1e-10
_TINY_RADIUS = 1e-12


class DomainError(ValueError):
    """Evaluation requested outside the declared domain of a potential."""


class SymmetryViolation(ValueError):
    """A potential or map breaks the block-rotation symmetry it should carry."""


@dataclass(frozen=True)
class SubspaceDecomposition:
    """Orthogonal split of ``R^n`` into ``E_0`` and radial blocks ``E_1..E_k``."""

    dim_E0: int
    block_dims: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "block_dims", tuple(int(d) for d in self.block_dims))
        if self.dim_E0 < 0:
            raise ValueError("dim_E0 must be non-negative")
        if any(d <= 0 for d in self.block_dims):
            raise ValueError("block dimensions must be positive")
        if self.n == 0:
            raise ValueError("empty decomposition")

    @property
    def n(self) -> int:
        return self.dim_E0 + sum(self.block_dims)

    @property
    def k(self) -> int:
        return len(self.block_dims)

    def slices(self) -> list[slice]:
        """Coordinate slices ``[E_0, E_1, ..., E_k]`` (E_0 may be empty)."""
        out = [slice(0, self.dim_E0)]
        start = self.dim_E0
        for d in self.block_dims:
            out.append(slice(start, start + d))
            start += d
        return out

    def project(self, x, i: int) -> np.ndarray:
        return np.asarray(x)[..., self.slices()[i]]

    def reduced(self, x) -> np.ndarray:
        """Reduced coordinates ``(x_0, |x_1|, ..., |x_k|)``."""
        x = np.asarray(x, dtype=float)
        parts = [x[..., self.slices()[0]]]
        for s in self.slices()[1:]:
            parts.append(np.linalg.norm(x[..., s], axis=-1, keepdims=True))
        return np.concatenate(parts, axis=-1)


@dataclass(frozen=True)
class QuadraticForm:
    """``Q(y) = 1/2 <A y, y> + <b, y> + c`` on ``E_0``.

    The factor 1/2 makes ``D^2 Q = A``.
    """

    A: np.ndarray
    b: np.ndarray | None = None
    c: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if A.size and not np.allclose(A, A.T, atol=1e-12, rtol=0):
            raise ValueError("A must be symmetric")
        if A.size and np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("A must be positive definite")
        b = np.zeros(A.shape[0]) if self.b is None else np.asarray(self.b, dtype=float)
        if b.shape != (A.shape[0],):
            raise ValueError("b has the wrong shape")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", y, self.A, y) + y @ self.b + self.c

    def gradient(self, y):
        return np.asarray(y, dtype=float) @ self.A + self.b


# ---------------------------------------------------------------------------
# radial profiles


def _logcosh(r):
    a = np.abs(r)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _sech2(r):
    return 1.0 / np.cosh(np.clip(r, -350, 350)) ** 2


@dataclass(frozen=True)
class RadialProfile:
    """Radial profile ``rho`` on ``[0, r_max]`` with derivatives up to order 3.

    ``scale`` multiplies the base profile; ``smooth=False`` marks profiles
    that are not C^3 at the origin (only usable on sampling paths).
    """

    name: str
    rho: Callable
    d1: Callable
    d2: Callable
    d3: Callable
    r_max: float = np.inf
    smooth: bool = True
    params: dict = field(default_factory=dict)

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r > self.r_max):
            raise DomainError(f"radius beyond r_max={self.r_max} for profile {self.name}")
        return r

    def __call__(self, r):
        return self.rho(self._check(r))

    def derivative(self, r, order: int = 1):
        r = self._check(r)
        return (self.rho, self.d1, self.d2, self.d3)[order](r)

    def validate(self, r_grid=None, tol: float = VALIDATION_TOL) -> dict:
        """Certify the profile conditions on a mesh.

        Checks ``rho'(0) = 0``, ``rho'' >= 0``, ``rho''' <= 0`` and
        ``rho''(t) <= rho'(t)/t``. Returns the worst margins and a verdict.
        """
        if r_grid is None:
            top = min(self.r_max, 20.0)
            r_grid = np.linspace(0.0, top, 4001)
        r = np.asarray(r_grid, dtype=float)
        pos = r[r > 0]
        with np.errstate(all="ignore"):
            d1_0 = float(self.d1(np.array([0.0]))[0]) if self.smooth else float("nan")
            worst_d2 = float(np.min(self.d2(pos)))
            worst_d3 = float(np.max(self.d3(pos)))
            worst_ratio = float(np.max(self.d2(pos) - self.d1(pos) / pos))
        checks = {
            "d1_at_0": d1_0,
            "min_d2": worst_d2,
            "max_d3": worst_d3,
            "max_d2_minus_d1_over_r": worst_ratio,
        }
        ok = (worst_d2 >= -tol and worst_d3 <= tol and worst_ratio <= tol)
        if self.smooth:
            ok = ok and abs(d1_0) <= tol
        checks["passed"] = bool(ok)
        return checks


def quadratic_profile(scale: float = 1.0, r_max: float = np.inf) -> RadialProfile:
    c = float(scale)
    return RadialProfile(
        "quadratic",
        rho=lambda r: 0.5 * c * r**2,
        d1=lambda r: c * r,
        d2=lambda r: c * np.ones_like(r),
        d3=lambda r: np.zeros_like(r),
        r_max=r_max,
        params={"scale": c},
    )


def logcosh_profile(scale: float = 1.0, r_max: float = np.inf) -> RadialProfile:
    c = float(scale)
    return RadialProfile(
        "logcosh",
        rho=lambda r: c * _logcosh(r),
        d1=lambda r: c * np.tanh(r),
        d2=lambda r: c * _sech2(r),
        d3=lambda r: -2.0 * c * _sech2(r) * np.tanh(r),
        r_max=r_max,
        params={"scale": c},
    )


def sqrt_profile(scale: float = 1.0, r_max: float = np.inf) -> RadialProfile:
    """``rho(r) = c (sqrt(1 + r^2) - 1)``."""
    c = float(scale)
    return RadialProfile(
        "sqrt",
        rho=lambda r: c * (np.sqrt(1.0 + r**2) - 1.0),
        d1=lambda r: c * r / np.sqrt(1.0 + r**2),
        d2=lambda r: c * (1.0 + r**2) ** -1.5,
        d3=lambda r: -3.0 * c * r * (1.0 + r**2) ** -2.5,
        r_max=r_max,
        params={"scale": c},
    )


def power_profile(p: float, scale: float = 1.0, r_max: float = np.inf) -> RadialProfile:
    """``rho(r) = c r^p`` with ``p`` in ``[1, 2]``; not C^3 at 0 unless p = 2."""
    if not 1.0 <= p <= 2.0:
        raise ValueError("power profile needs p in [1, 2]")
    c, p = float(scale), float(p)
    with np.errstate(all="ignore"):
        return RadialProfile(
            "power",
            rho=lambda r: c * np.abs(r) ** p,
            d1=lambda r: c * p * np.abs(r) ** (p - 1),
            d2=lambda r: c * p * (p - 1) * np.abs(r) ** (p - 2) if p != 1 else np.zeros_like(r),
            d3=lambda r: (c * p * (p - 1) * (p - 2) * np.abs(r) ** (p - 3)
                          if p not in (1.0, 2.0) else np.zeros_like(r)),
            r_max=r_max,
            smooth=(p == 2.0),
            params={"scale": c, "p": p},
        )


PROFILE_CATALOG = {
    "quadratic": quadratic_profile,
    "logcosh": logcosh_profile,
    "sqrt": sqrt_profile,
    "power": power_profile,
}


def make_profile(name: str, **params) -> RadialProfile:
    try:
        factory = PROFILE_CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; known: {sorted(PROFILE_CATALOG)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# structured potential U


def _block_third(d1, d2, d3, r, u_xi, u_th, xi_th, xi2):
    """Third derivative of ``y -> rho(|y|)`` contracted as ``(xi, xi, theta)``.

    Inputs are the radius, the radial components ``<u, xi>``, ``<u, theta>``,
    the inner product ``<xi, theta>`` and ``|xi|^2`` (``u = y/|y|``).
    """
    g1 = d1 / r
    gap = d2 - g1
    return (gap * u_th / r * xi2
            + (d3 - gap / r) * u_th * u_xi**2
            + 2.0 * gap * u_xi * (xi_th - u_th * u_xi) / r)


@dataclass(frozen=True)
class StructuredPotential:
    """``U(x) = Q(Proj_E0 x) + sum_i rho_i(|Proj_Ei x|)``."""

    decomposition: SubspaceDecomposition
    quad: QuadraticForm | None
    profiles: tuple[RadialProfile, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        dec = self.decomposition
        if len(self.profiles) != dec.k:
            raise ValueError("one radial profile per block is required")
        if dec.dim_E0 > 0:
            if self.quad is None or self.quad.dim != dec.dim_E0:
                raise ValueError("quadratic part must match dim_E0")
        elif self.quad is not None and self.quad.dim != 0:
            raise ValueError("quadratic part given but dim_E0 = 0")

    @property
    def n(self) -> int:
        return self.decomposition.n

    @property
    def smooth(self) -> bool:
        return all(p.smooth for p in self.profiles)

    def _blocks(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(f"expected points of dimension {self.n}, got {x.shape[-1]}")
        sl = self.decomposition.slices()
        return x, sl

    def value(self, x):
        x, sl = self._blocks(x)
        out = np.zeros(x.shape[:-1])
        if self.decomposition.dim_E0:
            out = out + self.quad.value(x[..., sl[0]])
        for prof, s in zip(self.profiles, sl[1:]):
            out = out + prof(np.linalg.norm(x[..., s], axis=-1))
        return out

    __call__ = value

    def gradient(self, x):
        x, sl = self._blocks(x)
        g = np.zeros_like(x)
        if self.decomposition.dim_E0:
            g[..., sl[0]] = self.quad.gradient(x[..., sl[0]])
        for prof, s in zip(self.profiles, sl[1:]):
            y = x[..., s]
            r = np.linalg.norm(y, axis=-1, keepdims=True)
            safe = np.where(r > _TINY_RADIUS, r, 1.0)
            coef = np.where(r > _TINY_RADIUS, prof.derivative(r, 1) / safe, 0.0)
            g[..., s] = coef * y
        return g

    def hessian(self, x):
        x, sl = self._blocks(x)
        H = np.zeros(x.shape + (self.n,))
        if self.decomposition.dim_E0:
            H[..., sl[0], sl[0]] = self.quad.A
        for prof, s in zip(self.profiles, sl[1:]):
            y = x[..., s]
            d = y.shape[-1]
            r = np.linalg.norm(y, axis=-1)
            at_origin = r <= _TINY_RADIUS
            safe = np.where(at_origin, 1.0, r)
            u = y / safe[..., None]
            d2 = prof.derivative(r, 2)
            g1 = np.where(at_origin, d2, prof.derivative(r, 1) / safe)
            radial = np.where(at_origin, 0.0, d2 - g1)
            block = (g1[..., None, None] * np.eye(d)
                     + radial[..., None, None] * u[..., :, None] * u[..., None, :])
            H[..., s, s] = block
        return H

    def eval_derivatives(self, x, order: int = 0):
        if order == 0:
            return self.value(x)
        if order == 1:
            return self.gradient(x)
        if order == 2:
            return self.hessian(x)
        raise ValueError("order must be 0, 1 or 2")

    def third_form(self, x, xi, theta):
        """``D^3 U|_x (xi, xi, theta)``; the quadratic part contributes nothing.

        Blocks whose radius is zero contribute 0 (the radial limit for an
        even C^3 profile).
        """
        x, sl = self._blocks(x)
        xi = np.broadcast_to(np.asarray(xi, dtype=float), x.shape)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), x.shape)
        total = np.zeros(x.shape[:-1])
        for prof, s in zip(self.profiles, sl[1:]):
            y, e, th = x[..., s], xi[..., s], theta[..., s]
            r = np.linalg.norm(y, axis=-1)
            live = r > 1e-8
            safe = np.where(live, r, 1.0)
            u = y / safe[..., None]
            contrib = _block_third(
                prof.derivative(r, 1), prof.derivative(r, 2), prof.derivative(r, 3),
                safe,
                np.sum(u * e, axis=-1), np.sum(u * th, axis=-1),
                np.sum(e * th, axis=-1), np.sum(e * e, axis=-1),
            )
            total = total + np.where(live, contrib, 0.0)
        if np.any(np.isnan(total)):
            raise FloatingPointError("NaN in third-derivative form")
        return total

    def validate(self, r_grid=None) -> dict:
        return {f"block_{i + 1}": p.validate(r_grid) for i, p in enumerate(self.profiles)}


def quadratic_potential(A) -> StructuredPotential:
    """Pure quadratic ``U = 1/2 <A x, x>`` with ``E_0 = R^n``."""
    q = QuadraticForm(A)
    return StructuredPotential(SubspaceDecomposition(q.dim), q, ())


def radial_potential(profile: RadialProfile, n: int) -> StructuredPotential:
    return StructuredPotential(SubspaceDecomposition(0, (n,)), None, (profile,))


def product_potential(profiles: Sequence[RadialProfile]) -> StructuredPotential:
    """``U(x) = sum_i rho_i(|x_i|)`` with one-dimensional blocks."""
    return StructuredPotential(SubspaceDecomposition(0, (1,) * len(profiles)), None, tuple(profiles))


# ---------------------------------------------------------------------------
# symmetric convex V


@dataclass(frozen=True)
class SymmetricConvexPotential:
    """``V(x) = Phi(x_0, |x_1|, ..., |x_k|)`` given through full-space evaluators.

    ``reduced`` evaluates ``Phi`` on reduced coordinates. ``value`` and
    ``gradient`` act on full points. The class does not refuse asymmetric
    inputs; use :func:`invariance_residual` and :func:`gradient_alignment`
    to audit them.
    """

    decomposition: SubspaceDecomposition
    value: Callable
    gradient: Callable
    hessian: Callable | None = None
    name: str = "V"
    reduced: Callable | None = None

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    def convexity_check(self, points, h: float = 1e-4, tol: float = 1e-6) -> dict:
        """Minimum Hessian eigenvalue over sample points (analytic or FD)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.hessian is not None:
            H = self.hessian(pts)
        else:
            n = pts.shape[-1]
            H = np.empty(pts.shape[:-1] + (n, n))
            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                H[..., j, :] = (self.gradient(pts + e) - self.gradient(pts - e)) / (2 * h)
            H = 0.5 * (H + np.swapaxes(H, -1, -2))
        lam = np.linalg.eigvalsh(H).min()
        return {"min_eigenvalue": float(lam), "passed": bool(lam >= -tol)}


def _block_norm_sq(dec, x, weights):
    sl = dec.slices()
    return sum(w * np.sum(x[..., s] ** 2, axis=-1) for w, s in zip(weights, sl[1:]))


def quadratic_V(dec: SubspaceDecomposition, B0=None, block_coeffs=None, name="quadratic"):
    """``V = 1/2 <B0 x_0, x_0> + 1/2 sum_i b_i |x_i|^2``."""
    sl = dec.slices()
    B0 = np.zeros((dec.dim_E0, dec.dim_E0)) if B0 is None else np.atleast_2d(np.asarray(B0, float))
    bc = np.ones(dec.k) if block_coeffs is None else np.asarray(block_coeffs, float)
    diag = np.zeros((dec.n, dec.n))
    diag[sl[0], sl[0]] = B0
    for b, s in zip(bc, sl[1:]):
        diag[s, s] = b * np.eye(s.stop - s.start)
    return matrix_quadratic_V(diag, dec, name=name)


def matrix_quadratic_V(B, dec: SubspaceDecomposition | None = None, name="quadratic"):
    """``V = 1/2 <B x, x>`` for an explicit symmetric matrix ``B``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    dec = dec or SubspaceDecomposition(B.shape[0])
    return SymmetricConvexPotential(
        dec,
        value=lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, B, x),
        gradient=lambda x: np.asarray(x) @ B,
        hessian=lambda x: np.broadcast_to(B, np.shape(x)[:-1] + B.shape),
        name=name,
    )


def quartic_V(dec: SubspaceDecomposition, quad_coeff: float = 0.5, quartic_coeff: float = 0.125,
              weights=None, name="quartic"):
    """``V = a s + b s^2`` with ``s = |x_0|^2 + sum_i w_i |x_i|^2``, convex for a, b >= 0."""
    w = np.ones(dec.k) if weights is None else np.asarray(weights, float)
    sl = dec.slices()
    W = np.ones(dec.n)
    for wi, s in zip(w, sl[1:]):
        W[s] = wi
    a, b = float(quad_coeff), float(quartic_coeff)

    def s_of(x):
        return np.sum(W * np.asarray(x) ** 2, axis=-1)

    def value(x):
        s = s_of(x)
        return a * s + b * s**2

    def gradient(x):
        x = np.asarray(x)
        s = s_of(x)[..., None]
        return (a + 2 * b * s) * 2 * W * x

    def hessian(x):
        x = np.asarray(x)
        s = s_of(x)[..., None, None]
        Wx = 2 * W * x
        return (a + 2 * b * s) * np.diag(2 * W) + 2 * b * Wx[..., :, None] * Wx[..., None, :]

    return SymmetricConvexPotential(dec, value, gradient, hessian, name=name)


def logcosh_V(dec: SubspaceDecomposition, coeffs=None, E0_coeff: float = 0.0, name="logcosh"):
    """``V = sum_i c_i log cosh |x_i| + c_0 sum_j log cosh(x_0j)``."""
    c = np.ones(dec.k) if coeffs is None else np.asarray(coeffs, float)
    sl = dec.slices()

    def value(x):
        x = np.asarray(x, dtype=float)
        out = E0_coeff * np.sum(_logcosh(x[..., sl[0]]), axis=-1)
        for ci, s in zip(c, sl[1:]):
            out = out + ci * _logcosh(np.linalg.norm(x[..., s], axis=-1))
        return out

    def gradient(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[..., sl[0]] = E0_coeff * np.tanh(x[..., sl[0]])
        for ci, s in zip(c, sl[1:]):
            y = x[..., s]
            r = np.linalg.norm(y, axis=-1, keepdims=True)
            safe = np.where(r > _TINY_RADIUS, r, 1.0)
            g[..., s] = ci * np.where(r > _TINY_RADIUS, np.tanh(r) / safe, 1.0) * y
        return g

    return SymmetricConvexPotential(dec, value, gradient, None, name=name)


def zero_V(dec: SubspaceDecomposition) -> SymmetricConvexPotential:
    return SymmetricConvexPotential(
        dec,
        value=lambda x: np.zeros(np.shape(x)[:-1]),
        gradient=lambda x: np.zeros(np.shape(x)),
        hessian=lambda x: np.zeros(np.shape(x) + (np.shape(x)[-1],)),
        name="zero",
    )


def linear_V(dec: SubspaceDecomposition, direction, name="linear"):
    """``V = <d, x>``: convex but, off ``E_0``, not block-symmetric."""
    d = np.asarray(direction, dtype=float)
    return SymmetricConvexPotential(
        dec,
        value=lambda x: np.asarray(x) @ d,
        gradient=lambda x: np.broadcast_to(d, np.shape(x)).copy(),
        hessian=lambda x: np.zeros(np.shape(x) + (d.size,)),
        name=name,
    )


# ---------------------------------------------------------------------------
# geometric sign machinery


def gradient_alignment(V: SymmetricConvexPotential, x, tol: float = 1e-10,
                       resid_tol: float = 1e-8) -> dict:
    """Coefficients ``a_i`` with ``Proj_Ei grad V(x) = a_i Proj_Ei x``.

    Raises :class:`SymmetryViolation` when ``x_i = 0`` but the gradient has a
    non-zero ``E_i`` component. Otherwise returns the coefficients along with
    a violation list (orthogonal residual above ``resid_tol`` relative to
    ``1 + |grad|``, or ``a_i < -tol``).
    """
    x = np.asarray(x, dtype=float)
    dec = V.decomposition
    g = np.asarray(V.gradient(x), dtype=float)
    coeffs, violations = [], []
    for i, s in enumerate(dec.slices()[1:], start=1):
        y, gy = x[s], g[s]
        ny, ng = np.linalg.norm(y), np.linalg.norm(gy)
        scale = 1.0 + ng
        if ny <= _TINY_RADIUS:
            if ng > resid_tol * scale:
                raise SymmetryViolation(f"block {i}: x_i = 0 but gradient component {ng:.3e}")
            coeffs.append(0.0)
            continue
        a = float(gy @ y / ny**2)
        resid = float(np.linalg.norm(gy - a * y))
        coeffs.append(a)
        if resid > resid_tol * scale:
            violations.append({"block": i, "kind": "orthogonal_residual", "value": resid})
        if a < -tol:
            violations.append({"block": i, "kind": "negative_coefficient", "value": a})
    return {"coefficients": coeffs, "violations": violations, "aligned": not violations}


def direction_mesh(n: int, count: int = 64, seed: int = 0) -> np.ndarray:
    """Unit directions: coordinate axes, pairwise diagonals and random draws."""
    rng = np.random.default_rng(seed)
    dirs = [np.eye(n)]
    if n > 1:
        diag = []
        for a in range(n):
            for b in range(a + 1, n):
                for sgn in (1.0, -1.0):
                    v = np.zeros(n)
                    v[a], v[b] = 1.0, sgn
                    diag.append(v / np.sqrt(2))
        dirs.append(np.array(diag))
    rnd = rng.standard_normal((count, n))
    dirs.append(rnd / np.linalg.norm(rnd, axis=1, keepdims=True))
    return np.vstack(dirs)


def check_sign_condition(U: StructuredPotential, V: SymmetricConvexPotential, sample_points,
                         directions=None, tol: float = 1e-10) -> dict:
    """Max of ``D^3 U|_x (xi, xi, grad V(x))`` over samples and directions."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    dirs = direction_mesh(U.n) if directions is None else np.atleast_2d(directions)
    grads = np.asarray(V.gradient(pts), dtype=float)
    worst = -np.inf
    for xi in dirs:
        vals = U.third_form(pts, xi, grads)
        worst = max(worst, float(np.max(vals)))
    misaligned = 0
    for x in pts:
        try:
            if not gradient_alignment(V, x)["aligned"]:
                misaligned += 1
        except SymmetryViolation:
            misaligned += 1
    return {
        "max_third_form": worst,
        "tolerance": tol,
        "misaligned_points": misaligned,
        "passed": bool(worst <= tol),
        "n_points": len(pts),
        "n_directions": len(dirs),
    }


# ---------------------------------------------------------------------------
# group action


@dataclass(frozen=True)
class GroupElement:
    """Element of ``O(E_1, ..., E_k)`` or a block reflection ``R_i``.

    ``rotations`` maps block index (1-based) to an orthogonal matrix; absent
    blocks act as identity. ``reflection = i`` gives ``R_i(x) = x - 2 x_i``
    (``i = 0`` is allowed: it is the reflection used for central symmetry
    and is not part of the block group).
    """

    decomposition: SubspaceDecomposition
    rotations: dict = field(default_factory=dict)
    reflection: int | None = None

    def __post_init__(self):
        dims = self.decomposition.block_dims
        for i, Rm in self.rotations.items():
            Rm = np.asarray(Rm, dtype=float)
            if not 1 <= i <= len(dims) or Rm.shape != (dims[i - 1],) * 2:
                raise ValueError(f"bad rotation for block {i}")
            if not np.allclose(Rm @ Rm.T, np.eye(dims[i - 1]), atol=1e-12):
                raise ValueError(f"rotation for block {i} is not orthogonal")

    def matrix(self) -> np.ndarray:
        dec = self.decomposition
        M = np.eye(dec.n)
        sl = dec.slices()
        if self.reflection is not None:
            s = sl[self.reflection]
            M[s, s] = -np.eye(s.stop - s.start)
            return M
        for i, Rm in self.rotations.items():
            M[sl[i], sl[i]] = Rm
        return M

    def apply(self, x):
        return np.asarray(x, dtype=float) @ self.matrix().T


def rotation_2d(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def random_group_element(dec: SubspaceDecomposition, seed: int = 0) -> GroupElement:
    """Haar-ish random block rotation (QR of Gaussian blocks)."""
    rng = np.random.default_rng(seed)
    rots = {}
    for i, d in enumerate(dec.block_dims, start=1):
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        rots[i] = q * np.sign(np.diag(r))
    return GroupElement(dec, rots)


def invariance_residual(F: Callable, g: GroupElement, sample_points) -> float:
    """``max |F(g x) - F(x)|`` over the sample points."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    return float(np.max(np.abs(np.asarray(F(g.apply(pts))) - np.asarray(F(pts)))))


apply_group = invariance_residual
