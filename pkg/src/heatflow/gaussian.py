"""Closed-form Gaussian case: ``U = <Ax,x>/2``, ``V = <Bx,x>/2``.

For the Ornstein--Uhlenbeck semigroup with generator ``Delta - <Ax, grad>``,

    P_t f(x) = E f(E_t x + Sigma_t^{1/2} Z),   E_t = e^{-tA},
    Sigma_t = A^{-1} (I - e^{-2tA}).

Integrating the Gaussian ``e^{-V}`` against this kernel gives a quadratic
``-log P_t e^{-V}`` with Hessian

    M_t = E_t B^{1/2} (I + B^{1/2} Sigma_t B^{1/2})^{-1} B^{1/2} E_t,

which reduces to ``E_t (B^{-1} + Sigma_t)^{-1} E_t`` for invertible ``B``.
The advection field is ``W_t(x) = M_t x``, so the flow maps are linear:
``dL/dt = M_t L`` with ``L_0 = I``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

EIG_CLIP = 1e-14


class InvariantBreach(RuntimeError):
    """A conserved quantity drifted beyond its abort threshold."""


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def sqrtm_psd(M, inverse: bool = False):
    """Symmetric square root (or inverse root) with eigenvalue clipping."""
    w, Q = np.linalg.eigh(_sym(np.asarray(M, dtype=float)))
    w = np.clip(w, EIG_CLIP, None)
    p = -0.5 if inverse else 0.5
    return (Q * w**p) @ Q.T


@dataclass(frozen=True)
class GaussianPair:
    """Precision matrices of ``mu ~ e^{-<Ax,x>/2}`` and the density ``e^{-<Bx,x>/2}``.

    ``center`` is an optional common minimizer; maps act as
    ``x -> center + T (x - center)``.
    """

    A: np.ndarray
    B: np.ndarray
    center: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if A.shape != B.shape or A.shape[0] != A.shape[1]:
            raise ValueError("A and B must be square matrices of equal size")
        for name, M in (("A", A), ("B", B)):
            if np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(M).min() <= 0:
                raise ValueError(f"{name} is not positive definite")
        object.__setattr__(self, "A", _sym(A))
        object.__setattr__(self, "B", _sym(B))
        if self.center is not None:
            object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))

    @classmethod
    def from_affine(cls, A, b, B) -> "GaussianPair":
        """Centre ``<Ax,x>/2 + <b,x>`` at its minimizer ``-A^{-1} b``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls(A, B, center=-np.linalg.solve(A, np.asarray(b, dtype=float)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def commuting(self) -> bool:
        C = self.A @ self.B - self.B @ self.A
        return bool(np.linalg.norm(C) <= 1e-12 * np.linalg.norm(self.A) * np.linalg.norm(self.B))


@dataclass(frozen=True)
class MatrixFlowState:
    t: float
    M: np.ndarray
    L: np.ndarray

    def check(self, tol: float = 1e-10) -> None:
        if np.linalg.norm(self.M - self.M.T) > tol or np.linalg.eigvalsh(_sym(self.M)).min() < -tol:
            raise InvariantBreach(f"M_t not symmetric PSD at t={self.t}")
        if np.linalg.det(self.L) <= 0:
            raise InvariantBreach(f"det L_t <= 0 at t={self.t}")


class _MehlerKernel:
    """Caches the eigendecomposition of ``A`` and ``B^{1/2}`` for batched ``M_t``."""

    def __init__(self, pair: GaussianPair):
        self.lam, self.Q = np.linalg.eigh(pair.A)
        self.Bh = sqrtm_psd(pair.B)
        self.n = pair.n

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0):
            raise ValueError("t must be nonnegative")
        lam, Q = self.lam, self.Q
        e = np.exp(-np.outer(t, lam))                       # (m, n)
        sig = -np.expm1(-2.0 * np.outer(t, lam)) / lam      # (m, n)
        E = np.einsum("ij,mj,kj->mik", Q, e, Q)
        S = np.einsum("ij,mj,kj->mik", Q, sig, Q)
        inner = np.eye(self.n) + self.Bh @ S @ self.Bh
        core = self.Bh @ np.linalg.solve(inner, np.broadcast_to(self.Bh, inner.shape))
        M = _sym(E @ core @ E)
        return M


def mehler_quadratic(pair: GaussianPair, t) -> np.ndarray:
    """Hessian ``M_t`` of ``-log P_t^U(e^{-V})`` (batched over an array of ``t``)."""
    scalar = np.ndim(t) == 0
    M = _MehlerKernel(pair)(t)
    w_min = np.linalg.eigvalsh(M).min()
    if w_min < -1e-10:
        warnings.warn(f"M_t has eigenvalue {w_min:.3e}; clipping", RuntimeWarning, stacklevel=2)
        w, V = np.linalg.eigh(M)
        M = (V * np.clip(w, 0, None)) @ np.swapaxes(V, -1, -2)
    return M[0] if scalar else M


@dataclass
class MatrixFlowResult:
    """Trajectory of ``dL/dt = M_t L`` stored as arrays."""

    pair: GaussianPair
    dt: float
    times: np.ndarray
    M: np.ndarray
    L: np.ndarray
    residuals: np.ndarray
    stopped: bool
    extras: dict = field(default_factory=dict)

    @property
    def L_inf(self) -> np.ndarray:
        return self.L[-1]

    @property
    def T(self) -> np.ndarray:
        return np.linalg.inv(self.L[-1])

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max())

    def states(self, stride: int = 1) -> list[MatrixFlowState]:
        idx = list(range(0, len(self.times), stride))
        if idx[-1] != len(self.times) - 1:
            idx.append(len(self.times) - 1)
        return [MatrixFlowState(float(self.times[i]), self.M[i], self.L[i]) for i in idx]

    def at(self, t: float) -> MatrixFlowState:
        i = int(np.clip(round(t / self.dt), 0, len(self.times) - 1))
        return MatrixFlowState(float(self.times[i]), self.M[i], self.L[i])

    def map(self, x):
        """Apply ``T = L_inf^{-1}`` (respecting ``center``) to points ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        c = self.pair.center
        if c is None:
            return x @ self.T.T
        return c + (x - c) @ self.T.T


def integrate_matrix_flow(pair: GaussianPair, dt: float = 1e-3, stop_tol: float = 1e-8,
                          t_max: float = 1e4, abort_tol: float = 1e-5,
                          chunk: int = 4096) -> MatrixFlowResult:
    """RK4 on ``dL/dt = M_t L`` until ``|M_t|_2 < stop_tol``.

    ``M`` is evaluated in batches at the RK4 nodes (step and half step). The
    invariant ``L^T (A + M_t) L = A + B`` is measured at every step; a
    residual above ``abort_tol`` raises :class:`InvariantBreach`.
    """
    if not 0 < dt <= 1e-2:
        raise ValueError("dt must lie in (0, 1e-2]")
    kern = _MehlerKernel(pair)
    n = pair.n
    L = np.eye(n)
    Ls, Ms, ts = [L.copy()], [], []
    t0 = 0.0
    stopped = False
    step = 0
    while not stopped:
        # M at t0 + j*dt/2, j = 0..2*chunk
        half = kern(t0 + 0.5 * dt * np.arange(2 * chunk + 1))
        for j in range(chunk):
            m0, mh, m1 = half[2 * j], half[2 * j + 1], half[2 * j + 2]
            if step == 0:
                Ms.append(m0)
                ts.append(0.0)
            k1 = m0 @ L
            k2 = mh @ (L + 0.5 * dt * k1)
            k3 = mh @ (L + 0.5 * dt * k2)
            k4 = m1 @ (L + dt * k3)
            L = L + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            step += 1
            Ls.append(L)
            Ms.append(m1)
            ts.append(step * dt)
            if np.linalg.norm(m1, 2) < stop_tol:
                stopped = True
                break
            if step * dt >= t_max:
                break
        else:
            t0 += chunk * dt
            continue
        break
    Ls = np.array(Ls)
    Ms = np.array(Ms)
    times = np.array(ts)
    AB = pair.A + pair.B
    resid = np.linalg.norm(np.swapaxes(Ls, -1, -2) @ (pair.A + Ms) @ Ls - AB, axis=(-2, -1))
    if resid.max() > abort_tol:
        bad = int(np.argmax(resid > abort_tol))
        raise InvariantBreach(f"flow invariant residual {resid[bad]:.3e} at t={times[bad]:.4f}")
    if not stopped:
        log.warning("matrix flow reached t_max=%g before |M_t| < %g", t_max, stop_tol)
    return MatrixFlowResult(pair, dt, times, Ms, Ls, resid, stopped)


def brenier_linear(pair: GaussianPair, tol: float = 1e-10) -> np.ndarray:
    """``C_opt = A^{1/2} (A^{1/2} (A+B) A^{1/2})^{-1/2} A^{1/2}``.

    Validated through ``C A^{-1} C^T = (A+B)^{-1}`` (relative Frobenius error).
    """
    Ah = sqrtm_psd(pair.A)
    C = _sym(Ah @ sqrtm_psd(Ah @ (pair.A + pair.B) @ Ah, inverse=True) @ Ah)
    target = np.linalg.inv(pair.A + pair.B)
    err = np.linalg.norm(C @ np.linalg.solve(pair.A, C.T) - target) / np.linalg.norm(target)
    if err > tol:
        raise InvariantBreach(f"C_opt covariance identity off by {err:.3e}")
    return C


def commutator_diagnostics(pair: GaussianPair, time_mesh, flow: MatrixFlowResult | None = None) -> dict:
    """Commutators of ``M_t`` on a mesh, asymmetry of ``L_t`` and the final map gap."""
    mesh = np.asarray(sorted(time_mesh), dtype=float)
    if mesh.size < 2:
        raise ValueError("time mesh needs at least two points")
    Ms = mehler_quadratic(pair, mesh)
    comm = Ms[:, None] @ Ms[None, :] - Ms[None, :] @ Ms[:, None]
    max_comm = float(np.linalg.norm(comm, axis=(-2, -1)).max())
    flow = flow or integrate_matrix_flow(pair)
    asym = np.array([np.linalg.norm(flow.at(t).L - flow.at(t).L.T) for t in mesh])
    C = brenier_linear(pair)
    return {
        "times": mesh.tolist(),
        "max_commutator": max_comm,
        "asymmetry": asym.tolist(),
        "max_asymmetry": float(asym.max()),
        "final_asymmetry": float(np.linalg.norm(flow.L_inf - flow.L_inf.T)),
        "map_gap": float(np.linalg.norm(flow.T - C)),
    }


def asymmetry_refinement(pair: GaussianPair, dts=(2e-3, 1e-3)) -> dict:
    """``|L_inf - L_inf^T|`` at several step sizes; the spread is an error bar."""
    vals = []
    for dt in dts:
        L = integrate_matrix_flow(pair, dt=dt).L_inf
        vals.append(float(np.linalg.norm(L - L.T)))
    return {"dts": list(dts), "asymmetry": vals, "error_bar": float(np.ptp(vals))}


def contraction_certificate(T, tol: float = 1e-8) -> dict:
    """Largest singular value of ``T``; passes when ``<= 1 + tol``."""
    s = float(np.linalg.norm(np.atleast_2d(np.asarray(T, dtype=float)), 2))
    return {"sigma_max": s, "passed": s <= 1.0 + tol}


def random_pair(n: int, commuting: bool, rng: np.random.Generator,
                eig_range=(0.5, 3.0)) -> GaussianPair:
    """Random PD pair; commuting pairs share an eigenbasis."""
    from scipy.stats import special_ortho_group

    Q1 = special_ortho_group.rvs(n, random_state=rng)
    a = rng.uniform(*eig_range, size=n)
    b = rng.uniform(*eig_range, size=n)
    A = (Q1 * a) @ Q1.T
    Q2 = Q1 if commuting else special_ortho_group.rvs(n, random_state=rng)
    B = (Q2 * b) @ Q2.T
    return GaussianPair(_sym(A), _sym(B))
