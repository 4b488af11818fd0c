"""Monte-Carlo checks of the correlation inequalities for structured measures.

``mu`` is a product of a Gaussian factor on ``E_0`` and radial log-concave
factors on the blocks ``E_i``; :class:`ProductSampler` draws from it. Sets are
described through reduced coordinates ``(x_0, |x_1|, ..., |x_k|)`` and tagged
as convex symmetric (``B`` kind) or down-closed star-shaped (``A`` kind).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import kstest, norm

from .brenier import potential_density
from .potentials import StructuredPotential, SubspaceDecomposition, random_group_element

log = logging.getLogger(__name__)

KIND_A = "star_shaped_A"
KIND_B = "convex_symmetric_B"
KINDS = (KIND_A, KIND_B)


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True)
class SymmetricSet:
    """Membership predicate on full points ``(N, n)`` with a kind tag.

    ``e0_metric`` is the positive-definite matrix ``G`` of the ellipsoid norm
    ``|y|_E = sqrt(<G y, y>)`` on ``E_0`` (identity by default); it is only
    used by the ``A``-kind closure checks and the invariance audit.
    """

    name: str
    kind: str
    decomposition: SubspaceDecomposition
    predicate: Callable
    e0_metric: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown set kind {self.kind!r}")

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.predicate(np.asarray(x, dtype=float)), dtype=bool)

    def __and__(self, other: "SymmetricSet") -> "SymmetricSet":
        return intersection(self, other)

    def e0_norm(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        G = np.eye(y.shape[-1]) if self.e0_metric is None else self.e0_metric
        return np.sqrt(np.einsum("...i,ij,...j->...", y, G, y))


def _block_norms(dec: SubspaceDecomposition, x):
    sl = dec.slices()
    return [np.linalg.norm(x[..., s], axis=-1) for s in sl[1:]]


def ball(dec: SubspaceDecomposition, radius: float, kind: str = KIND_A, e0_metric=None,
         name: str | None = None) -> SymmetricSet:
    """``|x_0|_E^2 + sum |x_i|^2 <= radius^2`` (convex and down-closed)."""
    G = None if e0_metric is None else np.asarray(e0_metric, dtype=float)

    def pred(x):
        sl = dec.slices()
        tot = np.zeros(x.shape[:-1])
        if dec.dim_E0:
            y = x[..., sl[0]]
            Gm = np.eye(dec.dim_E0) if G is None else G
            tot = tot + np.einsum("...i,ij,...j->...", y, Gm, y)
        for r in _block_norms(dec, x):
            tot = tot + r**2
        return tot <= radius**2

    return SymmetricSet(name or f"ball({radius:g})", kind, dec, pred, G)


def slab(dec: SubspaceDecomposition, direction, half_width: float, kind: str = KIND_B,
         name: str | None = None) -> SymmetricSet:
    """``|<u, x>| <= w``.

    ``direction`` must live in ``E_0`` or in a one-dimensional block, so the
    set factors through the reduced coordinates.
    """
    u = np.asarray(direction, dtype=float)
    if u.shape != (dec.n,):
        raise ValueError("direction must have the ambient dimension")
    sl = dec.slices()
    support = [i for i, s in enumerate(sl) if np.any(u[s] != 0)]
    if any(i > 0 and (sl[i].stop - sl[i].start) > 1 for i in support) or \
            (len(support) > 1 and any(i > 0 for i in support)):
        raise ValueError("slab direction breaks the block symmetry")
    return SymmetricSet(name or f"slab({half_width:g})", kind, dec,
                        lambda x: np.abs(x @ u) <= half_width)


def cylinder(dec: SubspaceDecomposition, e0_radius: float | None, block_radii: Sequence,
             e0_metric=None, kind: str = KIND_A, name: str | None = None) -> SymmetricSet:
    """``{|x_0|_E <= a, |x_i| <= b_i}``; ``None`` entries are unconstrained."""
    G = None if e0_metric is None else np.asarray(e0_metric, dtype=float)
    radii = list(block_radii)
    if len(radii) != dec.k:
        raise ValueError("one radius per block is required")

    def pred(x):
        ok = np.ones(x.shape[:-1], dtype=bool)
        sl = dec.slices()
        if dec.dim_E0 and e0_radius is not None:
            y = x[..., sl[0]]
            Gm = np.eye(dec.dim_E0) if G is None else G
            ok &= np.einsum("...i,ij,...j->...", y, Gm, y) <= e0_radius**2
        for r, b in zip(_block_norms(dec, x), radii):
            if b is not None:
                ok &= r <= b
        return ok

    return SymmetricSet(name or "cylinder", kind, dec, pred, G)


def box(dec: SubspaceDecomposition, half_widths, kind: str = KIND_B,
        name: str | None = None) -> SymmetricSet:
    """Coordinate box on ``E_0`` times block-norm bounds (one width per E_0 coordinate and block)."""
    w = np.asarray(half_widths, dtype=float)
    if w.size != dec.dim_E0 + dec.k:
        raise ValueError("need dim_E0 + k half-widths")

    def pred(x):
        sl = dec.slices()
        ok = np.ones(x.shape[:-1], dtype=bool)
        if dec.dim_E0:
            ok &= np.all(np.abs(x[..., sl[0]]) <= w[:dec.dim_E0], axis=-1)
        for r, b in zip(_block_norms(dec, x), w[dec.dim_E0:]):
            ok &= r <= b
        return ok

    return SymmetricSet(name or "box", kind, dec, pred)


def ellipsoid(dec: SubspaceDecomposition, Q0=None, block_coeffs=None, kind: str = KIND_B,
              name: str | None = None) -> SymmetricSet:
    """``<Q_0 x_0, x_0> + sum c_i |x_i|^2 <= 1``."""
    Q0 = np.eye(dec.dim_E0) if Q0 is None else np.asarray(Q0, dtype=float)
    c = np.ones(dec.k) if block_coeffs is None else np.asarray(block_coeffs, dtype=float)

    def pred(x):
        sl = dec.slices()
        tot = np.zeros(x.shape[:-1])
        if dec.dim_E0:
            y = x[..., sl[0]]
            tot = tot + np.einsum("...i,ij,...j->...", y, Q0, y)
        for r, ci in zip(_block_norms(dec, x), c):
            tot = tot + ci * r**2
        return tot <= 1.0

    return SymmetricSet(name or "ellipsoid", kind, dec, pred, Q0 if kind == KIND_A else None)


def norm_ball(dec: SubspaceDecomposition, radius: float, p: float = 1.0, kind: str = KIND_B,
              name: str | None = None) -> SymmetricSet:
    """``(|x_0|^p + sum |x_i|^p)^{1/p} <= radius`` with Euclidean norms per part."""
    def pred(x):
        sl = dec.slices()
        parts = list(_block_norms(dec, x))
        if dec.dim_E0:
            parts.append(np.linalg.norm(x[..., sl[0]], axis=-1))
        return sum(r**p for r in parts) <= radius**p

    return SymmetricSet(name or f"l{p:g}-ball({radius:g})", kind, dec, pred)


def intersection(a: SymmetricSet, b: SymmetricSet) -> SymmetricSet:
    if a.kind != b.kind:
        raise ValueError("intersection of sets of different kinds")
    return SymmetricSet(f"{a.name}&{b.name}", a.kind, a.decomposition,
                        lambda x: a(x) & b(x), a.e0_metric if a.e0_metric is not None else b.e0_metric)


def union(a: SymmetricSet, b: SymmetricSet) -> SymmetricSet:
    """Union; stays ``A``-kind (down-closed) but not convex."""
    if a.kind != KIND_A or b.kind != KIND_A:
        raise ValueError("unions are only supported for A-kind sets")
    return SymmetricSet(f"{a.name}|{b.name}", KIND_A, a.decomposition,
                        lambda x: a(x) | b(x), a.e0_metric if a.e0_metric is not None else b.e0_metric)


def check_set(S: SymmetricSet, points, seed: int = 0) -> dict:
    """Sampled structural checks.

    Always: central symmetry and block-rotation invariance. ``A`` kind:
    closure under ``(x_0, x_i) -> (y_0, t_i x_i)`` with ``|y_0|_E <= |x_0|_E``,
    ``t_i in [-1, 1]``. ``B`` kind: midpoint convexity.
    """
    rng = np.random.default_rng(seed)
    x = np.asarray(points, dtype=float)
    dec = S.decomposition
    inside = S(x)
    report = {"central_symmetry_violations": int(np.count_nonzero(inside != S(-x)))}
    g = random_group_element(dec, seed=seed)
    report["rotation_violations"] = int(np.count_nonzero(inside != S(g.apply(x))))
    wit = x[inside]
    if S.kind == KIND_A and wit.size:
        y = wit.copy()
        sl = dec.slices()
        if dec.dim_E0:
            x0 = wit[:, sl[0]]
            nrm = S.e0_norm(x0)
            d = rng.normal(size=x0.shape)
            dn = S.e0_norm(d)
            y[:, sl[0]] = d / np.where(dn > 0, dn, 1)[:, None] * (nrm * rng.uniform(size=len(y)))[:, None]
        for s in sl[1:]:
            y[:, s] *= rng.uniform(-1, 1, size=(len(y), 1))
        report["closure_violations"] = int(np.count_nonzero(~S(y)))
    elif S.kind == KIND_B and wit.shape[0] > 1:
        perm = rng.permutation(wit.shape[0])
        report["convexity_violations"] = int(np.count_nonzero(~S(0.5 * (wit + wit[perm]))))
    report["passed"] = all(v == 0 for k, v in report.items() if k.endswith("violations"))
    return report


# ---------------------------------------------------------------------------
# sampling


def _radial_table(profile, dim: int, nodes: int):
    dens = potential_density(profile, None, radial_dim=dim, panels=4000)
    # uniform levels plus geometric refinement towards both ends
    u = np.linspace(0.0, 1.0, nodes)
    tail = np.geomspace(1e-12, 1.0 / nodes, 40)
    u = np.unique(np.concatenate([u, tail, 1.0 - tail]))
    u = u[(u > 0) & (u < 1)]
    r = dens.quantile(u)
    keep = np.concatenate([[True], np.diff(r) > 0])
    u, r = u[keep], r[keep]
    u = np.concatenate([[0.0], u, [1.0]])
    r = np.concatenate([[0.0], r, [dens.hi]])
    return PchipInterpolator(u, r), dens


@dataclass
class ProductSampler:
    """Sampler for ``mu = exp(-U) dx`` with ``U`` of the structured form.

    ``E_0``: Gaussian ``N(-A^{-1} b, A^{-1})``. Blocks: uniform direction times
    a radius drawn from ``r^{d-1} e^{-rho(r)}`` through an inverse-CDF table.
    Batches use seeds spawned deterministically from ``seed``.
    """

    U: StructuredPotential
    seed: int = 0
    table_nodes: int = 100_000
    batch: int = 250_000
    _tables: list = field(init=False, repr=False)

    def __post_init__(self):
        dec = self.U.decomposition
        self._tables = [_radial_table(p, d, self.table_nodes)
                        for p, d in zip(self.U.profiles, dec.block_dims)]
        if dec.dim_E0:
            A = self.U.quad.A
            self._mean = -np.linalg.solve(A, self.U.quad.b)
            self._chol = np.linalg.cholesky(np.linalg.inv(A))

    @property
    def n(self) -> int:
        return self.U.n

    def _draw(self, N: int, rng: np.random.Generator) -> np.ndarray:
        dec = self.U.decomposition
        out = np.empty((N, dec.n))
        sl = dec.slices()
        if dec.dim_E0:
            out[:, sl[0]] = self._mean + rng.standard_normal((N, dec.dim_E0)) @ self._chol.T
        for (table, _), s, d in zip(self._tables, sl[1:], dec.block_dims):
            r = table(rng.uniform(size=N))
            g = rng.standard_normal((N, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            out[:, s] = r[:, None] * g
        return out

    def sample(self, N: int, stream: int = 0) -> np.ndarray:
        """``N`` samples; ``stream`` selects an independent deterministic stream."""
        ss = np.random.SeedSequence([self.seed, stream])
        nb = -(-N // self.batch)
        parts = []
        for k, child in enumerate(ss.spawn(nb)):
            m = min(self.batch, N - k * self.batch)
            parts.append(self._draw(m, np.random.default_rng(child)))
        return np.concatenate(parts, axis=0)

    def ks_audit(self, X) -> dict:
        """Per-block KS statistics against the quadrature CDFs."""
        dec = self.U.decomposition
        X = np.asarray(X)
        N = X.shape[0]
        sl = dec.slices()
        stats = {}
        if dec.dim_E0:
            sd = np.sqrt(np.diag(np.linalg.inv(self.U.quad.A)))
            for j in range(dec.dim_E0):
                st = kstest(X[:, j], norm(loc=self._mean[j], scale=sd[j]).cdf).statistic
                stats[f"E0[{j}]"] = float(st)
        for i, ((_, dens), s) in enumerate(zip(self._tables, sl[1:]), start=1):
            r = np.linalg.norm(X[:, s], axis=1)
            stats[f"|E{i}|"] = float(kstest(r, dens.cdf).statistic)
        bound = 2.0 / np.sqrt(N)
        return {"statistics": stats, "bound": bound,
                "passed": all(v <= bound for v in stats.values())}


# ---------------------------------------------------------------------------
# estimators


@dataclass(frozen=True)
class CorrelationResult:
    N: int
    mu_A: float
    mu_B: float
    mu_AB: float
    gap: float
    stderr: float
    passed: bool
    degenerate: bool
    reruns: int = 0

    def as_row(self, scenario: str) -> dict:
        return {"scenario": scenario, "N": self.N, "mu_A": self.mu_A, "mu_B": self.mu_B,
                "mu_AB": self.mu_AB, "gap": self.gap, "stderr": self.stderr,
                "verdict": "pass" if self.passed else "fail"}


def correlation_from_indicators(a, b) -> tuple[float, float, float, float, float]:
    """``(p_A, p_B, p_AB, gap, stderr)`` with a delta-method standard error."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    N = a.size
    pA, pB, pAB = a.mean(), b.mean(), (a * b).mean()
    psi = a * b - pB * a - pA * b
    se = float(np.sqrt(psi.var(ddof=1) / N))
    return float(pA), float(pB), float(pAB), float(pAB - pA * pB), se


def estimate_correlation(A: SymmetricSet, B: SymmetricSet, sampler: ProductSampler,
                         N: int = 1_000_000, z: float = 2.0, rerun: bool = True,
                         stream: int = 0) -> CorrelationResult:
    """``mu(A & B) - mu(A) mu(B)`` by Monte Carlo; pass iff ``gap >= -z * stderr``.

    A failing estimate is repeated once at ``4N`` before the verdict.
    """
    if N < 10_000:
        raise ValueError("N must be at least 1e4")
    X = sampler.sample(N, stream)
    pA, pB, pAB, gap, se = correlation_from_indicators(A(X), B(X))
    degenerate = pA in (0.0, 1.0) or pB in (0.0, 1.0)
    passed = gap >= -z * se
    if not passed and rerun:
        log.info("gap %.3e below -%g stderr; rerunning at 4N", gap, z)
        res = estimate_correlation(A, B, sampler, 4 * N, z, rerun=False, stream=stream + 1)
        return CorrelationResult(res.N, res.mu_A, res.mu_B, res.mu_AB, res.gap, res.stderr,
                                 res.passed, res.degenerate, reruns=1)
    return CorrelationResult(N, pA, pB, pAB, gap, se, bool(passed), bool(degenerate))


def function_correlation(f: Callable, g: Callable, sampler: ProductSampler, N: int = 200_000,
                         levels: int = 32, z: float = 2.0, stream: int = 0) -> dict:
    """``int fg - int f int g`` directly and through a layer-cake grid of levels.

    Each pair of levels gives a set correlation; the verdict requires every
    level-set gap to be ``>= -z`` stderr and the direct covariance likewise.
    """
    X = sampler.sample(N, stream)
    fx = np.asarray(f(X), dtype=float)
    gx = np.asarray(g(X), dtype=float)
    cov = float(np.mean(fx * gx) - fx.mean() * gx.mean())
    psi = (fx - fx.mean()) * (gx - gx.mean())
    se = float(np.sqrt(psi.var(ddof=1) / N))
    la = np.linspace(0, fx.max(), levels + 2)[1:-1]
    lb = np.linspace(0, gx.max(), levels + 2)[1:-1]
    worst = np.inf
    total = 0.0
    for a in la:
        ia = fx >= a
        for b in lb:
            _, _, _, gap, s = correlation_from_indicators(ia, gx >= b)
            total += gap * (la[1] - la[0] if levels > 1 else la[0]) * (lb[1] - lb[0] if levels > 1 else lb[0])
            if s > 0:
                worst = min(worst, gap / s)
    return {"covariance": cov, "stderr": se, "layer_cake": total,
            "min_level_z": float(worst), "levels": levels,
            "passed": bool(cov >= -z * se and worst >= -z)}


def transfer_expectation(gamma: Callable, samples, T: Callable, z: float = 2.0) -> dict:
    """``(int Gamma dnu, int Gamma dmu)`` with ``nu = T_* mu`` realized on samples.

    Points where ``T`` returns non-finite values are dropped and counted.
    The paired standard error uses the per-sample differences.
    """
    X = np.asarray(samples, dtype=float)
    TX = np.asarray(T(X), dtype=float)
    ok = np.all(np.isfinite(TX), axis=-1)
    gx = np.asarray(gamma(X[ok]), dtype=float)
    gt = np.asarray(gamma(TX[ok]), dtype=float)
    n = int(ok.sum())
    diff = gt - gx
    se = float(diff.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    nu_est, mu_est = float(gt.mean()), float(gx.mean())
    return {"nu": nu_est, "mu": mu_est,
            "nu_stderr": float(gt.std(ddof=1) / np.sqrt(n)),
            "mu_stderr": float(gx.std(ddof=1) / np.sqrt(n)),
            "paired_stderr": se, "dropped": int(X.shape[0] - n),
            "passed": bool(nu_est <= mu_est + z * se)}


def set_invariance_audit(S: SymmetricSet, samples, T: Callable, tol: float = 1e-9) -> dict:
    """Fraction of sampled ``a`` in ``S`` with ``T(a)`` in ``S``, and block-norm audit.

    The audit checks ``|Proj_i T(x)| <= |Proj_i x|`` (``E_0`` measured in the
    ellipsoid norm of ``S``) for ``i = 0..k``.
    """
    X = np.asarray(samples, dtype=float)
    TX = np.asarray(T(X), dtype=float)
    ok = np.all(np.isfinite(TX), axis=-1)
    X, TX = X[ok], TX[ok]
    inside = S(X)
    kept = S(TX[inside])
    dec = S.decomposition
    sl = dec.slices()
    norm_viol = 0
    worst = 0.0
    if dec.dim_E0:
        a, b = S.e0_norm(TX[:, sl[0]]), S.e0_norm(X[:, sl[0]])
        norm_viol += int(np.count_nonzero(a > b * (1 + tol) + tol))
        worst = max(worst, float(np.max(a - b)))
    for s in sl[1:]:
        a = np.linalg.norm(TX[:, s], axis=-1)
        b = np.linalg.norm(X[:, s], axis=-1)
        norm_viol += int(np.count_nonzero(a > b * (1 + tol) + tol))
        worst = max(worst, float(np.max(a - b)))
    frac = float(kept.mean()) if kept.size else 1.0
    return {"fraction_kept": frac, "in_set": int(inside.sum()), "escaped": int((~ok).sum()),
            "norm_violations": norm_viol, "max_norm_excess": worst,
            "passed": bool(frac == 1.0 and norm_viol == 0)}


def gaussian_disk_slab_oracle(radius: float = 1.0, half_width: float = 1.0) -> dict:
    """Tensor quadrature of ``gamma_2`` on a centred disk and the slab ``|x_1| <= w``."""
    from scipy import integrate

    phi = lambda t: np.exp(-0.5 * t * t) / np.sqrt(2 * np.pi)  # noqa: E731
    mu_A = 1.0 - np.exp(-0.5 * radius**2)
    mu_B = float(integrate.quad(phi, -half_width, half_width, epsabs=1e-14)[0])
    lim = min(radius, half_width)

    def inner(x1):
        h = np.sqrt(max(radius**2 - x1**2, 0.0))
        return phi(x1) * integrate.quad(phi, -h, h, epsabs=1e-14)[0]

    mu_AB = float(integrate.quad(inner, -lim, lim, epsabs=1e-13, limit=200)[0])
    return {"mu_A": float(mu_A), "mu_B": mu_B, "mu_AB": mu_AB, "gap": mu_AB - mu_A * mu_B}
