"""Experiment configs: schema validation and builders for model objects."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import applications as app
from .potentials import (QuadraticForm, StructuredPotential, SubspaceDecomposition, logcosh_V,
                         make_profile, matrix_quadratic_V, quadratic_V, quartic_V, zero_V)
from .semigroup import Grid, choose_radius, radial_reduce


class ConfigError(ValueError):
    """Config failed schema or semantic validation (CLI exit code 2)."""


def schema() -> dict:
    text = resources.files("heatflow").joinpath("config.schema.json").read_text()
    return json.loads(text)


@dataclass
class ExperimentConfig:
    scenario: str
    id: str
    seed: int
    raw: dict
    output: str | None = None
    tolerances: dict = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.raw.get(key, default)


def validate(raw: dict) -> ExperimentConfig:
    """Schema check plus the semantic rules the schema cannot express."""
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    if "pair" in raw:
        A, B = np.asarray(raw["pair"]["A"]), np.asarray(raw["pair"]["B"])
        if A.ndim != 2 or A.shape != B.shape or A.shape[0] != A.shape[1]:
            raise ConfigError("pair: A and B must be square matrices of equal size")
    if "grid" in raw and not ({"h", "nodes"} & raw["grid"].keys()):
        raise ConfigError("grid: one of h or nodes is required")
    if "potential" in raw:
        pot = raw["potential"]
        if not pot.get("E0") and not pot.get("blocks"):
            raise ConfigError("potential: needs E0 or at least one block")
    cid = raw.get("id") or raw["scenario"]
    return ExperimentConfig(raw["scenario"], cid, int(raw.get("seed", 0)), raw,
                            raw.get("output"), dict(raw.get("tolerances", {})))


def load(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    return validate(raw)


# ---------------------------------------------------------------------------
# builders


def build_profile(spec: dict):
    return make_profile(spec["name"], **spec.get("params", {}))


def build_potential(spec: dict) -> StructuredPotential:
    e0 = spec.get("E0")
    blocks = spec.get("blocks", [])
    dims = tuple(b["dim"] for b in blocks)
    quad = None
    if e0:
        try:
            quad = QuadraticForm(e0["A"], e0.get("b"))
        except ValueError as exc:
            raise ConfigError(f"potential.E0: {exc}") from None
    dec = SubspaceDecomposition(quad.dim if quad else 0, dims)
    return StructuredPotential(dec, quad, tuple(build_profile(b["profile"]) for b in blocks))


def build_V(spec: dict, dec: SubspaceDecomposition):
    kind = spec["type"]
    if kind == "zero":
        return zero_V(dec)
    if kind == "quadratic":
        return quadratic_V(dec, spec.get("B0"), spec.get("block_coeffs"))
    if kind == "matrix_quadratic":
        B = np.asarray(spec.get("B"), dtype=float)
        if B.shape != (dec.n, dec.n):
            raise ConfigError("V.B must be n x n")
        return matrix_quadratic_V(B, dec)
    if kind == "quartic":
        return quartic_V(dec, spec.get("quad_coeff", 0.5), spec.get("quartic_coeff", 0.125))
    return logcosh_V(dec, spec.get("coeffs"), spec.get("E0_coeff", 0.0))


@dataclass
class GridSetup:
    """Solver-side objects: the grid, the generator potential and ``V`` on grid points."""

    grid: Grid
    U: Any
    V_grid: Any
    bc: str
    radial_dim: int | None


def build_grid(spec: dict, U: StructuredPotential, V) -> GridSetup:
    kind = spec["kind"]
    bc = spec.get("bc", "reflecting")
    dec = U.decomposition
    radial_dim = None
    if kind == "radial":
        if dec.dim_E0 or dec.k != 1:
            raise ConfigError("radial grids need a single radial block and no E0")
        radial_dim = dec.n
        solver_U = radial_reduce(U.profiles[0], dec.n)

        def V_grid(p, _n=dec.n, _V=V):
            full = np.zeros(p.shape[:-1] + (_n,))
            full[..., 0] = p[..., 0]
            return _V.value(full)
    else:
        need = 1 if kind == "line" else 2
        if dec.n != need:
            raise ConfigError(f"{kind} grids need a potential on R^{need}")
        solver_U = U
        V_grid = V.value
    R = spec.get("R", "auto")
    if R == "auto":
        if radial_dim:
            R = choose_radius(lambda r: U.value(_embed(r, dec.n)), radial_dim=radial_dim)
        elif dec.n == 1:
            R = choose_radius(U.value)
        else:
            R = 8.0
    R = float(R)
    if kind == "line":
        grid = Grid.line_spacing(R, spec["h"]) if "h" in spec else Grid.line(R, spec["nodes"])
    elif kind == "radial":
        nodes = spec.get("nodes") or int(round(R / spec["h"]))
        grid = Grid.radial_grid(R, nodes)
    else:
        nodes = spec.get("nodes") or int(round(2 * R / spec["h"])) + 1
        grid = Grid.box(R, nodes)
    return GridSetup(grid, solver_U, V_grid, bc, radial_dim)


def _embed(x, n):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape + (n,))
    out[..., 0] = x
    return out


def build_set(spec: dict, dec: SubspaceDecomposition) -> app.SymmetricSet:
    kind = {"A": app.KIND_A, "B": app.KIND_B}.get(spec.get("kind", "A" if spec["type"] in ("ball", "cylinder", "union") else "B"))
    t = spec["type"]
    try:
        if t == "ball":
            return app.ball(dec, spec["radius"], kind, spec.get("e0_metric"))
        if t == "slab":
            return app.slab(dec, spec["direction"], spec["half_width"], kind)
        if t == "box":
            return app.box(dec, spec["half_widths"], kind)
        if t == "cylinder":
            return app.cylinder(dec, spec.get("e0_radius"), spec.get("block_radii", [None] * dec.k),
                                spec.get("e0_metric"), kind)
        if t == "ellipsoid":
            return app.ellipsoid(dec, spec.get("Q0"), spec.get("block_coeffs"), kind)
        if t == "norm_ball":
            return app.norm_ball(dec, spec["radius"], spec.get("p", 1.0), kind)
        parts = [build_set(s, dec) for s in spec["of"]]
        out = parts[0]
        for p in parts[1:]:
            out = app.intersection(out, p) if t == "intersection" else app.union(out, p)
        return out
    except KeyError as exc:
        raise ConfigError(f"set {t!r} is missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"set {t!r}: {exc}") from None
