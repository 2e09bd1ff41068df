"""Run configuration: JSON ingestion, emission and bundled presets.

A configuration document looks like::

    {
      "schema_version": 1,
      "name": "diag2",
      "max_band": 40,
      "problem": {"T": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
                  "H": [[[0, 0], [0, 0]], [[0, 0], [0, 0]]],
                  "Q": {"kind": "constant", "matrix": ...}},
      "integrator": {"steps": 128, "method": "cf4", "tolerance": 1e-10}
    }

with ``"graph": {"edges": [...], "beta": 1.5, "coupling": "delta"}`` in
place of ``"problem"`` for star graphs.  Matrices are row-major arrays of
``[re, im]`` pairs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graphs import StarGraphSpec, to_matrix_problem
from .model import SelfAdjointProblem
from .potentials import (ConstantHermitian, FourierSeries, Zero, matrix_from_json, matrix_to_json,
                         potential_from_json)
from .propagator import IntegratorConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed configuration; ``where`` names the field or line."""

    def __init__(self, message: str, where: str | None = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass
class RunConfig:
    name: str = "problem"
    problem: SelfAdjointProblem | None = None
    graph: StarGraphSpec | None = None
    max_band: int = 10
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    fd_grid: int = 3000
    negative_control: bool = False
    seed: int = 0

    def __post_init__(self):
        if (self.problem is None) == (self.graph is None):
            raise ConfigError("exactly one of 'problem' and 'graph' must be given")
        if self.max_band < 1:
            raise ConfigError("must be >= 1", "max_band")

    @property
    def spec(self) -> SelfAdjointProblem:
        return self.problem if self.problem is not None else to_matrix_problem(self.graph)

    def with_max_band(self, n: int | None) -> "RunConfig":
        return self if n is None else replace(self, max_band=int(n))

    def to_json(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "name": self.name, "max_band": self.max_band,
               "integrator": {"steps": self.integrator.steps, "method": self.integrator.method,
                              "tolerance": self.integrator.tolerance,
                              "adaptive": self.integrator.adaptive,
                              "max_steps": self.integrator.max_steps},
               "fd_grid": self.fd_grid, "negative_control": self.negative_control, "seed": self.seed}
        if self.problem is not None:
            out["problem"] = {"T": matrix_to_json(self.problem.T), "H": matrix_to_json(self.problem.H),
                              "Q": self.problem.Q.to_json()}
        else:
            out["graph"] = {"edges": [q.to_json() for q in self.graph.edges], "beta": self.graph.beta,
                            "coupling": self.graph.coupling}
        return out


def _get(obj: dict, key: str, path: str, kind=None, default=...):
    if key not in obj:
        if default is ...:
            raise ConfigError("missing required field", f"{path}{key}")
        return default
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"expected {getattr(kind, '__name__', kind)}, got {type(val).__name__}", f"{path}{key}")
    return val


def _matrix(obj, key, path):
    try:
        return matrix_from_json(_get(obj, key, path, list))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), f"{path}{key}") from None


def _potential(obj, path, m=None):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", path)
    try:
        return potential_from_json(obj, m)
    except KeyError as exc:
        raise ConfigError("missing required field", f"{path}.{exc.args[0]}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path) from None


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    version = _get(doc, "schema_version", "", int)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version} (expected {SCHEMA_VERSION})", "schema_version")
    integ = _get(doc, "integrator", "", dict, {})
    try:
        icfg = IntegratorConfig(**integ)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "integrator") from None
    problem = graph = None
    if "problem" in doc:
        p = _get(doc, "problem", "", dict)
        T = _matrix(p, "T", "problem.")
        H = _matrix(p, "H", "problem.")
        Q = _potential(_get(p, "Q", "problem.", dict), "problem.Q", T.shape[0])
        problem = SelfAdjointProblem(T, H, Q)
    if "graph" in doc:
        g = _get(doc, "graph", "", dict)
        edges = [_potential(e, f"graph.edges[{j}]", 1) for j, e in enumerate(_get(g, "edges", "graph.", list))]
        beta = _get(g, "beta", "graph.", (int, float), 0.0)
        coupling = _get(g, "coupling", "graph.", str, "delta")
        try:
            graph = StarGraphSpec(edges, float(beta), coupling)
        except ValueError as exc:
            raise ConfigError(str(exc), "graph") from None
    max_band = _get(doc, "max_band", "", int, 10)
    return RunConfig(name=str(_get(doc, "name", "", str, "problem")), problem=problem, graph=graph,
                     max_band=max_band, integrator=icfg, fd_grid=_get(doc, "fd_grid", "", int, 3000),
                     negative_control=bool(_get(doc, "negative_control", "", bool, False)),
                     seed=_get(doc, "seed", "", int, 0))


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    return config_from_dict(doc)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_json(), indent=2, sort_keys=True)


def coupled_fourier(m: int = 3, seed: int = 0, scales=(1.0, 0.5, 0.3)) -> FourierSeries:
    """Random Hermitian cosine coefficients (deterministic for a given seed)."""
    rng = np.random.default_rng(seed)
    coeffs = []
    for s in scales:
        a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        coeffs.append(s * 0.5 * (a + a.conj().T))
    return FourierSeries(np.array(coeffs))


STAR_EDGES = (0.2, 0.5, 0.9)


def _star(coupling, beta):
    return StarGraphSpec([ConstantHermitian(np.array([[c]])) for c in STAR_EDGES], beta, coupling)


def preset(name: str) -> RunConfig:
    e3 = np.diag([1.0, 0.0, 0.0]).astype(complex)
    e2 = np.diag([1.0, 0.0]).astype(complex)
    if name == "q0":
        return RunConfig("q0", SelfAdjointProblem(e3, np.zeros((3, 3)), Zero(3)), max_band=30)
    if name == "diag2":
        return RunConfig("diag2", SelfAdjointProblem(e2, np.zeros((2, 2)),
                                                     ConstantHermitian(np.diag([0.6, -0.4]))), max_band=40)
    if name == "negative-control":
        return replace(preset("diag2"), name="negative-control", negative_control=True)
    if name == "coupled3":
        return RunConfig("coupled3", SelfAdjointProblem(e3, np.zeros((3, 3)), coupled_fourier()), max_band=40)
    if name == "star-delta":
        return RunConfig("star-delta", graph=_star("delta", 1.5), max_band=30)
    if name == "star-deltaprime":
        return RunConfig("star-deltaprime", graph=_star("deltaPrime", 0.0), max_band=30)
    raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}", "preset")


PRESETS = ("q0", "diag2", "negative-control", "coupled3", "star-delta", "star-deltaprime")
