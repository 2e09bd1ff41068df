"""Star graphs with delta / delta-prime vertex couplings as matrix problems.

Edges have length pi, Dirichlet conditions at the pendant vertices and the
coupling at the central vertex.  Writing the edge functions as one vector
turns the graph into a matrix problem with ``Q = diag(q_j)`` and

* delta:        ``T = J/m`` (rank 1), ``H = (beta/m) T``;
* delta-prime:  ``T = I - J/m`` (rank m-1), ``H = 0`` (only ``beta = 0``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import AsymptoticConstants, SelfAdjointProblem, asymptotic_constants, canonicalize
from .potentials import PotentialSpec, diagonal_potential
from .propagator import IntegratorConfig
from .spectrum import EigenvalueTable, RemainderDiagnostics, locate_spectrum, remainders

COUPLINGS = ("delta", "deltaPrime")
ROUTE_TOL = 1e-10
CONSISTENCY_TOL = 1e-8


class UnsupportedGraphError(ValueError):
    pass


class InternalConsistencyError(AssertionError):
    pass


@dataclass
class StarGraphSpec:
    edges: list[PotentialSpec]
    beta: float = 0.0
    coupling: str = "delta"

    def __post_init__(self):
        if len(self.edges) < 2:
            raise ValueError("a star graph needs at least two edges")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"unknown coupling {self.coupling!r}; expected one of {COUPLINGS}")
        for j, q in enumerate(self.edges):
            if q.m != 1:
                raise ValueError(f"edge {j} potential is not scalar")
            if np.max(np.abs(np.imag(q(np.linspace(0, np.pi, 33))))) > 1e-14:
                raise ValueError(f"edge {j} potential is not real-valued")
        if self.coupling == "deltaPrime" and self.beta != 0:
            raise UnsupportedGraphError("delta-prime coupling is only supported with beta = 0")

    @property
    def m(self) -> int:
        return len(self.edges)

    def edge_means(self) -> np.ndarray:
        return np.array([q.mean_matrix()[0, 0].real for q in self.edges])


def ones_projector(m: int) -> np.ndarray:
    return np.full((m, m), 1.0 / m, dtype=complex)


def star_basis(m: int) -> np.ndarray:
    """Householder reflector whose first column is the constant vector 1/sqrt(m)."""
    u = np.full(m, 1.0 / np.sqrt(m))
    v = np.zeros(m)
    v[0] = 1.0
    v -= u
    B = np.eye(m) - 2.0 * np.outer(v, v) / (v @ v)
    return B.astype(complex)


def graph_basis(g: StarGraphSpec) -> np.ndarray:
    """Canonical basis for the graph problem: the range of T first."""
    B = star_basis(g.m)
    if g.coupling == "delta":
        return B
    return np.concatenate([B[:, 1:], B[:, :1]], axis=1)


def to_matrix_problem(g: StarGraphSpec) -> SelfAdjointProblem:
    m = g.m
    Tt = ones_projector(m)
    Q = diagonal_potential(g.edges)
    if g.coupling == "delta":
        return SelfAdjointProblem(Tt, (g.beta / m) * Tt, Q)
    return SelfAdjointProblem(np.eye(m) - Tt, np.zeros((m, m)), Q)


def derivative_roots(w) -> np.ndarray:
    """Roots of d/dz prod_j (z - w_j), ascending, with multiplicity.

    A value repeated r times contributes a root of multiplicity r - 1; the
    remaining roots are the zeros of sum_i r_i / (z - u_i), one strictly
    inside each gap between consecutive distinct values u_i.
    """
    w = np.sort(np.asarray(w, dtype=float))
    u, r = np.unique(w, return_counts=True)
    roots = [x for x, c in zip(u, r) for _ in range(c - 1)]
    for i in range(u.size - 1):
        a, b = u[i], u[i + 1]

        def h(z, a=a, b=b):
            # sum r_l / (z - u_l) times (z - a)(b - z), continuous on [a, b]
            val = r[i] * (b - z) - r[i + 1] * (z - a)
            others = np.delete(np.arange(u.size), [i, i + 1])
            if others.size:
                val += (z - a) * (b - z) * np.sum(r[others] / (z - u[others]))
            return val

        roots.append(brentq(h, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    return np.sort(np.array(roots, dtype=float))


@dataclass
class GraphPrediction:
    coupling: str
    edge_means: np.ndarray
    single: float
    interior: np.ndarray

    @property
    def z_half(self) -> np.ndarray:
        """Predicted z's of the half-integer family, ascending."""
        return np.array([self.single]) if self.coupling == "delta" else self.interior

    @property
    def z_int(self) -> np.ndarray:
        return self.interior if self.coupling == "delta" else np.array([self.single])


def graph_constants(g: StarGraphSpec) -> GraphPrediction:
    w = g.edge_means()
    single = float(w.mean())
    if g.coupling == "delta":
        single -= g.beta / g.m
    return GraphPrediction(g.coupling, w, single, derivative_roots(w))


@dataclass
class GraphReport:
    prediction: GraphPrediction
    constants: AsymptoticConstants
    route_deviation: float
    remainders: RemainderDiagnostics
    remainders_alt: RemainderDiagnostics | None
    table: EigenvalueTable
    weights: object = None
    deviations: object = None
    limit_deviation: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.constants.p


def verify_graph_theorems(g: StarGraphSpec, N: int, cfg: IntegratorConfig | None = None,
                          with_weights: bool = True, basis: np.ndarray | None = None) -> GraphReport:
    """Cross-check the graph predictions against the matrix-problem machinery."""
    from .weights import compute_weight_sums, weight_asymptotics_check

    spec = to_matrix_problem(g)
    canon = canonicalize(spec, graph_basis(g) if basis is None else basis)
    consts = asymptotic_constants(canon)
    pred = graph_constants(g)
    dev = max(float(np.max(np.abs(pred.z_half - consts.z_half))),
              float(np.max(np.abs(pred.z_int - consts.z_int))))
    if dev > CONSISTENCY_TOL:
        raise InternalConsistencyError(f"graph constants and matrix constants differ by {dev:.3e}")
    table = locate_spectrum(spec, N, cfg, consts)
    rem = remainders(table, consts)
    rem_alt = remainders(table, consts, half_denominator="n") if g.coupling == "delta" else None
    report = GraphReport(pred, consts, dev, rem, rem_alt, table)
    if with_weights:
        sums = compute_weight_sums(spec, table, consts, cfg=cfg)
        report.weights = sums
        report.deviations = weight_asymptotics_check(sums, consts)
        Tt = ones_projector(g.m)
        # the single-member family scales to J/m in original coordinates
        fam = sums.bandI if g.coupling == "delta" else sums.bandII
        base = (lambda n: n - 0.5) if g.coupling == "delta" else (lambda n: float(n))
        report.limit_deviation = {n: float(np.linalg.norm(np.pi / (2 * base(n) ** 2) * fam[n] - Tt, 2))
                                  for n in sums.bands}
    return report
