"""Matrix potentials Q(x) on [0, pi].

Four closed representations are supported so that the mean matrix and the
oscillatory integrals entering the large-rho expansions can be computed
exactly (or with controlled quadrature):

* :class:`Zero`
* :class:`ConstantHermitian`
* :class:`FourierSeries` -- ``Q(x) = sum_k A_k cos(k x)``
* :class:`SampledGrid` -- piecewise-linear interpolation of samples

All of them evaluate to arrays of shape ``(len(x), m, m)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12

# 16-point Gauss-Legendre rule on [-1, 1], shared by all panel quadratures.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def hermitian_defect(a: np.ndarray) -> float:
    """Largest entrywise deviation of ``a`` (or a stack of matrices) from Hermitian."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2)))))


def _as_matrix_stack(coeffs, name: str) -> np.ndarray:
    arr = np.asarray(coeffs, dtype=complex)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"{name}: expected a stack of square matrices, got shape {arr.shape}")
    return arr


def _closed_cos_integral(rho, c):
    """int_0^pi cos(rho*pi + c*t) dt, stable for c -> 0."""
    return np.pi * np.cos(rho * np.pi + c * np.pi / 2) * np.sinc(c / 2)


def _closed_sin_integral(rho, c):
    """int_0^pi sin(rho*pi + c*t) dt, stable for c -> 0."""
    return np.pi * np.sin(rho * np.pi + c * np.pi / 2) * np.sinc(c / 2)


class PotentialSpec:
    """Common interface of the potential variants."""

    m: int

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def mean_matrix(self) -> np.ndarray:
        """omega = 1/2 * int_0^pi Q(x) dx."""
        raise NotImplementedError

    def transformed(self, U: np.ndarray) -> "PotentialSpec":
        """The potential ``U^dagger Q(x) U`` in the same representation."""
        raise NotImplementedError

    def sup_norm(self) -> float:
        """An upper bound for sup_x ||Q(x)|| (spectral norm)."""
        raise NotImplementedError

    def hermitian_defect(self) -> float:
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        """Points in (0, pi) where Q may fail to be smooth."""
        return np.empty(0)

    @property
    def is_constant(self) -> bool:
        return False

    def oscillatory_integrals(self, rho) -> tuple[np.ndarray, np.ndarray]:
        """Return ``1/2 int_0^pi cos(rho(pi-2t)) Q(t) dt`` and the sine analogue."""
        return oscillatory_quadrature(self, rho)

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(PotentialSpec):
    m: int

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.zeros((x.size, self.m, self.m), dtype=complex)

    def mean_matrix(self):
        return np.zeros((self.m, self.m), dtype=complex)

    def transformed(self, U):
        return self

    def sup_norm(self):
        return 0.0

    def hermitian_defect(self):
        return 0.0

    @property
    def is_constant(self):
        return True

    def oscillatory_integrals(self, rho):
        z = np.zeros((self.m, self.m), dtype=complex)
        return z, z.copy()

    def to_json(self):
        return {"kind": "zero", "m": self.m}


@dataclass(frozen=True, eq=False)
class ConstantHermitian(PotentialSpec):
    matrix: np.ndarray

    def __post_init__(self):
        a = np.array(self.matrix, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"ConstantHermitian: matrix must be square, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def m(self):
        return self.matrix.shape[0]

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.broadcast_to(self.matrix, (x.size, self.m, self.m)).copy()

    def mean_matrix(self):
        return 0.5 * np.pi * self.matrix

    def transformed(self, U):
        return ConstantHermitian(U.conj().T @ self.matrix @ U)

    def sup_norm(self):
        return float(np.linalg.norm(self.matrix, 2))

    def hermitian_defect(self):
        return hermitian_defect(self.matrix)

    @property
    def is_constant(self):
        return True

    def oscillatory_integrals(self, rho):
        return FourierSeries([self.matrix]).oscillatory_integrals(rho)

    def to_json(self):
        return {"kind": "constant", "matrix": matrix_to_json(self.matrix)}


@dataclass(frozen=True, eq=False)
class FourierSeries(PotentialSpec):
    """Q(x) = sum_{k=0}^{K} coeffs[k] * cos(k x)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _as_matrix_stack(self.coeffs, "FourierSeries").copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def m(self):
        return self.coeffs.shape[1]

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = np.arange(self.coeffs.shape[0])
        return np.einsum("tk,kij->tij", np.cos(np.outer(x, k)), self.coeffs)

    def mean_matrix(self):
        # int_0^pi cos(kx) dx vanishes for k >= 1
        return 0.5 * np.pi * self.coeffs[0]

    def transformed(self, U):
        return FourierSeries(np.einsum("ji,kjl,lm->kim", U.conj(), self.coeffs, U))

    def sup_norm(self):
        return float(sum(np.linalg.norm(a, 2) for a in self.coeffs))

    def hermitian_defect(self):
        return hermitian_defect(self.coeffs)

    @property
    def is_constant(self):
        return not np.any(self.coeffs[1:])

    def oscillatory_integrals(self, rho):
        # cos(rho(pi-2t)) cos(kt) = [cos(rho pi + (k-2rho)t) + cos(rho pi - (k+2rho)t)] / 2
        rho = complex(rho)
        k = np.arange(self.coeffs.shape[0])
        cpl = _closed_cos_integral(rho, k - 2 * rho) + _closed_cos_integral(rho, -(k + 2 * rho))
        spl = _closed_sin_integral(rho, k - 2 * rho) + _closed_sin_integral(rho, -(k + 2 * rho))
        ic = 0.25 * np.einsum("k,kij->ij", cpl, self.coeffs)
        is_ = 0.25 * np.einsum("k,kij->ij", spl, self.coeffs)
        return ic, is_

    def to_json(self):
        return {"kind": "fourier", "coeffs": [matrix_to_json(a) for a in self.coeffs]}


@dataclass(frozen=True, eq=False)
class SampledGrid(PotentialSpec):
    """Piecewise-linear interpolation of Hermitian samples on a grid spanning [0, pi]."""

    x: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        s = _as_matrix_stack(self.samples, "SampledGrid").copy()
        if x.ndim != 1 or x.size < 2 or s.shape[0] != x.size:
            raise ValueError("SampledGrid: abscissae and samples must have matching length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("SampledGrid: abscissae must be strictly increasing")
        if abs(x[0]) > 1e-12 or abs(x[-1] - np.pi) > 1e-12:
            raise ValueError("SampledGrid: abscissae must span [0, pi]")
        x[0], x[-1] = 0.0, np.pi
        x.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "samples", s)

    @property
    def m(self):
        return self.samples.shape[1]

    def __call__(self, t):
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, np.pi)
        j = np.clip(np.searchsorted(self.x, t, side="right") - 1, 0, self.x.size - 2)
        w = (t - self.x[j]) / (self.x[j + 1] - self.x[j])
        return (1 - w)[:, None, None] * self.samples[j] + w[:, None, None] * self.samples[j + 1]

    def mean_matrix(self):
        # composite trapezoid; exact for piecewise-linear data
        dx = np.diff(self.x)
        return 0.25 * np.einsum("j,jab->ab", dx, self.samples[1:] + self.samples[:-1])

    def transformed(self, U):
        return SampledGrid(self.x, np.einsum("ji,kjl,lm->kim", U.conj(), self.samples, U))

    def sup_norm(self):
        return float(max(np.linalg.norm(a, 2) for a in self.samples))

    def hermitian_defect(self):
        return hermitian_defect(self.samples)

    def breakpoints(self):
        return self.x[1:-1].copy()

    def to_json(self):
        return {
            "kind": "sampled",
            "x": self.x.tolist(),
            "samples": [matrix_to_json(a) for a in self.samples],
        }


def oscillatory_quadrature(Q: PotentialSpec, rho, panels: int | None = None):
    """Composite Gauss-Legendre evaluation of the two oscillatory integrals.

    Panels are aligned with the breakpoints of ``Q`` and their number grows
    with ``|rho|`` so that each panel sees at most about half a period.
    """
    rho = complex(rho)
    if panels is None:
        panels = max(8, int(np.ceil(2 * abs(rho))) + 8)
    edges = np.union1d(np.linspace(0.0, np.pi, panels + 1), Q.breakpoints())
    a, b = edges[:-1], edges[1:]
    t = (0.5 * (b - a))[:, None] * _GL_X[None, :] + (0.5 * (a + b))[:, None]
    w = (0.5 * (b - a))[:, None] * _GL_W[None, :]
    t, w = t.ravel(), w.ravel()
    q = Q(t)
    arg = rho * (np.pi - 2 * t)
    ic = 0.5 * np.einsum("t,tij->ij", w * np.cos(arg), q)
    is_ = 0.5 * np.einsum("t,tij->ij", w * np.sin(arg), q)
    return ic, is_


def matrix_to_json(a) -> list:
    """Row-major nested list of ``[re, im]`` pairs."""
    a = np.asarray(a, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in a]


def matrix_from_json(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim == 2:
        # plain real matrix
        return arr.astype(complex)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError("matrix must be a row-major array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def potential_from_json(obj: dict, m: int | None = None) -> PotentialSpec:
    kind = obj.get("kind")
    if kind == "zero":
        return Zero(int(obj.get("m", m)))
    if kind == "constant":
        return ConstantHermitian(matrix_from_json(obj["matrix"]))
    if kind == "fourier":
        return FourierSeries(np.array([matrix_from_json(a) for a in obj["coeffs"]]))
    if kind == "sampled":
        return SampledGrid(obj["x"], np.array([matrix_from_json(a) for a in obj["samples"]]))
    raise ValueError(f"unknown potential kind {kind!r}")


def diagonal_potential(edges: list[PotentialSpec]) -> PotentialSpec:
    """Assemble diag(q_1, ..., q_m) from scalar (1x1) potentials.

    Zero, constant and Fourier edges combine into a :class:`FourierSeries`;
    sampled edges combine on the union grid (exact for piecewise-linear data).
    """
    m = len(edges)
    if any(e.m != 1 for e in edges):
        raise ValueError("edge potentials must be scalar (1x1)")
    if all(isinstance(e, (Zero, ConstantHermitian)) for e in edges):
        diag = [0.0 if isinstance(e, Zero) else e.matrix[0, 0] for e in edges]
        if not any(diag):
            return Zero(m)
        return ConstantHermitian(np.diag(diag))
    if any(isinstance(e, SampledGrid) for e in edges):
        if not all(isinstance(e, (SampledGrid, Zero, ConstantHermitian)) for e in edges):
            raise ValueError("cannot combine sampled and Fourier edge potentials")
        grid = np.unique(np.concatenate([e.x for e in edges if isinstance(e, SampledGrid)]))
        samples = np.zeros((grid.size, m, m), dtype=complex)
        for j, e in enumerate(edges):
            samples[:, j, j] = e(grid)[:, 0, 0]
        return SampledGrid(grid, samples)
    K = max(e.coeffs.shape[0] if isinstance(e, FourierSeries) else 1 for e in edges)
    coeffs = np.zeros((K, m, m), dtype=complex)
    for j, e in enumerate(edges):
        if isinstance(e, FourierSeries):
            coeffs[: e.coeffs.shape[0], j, j] = e.coeffs[:, 0, 0]
        elif isinstance(e, ConstantHermitian):
            coeffs[0, j, j] = e.matrix[0, 0]
    return FourierSeries(coeffs)
