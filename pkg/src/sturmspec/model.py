"""Problem definition, validation, canonical block form and asymptotic constants.

A problem is the triple ``(Q, T, H)`` for

    -Y'' + Q(x) Y = lambda Y,   Y(0) = 0,   T (Y'(pi) - H Y(pi)) - (I - T) Y(pi) = 0

with ``T`` an orthogonal projector of rank ``p`` and ``H = T H T`` Hermitian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .potentials import HERMITIAN_TOL, PotentialSpec, hermitian_defect

CANONICAL_TOL = 1e-10


class InvalidProblemError(ValueError):
    """Raised when a problem violates a structural hypothesis."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True, eq=False)
class SelfAdjointProblem:
    T: np.ndarray
    H: np.ndarray
    Q: PotentialSpec

    def __post_init__(self):
        for name in ("T", "H"):
            a = np.array(getattr(self, name), dtype=complex)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def m(self) -> int:
        return self.T.shape[0]

    @property
    def p(self) -> int:
        return int(round(float(np.trace(self.T).real)))

    @property
    def Tperp(self) -> np.ndarray:
        return np.eye(self.m) - self.T

    def is_block_form(self, tol: float = CANONICAL_TOL) -> bool:
        return bool(np.max(np.abs(self.T - block_projector(self.m, self.p))) <= tol)


def block_projector(m: int, p: int) -> np.ndarray:
    T = np.zeros((m, m), dtype=complex)
    T[:p, :p] = np.eye(p)
    return T


@dataclass
class Check:
    name: str
    passed: bool
    deviation: float
    tolerance: float


@dataclass
class ValidationReport:
    checks: list[Check]
    m: int
    p: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def raise_for_failure(self):
        bad = self.failures()
        if bad:
            c = bad[0]
            raise InvalidProblemError(
                f"invariant {c.name} violated: deviation {c.deviation:.3e} > {c.tolerance:.1e}",
                field=c.name.split(" ")[0],
            )


def validate_problem(spec: SelfAdjointProblem, tol: float = HERMITIAN_TOL) -> ValidationReport:
    """Check the structural hypotheses of the problem.

    Dimension mismatches and a rank outside ``[1, m-1]`` raise
    :class:`InvalidProblemError`; the remaining invariants are reported.
    """
    T, H, Q = spec.T, spec.H, spec.Q
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise InvalidProblemError(f"T must be square, got shape {T.shape}", field="T")
    m = T.shape[0]
    if m < 2:
        raise InvalidProblemError("dimension m must be at least 2", field="T")
    if H.shape != (m, m):
        raise InvalidProblemError(f"H has shape {H.shape}, expected {(m, m)}", field="H")
    if Q.m != m:
        raise InvalidProblemError(f"Q has dimension {Q.m}, expected {m}", field="Q")
    p = spec.p
    if not 1 <= p <= m - 1:
        raise InvalidProblemError(f"rank p = {p} outside [1, {m - 1}]", field="T")

    def check(name, dev):
        return Check(name, dev <= tol, dev, tol)

    checks = [
        check("T hermitian", hermitian_defect(T)),
        check("T idempotent", float(np.max(np.abs(T @ T - T)))),
        check("T trace integral", abs(float(np.trace(T).real) - p)),
        check("H hermitian", hermitian_defect(H)),
        check("H = THT", float(np.max(np.abs(H - T @ H @ T)))),
        check("Q hermitian", Q.hermitian_defect()),
    ]
    return ValidationReport(checks, m, p)


def require_valid(spec: SelfAdjointProblem) -> ValidationReport:
    report = validate_problem(spec)
    report.raise_for_failure()
    return report


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Make the largest-modulus entry of every column real positive."""
    vecs = np.array(vecs, dtype=complex)
    idx = np.argmax(np.abs(vecs) - 1e-12 * np.arange(vecs.shape[0])[:, None], axis=0)
    piv = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(piv) / piv)[None, :]


def sorted_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition, ascending, with the pinned phase convention."""
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    return w, _fix_phases(v)


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    """``U`` has orthonormal columns with ``U^dagger T U = diag(I_p, 0)``."""

    U: np.ndarray
    problem: SelfAdjointProblem
    original: SelfAdjointProblem

    @property
    def h(self) -> np.ndarray:
        p = self.problem.p
        return self.problem.H[:p, :p]

    @property
    def m(self) -> int:
        return self.problem.m

    @property
    def p(self) -> int:
        return self.problem.p

    def to_original(self, a: np.ndarray) -> np.ndarray:
        """Map a matrix from canonical coordinates back: ``U a U^dagger``."""
        return self.U @ a @ self.U.conj().T

    def to_canonical(self, a: np.ndarray) -> np.ndarray:
        return self.U.conj().T @ a @ self.U


def canonicalize(spec: SelfAdjointProblem, basis: np.ndarray | None = None) -> CanonicalForm:
    """Rotate the problem so that ``T = diag(I_p, 0)`` and ``H = diag(h, 0)``.

    ``basis`` optionally supplies the unitary (columns: range of T first,
    then its kernel); otherwise it is taken from an eigendecomposition of T
    with the fixed phase convention.
    """
    T = spec.T
    if hermitian_defect(T) > HERMITIAN_TOL or np.max(np.abs(T @ T - T)) > HERMITIAN_TOL:
        dev = max(hermitian_defect(T), float(np.max(np.abs(T @ T - T))))
        raise InvalidProblemError(f"T is not an orthogonal projector (deviation {dev:.3e})", field="T")
    m, p = spec.m, spec.p
    if basis is not None:
        U = np.asarray(basis, dtype=complex)
    elif spec.is_block_form():
        U = np.eye(m, dtype=complex)
    else:
        w, v = sorted_eigh(T)
        # eigenvalue 1 (range of T) first, then the kernel
        U = np.concatenate([v[:, m - p:], v[:, : m - p]], axis=1)
    if np.max(np.abs(U.conj().T @ U - np.eye(m))) > 1e-12:
        raise InvalidProblemError("supplied basis is not unitary", field="U")
    Tc = U.conj().T @ T @ U
    if np.max(np.abs(Tc - block_projector(m, p))) > CANONICAL_TOL:
        raise InvalidProblemError("basis does not bring T to block form", field="U")
    Hc = U.conj().T @ spec.H @ U
    Tc = block_projector(m, p)
    Hc_clean = np.zeros_like(Hc)
    Hc_clean[:p, :p] = 0.5 * (Hc[:p, :p] + Hc[:p, :p].conj().T)
    Qc = spec.Q if np.array_equal(U, np.eye(m)) else spec.Q.transformed(U)
    return CanonicalForm(U, SelfAdjointProblem(Tc, Hc_clean, Qc), spec)


def as_canonical(obj) -> CanonicalForm:
    if isinstance(obj, CanonicalForm):
        return obj
    return canonicalize(obj)


@dataclass
class OmegaBlocks:
    omega: np.ndarray
    p: int

    @property
    def omega11(self):
        return self.omega[: self.p, : self.p]

    @property
    def omega12(self):
        return self.omega[: self.p, self.p:]

    @property
    def omega21(self):
        return self.omega[self.p:, : self.p]

    @property
    def omega22(self):
        return self.omega[self.p:, self.p:]


def mean_matrix(spec) -> OmegaBlocks:
    """omega = 1/2 int_0^pi Q dx in canonical coordinates, split by p."""
    canon = as_canonical(spec)
    return OmegaBlocks(canon.problem.Q.mean_matrix(), canon.p)


@dataclass
class Cluster:
    """A group of equal asymptotic constants within one band type.

    ``ks`` are 1-based eigenvalue indices k; ``band`` is ``"I"`` for the
    half-integer family (k <= p) and ``"II"`` for the integer family.
    ``A`` is the limit matrix in canonical coordinates.
    """

    cid: int
    band: str
    ks: tuple[int, ...]
    z: float
    A: np.ndarray

    @property
    def size(self) -> int:
        return len(self.ks)

    @property
    def representative(self) -> int:
        return self.ks[0]


@dataclass
class AsymptoticConstants:
    canon: CanonicalForm
    omega: OmegaBlocks
    z_half: np.ndarray
    z_int: np.ndarray
    clusters: list[Cluster]
    calV: np.ndarray
    calU: np.ndarray
    cluster_tol: float

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.z_half, self.z_int])

    @property
    def E(self):
        return np.diag(self.z_half)

    @property
    def D(self):
        return np.diag(self.z_int)

    @property
    def m(self):
        return self.canon.m

    @property
    def p(self):
        return self.canon.p

    def cluster_of(self, k: int) -> Cluster:
        for c in self.clusters:
            if k in c.ks:
                return c
        raise KeyError(k)

    def A_original(self, cluster: Cluster) -> np.ndarray:
        return self.canon.to_original(cluster.A)

    def target_blocks(self) -> np.ndarray:
        """diag(omega11 - h, omega22) in canonical coordinates."""
        p, m = self.p, self.m
        out = np.zeros((m, m), dtype=complex)
        out[:p, :p] = self.omega.omega11 - self.canon.h
        out[p:, p:] = self.omega.omega22
        return out


def cluster_indices(values: np.ndarray, tol: float) -> list[list[int]]:
    """Chain-cluster sorted values: consecutive entries closer than tol share a group."""
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and v - values[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def asymptotic_constants(spec, omega: OmegaBlocks | None = None) -> AsymptoticConstants:
    """z-constants, clusters and limit matrices A^(s) of the weight sums."""
    canon = as_canonical(spec)
    if omega is None:
        omega = mean_matrix(canon)
    m, p = canon.m, canon.p
    half = omega.omega11 - canon.h
    for name, block in (("omega11 - h", half), ("omega22", omega.omega22)):
        if hermitian_defect(block) > 1e-9 * (1 + np.max(np.abs(block))):
            raise ValueError(f"{name} is not Hermitian")
    z_half, v_half = sorted_eigh(half)
    z_int, v_int = sorted_eigh(omega.omega22)
    calV = v_half.conj().T
    calU = v_int.conj().T
    zmax = float(np.max(np.abs(np.concatenate([z_half, z_int])))) if m else 0.0
    tol = 1e-8 * max(1.0, zmax)

    clusters: list[Cluster] = []
    for band, zs, vecs, offset in (("I", z_half, v_half, 0), ("II", z_int, v_int, p)):
        for grp in cluster_indices(zs, tol):
            A = np.zeros((m, m), dtype=complex)
            sub = vecs[:, grp]
            A[offset: offset + sub.shape[0], offset: offset + sub.shape[0]] = sub @ sub.conj().T
            ks = tuple(offset + g + 1 for g in grp)
            clusters.append(Cluster(len(clusters), band, ks, float(np.mean(zs[grp])), A))

    consts = AsymptoticConstants(canon, omega, z_half, z_int, clusters, calV, calU, tol)
    recon = sum(c.z * c.A for c in clusters)
    dev = float(np.max(np.abs(recon - consts.target_blocks())))
    if dev > max(1e-9, 2 * tol):
        raise AssertionError(f"sum z_s A^(s) deviates from diag(omega11-h, omega22) by {dev:.3e}")
    return consts
