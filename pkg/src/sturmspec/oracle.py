"""Independent reference computations: finite differences and residues by limits.

Both are deliberately simple and share no code with the shooting solver
beyond the problem definition (the residue limit evaluates the Weyl matrix,
but off the contour and with a different extrapolation).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig_banded

from .charfn import weyl_batch
from .model import CanonicalForm, SelfAdjointProblem, as_canonical
from .propagator import IntegratorConfig


class OracleRangeError(ValueError):
    """Requested eigenvalues lie beyond what the grid can resolve."""


@dataclass(frozen=True)
class FDConfig:
    grid_points: int = 3000

    def __post_init__(self):
        if self.grid_points < 200:
            raise ValueError("FDConfig.grid_points must be at least 200")

    @property
    def max_lambda(self) -> float:
        return (self.grid_points / 10.0) ** 2


def fd_matrix(canon: CanonicalForm, cfg: FDConfig = FDConfig()) -> np.ndarray:
    """Hermitian FD matrix in LAPACK lower banded storage.

    Unknowns are ordered by grid point x_i = i pi / N_g (i = 1..N_g) and
    then by component; at x = pi only the first p (Robin) components are
    unknowns.  The Robin row uses a ghost point and is halved, then the
    Robin unknowns at pi are rescaled by sqrt(2) to restore symmetry.
    """
    prob = canon.problem
    m, p = prob.m, prob.p
    N = cfg.grid_points
    dx = np.pi / N
    x = dx * np.arange(1, N + 1)
    Q = prob.Q(x)
    Q = 0.5 * (Q + np.conj(np.swapaxes(Q, -1, -2)))
    h = canon.h
    size = (N - 1) * m + p
    band = np.zeros((m + 1, size), dtype=complex)
    inv = 1.0 / dx ** 2
    # interior points: -y'' + Q y
    for i in range(N - 1):
        o = i * m
        for a in range(m):
            band[0, o + a] = 2 * inv + Q[i, a, a]
            for b in range(a + 1, m):
                band[b - a, o + a] = Q[i, b, a]
            if i + 1 < N - 1 or a < p:
                band[m, o + a] = -inv
    # Robin block at pi: rows scaled by 2 after halving, coupling by -sqrt(2)/dx^2
    o = (N - 1) * m
    last = 2 * (inv * np.eye(p) - h / dx + 0.5 * Q[N - 1, :p, :p])
    for a in range(p):
        band[0, o + a] = last[a, a].real
        for b in range(a + 1, p):
            band[b - a, o + a] = last[b, a]
    for a in range(p):
        band[m, o - m + a] = -np.sqrt(2.0) * inv
    return band


def fd_spectrum(spec, count: int, cfg: FDConfig = FDConfig()) -> np.ndarray:
    """Lowest ``count`` eigenvalues of the FD discretisation, ascending."""
    canon = as_canonical(spec)
    band = fd_matrix(canon, cfg)
    if count < 1 or count > band.shape[1]:
        raise ValueError(f"count must be in [1, {band.shape[1]}]")
    w = eig_banded(band, lower=True, eigvals_only=True, select="i", select_range=(0, count - 1))
    if w[-1] > cfg.max_lambda:
        raise OracleRangeError(f"eigenvalue {w[-1]:.4g} exceeds the resolvable range "
                               f"(N_g/10)^2 = {cfg.max_lambda:.4g}")
    return w


@dataclass
class LimitResult:
    value: np.ndarray
    error: float
    conclusive: bool


def residue_by_limit(spec: SelfAdjointProblem, lam_star: float, delta: float | None = None,
                     direction: str = "both", cfg: IntegratorConfig | None = None,
                     rtol: float = 1e-4) -> LimitResult:
    """-lim (lambda - lambda*) M(lambda) from real offsets delta, delta/2, delta/4.

    ``direction`` is ``"+"``, ``"-"`` or ``"both"`` (average of the two sides,
    which cancels odd powers of the offset).  The estimate is flagged
    inconclusive when it disagrees with the smallest-offset value by more
    than ``rtol`` (relative), as happens for higher-order poles.
    """
    lam_star = float(lam_star)
    if delta is None:
        delta = 1e-4 * max(1.0, abs(lam_star))
    signs = {"+": (1.0,), "-": (-1.0,), "both": (1.0, -1.0)}[direction]
    offs = delta * np.array([1.0, 0.5, 0.25])
    lams = np.array([lam_star + s * d for d in offs for s in signs])
    M, _, _ = weyl_batch(spec, lams, cfg, check=False)
    f = -(lams - lam_star)[:, None, None] * M
    f = f.reshape(3, len(signs), spec.m, spec.m).mean(axis=1)
    R = (f[0] - 6 * f[1] + 8 * f[2]) / 3
    R = 0.5 * (R + R.conj().T)
    nrm = np.linalg.norm(R, 2)
    err = float(np.linalg.norm(R - f[2], 2))
    ok = bool(np.all(np.isfinite(R)) and err <= rtol * max(nrm, 1e-300))
    return LimitResult(R, err, ok)
