"""Boundary form, characteristic matrix/determinant and the Weyl matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SelfAdjointProblem
from .propagator import IntegratorConfig, PropagatorBatch, propagate_batch

NEAR_POLE_COND = 1e12


class NearPoleError(ArithmeticError):
    """The characteristic matrix is too ill-conditioned to solve for M."""

    def __init__(self, lam, cond):
        super().__init__(f"lambda = {lam} too close to an eigenvalue (cond(W) = {cond:.2e})")
        self.lam = lam
        self.cond = cond


@dataclass
class CharValue:
    lam: complex
    W: np.ndarray
    det: complex
    M: np.ndarray | None = None


def boundary_form(spec: SelfAdjointProblem, Ypi, Yppi) -> np.ndarray:
    """V(Y) = T (Y'(pi) - H Y(pi)) - T_perp Y(pi); batched over leading axes."""
    Ypi = np.asarray(Ypi)
    Yppi = np.asarray(Yppi)
    m = spec.m
    if Ypi.shape[-2:] != (m, m) or Yppi.shape != Ypi.shape:
        raise ValueError(f"boundary_form expects matching (..., {m}, {m}) arrays, "
                         f"got {Ypi.shape} and {Yppi.shape}")
    return spec.T @ (Yppi - spec.H @ Ypi) - spec.Tperp @ Ypi


def characteristic_batch(spec, lams, cfg: IntegratorConfig | None = None, steps: int | None = None,
                         batch: PropagatorBatch | None = None):
    """W(lam) and det W(lam) for an array of lambdas; also returns the propagator batch."""
    if batch is None:
        batch = propagate_batch(spec, lams, cfg, steps, with_c=False)
    W = boundary_form(spec, batch.S, batch.Sp)
    return W, np.linalg.det(W), batch


def characteristic(spec, lam, cfg: IntegratorConfig | None = None) -> CharValue:
    W, det, _ = characteristic_batch(spec, [lam], cfg)
    return CharValue(complex(lam), W[0], complex(det[0]))


def weyl_batch(spec, lams, cfg: IntegratorConfig | None = None, steps: int | None = None,
               batch: PropagatorBatch | None = None, check: bool = True):
    """Weyl matrices M = -W^{-1} V(C) for an array of lambdas.

    Returns ``(M, W, cond)``.  With ``check`` set, a condition number above
    :data:`NEAR_POLE_COND` raises :class:`NearPoleError`.
    """
    if batch is None:
        batch = propagate_batch(spec, lams, cfg, steps)
    W = boundary_form(spec, batch.S, batch.Sp)
    VC = boundary_form(spec, batch.C, batch.Cp)
    cond = np.linalg.cond(W)
    if check:
        bad = np.flatnonzero(~(cond <= NEAR_POLE_COND))
        if bad.size:
            i = bad[np.argmax(cond[bad])]
            raise NearPoleError(complex(batch.lam[i]), float(cond[i]))
    M = -np.linalg.solve(W, VC)
    return M, W, cond


def weyl(spec, lam, cfg: IntegratorConfig | None = None) -> CharValue:
    M, W, _ = weyl_batch(spec, [lam], cfg)
    return CharValue(complex(lam), W[0], complex(np.linalg.det(W[0])), M[0])
