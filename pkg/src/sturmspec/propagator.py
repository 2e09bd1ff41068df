"""Matrix sine/cosine-type solutions S(x, lam), C(x, lam) at x = pi.

The first-order system for ``(Y, Y')`` is advanced with exponential
integrators whose factors have the structure ``exp(s [[0, I], [G - lam, 0]])``
with ``G`` Hermitian and independent of ``lam``.  Diagonalising ``G`` once
per factor makes every exponential an exact scalar cosh/sinh evaluation, so a
whole batch of spectral parameters is propagated with scalar trig
evaluations and small matrix products in a compiled kernel.

Methods:

``"cf4"``
    fourth-order commutator-free Magnus method (two exponentials per step,
    potential sampled at the Gauss points).
``"midpoint"``
    second-order exponential midpoint rule.

Both are exact for constant potentials.
"""
from __future__ import annotations

import cmath
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import SelfAdjointProblem
from .potentials import PotentialSpec

log = logging.getLogger(__name__)

_SQ3 = np.sqrt(3.0)
_CF4_NODES = (0.5 - _SQ3 / 6, 0.5 + _SQ3 / 6)
_CF4_WEIGHTS = (0.25 + _SQ3 / 6, 0.25 - _SQ3 / 6)
METHOD_ORDER = {"cf4": 4, "midpoint": 2}
MAX_RHO = 200.0
_MIN_CHUNK = 64

_workers = os.cpu_count() or 1


def set_workers(k: int | None) -> int:
    """Threads used to propagate large batches (``None`` = available CPUs)."""
    global _workers
    _workers = max(1, int(k)) if k else (os.cpu_count() or 1)
    return _workers


class IntegrationError(RuntimeError):
    def __init__(self, message: str, x: float):
        super().__init__(f"{message} (at x = {x:.6g})")
        self.x = x


@dataclass(frozen=True)
class IntegratorConfig:
    steps: int = 128
    method: str = "cf4"
    tolerance: float = 1e-10
    adaptive: bool = True
    max_steps: int = 1 << 13

    def __post_init__(self):
        if self.steps < 16:
            raise ValueError("IntegratorConfig.steps must be >= 16")
        if self.tolerance <= 0:
            raise ValueError("IntegratorConfig.tolerance must be positive")
        if self.method not in METHOD_ORDER:
            raise ValueError(f"unknown integration method {self.method!r}")

    def with_steps(self, steps: int) -> "IntegratorConfig":
        return IntegratorConfig(steps, self.method, self.tolerance, self.adaptive, self.max_steps)


@dataclass
class PropagatorValue:
    lam: complex
    rho: complex
    S: np.ndarray
    Sp: np.ndarray
    C: np.ndarray
    Cp: np.ndarray

    @property
    def tau(self) -> float:
        return float(np.imag(self.rho))

    def wronskian_defect(self) -> float:
        return wronskian_defect(self.S, self.Sp, self.C, self.Cp)


@dataclass
class PropagatorBatch:
    """Values for a batch of spectral parameters; arrays have shape (L, m, m)."""

    lam: np.ndarray
    S: np.ndarray
    Sp: np.ndarray
    C: np.ndarray
    Cp: np.ndarray
    steps: int

    def __len__(self):
        return self.lam.size

    def __getitem__(self, i) -> PropagatorValue:
        lam = complex(self.lam[i])
        return PropagatorValue(lam, principal_rho(lam), self.S[i], self.Sp[i], self.C[i], self.Cp[i])


def principal_rho(lam):
    return np.sqrt(np.asarray(lam, dtype=complex))


def wronskian_defect(S, Sp, C, Cp) -> float:
    """|| C^dagger S' - C'^dagger S - I || (constant in x for real lambda)."""
    m = S.shape[-1]
    w = np.conj(np.swapaxes(C, -1, -2)) @ Sp - np.conj(np.swapaxes(Cp, -1, -2)) @ S
    return float(np.max(np.linalg.norm(w - np.eye(m), 2, axis=(-2, -1))))


def _mesh(Q: PotentialSpec, steps: int) -> np.ndarray:
    """Step nodes on [0, pi], aligned with the breakpoints of sampled potentials."""
    bps = Q.breakpoints()
    if bps.size == 0:
        return np.linspace(0.0, np.pi, steps + 1)
    edges = np.concatenate([[0.0], bps, [np.pi]])
    lengths = np.diff(edges)
    counts = np.maximum(1, np.round(steps * lengths / np.pi).astype(int))
    pieces = [np.linspace(a, b, c + 1)[:-1] for a, b, c in zip(edges[:-1], edges[1:], counts)]
    return np.concatenate(pieces + [[np.pi]])


def _factors(Q: PotentialSpec, steps: int, method: str):
    """Hermitian generators G_i and lengths s_i of the exponential factors, in order."""
    x = _mesh(Q, steps)
    t0, h = x[:-1], np.diff(x)
    if method == "midpoint" or Q.is_constant:
        G = Q(t0 + 0.5 * h)
        s = h
    else:
        q1 = Q(t0 + _CF4_NODES[0] * h)
        q2 = Q(t0 + _CF4_NODES[1] * h)
        a1, a2 = _CF4_WEIGHTS
        Ga = 2 * (a1 * q1 + a2 * q2)
        Gb = 2 * (a2 * q1 + a1 * q2)
        G = np.empty((2 * len(h),) + Ga.shape[1:], dtype=complex)
        G[0::2], G[1::2] = Ga, Gb
        s = np.repeat(0.5 * h, 2)
    # merging equal neighbours is exact: exp(aX) exp(bX) = exp((a+b)X)
    keep = [0]
    lengths = [s[0]]
    for i in range(1, len(s)):
        if np.array_equal(G[i], G[keep[-1]]):
            lengths[-1] += s[i]
        else:
            keep.append(i)
            lengths.append(s[i])
    G = G[keep]
    G = 0.5 * (G + np.conj(np.swapaxes(G, -1, -2)))
    return G, np.asarray(lengths)


@njit(cache=True, nogil=True)
def _run_real(mu, R, s, lam, y, yp):
    """Advance (y, y') through all factors for real lambdas (in place)."""
    L, m, c = y.shape
    nfac = s.size
    ch = np.empty(m)
    shk = np.empty(m)
    ksh = np.empty(m)
    ty = np.empty((m, c), dtype=y.dtype)
    typ = np.empty((m, c), dtype=y.dtype)
    for l in range(L):
        for i in range(nfac):
            si = s[i]
            for j in range(m):
                b = mu[i, j] - lam[l]
                if b < 0.0:
                    w = math.sqrt(-b)
                    sn = math.sin(si * w)
                    ch[j] = math.cos(si * w)
                    shk[j] = sn / w
                    ksh[j] = -w * sn
                else:
                    w = math.sqrt(b)
                    a = si * w
                    if a < 1e-8:
                        ch[j] = 1.0
                        shk[j] = si
                        ksh[j] = b * si
                    else:
                        sh = math.sinh(a)
                        ch[j] = math.cosh(a)
                        shk[j] = sh / w
                        ksh[j] = w * sh
            for j in range(m):
                for q in range(c):
                    a0 = y[l, j, q]
                    a1 = yp[l, j, q]
                    ty[j, q] = ch[j] * a0 + shk[j] * a1
                    typ[j, q] = ksh[j] * a0 + ch[j] * a1
            if i + 1 < nfac:
                for j in range(m):
                    for q in range(c):
                        acc = 0.0 * ty[0, 0]
                        accp = 0.0 * ty[0, 0]
                        for r in range(m):
                            acc += R[i, j, r] * ty[r, q]
                            accp += R[i, j, r] * typ[r, q]
                        y[l, j, q] = acc
                        yp[l, j, q] = accp
            else:
                y[l] = ty
                yp[l] = typ


@njit(cache=True, nogil=True)
def _run_complex(mu, R, s, lam, y, yp):
    """Advance (y, y') through all factors for complex lambdas (in place)."""
    L, m, c = y.shape
    nfac = s.size
    ch = np.empty(m, dtype=np.complex128)
    shk = np.empty(m, dtype=np.complex128)
    ksh = np.empty(m, dtype=np.complex128)
    ty = np.empty((m, c), dtype=np.complex128)
    typ = np.empty((m, c), dtype=np.complex128)
    for l in range(L):
        for i in range(nfac):
            si = s[i]
            for j in range(m):
                b = mu[i, j] - lam[l]
                kap = cmath.sqrt(b)
                a = si * kap
                if abs(a) < 1e-8:
                    ch[j] = 1.0
                    shk[j] = si
                    ksh[j] = b * si
                else:
                    sh = cmath.sinh(a)
                    ch[j] = cmath.cosh(a)
                    shk[j] = sh / kap
                    ksh[j] = kap * sh
            for j in range(m):
                for q in range(c):
                    a0 = y[l, j, q]
                    a1 = yp[l, j, q]
                    ty[j, q] = ch[j] * a0 + shk[j] * a1
                    typ[j, q] = ksh[j] * a0 + ch[j] * a1
            if i + 1 < nfac:
                for j in range(m):
                    for q in range(c):
                        acc = 0j
                        accp = 0j
                        for r in range(m):
                            acc += R[i, j, r] * ty[r, q]
                            accp += R[i, j, r] * typ[r, q]
                        y[l, j, q] = acc
                        yp[l, j, q] = accp
            else:
                y[l] = ty
                yp[l] = typ


_FACTOR_CACHE: dict = {}


def _factor_data(Q: PotentialSpec, steps: int, method: str):
    """Eigen-data of the factors (cached per potential object)."""
    key = (id(Q), steps, method)
    hit = _FACTOR_CACHE.get(key)
    if hit is not None and hit[0] is Q:
        return hit[1]
    G, s = _factors(Q, steps, method)
    mu, P = np.linalg.eigh(G)
    Ph = np.conj(np.swapaxes(P, -1, -2))
    if not np.any(P.imag):
        P, Ph = P.real.copy(), Ph.real.copy()
    R = np.ascontiguousarray(Ph[1:] @ P[:-1]) if len(s) > 1 else np.zeros((0,) + P.shape[1:], P.dtype)
    data = (np.ascontiguousarray(mu), P, Ph, R, np.ascontiguousarray(s))
    if len(_FACTOR_CACHE) > 32:
        _FACTOR_CACHE.clear()
    _FACTOR_CACHE[key] = (Q, data)
    return data


def _propagate_arrays(Q: PotentialSpec, lam: np.ndarray, steps: int, method: str, with_c: bool = True):
    """Returns (lam, S, S', C, C') at pi; C and C' are None unless ``with_c``."""
    lam = np.asarray(lam, dtype=complex).ravel()
    m = Q.m
    mu, P, Ph, R, s = _factor_data(Q, steps, method)
    c = 2 * m if with_c else m
    real = not np.any(lam.imag)
    dtype = P.dtype if real else np.complex128
    y = np.zeros((lam.size, m, c), dtype=dtype)
    yp = np.zeros((lam.size, m, c), dtype=dtype)
    yp[:, :, :m] = Ph[0]
    if with_c:
        y[:, :, m:] = Ph[0]
    if real:
        kernel, lam_in, R_in = _run_real, np.ascontiguousarray(lam.real), R
    else:
        kernel, lam_in, R_in = _run_complex, lam, R.astype(complex)
    nthreads = min(_workers, lam.size // _MIN_CHUNK)
    if nthreads > 1:
        bounds = np.linspace(0, lam.size, nthreads + 1).astype(int)
        with ThreadPoolExecutor(nthreads) as pool:
            list(pool.map(lambda ab: kernel(mu, R_in, s, lam_in[ab[0]:ab[1]], y[ab[0]:ab[1]], yp[ab[0]:ab[1]]),
                          zip(bounds[:-1], bounds[1:])))
    else:
        kernel(mu, R_in, s, lam_in, y, yp)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yp))):
        bad = ~np.isfinite(y).all(axis=(1, 2))
        raise IntegrationError(f"non-finite solution values for lambda = {lam[bad][0]}", np.pi)
    Y = (P[-1] @ y).astype(complex)
    Yp = (P[-1] @ yp).astype(complex)
    if with_c:
        return lam, Y[:, :, :m], Yp[:, :, :m], Y[:, :, m:], Yp[:, :, m:]
    return lam, Y, Yp, None, None


def _scaled_difference(a, b) -> float:
    """Max deviation between two (lam, S, Sp, C, Cp) tuples in natural scales."""
    lam = a[0]
    r = np.maximum(1.0, np.abs(principal_rho(lam)))
    grow = np.exp(np.abs(np.imag(principal_rho(lam))) * np.pi)
    weights = (r, 1.0, 1.0, 1.0 / r)
    err = 0.0
    for w, x, y in zip(weights, a[1:], b[1:]):
        if x is None:
            continue
        d = np.max(np.abs(x - y), axis=(-2, -1)) * w / grow
        err = max(err, float(np.max(d)))
    return err


def calibrate_steps(Q: PotentialSpec, probe_lams, cfg: IntegratorConfig) -> int:
    """Smallest step count (by doubling) whose step-doubling error estimate meets cfg.tolerance."""
    probe = np.atleast_1d(np.asarray(probe_lams, dtype=complex))
    if np.max(np.abs(principal_rho(probe))) > MAX_RHO:
        raise ValueError(f"|rho| > {MAX_RHO} is not supported")
    if Q.is_constant:
        return cfg.steps
    steps = cfg.steps
    coarse = _propagate_arrays(Q, probe, steps, cfg.method)
    while True:
        fine = _propagate_arrays(Q, probe, 2 * steps, cfg.method)
        err = _scaled_difference(coarse, fine)
        if err <= cfg.tolerance:
            return steps
        if 2 * steps > cfg.max_steps:
            log.warning("step doubling stopped at %d steps with error estimate %.2e", 2 * steps, err)
            return 2 * steps
        steps, coarse = 2 * steps, fine


def propagate_batch(spec: SelfAdjointProblem, lams, cfg: IntegratorConfig | None = None,
                    steps: int | None = None, with_c: bool = True) -> PropagatorBatch:
    """Propagate many spectral parameters with one common step count.

    If ``steps`` is not given and ``cfg.adaptive`` is set, the count is
    calibrated by step doubling on the batch members of largest and
    smallest modulus.  Without ``with_c`` only S and S' are computed.
    """
    cfg = cfg or IntegratorConfig()
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    if steps is None:
        if cfg.adaptive and lams.size:
            probe = lams[[np.argmax(np.abs(lams)), np.argmin(np.abs(lams))]]
            steps = calibrate_steps(spec.Q, probe, cfg)
        else:
            steps = cfg.steps
    lam, S, Sp, C, Cp = _propagate_arrays(spec.Q, lams, steps, cfg.method, with_c)
    return PropagatorBatch(lam, S, Sp, C, Cp, steps)


def propagate(spec: SelfAdjointProblem, lam: complex, cfg: IntegratorConfig | None = None) -> PropagatorValue:
    """S, S', C, C' at x = pi for a single spectral parameter."""
    cfg = cfg or IntegratorConfig()
    lam = complex(lam)
    if not np.isfinite(lam):
        raise ValueError("lambda must be finite")
    return propagate_batch(spec, [lam], cfg)[0]


def asymptotic_reference(spec: SelfAdjointProblem, rho: complex) -> PropagatorValue:
    """Leading terms of the large-rho expansion of S, S', C, C' at pi.

    Remainders are O(rho^-3), O(rho^-2), O(rho^-2), O(rho^-1) respectively
    (times exp(|Im rho| pi)).
    """
    rho = complex(rho)
    if abs(rho) < 1:
        raise ValueError("asymptotic reference requires |rho| >= 1")
    m = spec.m
    eye = np.eye(m)
    omega = spec.Q.mean_matrix()
    ic, is_ = spec.Q.oscillatory_integrals(rho)
    sn, cs = np.sin(rho * np.pi), np.cos(rho * np.pi)
    S = sn / rho * eye - cs / rho**2 * omega + ic / rho**2
    Sp = cs * eye + sn / rho * omega - is_ / rho
    C = cs * eye + sn / rho * omega + is_ / rho
    Cp = -rho * sn * eye + cs * omega + ic
    return PropagatorValue(rho * rho, rho, S, Sp, C, Cp)
