"""Eigenvalue location, double indexing (n, k), remainders and comparisons.

Eigenvalues are searched on the real axis in the coordinate ``s`` with
``lambda = s |s|`` (so ``s = rho`` for non-negative eigenvalues).  Odd-order
zeros of the phase-normalised characteristic determinant are bracketed by
sign changes; even-order zeros are caught as minima of the smallest singular
value of ``W``.  Multiplicities come from winding numbers on small circles
and each band window is cross-checked by an argument-principle count on a
rectangle around it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .charfn import boundary_form
from .contour import circle, rectangle, winding_numbers
from .model import AsymptoticConstants, SelfAdjointProblem, asymptotic_constants, require_valid
from .propagator import IntegratorConfig, _propagate_arrays, calibrate_steps

log = logging.getLogger(__name__)

GRID_STEP = 0.02
KAPPA_NOISE_FLOOR = 1e-18
CHUNK = 4096


class MissedEigenvalueError(RuntimeError):
    def __init__(self, band: int, counted: int, found: int):
        super().__init__(f"missed eigenvalue in band window {band}: "
                         f"argument principle counts {counted}, located {found}")
        self.band = band


class QuadratureResolutionError(RuntimeError):
    pass


def s_to_lam(s):
    s = np.asarray(s, dtype=float)
    return s * np.abs(s)


def lam_to_s(lam):
    lam = np.asarray(lam, dtype=float)
    return np.sign(lam) * np.sqrt(np.abs(lam))


def rho_of(lam: float):
    return math.sqrt(lam) if lam >= 0 else 1j * math.sqrt(-lam)


@dataclass
class Eigenpair:
    n: int
    k: int
    lam: float
    rho: complex
    cluster: int
    multiplicity: int


@dataclass
class EigenvalueTable:
    entries: list[Eigenpair]
    m: int
    p: int
    max_n: int
    steps: int
    cutoff: float
    n0: int
    flags: list[int] = field(default_factory=list)
    window_counts: dict = field(default_factory=dict)

    def lam_array(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries]).reshape(self.max_n, self.m)

    def rho_array(self) -> np.ndarray:
        return np.array([e.rho for e in self.entries], dtype=complex).reshape(self.max_n, self.m)

    def band(self, n: int) -> list[Eigenpair]:
        return self.entries[(n - 1) * self.m: n * self.m]

    def entry(self, n: int, k: int) -> Eigenpair:
        return self.entries[(n - 1) * self.m + k - 1]

    def truncated(self, n_max: int) -> "EigenvalueTable":
        n_max = min(n_max, self.max_n)
        return EigenvalueTable(self.entries[: n_max * self.m], self.m, self.p, n_max, self.steps,
                               self.cutoff, self.n0, [f for f in self.flags if f <= n_max],
                               self.window_counts)


def initial_guesses(spec: SelfAdjointProblem, N: int, constants: AsymptoticConstants | None = None):
    """Unperturbed (or z-corrected) positions of rho_nk, as (n, k, rho0) triples."""
    if N < 1:
        raise ValueError("N must be >= 1")
    m, p = spec.m, spec.p
    out = []
    for n in range(1, N + 1):
        for k in range(1, m + 1):
            base = n - 0.5 if k <= p else float(n)
            rho0 = base
            if constants is not None:
                rho0 = base + constants.z[k - 1] / (np.pi * base)
            out.append((n, k, rho0))
    return out


class _Evaluator:
    """Batched W(lambda(s)) evaluation with a fixed step count."""

    def __init__(self, spec: SelfAdjointProblem, steps: int, method: str):
        self.spec = spec
        self.steps = steps
        self.method = method
        self.calls = 0
        self.theta = 0.0

    def W(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        out = np.empty((lam.size, self.spec.m, self.spec.m), dtype=complex)
        for i in range(0, lam.size, CHUNK):
            _, S, Sp, _, _ = _propagate_arrays(self.spec.Q, lam[i: i + CHUNK], self.steps, self.method, False)
            out[i: i + CHUNK] = boundary_form(self.spec, S, Sp)
        self.calls += 1
        return out

    def det(self, lam) -> np.ndarray:
        return np.linalg.det(self.W(lam))

    def real_det(self, s) -> np.ndarray:
        return np.real(self.det(s_to_lam(s)) * np.exp(-1j * self.theta))

    def sigma_rel(self, s) -> np.ndarray:
        sv = np.linalg.svd(self.W(s_to_lam(s)), compute_uv=False)
        return sv[:, -1] / sv[:, 0]


def _illinois(f, a, b, fa, fb, xtol_rel=1e-15, maxiter=100):
    """Batched Illinois false position on brackets [a, b] with fa * fb < 0."""
    a, b, fa, fb = (np.array(v, dtype=float) for v in (a, b, fa, fb))
    active = np.ones(a.size, dtype=bool)
    for _ in range(maxiter):
        width = np.abs(b - a)
        tol = xtol_rel * np.maximum(1.0, np.abs(a)) + 1e-300
        active &= width > tol
        if not active.any():
            break
        idx = np.flatnonzero(active)
        c = (a[idx] * fb[idx] - b[idx] * fa[idx]) / (fb[idx] - fa[idx])
        lo, hi = np.minimum(a[idx], b[idx]), np.maximum(a[idx], b[idx])
        bad = ~((c > lo) & (c < hi))
        c[bad] = 0.5 * (lo[bad] + hi[bad])
        fc = f(c)
        zero = fc == 0
        same = np.sign(fc) == np.sign(fb[idx])
        a_new, fa_new = a[idx].copy(), fa[idx].copy()
        a_new[~same] = b[idx][~same]
        fa_new[~same] = fb[idx][~same]
        fa_new[same] *= 0.5
        a[idx], fa[idx] = a_new, fa_new
        b[idx], fb[idx] = c, fc
        a[idx[zero]] = c[zero]
        active[idx[zero]] = False
    return b


def _golden(f, lo, hi, iters=80):
    """Batched golden-section minimisation on [lo, hi]."""
    g = (np.sqrt(5) - 1) / 2
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        left = f1 < f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        nx1 = np.where(left, hi - g * (hi - lo), x2)
        nx2 = np.where(left, x1, lo + g * (hi - lo))
        fx = f(np.where(left, nx1, nx2))
        f1, f2 = np.where(left, fx, f2), np.where(left, f1, fx)
        x1, x2 = nx1, nx2
        if np.all(np.abs(hi - lo) <= 1e-15 * np.maximum(1.0, np.abs(lo))):
            break
    return np.where(f1 < f2, x1, x2)


@dataclass
class _Root:
    s: float
    mult: int = 0
    kernel: int = 0


class _Locator:
    def __init__(self, spec, constants, N, cfg):
        self.spec, self.constants, self.N, self.cfg = spec, constants, N, cfg
        m, p = spec.m, spec.p
        qn = spec.Q.sup_norm()
        hn = float(np.linalg.norm(spec.H, 2))
        self.lam_low = max(2 * qn + hn, qn + hn * hn) + 1.0
        self.s_low = -math.sqrt(self.lam_low)
        self.m, self.p = m, p

    # -- sampling ---------------------------------------------------------
    def base_grid(self, s_hi):
        g = [np.arange(self.s_low, s_hi, GRID_STEP)]
        c = self.constants
        for n in range(1, int(s_hi) + 2):
            for base, zs in ((n - 0.5, c.z_half), (float(n), c.z_int)):
                lo = base + zs.min() / (np.pi * base) - 0.01
                hi = base + zs.max() / (np.pi * base) + 0.01
                g.append(np.linspace(lo, hi, 101))
        grid = np.unique(np.concatenate(g))
        return grid[(grid >= self.s_low) & (grid <= s_hi)]

    def candidates(self, s, dhat, sig):
        brackets = []
        exact = []
        for i in range(s.size - 1):
            if dhat[i] == 0:
                exact.append(s[i])
            elif dhat[i] * dhat[i + 1] < 0:
                brackets.append(i)
        minima = []
        for i in range(1, s.size - 1):
            if sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1] and sig[i] < 0.2:
                if not (dhat[i - 1] * dhat[i] < 0 or dhat[i] * dhat[i + 1] < 0):
                    minima.append(i)
        return brackets, minima, exact

    def find_roots(self, s, ev):
        dhat = np.empty(s.size)
        sig = np.empty(s.size)
        W = ev.W(s_to_lam(s))
        det = np.linalg.det(W)
        sv = np.linalg.svd(W, compute_uv=False)
        sig[:] = sv[:, -1] / sv[:, 0]
        dhat[:] = np.real(det * np.exp(-1j * ev.theta))
        brackets, minima, exact = self.candidates(s, dhat, sig)
        roots = list(exact)
        if brackets:
            bi = np.array(brackets)
            roots += list(_illinois(ev.real_det, s[bi], s[bi + 1], dhat[bi], dhat[bi + 1]))
        if minima:
            mi = np.array(minima)
            xs = _golden(ev.sigma_rel, s[mi - 1], s[mi + 1])
            ok = ev.sigma_rel(xs) < 1e-7
            roots += list(xs[ok])
        return roots

    @staticmethod
    def merge(roots):
        roots = sorted(roots)
        out = []
        for r in roots:
            if out and abs(r - out[-1]) <= 1e-10 * max(1.0, abs(r)):
                continue
            out.append(r)
        return out

    # -- multiplicities ---------------------------------------------------
    def multiplicities(self, roots, ev):
        if not roots:
            return []
        rs = np.array(roots)
        paths = []
        for i, r in enumerate(rs):
            gaps = np.abs(rs - r)
            gaps[i] = np.inf
            if r >= 0.5:
                rad = min(0.2, 0.5 * gaps.min(), 0.5 * r)
                paths.append(circle(r, rad))
            else:
                lam = rs * np.abs(rs)
                lg = np.abs(lam - r * abs(r))
                lg[i] = np.inf
                paths.append(circle(r * abs(r), min(0.2, 0.5 * lg.min())))
        rho_mode = rs >= 0.5
        out = []
        for mode in (True, False):
            sel = np.flatnonzero(rho_mode == mode)
            if sel.size == 0:
                continue
            fn = (lambda z: ev.det(z * z)) if mode else ev.det
            res = winding_numbers(fn, [paths[i] for i in sel])
            for i, w in zip(sel, res):
                if w.defect > 0.1:
                    raise QuadratureResolutionError(
                        f"winding number {w.value:.3f} around s = {rs[i]:.12g} is not an integer")
                out.append((i, w.count))
        mult = np.zeros(rs.size, dtype=int)
        for i, c in out:
            mult[i] = c
        return list(mult)

    # -- window counts ----------------------------------------------------
    def edges(self, n_windows, roots):
        rs = np.array(roots) if roots else np.empty(0)
        edges = [self.s_low]
        for n in range(1, n_windows + 1):
            e = n + 0.25
            for shift in (0.0, 0.03, -0.03, 0.06, -0.06, 0.09, -0.09, 0.12, -0.12):
                if rs.size == 0 or np.min(np.abs(rs - (e + shift))) > 0.02:
                    e += shift
                    break
            edges.append(e)
        return edges

    def window_counts(self, edges, ev, windows):
        paths_rho, idx_rho, paths_lam, idx_lam = [], [], [], []
        for n in windows:
            a, b = edges[n - 1], edges[n]
            if a >= 0.5:
                paths_rho.append(rectangle(a, b, -0.3, 0.3))
                idx_rho.append(n)
            else:
                la, lb = a * abs(a), b * abs(b)
                paths_lam.append(rectangle(la, lb, -0.5, 0.5))
                idx_lam.append(n)
        counts = {}
        if paths_rho:
            for n, w in zip(idx_rho, winding_numbers(lambda z: ev.det(z * z), paths_rho, nodes=64)):
                if w.defect > 0.1:
                    raise QuadratureResolutionError(f"window {n}: winding {w.value:.3f}")
                counts[n] = w.count
        if paths_lam:
            for n, w in zip(idx_lam, winding_numbers(ev.det, paths_lam, nodes=96)):
                if w.defect > 0.1:
                    raise QuadratureResolutionError(f"window {n}: winding {w.value:.3f}")
                counts[n] = w.count
        return counts


def locate_spectrum(spec: SelfAdjointProblem, N: int, cfg: IntegratorConfig | None = None,
                    constants: AsymptoticConstants | None = None, zoom_levels: int = 4) -> EigenvalueTable:
    """All eigenvalues of the first N bands, double-indexed in nondecreasing order."""
    cfg = cfg or IntegratorConfig()
    if N < 1:
        raise ValueError("N must be >= 1")
    require_valid(spec)
    if constants is None:
        constants = asymptotic_constants(spec)
    loc = _Locator(spec, constants, N, cfg)
    m = spec.m

    n_windows = N
    s_hi = N + 0.6
    steps = calibrate_steps(spec.Q, [s_hi ** 2, 1.0, -loc.lam_low], cfg) if cfg.adaptive else cfg.steps
    ev = _Evaluator(spec, steps, cfg.method)

    grid = loc.base_grid(s_hi)
    # constant phase of det W on the real axis (all zeros are real)
    det0 = ev.det(s_to_lam(grid[:: max(1, grid.size // 200)]))
    scale = np.maximum(1.0, np.abs(grid[:: max(1, grid.size // 200)])) ** (m - spec.p)
    ev.theta = float(np.angle(det0[np.argmax(np.abs(det0) * scale)]))

    roots = loc.merge(loc.find_roots(grid, ev))
    level = 0
    while True:
        mults = loc.multiplicities(roots, ev)
        edges = loc.edges(n_windows, roots)
        counts = loc.window_counts(edges, ev, range(1, n_windows + 1))
        rs = np.array(roots)
        mm = np.array(mults)
        bad = []
        for n in range(1, n_windows + 1):
            inside = (rs > edges[n - 1]) & (rs <= edges[n]) if rs.size else np.zeros(0, bool)
            found = int(mm[inside].sum()) if rs.size else 0
            if found != counts[n]:
                bad.append((n, counts[n], found))
        if bad:
            if zoom_levels <= 0:
                n, c, f = bad[0]
                raise MissedEigenvalueError(n, c, f)
            zoom_levels -= 1
            level += 1
            extra = []
            for n, c, f in bad:
                a, b = edges[n - 1], edges[n]
                step = GRID_STEP / 8 ** level
                fine = np.arange(a, b, step)
                extra.append(fine)
                # a dense local scan around already found roots exposes near-coincident ones
                for r in rs[(rs > a) & (rs <= b)] if rs.size else []:
                    extra.append(r + np.linspace(-0.05, 0.05, 401))
            new = np.unique(np.concatenate(extra))
            new = new[(new > loc.s_low) & (new < s_hi)]
            log.info("zooming into windows %s with %d extra samples", [b[0] for b in bad], new.size)
            roots = loc.merge(roots + loc.find_roots(new, ev) + _deflated_roots(new, roots, ev))
            continue
        needed = N * m
        found_below = int(mm[rs <= edges[N]].sum()) if rs.size else 0
        if found_below >= needed or n_windows >= N + 3:
            break
        # not enough eigenvalues below the cutoff yet: search one more window
        n_windows += 1
        s_hi = n_windows + 0.6
        more = loc.base_grid(s_hi)
        more = more[more > grid.max()]
        grid = np.concatenate([grid, more])
        roots = loc.merge(roots + loc.find_roots(more, ev))

    expanded = []
    for r, k in zip(roots, mults):
        expanded += [(r, k)] * k
    if len(expanded) < N * m:
        raise MissedEigenvalueError(N, N * m, len(expanded))
    expanded = expanded[: N * m]
    entries = []
    for i, (s, mult) in enumerate(expanded):
        n, k = divmod(i, m)
        lam = float(s * abs(s))
        entries.append(Eigenpair(n + 1, k + 1, lam, rho_of(lam), constants.cluster_of(k + 1).cid, mult))

    guesses = initial_guesses(spec, N, constants)
    far = [n for (n, k, g), e in zip(guesses, entries) if abs(e.rho - g) > 0.25]
    n0 = (max(far) + 1) if far else 1
    flags = sorted({n for (n, k, g), e in zip(guesses, entries)
                    if abs(e.rho - (n - 0.5 if k <= spec.p else n)) > 0.25})
    log.info("located %d eigenvalues (%d steps, %d batch evaluations)", len(entries), steps, ev.calls)
    return EigenvalueTable(entries, m, spec.p, N, steps, float(edges[N]), n0, flags,
                           {n: counts[n] for n in range(1, N + 1)})


def _deflated_roots(s, roots, ev):
    """Sign changes of det W divided by the factors of the known roots."""
    if not roots:
        return []
    rs = np.array(roots)
    d = ev.real_det(s)
    den = np.prod(s[:, None] - rs[None, :], axis=1)
    g = d / den
    out = []
    idx = np.flatnonzero((g[:-1] * g[1:] < 0) & (np.abs(den[:-1]) > 0) & (np.abs(den[1:]) > 0))
    if idx.size:
        def fn(x):
            return ev.real_det(x) / np.prod(x[:, None] - rs[None, :], axis=1)
        out = list(_illinois(fn, s[idx], s[idx + 1], g[idx], g[idx + 1]))
    return out


@dataclass
class RemainderDiagnostics:
    kappa: np.ndarray
    partial_l2: np.ndarray
    tail_ratios: dict
    eps: np.ndarray

    def increase(self, n_from: int, n_to: int) -> float:
        """Relative growth of the cumulative l2 sum between two band counts.

        Sums below :data:`KAPPA_NOISE_FLOOR` are rounding noise of an exact
        spectrum and count as zero.
        """
        a, b = self.partial_l2[n_from - 1], self.partial_l2[n_to - 1]
        if b <= KAPPA_NOISE_FLOOR:
            return 0.0
        return float((b - a) / a) if a > 0 else math.inf


def remainders(table: EigenvalueTable, constants: AsymptoticConstants,
               half_denominator: str = "n-1/2") -> RemainderDiagnostics:
    """kappa_nk = n (rho_nk - base - z_k / (pi base')) and its cumulative l2 sums.

    ``half_denominator`` selects ``base' = n - 1/2`` (default) or ``n`` for
    the half-integer family.
    """
    rho = table.rho_array()
    N, m, p = table.max_n, table.m, table.p
    n = np.arange(1, N + 1)[:, None]
    z = constants.z[None, :]
    base = np.where(np.arange(m)[None, :] < p, n - 0.5, n * 1.0)
    denom = base.copy()
    if half_denominator == "n":
        denom[:, :p] = n
    kappa = n * (rho - base - z / (np.pi * denom))
    if np.all(np.abs(kappa.imag) < 1e-12):
        kappa = kappa.real
    sq = np.sum(np.abs(kappa) ** 2, axis=1)
    partial = np.cumsum(sq)
    ratios = {}
    for Nn in (10, 20, 40, 80):
        if 2 * Nn <= N and partial[Nn - 1] > 0:
            ratios[f"{Nn}->{2 * Nn}"] = float(partial[2 * Nn - 1] / partial[Nn - 1])
    return RemainderDiagnostics(kappa, partial, ratios, np.abs(rho - base))


@dataclass
class ComparisonReport:
    scaled_rho_diff: np.ndarray
    partial_l2: np.ndarray
    block_conditions: dict
    weight_diffs: dict = field(default_factory=dict)

    @property
    def conditions_hold(self) -> bool:
        return all(v <= 1e-9 for v in self.block_conditions.values())


def block_conditions(specA: SelfAdjointProblem, specB: SelfAdjointProblem) -> dict:
    """Deviations of the two block conditions under which the spectral data agree asymptotically."""
    T, Tp = specA.T, specA.Tperp
    dq = specA.Q.mean_matrix() - specB.Q.mean_matrix()
    c1 = T @ (dq - specA.H + specB.H) @ T
    c2 = Tp @ dq @ Tp
    return {"T-block": float(np.max(np.abs(c1))), "Tperp-block": float(np.max(np.abs(c2)))}


def compare_problems(specA: SelfAdjointProblem, specB: SelfAdjointProblem, N: int,
                     cfg: IntegratorConfig | None = None, tables=None, weights=None) -> ComparisonReport:
    """Scaled differences n (rho_nk - rho^_nk) and weight-sum differences / n^2."""
    if specA.m != specB.m:
        raise ValueError("problems have different dimensions")
    if np.max(np.abs(specA.T - specB.T)) > 1e-12:
        raise ValueError("problems must share the projector T")
    conds = block_conditions(specA, specB)
    if tables is None:
        tables = (locate_spectrum(specA, N, cfg), locate_spectrum(specB, N, cfg))
    ta, tb = tables
    n = np.arange(1, N + 1)[:, None]
    diff = n * (ta.truncated(N).rho_array() - tb.truncated(N).rho_array())
    if np.all(np.abs(diff.imag) < 1e-12):
        diff = diff.real
    partial = np.cumsum(np.sum(np.abs(diff) ** 2, axis=1))
    report = ComparisonReport(diff, partial, conds)
    if weights is not None:
        wa, wb = weights
        for key in wa.per_cluster:
            if key in wb.per_cluster:
                nn = key[0]
                report.weight_diffs[key] = float(np.linalg.norm(wa.per_cluster[key] - wb.per_cluster[key], 2) / nn**2)
    return report
