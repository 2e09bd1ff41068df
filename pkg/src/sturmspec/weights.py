"""Weight-matrix group sums from contour integrals of the Weyl matrix.

For a group of eigenvalues enclosed by a circle,

    alpha = -(1 / 2 pi i) oint M(lambda) d lambda,

computed in the rho-plane (``d lambda = 2 rho d rho``) with the trapezoidal
rule.  Groups whose circle would come close to ``rho = 0`` (low bands, negative
eigenvalues) are integrated on a lambda-plane circle instead.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .charfn import NEAR_POLE_COND, NearPoleError, weyl_batch
from .contour import winding_numbers
from .model import AsymptoticConstants, Cluster, SelfAdjointProblem, asymptotic_constants
from .propagator import IntegratorConfig, calibrate_steps
from .spectrum import EigenvalueTable

log = logging.getLogger(__name__)

START_NODES = 64
MAX_NODES = 2 ** 12
RHO_PLANE_CLEARANCE = 0.5


class ContourOverlapError(ValueError):
    """A group cannot be separated from its neighbours by a circle."""

    def __init__(self, n: int, cid: int, message: str):
        super().__init__(f"band {n}, cluster {cid}: {message}; use a larger n or set the radius manually")
        self.n = n
        self.cid = cid


class ContourRadiusError(ArithmeticError):
    """A quadrature node landed too close to a pole."""


class QuadratureError(ArithmeticError):
    """Node doubling did not converge."""


class WindingMismatchError(ArithmeticError):
    def __init__(self, group: "WeightGroup", count: int):
        super().__init__(f"contour of band {group.n}, cluster {group.cid} encloses {count} "
                         f"zeros of the characteristic determinant, expected {group.multiplicity}")
        self.group = group
        self.count = count


@dataclass
class WeightGroup:
    n: int
    cid: int
    members: list[tuple[int, int]]
    center: complex
    radius: float
    plane: str = "rho"
    multiplicity: int = 0

    def nodes(self, theta: np.ndarray):
        """Returns (lambda, d lambda / d theta) at the given angles."""
        e = np.exp(1j * theta)
        w = self.center + self.radius * e
        if self.plane == "rho":
            return w * w, 2j * w * self.radius * e
        return w, 1j * self.radius * e


@dataclass
class GroupResult:
    group: WeightGroup
    alpha: np.ndarray
    nodes: int
    winding: int
    change: float
    hermitian_defect: float


@dataclass
class WeightSums:
    per_cluster: dict = field(default_factory=dict)
    bandI: dict = field(default_factory=dict)
    bandII: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    @property
    def bands(self) -> list[int]:
        return sorted(set(self.bandI) & set(self.bandII))


def _member_values(table: EigenvalueTable, cluster: Cluster, n: int):
    members = [(n, k) for k in cluster.ks]
    lam = np.array([table.entry(n, k).lam for k in cluster.ks])
    rho = np.array([table.entry(n, k).rho for k in cluster.ks], dtype=complex)
    return members, lam, rho


def cluster_groups(table: EigenvalueTable, constants: AsymptoticConstants, n: int,
                   radius: float | None = None) -> list[WeightGroup]:
    """One contour per z-cluster of band ``n``.

    Circles are centred at the mean of the member values; the radius is at
    most 1/4 (rho-plane) and at most half the distance to the nearest
    eigenvalue outside the group.  The unseen eigenvalues above the table's
    cutoff only need to stay outside, so the top band may extend up to the
    distance to the cutoff.
    """
    if not 1 <= n <= table.max_n:
        raise ValueError(f"band {n} is not in the table (1..{table.max_n})")
    all_lam = table.lam_array().ravel()
    all_rho = table.rho_array().ravel()
    cut_rho = table.cutoff
    cut_lam = table.cutoff * abs(table.cutoff)
    groups = []
    for cl in constants.clusters:
        members, lam, rho = _member_values(table, cl, n)
        idx = np.array([(n - 1) * table.m + k - 1 for k in cl.ks])
        others = np.setdiff1d(np.arange(all_lam.size), idx)
        use_rho = np.all(np.abs(rho.imag) < 1e-14) and rho.real.mean() - 0.25 >= RHO_PLANE_CLEARANCE
        if use_rho:
            c = complex(rho.real.mean())
            spread = float(np.ptp(rho.real))
            gap = np.min(np.abs(all_rho[others] - c)) if others.size else np.inf
            r = min(0.25, 0.5 * gap, cut_rho - c.real)
            plane = "rho"
        else:
            c = complex(lam.mean())
            spread = float(np.ptp(lam))
            gap = np.min(np.abs(all_lam[others] - c.real)) if others.size else np.inf
            r = min(1.0, 0.5 * gap, cut_lam - c.real)
            plane = "lambda"
        if radius is not None:
            r = radius
        if not r > 10 * spread:
            raise ContourOverlapError(n, cl.cid, f"radius {r:.3e} does not clear 10x the member spread {spread:.3e}")
        groups.append(WeightGroup(n, cl.cid, members, c, float(r), plane, len(cl.ks)))
    return groups


def _winding_from_samples(det: np.ndarray):
    inc = np.angle(np.roll(det, -1) / det)
    return float(inc.sum() / (2 * np.pi)), float(np.max(np.abs(inc)))


def weight_sums_for_groups(spec: SelfAdjointProblem, groups: list[WeightGroup],
                           cfg: IntegratorConfig | None = None, steps: int | None = None,
                           validate: bool = True) -> list[GroupResult]:
    """Contour weight sums for several groups, node-doubling each until converged."""
    cfg = cfg or IntegratorConfig()
    if not groups:
        return []
    if steps is None:
        probe = []
        for g in groups:
            lam, _ = g.nodes(np.array([0.0, np.pi / 2, np.pi]))
            probe.extend(lam)
        probe = np.asarray(probe)
        steps = (calibrate_steps(spec.Q, probe[[np.argmax(np.abs(probe)), np.argmin(np.abs(probe))]], cfg)
                 if cfg.adaptive else cfg.steps)
    G = len(groups)
    K = START_NODES
    theta = [2 * np.pi * np.arange(K) / K for _ in groups]
    samples: list[np.ndarray | None] = [None] * G
    dets: list[np.ndarray | None] = [None] * G
    alpha: list[np.ndarray | None] = [None] * G
    change = [np.inf] * G
    herm = [np.inf] * G
    active = list(range(G))
    new_theta = theta
    while True:
        lam_all, jac_all, owner = [], [], []
        for j in active:
            lam, jac = groups[j].nodes(new_theta[j])
            lam_all.append(lam)
            jac_all.append(jac)
            owner.append(j)
        lam_cat = np.concatenate(lam_all)
        try:
            M, W, _ = weyl_batch(spec, lam_cat, cfg, steps, check=True)
        except NearPoleError as exc:
            raise ContourRadiusError(f"quadrature node at lambda = {exc.lam} is too close to a pole "
                                     f"(cond(W) > {NEAR_POLE_COND:.0e})") from exc
        det = np.linalg.det(W)
        pos = 0
        still = []
        for j, lam, jac in zip(owner, lam_all, jac_all):
            k = lam.size
            f = M[pos: pos + k] * (jac / (2j * np.pi))[:, None, None]
            d = det[pos: pos + k]
            pos += k
            if samples[j] is None:
                samples[j], dets[j] = f, d
                est = -2 * np.pi * f.mean(axis=0)
            else:
                # interleave: old nodes at even positions, new ones at odd
                nk = samples[j].shape[0]
                ff = np.empty((2 * nk,) + f.shape[1:], dtype=complex)
                ff[0::2], ff[1::2] = samples[j], f
                dd = np.empty(2 * nk, dtype=complex)
                dd[0::2], dd[1::2] = dets[j], d
                samples[j], dets[j] = ff, dd
                est = -2 * np.pi * ff.mean(axis=0)
            scale = 1.0 + np.linalg.norm(est, 2)
            if alpha[j] is not None:
                change[j] = float(np.linalg.norm(est - alpha[j], 2))
            herm[j] = float(np.linalg.norm(est - est.conj().T, 2))
            alpha[j] = est
            if not (change[j] < 1e-8 * scale and herm[j] < 1e-8 * scale):
                still.append(j)
        if not still:
            break
        K *= 2
        if K > MAX_NODES:
            bad = groups[still[0]]
            raise QuadratureError(f"weight sum for band {bad.n}, cluster {bad.cid} did not converge "
                                  f"with {MAX_NODES} nodes (change {change[still[0]]:.2e})")
        active = still
        new_theta = {j: 2 * np.pi * (np.arange(K // 2) + 0.5) / (K // 2) for j in active}
        new_theta = [new_theta.get(j) for j in range(G)]

    out = []
    for j, g in enumerate(groups):
        a = alpha[j]
        a = 0.5 * (a + a.conj().T)
        value, max_inc = _winding_from_samples(dets[j])
        if max_inc > np.pi / 2:
            fn = lambda lam_batch: np.linalg.det(weyl_batch(spec, lam_batch, cfg, steps, check=False)[1])
            path = (lambda gg: (lambda t: gg.nodes(2 * np.pi * np.asarray(t))[0]))(g)
            value = winding_numbers(fn, [path], nodes=samples[j].shape[0])[0].value
        count = int(round(value))
        if validate and count != g.multiplicity:
            raise WindingMismatchError(g, count)
        out.append(GroupResult(g, a, samples[j].shape[0], count, change[j], herm[j]))
    return out


def weight_sum(spec: SelfAdjointProblem, group: WeightGroup, cfg: IntegratorConfig | None = None,
               steps: int | None = None) -> np.ndarray:
    return weight_sums_for_groups(spec, [group], cfg, steps)[0].alpha


def compute_weight_sums(spec: SelfAdjointProblem, table: EigenvalueTable,
                        constants: AsymptoticConstants | None = None, bands=None,
                        cfg: IntegratorConfig | None = None, strict: bool = False) -> WeightSums:
    """Per-cluster and per-band weight sums for the requested bands.

    Bands whose contours cannot be separated are recorded in ``skipped``
    (or raise, with ``strict``).
    """
    constants = constants or asymptotic_constants(spec)
    bands = list(bands) if bands is not None else list(range(1, table.max_n + 1))
    groups = []
    out = WeightSums()
    for n in bands:
        try:
            groups.extend(cluster_groups(table, constants, n))
        except ContourOverlapError as exc:
            if strict:
                raise
            log.warning("skipping band %d: %s", n, exc)
            out.skipped[n] = str(exc)
    results = weight_sums_for_groups(spec, groups, cfg, table.steps if cfg is None or not cfg.adaptive else None)
    for res in results:
        g = res.group
        out.per_cluster[(g.n, g.cid)] = res.alpha
        out.results[(g.n, g.cid)] = res
    m = spec.m
    for n in bands:
        if n in out.skipped:
            continue
        I = np.zeros((m, m), dtype=complex)
        II = np.zeros((m, m), dtype=complex)
        for cl in constants.clusters:
            if cl.band == "I":
                I += out.per_cluster[(n, cl.cid)]
            else:
                II += out.per_cluster[(n, cl.cid)]
        out.bandI[n] = I
        out.bandII[n] = II
    return out


def is_hermitian_psd(a: np.ndarray, slack: float = 1e-7) -> bool:
    nrm = max(np.linalg.norm(a, 2), 1e-300)
    if np.linalg.norm(a - a.conj().T, 2) > slack * nrm:
        return False
    return bool(np.min(np.linalg.eigvalsh(0.5 * (a + a.conj().T))) >= -slack * nrm)


def numerical_rank(a: np.ndarray, rel: float = 1e-6) -> int:
    sv = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(sv > rel * sv[0])) if sv[0] > 0 else 0


def _base(band: str, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return n - 0.5 if band == "I" else n


def loglog_slope(n, values) -> float:
    """Least-squares slope of log(values) against log(n)."""
    n = np.asarray(n, dtype=float)
    v = np.asarray(values, dtype=float)
    return float(np.polyfit(np.log(n), np.log(v), 1)[0])


NOISE_FLOOR = 1e-9


@dataclass
class DeviationReport:
    bands: np.ndarray
    d: dict
    d_partial_l2: dict
    e_I: np.ndarray
    e_II: np.ndarray

    def d_slope(self, cid: int, lo: int = 5, hi: int = 40) -> float:
        """Log-log slope of d_n over [lo, hi]; -inf when d_n sits at the noise floor."""
        sel = (self.bands >= lo) & (self.bands <= hi)
        v = self.d[cid][sel]
        if np.max(v) < NOISE_FLOOR:
            return -np.inf
        return loglog_slope(self.bands[sel], np.maximum(v, 1e-300))

    def e_slope(self, which: str = "I", lo: int = 10, hi: int = 40) -> float:
        sel = (self.bands >= lo) & (self.bands <= hi)
        v = (self.e_I if which == "I" else self.e_II)[sel]
        if np.max(v) < NOISE_FLOOR:
            return -np.inf
        return loglog_slope(self.bands[sel], np.maximum(v, 1e-300))

    def to_dict(self) -> dict:
        return {
            "bands": self.bands.tolist(),
            "d": {str(c): v.tolist() for c, v in self.d.items()},
            "d_partial_l2": {str(c): v.tolist() for c, v in self.d_partial_l2.items()},
            "e_I": self.e_I.tolist(),
            "e_II": self.e_II.tolist(),
        }


def weight_asymptotics_check(sums: WeightSums, constants: AsymptoticConstants) -> DeviationReport:
    """Scaled deviations of the weight sums from their limits A^(s), T and T_perp."""
    bands = np.array(sums.bands)
    canon = constants.canon
    T, Tp = canon.original.T, canon.original.Tperp
    d, partial = {}, {}
    for cl in constants.clusters:
        A = constants.A_original(cl)
        vals = np.array([np.linalg.norm(np.pi / (2 * _base(cl.band, n) ** 2) * sums.per_cluster[(n, cl.cid)] - A, 2)
                         for n in bands])
        d[cl.cid] = vals
        partial[cl.cid] = np.sqrt(np.cumsum(vals ** 2))
    eI = np.array([n * np.linalg.norm(np.pi / (2 * (n - 0.5) ** 2) * sums.bandI[n] - T, 2) for n in bands])
    eII = np.array([n * np.linalg.norm(np.pi / (2 * n ** 2) * sums.bandII[n] - Tp, 2) for n in bands])
    return DeviationReport(bands, d, partial, eI, eII)


@dataclass
class Reconstruction:
    block11: np.ndarray
    block22: np.ndarray
    z: dict
    A: dict
    deviation11: float
    deviation22: float

    @property
    def deviation(self) -> float:
        return max(self.deviation11, self.deviation22)


def estimate_z(table: EigenvalueTable, constants: AsymptoticConstants, n_lo: int, n_hi: int) -> dict:
    """Per-cluster z from a least-squares fit of pi base (rho - base) = z + a / n."""
    n = np.arange(n_lo, n_hi + 1)
    rho = table.rho_array().real
    out = {}
    for cl in constants.clusters:
        base = _base(cl.band, n)
        ks = np.array(cl.ks) - 1
        y = (np.pi * base[:, None] * (rho[n - 1][:, ks] - base[:, None])).mean(axis=1)
        X = np.stack([np.ones_like(base), 1.0 / n], axis=1)
        out[cl.cid] = float(np.linalg.lstsq(X, y, rcond=None)[0][0])
    return out


def estimate_limits(sums: WeightSums, constants: AsymptoticConstants, n1: int, n2: int) -> dict:
    """Richardson-extrapolated (in 1/n) scaled cluster sums, in canonical coordinates."""
    out = {}
    for cl in constants.clusters:
        a = [constants.canon.to_canonical(np.pi / (2 * _base(cl.band, n) ** 2) * sums.per_cluster[(n, cl.cid)])
             for n in (n1, n2)]
        out[cl.cid] = (n1 * a[0] - n2 * a[1]) / (n1 - n2)
    return out


def reconstruct_blocks(z: dict, A: dict, constants: AsymptoticConstants) -> Reconstruction:
    """Sum z_s A^(s) and split into the (omega11 - h) and omega22 estimates."""
    if set(z) != set(A) or set(z) != {c.cid for c in constants.clusters}:
        raise ValueError("cluster ids of the data do not match the asymptotic constants")
    p = constants.p
    total = sum(z[c] * A[c] for c in z)
    target = constants.target_blocks()
    b11, b22 = total[:p, :p], total[p:, p:]
    return Reconstruction(b11, b22, dict(z), dict(A),
                          float(np.max(np.abs(b11 - target[:p, :p]))),
                          float(np.max(np.abs(b22 - target[p:, p:]))))


def reconstruct_from_data(table: EigenvalueTable, sums: WeightSums, constants: AsymptoticConstants,
                          n_hi: int | None = None, shuffle: bool = False) -> Reconstruction:
    """Blocks from spectral data at bands n_hi/2 .. n_hi.

    ``shuffle`` cyclically reassigns the limit matrices across clusters (a
    negative control).
    """
    n_hi = n_hi or max(sums.bands)
    n_lo = n_hi // 2
    z = estimate_z(table, constants, n_lo, n_hi)
    A = estimate_limits(sums, constants, n_hi, n_lo)
    if shuffle:
        ids = [c.cid for c in constants.clusters]
        A = {ids[i]: A[ids[(i + 1) % len(ids)]] for i in range(len(ids))}
    return reconstruct_blocks(z, A, constants)
