"""Acceptance criteria 1-8.

Each test records one line in ``RESULTS``; conftest prints them in the
terminal summary, and running this file directly prints them as well.
"""
import numpy as np
import pytest

from sturmspec.charfn import weyl_batch
from sturmspec.config import PRESETS, preset
from sturmspec.graphs import verify_graph_theorems
from sturmspec.model import SelfAdjointProblem, asymptotic_constants
from sturmspec.oracle import fd_spectrum, residue_by_limit
from sturmspec.propagator import propagate_batch, wronskian_defect
from sturmspec.spectrum import locate_spectrum, remainders
from sturmspec.weights import (WeightGroup, cluster_groups, compute_weight_sums, is_hermitian_psd,
                               reconstruct_from_data, weight_asymptotics_check, weight_sums_for_groups)

from conftest import random_unitary

RESULTS: dict[int, str] = {}


class Criterion:
    """Collects named sub-checks and records a single pass/fail line."""

    def __init__(self, number, title):
        self.number, self.title, self.items = number, title, []

    def check(self, label, value, ok):
        self.items.append((label, value, bool(ok)))

    def finish(self):
        ok = all(i[2] for i in self.items)
        detail = "; ".join(f"{lab}={val:.3g}" + ("" if good else " FAIL") for lab, val, good in self.items)
        RESULTS[self.number] = f"criterion {self.number} [{'PASS' if ok else 'FAIL'}] {self.title}: {detail}"
        print(RESULTS[self.number])
        bad = [i[0] for i in self.items if not i[2]]
        assert not bad, f"criterion {self.number} failed: {', '.join(bad)}"


def test_criterion_1_exact_unperturbed_spectrum(q0_solved):
    c = Criterion(1, "exact unperturbed spectrum")
    t = q0_solved.table.truncated(30)
    rho = t.rho_array().real
    n = np.arange(1, 31)
    err1 = float(np.max(np.abs(rho[:, 0] - (n - 0.5))))
    err2 = float(np.max(np.abs(rho[:, 1:] - n[:, None])))
    c.check("max|rho_n1-(n-1/2)|", err1, err1 <= 1e-9)
    c.check("max|rho_n2,3-n|", err2, err2 <= 1e-9)
    mult = all(e.multiplicity == (1 if e.k == 1 else 2) for e in t.entries)
    c.check("multiplicity pattern (1,2,2)", float(mult), mult)
    ii = next(cl.cid for cl in q0_solved.constants.clusters if cl.band == "II")
    wind = [q0_solved.sums.results[(k, ii)].winding for k in range(1, 31)]
    c.check("min cluster-II winding", min(wind), all(w == 2 for w in wind))
    c.finish()


def test_criterion_2_exact_unperturbed_weights(q0_solved):
    c = Criterion(2, "exact unperturbed weights")
    T, Tp = q0_solved.spec.T, q0_solved.spec.Tperp
    sums = q0_solved.sums
    eI = max(np.linalg.norm(sums.bandI[n] - 2 * (n - 0.5) ** 2 / np.pi * T, 2) / n ** 2 for n in range(1, 31))
    eII = max(np.linalg.norm(sums.bandII[n] - 2 * n ** 2 / np.pi * Tp, 2) / n ** 2 for n in range(1, 31))
    c.check("max err_I/n^2", eI, eI <= 1e-7)
    c.check("max err_II/n^2", eII, eII <= 1e-7)
    c.finish()


def test_criterion_3_decoupled_closed_forms(diag2_solved):
    c = Criterion(3, "decoupled closed forms")
    n = np.arange(1, 31)
    lam = np.sort(diag2_solved.table.truncated(30).lam_array(), axis=1)
    exact = np.sort(np.stack([(n - 0.5) ** 2 + 0.6, n ** 2 - 0.4], axis=1), axis=1)
    err = float(np.max(np.abs(lam - exact)))
    c.check("max|lambda-exact|", err, err <= 1e-8)
    z = diag2_solved.constants.z
    zerr = float(np.max(np.abs(z - [0.3 * np.pi, -0.2 * np.pi])))
    c.check("max|z-(0.3pi,-0.2pi)|", zerr, zerr <= 1e-10)
    inc = remainders(diag2_solved.table, diag2_solved.constants).increase(20, 40)
    c.check("kappa l2 increase 20->40", inc, inc < 0.01)
    c.finish()


def test_criterion_4_weight_asymptotics(diag2_solved, coupled3_solved):
    c = Criterion(4, "weight asymptotics convergence")
    for label, solved in (("diag2", diag2_solved), ("coupled3", coupled3_solved)):
        rep = weight_asymptotics_check(solved.sums, solved.constants)
        worst = max(rep.d_slope(cid, 5, 40) for cid in rep.d)
        c.check(f"{label} max d-slope", worst, worst <= -0.5)
        e = rep.e_slope("I", 5, 40)
        c.check(f"{label} e_I slope", e, e <= 0.1)
    c.finish()


def test_criterion_5_block_reconstruction(diag2_solved, coupled3_solved):
    c = Criterion(5, "block reconstruction")
    for label, solved in (("diag2", diag2_solved), ("coupled3", coupled3_solved)):
        honest = reconstruct_from_data(solved.table, solved.sums, solved.constants, 40)
        shuffled = reconstruct_from_data(solved.table, solved.sums, solved.constants, 40, shuffle=True)
        c.check(f"{label} deviation", honest.deviation, honest.deviation <= 5e-2)
        ok = shuffled.deviation > 10 * max(honest.deviation, 5e-2)
        c.check(f"{label} shuffled deviation", shuffled.deviation, ok)
    c.finish()


def test_criterion_6_graph_two_route(star_delta, star_deltaprime):
    c = Criterion(6, "graph two-route consistency")
    rep = verify_graph_theorems(star_delta, 30)
    c.check("route deviation", rep.route_deviation, rep.route_deviation <= 1e-10)
    z1 = abs(rep.prediction.single - (np.pi / 6 * (0.2 + 0.5 + 0.9) - 0.5))
    c.check("|z1-formula|", z1, z1 <= 1e-12)
    zc = abs(rep.constants.z_half[0] - rep.prediction.single)
    c.check("|z1-matrix route|", zc, zc <= 1e-10)
    inc = rep.remainders.increase(15, 30)
    c.check("kappa l2 increase 15->30", inc, inc < 0.01)
    slope = max(rep.deviations.d_slope(cid, 5, 30) for cid in rep.deviations.d)
    c.check("max d-slope", slope, slope <= -0.5)
    dp = verify_graph_theorems(star_deltaprime, 30)
    c.check("delta' p", dp.p, dp.p == 2 and rep.p == 1)
    c.check("delta' route deviation", dp.route_deviation, dp.route_deviation <= 1e-10)
    inc2 = dp.remainders.increase(15, 30)
    c.check("delta' kappa l2 increase 15->30", inc2, inc2 < 0.01)
    c.finish()


def _isolated_residue_errors(spec, table, sums, consts, bands):
    errs = []
    for n in bands:
        for cl in consts.clusters:
            lams = np.array([table.entry(n, k).lam for k in cl.ks])
            if np.ptp(lams) > 1e-9 * max(1.0, abs(lams[0])):
                continue
            res = residue_by_limit(spec, float(lams.mean()))
            if not res.conclusive:
                continue
            a = sums.per_cluster[(n, cl.cid)]
            errs.append(float(np.linalg.norm(res.value - a, 2) / np.linalg.norm(a, 2)))
    return errs


def test_criterion_7_oracle_equivalence():
    c = Criterion(7, "oracle equivalence")
    residue_errs = []
    for name in PRESETS:
        spec = preset(name).spec
        consts = asymptotic_constants(spec)
        table = locate_spectrum(spec, 5, constants=consts)
        fd = fd_spectrum(spec, 5 * spec.m)
        err = float(np.max(np.abs(fd - np.sort(table.lam_array().ravel()))))
        c.check(f"fd {name}", err, err <= 1e-3)
        sums = compute_weight_sums(spec, table, consts, bands=range(2, 6))
        residue_errs += _isolated_residue_errors(spec, table, sums, consts, range(2, 6))
    worst = max(residue_errs)
    c.check(f"residue-limit max rel ({len(residue_errs)} poles)", worst, worst <= 1e-6 and len(residue_errs) >= 20)
    c.finish()


def test_criterion_8_structural_invariants(q0_solved, diag2_solved, coupled3_solved):
    c = Criterion(8, "structural invariants")
    spec = coupled3_solved.spec
    rng = np.random.default_rng(2024)
    lam = rng.uniform(-5.0, 400.0, 100)
    b = propagate_batch(spec, lam)
    wd = max(wronskian_defect(b.S[i], b.Sp[i], b.C[i], b.Cp[i]) for i in range(100))
    c.check("wronskian", wd, wd <= 1e-8)

    lc = rng.uniform(-5.0, 400.0, 100) + 1j * rng.uniform(0.1, 5.0, 100)
    M, _, _ = weyl_batch(spec, lc, check=False)
    Mc, _, _ = weyl_batch(spec, lc.conj(), check=False)
    sym = float(np.max(np.linalg.norm(np.conj(np.swapaxes(Mc, -1, -2)) - M, 2, axis=(-2, -1))
                       / np.maximum(1.0, np.linalg.norm(M, 2, axis=(-2, -1)))))
    c.check("weyl symmetry", sym, sym <= 1e-7)

    psd = all(is_hermitian_psd(a, 1e-7) for s in (q0_solved, diag2_solved, coupled3_solved)
              for a in s.sums.per_cluster.values())
    c.check("alpha hermitian-psd", float(psd), psd)

    U = random_unitary(rng, 3)
    moved = SelfAdjointProblem(U @ spec.T @ U.conj().T, U @ spec.H @ U.conj().T, spec.Q.transformed(U.conj().T))
    ui = float(np.max(np.abs(locate_spectrum(moved, 10).lam_array() - coupled3_solved.table.truncated(10).lam_array())))
    c.check("unitary invariance", ui, ui <= 1e-9)

    worst = 0.0
    for n in range(3, 13):
        groups = cluster_groups(coupled3_solved.table, coupled3_solved.constants, n)
        small = [WeightGroup(g.n, g.cid, g.members, g.center, 0.5 * g.radius, g.plane, g.multiplicity)
                 for g in groups]
        for r in weight_sums_for_groups(spec, small):
            a = coupled3_solved.sums.per_cluster[(r.group.n, r.group.cid)]
            worst = max(worst, float(np.linalg.norm(r.alpha - a, 2) / np.linalg.norm(a, 2)))
    c.check("contour-radius independence", worst, worst <= 1e-7)
    c.finish()


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
