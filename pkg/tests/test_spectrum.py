import numpy as np
import pytest

from sturmspec.model import SelfAdjointProblem, asymptotic_constants, canonicalize
from sturmspec.oracle import fd_spectrum
from sturmspec.potentials import ConstantHermitian, FourierSeries, Zero
from sturmspec.spectrum import compare_problems, initial_guesses, locate_spectrum, remainders

from conftest import herm, random_unitary


def test_initial_guesses_plain():
    spec = SelfAdjointProblem(np.diag([1.0, 0, 0]), np.zeros((3, 3)), Zero(3))
    got = [(n, k, r) for n, k, r in initial_guesses(spec, 2)]
    assert got == [(1, 1, 0.5), (1, 2, 1.0), (1, 3, 1.0), (2, 1, 1.5), (2, 2, 2.0), (2, 3, 2.0)]


def test_initial_guesses_refined():
    c = 0.3
    spec = SelfAdjointProblem(np.diag([1.0, 0, 0]), np.zeros((3, 3)), ConstantHermitian(np.diag([c, 0, 0])))
    g = initial_guesses(spec, 1, asymptotic_constants(spec))
    assert g[0][2] == pytest.approx(0.5 + c, abs=1e-14)


def test_q0_exact_with_double_multiplicity(q0_solved):
    t = q0_solved.table.truncated(10)
    rho = t.rho_array().real
    n = np.arange(1, 11)
    assert np.max(np.abs(rho[:, 0] - (n - 0.5))) < 1e-12
    assert np.max(np.abs(rho[:, 1:] - n[:, None])) < 1e-12
    assert all(e.multiplicity == (1 if e.k == 1 else 2) for e in t.entries)
    assert all(t.window_counts[n] == 3 for n in range(1, 11))


def test_table_invariants(coupled3_solved):
    t = coupled3_solved.table
    lam = np.array([e.lam for e in t.entries])
    assert np.all(np.diff(lam) >= 0)
    assert [(e.n, e.k) for e in t.entries] == [(n, k) for n in range(1, t.max_n + 1) for k in range(1, 4)]
    g = initial_guesses(coupled3_solved.spec, t.max_n, coupled3_solved.constants)
    for (n, k, r0), e in zip(g, t.entries):
        if n >= t.n0:
            assert abs(e.rho - r0) <= 0.25


def test_diag_closed_forms(diag2_solved):
    lam = np.sort(diag2_solved.table.lam_array(), axis=1)
    n = np.arange(1, 41)
    exact = np.sort(np.stack([(n - 0.5) ** 2 + 0.6, n ** 2 - 0.4], axis=1), axis=1)
    assert np.max(np.abs(lam - exact)) < 1e-8
    # the two families swap order in the first band
    assert diag2_solved.table.flags == [1]


def test_coupled_m2_matches_finite_differences():
    rng = np.random.default_rng(14)
    spec = SelfAdjointProblem(np.diag([1.0, 0]), np.zeros((2, 2)), FourierSeries([herm(rng, 2), herm(rng, 2)]))
    t = locate_spectrum(spec, 5)
    fd = fd_spectrum(spec, 10)
    assert np.max(np.abs(fd - t.lam_array().ravel())) < 1e-3


def test_negative_eigenvalues_join_first_band():
    spec = SelfAdjointProblem(np.diag([1.0, 0]), np.zeros((2, 2)), ConstantHermitian(np.diag([-3.0, -2.0])))
    t = locate_spectrum(spec, 4)
    lam = np.sort(t.lam_array().ravel())
    n = np.arange(1, 6)
    exact = np.sort(np.concatenate([(n - 0.5) ** 2 - 3, n ** 2 - 2.0]))[:8]
    assert np.max(np.abs(lam - exact)) < 1e-9
    assert t.entries[0].lam < 0 and t.entries[0].rho.imag > 0


def test_unitary_invariance():
    rng = np.random.default_rng(15)
    U = random_unitary(rng, 3)
    T = U @ np.diag([1.0, 0, 0]) @ U.conj().T
    h = 0.4
    H = h * T
    spec = SelfAdjointProblem(T, H, FourierSeries([herm(rng, 3), 0.5 * herm(rng, 3)]))
    a = locate_spectrum(spec, 6).lam_array()
    b = locate_spectrum(canonicalize(spec).problem, 6).lam_array()
    assert np.max(np.abs(a - b)) < 1e-9


def test_remainders_examples(q0_solved, diag2_solved, coupled3_solved):
    r = remainders(q0_solved.table, q0_solved.constants)
    assert np.max(np.abs(r.kappa)) < 1e-10
    r = remainders(diag2_solved.table, diag2_solved.constants)
    assert np.all(np.diff(r.partial_l2) >= 0)
    k = np.abs(r.kappa[9:])
    n = np.arange(10, 41)[:, None]
    assert np.max(k * n) < 1.0  # O(1/n)
    r = remainders(coupled3_solved.table, coupled3_solved.constants)
    assert r.increase(20, 40) < 0.01


def test_compare_problems(diag2_problem):
    N = 20
    same = compare_problems(diag2_problem, diag2_problem, N)
    assert np.max(np.abs(same.scaled_rho_diff)) == 0 and same.conditions_hold
    A = np.array([[0.0, 0.3], [0.3, 0.5]])
    Qhat = FourierSeries([np.diag([0.6, -0.4]), np.zeros((2, 2)), A])
    ok = compare_problems(diag2_problem, SelfAdjointProblem(diag2_problem.T, diag2_problem.H, Qhat), N)
    assert ok.conditions_hold
    assert ok.partial_l2[-1] - ok.partial_l2[N // 2 - 1] < 0.01 * ok.partial_l2[-1]
    shift = ConstantHermitian(np.diag([0.6, -0.4 + 0.2]))
    bad = compare_problems(diag2_problem, SelfAdjointProblem(diag2_problem.T, diag2_problem.H, shift), N)
    assert not bad.conditions_hold
    d = np.abs(bad.scaled_rho_diff[-5:, 1])
    assert np.all(d > 0.09)  # tends to c/2 = 0.1, no decay
