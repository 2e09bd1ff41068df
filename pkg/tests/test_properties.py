"""Randomised structural properties (Wronskian, Weyl symmetry, invariances)."""
import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sturmspec.charfn import weyl_batch
from sturmspec.config import coupled_fourier
from sturmspec.model import SelfAdjointProblem, asymptotic_constants
from sturmspec.potentials import FourierSeries
from sturmspec.propagator import propagate_batch, wronskian_defect
from sturmspec.spectrum import locate_spectrum
from sturmspec.weights import WeightGroup, cluster_groups, is_hermitian_psd, weight_sums_for_groups

from conftest import herm, random_unitary

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)
slow = settings(max_examples=5, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])


def random_problem(rng, m=3, p=1):
    U = random_unitary(rng, m)
    T = U @ np.diag([1.0] * p + [0.0] * (m - p)) @ U.conj().T
    H = T @ herm(rng, m) @ T
    return SelfAdjointProblem(T, H, FourierSeries([herm(rng, m), 0.5 * herm(rng, m), 0.25 * herm(rng, m)]))


@slow
@given(seeds)
def test_wronskian_conservation(seed):
    rng = np.random.default_rng(seed)
    spec = random_problem(rng)
    lam = rng.uniform(-5.0, 400.0, 100)
    b = propagate_batch(spec, lam)
    assert max(wronskian_defect(b.S[i], b.Sp[i], b.C[i], b.Cp[i]) for i in range(lam.size)) <= 1e-8


@slow
@given(seeds)
def test_weyl_symmetry(seed):
    rng = np.random.default_rng(seed)
    spec = random_problem(rng)
    lam = rng.uniform(-5.0, 400.0, 100) + 1j * rng.uniform(0.1, 5.0, 100) * rng.choice([-1, 1], 100)
    M, _, _ = weyl_batch(spec, lam, check=False)
    Mc, _, _ = weyl_batch(spec, lam.conj(), check=False)
    diff = np.linalg.norm(np.conj(np.swapaxes(Mc, -1, -2)) - M, 2, axis=(-2, -1))
    scale = np.maximum(1.0, np.linalg.norm(M, 2, axis=(-2, -1)))
    assert np.max(diff / scale) <= 1e-7


@slow
@given(seeds)
def test_unitary_invariance_of_spectrum(seed):
    rng = np.random.default_rng(seed)
    spec = random_problem(rng)
    V = random_unitary(rng, 3)
    moved = SelfAdjointProblem(V @ spec.T @ V.conj().T, V @ spec.H @ V.conj().T, spec.Q.transformed(V.conj().T))
    a = locate_spectrum(spec, 8).lam_array()
    b = locate_spectrum(moved, 8).lam_array()
    assert np.max(np.abs(a - b)) <= 1e-9


@pytest.fixture(scope="module")
def coupled_table():
    spec = SelfAdjointProblem(np.diag([1.0, 0, 0]), np.zeros((3, 3)), coupled_fourier())
    consts = asymptotic_constants(spec)
    return spec, locate_spectrum(spec, 12, constants=consts), consts


@slow
@given(st.integers(min_value=3, max_value=12), st.floats(min_value=0.3, max_value=0.9))
def test_contour_radius_independence(coupled_table, n, shrink):
    spec, table, consts = coupled_table
    groups = cluster_groups(table, consts, n)
    small = [WeightGroup(g.n, g.cid, g.members, g.center, shrink * g.radius, g.plane, g.multiplicity)
             for g in groups]
    full = weight_sums_for_groups(spec, groups)
    part = weight_sums_for_groups(spec, small)
    for a, b in zip(full, part):
        assert np.linalg.norm(a.alpha - b.alpha, 2) <= 1e-7 * np.linalg.norm(a.alpha, 2)
        assert is_hermitian_psd(a.alpha, 1e-7)
