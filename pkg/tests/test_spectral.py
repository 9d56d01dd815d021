import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foliate.spectral import (
    check_cross_resonances,
    check_generator_resonances,
    check_self_resonances,
    compute_spectrum,
    estimate_decay,
    realify_block,
    select_reduced_degree,
    spectral_projection,
)


class TestComputeSpectrum:
    def test_diagonal(self):
        rep = compute_spectrum(np.diag([0.5, 0.25]))
        assert set(rep.eigenvalues) == {0.5, 0.25}
        assert rep.spectral_radius == pytest.approx(0.5)

    def test_rotation_scale(self):
        rep = compute_spectrum(np.array([[0.3, -0.4], [0.4, 0.3]]))
        assert sorted(rep.eigenvalues, key=lambda z: z.imag) == [
            pytest.approx(0.3 - 0.4j), pytest.approx(0.3 + 0.4j)]
        assert rep.spectral_radius == pytest.approx(0.5)

    def test_identity_multiplicity(self):
        rep = compute_spectrum(np.eye(3))
        assert rep.eigenvalues == (1.0,)
        assert rep.multiplicities == (3,)
        assert rep.spectral_radius == pytest.approx(1.0)

    def test_radius_consistency(self, rng):
        A = 0.3 * rng.standard_normal((6, 6))
        rep = compute_spectrum(A)
        radius = max(abs(z) for z, m in zip(rep.eigenvalues, rep.multiplicities) for _ in range(m))
        assert rep.spectral_radius == pytest.approx(radius, rel=1e-10)

    @given(st.integers(0, 500))
    @settings(max_examples=30)
    def test_conjugate_closure_for_real_matrices(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((5, 5))
        rep = compute_spectrum(A)
        values = rep.with_multiplicity()
        conj = np.conj(values)
        # multiset equality under conjugation
        for z in values:
            assert np.min(np.abs(conj - z)) < 1e-10 * max(1.0, abs(z))

    def test_defective_matrix_flagged(self):
        A = np.array([[0.5, 1.0], [0.0, 0.5]])
        rep = compute_spectrum(A)
        assert not rep.diagonalizable
        assert rep.multiplicities == (2,)

    def test_rejects_rectangular(self):
        with pytest.raises(ValueError):
            compute_spectrum(np.zeros((2, 3)))


class TestReducedDegree:
    def test_basic_example(self):
        c = select_reduced_degree([0.5], [0.5, 0.25], 10)
        assert c.minimal == 1 and c.largest == 9

    def test_marginal_spectrum(self):
        c = select_reduced_degree([0.9], [0.9], 10)
        assert c.minimal == 1

    def test_slow_decay_needs_high_degree(self):
        c = select_reduced_degree([0.1], [0.99], 400)
        assert c.minimal == 229

    def test_inadmissible_when_cap_too_small(self):
        c = select_reduced_degree([0.1], [0.99], 10)
        assert not c.admissible

    def test_rejects_zero_in_block(self):
        with pytest.raises(ValueError):
            select_reduced_degree([0.0, 0.5], [0.5])

    def test_radius_one_inadmissible(self):
        assert not select_reduced_degree([0.5], [1.0]).admissible


class TestResonanceChecks:
    def test_cross_pass(self):
        assert check_cross_resonances([0.5], [0.25], 2).passed

    def test_cross_violation(self):
        rep = check_cross_resonances([0.25], [0.5], 2)
        assert not rep.passed
        v = rep.violations[0]
        assert (v.degree, v.weight) == (2, 2)
        assert v.target == 0.25

    def test_degree_one_vacuous(self):
        rep = check_cross_resonances([0.5], [0.25], 1)
        assert rep.passed and rep.checked == 0

    def test_self_pass(self):
        assert check_self_resonances([0.5], 3, 2).passed

    def test_self_violation(self):
        rep = check_self_resonances([0.5, 0.25], 2, 2)
        assert not rep.passed
        assert rep.violations[0].degree == 2

    def test_self_positive_scalar_never_resonant(self):
        for lam in (0.1, 0.5, 0.9):
            assert check_self_resonances([lam], 6, 2).passed

    def test_generator_pass(self):
        reports = check_generator_resonances([-1, -3], [-1], [-3], 2)
        assert all(r.passed for r in reports.values())

    def test_generator_violation(self):
        reports = check_generator_resonances([-1, -2], [-2], [-1], 2)
        assert not reports["cross_sums"].passed

    def test_generator_degree_one_only_gap(self):
        reports = check_generator_resonances([-1, -3], [-1], [-3], 1)
        assert reports["cross_sums"].checked == 0
        assert reports["self_sums"].checked == 0
        assert reports["gap"].passed

    def test_generator_rejects_unstable(self):
        with pytest.raises(ValueError):
            check_generator_resonances([0.1], [0.1], [-1], 2)

    def test_near_resonance_warning(self):
        rep = check_cross_resonances([0.25 + 1e-6], [0.5], 2, tol_res=1e-8, near_tol=1e-4)
        assert rep.passed and rep.warnings


def oracle_cross(sigma0, sigma1, rdeg, tol):
    """Independent exhaustive enumerator over ordered index tuples."""
    hits = set()
    for n in range(2, rdeg + 1):
        for j in range(1, n + 1):
            for pick0 in itertools.product(range(len(sigma0)), repeat=n - j):
                for pick1 in itertools.product(range(len(sigma1)), repeat=j):
                    prod = 1.0 + 0.0j
                    for i in pick0:
                        prod *= sigma0[i]
                    for i in pick1:
                        prod *= sigma1[i]
                    for t in sigma0:
                        if abs(prod - t) <= tol * max(abs(t), 1e-300):
                            hits.add((n, j, t))
    return hits


def oracle_self(sigma0, rdeg, start, tol):
    hits = set()
    for n in range(start, rdeg + 1):
        for pick in itertools.product(range(len(sigma0)), repeat=n):
            prod = 1.0 + 0.0j
            for i in pick:
                prod *= sigma0[i]
            for t in sigma0:
                if abs(prod - t) <= tol * max(abs(t), 1e-300):
                    hits.add((n, t))
    return hits


def oracle_generator_sums(sigma0, sigma1, rdeg, tol):
    hits = set()
    for n in range(2, rdeg + 1):
        for j in range(1, n + 1):
            for pick0 in itertools.product(range(len(sigma0)), repeat=n - j):
                for pick1 in itertools.product(range(len(sigma1)), repeat=j):
                    total = sum(sigma0[i] for i in pick0) + sum(sigma1[i] for i in pick1)
                    for t in sigma0:
                        if abs(total - t) <= tol * max(abs(t), 1e-300):
                            hits.add((n, j, t))
    return hits


def random_spectrum(rng, size, stable=False):
    values = []
    while len(values) < size:
        if rng.random() < 0.6 or size - len(values) < 2:
            values.append(complex(rng.uniform(-0.9, -0.05) if stable else rng.uniform(0.05, 0.95), 0.0))
        else:
            re = rng.uniform(-0.9, -0.05) if stable else rng.uniform(0.05, 0.7)
            im = rng.uniform(0.05, 0.6)
            values.extend([complex(re, im), complex(re, -im)])
    return values[:size]


class TestOracleEquivalence:
    def test_cross_matches_oracle(self, rng):
        for _ in range(40):
            s0 = random_spectrum(rng, int(rng.integers(1, 4)))
            s1 = random_spectrum(rng, int(rng.integers(1, 4)))
            rdeg = int(rng.integers(2, 5))
            rep = check_cross_resonances(s0, s1, rdeg, 1e-8)
            got = {(v.degree, v.weight, v.target) for v in rep.violations}
            assert got == oracle_cross(s0, s1, rdeg, 1e-8)

    def test_self_matches_oracle(self, rng):
        for _ in range(40):
            s0 = random_spectrum(rng, int(rng.integers(1, 5)))
            rdeg = int(rng.integers(2, 5))
            rep = check_self_resonances(s0, rdeg, 2, 1e-8)
            got = {(v.degree, v.target) for v in rep.violations}
            assert got == oracle_self(s0, rdeg, 2, 1e-8)

    def test_generator_matches_oracle(self, rng):
        for _ in range(40):
            s0 = random_spectrum(rng, int(rng.integers(1, 4)), stable=True)
            s1 = random_spectrum(rng, int(rng.integers(1, 4)), stable=True)
            rdeg = int(rng.integers(2, 5))
            reports = check_generator_resonances(s0 + s1, s0, s1, rdeg, 1e-8)
            got = {(v.degree, v.weight, v.target) for v in reports["cross_sums"].violations}
            assert got == oracle_generator_sums(s0, s1, rdeg, 1e-8)


class TestSpectralProjection:
    def test_diagonal(self):
        P, basis = spectral_projection(np.diag([0.5, 0.25]), [0.5])
        assert np.allclose(P, np.diag([1.0, 0.0]), atol=1e-12)

    def test_triangular_eigvector_range(self):
        A = np.array([[0.5, 0.0], [1.0, 0.25]])
        P, basis = spectral_projection(A, [0.5])
        direction = basis.ravel() / basis.ravel()[0]
        assert np.allclose(direction, [1.0, 4.0], atol=1e-10)

    def test_full_subset_is_identity(self):
        A = np.array([[0.5, 0.0], [1.0, 0.25]])
        P, _ = spectral_projection(A, [0.5, 0.25])
        assert np.allclose(P, np.eye(2), atol=1e-12)

    def test_projection_algebra_random(self, rng):
        for _ in range(10):
            d = int(rng.integers(3, 13))
            # well-separated spectrum: random similarity of a spread diagonal
            values = np.linspace(0.1, 0.9, d) * rng.choice([-1, 1], d)
            V = rng.standard_normal((d, d)) + np.eye(d) * 2
            A = V @ np.diag(values) @ np.linalg.inv(V)
            k = int(rng.integers(1, d))
            subset = values[:k]
            P, basis = spectral_projection(A, subset, tol=1e-6)
            assert np.max(np.abs(P @ P - P)) <= 1e-9
            assert np.max(np.abs(A @ P - P @ A)) <= 1e-9
            assert np.linalg.matrix_rank(P, tol=1e-6) == k
            assert basis.shape == (d, k)

    def test_conjugation_closure_required(self):
        A = np.array([[0.3, -0.4], [0.4, 0.3]])
        with pytest.raises(ValueError, match="conjugation"):
            spectral_projection(A, [0.3 + 0.4j])
        P, _ = spectral_projection(A, [0.3 + 0.4j, 0.3 - 0.4j])
        assert np.allclose(P, np.eye(2), atol=1e-12)

    def test_gap_below_tolerance(self):
        A = np.diag([0.5, 0.5 + 1e-12])
        with pytest.raises(ValueError, match="gap"):
            spectral_projection(A, [0.5], tol=1e-9, match_tol=1e-13)


class TestRealify:
    def test_real_scalar(self):
        assert np.array_equal(realify_block(-1.0), [[-1.0]])

    def test_complex_block(self):
        assert np.array_equal(realify_block(-1 + 2j), [[-1.0, -2.0], [2.0, -1.0]])

    def test_pure_rotation(self):
        assert np.array_equal(realify_block(1j), [[0.0, -1.0], [1.0, 0.0]])

    def test_eigenvalues_are_conjugate_pair(self):
        lam = -0.3 + 0.7j
        eigs = np.linalg.eigvals(realify_block(lam))
        assert sorted(eigs, key=lambda z: z.imag) == [
            pytest.approx(np.conj(lam)), pytest.approx(lam)]

    @pytest.mark.parametrize("t", [0.1, 1.0])
    def test_exponential_matches_rotation_scaling(self, t):
        import scipy.linalg
        lam = -0.4 + 1.3j
        E = scipy.linalg.expm(t * realify_block(lam))
        w = np.exp(t * lam)
        expected = np.array([[w.real, -w.imag], [w.imag, w.real]])
        assert np.max(np.abs(E - expected)) <= 1e-12


class TestDecay:
    def test_diagonal(self):
        d = estimate_decay(np.diag([0.5, 0.25]))
        assert d.rate == pytest.approx(0.5, rel=1e-6)
        assert d.prefactor == pytest.approx(1.0, rel=1e-6)

    def test_transient_growth(self):
        d = estimate_decay(np.array([[0.5, 10.0], [0.0, 0.5]]))
        assert 0.5 <= d.rate < 1.0
        assert d.prefactor > 5.0

    def test_nilpotent(self):
        d = estimate_decay(np.zeros((2, 2)))
        assert d.rate == 0.0

    def test_bound_dominates_observed_norms(self, rng):
        A = 0.4 * rng.standard_normal((5, 5))
        d = estimate_decay(A, kmax=30)
        for k, nk in enumerate(d.norms, start=1):
            assert d.bound(k) >= nk * (1 - 1e-12)

    def test_rejects_radius_one(self):
        with pytest.raises(ValueError):
            estimate_decay(np.eye(2))
