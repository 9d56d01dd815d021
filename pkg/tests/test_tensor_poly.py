import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foliate.tensor_poly import (
    BlockIndex,
    HomogeneousPoly,
    JetMap,
    Splitting,
    compose_jets,
    eval_jet,
    invert_jet,
    jet_from_dict,
    jet_jacobian,
    jet_to_dict,
    merge_blocks,
    monomial_count,
    monomial_exponents,
    split_blocks,
    substitute_linear,
)


def random_jet(rng, in_dim, out_dim, N, scale=1.0, zero_constant=True):
    comps = []
    for n in range(N + 1):
        coeffs = scale * rng.standard_normal((monomial_count(in_dim, n), out_dim))
        if n == 0 and zero_constant:
            coeffs[:] = 0.0
        comps.append(HomogeneousPoly(n, in_dim, out_dim, coeffs))
    return JetMap(comps)


class TestMonomials:
    def test_counts(self):
        assert monomial_count(2, 2) == 3
        assert monomial_count(3, 0) == 1
        assert monomial_count(4, 3) == 20

    def test_exponent_order_is_graded_lex(self):
        exps = monomial_exponents(2, 2)
        assert [list(r) for r in exps] == [[2, 0], [1, 1], [0, 2]]

    def test_degree_rows_sum(self):
        exps = monomial_exponents(3, 4)
        assert np.all(exps.sum(axis=1) == 4)
        assert exps.shape[0] == monomial_count(3, 4)


class TestEval:
    def test_identity_jet(self):
        j = JetMap.identity(2)
        x = np.array([0.3, -0.2])
        assert np.allclose(eval_jet(j, x), x)

    def test_scalar_jet_value(self):
        j = JetMap.from_components(1, 1, 2, {
            1: HomogeneousPoly(1, 1, 1, [[0.5]]),
            2: HomogeneousPoly(2, 1, 1, [[7.142857]]),
        })
        assert eval_jet(j, np.array([0.1]))[0] == pytest.approx(0.05 + 7.142857 * 0.01, abs=1e-15)

    def test_value_at_origin_is_constant_component(self, rng):
        j = random_jet(rng, 3, 2, 3, zero_constant=False)
        assert np.allclose(eval_jet(j, np.zeros(3)), j.constant_part())

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            JetMap.identity(2)(np.zeros(3))

    @given(st.integers(1, 3), st.integers(1, 4), st.sampled_from([0.5, 2.0]),
           st.integers(0, 10_000))
    def test_homogeneity(self, dim, degree, s, seed):
        rng = np.random.default_rng(seed)
        p = HomogeneousPoly(degree, dim, 2,
                            rng.standard_normal((monomial_count(dim, degree), 2)))
        x = rng.standard_normal(dim)
        lhs = p(s * x)
        rhs = s ** degree * p(x)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


class TestCompose:
    def test_linear_chain_rule(self, rng):
        A = rng.standard_normal((3, 2))
        B = rng.standard_normal((2, 4))
        out = compose_jets(JetMap.from_linear(A), JetMap.from_linear(B), 2)
        assert np.allclose(out.linear_part(), A @ B)

    def test_square_of_shifted_identity(self):
        outer = JetMap.from_components(1, 1, 2, {2: HomogeneousPoly(2, 1, 1, [[1.0]])})
        inner = JetMap.from_components(1, 1, 2, {
            1: HomogeneousPoly(1, 1, 1, [[1.0]]),
            2: HomogeneousPoly(2, 1, 1, [[1.0]]),
        })
        out = compose_jets(outer, inner, 4)
        got = [out.component(n).coeffs.ravel()[0] for n in range(5)]
        assert got == [0.0, 0.0, 1.0, 2.0, 1.0]

    def test_identity_right_unit(self, rng):
        j = random_jet(rng, 3, 2, 3)
        out = compose_jets(j, JetMap.identity(3), 3)
        for n in range(4):
            assert np.allclose(out.component(n).coeffs, j.component(n).coeffs)

    def test_truncates_at_requested_degree(self, rng):
        j = random_jet(rng, 2, 2, 4)
        out = compose_jets(j, JetMap.identity(2), 2)
        assert out.N == 2

    def test_nonzero_constant_rejected(self, rng):
        inner = random_jet(rng, 2, 2, 2, zero_constant=False)
        inner = inner.with_component(HomogeneousPoly(0, 2, 2, [[1.0, 0.0]]))
        with pytest.raises(ValueError, match="constant"):
            compose_jets(JetMap.identity(2), inner, 2)

    def test_dimension_chain_rejected(self, rng):
        with pytest.raises(ValueError, match="mismatch"):
            compose_jets(JetMap.identity(3), JetMap.identity(2), 1)

    @given(st.integers(0, 100))
    @settings(max_examples=15)
    def test_associativity_on_cubic_jets(self, seed):
        rng = np.random.default_rng(seed)
        dim = int(rng.integers(1, 5))
        N = 3
        a = random_jet(rng, dim, dim, N, scale=0.4)
        b = random_jet(rng, dim, dim, N, scale=0.4)
        c = random_jet(rng, dim, dim, N, scale=0.4)
        left = compose_jets(compose_jets(a, b, N), c, N)
        right = compose_jets(a, compose_jets(b, c, N), N)
        for n in range(N + 1):
            diff = np.max(np.abs(left.component(n).coeffs - right.component(n).coeffs))
            scale = max(1.0, left.component(n).max_abs())
            assert diff <= 1e-12 * scale

    def test_matches_pointwise_evaluation(self, rng):
        outer = random_jet(rng, 2, 3, 3, zero_constant=False)
        inner = random_jet(rng, 4, 2, 3)
        comp = compose_jets(outer, inner, 3)
        # for exactly polynomial maps and full truncation order the values agree
        x = 0.3 * rng.standard_normal(4)
        direct = eval_jet(outer, eval_jet(inner, x))
        # composition truncated at 3 drops degrees 4..9 of the exact product
        assert np.allclose(comp(x), direct, atol=0.3 ** 4 * 50)


class TestSubstituteInvert:
    def test_substitute_linear_matches_eval(self, rng):
        p = HomogeneousPoly(3, 2, 2, rng.standard_normal((monomial_count(2, 3), 2)))
        M = rng.standard_normal((2, 2))
        q = substitute_linear(p, M)
        x = rng.standard_normal(2)
        assert np.allclose(q(x), p(M @ x))

    def test_invert_jet_roundtrip(self, rng):
        j = random_jet(rng, 3, 3, 4, scale=0.3)
        j = j.with_component(HomogeneousPoly(1, 3, 3, np.eye(3) + 0.1 * rng.standard_normal((3, 3))))
        inv = invert_jet(j, 4)
        comp = compose_jets(j, inv, 4)
        ident = JetMap.identity(3, 4)
        for n in range(5):
            assert np.max(np.abs(comp.component(n).coeffs - ident.component(n).coeffs)) < 1e-10

    def test_jacobian_matches_finite_difference(self, rng):
        j = random_jet(rng, 3, 2, 3, zero_constant=False)
        x = 0.3 * rng.standard_normal(3)
        J = jet_jacobian(j, x)
        h = 1e-6
        for v in range(3):
            e = np.zeros(3)
            e[v] = h
            fd = (j(x + e) - j(x - e)) / (2 * h)
            assert np.allclose(J[:, v], fd, atol=1e-8)


class TestSplitting:
    def test_projection_identities(self):
        s = Splitting(5, (0, 2))
        assert np.allclose(s.proj0 + s.proj1, np.eye(5), atol=1e-12)
        assert np.allclose(s.proj0 @ s.proj1, 0.0, atol=1e-12)
        assert np.allclose(s.proj0_restricted @ s.iota0, np.eye(2), atol=1e-12)
        assert np.allclose(s.proj1_restricted @ s.iota1, np.eye(3), atol=1e-12)
        assert np.allclose(s.proj0_restricted @ s.iota1, 0.0, atol=1e-12)
        assert np.allclose(s.proj1_restricted @ s.iota0, 0.0, atol=1e-12)

    def test_trivial_complement_allowed(self):
        # full-space distinguished block: the linearization special case
        s = Splitting(2, (0, 1))
        assert s.dim1 == 0
        assert np.allclose(s.proj0, np.eye(2))
        assert s.iota1.shape == (2, 0)

    def test_block_index(self):
        b = BlockIndex.of_weight(2, 4)
        assert b.alpha == (0, 0, 1, 1)
        assert b.weight == 2
        with pytest.raises(ValueError):
            BlockIndex((0, 2))


class TestSplitMerge:
    def test_linear_split(self):
        s = Splitting(2, (0,))
        p = HomogeneousPoly(1, 2, 1, [[2.0], [3.0]])
        blocks = split_blocks(p, s)
        w0 = blocks[BlockIndex.of_weight(0, 1)]
        w1 = blocks[BlockIndex.of_weight(1, 1)]
        assert w0.coefficient([1, 0])[0] == 2.0 and w0.coefficient([0, 1])[0] == 0.0
        assert w1.coefficient([0, 1])[0] == 3.0 and w1.coefficient([1, 0])[0] == 0.0

    def test_mixed_monomial_lands_in_weight_one(self):
        s = Splitting(2, (0,))
        p = HomogeneousPoly.from_terms(2, 2, 1, [((1, 1), 0, 5.0)])
        blocks = split_blocks(p, s)
        assert blocks[BlockIndex.of_weight(1, 2)].coefficient([1, 1])[0] == 5.0
        assert blocks[BlockIndex.of_weight(2, 2)].max_abs() == 0.0

    @pytest.mark.parametrize("degree", [1, 2, 3])
    def test_roundtrip(self, rng, degree):
        s = Splitting(4, (0, 1))
        p = HomogeneousPoly(degree, 4, 2,
                            rng.standard_normal((monomial_count(4, degree), 2)))
        q = merge_blocks(split_blocks(p, s), s)
        assert np.max(np.abs(q.coeffs - p.coeffs)) <= 1e-14

    @given(st.integers(1, 5), st.integers(0, 1000))
    @settings(max_examples=25)
    def test_roundtrip_random_degrees(self, degree, seed):
        rng = np.random.default_rng(seed)
        s = Splitting(3, (0,))
        p = HomogeneousPoly(degree, 3, 2,
                            rng.standard_normal((monomial_count(3, degree), 2)))
        q = merge_blocks(split_blocks(p, s), s)
        assert np.max(np.abs(q.coeffs - p.coeffs)) <= 1e-13

    def test_linearity(self, rng):
        s = Splitting(3, (1,))
        p = HomogeneousPoly(2, 3, 1, rng.standard_normal((monomial_count(3, 2), 1)))
        q = HomogeneousPoly(2, 3, 1, rng.standard_normal((monomial_count(3, 2), 1)))
        combo = HomogeneousPoly(2, 3, 1, 2.0 * p.coeffs + 3.0 * q.coeffs)
        bp, bq, bc = split_blocks(p, s), split_blocks(q, s), split_blocks(combo, s)
        for key in bc:
            assert np.allclose(bc[key].coeffs, 2.0 * bp[key].coeffs + 3.0 * bq[key].coeffs)

    def test_non_adapted_coordinates_refused(self, rng):
        s = Splitting(2, (0,), change_of_basis=np.array([[1.0, 1.0], [0.0, 1.0]]))
        p = HomogeneousPoly(2, 2, 1, rng.standard_normal((3, 1)))
        with pytest.raises(ValueError, match="adapted"):
            split_blocks(p, s)


class TestSerialization:
    def test_roundtrip_exact(self, rng, tmp_path):
        j = random_jet(rng, 3, 2, 3, zero_constant=False)
        data = jet_to_dict(j)
        back = jet_from_dict(data)
        for n in range(4):
            assert np.array_equal(back.component(n).coeffs, j.component(n).coeffs)

    def test_schema_fields(self, rng):
        j = random_jet(rng, 2, 1, 2)
        data = jet_to_dict(j)
        assert set(data) == {"in_dim", "out_dim", "N", "components"}
        comp = data["components"][2]
        assert comp["degree"] == 2
        assert [m["exponents"] for m in comp["monomials"]] == [[2, 0], [1, 1], [0, 2]]

    def test_json_serializable(self, rng):
        j = random_jet(rng, 2, 2, 2)
        json.dumps(jet_to_dict(j))
