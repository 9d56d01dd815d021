import numpy as np
import pytest

from foliate.model import (
    FlowModel,
    build_chafee_infante,
    build_ns_kolmogorov,
    default_tau,
    jet_from_callable,
    make_eigenvalue_split,
    make_map_model,
    make_split_choice,
    polynomial_jet,
    time_tau_map,
    transform_flow,
    transform_map,
)
from foliate.spectral import compute_spectrum
from foliate.tensor_poly import JetMap, compose_jets


def quadratic_map_jet(N=2):
    return polynomial_jet(2, 2, N, [((1, 0), 0, 0.5), ((0, 1), 1, 0.6), ((0, 2), 0, 1.0)])


class TestMakeMapModel:
    def test_polynomial_readoff(self):
        def f(x):
            return np.array([0.5 * x[0] + x[1] ** 2, 0.6 * x[1]])

        m = make_map_model(f, N_jet=2)
        assert np.allclose(m.A, [[0.5, 0.0], [0.0, 0.6]], atol=1e-10)
        assert m.jet.component(2).coefficient([0, 2]) == pytest.approx([1.0, 0.0], abs=1e-9)

    def test_linear_map_has_trivial_higher_jet(self):
        A = np.array([[0.4, 0.1], [0.0, 0.3]])
        m = make_map_model(lambda x: A @ x, N_jet=3)
        for n in (2, 3):
            assert m.jet.component(n).max_abs() < 1e-9

    def test_fixed_point_violation(self):
        with pytest.raises(ValueError, match="fixed point"):
            make_map_model(lambda x: np.array([x[0] + 1e-3, x[1]]), N_jet=1)

    def test_supplied_jet_must_match_eval(self):
        jet = polynomial_jet(1, 1, 1, [((1,), 0, 0.9)])
        with pytest.raises(ValueError, match="Jacobian"):
            make_map_model(lambda x: 0.5 * x, jet=jet)

    def test_fd_jet_orders_capped(self):
        with pytest.raises(ValueError, match="degree 4"):
            jet_from_callable(lambda x: x, 1, 5)

    def test_fd_jet_cubic_accuracy(self):
        def f(x):
            return np.array([-x[0] + 0.3 * x[0] ** 2 * x[1], 2.0 * x[1] + x[0] ** 3])

        jet = jet_from_callable(f, 2, 3)
        assert jet.component(2).coefficient([1, 1])[0] == pytest.approx(0.0, abs=1e-9)
        assert jet.component(3).coefficient([2, 1])[0] == pytest.approx(0.3, abs=1e-8)
        assert jet.component(3).coefficient([3, 0])[1] == pytest.approx(1.0, abs=1e-8)


class TestTimeTauMap:
    def test_scalar_linear_flow(self):
        fl = FlowModel(dim=1, vector_field=lambda x: -x,
                       vf_jet=JetMap.from_linear([[-1.0]]), G=np.array([[-1.0]]),
                       polynomial=True)
        m = time_tau_map(fl, 1.0, 3)
        assert m.A[0, 0] == pytest.approx(np.exp(-1.0), abs=1e-10)
        assert all(m.jet.component(n).max_abs() < 1e-12 for n in (2, 3))

    def test_variation_of_constants_closed_form(self):
        # x' = -x, y' = -3y + x^2: y(t) = e^{-3t} y0 + (e^{-2t} - e^{-3t}) x0^2
        vf = polynomial_jet(2, 2, 2, [((1, 0), 0, -1.0), ((0, 1), 1, -3.0), ((2, 0), 1, 1.0)])
        fl = FlowModel(dim=2, vector_field=vf, vf_jet=vf,
                       G=np.diag([-1.0, -3.0]), polynomial=True)
        m = time_tau_map(fl, 1.0, 3)
        c = m.jet.component(2).coefficient([2, 0])[1]
        assert c == pytest.approx(np.exp(-2.0) - np.exp(-3.0), abs=1e-10)
        # quadrature oracle for the same coefficient
        from scipy.integrate import quad
        oracle, _ = quad(lambda s: np.exp(-3.0 * (1.0 - s)) * np.exp(-2.0 * s), 0.0, 1.0)
        assert c == pytest.approx(oracle, abs=1e-10)

    def test_spectral_mapping(self):
        fl = build_chafee_infante(0.5, 4)
        tau = default_tau(fl.G)
        m = time_tau_map(fl, tau, 2)
        assert m.meta["spectral_mapping_error"] <= 1e-8

    def test_semigroup_property_of_jets(self):
        vf = polynomial_jet(2, 2, 2, [((1, 0), 0, -1.0), ((0, 1), 1, -3.0), ((2, 0), 1, 1.0)])
        fl = FlowModel(dim=2, vector_field=vf, vf_jet=vf,
                       G=np.diag([-1.0, -3.0]), polynomial=True)
        half = time_tau_map(fl, 0.5, 3)
        full = time_tau_map(fl, 1.0, 3)
        squared = compose_jets(half.jet, half.jet, 3)
        for n in range(4):
            diff = np.max(np.abs(squared.component(n).coeffs - full.jet.component(n).coeffs))
            assert diff <= 1e-8

    def test_jet_transport_order(self):
        # |phi_tau(x) - jet(x)| = O(|x|^{N+1}): empirical log-log slope
        vf = polynomial_jet(1, 1, 3, [((1,), 0, -1.0), ((3,), 0, -0.75)])
        fl = FlowModel(dim=1, vector_field=vf, vf_jet=vf, G=np.array([[-1.0]]),
                       polynomial=True)
        N = 2
        m = time_tau_map(fl, 0.5, N)
        radii = np.geomspace(1e-4, 1e-2, 7)
        errs = []
        for r in radii:
            x = np.array([r])
            errs.append(abs(fl.flow(x, 0.5)[0] - m.jet(x)[0]) + 1e-300)
        slope = np.polyfit(np.log(radii), np.log(errs), 1)[0]
        assert abs(slope - (N + 1)) <= 0.2

    def test_requested_order_beyond_supplied_jet(self):
        vf = JetMap.from_linear([[-1.0]])
        fl = FlowModel(dim=1, vector_field=lambda x: -x + x**2, vf_jet=vf,
                       G=np.array([[-1.0]]), polynomial=False)
        with pytest.raises(ValueError, match="jet transport"):
            time_tau_map(fl, 1.0, 3)


class TestChafeeInfante:
    def test_single_mode_cubic_coefficient(self):
        fl = build_chafee_infante(0.5, 1)
        assert fl.G[0, 0] == pytest.approx(-0.5)
        assert fl.vf_jet.component(3).coefficient([3])[0] == pytest.approx(-0.75, abs=1e-14)

    def test_three_mode_spectrum(self):
        fl = build_chafee_infante(0.5, 3)
        eigs = sorted(np.linalg.eigvals(fl.G).real, reverse=True)
        assert eigs == pytest.approx([-0.5, -3.5, -8.5])

    @pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
    def test_subcritical_parameter_is_stable(self, lam):
        fl = build_chafee_infante(lam, 5)
        assert np.all(np.linalg.eigvals(fl.G).real < 0)

    def test_vector_field_is_odd(self):
        fl = build_chafee_infante(0.5, 3)
        x = np.array([0.1, -0.2, 0.05])
        assert np.allclose(fl.vector_field(-x), -fl.vector_field(x), atol=1e-14)


class TestNSKolmogorov:
    def test_unforced_is_stokes_decay(self):
        fl = build_ns_kolmogorov(20.0, 1, 2, forcing_amplitude=0.0)
        eigs = np.linalg.eigvals(fl.G)
        waves = fl.meta["waves"]
        expected = sorted(
            -(k[0] ** 2 + k[1] ** 2) / 20.0 for k in waves for _ in range(2))
        assert sorted(eigs.real) == pytest.approx(expected, abs=1e-12)
        assert np.max(np.abs(eigs.imag)) < 1e-12

    def test_energy_conservation_of_quadratic_term(self, rng):
        fl = build_ns_kolmogorov(20.0, 1, 2, forcing_amplitude=0.05)
        quad = fl.vf_jet.component(2)
        for _ in range(10):
            x = rng.standard_normal(fl.dim)
            assert abs(float(np.dot(quad(x), x))) <= 1e-12 * max(1.0, np.linalg.norm(x) ** 3)

    def test_subcritical_stability(self):
        fl = build_ns_kolmogorov(20.0, 1, 2, forcing_amplitude=0.05)
        assert np.all(np.linalg.eigvals(fl.G).real < 0)

    def test_forcing_must_be_retained(self):
        with pytest.raises(ValueError, match="forcing"):
            build_ns_kolmogorov(20.0, 1, 2, forcing_wavenumber=5)


class TestSplitChoice:
    def test_diagonal(self):
        split = make_split_choice(np.diag([0.5, 0.25]), [0.5])
        assert np.allclose(split.block0, [[0.5]], atol=1e-12)
        assert np.allclose(split.block1, [[0.25]], atol=1e-12)
        assert np.max(np.abs(split.coupling)) < 1e-12

    def test_triangular_coupling_kept(self):
        A = np.array([[0.5, 0.0], [1.0, 0.25]])
        split = make_split_choice(A, [0.5])
        assert np.allclose(split.block0, [[0.5]], atol=1e-12)
        assert np.allclose(split.block1, [[0.25]], atol=1e-12)
        assert np.allclose(split.coupling, [[1.0]], atol=1e-12)
        assert split.triangular_defect <= 1e-10

    def test_other_subset(self):
        A = np.array([[0.5, 0.0], [1.0, 0.25]])
        split = make_split_choice(A, [0.25])
        assert np.allclose(split.block0, [[0.25]], atol=1e-12)
        # the left eigendirection for 0.25 is not a coordinate direction
        assert split.triangular_defect <= 1e-10

    def test_triangularity_random(self, rng):
        for _ in range(10):
            d = int(rng.integers(3, 8))
            values = np.linspace(0.85, 0.1, d)
            V = rng.standard_normal((d, d)) + 2 * np.eye(d)
            A = V @ np.diag(values) @ np.linalg.inv(V)
            k = int(rng.integers(1, d))
            split = make_split_choice(A, values[:k])
            At = split.to_adapted @ A @ split.from_adapted
            scale = max(1.0, np.max(np.abs(At)))
            assert np.max(np.abs(At[:k, k:])) <= 1e-10 * scale

    def test_eigenvalue_split_realified(self):
        G = np.array([[-1.0, 2.0, 0.0], [-2.0, -1.0, 0.0], [0.3, 0.0, -3.0]])
        split = make_eigenvalue_split(G, -1 + 2j)
        assert np.allclose(split.block0, [[-1.0, -2.0], [2.0, -1.0]], atol=1e-10)
        lam = split.meta["lambda"]
        assert lam == pytest.approx(-1 + 2j)
        # the left row pairs to one against the right eigenvector
        Q, v = split.meta["left_row"], split.meta["eigenvector"]
        assert Q @ v == pytest.approx(1.0, abs=1e-12)

    def test_eigenvalue_split_rejects_nonmember(self):
        with pytest.raises(ValueError, match="not an eigenvalue"):
            make_eigenvalue_split(np.diag([-1.0, -2.0]), -1.5)


class TestTransforms:
    def test_transform_map_preserves_dynamics(self, rng):
        jet = quadratic_map_jet(3)
        from foliate.model import MapModel
        model = MapModel(dim=2, eval=jet, jet=jet, A=jet.linear_part())
        split = make_split_choice(model, [0.6])
        adapted = transform_map(model, split)
        x = 0.1 * rng.standard_normal(2)
        z = split.to_adapted @ x
        assert np.allclose(adapted.eval(z), split.to_adapted @ model.eval(x), atol=1e-12)
        assert np.allclose(adapted.jet(z), split.to_adapted @ model.jet(x), atol=1e-12)

    def test_transform_flow_preserves_dynamics(self, rng):
        fl = build_chafee_infante(0.5, 3)
        split = make_split_choice(fl, [-0.5])
        adapted = transform_flow(fl, split)
        x = 0.05 * rng.standard_normal(3)
        z = split.to_adapted @ x
        assert np.allclose(adapted.vector_field(z), split.to_adapted @ fl.vector_field(x),
                           atol=1e-12)
        assert np.allclose(adapted.G, split.to_adapted @ fl.G @ split.from_adapted)

    def test_default_tau_clipping(self):
        assert default_tau(np.diag([-100.0])) == pytest.approx(1e-2)
        assert default_tau(np.diag([-0.01])) == pytest.approx(1.0)
        assert default_tau(np.diag([-2.0])) == pytest.approx(0.25)


class TestSpectrumOfModels:
    def test_chafee_infante_spectral_report(self):
        fl = build_chafee_infante(0.5, 8)
        rep = compute_spectrum(fl.G)
        assert rep.spectral_radius == pytest.approx(63.5)
        assert max(z.real for z in rep.eigenvalues) == pytest.approx(-0.5)
