"""Dynamical-system models: maps and flows with jets at the fixed point.

A model couples an evaluation callback with the polynomial jet of the
map (or vector field) at the origin.  Flows additionally know how to
produce their time-tau maps, with the jet propagated through the
higher-order variational equations rather than differenced numerically.
Includes two Galerkin demo systems: a scalar reaction-diffusion
truncation in a sine basis and a small divergence-free Fourier
truncation of 2-D Navier-Stokes with steady monochromatic forcing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from .spectral import realify_block, spectral_projection
from .tensor_poly import (
    HomogeneousPoly,
    JetMap,
    Splitting,
    compose_jets,
    monomial_count,
)

__all__ = [
    "MapModel",
    "FlowModel",
    "SplitChoice",
    "make_map_model",
    "jet_from_callable",
    "time_tau_map",
    "default_tau",
    "build_chafee_infante",
    "build_ns_kolmogorov",
    "make_split_choice",
    "make_eigenvalue_split",
    "transform_flow",
    "transform_map",
    "polynomial_jet",
]

_ODE_RTOL = 1e-10
_ODE_ATOL = 1e-12


@dataclass
class MapModel:
    """A smooth map with fixed point at the origin and its jet there."""

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    jet: JetMap
    A: np.ndarray
    fp_tol: float = 1e-12
    eval_batch: Callable[[np.ndarray], np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(x, dtype=float)), dtype=float)

    def batch(self, X: np.ndarray) -> np.ndarray:
        """Apply the map to every row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.eval_batch is not None:
            return np.asarray(self.eval_batch(X), dtype=float)
        return np.array([self(x) for x in X])


@dataclass
class FlowModel:
    """An ODE flow with stable fixed point at the origin.

    `vf_jet` is the jet of the vector field at 0; `polynomial` marks
    fields that are exactly polynomial (their jets may be padded with
    zeros at any order without loss).
    """

    dim: int
    vector_field: Callable[[np.ndarray], np.ndarray]
    vf_jet: JetMap
    G: np.ndarray
    polynomial: bool = False
    rtol: float = _ODE_RTOL
    atol: float = _ODE_ATOL
    method: str = "DOP853"
    meta: dict = field(default_factory=dict)

    def flow(self, x0: np.ndarray, t: float, t_eval: Sequence[float] | None = None) -> np.ndarray:
        """Integrate from x0 over [0, t]; returns the endpoint, or the
        states at `t_eval` (shape (len(t_eval), dim)) when given."""
        x0 = np.asarray(x0, dtype=float)
        sol = scipy.integrate.solve_ivp(
            lambda _, y: self.vector_field(y),
            (0.0, float(t)),
            x0,
            method=self.method,
            rtol=self.rtol,
            atol=self.atol,
            t_eval=None if t_eval is None else np.asarray(t_eval, dtype=float),
            dense_output=False,
        )
        if not sol.success:  # pragma: no cover - integrator failure
            raise RuntimeError(f"flow integration failed: {sol.message}")
        return sol.y[:, -1] if t_eval is None else sol.y.T

    def flow_batch(self, X0: np.ndarray, t: float,
                   t_eval: Sequence[float] | None = None) -> np.ndarray:
        """Integrate many initial conditions as one stacked system.

        Returns (n, dim), or (len(t_eval), n, dim) when t_eval is given.
        The vector field is applied row-wise, so the per-call integrator
        overhead is paid once for the whole sample set.
        """
        X0 = np.atleast_2d(np.asarray(X0, dtype=float))
        n, dim = X0.shape
        if t == 0.0:
            if t_eval is None:
                return X0.copy()
            return np.broadcast_to(X0, (len(t_eval), n, dim)).copy()

        def rhs(_, y):
            states = y.reshape(n, dim)
            try:
                out = np.asarray(self.vector_field(states), dtype=float)
                if out.shape != states.shape:
                    raise ValueError
            except Exception:
                out = np.array([self.vector_field(s) for s in states])
            return out.ravel()

        sol = scipy.integrate.solve_ivp(
            rhs, (0.0, float(t)), X0.ravel(),
            method=self.method, rtol=self.rtol, atol=self.atol,
            t_eval=None if t_eval is None else np.asarray(t_eval, dtype=float),
        )
        if not sol.success:  # pragma: no cover
            raise RuntimeError(f"flow integration failed: {sol.message}")
        if t_eval is None:
            return sol.y[:, -1].reshape(n, dim)
        return sol.y.T.reshape(len(sol.t), n, dim)


@dataclass
class SplitChoice:
    """Adapted coordinates for a chosen spectral subset.

    `to_adapted` maps original to adapted coordinates (z = T x); in the
    adapted frame the linear part is block lower-triangular with the
    distinguished block in the leading coordinates.
    """

    subset: tuple[complex, ...]
    to_adapted: np.ndarray
    from_adapted: np.ndarray
    splitting: Splitting
    block0: np.ndarray
    block1: np.ndarray
    coupling: np.ndarray
    triangular_defect: float
    is_flow: bool
    meta: dict = field(default_factory=dict)

    @property
    def dim0(self) -> int:
        return self.splitting.dim0

    @property
    def dim(self) -> int:
        return self.splitting.dim_total


def polynomial_jet(dim: int, out_dim: int, N: int,
                   terms: Sequence[tuple[Sequence[int], int, float]]) -> JetMap:
    """Jet from explicit monomial terms (exponents, component, coefficient)."""
    by_degree: dict[int, list] = {}
    for exps, comp, coeff in terms:
        degree = int(sum(exps))
        if degree > N:
            raise ValueError(f"term of degree {degree} exceeds jet order {N}")
        by_degree.setdefault(degree, []).append((exps, comp, coeff))
    parts = {
        n: HomogeneousPoly.from_terms(n, dim, out_dim, entries)
        for n, entries in by_degree.items()
    }
    return JetMap.from_components(dim, out_dim, N, parts)


# -- finite-difference jet estimation ----------------------------------------

def _fd_weights(order: int, nodes: np.ndarray) -> np.ndarray:
    """Fornberg weights for the `order`-th derivative at 0 on `nodes`."""
    n = len(nodes)
    c = np.zeros((n, order + 1))
    c1 = 1.0
    c4 = nodes[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i]
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def _mixed_derivative(f, dim, alpha, h, cache) -> np.ndarray:
    support = [v for v in range(dim) if alpha[v] > 0]
    node_sets, weight_sets = [], []
    for v in support:
        p = alpha[v] // 2 + 2
        nodes = np.arange(-p, p + 1, dtype=float)
        node_sets.append(nodes)
        weight_sets.append(_fd_weights(alpha[v], nodes * h))
    total = None
    for combo in itertools.product(*[range(len(ns)) for ns in node_sets]):
        point = np.zeros(dim)
        weight = 1.0
        for pos, ci in enumerate(combo):
            point[support[pos]] = node_sets[pos][ci] * h
            weight *= weight_sets[pos][ci]
        key = tuple(np.round(point / h).astype(int))
        if key not in cache:
            cache[key] = np.asarray(f(point), dtype=float)
        value = weight * cache[key]
        total = value if total is None else total + value
    return total


def jet_from_callable(f: Callable, dim: int, N_jet: int, h: float = 0.1) -> JetMap:
    """Estimate the jet of f at 0 by central finite differences on
    tensor-product stencils, with Richardson extrapolation over h, h/2,
    h/4 at the empirically observed order.  Intended for modest
    dimensions and N_jet <= 4; higher orders need a supplied jet."""
    if N_jet > 4:
        raise ValueError("finite-difference jets are limited to degree 4; supply a jet")
    out_dim = len(np.asarray(f(np.zeros(dim)), dtype=float))
    parts: dict[int, HomogeneousPoly] = {}
    caches = {h: {}, h / 2: {}, h / 4: {}}
    for n in range(1, N_jet + 1):
        coeffs = np.zeros((monomial_count(dim, n), out_dim))
        from .tensor_poly import monomial_exponents
        exps = monomial_exponents(dim, n)
        fact = np.array([math.prod(math.factorial(int(e)) for e in row) for row in exps])
        for m, row in enumerate(exps):
            alpha = tuple(int(v) for v in row)
            d1 = _mixed_derivative(f, dim, alpha, h, caches[h])
            d2 = _mixed_derivative(f, dim, alpha, h / 2, caches[h / 2])
            d4 = _mixed_derivative(f, dim, alpha, h / 4, caches[h / 4])
            scale = max(1.0, float(np.max(np.abs(d4))))
            e1 = float(np.linalg.norm(d2 - d1))
            e2 = float(np.linalg.norm(d4 - d2))
            if e2 <= 1e-13 * scale or e1 <= e2:
                deriv = d4
            else:
                p = min(max(math.log2(e1 / e2), 0.5), 12.0)
                deriv = d4 + (d4 - d2) / (2.0 ** p - 1.0)
            coeffs[m] = deriv / fact[m]
        parts[n] = HomogeneousPoly(n, dim, out_dim, coeffs)
    return JetMap.from_components(dim, out_dim, N_jet, parts)


def make_map_model(
    eval: Callable[[np.ndarray], np.ndarray],
    jet: JetMap | None = None,
    N_jet: int = 2,
    fp_tol: float = 1e-12,
) -> MapModel:
    """Wrap an evaluation callback into a model, estimating the jet by
    finite differences when none is supplied."""
    probe = np.asarray(eval(np.zeros(_infer_dim(eval, jet))), dtype=float)
    dim = probe.shape[0]
    residual = float(np.max(np.abs(probe)))
    if residual > fp_tol:
        raise ValueError(f"fixed point residual {residual:.3e} exceeds {fp_tol:.1e}")
    if jet is None:
        jet = jet_from_callable(eval, dim, N_jet)
    if jet.in_dim != dim or jet.out_dim != dim:
        raise ValueError("jet dimensions do not match the map")
    A = jet.linear_part()
    fd = _directional_jacobian(eval, dim)
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(fd - A)) > 1e-6 * scale:
        raise ValueError(
            "jet linear part disagrees with the finite-difference Jacobian "
            f"(max deviation {np.max(np.abs(fd - A)):.3e})"
        )
    return MapModel(dim=dim, eval=eval, jet=jet, A=A, fp_tol=fp_tol)


def _infer_dim(eval, jet) -> int:
    if jet is not None:
        return jet.in_dim
    for dim in range(1, 64):
        try:
            np.asarray(eval(np.zeros(dim)), dtype=float)
            return dim
        except Exception:
            continue
    raise ValueError("could not infer the dimension of the map; supply a jet")


def _directional_jacobian(f, dim, h: float = 1e-5) -> np.ndarray:
    cols = []
    for v in range(dim):
        e = np.zeros(dim)
        e[v] = h
        cols.append((np.asarray(f(e), dtype=float) - np.asarray(f(-e), dtype=float)) / (2 * h))
    return np.array(cols).T


# -- time-tau maps via jet transport -----------------------------------------

def default_tau(G: np.ndarray) -> float:
    """Half the fastest linear decay time, clipped to [1e-2, 1]."""
    rates = np.abs(np.real(np.linalg.eigvals(G)))
    fastest = float(np.max(rates))
    if fastest == 0.0:
        return 1.0
    return float(np.clip(1.0 / (2.0 * fastest), 1e-2, 1.0))


def time_tau_map(flow: FlowModel, tau: float, N_jet: int) -> MapModel:
    """The time-tau map of a flow together with its jet at the origin.

    The jet solves the truncated variational equation d/dt J = vf_jet o J
    from the identity jet, so every Taylor coefficient of the flow map is
    integrated rather than differenced.  The linear part is cross-checked
    against the exponential of the generator spectrum.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if not flow.polynomial and N_jet > flow.vf_jet.N:
        raise ValueError(
            f"jet transport to degree {N_jet} needs the vector-field jet to at "
            f"least that degree (have {flow.vf_jet.N})"
        )
    dim = flow.dim
    vf_jet = flow.vf_jet.padded(N_jet).truncated(N_jet)

    J0 = JetMap.identity(dim, N_jet)
    y0 = J0.flat().ravel()
    shape = J0.flat().shape

    def rhs(_, y):
        J = JetMap.from_flat(y.reshape(shape), dim, N_jet)
        return compose_jets(vf_jet, J, N_jet).flat().ravel()

    sol = scipy.integrate.solve_ivp(
        rhs, (0.0, float(tau)), y0,
        method=flow.method, rtol=flow.rtol, atol=flow.atol,
    )
    if not sol.success:  # pragma: no cover
        raise RuntimeError(f"jet transport failed: {sol.message}")
    flat = sol.y[:, -1].reshape(shape).copy()
    flat[:, 0] = 0.0
    jet = JetMap.from_flat(flat, dim, N_jet)
    A = jet.linear_part()

    mapping_error = _spectral_mapping_error(A, flow.G, tau)
    if mapping_error > 1e-6:
        raise RuntimeError(
            f"time-tau linear part violates the spectral mapping relation "
            f"(mismatch {mapping_error:.3e}); integration is not trustworthy"
        )

    def eval_map(x: np.ndarray) -> np.ndarray:
        return flow.flow(x, tau)

    def eval_map_batch(X: np.ndarray) -> np.ndarray:
        return flow.flow_batch(X, tau)

    model = MapModel(dim=dim, eval=eval_map, jet=jet, A=A, fp_tol=1e-10,
                     eval_batch=eval_map_batch)
    model.meta.update({"tau": float(tau), "spectral_mapping_error": mapping_error,
                       "flow": flow})
    return model


def _spectral_mapping_error(A: np.ndarray, G: np.ndarray, tau: float) -> float:
    lam_map = np.linalg.eigvals(A)
    lam_exp = np.exp(tau * np.linalg.eigvals(G))
    cost = np.abs(lam_map[:, None] - lam_exp[None, :])
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


# -- demo systems -------------------------------------------------------------

def _sine_quartic_integral(i: int, j: int, l: int, k: int) -> float:
    """Integral over (0, pi) of sin(ix) sin(jx) sin(lx) sin(kx)."""
    freqs = (i, j, l, k)
    total = 0.0
    for signs in itertools.product((1, -1), repeat=4):
        if sum(s * n for s, n in zip(signs, freqs)) == 0:
            total += math.prod(signs)
    return math.pi / 16.0 * total


def build_chafee_infante(lambda_param: float, modes: int) -> FlowModel:
    """Sine-basis Galerkin truncation of u_t = u_xx + lambda*u - u^3 on
    (0, pi) with Dirichlet boundary conditions.

    With u = sum_k a_k sin(kx), the k-th amplitude obeys
    a_k' = (lambda - k^2) a_k - (2/pi) <(sum a sin)^3, sin(kx)>.
    """
    if modes < 1:
        raise ValueError("need at least one mode")
    dim = modes
    G = np.diag([lambda_param - k ** 2 for k in range(1, modes + 1)])

    terms = []
    for k in range(1, modes + 1):
        for triple in itertools.combinations_with_replacement(range(1, modes + 1), 3):
            weight = _sine_quartic_integral(*triple, k)
            if weight == 0.0:
                continue
            exps = [0] * dim
            for idx in triple:
                exps[idx - 1] += 1
            arrangements = math.factorial(3) // math.prod(
                math.factorial(e) for e in exps if e
            )
            terms.append((tuple(exps), k - 1, -(2.0 / math.pi) * arrangements * weight))

    jet = polynomial_jet(dim, dim, 3, [((e, c, v)) for e, c, v in terms])
    jet = jet.with_component(HomogeneousPoly(1, dim, dim, G.T.copy()))
    model = FlowModel(
        dim=dim, vector_field=jet, vf_jet=jet, G=G, polynomial=True,
    )
    model.meta.update({"kind": "chafee_infante", "lambda": lambda_param, "modes": modes})
    return model


def _ns_wavevectors(cutoff_x: int, cutoff_y: int) -> list[tuple[int, int]]:
    out = []
    for kx in range(0, cutoff_x + 1):
        for ky in range(-cutoff_y, cutoff_y + 1):
            if kx == 0 and ky <= 0:
                continue
            out.append((kx, ky))
    return out


def build_ns_kolmogorov(
    reynolds: float,
    cutoff_x: int = 1,
    cutoff_y: int = 2,
    forcing_amplitude: float = 0.05,
    forcing_wavenumber: int = 1,
) -> FlowModel:
    """Divergence-free Fourier-Galerkin truncation of the 2-D
    Navier-Stokes vorticity equation on the 2pi-periodic square with
    steady forcing gamma*sin(k_f y) e_x, linearized about the laminar
    shear profile (moved to the origin).

    The state holds cosine/sine vorticity amplitudes per retained
    wavevector; the incompressibility constraint is built into the basis.
    This is a desk-scale illustration, not a fluid solver.
    """
    if reynolds <= 0:
        raise ValueError("Reynolds number must be positive")
    kf = int(forcing_wavenumber)
    waves = _ns_wavevectors(cutoff_x, cutoff_y)
    if (0, kf) not in waves:
        raise ValueError("the forcing wavenumber must be inside the retained set")
    nmode = len(waves)
    dim = 2 * nmode
    index = {k: i for i, k in enumerate(waves)}

    # laminar vorticity -gamma*Re/kf * cos(kf y); its complex amplitude at (0, +-kf)
    base_amp = -forcing_amplitude * reynolds / kf / 2.0

    def full_coeffs(x: np.ndarray) -> dict[tuple[int, int], complex]:
        out: dict[tuple[int, int], complex] = {}
        for (k, i) in index.items():
            c = 0.5 * (x[2 * i] - 1j * x[2 * i + 1])
            out[k] = c
            out[(-k[0], -k[1])] = np.conj(c)
        return out

    base_field = {(0, kf): complex(base_amp), (0, -kf): complex(base_amp)}

    def advect(vort_src: dict, field: dict, k: tuple[int, int]) -> complex:
        total = 0.0 + 0.0j
        for p, vp in vort_src.items():
            q = (k[0] - p[0], k[1] - p[1])
            if q not in field:
                continue
            cross = p[0] * q[1] - p[1] * q[0]
            if cross == 0:
                continue
            total += cross / (p[0] ** 2 + p[1] ** 2) * vp * field[q]
        return total

    def rhs(x: np.ndarray) -> np.ndarray:
        w = full_coeffs(np.asarray(x, dtype=float))
        out = np.empty(dim)
        for k, i in index.items():
            ksq = k[0] ** 2 + k[1] ** 2
            d = -(ksq / reynolds) * w[k]
            d -= advect(base_field, w, k)   # mean shear advecting the perturbation
            d -= advect(w, base_field, k)   # perturbation advecting the mean vorticity
            d -= advect(w, w, k)            # self-advection (quadratic)
            out[2 * i] = 2.0 * d.real
            out[2 * i + 1] = -2.0 * d.imag
        return out

    # the field is exactly quadratic: extract linear part and quadratic
    # coefficients by differencing/polarization, which is exact here
    L = np.empty((dim, dim))
    basis_vals = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        fp, fm = rhs(e), rhs(-e)
        L[:, i] = 0.5 * (fp - fm)
        basis_vals.append(fp)

    quad_terms = []
    for i in range(dim):
        qii = basis_vals[i] - L[:, i]  # F(e_i) = L e_i + Q(e_i, e_i)
        for comp in range(dim):
            if qii[comp] != 0.0:
                exps = [0] * dim
                exps[i] = 2
                quad_terms.append((tuple(exps), comp, float(qii[comp])))
    for i in range(dim):
        ei = np.zeros(dim)
        ei[i] = 1.0
        for j in range(i + 1, dim):
            ej = np.zeros(dim)
            ej[j] = 1.0
            # polarization: F(ei+ej) - F(ei) - F(ej) = 2 Q_bil(ei, ej), the
            # coefficient of the x_i x_j monomial
            qij = rhs(ei + ej) - basis_vals[i] - basis_vals[j]
            for comp in range(dim):
                if qij[comp] != 0.0:
                    exps = [0] * dim
                    exps[i] += 1
                    exps[j] += 1
                    quad_terms.append((tuple(exps), comp, float(qij[comp])))

    jet = polynomial_jet(dim, dim, 2, quad_terms)
    jet = jet.with_component(HomogeneousPoly(1, dim, dim, L.T.copy()))
    model = FlowModel(dim=dim, vector_field=jet, vf_jet=jet, G=L, polynomial=True)
    model.meta.update({
        "kind": "ns_kolmogorov", "reynolds": reynolds,
        "waves": waves, "forcing_amplitude": forcing_amplitude,
        "forcing_wavenumber": kf,
    })
    return model


# -- splittings ---------------------------------------------------------------

def make_split_choice(model, subset, gap_tol: float = 1e-9,
                      match_tol: float = 1e-8) -> SplitChoice:
    """Adapted coordinates for a spectral subset of the linear part.

    The leading coordinates are built from an orthonormal basis of the
    left invariant subspace of the subset, so the transformed linear part
    is block lower-triangular; the complement coordinates span the kernel
    of the associated spectral projection.
    """
    L, is_flow = _linear_part_of(model)
    subset = tuple(complex(z) for z in np.atleast_1d(subset))
    P_left, basis_left = spectral_projection(L.T, subset, tol=gap_tol, match_tol=match_tol)
    W = basis_left.T
    K = scipy.linalg.null_space(W)
    T = np.vstack([W, K.T])
    Tinv = T.T  # orthonormal rows by construction
    return _finish_split(L, subset, T, Tinv, is_flow)


def make_eigenvalue_split(model, lam: complex, match_tol: float = 1e-8,
                          which: int = 0) -> SplitChoice:
    """Adapted coordinates for a single eigenvalue (with its conjugate),
    with the distinguished block in rotation-scaling normal form.

    The leading rows are the real and imaginary parts of a left
    eigenvector normalized against the matching right eigenvector, so the
    distinguished block is exactly the 2x2 realification of the
    eigenvalue (1x1 when real).  `which` selects among basis vectors of a
    degenerate left eigenspace; any choice beyond the first is
    non-canonical.
    """
    L, is_flow = _linear_part_of(model)
    lam = complex(lam)
    eigs = np.linalg.eigvals(L)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    gaps = np.abs(eigs - lam)
    if np.min(gaps) > match_tol * scale:
        raise ValueError(
            f"{lam} is not an eigenvalue of the linear part "
            f"(closest at distance {np.min(gaps):.3e})"
        )
    lam_exact = complex(eigs[np.argmin(gaps)])
    conj_case = lam_exact.imag < 0
    lam_pos = np.conj(lam_exact) if conj_case else lam_exact

    Q, v = _left_right_pair(L, lam_pos, which)
    if conj_case:
        Q = np.conj(Q)
        lam_exact = np.conj(lam_pos)
    else:
        lam_exact = lam_pos

    if abs(lam_exact.imag) <= 1e-12 * scale:
        lam_exact = complex(lam_exact.real, 0.0)
        W = Q.real[None, :]
        subset = (lam_exact,)
    else:
        W = np.vstack([Q.real, Q.imag])
        subset = (lam_exact, np.conj(lam_exact))

    K = scipy.linalg.null_space(W)
    T = np.vstack([W, K.T])
    Tinv = np.linalg.inv(T)
    choice = _finish_split(L, subset, T, Tinv, is_flow)
    block_target = realify_block(lam_exact)
    defect = float(np.max(np.abs(choice.block0 - block_target)))
    if defect > 1e-8 * scale:
        raise RuntimeError(f"distinguished block deviates from normal form by {defect:.3e}")
    choice.block0 = block_target
    choice.meta.update({"lambda": lam_exact, "eigenvector": v, "left_row": Q})
    return choice


def _left_right_pair(L: np.ndarray, lam: complex, which: int = 0):
    """Left eigenvector row Q and unit right eigenvector v with Q v = 1."""
    dim = L.shape[0]
    eigs_r, vecs_r = np.linalg.eig(L)
    eigs_l, vecs_l = np.linalg.eig(L.T)
    scale = max(1.0, float(np.max(np.abs(eigs_r))))

    right_idx = [i for i in range(dim) if abs(eigs_r[i] - lam) <= 1e-8 * scale]
    left_idx = [i for i in range(dim) if abs(eigs_l[i] - lam) <= 1e-8 * scale]
    if not right_idx or not left_idx:
        raise ValueError(f"eigenvalue {lam} not found to working precision")
    if which >= len(left_idx):
        raise ValueError(f"only {len(left_idx)} independent left eigenvectors available")

    Q = vecs_l[:, left_idx[which]]
    # in a degenerate eigenspace the bases of eig(L) and eig(L^T) need not
    # be aligned; pair Q with the right eigenvector it sees most strongly
    best, best_inner = None, 0.0
    for i in right_idx:
        v = vecs_r[:, i]
        anchor = int(np.argmax(np.abs(v)))
        v = v / v[anchor]
        v = v / np.linalg.norm(v)
        inner = Q @ v
        if abs(inner) > abs(best_inner):
            best, best_inner = v, inner
    if best is None or abs(best_inner) < 1e-12:
        raise RuntimeError("left and right eigenvectors are numerically orthogonal")
    Q = Q / best_inner
    return Q, best


def _linear_part_of(model) -> tuple[np.ndarray, bool]:
    if isinstance(model, FlowModel):
        return np.asarray(model.G, dtype=float), True
    if isinstance(model, MapModel):
        return np.asarray(model.A, dtype=float), False
    return np.asarray(model, dtype=float), False


def _finish_split(L, subset, T, Tinv, is_flow) -> SplitChoice:
    d = L.shape[0]
    d0 = len(subset)
    Lt = T @ L @ Tinv
    scale = max(1.0, float(np.max(np.abs(Lt))))
    defect = float(np.max(np.abs(Lt[:d0, d0:]), initial=0.0))
    if defect > 1e-8 * scale:
        raise RuntimeError(f"adapted linear part is not block-triangular (defect {defect:.3e})")
    block0 = Lt[:d0, :d0].copy()
    coupling = Lt[d0:, :d0].copy()
    block1 = Lt[d0:, d0:].copy()
    sp = Splitting(d, tuple(range(d0)))
    return SplitChoice(
        subset=tuple(subset), to_adapted=T, from_adapted=Tinv, splitting=sp,
        block0=block0, block1=block1, coupling=coupling,
        triangular_defect=defect, is_flow=is_flow,
    )


def transform_flow(flow: FlowModel, split: SplitChoice) -> FlowModel:
    """The same flow expressed in the adapted coordinates of `split`."""
    T, Tinv = split.to_adapted, split.from_adapted
    N = flow.vf_jet.N
    jet_t = compose_jets(
        compose_jets(JetMap.from_linear(T), flow.vf_jet, N),
        JetMap.from_linear(Tinv), N,
    )

    def vf(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.ndim == 2:
            return np.asarray(flow.vector_field(z @ Tinv.T), dtype=float) @ T.T
        return T @ np.asarray(flow.vector_field(Tinv @ z), dtype=float)

    out = FlowModel(
        dim=flow.dim, vector_field=vf, vf_jet=jet_t, G=T @ flow.G @ Tinv,
        polynomial=flow.polynomial, rtol=flow.rtol, atol=flow.atol, method=flow.method,
    )
    out.meta.update(flow.meta)
    out.meta["adapted"] = True
    return out


def transform_map(model: MapModel, split: SplitChoice) -> MapModel:
    """The same map expressed in the adapted coordinates of `split`."""
    T, Tinv = split.to_adapted, split.from_adapted
    N = model.jet.N
    jet_t = compose_jets(
        compose_jets(JetMap.from_linear(T), model.jet, N),
        JetMap.from_linear(Tinv), N,
    )

    def ev(z: np.ndarray) -> np.ndarray:
        return T @ np.asarray(model.eval(Tinv @ np.asarray(z, dtype=float)), dtype=float)

    out = MapModel(dim=model.dim, eval=ev, jet=jet_t, A=T @ model.A @ Tinv,
                   fp_tol=model.fp_tol)
    out.meta.update(model.meta)
    out.meta["adapted"] = True
    return out
