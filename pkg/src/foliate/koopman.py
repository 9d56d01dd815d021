"""Principal Koopman eigenfunctions from invariant foliations.

For a stable flow and an eigenvalue of its generator, the eigenfunction
is obtained by solving the foliation equations for the time-tau map in
the adapted coordinates of the (realified) left eigenvector: the reduced
dynamics comes out linear in rotation-scaling form, and composing the
resulting submersion with the complex identification gives a function
intertwining the flow with multiplication by exp(lambda*t).  Eigenvalue
admissibility is gated by membership in the generator spectrum and by
the additive nonresonance conditions; both are enforced, not assumed.
"""

from __future__ import annotations

import cmath
import itertools
from dataclasses import dataclass, field

import numpy as np

from .homological import solve_semiconjugacy
from .model import (
    FlowModel,
    default_tau,
    make_eigenvalue_split,
    time_tau_map,
    transform_flow,
)
from .remainder import FoliationSolution, select_scaling
from .sampling import ball_samples
from .spectral import check_cross_resonances, compute_spectrum
from .tensor_poly import JetMap, compose_jets

__all__ = [
    "KoopmanEigenfunction",
    "AdmissibilityReport",
    "DefectStatistics",
    "ConjugacyResult",
    "eigenvalue_membership",
    "admissibility",
    "minimal_reduced_degree",
    "build_eigenfunction",
    "verify_eigenfunction",
    "conjugacy_between",
]


def eigenvalue_membership(lam: complex, sigmaG, tol: float = 1e-8) -> tuple[bool, float]:
    """Whether lam lies in the (finite) generator spectrum, with the
    distance to the nearest element."""
    sigmaG = np.atleast_1d(np.asarray(sigmaG, dtype=complex))
    gaps = np.abs(sigmaG - complex(lam))
    nearest = float(np.min(gaps))
    scale = max(1.0, float(np.max(np.abs(sigmaG))))
    return nearest <= tol * scale, nearest


def minimal_reduced_degree(lam: complex, sigmaG, cap: int = 16) -> int | None:
    """Smallest degree bound making the real-part gap inequality hold:
    (degree+1) * sup Re(spectrum) < Re(lam)."""
    sigmaG = np.atleast_1d(np.asarray(sigmaG, dtype=complex))
    sup_re = float(np.max(sigmaG.real))
    if sup_re >= 0:
        raise ValueError("generator spectrum must be strictly stable")
    for deg in range(1, cap):
        if (deg + 1) * sup_re < complex(lam).real:
            return deg
    return None


@dataclass(frozen=True)
class AdmissibilityReport:
    lam: complex
    in_spectrum: bool
    nearest_distance: float
    gap_ok: bool
    reduced_degree: int
    resonance_hits: tuple[tuple[int, tuple[complex, ...]], ...]
    simple: bool

    @property
    def admissible(self) -> bool:
        return self.in_spectrum and self.gap_ok and not self.resonance_hits

    def to_dict(self) -> dict:
        return {
            "lambda": [self.lam.real, self.lam.imag],
            "in_spectrum": self.in_spectrum,
            "nearest_distance": self.nearest_distance,
            "gap_ok": self.gap_ok,
            "reduced_degree": self.reduced_degree,
            "simple": self.simple,
            "resonance_hits": [
                {"n": n, "summands": [[z.real, z.imag] for z in terms]}
                for n, terms in self.resonance_hits
            ],
            "admissible": self.admissible,
        }


def admissibility(lam: complex, sigmaG, reduced_degree: int,
                  tol: float = 1e-8) -> AdmissibilityReport:
    """Eigenvalue admissibility for the eigenfunction construction: the
    real-part gap inequality plus absence of n-fold spectral sums hitting
    lam for 2 <= n <= reduced_degree; also records algebraic simplicity."""
    lam = complex(lam)
    sigma = np.atleast_1d(np.asarray(sigmaG, dtype=complex))
    if np.any(sigma.real >= 0):
        raise ValueError("generator spectrum must be strictly stable")

    in_spec, nearest = eigenvalue_membership(lam, sigma, tol)
    sup_re = float(np.max(sigma.real))
    gap_ok = (reduced_degree + 1) * sup_re < lam.real
    scale = max(1.0, float(np.max(np.abs(sigma))))

    hits = []
    for n in range(2, reduced_degree + 1):
        for combo in itertools.combinations_with_replacement(sigma, n):
            if abs(sum(combo) - lam) <= tol * scale:
                hits.append((n, tuple(complex(z) for z in combo)))

    multiplicity = int(np.sum(np.abs(sigma - lam) <= tol * scale))
    return AdmissibilityReport(
        lam=lam, in_spectrum=in_spec, nearest_distance=nearest, gap_ok=gap_ok,
        reduced_degree=reduced_degree, resonance_hits=tuple(hits),
        simple=multiplicity <= 1,
    )


@dataclass
class KoopmanEigenfunction:
    """A principal eigenfunction: evaluator, eigenvalue, and the
    underlying foliation with its validity and extension settings."""

    lam: complex
    flow: FlowModel
    foliation: FoliationSolution
    tau: float
    gauge_vector: np.ndarray
    domain_radius: float
    is_real: bool
    admissibility: AdmissibilityReport
    warnings: tuple[str, ...] = field(default_factory=tuple)
    alternates: tuple["KoopmanEigenfunction", ...] = field(default_factory=tuple)

    def __call__(self, x: np.ndarray):
        z = self.foliation.split.to_adapted @ np.asarray(x, dtype=float)
        value = self.foliation.evaluate(z)
        if self.is_real:
            return float(value[0])
        return complex(value[0], value[1])

    def values(self, X: np.ndarray) -> np.ndarray:
        """Batched evaluation over rows of X (original coordinates);
        points inside the core ball go through the jet in one shot,
        stragglers fall back to basin extension."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = X @ self.foliation.split.to_adapted.T
        inside = np.linalg.norm(Z, axis=1) <= self.foliation.core_radius
        out = np.empty(X.shape[0], dtype=float if self.is_real else complex)
        if inside.any():
            vals = self.foliation.jet.submersion(Z[inside])
            out[inside] = vals[:, 0] if self.is_real else vals[:, 0] + 1j * vals[:, 1]
        for i in np.nonzero(~inside)[0]:
            value = self.foliation.evaluate(Z[i])
            out[i] = value[0] if self.is_real else complex(value[0], value[1])
        return out

    def gradient_norm(self, scale: float = 1e-6) -> float:
        """Sampled finite-difference gradient magnitude at the origin."""
        dim = self.flow.dim
        grad = np.zeros(dim, dtype=complex)
        for v in range(dim):
            e = np.zeros(dim)
            e[v] = scale
            grad[v] = (self(e) - self(-e)) / (2 * scale)
        return float(np.linalg.norm(grad))


def build_eigenfunction(
    flow: FlowModel,
    lam: complex,
    reduced_degree: int | None = None,
    N: int = 6,
    tau: float | None = None,
    target_nonlinearity: float = 0.05,
    inner_radius: float = 0.5,
    tol: float = 1e-8,
    seed: int = 2024,
    emit_alternates: bool = True,
) -> KoopmanEigenfunction:
    """Construct the principal eigenfunction for an eigenvalue of the
    generator of a stable flow.

    Refuses eigenvalues outside the spectrum and resonant ones.  The
    reduced dynamics is solved in normal_form mode, which is always
    possible here: sums of n >= 2 stable eigenvalues from the
    distinguished pair have real part strictly below it.
    """
    lam = complex(lam)
    spectrum = compute_spectrum(flow.G)
    sigma = spectrum.with_multiplicity()

    member, nearest = eigenvalue_membership(lam, sigma, tol)
    if not member:
        raise ValueError(
            f"{lam} is not an eigenvalue of the generator "
            f"(nearest at distance {nearest:.3e}); principal eigenfunctions "
            "only exist for spectrum members"
        )

    if reduced_degree is None:
        reduced_degree = minimal_reduced_degree(lam, sigma)
        if reduced_degree is None:
            raise ValueError("no admissible degree bound for this eigenvalue")
    report = admissibility(lam, sigma, reduced_degree, tol)
    if not report.gap_ok:
        raise ValueError(
            f"degree bound {reduced_degree} violates the real-part gap "
            f"inequality for {lam}"
        )
    if report.resonance_hits:
        n, combo = report.resonance_hits[0]
        raise ValueError(
            f"eigenvalue {lam} is resonant: it equals a sum of {n} generator "
            f"eigenvalues {combo}; the construction does not apply"
        )

    warnings = []
    if not report.simple:
        warnings.append(
            "eigenvalue is not algebraically simple: the dual eigenvector is "
            "not unique and neither is the eigenfunction; alternates are emitted"
        )

    split = make_eigenvalue_split(flow, lam, match_tol=tol)
    lam_exact = split.meta["lambda"]
    adapted = transform_flow(flow, split)
    if tau is None:
        tau = default_tau(flow.G)

    tau_map = time_tau_map(adapted, tau, N)
    _check_tau_consistency(adapted, split, tau, reduced_degree, tol)

    certificate = select_scaling(tau_map, split, reduced_degree,
                                 target_nonlinearity=target_nonlinearity, seed=seed)
    jet = solve_semiconjugacy(tau_map.jet, split, reduced_degree, N, mode="normal_form")

    expected = _realified_scalar(cmath.exp(lam_exact * tau), jet.reduced.linear_part())
    if expected > 1e-8:
        raise RuntimeError(
            f"reduced linear part deviates from the eigenvalue exponential by {expected:.3e}"
        )

    foliation = FoliationSolution(
        jet=jet, split=split, model=tau_map, delta=certificate.delta,
        certificate=certificate, inner_radius=inner_radius,
    )

    is_real = abs(lam_exact.imag) == 0.0
    psi = KoopmanEigenfunction(
        lam=lam_exact, flow=flow, foliation=foliation, tau=tau,
        gauge_vector=split.meta["eigenvector"],
        domain_radius=foliation.core_radius, is_real=is_real,
        admissibility=report, warnings=tuple(warnings),
    )

    if emit_alternates and not report.simple:
        alts = []
        multiplicity = int(np.sum(np.abs(sigma - lam_exact) <= tol * max(1.0, spectrum.spectral_radius)))
        for which in range(1, multiplicity):
            try:
                alt_split = make_eigenvalue_split(flow, lam, match_tol=tol, which=which)
            except ValueError:
                break
            alts.append(_build_from_split(flow, lam_exact, alt_split, reduced_degree,
                                          N, tau, target_nonlinearity, inner_radius,
                                          report, seed))
        psi.alternates = tuple(alts)
    return psi


def _build_from_split(flow, lam, split, reduced_degree, N, tau,
                      target_nonlinearity, inner_radius, report, seed):
    adapted = transform_flow(flow, split)
    tau_map = time_tau_map(adapted, tau, N)
    certificate = select_scaling(tau_map, split, reduced_degree,
                                 target_nonlinearity=target_nonlinearity, seed=seed)
    jet = solve_semiconjugacy(tau_map.jet, split, reduced_degree, N, mode="normal_form")
    foliation = FoliationSolution(
        jet=jet, split=split, model=tau_map, delta=certificate.delta,
        certificate=certificate, inner_radius=inner_radius,
    )
    return KoopmanEigenfunction(
        lam=lam, flow=flow, foliation=foliation, tau=tau,
        gauge_vector=split.meta["eigenvector"],
        domain_radius=foliation.core_radius, is_real=abs(lam.imag) == 0.0,
        admissibility=report,
        warnings=("non-canonical choice of dual eigenvector",),
    )


def _check_tau_consistency(adapted, split, tau, reduced_degree, tol):
    """The nonresonance verdict must not depend on the sampling time;
    re-verify the multiplicative conditions at tau and 2*tau."""
    d0 = split.dim0
    G = adapted.G
    sig = np.linalg.eigvals(G)
    sig0 = np.linalg.eigvals(G[:d0, :d0])
    sig1 = np.linalg.eigvals(G[d0:, d0:]) if G.shape[0] > d0 else np.array([])
    verdicts = []
    for t in (tau, 2 * tau):
        rep = check_cross_resonances(np.exp(t * sig0), np.exp(t * sig1), reduced_degree, tol)
        verdicts.append(rep.passed)
    if verdicts[0] != verdicts[1]:
        raise RuntimeError(
            "nonresonance verdict changed between tau and 2*tau; "
            "the sampling time is pathological"
        )


def _realified_scalar(value: complex, block: np.ndarray) -> float:
    from .spectral import realify_block
    target = realify_block(value) if block.shape[0] == 2 else np.array([[value.real]])
    return float(np.max(np.abs(block - target)))


@dataclass(frozen=True)
class DefectStatistics:
    sup: float
    mean: float
    per_point: tuple[float, ...]
    skipped: int
    scale: float
    horizon: float

    def to_dict(self) -> dict:
        return {
            "sup": self.sup, "mean": self.mean, "skipped": self.skipped,
            "scale": self.scale, "horizon": self.horizon,
            "per_point": list(self.per_point),
        }


def verify_eigenfunction(
    psi: KoopmanEigenfunction,
    flow: FlowModel | None = None,
    n_points: int = 100,
    horizon: float = 5.0,
    radius: float | None = None,
    t_samples: int = 21,
    seed: int = 4242,
    domain_cap: float | None = None,
) -> DefectStatistics:
    """Relative defect of the eigenfunction identity along trajectories.

    Integrates each sample once and reports sup and mean over the time
    grid of |psi(x(t)) - exp(lambda t) psi(x0)| / max(|psi(x0)|, floor).
    Trajectories leaving the evaluation domain are skipped and counted.
    """
    flow = flow or psi.flow
    radius = radius if radius is not None else psi.domain_radius
    T = psi.foliation.split.to_adapted
    Tinv = psi.foliation.split.from_adapted
    pts_adapted = ball_samples(flow.dim, n_points, radius, seed)
    points = pts_adapted @ Tinv.T  # original coordinates

    cap = domain_cap if domain_cap is not None else 50.0 * max(radius, psi.domain_radius)
    t_grid = np.linspace(0.0, horizon, t_samples)

    base_values = psi.values(points)
    scale = float(np.max(np.abs(base_values)))
    floor = 1e-14 * max(scale, 1e-300)

    trajectories = flow.flow_batch(points, horizon, t_eval=t_grid)  # (nt, n, dim)
    traj_values = psi.values(trajectories.reshape(-1, flow.dim)).reshape(len(t_grid), -1)
    growth = np.exp(np.outer(t_grid, [psi.lam]))[:, 0]

    defects = []
    skipped = 0
    for idx, psi0 in enumerate(base_values):
        traj = trajectories[:, idx, :]
        if np.max(np.linalg.norm(traj @ T.T, axis=1)) > cap:
            skipped += 1
            continue
        errs = np.abs(traj_values[:, idx] - growth * psi0)
        defects.append(float(np.max(errs)) / max(abs(psi0), floor))

    if not defects:
        raise RuntimeError("all sample trajectories left the evaluation domain")
    arr = np.array(defects)
    return DefectStatistics(
        sup=float(np.max(arr)), mean=float(np.mean(arr)),
        per_point=tuple(arr.tolist()), skipped=skipped, scale=scale,
        horizon=float(horizon),
    )


@dataclass(frozen=True)
class ConjugacyResult:
    theta: JetMap
    linear: bool
    residual: float

    def theta_matrix(self) -> np.ndarray:
        return self.theta.linear_part()


def conjugacy_between(sol1: FoliationSolution, sol2: FoliationSolution,
                      n_points: int = 128, seed: int = 99) -> ConjugacyResult:
    """The change of observable between two solutions of the same
    foliation: theta with  submersion2 = theta o submersion1.

    When both reduced dynamics are linear, theta is the linear map fixed
    by the degree-1 data; otherwise it is fitted as a jet by composing
    submersion2 with the inverse jet of submersion1 along the
    distinguished subspace.  The sampled residual is reported either way.
    """
    if sol1.model.dim != sol2.model.dim:
        raise ValueError("solutions live on different spaces")
    d0 = sol1.split.dim0
    if sol2.split.dim0 != d0:
        raise ValueError("distinguished blocks have different dimensions")
    W1 = sol1.split.to_adapted[:d0]
    W2 = sol2.split.to_adapted[:d0]
    # same foliation <=> same kernel of the submersion derivative
    stacked = np.vstack([W1, W2])
    sv = np.linalg.svd(stacked, compute_uv=False)
    if sv[d0:].size and sv[d0] > 1e-8 * sv[0]:
        raise ValueError("the two solutions do not share a tangent splitting")

    N = min(sol1.jet.N, sol2.jet.N)
    inj = sol1.split.from_adapted[:, :d0]  # embed sol1's distinguished block

    def restricted(sol) -> JetMap:
        lin = JetMap.from_linear(sol.split.to_adapted @ inj, 1)
        return compose_jets(sol.jet.submersion.truncated(N), lin, N)

    p1 = restricted(sol1)
    p2 = restricted(sol2)
    from .tensor_poly import invert_jet
    theta = compose_jets(p2, invert_jet(p1, N), N)

    linear = all(
        sol.jet.reduced.component(n).max_abs() == 0.0
        for sol in (sol1, sol2) for n in range(2, sol.jet.reduced.N + 1)
    )
    if linear:
        theta = JetMap.from_linear(theta.linear_part(), 1)

    radius = 0.9 * min(sol1.core_radius, sol2.core_radius)
    pts1 = ball_samples(sol1.model.dim, n_points, radius, seed)
    worst = 0.0
    for z in pts1:
        x = sol1.split.from_adapted @ z
        v1 = sol1.jet.submersion(sol1.split.to_adapted @ x)
        v2 = sol2.jet.submersion(sol2.split.to_adapted @ x)
        worst = max(worst, float(np.max(np.abs(v2 - theta(v1)))))
    return ConjugacyResult(theta=theta, linear=linear, residual=worst)
