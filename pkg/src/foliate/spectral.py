"""Eigenstructure analysis, spectral projections and nonresonance checks.

All checks operate on finite spectra given as complex arrays; the
products/sums of eigenvalue multisets are enumerated exhaustively, which
is cheap at desk scale and leaves nothing to chance.  Resonance verdicts
use a relative tolerance: exact set-disjointness has no floating-point
meaning, and conditioning of the downstream linear solves degrades
continuously with the gap, so near-misses are surfaced as warnings.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "SpectrumReport",
    "ResonanceReport",
    "ReducedDegreeChoice",
    "compute_spectrum",
    "select_reduced_degree",
    "check_cross_resonances",
    "check_self_resonances",
    "check_generator_resonances",
    "spectral_projection",
    "realify_block",
    "estimate_decay",
    "RESONANCE_TOL",
    "NEAR_RESONANCE_TOL",
]

RESONANCE_TOL = 1e-8
NEAR_RESONANCE_TOL = 1e-4


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues with algebraic multiplicities plus basic diagnostics."""

    eigenvalues: tuple[complex, ...]
    multiplicities: tuple[int, ...]
    spectral_radius: float
    diagonalizable: bool
    eigenvector_condition: float

    def distinct(self) -> np.ndarray:
        return np.array(self.eigenvalues)

    def with_multiplicity(self) -> np.ndarray:
        return np.array(
            [ev for ev, m in zip(self.eigenvalues, self.multiplicities) for _ in range(m)]
        )


@dataclass(frozen=True)
class Violation:
    """One resonant combination: a multiset of source eigenvalues whose
    product (or sum) lands on a target eigenvalue."""

    degree: int
    weight: int
    factors: tuple[complex, ...]
    value: complex
    target: complex
    gap: float

    def to_dict(self) -> dict:
        return {
            "n": self.degree,
            "j": self.weight,
            "factors": [[z.real, z.imag] for z in self.factors],
            "value": [self.value.real, self.value.imag],
            "target": [self.target.real, self.target.imag],
            "gap": self.gap,
        }


@dataclass(frozen=True)
class ResonanceReport:
    kind: str
    reduced_degree: int
    violations: tuple[Violation, ...]
    warnings: tuple[Violation, ...]
    margin: float
    checked: int

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "reduced_degree": self.reduced_degree,
            "passed": self.passed,
            "margin": self.margin,
            "checked": self.checked,
            "violations": [v.to_dict() for v in self.violations],
            "warnings": [v.to_dict() for v in self.warnings],
        }


def compute_spectrum(A: np.ndarray, cluster_tol: float = 1e-8) -> SpectrumReport:
    """Eigenvalues of a square matrix, clustered into multiplicities.

    For real input the spectrum is forced to be closed under complex
    conjugation (as a multiset) by pairing and averaging, so downstream
    conjugation-sensitive logic never sees one-sided rounding.
    """
    A = np.asarray(A, dtype=float) if np.isrealobj(A) else np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    try:
        values, vectors = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"eigendecomposition failed: {exc}") from exc

    if np.isrealobj(A):
        values = _enforce_conjugate_closure(values)

    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    order = np.lexsort((values.imag, values.real))
    values = values[order]
    clusters: list[list[complex]] = []
    for v in values:
        if clusters and abs(v - np.mean(clusters[-1])) <= cluster_tol * scale:
            clusters[-1].append(v)
        else:
            clusters.append([v])
    eigenvalues = tuple(complex(np.mean(c)) for c in clusters)
    multiplicities = tuple(len(c) for c in clusters)

    try:
        cond = float(np.linalg.cond(vectors))
    except np.linalg.LinAlgError:
        cond = np.inf
    diagonalizable = bool(np.isfinite(cond) and cond < 1e8)
    radius = float(np.max(np.abs(values), initial=0.0))
    return SpectrumReport(eigenvalues, multiplicities, radius, diagonalizable, cond)


def _enforce_conjugate_closure(values: np.ndarray) -> np.ndarray:
    """Pair eigenvalues of a real matrix with their conjugates and average."""
    vals = list(values)
    out = []
    used = [False] * len(vals)
    for i, v in enumerate(vals):
        if used[i]:
            continue
        used[i] = True
        if abs(v.imag) <= 1e-14 * max(1.0, abs(v)):
            out.append(complex(v.real, 0.0))
            continue
        best, best_gap = None, np.inf
        for k in range(i + 1, len(vals)):
            if used[k]:
                continue
            gap = abs(vals[k] - np.conj(v))
            if gap < best_gap:
                best, best_gap = k, gap
        if best is None:
            out.append(v)
            continue
        used[best] = True
        paired = 0.5 * (v + np.conj(vals[best]))
        out.extend([paired, np.conj(paired)])
    return np.array(out)


@dataclass(frozen=True)
class ReducedDegreeChoice:
    """Admissible truncation degrees for the reduced dynamics.

    The defining inequality max|sigma0^-1| * radius^(degree+1) < 1 is
    monotone in the degree, so the admissible set is an interval
    [minimal, cap); `largest` is just the cap-bounded top of it.
    """

    minimal: int | None
    largest: int | None
    cap: int

    @property
    def admissible(self) -> bool:
        return self.minimal is not None


def select_reduced_degree(sigma0, sigma_full, cap: int = 16) -> ReducedDegreeChoice:
    """Smallest and largest degree bound satisfying the contraction-gap
    inequality between the distinguished block and the full spectrum."""
    sigma0 = np.asarray(sigma0, dtype=complex)
    sigma_full = np.asarray(sigma_full, dtype=complex)
    if np.any(np.abs(sigma0) == 0.0):
        raise ValueError("the distinguished block spectrum contains zero")
    radius = float(np.max(np.abs(sigma_full)))
    inv_norm = float(np.max(1.0 / np.abs(sigma0)))
    if radius >= 1.0:
        return ReducedDegreeChoice(None, None, cap)
    minimal = None
    for deg in range(1, cap):
        if inv_norm * radius ** (deg + 1) < 1.0:
            minimal = deg
            break
    if minimal is None:
        return ReducedDegreeChoice(None, None, cap)
    return ReducedDegreeChoice(minimal, cap - 1, cap)


def _relative_gap(value: complex, target: complex) -> float:
    return abs(value - target) / max(abs(target), 1e-300)


def check_cross_resonances(
    sigma0, sigma1, reduced_degree: int,
    tol_res: float = RESONANCE_TOL, near_tol: float = NEAR_RESONANCE_TOL,
) -> ResonanceReport:
    """Products of n-j distinguished and j complementary eigenvalues,
    2 <= n <= reduced_degree and 1 <= j <= n, against the distinguished
    spectrum.  Passing makes every mixed-block linear solve invertible."""
    sigma0 = [complex(z) for z in np.atleast_1d(sigma0)]
    sigma1 = [complex(z) for z in np.atleast_1d(sigma1)]
    violations, warnings = [], []
    margin, checked = np.inf, 0
    for n in range(2, reduced_degree + 1):
        for j in range(1, n + 1):
            for m0 in itertools.combinations_with_replacement(sigma0, n - j):
                for m1 in itertools.combinations_with_replacement(sigma1, j):
                    factors = tuple(m0) + tuple(m1)
                    value = math.prod(factors)
                    for target in sigma0:
                        checked += 1
                        gap = _relative_gap(value, target)
                        margin = min(margin, gap)
                        hit = Violation(n, j, factors, value, target, gap)
                        if gap <= tol_res:
                            violations.append(hit)
                        elif gap <= near_tol:
                            warnings.append(hit)
    return ResonanceReport("cross_products", reduced_degree,
                           tuple(violations), tuple(warnings), float(margin), checked)


def check_self_resonances(
    sigma0, reduced_degree: int, start_degree: int = 2,
    tol_res: float = RESONANCE_TOL, near_tol: float = NEAR_RESONANCE_TOL,
) -> ResonanceReport:
    """Products of n distinguished eigenvalues against the distinguished
    spectrum, start_degree <= n <= reduced_degree.  Passing allows the
    reduced dynamics to drop its degree-n terms."""
    sigma0 = [complex(z) for z in np.atleast_1d(sigma0)]
    violations, warnings = [], []
    margin, checked = np.inf, 0
    for n in range(start_degree, reduced_degree + 1):
        for factors in itertools.combinations_with_replacement(sigma0, n):
            value = math.prod(factors)
            for target in sigma0:
                checked += 1
                gap = _relative_gap(value, target)
                margin = min(margin, gap)
                hit = Violation(n, 0, tuple(factors), value, target, gap)
                if gap <= tol_res:
                    violations.append(hit)
                elif gap <= near_tol:
                    warnings.append(hit)
    return ResonanceReport("self_products", reduced_degree,
                           tuple(violations), tuple(warnings), float(margin), checked)


def check_generator_resonances(
    sigmaG, sigmaG0, sigmaG1, reduced_degree: int,
    tol_res: float = RESONANCE_TOL, near_tol: float = NEAR_RESONANCE_TOL,
) -> dict[str, ResonanceReport]:
    """Additive (generator-level) versions of the spectral conditions.

    Returns three reports: the real-part gap inequality, the mixed-sum
    condition and the self-sum condition.  All generator eigenvalues must
    have negative real part.
    """
    sigmaG = [complex(z) for z in np.atleast_1d(sigmaG)]
    sigmaG0 = [complex(z) for z in np.atleast_1d(sigmaG0)]
    sigmaG1 = [complex(z) for z in np.atleast_1d(sigmaG1)]
    if any(z.real >= 0 for z in sigmaG):
        raise ValueError("generator spectrum must lie in the open left half-plane")

    sup_re = max(z.real for z in sigmaG)
    inf_re0 = min(z.real for z in sigmaG0)
    gap_value = (reduced_degree + 1) * sup_re - inf_re0
    gap_ok = gap_value < 0
    gap_report = ResonanceReport(
        "generator_gap", reduced_degree,
        tuple() if gap_ok else (
            Violation(reduced_degree + 1, 0, ((reduced_degree + 1) * complex(sup_re),),
                      complex((reduced_degree + 1) * sup_re), complex(inf_re0),
                      abs(gap_value)),
        ),
        tuple(), abs(gap_value), 1,
    )

    def scan_sums(kind, weighted):
        violations, warnings = [], []
        margin, checked = np.inf, 0
        for n in range(2, reduced_degree + 1):
            ranges = [(j,) for j in range(1, n + 1)] if weighted else [(0,)]
            for (j,) in ranges:
                picks0 = itertools.combinations_with_replacement(sigmaG0, n - j if weighted else n)
                picks0 = list(picks0)
                picks1 = (
                    list(itertools.combinations_with_replacement(sigmaG1, j))
                    if weighted else [tuple()]
                )
                for m0 in picks0:
                    for m1 in picks1:
                        factors = tuple(m0) + tuple(m1)
                        value = sum(factors)
                        for target in sigmaG0:
                            checked += 1
                            gap = abs(value - target) / max(abs(target), 1e-300)
                            margin = min(margin, gap)
                            hit = Violation(n, j if weighted else 0, factors, value, target, gap)
                            if gap <= tol_res:
                                violations.append(hit)
                            elif gap <= near_tol:
                                warnings.append(hit)
        return ResonanceReport(kind, reduced_degree,
                               tuple(violations), tuple(warnings), float(margin), checked)

    return {
        "gap": gap_report,
        "cross_sums": scan_sums("generator_cross_sums", weighted=True),
        "self_sums": scan_sums("generator_self_sums", weighted=False),
    }


def spectral_projection(
    A: np.ndarray, subset, tol: float = 1e-9, match_tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """Spectral projection onto the invariant subspace of a spectral subset.

    Computed from an ordered real Schur decomposition: the subset's
    eigenvalues are reordered to the leading block and the projection is
    assembled from the off-diagonal coupling via a Sylvester solve, the
    numerically stable finite-dimensional form of the contour integral.
    Returns (projection, orthonormal basis of its range).
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    subset = np.atleast_1d(np.asarray(subset, dtype=complex))
    for z in subset:
        if abs(z.imag) > 0 and not np.any(np.abs(subset - np.conj(z)) <= match_tol * max(1.0, abs(z))):
            raise ValueError(
                f"subset is not closed under conjugation for a real matrix: {z} lacks its pair"
            )

    eigs = np.linalg.eigvals(A)
    scale = max(1.0, float(np.max(np.abs(eigs))))

    def selected(re, im=None) -> bool:
        # the real-Schur sort callback passes (Re, Im) as two arguments
        lam = complex(re, 0.0 if im is None else im)
        return bool(np.min(np.abs(subset - lam)) <= match_tol * scale)

    inside = np.array([selected(lam) for lam in eigs])
    if not inside.any():
        raise ValueError("no eigenvalue of A matches the requested subset")
    gap = np.inf
    for lam in eigs[inside]:
        for mu in eigs[~inside]:
            gap = min(gap, abs(lam - mu))
    if eigs[~inside].size and gap < tol:
        raise ValueError(f"spectral gap {gap:.3e} below tolerance {tol:.3e}")

    T, Z, sdim = scipy.linalg.schur(A, output="real", sort=selected)
    if sdim == 0:
        raise ValueError("Schur reordering selected no eigenvalues")
    T11 = T[:sdim, :sdim]
    T12 = T[:sdim, sdim:]
    T22 = T[sdim:, sdim:]
    if sdim < d:
        X = scipy.linalg.solve_sylvester(T11, -T22, T12)
        middle = np.zeros((d, d))
        middle[:sdim, :sdim] = np.eye(sdim)
        middle[:sdim, sdim:] = X
    else:
        middle = np.eye(d)
    P = Z @ middle @ Z.T
    basis = Z[:, :sdim].copy()
    return P, basis


def realify_block(lam: complex) -> np.ndarray:
    """Real 2x2 rotation-scaling block of a complex scalar (1x1 if real)."""
    lam = complex(lam)
    if lam.imag == 0.0:
        return np.array([[lam.real]])
    return np.array([[lam.real, -lam.imag], [lam.imag, lam.real]])


@dataclass(frozen=True)
class DecayEstimate:
    prefactor: float
    rate: float
    norms: tuple[float, ...]

    def bound(self, k: int) -> float:
        return self.prefactor * self.rate ** k


def estimate_decay(A: np.ndarray, kmax: int = 40) -> DecayEstimate:
    """Empirical power-decay certificate ||A^k|| <= C * rate^k.

    Stands in for an explicit adapted norm: rate is fitted by least
    squares on log ||A^k|| and nudged up so the bound dominates every
    computed power; C absorbs transient (non-normal) growth.
    """
    A = np.asarray(A, dtype=float)
    radius = float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0
    if radius >= 1.0:
        raise ValueError(f"spectral radius {radius:.6f} is not inside the unit disk")
    norms = []
    P = np.eye(A.shape[0])
    for _ in range(1, kmax + 1):
        P = P @ A
        norms.append(float(np.linalg.norm(P, 2)))
    norms_arr = np.array(norms)
    if np.all(norms_arr == 0.0):
        return DecayEstimate(1.0, 0.0, tuple(norms))
    positive = norms_arr > 0.0
    ks = np.arange(1, kmax + 1)[positive]
    logs = np.log(norms_arr[positive])
    if len(ks) >= 2:
        slope, intercept = np.polyfit(ks, logs, 1)
        rate = float(np.exp(slope))
    else:
        rate = radius
        intercept = 0.0
    rate = min(max(rate, radius), 1.0 - 1e-12)
    # enforce domination of the fit over the data
    prefactor = float(np.exp(intercept))
    for k, nk in zip(np.arange(1, kmax + 1), norms_arr):
        if nk > 0:
            prefactor = max(prefactor, nk / rate ** k)
    prefactor = max(prefactor, 1.0)
    return DecayEstimate(prefactor, rate, tuple(norms))
