"""Degree-by-degree solver for the semiconjugacy equations.

Given a map f = A + higher with block lower-triangular A, the pair
(submersion, reduced dynamics) solving  reduced o submersion =
submersion o f  is constructed order by order.  At each polynomial
degree the unknown splits into weight classes by how many monomial
factors lie in the complement coordinates; classes are solved in
decreasing weight so the triangular coupling only feeds already-known
blocks, and the final weight-zero class either defines the degree-n term
of the reduced dynamics ("foliation" mode) or is solved away under the
self-product nonresonance condition ("normal_form" mode).  Degrees past
the certified bound are continued with the reduced dynamics frozen;
there the divisors are controlled by the contraction-gap inequality and
never resonate.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .model import SplitChoice
from .tensor_poly import (
    HomogeneousPoly,
    JetMap,
    compose_jets,
    monomial_count,
    monomial_exponents,
    substitute_linear,
)

logger = logging.getLogger("foliate.homological")

__all__ = [
    "ResonantDivisorError",
    "ClassSolveRecord",
    "OrderSolveRecord",
    "SemiconjugacyJet",
    "assemble_inhomogeneity",
    "solve_degree",
    "solve_semiconjugacy",
    "jet_residual",
    "conjugate_solution",
]

DIVISOR_TOL = 1e-8
CONDITION_WARN = 1e6


class ResonantDivisorError(RuntimeError):
    """A homological divisor fell below the resonance tolerance."""

    def __init__(self, degree: int, weight: int, divisor: float, detail: str):
        super().__init__(
            f"resonant divisor {divisor:.3e} at degree {degree}, weight {weight}: {detail}"
        )
        self.degree = degree
        self.weight = weight
        self.divisor = divisor


@dataclass(frozen=True)
class ClassSolveRecord:
    weight: int
    size: int
    min_divisor: float
    condition_estimate: float


@dataclass(frozen=True)
class OrderSolveRecord:
    degree: int
    g_mode: str
    classes: tuple[ClassSolveRecord, ...]
    residual: float
    scale: float

    @property
    def min_divisor(self) -> float:
        values = [c.min_divisor for c in self.classes if np.isfinite(c.min_divisor)]
        return min(values) if values else np.inf

    def to_dict(self) -> dict:
        return {
            "degree": self.degree,
            "g_mode": self.g_mode,
            "residual": self.residual,
            "scale": self.scale,
            "classes": [
                {"weight": c.weight, "size": c.size,
                 "min_divisor": c.min_divisor,
                 "condition_estimate": c.condition_estimate}
                for c in self.classes
            ],
        }


@dataclass
class SemiconjugacyJet:
    """Jets of the submersion (full space -> distinguished block) and of
    the reduced dynamics on the distinguished block, solved to degree N
    with the reduced dynamics polynomial up to `reduced_degree`."""

    submersion: JetMap
    reduced: JetMap
    reduced_degree: int
    N: int
    mode: str
    records: tuple[OrderSolveRecord, ...]
    residuals: tuple[float, ...]

    @property
    def dim(self) -> int:
        return self.submersion.in_dim

    @property
    def dim0(self) -> int:
        return self.submersion.out_dim


@lru_cache(maxsize=None)
def _class_rows(dim: int, dim0: int, degree: int) -> tuple:
    """Per weight class: global monomial rows and their (distinguished,
    complement) tensor indices aligned with the Kronecker ordering."""
    exps = monomial_exponents(dim, degree)
    dim1 = dim - dim0
    out = []
    for j in range(degree + 1):
        rows = np.nonzero(exps[:, dim0:].sum(axis=1) == j)[0]
        if dim1 > 0:
            from .tensor_poly import _exponent_index
            idx0 = _exponent_index(dim0, degree - j)
            idx1 = _exponent_index(dim1, j)
            n1 = monomial_count(dim1, j)
            kron = np.array([
                idx0[tuple(int(v) for v in exps[r, :dim0])] * n1
                + idx1[tuple(int(v) for v in exps[r, dim0:])]
                for r in rows
            ])
        else:
            kron = np.arange(len(rows))
        out.append((rows, kron))
    return tuple(out)


@lru_cache(maxsize=None)
def _cached_substitution_matrix(key, dim: int, degree: int) -> np.ndarray:
    M = np.array(key).reshape(dim, dim)
    return _substitution_matrix(M, degree)


def _substitution_matrix(M: np.ndarray, degree: int) -> np.ndarray:
    """Matrix of p -> p(Mx) on degree-`degree` monomial coefficients:
    row m holds the expansion of (Mx)^{e_m}."""
    dim = M.shape[0]
    if degree == 0:
        return np.ones((1, 1))
    from .tensor_poly import _exponent_index, _pair_table
    prev = np.asarray(M, dtype=float)  # degree 1: row m = expansion of (Mx)_m
    for k in range(2, degree + 1):
        exps = monomial_exponents(dim, k)
        idx_prev = _exponent_index(dim, k - 1)
        table = _pair_table(dim, k - 1, 1)
        cur = np.zeros((exps.shape[0], monomial_count(dim, k)))
        for m, row in enumerate(exps):
            j = int(np.argmax(row > 0))
            parent = list(row)
            parent[j] -= 1
            pr = prev[idx_prev[tuple(parent)]]
            contrib = np.bincount(
                table.ravel(),
                weights=np.outer(pr, M[j]).ravel(),
                minlength=cur.shape[1],
            )
            cur[m] = contrib
        prev = cur
    return prev


def _min_divisor(sig0: np.ndarray, sig1: np.ndarray, degree: int, weight: int) -> float:
    """Smallest |product - target| over eigenvalue multisets of the class."""
    best = np.inf
    picks0 = list(combinations_with_replacement(sig0, degree - weight))
    picks1 = list(combinations_with_replacement(sig1, weight)) if weight else [tuple()]
    for m0 in picks0:
        p0 = np.prod(m0) if m0 else 1.0
        for m1 in picks1:
            value = p0 * (np.prod(m1) if m1 else 1.0)
            best = min(best, float(np.min(np.abs(value - sig0))))
    return best


def assemble_inhomogeneity(
    f_jet: JetMap, submersion_partial: JetMap, reduced_partial: JetMap, degree: int,
) -> HomogeneousPoly:
    """Degree-n inhomogeneity of the semiconjugacy equation: the degree-n
    component of submersion o f - reduced o submersion with all known
    lower-order terms inserted and the unknowns absent (the partial jets
    carry zeros at the target degree)."""
    for jet, name in ((submersion_partial, "submersion"), (reduced_partial, "reduced")):
        if jet.N >= degree and jet.component(degree).max_abs() != 0.0:
            raise ValueError(f"partial {name} jet already has a degree-{degree} term")
    lhs = compose_jets(submersion_partial.padded(degree), f_jet.padded(degree), degree)
    rhs = compose_jets(reduced_partial.padded(degree), submersion_partial.padded(degree), degree)
    coeffs = lhs.component(degree).coeffs - rhs.component(degree).coeffs
    return HomogeneousPoly(degree, f_jet.in_dim, submersion_partial.out_dim, coeffs)


def solve_degree(
    gamma: HomogeneousPoly,
    A0: np.ndarray,
    A1: np.ndarray,
    B: np.ndarray,
    degree: int,
    mode: str,
    tol_res: float = DIVISOR_TOL,
) -> tuple[HomogeneousPoly, HomogeneousPoly, OrderSolveRecord]:
    """Solve one degree of the semiconjugacy equation.

    Weight classes are processed in decreasing order, accumulating the
    triangular-coupling contributions of already-solved classes into the
    right-hand side.  `mode` decides the weight-zero class: "foliation"
    assigns it to the reduced dynamics, "normal_form" and "frozen" keep
    the reduced dynamics fixed and solve for the submersion term.
    Returns (submersion term, reduced term on the distinguished block,
    record).
    """
    if mode not in ("foliation", "normal_form", "frozen"):
        raise ValueError(f"unknown mode {mode!r}")
    d0 = A0.shape[0]
    d1 = A1.shape[0]
    d = d0 + d1
    if gamma.in_dim != d or gamma.out_dim != d0:
        raise ValueError("inhomogeneity dimensions do not match the blocks")

    sig0 = np.linalg.eigvals(A0)
    sig1 = np.linalg.eigvals(A1) if d1 else np.array([])
    scale0 = max(1.0, float(np.max(np.abs(sig0))))

    A_full = np.zeros((d, d))
    A_full[:d0, :d0] = A0
    A_full[d0:, :d0] = B
    A_full[d0:, d0:] = A1

    pi_coeffs = np.zeros((monomial_count(d, degree), d0))
    g_poly = HomogeneousPoly.zero(degree, d0, d0)
    classes = []

    gamma_scale = gamma.max_abs()
    short_circuit = gamma_scale == 0.0

    class_layout = _class_rows(d, d0, degree)
    for j in range(degree, -1, -1):
        rows, kron_idx = class_layout[j]
        size = len(rows)
        if size == 0:
            continue
        min_div = _min_divisor(sig0, sig1, degree, j)

        if short_circuit:
            classes.append(ClassSolveRecord(j, size, min_div, 1.0))
            continue

        coupled = HomogeneousPoly(degree, d, d0, pi_coeffs)
        image = substitute_linear(coupled, A_full) if np.any(pi_coeffs) else coupled
        R = gamma.coeffs[rows] + image.coeffs[rows]

        if j == 0 and mode == "foliation":
            g_coeffs = np.zeros((monomial_count(d0, degree), d0))
            g_coeffs[kron_idx] = R
            g_poly = HomogeneousPoly(degree, d0, d0, g_coeffs)
            classes.append(ClassSolveRecord(0, size, min_div, 1.0))
            continue

        if min_div <= tol_res * scale0:
            detail = ("self-products of the distinguished spectrum meet it"
                      if j == 0 else "mixed eigenvalue products meet the distinguished spectrum")
            raise ResonantDivisorError(degree, j, min_div, detail)

        phi0 = _substitution_matrix(A0, degree - j)
        phi_cls = np.kron(phi0, _substitution_matrix(A1, j)) if j and d1 else phi0
        m = phi_cls.shape[0]
        R_k = np.zeros((m, d0))
        R_k[kron_idx] = R
        op = np.kron(A0, np.eye(m)) - np.kron(np.eye(d0), phi_cls.T)
        # factor scale over smallest divisor: a cheap relative-conditioning proxy
        cond_est = (float(np.linalg.norm(A0, 1)) + float(np.linalg.norm(phi_cls, 1))) \
            / max(min_div, 1e-300)
        if cond_est > CONDITION_WARN:
            warnings.warn(
                f"homological solve at degree {degree}, weight {j} is "
                f"ill-conditioned (estimate {cond_est:.2e}); proceeding",
                RuntimeWarning, stacklevel=2,
            )
        C = np.linalg.solve(op, R_k.ravel(order="F")).reshape((m, d0), order="F")
        pi_coeffs[rows] = C[kron_idx]
        classes.append(ClassSolveRecord(j, size, min_div, cond_est))

    pi_poly = HomogeneousPoly(degree, d, d0, pi_coeffs)

    # residual of the degree-n equation itself
    lhs = pi_poly.coeffs @ A0.T - substitute_linear(pi_poly, A_full).coeffs
    g_embedded = np.zeros_like(gamma.coeffs)
    rows0, kron0 = class_layout[0]
    g_embedded[rows0] = g_poly.coeffs[kron0]
    scale = max(1.0, gamma_scale, pi_poly.max_abs(), g_poly.max_abs())
    residual = float(np.max(np.abs(g_embedded + lhs - gamma.coeffs))) / scale

    record = OrderSolveRecord(degree, mode, tuple(classes), residual, scale)
    return pi_poly, g_poly, record


def solve_semiconjugacy(
    f_jet: JetMap,
    split: SplitChoice,
    reduced_degree: int,
    N: int,
    mode: str = "foliation",
    linear_gauge: np.ndarray | None = None,
    tol_res: float = DIVISOR_TOL,
    normal_form_degrees: set[int] | None = None,
) -> SemiconjugacyJet:
    """Solve the semiconjugacy equations for an adapted-coordinate map jet.

    Degrees 2..reduced_degree honor the requested mode; degrees beyond
    are continued with the reduced dynamics frozen.  `linear_gauge`
    post-conjugates the solution so the submersion's restriction to the
    distinguished block has the given linear part instead of the
    identity.  `normal_form_degrees` optionally forces the reduced term
    to vanish at selected degrees only.
    """
    if N < reduced_degree:
        raise ValueError("continuation degree N must be at least the reduced degree")
    if N > f_jet.N:
        raise ValueError(f"map jet only reaches degree {f_jet.N}, requested N={N}")
    d0 = split.dim0
    d = split.dim
    if f_jet.in_dim != d:
        raise ValueError("map jet dimension does not match the splitting")

    f_jet = _clean_triangular(f_jet, d0)
    A = f_jet.linear_part()
    A0 = A[:d0, :d0]
    A1 = A[d0:, d0:]
    B = A[d0:, :d0]

    submersion = JetMap.from_linear(split.splitting.proj0_restricted, N)
    reduced = JetMap.from_linear(A0, N)

    records = []
    for n in range(2, N + 1):
        if n > reduced_degree:
            degree_mode = "frozen"
        elif normal_form_degrees is not None:
            degree_mode = "normal_form" if n in normal_form_degrees else "foliation"
        else:
            degree_mode = mode
        gamma = assemble_inhomogeneity(
            f_jet, submersion.truncated(n - 1).padded(n), reduced.truncated(n - 1).padded(n), n
        )
        pi_n, g_n, record = solve_degree(gamma, A0, A1, B, n, degree_mode, tol_res)
        logger.debug("degree %d (%s): min divisor %.3e, residual %.3e",
                     n, degree_mode, record.min_divisor, record.residual)
        submersion = submersion.with_component(pi_n)
        if degree_mode == "foliation":
            reduced = reduced.with_component(g_n)
        records.append(record)

    result = SemiconjugacyJet(
        submersion=submersion, reduced=reduced, reduced_degree=reduced_degree,
        N=N, mode=mode, records=tuple(records),
        residuals=tuple(),
    )
    if linear_gauge is not None:
        result = conjugate_solution(result, np.asarray(linear_gauge, dtype=float))
    result.residuals = jet_residual(result, f_jet, N)
    return result


def _clean_triangular(f_jet: JetMap, d0: int) -> JetMap:
    """Verify and zero the numerically-vanishing upper coupling block of
    the linear part, so the staged solve and the jet agree exactly."""
    A = f_jet.linear_part()
    scale = max(1.0, float(np.max(np.abs(A))))
    defect = float(np.max(np.abs(A[:d0, d0:]))) if A.shape[0] > d0 else 0.0
    if defect > 1e-9 * scale:
        raise ValueError(
            f"linear part is not block lower-triangular in these coordinates "
            f"(defect {defect:.3e}); build a split choice first"
        )
    if defect == 0.0:
        return f_jet
    A = A.copy()
    A[:d0, d0:] = 0.0
    comp1 = HomogeneousPoly(1, f_jet.in_dim, f_jet.out_dim, A.T.copy())
    return f_jet.with_component(comp1)


def conjugate_solution(sol: SemiconjugacyJet, gauge: np.ndarray) -> SemiconjugacyJet:
    """Replace (submersion, reduced) by (C o submersion, C o reduced o C^-1);
    the transformed pair solves the same equations with the submersion's
    linear part scaled by the gauge C."""
    C = np.atleast_2d(gauge)
    if C.shape != (sol.dim0, sol.dim0):
        raise ValueError(f"gauge must be {sol.dim0}x{sol.dim0}")
    Cinv = np.linalg.inv(C)
    sub_comps = [
        HomogeneousPoly(p.degree, p.in_dim, p.out_dim, p.coeffs @ C.T)
        for p in sol.submersion.components
    ]
    red_comps = []
    for p in sol.reduced.components:
        q = substitute_linear(p, Cinv) if p.degree >= 1 else p
        red_comps.append(HomogeneousPoly(p.degree, p.in_dim, p.out_dim, q.coeffs @ C.T))
    return SemiconjugacyJet(
        submersion=JetMap(sub_comps), reduced=JetMap(red_comps),
        reduced_degree=sol.reduced_degree, N=sol.N, mode=sol.mode,
        records=sol.records, residuals=sol.residuals,
    )


def jet_residual(sol: SemiconjugacyJet, f_jet: JetMap, N: int | None = None) -> tuple[float, ...]:
    """Per-degree coefficient-norm residuals of
    reduced o submersion - submersion o f, relative to the coefficient
    scale max(1, largest coefficient among f, submersion, reduced)."""
    if N is None:
        N = sol.N
    submersion = sol.submersion.padded(N)
    reduced = sol.reduced.padded(N)
    f_full = f_jet.padded(N).truncated(N)
    lhs = compose_jets(reduced, submersion.truncated(N), N)
    rhs = compose_jets(submersion, f_full, N)
    out = []
    running_scale = 1.0
    for n in range(N + 1):
        running_scale = max(
            running_scale,
            f_full.component(n).max_abs(),
            submersion.component(n).max_abs(),
            reduced.component(n).max_abs(),
        )
        diff = float(np.max(np.abs(
            lhs.component(n).coeffs - rhs.component(n).coeffs
        )))
        out.append(diff / running_scale)
    return tuple(out)
