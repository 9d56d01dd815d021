"""Graded polynomial algebra over a split finite-dimensional space.

Homogeneous polynomial maps are stored as dense monomial-coefficient
arrays in graded-lexicographic order.  Truncated jets (collections of
homogeneous components) support evaluation, truncated multiplication and
composition, and the block decomposition induced by a coordinate
splitting, which is the workhorse of the degree-by-degree solver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "monomial_count",
    "monomial_exponents",
    "HomogeneousPoly",
    "JetMap",
    "Splitting",
    "BlockIndex",
    "eval_jet",
    "compose_jets",
    "substitute_linear",
    "split_blocks",
    "merge_blocks",
    "jet_to_dict",
    "jet_from_dict",
    "save_jet",
    "load_jet",
]


def monomial_count(dim: int, degree: int) -> int:
    """Number of degree-`degree` monomials in `dim` variables."""
    if dim < 1:
        raise ValueError(f"dimension must be >= 1, got {dim}")
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    return math.comb(dim + degree - 1, degree)


@lru_cache(maxsize=None)
def monomial_exponents(dim: int, degree: int) -> np.ndarray:
    """Exponent rows of all degree-`degree` monomials, lexicographically
    descending in the leading variable (graded-lex within a fixed degree).

    The returned array is cached and read-only; shape (count, dim).
    """
    if dim == 1:
        out = np.array([[degree]], dtype=np.int64)
    else:
        rows = []
        for lead in range(degree, -1, -1):
            tail = monomial_exponents(dim - 1, degree - lead)
            block = np.empty((tail.shape[0], dim), dtype=np.int64)
            block[:, 0] = lead
            block[:, 1:] = tail
            rows.append(block)
        out = np.vstack(rows)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _exponent_index(dim: int, degree: int) -> Mapping[tuple, int]:
    exps = monomial_exponents(dim, degree)
    return {tuple(int(v) for v in row): i for i, row in enumerate(exps)}


@lru_cache(maxsize=None)
def _pair_table(dim: int, d1: int, d2: int) -> np.ndarray:
    """Flat row indices in degree d1+d2 of products of degree-d1 and
    degree-d2 monomials; shape (count(d1), count(d2))."""
    e1 = monomial_exponents(dim, d1)
    e2 = monomial_exponents(dim, d2)
    index = _exponent_index(dim, d1 + d2)
    table = np.empty((e1.shape[0], e2.shape[0]), dtype=np.int64)
    for i, row in enumerate(e1):
        sums = row[None, :] + e2
        table[i] = [index[tuple(int(v) for v in s)] for s in sums]
    table.setflags(write=False)
    return table


def _degree_offsets(dim: int, top: int) -> tuple[np.ndarray, int]:
    counts = [monomial_count(dim, n) for n in range(top + 1)]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return offsets, int(offsets[-1])


class HomogeneousPoly:
    """A homogeneous polynomial map, i.e. the monomial form of a symmetric
    multilinear map between finite-dimensional spaces.

    coeffs has shape (monomial_count(in_dim, degree), out_dim); row order
    follows :func:`monomial_exponents`.
    """

    __slots__ = ("degree", "in_dim", "out_dim", "coeffs")

    def __init__(self, degree: int, in_dim: int, out_dim: int, coeffs: np.ndarray):
        coeffs = np.array(coeffs, dtype=float, order="C")  # own the buffer
        expected = (monomial_count(in_dim, degree), out_dim)
        if coeffs.shape != expected:
            raise ValueError(
                f"coefficient array shape {coeffs.shape} does not match "
                f"{expected} for degree {degree} in dim {in_dim} -> {out_dim}"
            )
        self.degree = degree
        self.in_dim = in_dim
        self.out_dim = out_dim
        coeffs.setflags(write=False)
        self.coeffs = coeffs

    @classmethod
    def zero(cls, degree: int, in_dim: int, out_dim: int) -> "HomogeneousPoly":
        return cls(degree, in_dim, out_dim, np.zeros((monomial_count(in_dim, degree), out_dim)))

    @classmethod
    def from_terms(
        cls, degree: int, in_dim: int, out_dim: int,
        terms: Iterable[tuple[Sequence[int], int, float]],
    ) -> "HomogeneousPoly":
        """Build from (exponents, output component, coefficient) triples."""
        coeffs = np.zeros((monomial_count(in_dim, degree), out_dim))
        index = _exponent_index(in_dim, degree)
        for exps, comp, value in terms:
            key = tuple(int(v) for v in exps)
            if sum(key) != degree:
                raise ValueError(f"exponents {key} are not of degree {degree}")
            coeffs[index[key], comp] += value
        return cls(degree, in_dim, out_dim, coeffs)

    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.in_dim, self.degree)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"point has dimension {x.shape[-1]}, expected {self.in_dim}")
        if self.degree == 0:
            base = self.coeffs[0]
            return np.broadcast_to(base, x.shape[:-1] + (self.out_dim,)).copy()
        powers = np.prod(x[..., None, :] ** self.exponents(), axis=-1)
        return powers @ self.coeffs

    def coefficient(self, exps: Sequence[int]) -> np.ndarray:
        """Coefficient vector of the monomial with the given exponents."""
        return self.coeffs[_exponent_index(self.in_dim, self.degree)[tuple(int(v) for v in exps)]]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def __repr__(self) -> str:
        return (f"HomogeneousPoly(degree={self.degree}, in_dim={self.in_dim}, "
                f"out_dim={self.out_dim}, max|c|={self.max_abs():.3g})")


class JetMap:
    """A polynomial truncation (jet) of a map: homogeneous components of
    contiguous degrees 0..N with shared dimensions."""

    __slots__ = ("in_dim", "out_dim", "N", "components")

    def __init__(self, components: Sequence[HomogeneousPoly]):
        if not components:
            raise ValueError("a jet needs at least one component")
        in_dim = components[0].in_dim
        out_dim = components[0].out_dim
        for n, comp in enumerate(components):
            if comp.degree != n:
                raise ValueError(f"component {n} has degree {comp.degree}; degrees must be contiguous from 0")
            if comp.in_dim != in_dim or comp.out_dim != out_dim:
                raise ValueError("all components must share dimensions")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.N = len(components) - 1
        self.components = tuple(components)

    @classmethod
    def zero(cls, in_dim: int, out_dim: int, N: int) -> "JetMap":
        return cls([HomogeneousPoly.zero(n, in_dim, out_dim) for n in range(N + 1)])

    @classmethod
    def from_linear(cls, A: np.ndarray, N: int = 1) -> "JetMap":
        """Jet of the linear map x -> A x, padded with zeros up to degree N."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        out_dim, in_dim = A.shape
        comps = [HomogeneousPoly.zero(0, in_dim, out_dim),
                 HomogeneousPoly(1, in_dim, out_dim, A.T.copy())]
        for n in range(2, N + 1):
            comps.append(HomogeneousPoly.zero(n, in_dim, out_dim))
        return cls(comps)

    @classmethod
    def identity(cls, dim: int, N: int = 1) -> "JetMap":
        return cls.from_linear(np.eye(dim), N)

    @classmethod
    def from_components(cls, in_dim: int, out_dim: int, N: int,
                        parts: Mapping[int, HomogeneousPoly]) -> "JetMap":
        comps = []
        for n in range(N + 1):
            comps.append(parts.get(n, HomogeneousPoly.zero(n, in_dim, out_dim)))
        return cls(comps)

    def component(self, n: int) -> HomogeneousPoly:
        return self.components[n]

    def linear_part(self) -> np.ndarray:
        """The degree-1 component as a matrix (out_dim, in_dim)."""
        return self.components[1].coeffs.T.copy()

    def constant_part(self) -> np.ndarray:
        return self.components[0].coeffs[0].copy()

    def truncated(self, N: int) -> "JetMap":
        if N >= self.N:
            return self.padded(N)
        return JetMap(self.components[: N + 1])

    def padded(self, N: int) -> "JetMap":
        if N <= self.N:
            return self
        comps = list(self.components)
        for n in range(self.N + 1, N + 1):
            comps.append(HomogeneousPoly.zero(n, self.in_dim, self.out_dim))
        return JetMap(comps)

    def with_component(self, poly: HomogeneousPoly) -> "JetMap":
        comps = list(self.components)
        comps[poly.degree] = poly
        return JetMap(comps)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.components[0](x)
        for comp in self.components[1:]:
            out = out + comp(x)
        return out

    def max_abs(self) -> float:
        return max(comp.max_abs() for comp in self.components)

    def flat(self) -> np.ndarray:
        """Stacked coefficients, shape (out_dim, total monomials of degrees 0..N)."""
        return np.concatenate([comp.coeffs.T for comp in self.components], axis=1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, in_dim: int, N: int) -> "JetMap":
        offsets, total = _degree_offsets(in_dim, N)
        if flat.shape[1] != total:
            raise ValueError(f"flat array has {flat.shape[1]} columns, expected {total}")
        comps = [
            HomogeneousPoly(n, in_dim, flat.shape[0], flat[:, offsets[n]:offsets[n + 1]].T.copy())
            for n in range(N + 1)
        ]
        return cls(comps)

    def __repr__(self) -> str:
        return f"JetMap(in_dim={self.in_dim}, out_dim={self.out_dim}, N={self.N})"


def eval_jet(jet: JetMap, x: np.ndarray) -> np.ndarray:
    """Evaluate the sum of all homogeneous components at x."""
    return jet(x)


def jet_jacobian(jet: JetMap, x: np.ndarray) -> np.ndarray:
    """Derivative matrix of the jet at x, shape (out_dim, in_dim)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((jet.out_dim, jet.in_dim))
    for comp in jet.components:
        if comp.degree == 0 or comp.max_abs() == 0.0:
            continue
        exps = comp.exponents()
        for var in range(jet.in_dim):
            e_var = exps[:, var]
            active = e_var > 0
            if not active.any():
                continue
            lowered = exps[active].copy()
            lowered[:, var] -= 1
            powers = np.prod(x[None, :] ** lowered, axis=1)
            out[:, var] += (e_var[active] * powers) @ comp.coeffs[active]
    return out


def _flat_multiply(a: np.ndarray, b: np.ndarray, dim: int, N: int,
                   offsets: np.ndarray) -> np.ndarray:
    """Truncated product of two flat scalar jets over the same variables."""
    out = np.zeros_like(a)
    for d1 in range(N + 1):
        a_d = a[offsets[d1]:offsets[d1 + 1]]
        if not np.any(a_d):
            continue
        for d2 in range(N + 1 - d1):
            b_d = b[offsets[d2]:offsets[d2 + 1]]
            if not np.any(b_d):
                continue
            d = d1 + d2
            seg = slice(offsets[d], offsets[d + 1])
            if d1 == 0:
                out[seg] += a_d[0] * b_d
            elif d2 == 0:
                out[seg] += b_d[0] * a_d
            else:
                table = _pair_table(dim, d1, d2)
                contrib = np.bincount(
                    table.ravel(),
                    weights=np.outer(a_d, b_d).ravel(),
                    minlength=offsets[d + 1] - offsets[d],
                )
                out[seg] += contrib
    return out


def compose_jets(outer: JetMap, inner: JetMap, N: int) -> JetMap:
    """Degree-<=N jet of outer(inner(x)).

    The inner jet must have zero constant term so that composition is
    well defined degree by degree.  Implemented by iterated truncated
    multiplication: monomials of the outer map are expanded as products
    of the inner component jets, built up through a parent-monomial
    recursion and contracted against the outer coefficients.
    """
    if inner.out_dim != outer.in_dim:
        raise ValueError(
            f"dimension mismatch: inner produces {inner.out_dim}, outer consumes {outer.in_dim}"
        )
    const = inner.constant_part()
    scale = max(1.0, inner.max_abs())
    if np.max(np.abs(const), initial=0.0) > 1e-13 * scale:
        raise ValueError("inner jet must have zero constant term")

    dim = inner.in_dim
    mid = inner.out_dim
    offsets, total = _degree_offsets(dim, N)
    inner_flat = inner.truncated(N).flat()
    inner_flat = inner_flat.copy()
    inner_flat[:, 0] = 0.0  # scrub numerically-zero constant

    out_flat = np.zeros((outer.out_dim, total))
    out_flat[:, 0] = outer.constant_part()

    kmax = 0
    for k in range(1, min(N, outer.N) + 1):
        if outer.component(k).max_abs() > 0.0:
            kmax = k

    powers_prev: np.ndarray | None = None
    for k in range(1, kmax + 1):
        if k == 1:
            powers = inner_flat
        else:
            exps = monomial_exponents(mid, k)
            index_prev = _exponent_index(mid, k - 1)
            powers = np.zeros((exps.shape[0], total))
            for m, row in enumerate(exps):
                j = int(np.argmax(row > 0))
                parent = list(row)
                parent[j] -= 1
                m_prev = index_prev[tuple(parent)]
                powers[m] = _flat_multiply(
                    powers_prev[m_prev], inner_flat[j], dim, N, offsets
                )
        comp = outer.component(k)
        if comp.max_abs() > 0.0:
            out_flat += comp.coeffs.T @ powers
        powers_prev = powers

    return JetMap.from_flat(out_flat, dim, N)


def invert_jet(jet: JetMap, N: int | None = None) -> JetMap:
    """Jet of the inverse of a square map with invertible linear part and
    zero constant term, by the Newton-style update
    g <- g - L^-1 (jet o g - id), which settles one degree per sweep."""
    if jet.in_dim != jet.out_dim:
        raise ValueError("only square jets are invertible")
    if N is None:
        N = jet.N
    L = jet.linear_part()
    Linv = np.linalg.inv(L)
    dim = jet.in_dim
    ident = JetMap.identity(dim, N)
    g = JetMap.from_linear(Linv, N)
    for _ in range(max(N - 1, 0)):
        comp = compose_jets(jet.padded(N), g, N)
        err_flat = comp.flat() - ident.flat()
        g = JetMap.from_flat(g.flat() - Linv @ err_flat, dim, N)
    return g


def substitute_linear(p: HomogeneousPoly, M: np.ndarray) -> HomogeneousPoly:
    """The homogeneous polynomial x -> p(M x)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != p.in_dim:
        raise ValueError(f"matrix has {M.shape[0]} rows, expected {p.in_dim}")
    outer = JetMap.from_components(p.in_dim, p.out_dim, p.degree, {p.degree: p})
    inner = JetMap.from_linear(M)
    return compose_jets(outer, inner, p.degree).component(p.degree)


@dataclass(frozen=True)
class Splitting:
    """A coordinate splitting of R^dim_total into a distinguished subspace
    (indices `basis0`) and its coordinate complement.

    Projections, inclusions and restricted projections are exposed as
    explicit matrices so downstream code can stay matrix-algebraic.  A
    non-None `change_of_basis` marks data that is not yet expressed in
    adapted coordinates; the block operations refuse to act on it.
    """

    dim_total: int
    basis0: tuple[int, ...]
    change_of_basis: np.ndarray | None = None

    def __post_init__(self):
        if not self.basis0:
            raise ValueError("the distinguished subspace must contain at least one coordinate")
        idx = tuple(sorted(int(i) for i in self.basis0))
        if idx != self.basis0:
            object.__setattr__(self, "basis0", idx)
        if idx[0] < 0 or idx[-1] >= self.dim_total:
            raise ValueError(f"coordinate indices {idx} out of range for dimension {self.dim_total}")
        if len(set(idx)) != len(idx):
            raise ValueError("repeated coordinate indices")
        # a trivial complement is allowed: the solve then produces a full
        # linearizing (or normal-form) conjugacy instead of a foliation

    @property
    def dim0(self) -> int:
        return len(self.basis0)

    @property
    def dim1(self) -> int:
        return self.dim_total - len(self.basis0)

    @property
    def basis1(self) -> tuple[int, ...]:
        others = [i for i in range(self.dim_total) if i not in set(self.basis0)]
        return tuple(others)

    @property
    def iota0(self) -> np.ndarray:
        out = np.zeros((self.dim_total, self.dim0))
        for col, i in enumerate(self.basis0):
            out[i, col] = 1.0
        return out

    @property
    def iota1(self) -> np.ndarray:
        out = np.zeros((self.dim_total, self.dim1))
        for col, i in enumerate(self.basis1):
            out[i, col] = 1.0
        return out

    @property
    def proj0_restricted(self) -> np.ndarray:
        return self.iota0.T

    @property
    def proj1_restricted(self) -> np.ndarray:
        return self.iota1.T

    @property
    def proj0(self) -> np.ndarray:
        return self.iota0 @ self.proj0_restricted

    @property
    def proj1(self) -> np.ndarray:
        return self.iota1 @ self.proj1_restricted

    def weight_of_exponents(self, exps: np.ndarray) -> np.ndarray:
        """Number of monomial factors falling in the complement coordinates."""
        return np.asarray(exps)[:, list(self.basis1)].sum(axis=1)


@dataclass(frozen=True)
class BlockIndex:
    """Which slots of a multilinear map take complement-subspace arguments.

    Stored as a 0/1 tuple; by permutation symmetry of the stored
    polynomials only the weight matters, so canonical representatives
    carry their ones in the trailing slots.
    """

    alpha: tuple[int, ...]

    def __post_init__(self):
        if any(v not in (0, 1) for v in self.alpha):
            raise ValueError("block index entries must be 0 or 1")

    @property
    def weight(self) -> int:
        return sum(self.alpha)

    @classmethod
    def of_weight(cls, weight: int, degree: int) -> "BlockIndex":
        if not 0 <= weight <= degree:
            raise ValueError(f"weight {weight} out of range for degree {degree}")
        return cls((0,) * (degree - weight) + (1,) * weight)


def _require_adapted(s: Splitting):
    if s.change_of_basis is not None:
        raise ValueError(
            "splitting carries a nontrivial change of basis; transform the "
            "polynomial to adapted coordinates before block operations"
        )


def split_blocks(p: HomogeneousPoly, s: Splitting) -> dict[BlockIndex, HomogeneousPoly]:
    """Partition the monomials of p by how many factors lie in the
    complement coordinates.  Weight classes stand in for the full
    2^n block decomposition, which collapses by permutation symmetry."""
    _require_adapted(s)
    if p.in_dim != s.dim_total:
        raise ValueError(f"polynomial acts on dimension {p.in_dim}, splitting on {s.dim_total}")
    weights = s.weight_of_exponents(p.exponents())
    out: dict[BlockIndex, HomogeneousPoly] = {}
    for j in range(p.degree + 1):
        mask = weights == j
        coeffs = np.zeros_like(p.coeffs)
        coeffs[mask] = p.coeffs[mask]
        out[BlockIndex.of_weight(j, p.degree)] = HomogeneousPoly(
            p.degree, p.in_dim, p.out_dim, coeffs
        )
    return out


def merge_blocks(blocks: Mapping[BlockIndex, HomogeneousPoly], s: Splitting) -> HomogeneousPoly:
    """Inverse of :func:`split_blocks`: reassemble the full polynomial."""
    _require_adapted(s)
    items = list(blocks.values())
    if not items:
        raise ValueError("no blocks to merge")
    degree = items[0].degree
    for b in items:
        if b.degree != degree:
            raise ValueError("blocks have inconsistent degrees")
    coeffs = np.zeros_like(items[0].coeffs)
    for b in items:
        coeffs = coeffs + b.coeffs
    return HomogeneousPoly(degree, items[0].in_dim, items[0].out_dim, coeffs)


# -- JSON serialization ------------------------------------------------------

def jet_to_dict(jet: JetMap) -> dict:
    components = []
    for comp in jet.components:
        exps = comp.exponents()
        monomials = [
            {"exponents": [int(v) for v in exps[m]],
             "coeffs": [float(c) for c in comp.coeffs[m]]}
            for m in range(exps.shape[0])
        ]
        components.append({"degree": comp.degree, "monomials": monomials})
    return {
        "in_dim": jet.in_dim,
        "out_dim": jet.out_dim,
        "N": jet.N,
        "components": components,
    }


def jet_from_dict(data: Mapping) -> JetMap:
    in_dim = int(data["in_dim"])
    out_dim = int(data["out_dim"])
    N = int(data["N"])
    comps = []
    for entry in data["components"]:
        degree = int(entry["degree"])
        coeffs = np.zeros((monomial_count(in_dim, degree), out_dim))
        index = _exponent_index(in_dim, degree)
        for mono in entry["monomials"]:
            coeffs[index[tuple(int(v) for v in mono["exponents"])]] = mono["coeffs"]
        comps.append(HomogeneousPoly(degree, in_dim, out_dim, coeffs))
    jet = JetMap(comps)
    if jet.N != N:
        raise ValueError(f"jet declares N={N} but has {jet.N + 1} components")
    return jet


def save_jet(jet: JetMap, path) -> None:
    with open(path, "w") as fh:
        json.dump(jet_to_dict(jet), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_jet(path) -> JetMap:
    with open(path) as fh:
        return jet_from_dict(json.load(fh))
