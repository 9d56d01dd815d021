"""Constructive invariant foliations and principal Koopman eigenfunctions
for maps and semiflows with a stable fixed point."""

import os as _os

if _os.environ.get("FOLIATE_THREADS"):
    # cap BLAS pools before numpy spins them up
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["FOLIATE_THREADS"])

from .tensor_poly import (
    BlockIndex,
    HomogeneousPoly,
    JetMap,
    Splitting,
    compose_jets,
    eval_jet,
    merge_blocks,
    monomial_count,
    split_blocks,
)

__version__ = "0.1.0"
