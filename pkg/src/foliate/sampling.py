"""Deterministic low-discrepancy sampling for certificates and grids.

All randomized measurements in the package draw from here, keyed by an
explicit seed, so certificates and reports are reproducible byte for
byte.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc
from scipy.special import ndtri

__all__ = ["ball_samples", "sphere_samples", "worker_count"]


def _unit_directions(dim: int, n: int, seed: int, offset: int = 0) -> np.ndarray:
    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    if offset:
        sampler.fast_forward(offset)
    u = sampler.random(n)
    # inverse-normal map turns the low-discrepancy cube into isotropic directions
    z = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return z / norms


def ball_samples(dim: int, n: int, radius: float = 1.0, seed: int = 0,
                 surface_fraction: float = 0.0) -> np.ndarray:
    """n quasi-random points in the closed ball of the given radius.

    A `surface_fraction` of the points is placed exactly on the sphere,
    so sup-norm measurements see the boundary.
    """
    if n <= 0:
        raise ValueError("need a positive number of samples")
    n_surface = int(round(surface_fraction * n))
    dirs = _unit_directions(dim, n, seed)
    radial = qmc.Halton(d=1, scramble=True, seed=seed + 101).random(n).ravel()
    radii = radius * radial ** (1.0 / dim)
    if n_surface:
        radii[:n_surface] = radius
    return dirs * radii[:, None]


def sphere_samples(dim: int, n: int, radius: float = 1.0, seed: int = 0) -> np.ndarray:
    return radius * _unit_directions(dim, n, seed)


def worker_count(env_value: str | None) -> int:
    """Parallelism cap from the FOLIATE_THREADS environment value."""
    if not env_value:
        return 1
    try:
        return max(1, int(env_value))
    except ValueError:
        return 1
