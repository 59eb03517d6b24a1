"""Deterministic sample-set builders: Halton boxes, spheres, ball grids."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

Array = np.ndarray


def halton_box(bounds, n: int) -> Array:
    """n low-discrepancy points in the box given by ``bounds`` (d rows of (lo, hi)).

    Unscrambled Halton, so the output is reproducible; the initial all-zero
    point of the raw sequence is skipped.
    """
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    d = bounds.shape[0]
    sampler = qmc.Halton(d=d, scramble=False)
    sampler.fast_forward(1)
    u = sampler.random(n)
    return bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0])


def halton_sphere(dim: int, n: int) -> Array:
    """n quasi-random directions on the unit sphere in R^dim."""
    if dim == 1:
        signs = np.ones((n, 1))
        signs[1::2, 0] = -1.0
        return signs
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)
    u = sampler.random(n)
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return g / norms


def ball_grid(radius: float, dim: int, density: int) -> Array:
    """Uniform per-axis grid over [-R, R]^dim restricted to the ball |z| <= R.

    Axis endpoints are included, so in one dimension the extreme points +-R
    are always part of the grid.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    axes = [np.linspace(-radius, radius, density)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    keep = np.linalg.norm(pts, axis=1) <= radius * (1 + 1e-12)
    return pts[keep]


def box_grid(bounds, density: int) -> Array:
    """Uniform per-axis grid over a box, endpoints included."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    axes = [np.linspace(lo, hi, density) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
