"""Per-location operations on trait profiles ``u(., y)``."""
from __future__ import annotations

import numpy as np

from .model import TraitGrid

__all__ = ["NonConcaveProfile", "second_differences", "track_argmax", "count_maxima_runs"]


class NonConcaveProfile(ValueError):
    pass


def second_differences(u: np.ndarray, dx: float) -> np.ndarray:
    """Centered second differences along axis 0 at interior trait nodes."""
    return (u[:-2] - 2.0 * u[1:-1] + u[2:]) / dx**2


def count_maxima_runs(u: np.ndarray) -> np.ndarray:
    """Number of separated runs of (weak) local maxima per column."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    pad = np.full((1, u.shape[1]), -np.inf)
    left = np.vstack([pad, u[:-1]])
    right = np.vstack([u[1:], pad])
    mask = (u >= left) & (u >= right)
    starts = mask[1:] & ~mask[:-1]
    return mask[0].astype(int) + starts.sum(axis=0)


def track_argmax(u: np.ndarray, tgrid: TraitGrid) -> np.ndarray:
    """Sub-grid location of the maximum of ``u`` in ``x`` for every column.

    The discrete maximizer is refined by the vertex of the parabola through it
    and its two neighbours. At a trait end the parabola through the three end
    nodes is used and its vertex clipped to the grid, so a profile that is
    still increasing at the boundary returns the boundary node.

    Raises
    ------
    NonConcaveProfile
        if some column has two separated local maxima.
    """
    u = np.asarray(u, dtype=float)
    squeeze = u.ndim == 1
    if squeeze:
        u = u[:, None]
    runs = count_maxima_runs(u)
    if np.any(runs > 1):
        j = int(np.argmax(runs > 1))
        raise NonConcaveProfile(f"profile at spatial index {j} has {runs[j]} separated local maxima")

    n_x = u.shape[0]
    cols = np.arange(u.shape[1])
    i = np.argmax(u, axis=0)
    x = tgrid.x_min + i * tgrid.dx
    if n_x >= 3:
        centre = np.clip(i, 1, n_x - 2)
        a, b, c = u[centre - 1, cols], u[centre, cols], u[centre + 1, cols]
        curv = a - 2.0 * b + c
        safe = np.where(curv < 0, curv, -1.0)
        vertex = tgrid.x_min + (centre + 0.5 * (a - c) / safe) * tgrid.dx
        x = np.where(curv < 0, np.clip(vertex, tgrid.x_min, tgrid.x_max), x)
    return x[0] if squeeze else x
