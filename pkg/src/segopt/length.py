"""Boundary length under the two conventions the optimizers use.

``length_continuous`` integrates a smeared Dirac of the embedding function,
``crofton_length`` counts cut grid edges weighted by the Cauchy-Crofton
formula. They measure the same geometric quantity by very different means,
so energies built on them are not directly comparable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GRAD_FLOOR = 1e-8

_HALF_PLANE = {
    4: [(1, 0), (0, 1)],
    8: [(1, 0), (1, 1), (0, 1), (-1, 1)],
    16: [(1, 0), (2, 1), (1, 1), (1, 2), (0, 1), (-1, 2), (-1, 1), (-2, 1)],
}


def dirac(t, eps: float = 1.5):
    """Cosine-regularized Dirac, ``(1 + cos(pi t / eps)) / (2 eps)`` on ``|t| <= eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    t = np.asarray(t, dtype=np.float64)
    inside = (1.0 + np.cos(np.pi * np.clip(t, -eps, eps) / eps)) / (2.0 * eps)
    out = np.where(np.abs(t) <= eps, inside, 0.0)
    return float(out) if out.ndim == 0 else out


def central_gradient(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with nearest-neighbour replication at the border."""
    p = np.pad(phi, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return gx, gy


def grad_norm(phi: np.ndarray) -> np.ndarray:
    gx, gy = central_gradient(phi)
    return np.hypot(gx, gy)


def length_continuous(phi: np.ndarray, eps: float = 1.5) -> float:
    """``sum_p delta_eps(phi(p)) * |grad phi(p)|`` with unit grid spacing."""
    phi = np.asarray(phi, dtype=np.float64)
    return float(np.sum(dirac(phi, eps) * grad_norm(phi)))


@dataclass(frozen=True)
class CroftonStencil:
    """Edge directions (one per undirected family) and their Crofton weights."""

    order: int
    offsets: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]


def crofton_weights(order: int = 16) -> CroftonStencil:
    if order not in _HALF_PLANE:
        raise ValueError(f"unsupported neighbourhood order {order}; use 4, 8 or 16")
    offsets = _HALF_PLANE[order]
    angles = [math.atan2(dy, dx) for dx, dy in offsets]
    n = len(angles)
    weights = []
    for k, (dx, dy) in enumerate(offsets):
        # angular cell: half the gap to each neighbouring direction (period pi)
        prev_gap = (angles[k] - angles[k - 1]) % math.pi
        next_gap = (angles[(k + 1) % n] - angles[k]) % math.pi
        dtheta = 0.5 * (prev_gap + next_gap)
        weights.append(dtheta / (2.0 * math.hypot(dx, dy)))
    return CroftonStencil(order, tuple(offsets), tuple(weights))


def shifted_pairs(shape, offset):
    """Index slices ``(a, b)`` such that ``arr[a]`` and ``arr[b]`` are the pixel pairs
    ``p`` and ``p + (dx, dy)`` that both lie inside the grid."""
    h, w = shape
    dx, dy = offset

    def span(d, n):
        return (slice(0, n - d), slice(d, n)) if d >= 0 else (slice(-d, n), slice(0, n + d))

    xa, xb = span(dx, w)
    ya, yb = span(dy, h)
    return (ya, xa), (yb, xb)


def crofton_length(s: np.ndarray, stencil: CroftonStencil | int = 16) -> float:
    """Weighted count of grid edges joining pixels with different labels."""
    if isinstance(stencil, int):
        stencil = crofton_weights(stencil)
    s = np.asarray(s, dtype=bool)
    total = 0.0
    for off, wk in zip(stencil.offsets, stencil.weights):
        a, b = shifted_pairs(s.shape, off)
        total += wk * np.count_nonzero(s[a] != s[b])
    return float(total)
