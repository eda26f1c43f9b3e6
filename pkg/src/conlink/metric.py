"""Embedding distances and the triplet objective.

The triplet loss pulls a mention closer to a gold concept name than to a
negative name by at least the margin:

    loss = max(d(m, g) - d(m, n) + margin, 0)
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

# guards the 1/d singularity at coincident points
_DELTA = 1e-12


class DistanceKind(str, Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


@dataclass(frozen=True)
class TripletLossParams:
    margin: float = 1.0
    distance: DistanceKind = DistanceKind.EUCLIDEAN

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def distance(kind: DistanceKind, a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b)
    if kind == DistanceKind.EUCLIDEAN:
        diff = a - b
        return float(np.sqrt((diff * diff).sum()))
    na = float(np.sqrt((a * a).sum()))
    nb = float(np.sqrt((b * b).sum()))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for zero vectors")
    value = 1.0 - float((a * b).sum()) / (na * nb)
    return min(max(value, 0.0), 2.0)


def triplet_loss(p: TripletLossParams, y_m: np.ndarray, y_g: np.ndarray, y_n: np.ndarray) -> float:
    d_g = distance(p.distance, y_m, y_g)
    d_n = distance(p.distance, y_m, y_n)
    return max(d_g - d_n + p.margin, 0.0)


def triplet_grad(
    p: TripletLossParams, y_m: np.ndarray, y_g: np.ndarray, y_n: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the triplet loss w.r.t. (y_m, y_g, y_n); zeros when inactive."""
    y_m = np.asarray(y_m, dtype=np.float64)
    y_g = np.asarray(y_g, dtype=np.float64)
    y_n = np.asarray(y_n, dtype=np.float64)
    if triplet_loss(p, y_m, y_g, y_n) <= 0.0:
        zero = np.zeros_like(y_m)
        return zero, zero.copy(), zero.copy()

    if p.distance == DistanceKind.EUCLIDEAN:
        d_g = distance(p.distance, y_m, y_g)
        d_n = distance(p.distance, y_m, y_n)
        u_g = (y_m - y_g) / max(d_g, _DELTA)
        u_n = (y_m - y_n) / max(d_n, _DELTA)
        return u_g - u_n, -u_g, u_n

    dg_dm, dg_dg = _cosine_pair_grads(y_m, y_g)
    dn_dm, dn_dn = _cosine_pair_grads(y_m, y_n)
    return dg_dm - dn_dm, dg_dg, -dn_dn


def _cosine_pair_grads(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of d(a, b) = 1 - cos(a, b) w.r.t. a and b."""
    na = float(np.sqrt((a * a).sum()))
    nb = float(np.sqrt((b * b).sum()))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for zero vectors")
    dot = float((a * b).sum())
    denom = max(na * nb, _DELTA)
    grad_a = (a * (dot / (na * na)) - b) / denom
    grad_b = (b * (dot / (nb * nb)) - a) / denom
    return grad_a, grad_b
