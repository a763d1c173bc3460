"""Closed-form whistler symbol algebra: p(x, xi), eigenprojections, group
velocities, and the deformation tensor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldEvaluator

__all__ = [
    "PhasePoint",
    "principal_symbol",
    "projections",
    "projections_batch",
    "diagonalization_residual",
    "group_velocity",
    "deformation_tensor",
    "angle_between",
    "CONE_HALF_ANGLE",
    "EXTREMAL_DIRECTION",
]

# arctan(1/(2 sqrt 2)): half-angle of the group-velocity cone about B
CONE_HALF_ANGLE = float(np.arctan(1.0 / (2.0 * np.sqrt(2.0))))

# the cone bound is attained at xi3/xi2 = 1/sqrt(2) (any rotation about e3)
EXTREMAL_DIRECTION = np.array([0.0, 1.0, 1.0 / np.sqrt(2.0)]) / np.linalg.norm(
    [0.0, 1.0, 1.0 / np.sqrt(2.0)]
)


@dataclass(frozen=True)
class PhasePoint:
    """(x, xi) with xi != 0."""

    x: tuple[float, float, float]
    xi: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not np.linalg.norm(self.xi) > 0:
            raise ValueError("xi must be nonzero")

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.x, dtype=float), np.asarray(self.xi, dtype=float)


def principal_symbol(B: FieldEvaluator, p: PhasePoint) -> float:
    """p_B(x, xi) = B(x) . xi |xi|."""
    x, xi = p.arrays()
    return float(B.B(x) @ xi * np.linalg.norm(xi))


def _cross_matrix(xi: np.ndarray) -> np.ndarray:
    """Matrix of v -> xi x v on the last axes; xi shape (..., 3)."""
    z = np.zeros_like(xi[..., 0])
    return np.stack(
        [
            np.stack([z, -xi[..., 2], xi[..., 1]], axis=-1),
            np.stack([xi[..., 2], z, -xi[..., 0]], axis=-1),
            np.stack([-xi[..., 1], xi[..., 0], z], axis=-1),
        ],
        axis=-2,
    )


def projections_batch(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigenprojections (Pi_+, Pi_0, Pi_-) of xi x (.), shapes (..., 3, 3)."""
    xi = np.asarray(xi, dtype=float)
    norm = np.linalg.norm(xi, axis=-1)
    if np.any(norm == 0):
        raise ValueError("xi must be nonzero")
    unit = xi / norm[..., None]
    pi0 = unit[..., :, None] * unit[..., None, :]
    eye = np.broadcast_to(np.eye(3), pi0.shape)
    X = _cross_matrix(unit).astype(complex)
    # Pi_+ is the (-i|xi|)-eigenprojection of xi x (.): with this choice the
    # linearized flow sends bhat_+ to e^{-i p t} bhat_+ (dispersion +p).
    pip = 0.5 * (eye - pi0 - X / 1j)
    pim = 0.5 * (eye - pi0 + X / 1j)
    return pip, pi0.astype(complex), pim


def projections(xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return projections_batch(np.asarray(xi, dtype=float))


def principal_matrix(Bx: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Principal symbol of curl((curl .) x B): equals -(B.xi) (xi x .)."""
    bdotxi = np.sum(Bx * xi, axis=-1)
    return -bdotxi[..., None, None] * _cross_matrix(xi)


def diagonalization_residual(B: FieldEvaluator, p: PhasePoint) -> float:
    """Frobenius norm of P_B(x,xi) - i p Pi_+ + i p Pi_-."""
    x, xi = p.arrays()
    Bx = B.B(x)
    pval = Bx @ xi * np.linalg.norm(xi)
    pip, _, pim = projections(xi)
    resid = principal_matrix(Bx, xi) - 1j * pval * pip + 1j * pval * pim
    return float(np.linalg.norm(resid))


def group_velocity(sign: int, xi) -> np.ndarray:
    """v_{+-}(xi) for the flat background e3; batched over leading axes."""
    xi = np.asarray(xi, dtype=float)
    norm = np.linalg.norm(xi, axis=-1)
    v = np.stack(
        [
            xi[..., 0] * xi[..., 2] / norm,
            xi[..., 1] * xi[..., 2] / norm,
            (xi[..., 0] ** 2 + xi[..., 1] ** 2 + 2.0 * xi[..., 2] ** 2) / norm,
        ],
        axis=-1,
    )
    return float(sign) * v


def deformation_tensor(B: FieldEvaluator, x) -> np.ndarray:
    """D^{ab} = (d_a B^b + d_b B^a) / 2 at x (batched)."""
    g = B.gradB(np.asarray(x, dtype=float))
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def angle_between(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Angle between vectors on the last axis, safe at the parallel limit."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    dot = np.sum(v * w, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    nw = np.linalg.norm(w, axis=-1)
    c = np.clip(dot / np.maximum(nv * nw, 1e-300), -1.0, 1.0)
    return np.arccos(c)
