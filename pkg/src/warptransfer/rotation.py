"""Rotation-group numerics: tangent projection, geodesic steps, the
skew-vector codec, Haar sampling and drift repair.

Rotations are plain (d, d) float arrays; ``check_rotation`` enforces the
group invariants (orthogonality and unit determinant within tolerance)
wherever a function promises to return one.
"""

from __future__ import annotations

import math

import numpy as np

from ._utils import as_generator

__all__ = [
    "TangentSpaceError",
    "check_rotation",
    "is_rotation",
    "project_to_tangent",
    "geodesic_step",
    "skew_from_vector",
    "vector_from_skew",
    "matrix_exp_skew",
    "random_rotation",
    "reorthonormalize",
]

ROTATION_TOL = 1e-8


class TangentSpaceError(ValueError):
    """A direction matrix is not in the tangent space at the given rotation."""


def _as_square(mat, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    return mat


def is_rotation(mat, tol: float = ROTATION_TOL) -> bool:
    mat = _as_square(mat, "mat")
    d = mat.shape[0]
    ortho = np.linalg.norm(mat.T @ mat - np.eye(d))
    return bool(ortho < tol and abs(np.linalg.det(mat) - 1.0) < tol)


def check_rotation(mat, tol: float = ROTATION_TOL) -> np.ndarray:
    mat = _as_square(mat, "mat")
    d = mat.shape[0]
    ortho = np.linalg.norm(mat.T @ mat - np.eye(d))
    if ortho >= tol:
        raise ValueError(f"matrix is not orthogonal: ||W^T W - I||_F = {ortho:.3e}")
    det = np.linalg.det(mat)
    if abs(det - 1.0) >= tol:
        raise ValueError(f"matrix has determinant {det:.12f}, not +1")
    return mat


def project_to_tangent(w, m) -> np.ndarray:
    """Orthogonal projection of a matrix onto the tangent space at ``w``.

    Returns W (W^T M - M^T W) / 2, so W^T times the result is
    antisymmetric.
    """
    w = _as_square(w, "w")
    m = _as_square(m, "m")
    if w.shape != m.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {m.shape}")
    wtm = w.T @ m
    return w @ ((wtm - wtm.T) / 2.0)


def geodesic_step(w, g, sigma: float) -> np.ndarray:
    """Move from ``w`` along tangent direction ``g`` by step size ``sigma``.

    Computes W Exp(sigma W^T G).  ``g`` must satisfy the tangency
    condition (W^T G antisymmetric within 1e-8).
    """
    w = _as_square(w, "w")
    g = _as_square(g, "g")
    if w.shape != g.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {g.shape}")
    s = w.T @ g
    defect = np.max(np.abs(s + s.T))
    if defect > 1e-8 * max(1.0, np.max(np.abs(s))):
        raise TangentSpaceError(
            f"direction is not tangent at w: antisymmetry defect {defect:.3e}"
        )
    skew = (s - s.T) / 2.0
    return w @ matrix_exp_skew(float(sigma) * skew)


def skew_from_vector(z) -> np.ndarray:
    """Unpack a length d(d-1)/2 vector into an antisymmetric matrix.

    Entries fill the strict upper triangle row by row; the lower
    triangle is the negated transpose.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError("z must be a 1-D vector")
    length = z.shape[0]
    d = int(round((1.0 + math.sqrt(1.0 + 8.0 * length)) / 2.0))
    if d * (d - 1) // 2 != length:
        raise ValueError(f"vector length {length} is not d(d-1)/2 for any integer d")
    a = np.zeros((d, d))
    a[np.triu_indices(d, k=1)] = z
    return a - a.T


def vector_from_skew(a) -> np.ndarray:
    """Pack an antisymmetric matrix into its row-major upper-triangle vector."""
    a = _as_square(a, "a")
    defect = np.max(np.abs(a + a.T)) if a.size else 0.0
    if defect > 1e-10:
        raise ValueError(f"matrix is not antisymmetric: defect {defect:.3e}")
    return a[np.triu_indices(a.shape[0], k=1)].copy()


def matrix_exp_skew(a) -> np.ndarray:
    """Matrix exponential of an antisymmetric matrix.

    Uses the planar closed form for d = 2 and scaling-and-squaring with
    a truncated Taylor series otherwise; antisymmetric inputs are normal
    matrices, so the series on the scaled matrix is well conditioned.
    """
    a = _as_square(a, "a")
    d = a.shape[0]
    defect = np.max(np.abs(a + a.T)) if a.size else 0.0
    if defect > 1e-10:
        raise ValueError(f"matrix is not antisymmetric: defect {defect:.3e}")
    if d == 1:
        return np.array([[1.0]])
    if d == 2:
        angle = a[1, 0]
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c, -s], [s, c]])
    norm = np.linalg.norm(a, np.inf)
    n_square = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    scaled = a / 2.0**n_square
    result = np.eye(d)
    term = np.eye(d)
    for k in range(1, 15):
        term = term @ scaled / k
        result = result + term
    for _ in range(n_square):
        result = result @ result
    return result


def random_rotation(d: int, rng=None) -> np.ndarray:
    """Haar-distributed rotation via QR of a Gaussian matrix."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = as_generator(rng)
    if d == 1:
        return np.array([[1.0]])
    gauss = rng.standard_normal((d, d))
    q, r = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    if np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


def reorthonormalize(w) -> np.ndarray:
    """Nearest rotation to a drifted near-rotation matrix.

    Polar decomposition via SVD with a determinant sign fix; inputs
    farther than 0.1 (Frobenius) from orthogonality are rejected.
    """
    w = _as_square(w, "w")
    d = w.shape[0]
    drift = np.linalg.norm(w.T @ w - np.eye(d))
    if not drift < 0.1:
        raise ValueError(f"matrix too far from the rotation group: drift {drift:.3e}")
    u, _, vt = np.linalg.svd(w)
    if np.linalg.det(u @ vt) < 0:
        u[:, -1] = -u[:, -1]
    return u @ vt
