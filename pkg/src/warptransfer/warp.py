"""Per-coordinate beta-CDF input warping over a bounding box.

The warp acts in box-normalized coordinates: inputs are mapped to
[0, 1] per axis, pushed through the regularized incomplete beta
function with that axis' shape pair, and mapped back into the same
box.  Warped points therefore stay inside the domain, endpoints are
fixed, and the unit shape (alpha = beta = 1) is the identity map.
Shape parameters are kept in natural (positive) scale; optimizers that
need an unconstrained view reparameterize through logs externally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ._utils import as_generator, readonly
from .specfun import DEFAULT_QUADRATURE, DomainError, QuadratureSpec, log_weighted_inc_beta_many

__all__ = [
    "CLAMP_TOL",
    "Box",
    "WarpParams",
    "WarpPrior",
    "WARP_SHAPES",
    "warp_prior_preset",
    "warp_forward",
    "warp_shape_gradients",
    "sample_warp_params",
]

# Inputs may stick out of the box by this much (absolute, input units)
# before a DomainError is raised; smaller excursions are clamped.
CLAMP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned domain box with strictly ordered bounds."""

    lo: np.ndarray
    hi: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __post_init__(self) -> None:
        lo = readonly(np.atleast_1d(self.lo))
        hi = readonly(np.atleast_1d(self.hi))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lo and hi must be 1-D arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if not (lo < hi).all():
            raise ValueError("box requires lo < hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, d: int) -> "Box":
        return cls(np.full(d, float(lo)), np.full(d, float(hi)))

    @property
    def d(self) -> int:
        return self.lo.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x, tol: float = 0.0):
        """Row-wise membership of points in the closed box."""
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo - tol) & (x <= self.hi + tol)
        return inside.all(axis=-1)

    def normalize(self, x, clamp_tol: float = CLAMP_TOL) -> np.ndarray:
        """Map points into [0, 1]^d, clamping float drift up to ``clamp_tol``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"point dimension {x.shape[-1]} != box dimension {self.d}")
        if not np.isfinite(x).all():
            raise DomainError("points must be finite")
        if ((x < self.lo - clamp_tol) | (x > self.hi + clamp_tol)).any():
            raise DomainError("point lies outside the box beyond the clamp tolerance")
        return np.clip((x - self.lo) / self.width, 0.0, 1.0)

    def denormalize(self, u) -> np.ndarray:
        return self.lo + self.width * np.asarray(u, dtype=float)


@dataclass(frozen=True, eq=False)
class WarpParams:
    """Positive shape-parameter pairs, one (alpha, beta) per coordinate."""

    alpha: np.ndarray
    beta: np.ndarray

    def __eq__(self, other) -> bool:
        if not isinstance(other, WarpParams):
            return NotImplemented
        return np.array_equal(self.alpha, other.alpha) and np.array_equal(self.beta, other.beta)

    def __post_init__(self) -> None:
        alpha = readonly(np.atleast_1d(self.alpha))
        beta = readonly(np.atleast_1d(self.beta))
        if alpha.ndim != 1 or alpha.shape != beta.shape or alpha.shape[0] < 1:
            raise ValueError("alpha and beta must be 1-D arrays of equal length >= 1")
        for name, arr in (("alpha", alpha), ("beta", beta)):
            if not np.isfinite(arr).all() or (arr <= 0.0).any():
                raise ValueError(f"{name} entries must be finite and > 0")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def identity(cls, d: int) -> "WarpParams":
        return cls(np.ones(d), np.ones(d))

    @property
    def d(self) -> int:
        return self.alpha.shape[0]


WARP_SHAPES = ("linear", "exponential", "logarithmic", "sigmoidal")


@dataclass(frozen=True)
class WarpPrior:
    """Log-normal prior over shape parameters, applied per coordinate."""

    mu_alpha: float
    sigma_alpha: float
    mu_beta: float
    sigma_beta: float
    shape_name: str

    def __post_init__(self) -> None:
        if self.shape_name not in WARP_SHAPES:
            raise ValueError(f"shape_name must be one of {WARP_SHAPES}")
        if self.sigma_alpha < 0 or self.sigma_beta < 0:
            raise ValueError("sigma_alpha and sigma_beta must be >= 0")
        for name in ("mu_alpha", "sigma_alpha", "mu_beta", "sigma_beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


_PRESETS = {
    "linear": WarpPrior(0.0, 0.5, 0.0, 0.5, "linear"),
    "exponential": WarpPrior(0.0, 0.25, 1.0, 1.0, "exponential"),
    "logarithmic": WarpPrior(1.0, 1.0, 0.0, 0.25, "logarithmic"),
    "sigmoidal": WarpPrior(2.0, 0.5, 2.0, 0.5, "sigmoidal"),
}


def warp_prior_preset(name: str) -> WarpPrior:
    """Named prior presets covering the four warp geometries."""
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown warp shape {name!r}; choose from {WARP_SHAPES}") from None


def _check_dims(x: np.ndarray, theta: WarpParams, box: Box) -> None:
    if theta.d != box.d:
        raise ValueError(f"warp dimension {theta.d} != box dimension {box.d}")
    if x.shape[-1] != box.d:
        raise ValueError(f"point dimension {x.shape[-1]} != box dimension {box.d}")


def warp_forward(x, theta: WarpParams, box: Box) -> np.ndarray:
    """Apply the per-coordinate beta-CDF warp inside ``box``.

    ``x`` may be a single point of shape (d,) or a stack (..., d); the
    warp is strictly increasing per coordinate and maps the box onto
    itself with fixed endpoints.
    """
    x = np.asarray(x, dtype=float)
    _check_dims(x, theta, box)
    u = box.normalize(x)
    return box.denormalize(special.betainc(theta.alpha, theta.beta, u))


def warp_shape_gradients(
    x,
    theta: WarpParams,
    box: Box,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
):
    """Derivatives of the warped coordinates w.r.t. their shape parameters.

    Returns ``(d_alpha, d_beta)`` with the same shape as ``x``; entry i
    is the derivative of output coordinate i w.r.t. alpha_i (resp.
    beta_i), including the box-width factor from denormalization.
    """
    x = np.asarray(x, dtype=float)
    _check_dims(x, theta, box)
    u = box.normalize(x)
    alpha = np.broadcast_to(theta.alpha, u.shape)
    beta = np.broadcast_to(theta.beta, u.shape)
    int_a, int_b = log_weighted_inc_beta_many(u, alpha, beta, spec)
    cdf = special.betainc(alpha, beta, u)
    psi_ab = special.psi(alpha + beta)
    d_alpha = (int_a - cdf * (special.psi(alpha) - psi_ab)) * box.width
    d_beta = (int_b - cdf * (special.psi(beta) - psi_ab)) * box.width
    return d_alpha, d_beta


def sample_warp_params(prior: WarpPrior, d: int, rng=None) -> WarpParams:
    """Draw i.i.d. per-coordinate shape pairs from the log-normal prior."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = as_generator(rng)
    log_alpha = rng.normal(prior.mu_alpha, prior.sigma_alpha, size=d)
    log_beta_ = rng.normal(prior.mu_beta, prior.sigma_beta, size=d)
    return WarpParams(np.exp(log_alpha), np.exp(log_beta_))
