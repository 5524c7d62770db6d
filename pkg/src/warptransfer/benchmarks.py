"""Base benchmark functions and synthetic transfer-task construction.

Ten standard continuous test functions in their base forms (no instance
machinery: the optimum sits at the origin with value zero wherever the
definition permits, and no extra rotations or regularizing input
transforms are applied).  Targets are built by composing a sampled
warp-rotate-translate transformation with a source function, so the
ground-truth relation between the two tasks is known by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._utils import as_generator
from .rotation import random_rotation
from .surrogate import Dataset
from .transfer import TransferParams, apply_transform
from .warp import Box, WarpPrior, sample_warp_params

__all__ = [
    "BENCH_IDS",
    "BBOB_NUMBERS",
    "BenchFn",
    "eval_bench",
    "TargetFn",
    "make_target",
    "sample_instance",
    "sample_dataset",
]


def _ladder(d: int, decades: float) -> np.ndarray:
    if d == 1:
        return np.ones(1)
    return 10.0 ** (decades * np.arange(d) / (d - 1))


def _sphere(x):
    return np.sum(x**2, axis=-1)


def _ellipsoid(x):
    return np.sum(_ladder(x.shape[-1], 6.0) * x**2, axis=-1)


def _rastrigin(x):
    d = x.shape[-1]
    return 10.0 * (d - np.sum(np.cos(2.0 * np.pi * x), axis=-1)) + np.sum(x**2, axis=-1)


def _linear_slope(x):
    # Linear with the optimum at the +5 corner; z caps coordinates there
    # so the function stays bounded below by zero.
    s = _ladder(x.shape[-1], 1.0)
    z = np.minimum(x, 5.0)
    return np.sum(s * (5.0 - z), axis=-1)


def _attractive_sector(x):
    s = np.where(x > 0.0, 100.0, 1.0)
    return np.sum((s * x) ** 2, axis=-1) ** 0.9


def _step_ellipsoid(x):
    rounded = np.where(np.abs(x) > 0.5, np.floor(0.5 + x), np.floor(0.5 + 10.0 * x) / 10.0)
    ladder = _ladder(x.shape[-1], 2.0)
    quad = np.sum(ladder * rounded**2, axis=-1)
    return 0.1 * np.maximum(np.abs(x[..., 0]) / 1e4, quad)


def _rosenbrock(x):
    head = x[..., :-1]
    tail = x[..., 1:]
    return np.sum(100.0 * (head**2 - tail) ** 2 + (head - 1.0) ** 2, axis=-1)


def _sharp_ridge(x):
    return x[..., 0] ** 2 + 100.0 * np.sqrt(np.sum(x[..., 1:] ** 2, axis=-1))


def _different_powers(x):
    d = x.shape[-1]
    exponents = 2.0 + 4.0 * np.arange(d) / max(d - 1, 1)
    return np.sqrt(np.sum(np.abs(x) ** exponents, axis=-1))


def _schaffers(x):
    s = np.sqrt(x[..., :-1] ** 2 + x[..., 1:] ** 2)
    root = np.sqrt(s)
    inner = np.mean(root + root * np.sin(50.0 * s**0.2) ** 2, axis=-1)
    return inner**2


_FUNCTIONS = {
    "sphere": _sphere,
    "ellipsoid": _ellipsoid,
    "rastrigin": _rastrigin,
    "linear-slope": _linear_slope,
    "attractive-sector": _attractive_sector,
    "step-ellipsoid": _step_ellipsoid,
    "rosenbrock": _rosenbrock,
    "sharp-ridge": _sharp_ridge,
    "different-powers": _different_powers,
    "schaffers": _schaffers,
}

BENCH_IDS = tuple(_FUNCTIONS)

BBOB_NUMBERS = {
    "sphere": 1,
    "ellipsoid": 2,
    "rastrigin": 3,
    "linear-slope": 5,
    "attractive-sector": 6,
    "step-ellipsoid": 7,
    "rosenbrock": 8,
    "sharp-ridge": 13,
    "different-powers": 14,
    "schaffers": 17,
}


@dataclass(frozen=True)
class BenchFn:
    """A named base benchmark function at a fixed dimension."""

    id: str
    d: int

    def __post_init__(self) -> None:
        if self.id not in _FUNCTIONS:
            raise ValueError(f"unknown benchmark {self.id!r}; choose from {BENCH_IDS}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.id == "schaffers" and self.d < 2:
            raise ValueError("schaffers requires d >= 2")

    def __call__(self, x):
        return eval_bench(self, x)


def eval_bench(fn: BenchFn, x):
    """Evaluate a benchmark at one point (d,) or a stack (..., d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != fn.d:
        raise ValueError(f"point dimension {x.shape[-1]} != function dimension {fn.d}")
    value = _FUNCTIONS[fn.id](x)
    return float(value) if np.ndim(value) == 0 else value


def _call_source(source, x: np.ndarray):
    if hasattr(source, "predict"):
        single = x.ndim == 1
        values = source.predict(np.atleast_2d(x))
        return float(values[0]) if single else values
    return source(x)


@dataclass(frozen=True)
class TargetFn:
    """Synthetic target: a source composed with a known transformation."""

    source: object
    gen_params: TransferParams

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return _call_source(self.source, apply_transform(self.gen_params, x))


def make_target(source, gen: TransferParams) -> TargetFn:
    """Compose ``source`` with the transformation ``gen``."""
    if isinstance(source, BenchFn) and source.d != gen.d:
        raise ValueError(f"source dimension {source.d} != transform dimension {gen.d}")
    return TargetFn(source=source, gen_params=gen)


def sample_instance(prior: WarpPrior, d: int, box: Box, rng=None) -> TransferParams:
    """Draw a random task transformation: warp from the prior, Haar
    rotation, and a translation uniform within a tenth of the box width."""
    if box.d != d:
        raise ValueError(f"box dimension {box.d} != requested dimension {d}")
    rng = as_generator(rng)
    theta = sample_warp_params(prior, d, rng)
    rotation = random_rotation(d, rng)
    translation = rng.uniform(-1.0, 1.0, size=d) * 0.1 * box.width
    return TransferParams(rotation, translation, theta, box)


def sample_dataset(f, n: int, box: Box, rng=None) -> Dataset:
    """Evaluate ``f`` at ``n`` points drawn uniformly inside ``box``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(rng)
    X = rng.uniform(box.lo, box.hi, size=(n, box.d))
    y = np.asarray(_call_source(f, X), dtype=float)
    return Dataset(X, y, box)
