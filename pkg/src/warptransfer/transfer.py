"""Adaptation of a trained surrogate to a new task.

The learned map composes a per-coordinate beta-CDF warp with a rotation
and a translation; its parameters are fitted by minimizing the mean
squared error between the re-parameterized surrogate and a small sample
of target values.  Two fitters are provided: mini-batch gradient
descent, which takes Euclidean steps on the translation and log-shape
parameters and Riemannian steps (tangent projection followed by a
geodesic move) on the rotation, and CMA-ES over a flat encoding whose
rotation block lives in the skew-vector representation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import logm
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._utils import as_generator, readonly
from .optimizer import (
    CmaConfig,
    GdSchedule,
    batch_size_for,
    cma_minimize,
    default_population,
    lr_at,
)
from .rotation import (
    check_rotation,
    geodesic_step,
    matrix_exp_skew,
    project_to_tangent,
    random_rotation,
    reorthonormalize,
    skew_from_vector,
    vector_from_skew,
)
from .surrogate import Dataset
from .warp import Box, WarpParams, warp_forward, warp_shape_gradients

__all__ = [
    "TransferParams",
    "TransferReport",
    "apply_transform",
    "transfer_loss",
    "transfer_gradients",
    "fit_transfer_gd",
    "fit_transfer_cmaes",
    "transferred_predict",
    "encode_transfer_params",
    "decode_transfer_params",
    "save_transfer_params",
    "load_transfer_params",
    "TransferredSurrogate",
]


@dataclass(frozen=True, eq=False)
class TransferParams:
    """Full transformation state: rotation, translation, warp shapes, box."""

    rotation: np.ndarray
    translation: np.ndarray
    theta: WarpParams
    box: Box

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransferParams):
            return NotImplemented
        return (
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and self.theta == other.theta
            and self.box == other.box
        )

    def __post_init__(self) -> None:
        rotation = readonly(self.rotation)
        translation = readonly(np.atleast_1d(self.translation))
        check_rotation(rotation)
        d = self.box.d
        if rotation.shape != (d, d):
            raise ValueError(f"rotation shape {rotation.shape} != ({d}, {d})")
        if translation.shape != (d,):
            raise ValueError(f"translation shape {translation.shape} != ({d},)")
        if not np.isfinite(translation).all():
            raise ValueError("translation must be finite")
        if self.theta.d != d:
            raise ValueError(f"warp dimension {self.theta.d} != box dimension {d}")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls, box: Box) -> "TransferParams":
        d = box.d
        return cls(np.eye(d), np.zeros(d), WarpParams.identity(d), box)

    @property
    def d(self) -> int:
        return self.box.d

    def to_dict(self) -> dict:
        return {
            "format": "warptransfer/transfer-params",
            "version": 1,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "alpha": self.theta.alpha.tolist(),
            "beta": self.theta.beta.tolist(),
            "box": {"lo": self.box.lo.tolist(), "hi": self.box.hi.tolist()},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TransferParams":
        if payload.get("version") != 1 or payload.get("format") != "warptransfer/transfer-params":
            raise ValueError("unsupported transfer-params payload")
        return cls(
            np.asarray(payload["rotation"], dtype=float),
            np.asarray(payload["translation"], dtype=float),
            WarpParams(np.asarray(payload["alpha"]), np.asarray(payload["beta"])),
            Box(np.asarray(payload["box"]["lo"]), np.asarray(payload["box"]["hi"])),
        )


def save_transfer_params(params: TransferParams, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(params.to_dict(), handle)


def load_transfer_params(path) -> TransferParams:
    with open(path, "r", encoding="utf-8") as handle:
        return TransferParams.from_dict(json.load(handle))


@dataclass
class TransferReport:
    """Outcome of a transfer fit.

    ``loss_trace`` holds, per restart, the best loss seen by the end of
    each epoch (or generation), with the initialization loss first, so
    every trace is nonincreasing and its last entry is that restart's
    result.
    """

    best_params: TransferParams
    best_loss: float
    loss_trace: list = field(default_factory=list)
    restart_index: int = 0
    evaluations: int = 0
    aborted_restarts: tuple = ()


def apply_transform(params: TransferParams, x) -> np.ndarray:
    """Warp, rotate and translate points; the image may leave the box."""
    x = np.asarray(x, dtype=float)
    warped = warp_forward(x, params.theta, params.box)
    return warped @ params.rotation.T + params.translation


def _transformed_targets(surrogate, y) -> np.ndarray:
    return surrogate.transform_.forward(np.asarray(y, dtype=float))


def transfer_loss(params: TransferParams, surrogate, data: Dataset, space: str = "transformed") -> float:
    """Mean squared error of the re-parameterized surrogate on ``data``.

    With ``space="transformed"`` (the default used by both fitters) the
    surrogate's value transform is applied to the recorded targets and
    the residuals are taken against the transformed-space prediction;
    ``space="original"`` compares raw values instead.
    """
    if data.n < 1:
        raise ValueError("transfer data must contain at least one row")
    if data.d != params.d:
        raise ValueError(f"data dimension {data.d} != transform dimension {params.d}")
    images = apply_transform(params, data.X)
    if space == "transformed":
        pred = surrogate.predict_transformed(images)
        target = _transformed_targets(surrogate, data.y)
    elif space == "original":
        pred = surrogate.predict(images)
        target = data.y
    else:
        raise ValueError("space must be 'transformed' or 'original'")
    return float(np.mean((pred - target) ** 2))


def transfer_gradients(params: TransferParams, surrogate, batch: Dataset):
    """Gradient blocks of the transformed-space loss over ``batch``.

    Returns ``(d_translation, d_rotation, d_alpha, d_beta)`` where
    ``d_rotation`` is the Euclidean gradient (project it before taking a
    manifold step).  Requires a surrogate exposing analytic input
    gradients.
    """
    if not hasattr(surrogate, "input_gradients"):
        raise TypeError(
            f"{type(surrogate).__name__} has no input gradients; "
            "use the derivative-free fitter instead"
        )
    if batch.n < 1:
        raise ValueError("batch must contain at least one row")
    warped = warp_forward(batch.X, params.theta, params.box)
    images = warped @ params.rotation.T + params.translation
    residual = surrogate.predict_transformed(images) - _transformed_targets(surrogate, batch.y)
    grad_pred = surrogate.input_gradients(images)

    scale = 2.0 / batch.n
    weighted = grad_pred * residual[:, None]
    d_translation = scale * weighted.sum(axis=0)
    d_rotation = scale * weighted.T @ warped
    back = weighted @ params.rotation
    d_shape_a, d_shape_b = warp_shape_gradients(batch.X, params.theta, params.box)
    d_alpha = scale * (back * d_shape_a).sum(axis=0)
    d_beta = scale * (back * d_shape_b).sum(axis=0)
    return d_translation, d_rotation, d_alpha, d_beta


def transferred_predict(surrogate, params: TransferParams, x) -> np.ndarray:
    """Original-scale prediction of the surrogate at the transformed points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    images = apply_transform(params, np.atleast_2d(x))
    pred = surrogate.predict(images)
    return float(pred[0]) if single else pred


def _random_start(box: Box, rng) -> TransferParams:
    d = box.d
    rotation = random_rotation(d, rng)
    translation = rng.uniform(-0.5, 0.5, size=d) * box.width
    log_shapes = rng.normal(0.0, 0.25, size=2 * d)
    theta = WarpParams(np.exp(log_shapes[:d]), np.exp(log_shapes[d:]))
    return TransferParams(rotation, translation, theta, box)


# Trust caps on a single mini-batch step: at most this fraction of the
# box (translation), this much in log-shape space per entry, and this
# rotation angle.  They stop the steep early shape/rotation gradients
# from scrambling a restart before the translation block catches up.
_STEP_CAP_TRANSLATION = 0.1
_STEP_CAP_LOG_SHAPE = 0.2
_STEP_CAP_ANGLE = 0.2


def fit_transfer_gd(
    surrogate,
    data: Dataset,
    schedule: GdSchedule | None = None,
    rng=None,
) -> TransferReport:
    """Fit the transformation by mini-batch Riemannian gradient descent.

    The first restart starts from the identity transformation; later
    restarts draw a Haar-random rotation, a uniform translation within
    half a box width, and log-normal shape parameters.  One decayed
    learning rate drives all blocks: Euclidean steps on the translation
    (measured in box widths, which puts it on the same dimensionless
    footing as the other blocks) and on the log-shape parameters (the
    chain-rule factor keeps the shapes structurally positive), and a
    geodesic step on the rotation.  Per-batch steps are trust-capped per
    block.  The restart whose best full-data loss is lowest wins.
    """
    if schedule is None:
        schedule = GdSchedule()
    if data.n < 2:
        raise ValueError("transfer data must contain at least two rows")
    rng = as_generator(rng)
    box = data.box
    width = box.width

    best_params = None
    best_loss = math.inf
    best_restart = 0
    traces = []
    aborted = []
    evaluations = 0

    for restart in range(schedule.restarts):
        params = TransferParams.identity(box) if restart == 0 else _random_start(box, rng)
        rotation = params.rotation.copy()
        translation = params.translation.copy()
        log_a = np.log(params.theta.alpha)
        log_b = np.log(params.theta.beta)

        restart_best_loss = transfer_loss(params, surrogate, data)
        restart_best_params = params
        evaluations += 1
        trace = [restart_best_loss]
        batch_size = batch_size_for(schedule, data.n)
        steps = 0
        try:
            for epoch in range(schedule.epochs):
                lr = lr_at(schedule, epoch)
                perm = rng.permutation(data.n)
                for start in range(0, data.n, batch_size):
                    batch = data.subset(perm[start : start + batch_size])
                    current = TransferParams(
                        rotation,
                        translation,
                        WarpParams(np.exp(log_a), np.exp(log_b)),
                        box,
                    )
                    d_v, d_w, d_alpha, d_beta = transfer_gradients(current, surrogate, batch)
                    evaluations += 1

                    step_v = lr * width * d_v
                    relative = float(np.linalg.norm(step_v / width))
                    if relative > _STEP_CAP_TRANSLATION:
                        step_v *= _STEP_CAP_TRANSLATION / relative
                    translation = translation - step_v
                    log_a = log_a - np.clip(
                        lr * np.exp(log_a) * d_alpha, -_STEP_CAP_LOG_SHAPE, _STEP_CAP_LOG_SHAPE
                    )
                    log_b = log_b - np.clip(
                        lr * np.exp(log_b) * d_beta, -_STEP_CAP_LOG_SHAPE, _STEP_CAP_LOG_SHAPE
                    )

                    riemannian = project_to_tangent(current.rotation, d_w)
                    angle = lr * float(
                        np.linalg.norm(current.rotation.T @ riemannian, 2)
                    )
                    sigma = -lr if angle <= _STEP_CAP_ANGLE else -lr * _STEP_CAP_ANGLE / angle
                    rotation = geodesic_step(current.rotation, riemannian, sigma)
                    steps += 1
                    if steps % 50 == 0:
                        rotation = reorthonormalize(rotation)
                candidate = TransferParams(
                    reorthonormalize(rotation),
                    translation,
                    WarpParams(np.exp(log_a), np.exp(log_b)),
                    box,
                )
                loss = transfer_loss(candidate, surrogate, data)
                evaluations += 1
                if not math.isfinite(loss):
                    raise FloatingPointError("non-finite transfer loss")
                if loss < restart_best_loss:
                    restart_best_loss = loss
                    restart_best_params = candidate
                trace.append(restart_best_loss)
        except (FloatingPointError, ValueError, OverflowError):
            aborted.append(restart)
        traces.append(trace)
        if restart_best_loss < best_loss:
            best_loss = restart_best_loss
            best_params = restart_best_params
            best_restart = restart

    return TransferReport(
        best_params=best_params,
        best_loss=best_loss,
        loss_trace=traces,
        restart_index=best_restart,
        evaluations=evaluations,
        aborted_restarts=tuple(aborted),
    )


def encode_transfer_params(params: TransferParams) -> np.ndarray:
    """Flat vector [translation, skew coordinates, log alpha, log beta].

    The rotation block is the principal matrix logarithm, so encoding is
    a bijection only up to the periodicity of the exponential map;
    round trips reproduce the transformation's action, not necessarily
    the same skew vector.
    """
    skew = logm(params.rotation)
    skew = (np.real(skew) - np.real(skew).T) / 2.0
    return np.concatenate(
        [
            params.translation,
            vector_from_skew(skew),
            np.log(params.theta.alpha),
            np.log(params.theta.beta),
        ]
    )


def decode_transfer_params(vec, box: Box) -> TransferParams:
    """Inverse of ``encode_transfer_params`` for a given box."""
    vec = np.asarray(vec, dtype=float)
    d = box.d
    n_skew = d * (d - 1) // 2
    if vec.shape != (d + n_skew + 2 * d,):
        raise ValueError(f"encoded vector must have length {3 * d + n_skew}")
    translation = vec[:d]
    rotation = matrix_exp_skew(skew_from_vector(vec[d : d + n_skew]))
    theta = WarpParams(np.exp(vec[d + n_skew : 2 * d + n_skew]), np.exp(vec[2 * d + n_skew :]))
    return TransferParams(rotation, translation, theta, box)


def fit_transfer_cmaes(
    surrogate,
    data: Dataset,
    config: CmaConfig | None = None,
    rng=None,
    space: str = "transformed",
) -> TransferReport:
    """Fit the transformation with CMA-ES over the flat encoding.

    Works for any surrogate with a prediction surface (no gradients
    needed).  The search starts at the identity encoding (all zeros).
    """
    if config is None:
        config = CmaConfig(budget=6000)
    if data.n < 2:
        raise ValueError("transfer data must contain at least two rows")
    rng = as_generator(rng if rng is not None else config.seed)
    box = data.box
    d = box.d
    x0 = np.zeros(3 * d + d * (d - 1) // 2)

    per_eval: list[float] = []
    state = {"best": math.inf}

    def objective(vec):
        try:
            value = transfer_loss(decode_transfer_params(vec, box), surrogate, data, space=space)
        except (ValueError, FloatingPointError, OverflowError):
            value = math.inf
        state["best"] = min(state["best"], value)
        per_eval.append(state["best"])
        return value

    x_best, f_best, evals = cma_minimize(objective, x0, config, rng=rng)
    # First entry is the initialization; then one best-so-far value per
    # completed generation.
    population = config.population if config.population is not None else default_population(x0.shape[0])
    trace = per_eval[::population]
    if trace[-1] != per_eval[-1]:
        trace.append(per_eval[-1])
    return TransferReport(
        best_params=decode_transfer_params(x_best, box),
        best_loss=float(f_best),
        loss_trace=[trace],
        restart_index=0,
        evaluations=evals,
    )


class TransferredSurrogate(RegressorMixin, BaseEstimator):
    """Estimator wrapper: adapt a fitted source surrogate to new data.

    Parameters
    ----------
    source : fitted surrogate with ``predict`` / ``predict_transformed``
    method : {"gd", "cmaes"}, default="gd"
    schedule : GdSchedule or None
        Gradient-descent settings (``method="gd"``).
    cma : CmaConfig or None
        Evolution-strategy settings (``method="cmaes"``).
    random_state : int, Generator or None

    Attributes
    ----------
    params_ : TransferParams
    report_ : TransferReport
    """

    def __init__(self, source, method: str = "gd", schedule=None, cma=None, random_state=None):
        self.source = source
        self.method = method
        self.schedule = schedule
        self.cma = cma
        self.random_state = random_state

    def fit(self, X, y):
        data = Dataset(np.atleast_2d(np.asarray(X, dtype=float)), y, self.source.box_)
        rng = as_generator(self.random_state)
        if self.method == "gd":
            report = fit_transfer_gd(self.source, data, self.schedule, rng)
        elif self.method == "cmaes":
            report = fit_transfer_cmaes(self.source, data, self.cma, rng)
        else:
            raise ValueError("method must be 'gd' or 'cmaes'")
        self.params_ = report.best_params
        self.report_ = report
        self.n_features_in_ = data.d
        return self

    def predict(self, X):
        check_is_fitted(self)
        return transferred_predict(self.source, self.params_, np.atleast_2d(X))
