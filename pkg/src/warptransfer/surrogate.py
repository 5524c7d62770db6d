"""Surrogate regressors and their shared data containers.

``GprRegressor`` is the differentiable surrogate: a zero-mean Gaussian
process on log-shifted targets with a squared-exponential kernel, fitted
by multi-start maximization of the log marginal likelihood, exposing the
analytic input gradient of its transformed-space mean.
``ForestRegressor`` is a deliberately small bagged-tree ensemble that
exercises the derivative-free adaptation path.  Both follow the
scikit-learn estimator conventions and share the ``predict`` /
``predict_transformed`` / ``transform_`` surface the transfer loss
consumes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.linalg.lapack import dpotri
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._utils import as_generator, readonly
from .warp import Box

__all__ = [
    "IllConditionedDataError",
    "ValueTransform",
    "fit_value_transform",
    "Dataset",
    "infer_box",
    "GprRegressor",
    "ForestRegressor",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]


class IllConditionedDataError(RuntimeError):
    """Gram matrix stayed non-positive-definite through jitter escalation."""


# Floor for the shifted argument of the log transform; target values
# below the training minimum minus one would otherwise have no image.
_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class ValueTransform:
    """Monotone value transform applied to targets before regression.

    The ``log-shift`` kind maps y to ln(y - shift + 1); with the shift
    fitted to the training minimum all training targets map to values
    >= 0.  Arguments below the valid range saturate at a small positive
    floor so downstream losses stay finite.
    """

    kind: str = "log-shift"
    shift: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("log-shift", "identity"):
            raise ValueError("kind must be 'log-shift' or 'identity'")
        if not math.isfinite(self.shift):
            raise ValueError("shift must be finite")

    def forward(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            return y.copy()
        return np.log(np.maximum(y - self.shift + 1.0, _LOG_FLOOR))

    def inverse(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "identity":
            return t.copy()
        return np.exp(t) - 1.0 + self.shift


def fit_value_transform(y) -> ValueTransform:
    """Log-shift transform anchored at the smallest training target."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("cannot fit a value transform to an empty target vector")
    if not np.isfinite(y).all():
        raise ValueError("target values must be finite")
    return ValueTransform(kind="log-shift", shift=float(y.min()))


def infer_box(X, pad: float = 0.5) -> Box:
    """Per-column min/max box; degenerate columns are widened by ``pad``."""
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=0).astype(float)
    hi = X.max(axis=0).astype(float)
    flat = hi - lo <= 0
    lo[flat] -= pad
    hi[flat] += pad
    return Box(lo, hi)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Input rows with scalar responses inside a bounding box."""

    X: np.ndarray
    y: np.ndarray
    box: Box

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and self.box == other.box
        )

    def __post_init__(self) -> None:
        X = readonly(np.atleast_2d(self.X))
        y = readonly(np.atleast_1d(self.y))
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be (n, d) and y must be (n,) with matching n")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("dataset values must be finite")
        if X.shape[1] != self.box.d:
            raise ValueError(f"data dimension {X.shape[1]} != box dimension {self.box.d}")
        if X.shape[0] and not self.box.contains(X, tol=1e-9).all():
            raise ValueError("all rows must lie inside the box")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_arrays(cls, X, y, box: Box | None = None) -> "Dataset":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if box is None:
            box = infer_box(X)
        return cls(X, np.asarray(y, dtype=float), box)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.box)


def _sq_dists(a, b) -> np.ndarray:
    return cdist(a, b, "sqeuclidean")


class GprRegressor(RegressorMixin, BaseEstimator):
    """Gaussian-process regressor with a squared-exponential kernel.

    The model is a zero-mean GP on transformed targets with
    k(x, x') = signal_var * exp(-||x - x'||^2 / (2 lengthscale^2)) plus
    observation noise.  Hyperparameters are chosen by maximizing the log
    marginal likelihood with L-BFGS-B from ``n_restarts`` start points
    inside data-driven log-space bounds: lengthscale within
    [1e-2, 10] x box diameter, signal variance within [1e-4, 1e4] x
    target variance, noise variance within [1e-8, 1e-1] x target
    variance.

    Parameters
    ----------
    n_restarts : int, default=5
        Number of optimizer start points for the likelihood search.
    transform : {"log-shift", "identity"}, default="log-shift"
        Target transform fitted on the training values.
    box : Box or None, default=None
        Input domain; inferred from the training data when None.
    random_state : int, Generator or None, default=None
        Seeds the restart draws.
    max_opt_iter : int, default=50
        L-BFGS-B iteration cap per restart.
    hyper_subsample : int or None, default=None
        When set and the training set is larger, the likelihood search
        runs on a random subsample of this size (the final posterior
        still conditions on all rows).  Speed knob for large fits.

    Attributes
    ----------
    X_train_ : ndarray of shape (n, d)
    alpha_vec_ : ndarray of shape (n,)
        Solve vector (K + noise I)^{-1} t of the transformed targets.
    lengthscale_, signal_var_, noise_var_ : float
    transform_ : ValueTransform
    box_ : Box
    lml_ : float
        Log marginal likelihood at the selected hyperparameters.
    opt_starts_ : list of (log-params triple, objective value at start)
    """

    def __init__(
        self,
        n_restarts: int = 5,
        transform: str = "log-shift",
        box: Box | None = None,
        random_state=None,
        max_opt_iter: int = 50,
        hyper_subsample: int | None = None,
    ):
        self.n_restarts = n_restarts
        self.transform = transform
        self.box = box
        self.random_state = random_state
        self.max_opt_iter = max_opt_iter
        self.hyper_subsample = hyper_subsample

    def _neg_lml(self, log_params, sq, t):
        n = t.shape[0]
        lengthscale = math.exp(log_params[0])
        signal_var = math.exp(log_params[1])
        noise_var = math.exp(log_params[2])
        k = signal_var * np.exp(-0.5 * sq / lengthscale**2)
        ky = k + noise_var * np.eye(n)
        try:
            factor = cho_factor(ky, lower=True)
        except np.linalg.LinAlgError:
            return 1e25, np.zeros(3)
        alpha = cho_solve(factor, t)
        lml = (
            -0.5 * float(t @ alpha)
            - float(np.log(np.diag(factor[0])).sum())
            - 0.5 * n * math.log(2.0 * math.pi)
        )
        inv_tri, info = dpotri(factor[0], lower=True)
        if info != 0:
            return 1e25, np.zeros(3)
        ky_inv = np.tril(inv_tri) + np.tril(inv_tri, -1).T
        m = np.outer(alpha, alpha) - ky_inv
        d_lengthscale = 0.5 * float(np.sum(m * (k * sq / lengthscale**2)))
        d_signal = 0.5 * float(np.sum(m * k))
        d_noise = 0.5 * noise_var * float(np.trace(m))
        return -lml, -np.array([d_lengthscale, d_signal, d_noise])

    def log_marginal_likelihood(self, lengthscale, signal_var, noise_var) -> float:
        """Log marginal likelihood of the stored training data at given hyperparameters."""
        check_is_fitted(self)
        sq = _sq_dists(self.X_train_, self.X_train_)
        value, _ = self._neg_lml(
            np.log([lengthscale, signal_var, noise_var]), sq, self.t_train_
        )
        return -value

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True, ensure_min_samples=2)
        rng = as_generator(self.random_state)
        box = self.box if self.box is not None else infer_box(X)
        if X.shape[1] != box.d:
            raise ValueError(f"data dimension {X.shape[1]} != box dimension {box.d}")
        if self.transform == "log-shift":
            transform = fit_value_transform(y)
        elif self.transform == "identity":
            transform = ValueTransform(kind="identity")
        else:
            raise ValueError("transform must be 'log-shift' or 'identity'")
        t = transform.forward(y)

        n = X.shape[0]
        if self.hyper_subsample is not None and n > self.hyper_subsample:
            pick = rng.choice(n, size=int(self.hyper_subsample), replace=False)
            X_opt, t_opt = X[pick], t[pick]
        else:
            X_opt, t_opt = X, t
        sq = _sq_dists(X_opt, X_opt)
        diam = float(np.linalg.norm(box.width))
        t_var = max(float(t.var()), 1e-12)
        lo = np.log([1e-2 * diam, 1e-4 * t_var, 1e-8 * t_var])
        hi = np.log([10.0 * diam, 1e4 * t_var, 1e-1 * t_var])
        bounds = list(zip(lo, hi))

        off_diag = sq[np.triu_indices_from(sq, k=1)]
        median_sq = float(np.median(off_diag)) if off_diag.size else diam**2
        heuristic = np.clip(
            np.log([max(math.sqrt(median_sq), 1e-300), t_var, 1e-4 * t_var]), lo, hi
        )
        # Restarts perturb the heuristic; the far corners of the bound box
        # are likelihood plateaus that waste optimizer iterations.
        starts = [heuristic]
        for _ in range(max(0, int(self.n_restarts) - 1)):
            starts.append(np.clip(heuristic + rng.normal(0.0, 1.5, size=3), lo, hi))

        best = None
        opt_starts = []
        for start in starts:
            start_val, _ = self._neg_lml(start, sq, t_opt)
            opt_starts.append((np.exp(start).tolist(), -float(start_val)))
            res = minimize(
                self._neg_lml,
                start,
                args=(sq, t_opt),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": self.max_opt_iter},
            )
            candidate = (float(res.fun), res.x)
            if best is None or candidate[0] < best[0]:
                best = candidate
        neg_lml, log_params = best
        lengthscale, signal_var, noise_var = np.exp(log_params)
        noise_var = max(float(noise_var), 1e-10)

        k = signal_var * np.exp(-0.5 * _sq_dists(X, X) / lengthscale**2)
        factor = None
        for jitter in (0.0, 1e-10, 1e-8, 1e-6, 1e-4):
            try:
                factor = cho_factor(k + (noise_var + jitter * t_var) * np.eye(n), lower=True)
            except np.linalg.LinAlgError:
                continue
            # accepted jitter becomes part of the effective noise level
            noise_var = noise_var + jitter * t_var
            break
        if factor is None:
            raise IllConditionedDataError(
                "Gram matrix is not positive definite even with jitter up to 1e-4"
            )
        alpha = cho_solve(factor, t)

        residual = np.abs(k @ alpha + noise_var * alpha - t).max()
        scale = max(np.abs(t).max(), 1e-12)
        if residual >= 1e-6 * scale:
            raise IllConditionedDataError(
                f"Gram solve residual {residual:.3e} exceeds 1e-6 of target scale"
            )

        self.X_train_ = X.copy()
        self.t_train_ = t
        self.alpha_vec_ = alpha
        self.lengthscale_ = float(lengthscale)
        self.signal_var_ = float(signal_var)
        self.noise_var_ = float(noise_var)
        self.transform_ = transform
        self.box_ = box
        self.lml_ = -float(neg_lml)
        self.opt_starts_ = opt_starts
        self.n_features_in_ = X.shape[1]
        return self

    def _kernel_to_train(self, X) -> np.ndarray:
        return self.signal_var_ * np.exp(
            -0.5 * _sq_dists(X, self.X_train_) / self.lengthscale_**2
        )

    def predict_transformed(self, X) -> np.ndarray:
        """Posterior mean in transformed (log) space."""
        check_is_fitted(self)
        X = check_array(np.atleast_2d(X), dtype=np.float64)
        return self._kernel_to_train(X) @ self.alpha_vec_

    def predict(self, X) -> np.ndarray:
        """Posterior mean mapped back to the original value scale."""
        return self.transform_.inverse(self.predict_transformed(X))

    def input_gradients(self, X) -> np.ndarray:
        """Gradient of the transformed-space mean at each row of ``X``."""
        check_is_fitted(self)
        X = check_array(np.atleast_2d(X), dtype=np.float64)
        k = self._kernel_to_train(X) * self.alpha_vec_
        diff = self.X_train_[None, :, :] - X[:, None, :]
        return np.einsum("mn,mnj->mj", k, diff) / self.lengthscale_**2

    def input_gradient(self, x) -> np.ndarray:
        """Gradient of the transformed-space mean at a single point."""
        return self.input_gradients(np.atleast_2d(x))[0]


class ForestRegressor(RegressorMixin, BaseEstimator):
    """Bagged depth-limited regression trees on transformed targets.

    Kept intentionally small: it exists so the derivative-free
    adaptation path has a realistic non-differentiable surrogate, not to
    compete with full random-forest implementations.  Trees are grown on
    bootstrap resamples with exhaustive axis-aligned splits minimizing
    the summed squared error; a single-tree forest trains on the full
    sample, making bagging a no-op there.

    Parameters
    ----------
    n_trees : int, default=50
    max_depth : int, default=6
    min_leaf : int, default=2
        Minimum number of training samples per leaf.
    transform : {"log-shift", "identity"}, default="log-shift"
    random_state : int, Generator or None, default=None
    """

    def __init__(
        self,
        n_trees: int = 50,
        max_depth: int = 6,
        min_leaf: int = 2,
        transform: str = "log-shift",
        random_state=None,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.transform = transform
        self.random_state = random_state

    def _grow(self, tree, X, t, idx, depth):
        node = len(tree["feature"])
        for key in tree:
            tree[key].append(0.0)
        values = t[idx]
        tree["feature"][node] = -1
        tree["threshold"][node] = 0.0
        tree["left"][node] = -1
        tree["right"][node] = -1
        tree["value"][node] = float(values.mean())
        if depth >= self.max_depth or idx.size < 2 * self.min_leaf or np.ptp(values) == 0.0:
            return node

        best = None
        total = values.sum()
        total_sq = float((values**2).sum())
        for feature in range(X.shape[1]):
            order = np.argsort(X[idx, feature], kind="stable")
            xs = X[idx[order], feature]
            ts = values[order]
            csum = np.cumsum(ts)
            csum_sq = np.cumsum(ts**2)
            for split in range(self.min_leaf, idx.size - self.min_leaf + 1):
                if xs[split - 1] == xs[split]:
                    continue
                n_left = split
                n_right = idx.size - split
                sse_left = csum_sq[split - 1] - csum[split - 1] ** 2 / n_left
                right_sum = total - csum[split - 1]
                sse_right = (total_sq - csum_sq[split - 1]) - right_sum**2 / n_right
                sse = sse_left + sse_right
                if best is None or sse < best[0]:
                    best = (sse, feature, 0.5 * (xs[split - 1] + xs[split]), order[:split], order[split:])
        if best is None:
            return node
        _, feature, threshold, left_order, right_order = best
        tree["feature"][node] = feature
        tree["threshold"][node] = float(threshold)
        tree["left"][node] = self._grow(tree, X, t, idx[left_order], depth + 1)
        tree["right"][node] = self._grow(tree, X, t, idx[right_order], depth + 1)
        return node

    def fit(self, X, y):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("n_trees >= 1, max_depth >= 0 and min_leaf >= 1 required")
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[0] < self.min_leaf:
            raise ValueError("need at least min_leaf training samples")
        rng = as_generator(self.random_state)
        if self.transform == "log-shift":
            transform = fit_value_transform(y)
        elif self.transform == "identity":
            transform = ValueTransform(kind="identity")
        else:
            raise ValueError("transform must be 'log-shift' or 'identity'")
        t = transform.forward(y)

        n = X.shape[0]
        trees = []
        for _ in range(int(self.n_trees)):
            if self.n_trees == 1:
                idx = np.arange(n)
            else:
                idx = rng.integers(0, n, size=n)
            tree = {"feature": [], "threshold": [], "left": [], "right": [], "value": []}
            self._grow(tree, X, t, idx, 0)
            trees.append(
                {
                    "feature": np.asarray(tree["feature"], dtype=int),
                    "threshold": np.asarray(tree["threshold"], dtype=float),
                    "left": np.asarray(tree["left"], dtype=int),
                    "right": np.asarray(tree["right"], dtype=int),
                    "value": np.asarray(tree["value"], dtype=float),
                }
            )
        self.trees_ = trees
        self.transform_ = transform
        self.box_ = infer_box(X)
        self.n_features_in_ = X.shape[1]
        return self

    @staticmethod
    def _tree_predict(tree, X):
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = 0
            while tree["feature"][node] >= 0:
                if row[tree["feature"][node]] <= tree["threshold"][node]:
                    node = tree["left"][node]
                else:
                    node = tree["right"][node]
            out[i] = tree["value"][node]
        return out

    def predict_transformed(self, X) -> np.ndarray:
        check_is_fitted(self)
        X = check_array(np.atleast_2d(X), dtype=np.float64)
        acc = np.zeros(X.shape[0])
        for tree in self.trees_:
            acc += self._tree_predict(tree, X)
        return acc / len(self.trees_)

    def predict(self, X) -> np.ndarray:
        return self.transform_.inverse(self.predict_transformed(X))


_FORMAT_GPR = "warptransfer/gpr"
_FORMAT_FOREST = "warptransfer/forest"
_FORMAT_VERSION = 1


def model_to_dict(model) -> dict:
    """Self-describing, versioned dictionary snapshot of a fitted model."""
    check_is_fitted(model)
    if isinstance(model, GprRegressor):
        return {
            "format": _FORMAT_GPR,
            "version": _FORMAT_VERSION,
            "X_train": model.X_train_.tolist(),
            "t_train": model.t_train_.tolist(),
            "alpha_vec": model.alpha_vec_.tolist(),
            "lengthscale": model.lengthscale_,
            "signal_var": model.signal_var_,
            "noise_var": model.noise_var_,
            "lml": model.lml_,
            "transform": {"kind": model.transform_.kind, "shift": model.transform_.shift},
            "box": {"lo": model.box_.lo.tolist(), "hi": model.box_.hi.tolist()},
        }
    if isinstance(model, ForestRegressor):
        return {
            "format": _FORMAT_FOREST,
            "version": _FORMAT_VERSION,
            "trees": [
                {key: tree[key].tolist() for key in ("feature", "threshold", "left", "right", "value")}
                for tree in model.trees_
            ],
            "transform": {"kind": model.transform_.kind, "shift": model.transform_.shift},
            "box": {"lo": model.box_.lo.tolist(), "hi": model.box_.hi.tolist()},
        }
    raise TypeError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(payload: dict):
    """Rebuild a fitted model from ``model_to_dict`` output."""
    fmt = payload.get("format")
    version = payload.get("version")
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    transform = ValueTransform(
        kind=payload["transform"]["kind"], shift=float(payload["transform"]["shift"])
    )
    box = Box(np.asarray(payload["box"]["lo"]), np.asarray(payload["box"]["hi"]))
    if fmt == _FORMAT_GPR:
        model = GprRegressor()
        model.X_train_ = np.asarray(payload["X_train"], dtype=float)
        model.t_train_ = np.asarray(payload["t_train"], dtype=float)
        model.alpha_vec_ = np.asarray(payload["alpha_vec"], dtype=float)
        model.lengthscale_ = float(payload["lengthscale"])
        model.signal_var_ = float(payload["signal_var"])
        model.noise_var_ = float(payload["noise_var"])
        model.lml_ = float(payload["lml"])
        model.transform_ = transform
        model.box_ = box
        model.opt_starts_ = []
        model.n_features_in_ = model.X_train_.shape[1]
        return model
    if fmt == _FORMAT_FOREST:
        model = ForestRegressor()
        model.trees_ = [
            {
                "feature": np.asarray(tree["feature"], dtype=int),
                "threshold": np.asarray(tree["threshold"], dtype=float),
                "left": np.asarray(tree["left"], dtype=int),
                "right": np.asarray(tree["right"], dtype=int),
                "value": np.asarray(tree["value"], dtype=float),
            }
            for tree in payload["trees"]
        ]
        model.transform_ = transform
        model.box_ = box
        model.n_features_in_ = box.d
        return model
    raise ValueError(f"unknown model format {fmt!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model_to_dict(model), handle)


def load_model(path):
    with open(path, "r", encoding="utf-8") as handle:
        return model_from_dict(json.load(handle))
