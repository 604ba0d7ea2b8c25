"""Scikit-learn style estimator over the curve-length networks.

The training unit is a pair of curves whose combined true length is
known: ``fit(X, y)`` takes X of shape (n_samples, 2, 2, n_points), where
X[i, 0] and X[i, 1] are the two curves of example i, and y[i] is the true
length of their concatenation. ``predict`` maps single curves of shape
(n_samples, 2, n_points) to lengths.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import models
from .models import ModelKind
from .training import TrainConfig, train_arrays
from .validation import check_curve_batch, check_pair_batch, check_targets

__all__ = ["CurveLengthRegressor"]


class CurveLengthRegressor(BaseEstimator, RegressorMixin):
    """Neural regressor for the arc length of planar sampled curves.

    Parameters mirror the training configuration: ``model`` selects the
    convolutional network ("cnn") or the LSTM baseline ("lstm").
    """

    def __init__(
        self,
        model: str = "cnn",
        conv_channels: int = 16,
        batch_size: int = 200,
        epochs: int = 100,
        learning_rate: float = 0.001,
        momentum: float = 0.9,
        weight_decay: float = 0.0005,
        reg_lambda: float = 0.01,
        center_output: bool = True,
        random_state: int = 0,
    ):
        self.model = model
        self.conv_channels = conv_channels
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.reg_lambda = reg_lambda
        self.center_output = center_output
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            model=ModelKind(self.model),
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            reg_lambda=self.reg_lambda,
            seed=self.random_state,
            conv_channels=self.conv_channels,
            center_output=self.center_output,
        )

    def fit(self, X, y, eval_set=None, progress=None):
        """Train on curve pairs X (n, 2, 2, points) with summed lengths y."""
        X = check_pair_batch(X)
        y = check_targets(y, X.shape[0])
        config = self._config()
        test = None
        if eval_set is not None:
            X_val, y_val = eval_set
            X_val = check_pair_batch(X_val, name="eval_set[0]")
            y_val = check_targets(y_val, X_val.shape[0], name="eval_set[1]")
            test = (X_val[:, 0], X_val[:, 1], y_val)
        params, log = train_arrays(
            X[:, 0], X[:, 1], y, config, test=test, progress=progress
        )
        self.params_ = params
        self.train_log_ = log
        self.n_points_ = X.shape[3]
        self.model_kind_ = config.model
        return self

    def predict(self, X):
        """Predicted lengths for curves X of shape (n, 2, n_points)."""
        self._check_fitted()
        X = check_curve_batch(X, n_points=self.n_points_)
        return models.predict(self.model_kind_, self.params_, X)

    def save_checkpoint(self, path, extra: dict | None = None) -> None:
        self._check_fitted()
        models.save_checkpoint(path, self.model_kind_, self.params_, extra)

    @classmethod
    def from_checkpoint(cls, path) -> "CurveLengthRegressor":
        """Rebuild a fitted estimator from a checkpoint file."""
        kind, params, header = models.load_checkpoint(path)
        est = cls(model=kind.value, conv_channels=header.get("conv_channels", 16))
        est.params_ = params
        est.train_log_ = None
        est.n_points_ = header["n_points"]
        est.model_kind_ = kind
        return est

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(
                "this CurveLengthRegressor is not fitted; call fit or from_checkpoint"
            )
