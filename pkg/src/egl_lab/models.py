"""Regression model family with a shared Gaussian-predictive surface.

All estimators follow the scikit-learn protocol (``fit``, ``predict``,
``get_params``) and add two package-wide conventions:

- ``predict(X, return_var=True)`` returns per-point predictive
  ``(mean, variance)`` pairs, so acquisition functions can treat every
  member of an ensemble as a Gaussian predictor.
- ``embed(X)`` maps inputs to the representation used by neighborhood-based
  acquisition (penultimate activations for networks, raw features for the
  linear model).

Fitted models are immutable in the sense that prediction and embedding never
mutate state, so concurrent read-only use is safe.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .exceptions import (
    EmptyDatasetError,
    NonPositiveVarianceError,
    NotPositiveDefiniteError,
    RankDeficientError,
    TooFewPointsError,
)
from .validation import as_feature_matrix, as_target_vector, check_fitted

LOG_VAR_CLIP = 30.0

# forward / derivative pairs for the elementwise nonlinearity; "tanh" and
# "identity" stay smooth for finite-difference gradient checks
ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(np.float64)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "identity": (lambda z: z, np.ones_like),
}


def aleatoric_loss(prediction, variance, target):
    """Gaussian negative log-likelihood up to an additive constant.

    ``residual**2 / (2 * variance) + log(variance) / 2``; strictly convex in
    log-variance with its minimum at ``variance == residual**2``.
    """
    prediction = np.asarray(prediction, dtype=np.float64)
    variance = np.asarray(variance, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if np.any(variance <= 0.0):
        raise NonPositiveVarianceError("variance must be strictly positive")
    out = (target - prediction) ** 2 / (2.0 * variance) + 0.5 * np.log(variance)
    return float(out) if out.ndim == 0 else out


class OlsLinearModel(RegressorMixin, BaseEstimator):
    """Ordinary least squares with a homoscedastic noise estimate.

    The fitted predictive distribution at any point is
    ``N(coef_ @ x + intercept_, noise_variance_)`` where ``noise_variance_``
    is the residual variance ``RSS / (n - d - 1)``. An exact fit (or a fit
    with zero error degrees of freedom) floors the variance at
    ``variance_floor`` and sets ``variance_floored_``.
    """

    def __init__(self, variance_floor=1e-12):
        self.variance_floor = variance_floor

    def fit(self, X, y):
        X = as_feature_matrix(X)
        y = as_target_vector(y, X.shape[0])
        n, d = X.shape
        if n < d + 1:
            raise TooFewPointsError(f"need at least {d + 1} points, got {n}")
        design = np.hstack([X, np.ones((n, 1))])
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < d + 1:
            raise RankDeficientError("design matrix is rank deficient")
        self.coef_ = coef[:d]
        self.intercept_ = float(coef[d])
        residuals = y - design @ coef
        dof = n - d - 1
        raw = float(residuals @ residuals / dof) if dof > 0 else 0.0
        self.noise_variance_ = max(raw, float(self.variance_floor))
        self.variance_floored_ = raw < float(self.variance_floor)
        self.n_features_in_ = d
        return self

    @classmethod
    def from_parameters(cls, weights, bias, noise_variance, variance_floor=1e-12):
        """Build a fitted model directly from its parameters."""
        model = cls(variance_floor=variance_floor)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        model.coef_ = weights
        model.intercept_ = float(bias)
        model.noise_variance_ = max(float(noise_variance), float(variance_floor))
        model.variance_floored_ = float(noise_variance) < float(variance_floor)
        model.n_features_in_ = weights.shape[0]
        return model

    def predict(self, X, return_var=False):
        check_fitted(self, "coef_")
        single = np.asarray(X).ndim == 1
        X = as_feature_matrix(X, self.n_features_in_)
        mean = X @ self.coef_ + self.intercept_
        if single:
            mean = float(mean[0])
        if not return_var:
            return mean
        var = self.noise_variance_ if single else np.full(X.shape[0], self.noise_variance_)
        return mean, var

    def embed(self, X):
        """Identity embedding: the raw feature vector."""
        check_fitted(self, "coef_")
        return as_feature_matrix(X, self.n_features_in_)


class MlpRegressor(RegressorMixin, BaseEstimator):
    """Small dense network trained with minibatch gradient descent + momentum.

    With ``aleatoric=True`` the output layer has two units, ``(yhat, log
    variance)``, and training minimizes the heteroscedastic Gaussian negative
    log-likelihood; otherwise it minimizes half squared error and the
    predictive variance falls back to the residual variance on the training
    set. Shuffling is derived from ``seed`` per epoch, so training is a pure
    function of (parameters at entry, data, epoch counter).

    Parameters live in ``layers_``: a list of ``(weight, bias)`` pairs with
    weight shape ``(fan_out, fan_in)``.
    """

    def __init__(
        self,
        hidden_layer_sizes=(16,),
        activation="tanh",
        aleatoric=False,
        epochs=200,
        learning_rate=0.02,
        momentum=0.9,
        batch_size=32,
        seed=0,
        variance_floor=1e-12,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.aleatoric = aleatoric
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.seed = seed
        self.variance_floor = variance_floor

    # -- construction ----------------------------------------------------

    def _init_layers(self, n_features):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        rng = np.random.default_rng([int(self.seed) & 0xFFFFFFFF, 0])
        sizes = [n_features, *self.hidden_layer_sizes, 2 if self.aleatoric else 1]
        layers = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            w = rng.normal(0.0, scale, size=(fan_out, fan_in))
            b = np.zeros(fan_out)
            layers.append((w, b))
        return layers

    def fit(self, X, y):
        X = as_feature_matrix(X)
        y = as_target_vector(y, X.shape[0])
        if X.shape[0] == 0:
            raise EmptyDatasetError("cannot train on an empty dataset")
        self.n_features_in_ = X.shape[1]
        self.layers_ = self._init_layers(X.shape[1])
        self._velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers_]
        self._epochs_done = 0
        self.loss_curve_ = []
        return self.train(X, y, epochs=self.epochs)

    def train(self, X, y, epochs=None):
        """Continue training in place for ``epochs`` more epochs.

        ``epochs=0`` leaves every parameter bit-identical. Returns self.
        """
        check_fitted(self, "layers_")
        X = as_feature_matrix(X, self.n_features_in_)
        y = as_target_vector(y, X.shape[0])
        if X.shape[0] == 0:
            raise EmptyDatasetError("cannot train on an empty dataset")
        epochs = self.epochs if epochs is None else int(epochs)
        n = X.shape[0]
        batch = max(1, min(int(self.batch_size), n))
        lr = float(self.learning_rate)
        mom = float(self.momentum)
        for _ in range(epochs):
            order = np.random.default_rng(
                [int(self.seed) & 0xFFFFFFFF, 1, self._epochs_done]
            ).permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                loss, grads = self._batch_gradients(X[idx], y[idx])
                epoch_loss += loss * len(idx)
                for l, (gw, gb) in enumerate(grads):
                    vw, vb = self._velocity[l]
                    vw = mom * vw - lr * gw
                    vb = mom * vb - lr * gb
                    w, b = self.layers_[l]
                    self.layers_[l] = (w + vw, b + vb)
                    self._velocity[l] = (vw, vb)
            self.loss_curve_.append(epoch_loss / n)
            self._epochs_done += 1
        residuals = y - self._forward(X)[0]
        raw = float(np.mean(residuals**2))
        self.noise_variance_ = max(raw, float(self.variance_floor))
        return self

    # -- forward / backward ----------------------------------------------

    def _forward(self, X):
        """Forward pass keeping per-layer inputs and pre-activations.

        Returns ``(yhat, log_var or None, caches)`` where ``caches[l]`` is the
        ``(input, pre_activation)`` pair of layer ``l``.
        """
        act, _ = ACTIVATIONS[self.activation]
        a = X
        caches = []
        last = len(self.layers_) - 1
        for l, (w, b) in enumerate(self.layers_):
            z = a @ w.T + b
            caches.append((a, z))
            a = act(z) if l < last else z
        yhat = a[:, 0]
        log_var = np.clip(a[:, 1], -LOG_VAR_CLIP, LOG_VAR_CLIP) if self.aleatoric else None
        return yhat, log_var, caches

    def _batch_gradients(self, X, y):
        n = X.shape[0]
        yhat, log_var, caches = self._forward(X)
        residual = yhat - y
        delta = np.zeros((n, self.layers_[-1][0].shape[0]))
        if self.aleatoric:
            inv_var = np.exp(-log_var)
            loss = float(np.mean(0.5 * residual**2 * inv_var + 0.5 * log_var))
            delta[:, 0] = residual * inv_var / n
            delta[:, 1] = (0.5 - 0.5 * residual**2 * inv_var) / n
        else:
            loss = float(np.mean(0.5 * residual**2))
            delta[:, 0] = residual / n
        grads = self._backward(delta, caches)
        return loss, grads

    def _backward(self, delta, caches):
        """Backpropagate output-side sensitivities through the layer stack."""
        _, dact = ACTIVATIONS[self.activation]
        grads = [None] * len(self.layers_)
        for l in range(len(self.layers_) - 1, -1, -1):
            a_in, _ = caches[l]
            grads[l] = (delta.T @ a_in, delta.sum(axis=0))
            if l > 0:
                _, z_prev = caches[l - 1]
                delta = (delta @ self.layers_[l][0]) * dact(z_prev)
        return grads

    # -- prediction surface ----------------------------------------------

    def predict(self, X, return_var=False):
        check_fitted(self, "layers_")
        single = np.asarray(X).ndim == 1
        X = as_feature_matrix(X, self.n_features_in_)
        yhat, log_var, _ = self._forward(X)
        if not return_var:
            return float(yhat[0]) if single else yhat
        if self.aleatoric:
            var = np.exp(log_var)
        else:
            var = np.full(X.shape[0], self.noise_variance_)
        if single:
            return float(yhat[0]), float(var[0])
        return yhat, var

    def embed(self, X):
        """Penultimate-layer activations (the inputs of the output layer)."""
        check_fitted(self, "layers_")
        X = as_feature_matrix(X, self.n_features_in_)
        _, _, caches = self._forward(X)
        return caches[-1][0]


class GpRegressor(RegressorMixin, BaseEstimator):
    """Gaussian-process regression with a fixed RBF kernel.

    ``k(a, b) = signal_variance * exp(-||a - b||^2 / (2 * lengthscale^2))``.
    Hyperparameters are user-supplied; there is no marginal-likelihood
    optimization. The Cholesky factor of the (possibly jittered) training
    kernel is cached in ``chol_``. Jitter starts at ``1e-10 * signal_variance``
    and escalates tenfold up to ``1e-4 * signal_variance`` before raising.
    """

    _JITTER_EXPONENTS = range(-10, -3)

    def __init__(self, lengthscale=1.0, signal_variance=1.0, noise_variance=0.0):
        self.lengthscale = lengthscale
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance

    def _kernel(self, A, B):
        sq = cross_sq_distances(A, B)
        return float(self.signal_variance) * np.exp(
            -sq / (2.0 * float(self.lengthscale) ** 2)
        )

    def fit(self, X, y):
        if self.lengthscale <= 0 or self.signal_variance <= 0:
            raise ValueError("lengthscale and signal_variance must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")
        X = as_feature_matrix(X)
        y = as_target_vector(y, X.shape[0])
        if X.shape[0] == 0:
            raise EmptyDatasetError("GP needs at least one training point")
        gram = self._kernel(X, X) + float(self.noise_variance) * np.eye(X.shape[0])
        chol, jitter = None, 0.0
        for jit in [0.0] + [
            float(self.signal_variance) * 10.0**e for e in self._JITTER_EXPONENTS
        ]:
            try:
                chol = np.linalg.cholesky(gram + jit * np.eye(X.shape[0]))
                jitter = jit
                break
            except np.linalg.LinAlgError:
                continue
        if chol is None:
            raise NotPositiveDefiniteError(
                "kernel matrix not positive definite after maximum jitter"
            )
        self.X_train_ = X
        self.y_train_ = y
        self.chol_ = chol
        self.jitter_ = jitter
        # dense inverse keeps predict() numpy-only; fine at desk scale
        n = X.shape[0]
        identity = np.eye(n)
        inv_l = np.linalg.solve(chol, identity)
        self._kernel_inv = inv_l.T @ inv_l
        self.alpha_ = self._kernel_inv @ y
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_var=False):
        check_fitted(self, "chol_")
        single = np.asarray(X).ndim == 1
        X = as_feature_matrix(X, self.n_features_in_)
        k_star = self._kernel(X, self.X_train_)
        mean = k_star @ self.alpha_
        if not return_var:
            return float(mean[0]) if single else mean
        explained = np.einsum("ij,jk,ik->i", k_star, self._kernel_inv, k_star)
        var = np.maximum(float(self.signal_variance) - explained, 0.0)
        if single:
            return float(mean[0]), float(var[0])
        return mean, var


def cross_sq_distances(A, B):
    """Pairwise squared Euclidean distances via the expanded inner product.

    Round-off can push the expansion slightly negative; clamp at zero.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = (
        np.sum(A**2, axis=1)[:, None]
        + np.sum(B**2, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.maximum(sq, 0.0)
