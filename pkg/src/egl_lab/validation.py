"""Small input-validation helpers shared by the estimators."""

import zlib

import numpy as np
from sklearn.exceptions import NotFittedError

from .exceptions import DimensionMismatchError


def as_feature_matrix(X, n_features=None):
    """Coerce ``X`` to a 2-D float64 array of finite values.

    A single vector is promoted to one row only when it is 1-D; callers that
    score one candidate at a time should pass a 1-D array.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D feature matrix, got ndim={X.ndim}")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatchError(
            f"expected {n_features} features, got {X.shape[1]}"
        )
    return X


def as_target_vector(y, n_samples=None):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise ValueError("target vector contains non-finite values")
    if n_samples is not None and y.shape[0] != n_samples:
        raise DimensionMismatchError(
            f"expected {n_samples} targets, got {y.shape[0]}"
        )
    return y


def check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )


def rng_from_keys(*keys):
    """Deterministic generator from a tuple of ints/strings.

    Strings are hashed with crc32 so stream identities are stable across
    processes and platforms.
    """
    words = []
    for key in keys:
        if isinstance(key, str):
            words.append(zlib.crc32(key.encode("utf-8")))
        else:
            words.append(int(key) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))
