"""Ensemble-free expected-gradient acquisition over labelled neighborhoods.

The pool's unknown labels are replaced by a distribution over the labels of
nearby *labelled* points in embedding space: each unlabelled row gets a
Gaussian neighborhood whose bandwidth is calibrated so the row's perplexity
(2 to the Shannon entropy) hits a common target. The acquisition score of an
unlabelled point is then the expectation, over its top-K most probable
labelled neighbors, of the squared per-example gradient norm the neighbor's
label would induce.

Per-example gradient norms use the layerwise identity
``||delta a^T||_F^2 = ||delta||^2 * ||a||^2`` so one forward and one backward
pass suffice; only linear-layer weights and biases contribute.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .data import Dataset
from .exceptions import (
    DimensionMismatchError,
    EmptyLabelledPoolError,
    KExceedsPoolError,
    PerplexityOutOfRangeError,
)
from .models import MlpRegressor, OlsLinearModel, cross_sq_distances
from .egl import select_batch

SIGMA_BOUND_FACTORS = (1e-8, 1e8)
DEFAULT_PERPLEXITY = 30.0
DEFAULT_TOP_K = 10
DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 64


@dataclass(frozen=True)
class EglppConfig:
    perplexity: float = DEFAULT_PERPLEXITY
    top_k: int = DEFAULT_TOP_K
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER


class CalibrationResult(NamedTuple):
    sigma: float
    achieved: float
    degenerate: bool


@dataclass(frozen=True)
class NeighborhoodModel:
    """Row-stochastic neighbor probabilities of unlabelled over labelled.

    ``prob[i, j]`` is the probability that labelled neighbor ``j`` carries the
    true label of unlabelled point ``i``; every row sums to one.
    ``neighbor_ids[i]`` holds the labelled ids behind row ``i``'s columns (all
    labelled ids for a full model, the kept ids after truncation).
    """

    prob: np.ndarray
    sigma: np.ndarray
    perplexity_target: float
    achieved_perplexity: np.ndarray
    degenerate: np.ndarray
    neighbor_ids: np.ndarray

    @property
    def n_unlabelled(self):
        return self.prob.shape[0]

    @property
    def n_neighbors(self):
        return self.prob.shape[1]


def _row_distribution(sq_distances, sigma):
    """Neighbor distribution and its perplexity for one bandwidth."""
    beta = 1.0 / (2.0 * sigma * sigma)
    shifted = sq_distances - sq_distances.min()
    weights = np.exp(-shifted * beta)
    prob = weights / weights.sum()
    nonzero = prob[prob > 0.0]
    entropy_bits = float(-np.sum(nonzero * np.log2(nonzero)))
    return prob, 2.0**entropy_bits


def calibrate_sigma(
    sq_distances_row,
    perplexity_target,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
):
    """Bisect on log-bandwidth until the row perplexity matches the target.

    Perplexity is monotone non-decreasing in the bandwidth, from the
    multiplicity of the smallest distance up to the row length. A row of
    all-equal distances has sigma-independent perplexity: if the target is
    exactly the row length it is already achieved, otherwise the upper
    bandwidth cap is returned with ``degenerate=True``.
    """
    d = np.asarray(sq_distances_row, dtype=np.float64).reshape(-1)
    n = d.shape[0]
    if n < 2:
        raise PerplexityOutOfRangeError("need at least 2 neighbors to calibrate")
    if np.any(d < 0.0):
        raise ValueError("squared distances must be non-negative")
    target = float(perplexity_target)
    if target <= 1.0:
        raise PerplexityOutOfRangeError(f"perplexity target {target} must exceed 1")
    scale = float(np.sqrt(np.median(d))) or 1.0
    lo, hi = SIGMA_BOUND_FACTORS[0] * scale, SIGMA_BOUND_FACTORS[1] * scale
    if d.max() == d.min():
        achieved = float(n)
        if abs(achieved - target) <= tol:
            return CalibrationResult(sigma=scale, achieved=achieved, degenerate=False)
        return CalibrationResult(sigma=hi, achieved=achieved, degenerate=True)
    if target >= n:
        raise PerplexityOutOfRangeError(
            f"perplexity target {target} must be below the row length {n}"
        )
    log_lo, log_hi = np.log(lo), np.log(hi)
    sigma = np.exp(0.5 * (log_lo + log_hi))
    _, achieved = _row_distribution(d, sigma)
    for _ in range(int(max_iter)):
        if abs(achieved - target) <= tol:
            break
        if achieved > target:
            log_hi = np.log(sigma)
        else:
            log_lo = np.log(sigma)
        sigma = np.exp(0.5 * (log_lo + log_hi))
        _, achieved = _row_distribution(d, sigma)
    return CalibrationResult(sigma=float(sigma), achieved=float(achieved), degenerate=False)


def effective_perplexity(perplexity_target, n_labelled):
    """Clamp the target into the attainable range for a small labelled pool."""
    capped = min(float(perplexity_target), float(n_labelled - 1))
    if capped <= 1.0:
        capped = 0.5 * (1.0 + n_labelled)
    return capped


def conditional_probabilities(
    h_unlabelled,
    h_labelled,
    perplexity_target=DEFAULT_PERPLEXITY,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    sigma=None,
    labelled_ids=None,
):
    """Calibrated neighbor distributions of unlabelled rows over labelled points.

    Row ``i`` is ``exp(-||h_i - h_j||^2 / (2 sigma_i^2))`` normalized over the
    labelled entries ``j`` only, with ``sigma_i`` calibrated per row. The
    target is clamped to ``n_labelled - 1`` for small pools. Passing ``sigma``
    (scalar or per-row) bypasses calibration, which is useful in tests.
    """
    h_u = np.asarray(h_unlabelled, dtype=np.float64)
    h_l = np.asarray(h_labelled, dtype=np.float64)
    if h_u.ndim != 2 or h_l.ndim != 2:
        raise DimensionMismatchError("embeddings must be 2-D matrices")
    if h_u.shape[1] != h_l.shape[1]:
        raise DimensionMismatchError("embedding widths differ between pools")
    m = h_l.shape[0]
    if m < 2:
        raise EmptyLabelledPoolError("need at least 2 labelled points")
    if labelled_ids is None:
        labelled_ids = np.arange(m, dtype=np.int64)
    else:
        labelled_ids = np.asarray(labelled_ids, dtype=np.int64)
        if labelled_ids.shape[0] != m:
            raise DimensionMismatchError("one labelled id per labelled row required")
    target = effective_perplexity(perplexity_target, m)
    sq = cross_sq_distances(h_u, h_l)
    n_u = h_u.shape[0]
    prob = np.empty((n_u, m))
    sigmas = np.empty(n_u)
    achieved = np.empty(n_u)
    degenerate = np.zeros(n_u, dtype=bool)
    if sigma is not None:
        sigmas[:] = np.asarray(sigma, dtype=np.float64)
    for i in range(n_u):
        if sigma is None:
            result = calibrate_sigma(sq[i], target, tol=tol, max_iter=max_iter)
            sigmas[i] = result.sigma
            degenerate[i] = result.degenerate
        prob[i], achieved[i] = _row_distribution(sq[i], sigmas[i])
    return NeighborhoodModel(
        prob=prob,
        sigma=sigmas,
        perplexity_target=target,
        achieved_perplexity=achieved,
        degenerate=degenerate,
        neighbor_ids=np.broadcast_to(labelled_ids, (n_u, m)),
    )


def top_k_truncate(model: NeighborhoodModel, k):
    """Keep each row's K most probable neighbors, renormalized to sum one.

    Ties are broken toward the lower labelled id. Returns the truncated model
    together with the per-row column indices into the original matrix.
    """
    k = int(k)
    if k < 1:
        raise ValueError("K must be >= 1")
    if k > model.n_neighbors:
        raise KExceedsPoolError(
            f"K={k} exceeds the {model.n_neighbors} labelled neighbors"
        )
    n_u = model.n_unlabelled
    prob = np.empty((n_u, k))
    kept_ids = np.empty((n_u, k), dtype=np.int64)
    columns = np.empty((n_u, k), dtype=np.int64)
    for i in range(n_u):
        order = np.lexsort((model.neighbor_ids[i], -model.prob[i]))[:k]
        columns[i] = order
        kept_ids[i] = model.neighbor_ids[i][order]
        kept = model.prob[i][order]
        prob[i] = kept / kept.sum()
    truncated = NeighborhoodModel(
        prob=prob,
        sigma=model.sigma,
        perplexity_target=model.perplexity_target,
        achieved_perplexity=model.achieved_perplexity,
        degenerate=model.degenerate,
        neighbor_ids=kept_ids,
    )
    return truncated, columns


# -- per-example gradients ------------------------------------------------


@dataclass
class GradientCache:
    """Layer inputs and output-side sensitivities from one forward/backward."""

    layer_inputs: list = field(default_factory=list)
    deltas: list = field(default_factory=list)

    def norm_sq(self):
        total = 0.0
        for a, delta in zip(self.layer_inputs, self.deltas):
            d_sq = float(delta @ delta)
            total += d_sq * float(a @ a) + d_sq
        return total


def _mlp_forward_backward(model: MlpRegressor, x, residual_fn):
    """One forward pass, one backward pass seeded by ``residual_fn(yhat)``."""
    from .models import ACTIVATIONS

    _, dact = ACTIVATIONS[model.activation]
    yhat, _, caches = model._forward(x.reshape(1, -1))
    cache = GradientCache()
    delta = np.zeros(model.layers_[-1][0].shape[0])
    delta[0] = residual_fn(float(yhat[0]))
    for l in range(len(model.layers_) - 1, -1, -1):
        a_in, _ = caches[l]
        cache.layer_inputs.append(a_in[0])
        cache.deltas.append(delta)
        if l > 0:
            _, z_prev = caches[l - 1]
            delta = (delta @ model.layers_[l][0]) * dact(z_prev[0])
    return cache


def _check_mlp_input(model, x):
    if x.shape[0] != model.n_features_in_:
        raise DimensionMismatchError(
            f"expected {model.n_features_in_} features, got {x.shape[0]}"
        )


def per_example_grad_norm_sq(model, x, y_label):
    """Squared parameter-gradient norm of the half-squared-error loss.

    The loss convention is ``0.5 * (prediction - y)^2``, so for a linear
    model the gradient is ``(prediction - y) * (x, 1)``. Only linear-layer
    weights and biases contribute.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if isinstance(model, OlsLinearModel):
        residual = model.predict(x) - float(y_label)
        return residual**2 * (float(x @ x) + 1.0)
    if isinstance(model, MlpRegressor):
        _check_mlp_input(model, x)
        cache = _mlp_forward_backward(model, x, lambda yhat: yhat - float(y_label))
        return cache.norm_sq()
    raise TypeError(f"no per-example gradients for {type(model).__name__}")


def prediction_grad_norm_sq(model, x):
    """Squared parameter-gradient norm of the model prediction itself."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if isinstance(model, OlsLinearModel):
        return float(x @ x) + 1.0
    if isinstance(model, MlpRegressor):
        _check_mlp_input(model, x)
        return _mlp_forward_backward(model, x, lambda _: 1.0).norm_sq()
    raise TypeError(f"no parameter gradients for {type(model).__name__}")


def _grad_norms_for_labels(model, x, y_labels):
    """Vectorized ``per_example_grad_norm_sq`` over candidate labels at one x."""
    y_labels = np.asarray(y_labels, dtype=np.float64)
    residuals = model.predict(np.asarray(x, dtype=np.float64)) - y_labels
    return residuals**2 * prediction_grad_norm_sq(model, x)


def eglpp_scores(model, labelled: Dataset, unlabelled: Dataset, config=None):
    """Expected squared gradient norm under the labelled-neighbor distribution.

    ``score(i) = sum_j q(j | i) * ||grad loss(x_i, y_j)||^2`` over the top-K
    most probable labelled neighbors ``j`` of unlabelled point ``i``. Returns
    one score per unlabelled row, aligned with ``unlabelled.ids``.
    """
    config = config or EglppConfig()
    if len(labelled) < 2:
        raise EmptyLabelledPoolError("need at least 2 labelled points")
    h_l = model.embed(labelled.X)
    h_u = model.embed(unlabelled.X)
    neighborhood = conditional_probabilities(
        h_u,
        h_l,
        perplexity_target=config.perplexity,
        tol=config.tol,
        max_iter=config.max_iter,
        labelled_ids=labelled.ids,
    )
    k = min(int(config.top_k), len(labelled))
    truncated, columns = top_k_truncate(neighborhood, k)
    scores = np.empty(len(unlabelled))
    for i in range(len(unlabelled)):
        grads = _grad_norms_for_labels(model, unlabelled.X[i], labelled.y[columns[i]])
        scores[i] = float(truncated.prob[i] @ grads)
    return scores


def select_top_b(scores, budget, ids=None):
    """Top-budget unlabelled ids by score, ties toward the lower id."""
    return select_batch(scores, budget, ids=ids)


def dump_embeddings(model, labelled: Dataset, unlabelled: Dataset, path):
    """Write ``id,pool,h0,...`` rows for external visualization."""
    import csv

    h_l = model.embed(labelled.X)
    h_u = model.embed(unlabelled.X)
    width = h_l.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "pool", *[f"h{j}" for j in range(width)]])
        for pool, ds, h in (("labelled", labelled, h_l), ("unlabelled", unlabelled, h_u)):
            for i, row in zip(ds.ids, h):
                writer.writerow([int(i), pool, *[repr(float(v)) for v in row]])
