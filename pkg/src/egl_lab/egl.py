"""Expected-gradient-length acquisition scores for ensembles.

Three routes to the same quantity:

- ``score_cai``: the committee-disagreement baseline, the mean norm of the
  gradient each member's prediction would induce against the full model.
- ``score_closed_form_linear`` / ``score_closed_form_nonlinear``: the expected
  squared gradient norm in closed form, a gradient factor times the sum of the
  mean member variance and the mean squared disagreement with the full model.
- ``score_monte_carlo``: the integral form, sampling pseudo-labels from each
  member's Gaussian predictive distribution.

Linear scores append the constant bias coordinate to the candidate by
default, because the parameter gradient of ``w @ x + b`` is ``(x, 1)``.
"""

from dataclasses import dataclass

import numpy as np

from .ensemble import BootstrapEnsemble
from .exceptions import (
    BudgetExceedsPoolError,
    NegativeGradNormError,
    NonLinearMemberError,
)
from .models import OlsLinearModel
from .validation import as_feature_matrix


@dataclass(frozen=True)
class EglScore:
    """One candidate's score split into its closed-form components.

    ``score == gradient_factor * (mean_sigma_sq + mean_disagreement_sq)``
    (to within floating-point evaluation of that product).
    """

    candidate_id: int
    score: float
    gradient_factor: float
    mean_sigma_sq: float
    mean_disagreement_sq: float

    @property
    def components(self):
        return (self.gradient_factor, self.mean_sigma_sq, self.mean_disagreement_sq)


def _require_linear(ensemble: BootstrapEnsemble):
    for member in [*ensemble.members_, ensemble.full_model_]:
        if not isinstance(member, OlsLinearModel):
            raise NonLinearMemberError(
                f"linear-gradient score needs OlsLinearModel members, "
                f"got {type(member).__name__}"
            )


def _augmented_sq_norms(X, include_bias):
    sq = np.sum(X**2, axis=1)
    return sq + 1.0 if include_bias else sq


def _bracket_terms(ensemble, X):
    """Mean member variance and mean squared disagreement with the full model."""
    means, variances = ensemble.member_predictions(X)
    full = np.atleast_1d(ensemble.predict(X))
    return np.mean(variances, axis=0), np.mean((means - full[None, :]) ** 2, axis=0)


def score_cai(ensemble, X, include_bias=True):
    """Mean gradient norm the members' predictions induce on the full model.

    ``mean_k ||(f_full(x) - f_k(x)) * (x, 1)||`` for linear members. Returns a
    float for a single candidate, an array for a candidate matrix.
    """
    _require_linear(ensemble)
    single = np.asarray(X).ndim == 1
    X = as_feature_matrix(X, ensemble.n_features_in_)
    means, _ = ensemble.member_predictions(X)
    full = np.atleast_1d(ensemble.predict(X))
    norms = np.sqrt(_augmented_sq_norms(X, include_bias))
    out = np.mean(np.abs(full[None, :] - means), axis=0) * norms
    return float(out[0]) if single else out


def score_closed_form_linear(ensemble, X, ids=None, include_bias=True):
    """Expected squared gradient length for linear members, in closed form.

    The gradient factor is the squared norm of the bias-augmented candidate;
    the bracket is the mean member variance plus the mean squared
    disagreement with the full model.
    """
    _require_linear(ensemble)
    return _closed_form(ensemble, X, _grad_factor=None, ids=ids, include_bias=include_bias)


def score_closed_form_nonlinear(ensemble, X, grad_norm_sq, ids=None):
    """Expected squared gradient length with a supplied gradient factor.

    ``grad_norm_sq`` is the squared parameter-gradient norm of the full
    model's prediction at each candidate (see
    ``eglpp.prediction_grad_norm_sq``).
    """
    grad = np.atleast_1d(np.asarray(grad_norm_sq, dtype=np.float64))
    if np.any(grad < 0.0):
        raise NegativeGradNormError("squared gradient norm must be non-negative")
    return _closed_form(ensemble, X, _grad_factor=grad, ids=ids)


def _closed_form(ensemble, X, _grad_factor, ids=None, include_bias=True):
    single = np.asarray(X).ndim == 1
    X = as_feature_matrix(X)
    if _grad_factor is None:
        _grad_factor = _augmented_sq_norms(X, include_bias)
    if _grad_factor.shape[0] != X.shape[0]:
        raise ValueError("one gradient factor per candidate required")
    mean_sigma_sq, mean_dis_sq = _bracket_terms(ensemble, X)
    scores = _grad_factor * (mean_sigma_sq + mean_dis_sq)
    if ids is None:
        ids = np.arange(X.shape[0])
    out = [
        EglScore(
            candidate_id=int(i),
            score=float(s),
            gradient_factor=float(g),
            mean_sigma_sq=float(a),
            mean_disagreement_sq=float(d),
        )
        for i, s, g, a, d in zip(ids, scores, _grad_factor, mean_sigma_sq, mean_dis_sq)
    ]
    return out[0] if single else out


def score_monte_carlo(ensemble, x, n_samples, seed, candidate_id=0, include_bias=True):
    """Integral-form score estimated by sampling member pseudo-labels.

    For each member, draws ``n_samples`` labels from its Gaussian predictive
    distribution at ``x`` and averages the squared gradient norm
    ``||(f_full(x) - y) * (x, 1)||^2``. The stream is keyed by
    ``(seed, candidate_id)`` so pool scores do not depend on scoring order.
    Zero-variance members contribute exactly their disagreement term.
    """
    _require_linear(ensemble)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    means, variances = ensemble.member_predictions(x)
    full = float(ensemble.predict(x.reshape(1, -1))[0])
    sq_norm = float(
        _augmented_sq_norms(x.reshape(1, -1), include_bias)[0]
    )
    rng = np.random.default_rng(
        [int(seed) & 0xFFFFFFFF, int(candidate_id) & 0xFFFFFFFF]
    )
    total = 0.0
    for mu, var in zip(means, variances):
        if var == 0.0:
            total += (full - mu) ** 2
            continue
        labels = mu + np.sqrt(var) * rng.standard_normal(int(n_samples))
        total += float(np.mean((full - labels) ** 2))
    return sq_norm * total / len(means)


def select_batch(scores, budget, ids=None):
    """Ids of the ``budget`` highest scores, ties broken by lower id.

    ``scores`` is either a list of :class:`EglScore` or a plain score array
    (in which case ``ids`` defaults to positions).
    """
    if scores and isinstance(scores[0], EglScore):
        ids = np.array([s.candidate_id for s in scores], dtype=np.int64)
        values = np.array([s.score for s in scores], dtype=np.float64)
    else:
        values = np.asarray(scores, dtype=np.float64).reshape(-1)
        ids = (
            np.arange(values.shape[0], dtype=np.int64)
            if ids is None
            else np.asarray(ids, dtype=np.int64)
        )
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if budget > values.shape[0]:
        raise BudgetExceedsPoolError(
            f"budget {budget} exceeds pool of {values.shape[0]} candidates"
        )
    order = np.lexsort((ids, -values))
    return [int(i) for i in ids[order[: int(budget)]]]
