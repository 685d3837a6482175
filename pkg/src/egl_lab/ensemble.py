"""Bootstrap ensembles and the combined predictive-variance score.

An ensemble holds K members fitted on with-replacement resamples of the
labelled pool plus a full-data model. The predictive variance at a point is
the mean member variance (local uncertainty) plus the population variance of
the member means (disagreement between members).
"""

import numpy as np
from sklearn.base import BaseEstimator, clone

from .exceptions import (
    EmptyDatasetError,
    RankDeficientError,
    TooFewPointsError,
    UnfittableResampleError,
)
from .validation import as_feature_matrix, as_target_vector, check_fitted


class BootstrapEnsemble(BaseEstimator):
    """K bootstrap-trained clones of a template estimator plus a full model.

    Each member is fitted on ``len(X)`` draws with replacement; resamples that
    are unfittable (rank deficient for linear members) are redrawn up to
    ``max_resample_retries`` times. Index sets are a pure function of ``seed``.

    Parameters
    ----------
    template : estimator
        Cloned for every member; if it has a ``seed`` parameter each member
        receives its own derived seed.
    n_members : int
        Number of bootstrap members (K >= 1).
    seed : int
        Drives resampling and derived member seeds.
    member_indices : sequence of index arrays, optional
        Test hook: use these resamples verbatim instead of drawing.
    full_model : fitted estimator, optional
        Use this as the full-data model instead of refitting a clone.
    variance_source : {"auto", "residual"}
        "auto" takes each member's native predictive variance (the aleatoric
        head when present); "residual" prefers the member's fitted
        ``noise_variance_`` whenever it exists.
    """

    def __init__(
        self,
        template,
        n_members=8,
        seed=0,
        max_resample_retries=16,
        member_indices=None,
        full_model=None,
        variance_source="auto",
    ):
        self.template = template
        self.n_members = n_members
        self.seed = seed
        self.max_resample_retries = max_resample_retries
        self.member_indices = member_indices
        self.full_model = full_model
        self.variance_source = variance_source

    def fit(self, X, y):
        X = as_feature_matrix(X)
        y = as_target_vector(y, X.shape[0])
        n = X.shape[0]
        if n == 0:
            raise EmptyDatasetError("cannot bootstrap an empty dataset")
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        if self.variance_source not in ("auto", "residual"):
            raise ValueError("variance_source must be 'auto' or 'residual'")
        rng = np.random.default_rng(int(self.seed) & 0xFFFFFFFF)
        members, index_sets = [], []
        for k in range(int(self.n_members)):
            if self.member_indices is not None:
                idx = np.asarray(self.member_indices[k], dtype=np.int64)
                members.append(self._fit_member(rng, X[idx], y[idx]))
                index_sets.append(idx)
                continue
            for attempt in range(int(self.max_resample_retries) + 1):
                idx = rng.integers(0, n, size=n)
                try:
                    members.append(self._fit_member(rng, X[idx], y[idx]))
                except (RankDeficientError, TooFewPointsError):
                    continue
                index_sets.append(idx)
                break
            else:
                raise UnfittableResampleError(
                    f"member {k}: no fittable resample in "
                    f"{self.max_resample_retries + 1} draws"
                )
        self.members_ = members
        self.member_indices_ = index_sets
        if self.full_model is not None:
            self.full_model_ = self.full_model
        else:
            self.full_model_ = clone(self.template).fit(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def _fit_member(self, rng, X, y):
        member = clone(self.template)
        if "seed" in member.get_params():
            member.set_params(seed=int(rng.integers(0, 2**31 - 1)))
        return member.fit(X, y)

    @classmethod
    def from_members(cls, members, full_model):
        """Assemble a fitted ensemble from already-fitted models."""
        ensemble = cls(template=None, n_members=len(members))
        ensemble.members_ = list(members)
        ensemble.member_indices_ = None
        ensemble.full_model_ = full_model
        ensemble.n_features_in_ = getattr(full_model, "n_features_in_", None)
        return ensemble

    # -- prediction surface ----------------------------------------------

    def predict(self, X):
        """Full-data model prediction."""
        check_fitted(self, "full_model_")
        return self.full_model_.predict(X)

    def member_predictions(self, X):
        """Per-member Gaussian predictive parameters.

        Returns ``(means, variances)`` with shape ``(K, n_points)`` each, in
        member order.
        """
        check_fitted(self, "members_")
        single = np.asarray(X).ndim == 1
        X = as_feature_matrix(X)
        means = np.empty((len(self.members_), X.shape[0]))
        variances = np.empty_like(means)
        for k, member in enumerate(self.members_):
            if self.variance_source == "residual" and hasattr(member, "noise_variance_"):
                mu = member.predict(X)
                var = np.full(X.shape[0], member.noise_variance_)
            else:
                mu, var = member.predict(X, return_var=True)
            means[k] = mu
            variances[k] = var
        if single:
            return means[:, 0], variances[:, 0]
        return means, variances

    def predictive_variance(self, X):
        """Mean member variance plus the spread of the member means.

        ``mean_k var_k(x) + mean_k mu_k(x)^2 - (mean_k mu_k(x))^2``, clamped
        at zero against round-off.
        """
        means, variances = self.member_predictions(X)
        epistemic = np.mean(means**2, axis=0) - np.mean(means, axis=0) ** 2
        out = np.maximum(np.mean(variances, axis=0) + epistemic, 0.0)
        return float(out) if out.ndim == 0 else out
