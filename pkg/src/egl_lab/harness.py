"""Active-learning simulation: cyclic select-annotate-train with reporting.

One simulation runs every configured strategy over every seed. Per seed, the
initial labelled pool and the cycle-0 base model are shared by all strategies
so paired comparisons start from the same state; per cycle, the pool is
scored with the strategy, the top-budget ids move from unlabelled to
labelled ("annotation" reveals the targets already stored in the dataset),
and the model is retrained from scratch. The metric is RMSE on a fixed
held-out split. Every random draw is keyed by (seed, strategy, cycle,
purpose), so the whole learning-curve set is a pure function of the config.
"""

import csv
import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .data import Dataset
from .egl import (
    score_cai,
    score_closed_form_linear,
    score_closed_form_nonlinear,
    score_monte_carlo,
    select_batch,
)
from .eglpp import EglppConfig, eglpp_scores, prediction_grad_norm_sq
from .ensemble import BootstrapEnsemble
from .exceptions import (
    BudgetExceedsPoolError,
    EmptyDatasetError,
    InvalidConfigError,
)
from .models import GpRegressor, MlpRegressor, OlsLinearModel
from .stats import paired_t_test
from .synthetic import SyntheticSpec, generate_synthetic
from .validation import rng_from_keys

STRATEGIES = (
    "random",
    "predictive_variance",
    "egl_cai",
    "egl_closed_form",
    "egl_monte_carlo",
    "eglpp",
)

# strategies that score through a bootstrap ensemble
_ENSEMBLE_STRATEGIES = ("predictive_variance", "egl_cai", "egl_closed_form", "egl_monte_carlo")

# model kinds each strategy can score with
_SUPPORTED_KINDS = {
    "random": ("linear", "mlp", "gp"),
    "predictive_variance": ("linear", "mlp", "gp"),
    "egl_cai": ("linear",),
    "egl_monte_carlo": ("linear",),
    "egl_closed_form": ("linear", "mlp"),
    "eglpp": ("linear", "mlp"),
}

CURVE_HEADER = ["strategy", "seed", "cycle", "labelled_count", "rmse"]


# -- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "mlp"
    hidden: tuple = (24,)
    activation: str = "tanh"
    epochs: int = 150
    learning_rate: float = 0.02
    momentum: float = 0.9
    batch_size: int = 32
    aleatoric: bool = False
    variance_floor: float = 1e-12
    lengthscale: float = 1.0
    signal_variance: float = 1.0
    noise_variance: float = 0.1

    _KEYS_BY_KIND = {
        "linear": {"variance_floor"},
        "mlp": {
            "hidden",
            "activation",
            "epochs",
            "learning_rate",
            "momentum",
            "batch_size",
            "aleatoric",
            "variance_floor",
        },
        "gp": {"lengthscale", "signal_variance", "noise_variance"},
    }

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise InvalidConfigError("model spec must be an object")
        kind = raw.get("kind", "mlp")
        if kind not in cls._KEYS_BY_KIND:
            raise InvalidConfigError(f"unknown model kind {kind!r}")
        unknown = set(raw) - cls._KEYS_BY_KIND[kind] - {"kind"}
        if unknown:
            raise InvalidConfigError(
                f"unknown model keys for kind {kind!r}: {sorted(unknown)}"
            )
        values = dict(raw)
        if "hidden" in values:
            values["hidden"] = tuple(int(h) for h in values["hidden"])
        return cls(**values)


def build_model(spec: ModelSpec, seed=0):
    """Instantiate the configured estimator, seeding it when stochastic."""
    if spec.kind == "linear":
        return OlsLinearModel(variance_floor=spec.variance_floor)
    if spec.kind == "mlp":
        return MlpRegressor(
            hidden_layer_sizes=tuple(spec.hidden),
            activation=spec.activation,
            aleatoric=spec.aleatoric,
            epochs=spec.epochs,
            learning_rate=spec.learning_rate,
            momentum=spec.momentum,
            batch_size=spec.batch_size,
            seed=seed,
            variance_floor=spec.variance_floor,
        )
    if spec.kind == "gp":
        return GpRegressor(
            lengthscale=spec.lengthscale,
            signal_variance=spec.signal_variance,
            noise_variance=spec.noise_variance,
        )
    raise InvalidConfigError(f"unknown model kind {spec.kind!r}")


@dataclass(frozen=True)
class SimulationConfig:
    strategies: tuple = ("random",)
    cycles: int = 5
    budget_per_cycle: int = 100
    initial_labelled: int = 100
    seeds: tuple = (0, 1, 2, 3, 4)
    synthetic: SyntheticSpec | None = field(default_factory=SyntheticSpec)
    dataset: str | None = None
    model: ModelSpec = field(default_factory=ModelSpec)
    ensemble_size: int = 8
    eglpp: EglppConfig = field(default_factory=EglppConfig)
    mc_samples: int = 512
    test_fraction: float = 0.2
    split_seed: int = 0

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise InvalidConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        values = dict(raw)
        if "strategies" in values:
            strategies = values["strategies"]
            if isinstance(strategies, str):
                strategies = [strategies]
            values["strategies"] = tuple(strategies)
        if "seeds" in values:
            values["seeds"] = tuple(int(s) for s in values["seeds"])
        if "synthetic" in values and values["synthetic"] is not None:
            values["synthetic"] = _dataclass_from_dict(
                SyntheticSpec, values["synthetic"], "synthetic"
            )
        if "model" in values:
            values["model"] = ModelSpec.from_dict(values["model"])
        if "eglpp" in values:
            values["eglpp"] = _dataclass_from_dict(EglppConfig, values["eglpp"], "eglpp")
        if "dataset" in values and values["dataset"] is not None and "synthetic" not in values:
            values["synthetic"] = None
        config = cls(**values)
        config.validate()
        return config

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def validate(self):
        if not self.strategies:
            raise InvalidConfigError("at least one strategy required")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown:
            raise InvalidConfigError(f"unknown strategies: {unknown}")
        if len(set(self.strategies)) != len(self.strategies):
            raise InvalidConfigError("duplicate strategies")
        if (self.dataset is None) == (self.synthetic is None):
            raise InvalidConfigError("exactly one of 'dataset' or 'synthetic' required")
        if self.cycles < 0:
            raise InvalidConfigError("cycles must be >= 0")
        if self.budget_per_cycle < 1 or self.initial_labelled < 1:
            raise InvalidConfigError("budget_per_cycle and initial_labelled must be >= 1")
        if not self.seeds:
            raise InvalidConfigError("at least one seed required")
        if self.ensemble_size < 1 or self.mc_samples < 1:
            raise InvalidConfigError("ensemble_size and mc_samples must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise InvalidConfigError("test_fraction must lie in (0, 1)")
        if self.synthetic is not None:
            self.synthetic.validate()
        for strategy in self.strategies:
            if self.model.kind not in _SUPPORTED_KINDS[strategy]:
                raise InvalidConfigError(
                    f"strategy {strategy!r} does not support model kind "
                    f"{self.model.kind!r}"
                )
        return self


def _dataclass_from_dict(cls, raw, label):
    if not isinstance(raw, dict):
        raise InvalidConfigError(f"{label} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfigError(f"unknown {label} keys: {sorted(unknown)}")
    return cls(**raw)


# -- pool state ------------------------------------------------------------


@dataclass(frozen=True)
class PoolState:
    """Labelled/unlabelled split plus the selection history across cycles."""

    labelled: Dataset
    unlabelled: Dataset
    cycle: int = 0
    history: tuple = ()

    def __post_init__(self):
        overlap = set(map(int, self.labelled.ids)) & set(map(int, self.unlabelled.ids))
        if overlap:
            raise ValueError(f"pools overlap on ids {sorted(overlap)[:5]}...")

    def move(self, selected_ids):
        """Advance one cycle, moving the selected ids to the labelled pool."""
        selected = [int(i) for i in selected_ids]
        if len(set(selected)) != len(selected):
            raise ValueError("duplicate ids in selection")
        if len(selected) > len(self.unlabelled):
            raise BudgetExceedsPoolError(
                f"selected {len(selected)} from a pool of {len(self.unlabelled)}"
            )
        moved = self.unlabelled.take_ids(selected)
        return PoolState(
            labelled=self.labelled.concat(moved),
            unlabelled=self.unlabelled.drop_ids(selected),
            cycle=self.cycle + 1,
            history=(*self.history, (self.cycle + 1, tuple(selected))),
        )


# -- scoring dispatch -------------------------------------------------------


def score_candidates(
    strategy,
    scorer_model,
    labelled: Dataset,
    unlabelled: Dataset,
    *,
    model_spec: ModelSpec,
    ensemble_size=8,
    mc_samples=512,
    eglpp_config=None,
    seed=0,
    cycle=0,
):
    """Score every unlabelled candidate with the given strategy.

    Returns ``(scores, components)`` where ``scores`` aligns with
    ``unlabelled.ids`` and ``components`` is the per-candidate
    :class:`~egl_lab.egl.EglScore` list for the closed-form strategies,
    else None.
    """
    if strategy not in STRATEGIES:
        raise InvalidConfigError(f"unknown strategy {strategy!r}")
    if model_spec.kind not in _SUPPORTED_KINDS[strategy]:
        raise InvalidConfigError(
            f"strategy {strategy!r} does not support model kind {model_spec.kind!r}"
        )
    if strategy == "random":
        rng = rng_from_keys(seed, cycle, strategy, "select")
        return rng.random(len(unlabelled)), None
    if strategy == "eglpp":
        scores = eglpp_scores(
            scorer_model, labelled, unlabelled, eglpp_config or EglppConfig()
        )
        return scores, None

    ens_seed = int(rng_from_keys(seed, cycle, strategy, "ensemble").integers(2**31))
    ensemble = BootstrapEnsemble(
        template=build_model(model_spec, seed=0),
        n_members=ensemble_size,
        seed=ens_seed,
        full_model=scorer_model,
    ).fit(labelled.X, labelled.y)

    if strategy == "predictive_variance":
        return ensemble.predictive_variance(unlabelled.X), None
    if strategy == "egl_cai":
        return score_cai(ensemble, unlabelled.X), None
    if strategy == "egl_monte_carlo":
        mc_seed = int(rng_from_keys(seed, cycle, strategy, "mc").integers(2**31))
        scores = np.array(
            [
                score_monte_carlo(ensemble, x, mc_samples, mc_seed, candidate_id=int(i))
                for i, x in zip(unlabelled.ids, unlabelled.X)
            ]
        )
        return scores, None
    # egl_closed_form: linear gradient factor, or the network's own gradients
    if model_spec.kind == "linear":
        components = score_closed_form_linear(ensemble, unlabelled.X, ids=unlabelled.ids)
    else:
        grads = np.array(
            [prediction_grad_norm_sq(scorer_model, x) for x in unlabelled.X]
        )
        components = score_closed_form_nonlinear(
            ensemble, unlabelled.X, grads, ids=unlabelled.ids
        )
    return np.array([c.score for c in components]), components


# -- simulation ------------------------------------------------------------


def rmse(model, test: Dataset):
    """Root mean squared prediction error on a held-out set."""
    if len(test) == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    residuals = model.predict(test.X) - test.y
    return float(np.sqrt(np.mean(residuals**2)))


def _fit_cycle_model(config: SimulationConfig, labelled: Dataset, seed, cycle):
    model_seed = int(rng_from_keys(seed, cycle, "model-init").integers(2**31))
    return build_model(config.model, seed=model_seed).fit(labelled.X, labelled.y)


def run_cycle(state: PoolState, strategy, config: SimulationConfig, seed, scorer_model=None):
    """One select-annotate step: score the pool, move the top-budget ids.

    ``scorer_model`` is the model fitted on the current labelled pool; if
    omitted it is trained here (the simulation loop passes the cached one).
    """
    budget = config.budget_per_cycle
    if budget > len(state.unlabelled):
        raise BudgetExceedsPoolError(
            f"budget {budget} exceeds unlabelled pool of {len(state.unlabelled)}"
        )
    if scorer_model is None:
        scorer_model = _fit_cycle_model(config, state.labelled, seed, state.cycle)
    scores, components = score_candidates(
        strategy,
        scorer_model,
        state.labelled,
        state.unlabelled,
        model_spec=config.model,
        ensemble_size=config.ensemble_size,
        mc_samples=config.mc_samples,
        eglpp_config=config.eglpp,
        seed=seed,
        cycle=state.cycle,
    )
    if components is not None:
        selected = select_batch(components, budget)
    else:
        selected = select_batch(scores, budget, ids=state.unlabelled.ids)
    return state.move(selected)


def load_dataset(config: SimulationConfig) -> Dataset:
    if config.dataset is not None:
        return Dataset.from_csv(config.dataset)
    return generate_synthetic(config.synthetic)


def split_test(data: Dataset, config: SimulationConfig):
    """Fixed held-out split; returns (test, train_pool) in stable id order."""
    n = len(data)
    n_test = int(round(config.test_fraction * n))
    if n_test < 1 or n - n_test < 1:
        raise InvalidConfigError("test_fraction leaves an empty split")
    perm = rng_from_keys(config.split_seed, "test-split").permutation(n)
    return data.take(np.sort(perm[:n_test])), data.take(np.sort(perm[n_test:]))


def run_simulation(config: SimulationConfig):
    """Full learning-curve set over every (strategy, seed) pair."""
    config.validate()
    data = load_dataset(config)
    test, train_pool = split_test(data, config)
    needed = config.initial_labelled + config.cycles * config.budget_per_cycle
    if needed > len(train_pool):
        raise InvalidConfigError(
            f"initial_labelled + cycles*budget = {needed} exceeds the "
            f"training pool of {len(train_pool)}"
        )
    records = []
    for seed in config.seeds:
        perm = rng_from_keys(seed, "init-split").permutation(len(train_pool))
        labelled = train_pool.take(perm[: config.initial_labelled])
        unlabelled = train_pool.take(perm[config.initial_labelled :])
        base_model = _fit_cycle_model(config, labelled, seed, cycle=0)
        base_rmse = rmse(base_model, test)
        for strategy in config.strategies:
            state = PoolState(labelled=labelled, unlabelled=unlabelled)
            model = base_model
            records.append(
                CurveRecord(strategy, int(seed), 0, len(state.labelled), base_rmse)
            )
            for cycle in range(1, config.cycles + 1):
                state = run_cycle(state, strategy, config, seed, scorer_model=model)
                model = _fit_cycle_model(config, state.labelled, seed, cycle)
                records.append(
                    CurveRecord(
                        strategy, int(seed), cycle, len(state.labelled), rmse(model, test)
                    )
                )
    return LearningCurve(records)


# -- learning curves ---------------------------------------------------------


@dataclass(frozen=True)
class CurveRecord:
    strategy: str
    seed: int
    cycle: int
    labelled_count: int
    rmse: float


class LearningCurve:
    """Per-(strategy, seed, cycle) metric records with CSV/summary output."""

    def __init__(self, records):
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    def strategies(self):
        seen = dict.fromkeys(r.strategy for r in self.records)
        return list(seen)

    def seeds(self):
        return sorted({r.seed for r in self.records})

    def cycles(self):
        return sorted({r.cycle for r in self.records})

    def rmse_by_seed(self, strategy, cycle):
        """Per-seed RMSE vector at one cycle, ordered by seed."""
        rows = {
            r.seed: r.rmse
            for r in self.records
            if r.strategy == strategy and r.cycle == cycle
        }
        return np.array([rows[s] for s in sorted(rows)])

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CURVE_HEADER)
            for r in self.records:
                writer.writerow(
                    [r.strategy, r.seed, r.cycle, r.labelled_count, repr(float(r.rmse))]
                )

    @classmethod
    def from_csv(cls, path):
        records = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CURVE_HEADER:
                raise ValueError(f"{path}: unexpected curve header {header}")
            for row in reader:
                records.append(
                    CurveRecord(row[0], int(row[1]), int(row[2]), int(row[3]), float(row[4]))
                )
        return cls(records)

    def summary(self):
        """Per-cycle mean/sd per strategy plus pairwise one-tailed p-values.

        ``p_vs[a][b]`` is the p-value for "a's RMSE exceeds b's" (paired by
        seed), so a small value means strategy ``b`` significantly
        outperforms ``a``.
        """
        strategies = self.strategies()
        per_cycle = []
        for cycle in self.cycles():
            stats = {}
            p_vs = {}
            labelled_count = None
            for strat in strategies:
                values = self.rmse_by_seed(strat, cycle)
                if values.size == 0:
                    continue
                counts = {
                    r.labelled_count
                    for r in self.records
                    if r.strategy == strat and r.cycle == cycle
                }
                labelled_count = min(counts)
                stats[strat] = {
                    "mean_rmse": float(np.mean(values)),
                    "sd_rmse": float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
                }
                if values.size > 1:
                    p_vs[strat] = {
                        other: paired_t_test(values, self.rmse_by_seed(other, cycle)).p_one_tailed
                        for other in strategies
                        if other != strat and self.rmse_by_seed(other, cycle).size == values.size
                    }
            per_cycle.append(
                {
                    "cycle": cycle,
                    "labelled_count": labelled_count,
                    "rmse": stats,
                    "p_vs": p_vs,
                }
            )
        return {
            "strategies": strategies,
            "seeds": self.seeds(),
            "per_cycle": per_cycle,
        }

    def summary_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
