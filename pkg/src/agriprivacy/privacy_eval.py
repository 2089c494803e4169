"""Membership-inference power, classifier utility and epsilon sweeps."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import classify
from ._rng import derive_rng
from .clustering import kmeans
from .data_model import (
    ClusterSpec,
    apply_standardizer,
    fit_standardizer,
    generate_synthetic_market,
    partition,
)
from .ldp import NoisyProjection, allocate_budget, compute_sensitivity, perturb
from .pca import ProjectedMatrix, fit_pca, project


class EvaluationError(ValueError):
    pass


@dataclass
class PowerResult:
    threshold: float
    fpr_target: float
    power: float
    control_distances: np.ndarray
    case_distances: np.ndarray

    @property
    def realized_fpr(self) -> float:
        return float(np.mean(self.control_distances < self.threshold))


def min_distances(queries: np.ndarray, reference: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Euclidean distance from each query row to its nearest reference row."""
    queries = np.asarray(queries, dtype=float)
    reference = np.asarray(reference, dtype=float)
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], chunk):
        q = queries[start:start + chunk]
        # accumulate per coordinate; exact differences keep self-matches at distance 0
        sq = np.zeros((q.shape[0], reference.shape[0]))
        for j in range(reference.shape[1]):
            sq += np.subtract.outer(q[:, j], reference[:, j]) ** 2
        out[start:start + chunk] = np.sqrt(sq.min(axis=1))
    return out


def membership_power(shared: ProjectedMatrix, case_group: ProjectedMatrix, control_group: ProjectedMatrix,
                     fpr: float = 0.05) -> PowerResult:
    """Distance attack: a row is called a member when its nearest shared row is closer than the threshold.

    The threshold is the ``floor(fpr * m)``-th smallest control distance
    (0-based), the largest value that still flags at most ``floor(fpr * m)``
    of the ``m`` controls.
    """
    for name, g in (("shared", shared), ("case", case_group), ("control", control_group)):
        if g.n == 0:
            raise EvaluationError(f"empty {name} group")
    if not (shared.r == case_group.r == control_group.r):
        raise EvaluationError("dimension mismatch between shared, case and control groups")
    if not 0 < fpr < 1:
        raise EvaluationError(f"fpr must lie in (0, 1), got {fpr}")
    control = np.sort(min_distances(control_group.scores, shared.scores))
    case = np.sort(min_distances(case_group.scores, shared.scores))
    q = math.floor(fpr * control.size)
    threshold = float(control[q])
    power = float(np.mean(case < threshold))
    result = PowerResult(threshold, fpr, power, control, case)
    assert result.realized_fpr <= fpr
    return result


def cluster_labels(noise_free: ProjectedMatrix, k: int = 2, seed: int = 0) -> np.ndarray:
    return kmeans(noise_free.scores, k, seed=seed).labels


def utility_accuracy(kind: str, noise_free: ProjectedMatrix, noisy: ProjectedMatrix, k: int = 2, seed: int = 0,
                     hyper: classify.Hyperparameters | None = None) -> float:
    """Train on noise-free rows with their k-means labels, score on the noisy rows."""
    if noise_free.pseudonyms != noisy.pseudonyms:
        raise EvaluationError("noise-free and noisy projections must share pseudonyms and order")
    if k != 2:
        raise EvaluationError("utility is defined for binary labels only (k = 2)")
    labels = cluster_labels(noise_free, k, seed)
    model = classify.train(kind, classify.LabeledDataset(noise_free.scores, labels), hyper, seed)
    return classify.accuracy(classify.predict(model, noisy.scores), labels)


CSV_COLUMNS = {
    classify.LOGISTIC: "accuracy_logistic",
    classify.NAIVE_BAYES: "accuracy_nb",
    classify.LINEAR_SVM: "accuracy_svm",
}

# Two vendor profiles over (miles from market, sales, #visitors) with distinct
# vendor-type mixes. With 120 rows split three ways the default epsilon grid
# runs power from near the FPR up to 1.
STANDARD_CLUSTERS = (
    ClusterSpec((20.0, 250.0, 120.0), 35.0, 1.0, (0.8, 0.1, 0.1, 0.5, 0.2, 0.3, 0.1, 0.1, 0.1)),
    ClusterSpec((45.0, 420.0, 60.0), 35.0, 1.0, (0.1, 0.4, 0.3, 0.1, 0.2, 0.1, 0.6, 0.6, 0.4)),
)


@dataclass
class SweepConfig:
    epsilons: list = field(default_factory=lambda: [10.0, 25.0, 50.0, 100.0, 500.0, 1000.0])
    kinds: list = field(default_factory=lambda: list(classify.KINDS))
    seeds: int = 5
    master_seed: int = 0
    fpr: float = 0.05
    n_rows: int = 120
    parts: int = 3
    components: int = 2
    clusters: list = field(default_factory=lambda: list(STANDARD_CLUSTERS))
    case_size: int | None = None

    def __post_init__(self):
        self.epsilons = [float(e) for e in self.epsilons]
        self.clusters = [c if isinstance(c, ClusterSpec) else ClusterSpec.from_dict(c) for c in self.clusters]
        self.validate()

    def validate(self):
        eps = self.epsilons
        if len(eps) < 1 or any(not (e > 0 and math.isfinite(e)) for e in eps):
            raise EvaluationError("epsilon list must hold positive finite values")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise EvaluationError("epsilon list must be strictly ascending")
        for k in self.kinds:
            if k not in classify.KINDS:
                raise EvaluationError(f"unknown classifier kind {k!r}")
        if self.seeds < 1:
            raise EvaluationError("need at least one seed")
        if not 0 < self.fpr < 1:
            raise EvaluationError("fpr must lie in (0, 1)")
        if self.parts < 2 or self.n_rows < 3 * self.parts:
            raise EvaluationError("need at least 2 parts and 3 rows per part")

    def to_dict(self) -> dict:
        return {
            "epsilons": self.epsilons,
            "kinds": list(self.kinds),
            "seeds": self.seeds,
            "master_seed": self.master_seed,
            "fpr": self.fpr,
            "n_rows": self.n_rows,
            "parts": self.parts,
            "components": self.components,
            "clusters": [c.to_dict() for c in self.clusters],
            "case_size": self.case_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise EvaluationError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SweepResult:
    epsilons: list
    power_values: list
    accuracy_by_kind: dict
    optimal_epsilon_by_kind: dict = field(default_factory=dict)
    power_by_seed: list = field(default_factory=list)  # [epsilon][seed]
    accuracy_by_seed: dict = field(default_factory=dict)  # kind -> [epsilon][seed]

    def median_power(self) -> list:
        return [float(np.median(row)) for row in self.power_by_seed]

    def median_accuracy(self, kind: str) -> list:
        return [float(np.median(row)) for row in self.accuracy_by_seed[kind]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "power"] + list(CSV_COLUMNS.values()))
        for i, eps in enumerate(self.epsilons):
            row = [repr(eps), repr(self.power_values[i])]
            for kind in CSV_COLUMNS:
                vals = self.accuracy_by_kind.get(kind)
                row.append(repr(vals[i]) if vals is not None else "")
            w.writerow(row)
        return buf.getvalue()


@dataclass
class _SeedSetup:
    markets: list  # ProjectedMatrix per market, pre-noise
    noise_free: ProjectedMatrix
    sensitivity: object
    case: ProjectedMatrix
    control: ProjectedMatrix
    models: dict


def _setup_seed(config: SweepConfig, j: int) -> _SeedSetup:
    data_seed = int(derive_rng(config.master_seed, "sweep-data", j).integers(2**31))
    table = generate_synthetic_market(config.n_rows, config.clusters, data_seed)
    public, *market_tables = partition(table, config.parts, data_seed)
    params = fit_standardizer(public)
    model = fit_pca(apply_standardizer(params, public), config.components)
    reference = project(model, apply_standardizer(params, public))
    sensitivity = compute_sensitivity(reference)
    markets = [project(model, apply_standardizer(params, t)) for t in market_tables]
    noise_free = ProjectedMatrix(
        [p for m in markets for p in m.pseudonyms], np.vstack([m.scores for m in markets])
    )
    size = config.case_size or min(reference.n, noise_free.n)
    if size > min(reference.n, noise_free.n):
        raise EvaluationError(f"case_size {size} exceeds available rows")
    pick = derive_rng(config.master_seed, "sweep-groups", j)
    case = noise_free.take(sorted(pick.choice(noise_free.n, size, replace=False)))
    control = reference.take(sorted(pick.choice(reference.n, size, replace=False)))
    labels = cluster_labels(noise_free, 2, data_seed)
    models = {}
    for kind in config.kinds:
        models[kind] = classify.train(kind, classify.LabeledDataset(noise_free.scores, labels), seed=data_seed)
    return _SeedSetup(markets, noise_free, sensitivity, case, control, {"labels": labels, **models})


def epsilon_sweep(config: SweepConfig) -> SweepResult:
    """Power and per-classifier accuracy for every epsilon, per seed and averaged.

    Seed ``j`` fixes the synthetic data split; the Laplace noise for epsilon
    ``i``, seed ``j`` and market ``m`` comes from stream
    ``(master_seed, i, j, m)``, so results do not depend on evaluation order.
    """
    config.validate()
    n_eps = len(config.epsilons)
    power = [[0.0] * config.seeds for _ in range(n_eps)]
    acc = {k: [[0.0] * config.seeds for _ in range(n_eps)] for k in config.kinds}
    for j in range(config.seeds):
        setup = _setup_seed(config, j)
        labels = setup.models["labels"]
        for i, eps in enumerate(config.epsilons):
            budget = allocate_budget(eps, setup.sensitivity)
            noisy_parts = [
                perturb(m, setup.sensitivity, budget, derive_rng(config.master_seed, "sweep-noise", i, j, mi))
                for mi, m in enumerate(setup.markets)
            ]
            shared = NoisyProjection(setup.noise_free.pseudonyms, np.vstack([p.scores for p in noisy_parts]))
            power[i][j] = membership_power(shared, setup.case, setup.control, config.fpr).power
            for kind in config.kinds:
                pred = classify.predict(setup.models[kind], shared.scores)
                acc[kind][i][j] = classify.accuracy(pred, labels)
    result = SweepResult(
        epsilons=list(config.epsilons),
        power_values=[float(np.mean(row)) for row in power],
        accuracy_by_kind={k: [float(np.mean(row)) for row in acc[k]] for k in config.kinds},
        power_by_seed=power,
        accuracy_by_seed=acc,
    )
    return result


@dataclass
class OptimalEpsilon:
    epsilon: float | None
    frontier: list = field(default_factory=list)  # (epsilon, power, accuracy) non-dominated points

    @property
    def feasible(self) -> bool:
        return self.epsilon is not None


def pareto_frontier(epsilons, power, accuracy) -> list:
    """Points not dominated by another point with lower-or-equal power and higher-or-equal accuracy."""
    pts = list(zip(epsilons, power, accuracy))
    front = []
    for e, p, a in pts:
        dominated = any(
            (p2 <= p and a2 >= a) and (p2 < p or a2 > a) for _, p2, a2 in pts
        )
        if not dominated:
            front.append((e, p, a))
    return front


def select_optimal_epsilon(sweep: SweepResult, power_max: float = 0.3, accuracy_min: float = 0.8) -> dict:
    """Smallest epsilon per classifier kind with low enough power and high enough accuracy."""
    if not sweep.epsilons:
        raise EvaluationError("empty sweep")
    if not (0 < power_max < 1 and 0 < accuracy_min < 1):
        raise EvaluationError("thresholds must lie in (0, 1)")
    out = {}
    for kind, accs in sweep.accuracy_by_kind.items():
        chosen = None
        for eps, p, a in zip(sweep.epsilons, sweep.power_values, accs):
            if p <= power_max and a >= accuracy_min:
                chosen = eps
                break
        frontier = [] if chosen is not None else pareto_frontier(sweep.epsilons, sweep.power_values, accs)
        out[kind] = OptimalEpsilon(chosen, frontier)
    sweep.optimal_epsilon_by_kind = {k: v.epsilon for k, v in out.items()}
    return out
