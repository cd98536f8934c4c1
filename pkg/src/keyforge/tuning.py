"""Budgeted hyperparameter search: pure random and density-ratio SMBO.

The SMBO strategy warm-starts with ceil(budget/5) random trials, then splits
the ledger at the 0.25 quantile into good and bad sets and proposes the
candidate (out of 24 per step) maximizing the ratio of factored kernel
densities fitted to each set. Continuous and integer dimensions use Gaussian
kernels with Silverman bandwidths (log-space for log-uniform ranges);
categorical dimensions use add-one smoothed frequencies.

Per-trial seeds derive from (master seed, trial index), so evaluating trials
concurrently could never change results.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError

WARM_FRACTION = 5  # warm start = ceil(budget / 5) random trials
GOOD_QUANTILE = 0.25
N_CANDIDATES = 24
MIN_BANDWIDTH = 1e-12


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int  # inclusive

    def validate(self, name):
        if self.hi < self.lo:
            raise ConfigError("dimension %r: empty integer range [%d, %d]" % (name, self.lo, self.hi))


@dataclass(frozen=True)
class RealRange:
    lo: float
    hi: float
    log: bool = False

    def validate(self, name):
        if self.hi < self.lo:
            raise ConfigError("dimension %r: empty real range" % name)
        if self.log and self.lo <= 0:
            raise ConfigError("dimension %r: log-uniform bounds must be positive" % name)


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def validate(self, name):
        if len(self.choices) == 0:
            raise ConfigError("dimension %r: no choices" % name)


Dimension = IntRange | RealRange | Categorical


@dataclass(frozen=True)
class SearchSpace:
    dims: dict[str, Dimension]

    def __post_init__(self):
        for name, dim in self.dims.items():
            dim.validate(name)


@dataclass
class TrialRecord:
    index: int
    params: dict
    score: float
    seconds: float
    seed: int
    failed: bool = False


def _trial_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, index)))


def _trial_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((master_seed, index)).generate_state(1)[0])


def sample(space: SearchSpace, seed_or_rng) -> dict:
    """Draw one configuration, each dimension independent; deterministic per seed."""
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    out = {}
    for name, dim in space.dims.items():
        if isinstance(dim, IntRange):
            out[name] = int(rng.integers(dim.lo, dim.hi + 1))
        elif isinstance(dim, RealRange):
            if dim.log:
                out[name] = float(np.exp(rng.uniform(np.log(dim.lo), np.log(dim.hi))))
            else:
                out[name] = float(rng.uniform(dim.lo, dim.hi))
        else:
            out[name] = dim.choices[int(rng.integers(len(dim.choices)))]
    return out


def _silverman(values: np.ndarray, span: float) -> float:
    bw = 1.06 * values.std() * len(values) ** (-0.2)
    if bw <= 0:
        bw = max(1e-3 * span, MIN_BANDWIDTH)
    return bw


class _DimModel:
    """Per-dimension kernel density (or smoothed frequencies) over one trial set."""

    def __init__(self, dim: Dimension, values: list):
        self.dim = dim
        if isinstance(dim, Categorical):
            n = len(values)
            k = len(dim.choices)
            counts = np.array([sum(1 for v in values if v == c) for c in dim.choices], float)
            self.probs = (counts + 1.0) / (n + k)
        else:
            pts = np.array([float(v) for v in values])
            if isinstance(dim, RealRange) and dim.log:
                pts = np.log(pts)
                span = np.log(dim.hi) - np.log(dim.lo)
            elif isinstance(dim, RealRange):
                span = dim.hi - dim.lo
            else:
                span = float(dim.hi - dim.lo)
            self.points = pts
            self.bw = _silverman(pts, max(span, MIN_BANDWIDTH))

    def _transform(self, v) -> float:
        if isinstance(self.dim, RealRange) and self.dim.log:
            return math.log(float(v))
        return float(v)

    def log_density(self, v) -> float:
        if isinstance(self.dim, Categorical):
            return math.log(self.probs[self.dim.choices.index(v)])
        x = self._transform(v)
        z = (x - self.points) / self.bw
        dens = np.exp(-0.5 * z**2).mean() / (self.bw * math.sqrt(2 * math.pi))
        return math.log(max(dens, 1e-300))

    def draw(self, rng: np.random.Generator):
        dim = self.dim
        if isinstance(dim, Categorical):
            return dim.choices[int(rng.choice(len(dim.choices), p=self.probs))]
        center = self.points[int(rng.integers(len(self.points)))]
        x = center + rng.normal(0.0, self.bw)
        if isinstance(dim, RealRange):
            if dim.log:
                x = min(max(x, math.log(dim.lo)), math.log(dim.hi))
                return float(math.exp(x))
            return float(min(max(x, dim.lo), dim.hi))
        return int(min(max(round(x), dim.lo), dim.hi))


def _propose_smbo(space: SearchSpace, ledger: list[TrialRecord], rng: np.random.Generator) -> dict:
    ranked = sorted(ledger, key=lambda t: -t.score)
    n_good = max(1, math.ceil(GOOD_QUANTILE * len(ranked)))
    good, bad = ranked[:n_good], ranked[n_good:]
    if not bad:
        return sample(space, rng)
    good_models = {k: _DimModel(d, [t.params[k] for t in good]) for k, d in space.dims.items()}
    bad_models = {k: _DimModel(d, [t.params[k] for t in bad]) for k, d in space.dims.items()}
    best_params = None
    best_ratio = -np.inf
    for _ in range(N_CANDIDATES):
        cand = {k: good_models[k].draw(rng) for k in space.dims}
        ratio = sum(
            good_models[k].log_density(cand[k]) - bad_models[k].log_density(cand[k])
            for k in space.dims
        )
        if ratio > best_ratio:
            best_ratio = ratio
            best_params = cand
    return best_params


def tune(
    space: SearchSpace,
    objective: Callable[[dict, int], float],
    budget: int,
    method: str = "smbo",
    seed: int = 0,
) -> tuple[dict, list[TrialRecord]]:
    """Run exactly ``budget`` objective evaluations; return (best params, ledger).

    ``objective(params, trial_seed)`` returns a score to maximize (validation
    accuracy by convention). A raised exception marks the trial failed with
    score 0 and the search continues. Best-of-ledger ties go to the earliest
    trial.
    """
    if budget < 1:
        raise ConfigError("budget must be >= 1, got %d" % budget)
    if method not in ("random", "smbo"):
        raise ConfigError("method must be 'random' or 'smbo', got %r" % method)
    warm = math.ceil(budget / WARM_FRACTION)
    ledger: list[TrialRecord] = []
    for i in range(budget):
        rng = _trial_rng(seed, i)
        if method == "random" or i < warm:
            params = sample(space, rng)
        else:
            params = _propose_smbo(space, ledger, rng)
        trial_seed = _trial_seed(seed, i)
        t0 = time.perf_counter()
        try:
            score = float(objective(params, trial_seed))
            failed = not np.isfinite(score)
            if failed:
                score = 0.0
        except Exception:
            score = 0.0
            failed = True
        ledger.append(TrialRecord(i, params, score, time.perf_counter() - t0, trial_seed, failed))
    best = max(ledger, key=lambda t: (t.score, -t.index))
    return best.params, ledger


def write_ledger(ledger: list[TrialRecord], path: str | Path, command: str | None = None) -> None:
    """CSV ledger: trial,params_json,score,seconds."""
    with open(path, "w", newline="") as fh:
        if command:
            fh.write("# command: %s\n" % command)
        writer = csv.writer(fh)
        writer.writerow(["trial", "params_json", "score", "seconds"])
        for t in ledger:
            writer.writerow([t.index, json.dumps(t.params, sort_keys=True), repr(t.score), "%.6f" % t.seconds])


def parse_space(spec: dict) -> SearchSpace:
    """Build a SearchSpace from a JSON-shaped dict (the CLI space-file format).

    Each entry is ``{"type": "int"|"real"|"categorical", ...}`` with lo/hi
    (plus optional log) for ranges or choices for categoricals.
    """
    dims: dict[str, Dimension] = {}
    for name, d in spec.items():
        kind = d.get("type")
        if kind == "int":
            dims[name] = IntRange(int(d["lo"]), int(d["hi"]))
        elif kind == "real":
            dims[name] = RealRange(float(d["lo"]), float(d["hi"]), bool(d.get("log", False)))
        elif kind == "categorical":
            dims[name] = Categorical(tuple(d["choices"]))
        else:
            raise ConfigError("dimension %r: unknown type %r" % (name, kind))
    return SearchSpace(dims)


def load_space_file(path: str | Path) -> SearchSpace:
    with open(path) as fh:
        return parse_space(json.load(fh))


# Built-in spaces for the CLI, mirroring the published search tables for k-NN
# and random forest; the boosted-tree and MLP spaces are this toolkit's own.
DEFAULT_SPACES: dict[str, SearchSpace] = {
    "knn": SearchSpace({
        "n_neighbors": IntRange(5, 50),
        "weight": Categorical(("uniform", "distance")),
        "p": Categorical((1, 2, 3)),
    }),
    "rf": SearchSpace({
        "n_estimators": IntRange(100, 1000),
        "max_depth": Categorical((None, 5, 10, 15, 20, 30, 35, 40)),
        "min_samples_leaf": IntRange(1, 10),
        "min_samples_split": IntRange(2, 5),
    }),
    "gbt": SearchSpace({
        "learning_rate": RealRange(0.01, 0.5, log=True),
        "max_depth": IntRange(1, 6),
        "min_child_weight": RealRange(0.1, 5.0),
    }),
    "mlp": SearchSpace({
        "learning_rate": RealRange(1e-4, 1e-2, log=True),
        "dropout": RealRange(0.0, 0.5),
    }),
}


def model_objective(family: str, train, features: str = "All", val_fraction: float = 0.2,
                    split_seed: int = 0, base_config=None, overrides: dict | None = None):
    """Objective factory: validation accuracy of ``family`` on a fixed
    seeded split of the training partition (the test set is never touched).

    Sampled params are merged over the family's default config; the trial
    seed becomes the model seed so stochastic learners stay reproducible.
    """
    from . import dataset as kd
    from .learners import CONFIG_TYPES, fit_model, predict_indices

    view = kd.select_features(train, features)
    subtrain, val = kd.split(view, kd.SplitSpec(1.0 - val_fraction, seed=split_seed))
    base = base_config if base_config is not None else CONFIG_TYPES[family]()

    def objective(params: dict, trial_seed: int) -> float:
        merged = dict(params)
        if overrides:
            merged.update(overrides)
        cfg = replace(base, **merged)
        if "seed" in {f.name for f in cfg.__dataclass_fields__.values()}:
            cfg = replace(cfg, seed=trial_seed)
        model = fit_model(family, subtrain, cfg)
        pred = predict_indices(model, val.features)
        return float(np.mean(pred == val.label_indices()))

    return objective
