"""Maximum-likelihood fitting of driver parameters to labelled lane-change decisions.

The choice model is logistic in the net advantage:

    P(change) = 1 / (1 + exp(-k * e_ck))

so the fitted classifier's 0.5 contour is exactly the regret model's
decision boundary e_ck = 0. All seven driver constants and the
temperature k are optimised as logarithms, which keeps them positive.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .regret import (
    DomainError,
    LaneChangeObservation,
    LaneDecision,
    RegretParams,
    decide,
    net_advantage,
    net_advantage_array,
)

CSV_HEADER = ["v_s", "v_c", "v_f", "v_b", "d", "decision"]
PARAM_NAMES = [f.name for f in fields(RegretParams)]
P_CLAMP = 1e-12

# generic starting point for restart 0; later restarts are jittered around it
INITIAL_GUESS = dict(sigma1=1.0, sigma2=0.5, sigma3=1.0, eta1=100.0, beta1=1.0, beta2=1.0, tau_s=2.0, k=1.0)

# sampling box for synthetic observations (v_b is drawn from [v_s, V_B_MAX])
SYNTH_RANGES = dict(v_s=(3.0, 10.0), v_c=(3.0, 10.0), v_f=(8.0, 17.0), d=(0.0, 60.0))
V_B_MAX = 17.0


class DatasetError(ValueError):
    """A dataset row failed to parse or validate; message carries the line number."""


@dataclass(frozen=True)
class DecisionRecord:
    obs: LaneChangeObservation
    label: LaneDecision


@dataclass(frozen=True)
class FitConfig:
    k: float = 1.0  # starting temperature
    learning_rate: float = 0.1
    max_iterations: int = 1000
    restarts: int = 8
    seed: int = 0
    tolerance: float = 1e-9
    fd_step: float = 1e-5
    init_spread: float = 1.0  # std of the log-space jitter for restarts > 0

    def __post_init__(self):
        if self.k <= 0 or self.learning_rate <= 0 or self.tolerance <= 0 or self.fd_step <= 0:
            raise ValueError("k, learning_rate, tolerance and fd_step must be positive")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be >= 1")


@dataclass(frozen=True)
class FitResult:
    params: RegretParams
    k: float
    nll: float
    accuracy: float
    iterations: int
    best_restart: int
    diverged_restarts: int = 0

    def to_json(self) -> str:
        return json.dumps({**self.params.to_dict(), "k": self.k}, indent=2)


class FitError(RuntimeError):
    """Every restart of the optimiser diverged."""


# ---------------------------------------------------------------- I/O


def load_dataset(path) -> list[DecisionRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise DatasetError(f"line 1: expected header {','.join(CSV_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise DatasetError(f"line {line}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row[:5]]
            except ValueError as exc:
                raise DatasetError(f"line {line}: {exc}") from exc
            label = row[5].strip().upper()
            if label not in ("C", "K"):
                raise DatasetError(f"line {line}: decision must be C or K, got {row[5]!r}")
            try:
                obs = LaneChangeObservation(*values)
            except DomainError as exc:
                raise DatasetError(f"line {line}: {exc}") from exc
            records.append(DecisionRecord(obs, LaneDecision(label)))
    return records


def format_record(rec: DecisionRecord) -> list[str]:
    o = rec.obs
    return [repr(o.v_s), repr(o.v_c), repr(o.v_f), repr(o.v_b), repr(o.d), rec.label.value]


def save_dataset(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(format_record(rec))


def save_fit(path, result: FitResult) -> None:
    Path(path).write_text(result.to_json() + "\n")


def load_fit(path) -> tuple[RegretParams, float]:
    data = json.loads(Path(path).read_text())
    return RegretParams.from_dict(data), float(data["k"])


# ---------------------------------------------------------------- model


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def choice_probability(obs: LaneChangeObservation, params: RegretParams, k: float) -> float:
    """Probability that the driver changes lanes."""
    if k <= 0:
        raise DomainError("temperature k must be positive")
    return float(_sigmoid(k * net_advantage(obs, params).e_ck))


def _columns(dataset):
    arr = np.array([[r.obs.v_s, r.obs.v_c, r.obs.v_f, r.obs.v_b, r.obs.d] for r in dataset], dtype=float)
    labels = np.array([r.label is LaneDecision.CHANGE for r in dataset], dtype=float)
    return arr.reshape(-1, 5), labels


LOG_LO, LOG_HI = math.log(P_CLAMP), math.log1p(-P_CLAMP)


def _nll_terms(cols, labels, params: RegretParams, k: float) -> np.ndarray:
    # log-probabilities via logaddexp, clamped in log space to avoid rounding at 1 - 1e-12
    with np.errstate(over="ignore", invalid="ignore"):
        z = k * net_advantage_array(*cols.T, params)
        log_p = np.where(labels > 0.5, -np.logaddexp(0.0, -z), -np.logaddexp(0.0, z))
        return -np.clip(log_p, LOG_LO, LOG_HI)


def negative_log_likelihood(dataset, params: RegretParams, k: float) -> float:
    if len(dataset) == 0:
        raise DomainError("negative log-likelihood of an empty dataset")
    if k <= 0:
        raise DomainError("temperature k must be positive")
    cols, labels = _columns(dataset)
    return float(np.sum(_nll_terms(cols, labels, params, k)))


def evaluate_accuracy(params: RegretParams, dataset) -> float:
    if len(dataset) == 0:
        raise DomainError("accuracy of an empty dataset")
    return sum(decide(r.obs, params) is r.label for r in dataset) / len(dataset)


def generate_synthetic_dataset(truth: RegretParams, n: int, flip_rate: float = 0.0, seed=0) -> list[DecisionRecord]:
    """Uniform observations from :data:`SYNTH_RANGES`, labelled by ``truth``, each flipped w.p. ``flip_rate``."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0.0 <= flip_rate <= 1.0:
        raise ValueError("flip_rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    v_s = rng.uniform(*SYNTH_RANGES["v_s"], size=n)
    v_c = rng.uniform(*SYNTH_RANGES["v_c"], size=n)
    v_f = rng.uniform(*SYNTH_RANGES["v_f"], size=n)
    v_b = rng.uniform(v_s, V_B_MAX)
    d = rng.uniform(*SYNTH_RANGES["d"], size=n)
    flips = rng.random(n) < flip_rate
    out = []
    for i in range(n):
        obs = LaneChangeObservation(float(v_s[i]), float(v_c[i]), float(v_f[i]), float(v_b[i]), float(d[i]))
        label = decide(obs, truth)
        out.append(DecisionRecord(obs, label.flipped() if flips[i] else label))
    return out


# ---------------------------------------------------------------- fitting


def _unpack(theta: np.ndarray) -> tuple[RegretParams, float]:
    values = np.exp(theta)
    return RegretParams(*(float(v) for v in values[:7])), float(values[7])


def _objective(theta, cols, labels) -> float:
    if not np.all(np.isfinite(theta)) or np.any(np.abs(theta) > 700):
        return math.inf
    params, k = _unpack(theta)
    value = float(np.mean(_nll_terms(cols, labels, params, k)))
    return value if math.isfinite(value) else math.inf


def _gradient(theta, cols, labels, h) -> np.ndarray:
    g = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        g[i] = (_objective(up, cols, labels) - _objective(down, cols, labels)) / (2 * h)
    return g


def _descend(theta, cols, labels, cfg: FitConfig):
    """Full-batch gradient descent with backtracking; returns (theta, mean nll, iterations) or None."""
    f = _objective(theta, cols, labels)
    if not math.isfinite(f):
        return None
    lr = cfg.learning_rate
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        g = _gradient(theta, cols, labels, cfg.fd_step)
        if not np.all(np.isfinite(g)):
            return None
        gg = float(g @ g)
        if gg == 0.0:
            break
        while True:
            trial = theta - lr * g
            f_trial = _objective(trial, cols, labels)
            if f_trial <= f - 1e-4 * lr * gg:
                break
            lr *= 0.5
            if lr < 1e-12:
                return theta, f, it
        theta, improvement, f = trial, f - f_trial, f_trial
        lr *= 1.5
        if improvement < cfg.tolerance:
            break
    return theta, f, it


def fit(dataset, cfg: FitConfig = FitConfig()) -> FitResult:
    """Best of ``cfg.restarts`` gradient-descent runs by final likelihood."""
    if len(dataset) == 0:
        raise DomainError("cannot fit an empty dataset")
    cols, labels = _columns(dataset)
    # canonical row order makes the objective bit-identical under permutation
    order = np.lexsort(np.column_stack([cols, labels]).T[::-1])
    cols, labels = cols[order], labels[order]

    base = np.log([INITIAL_GUESS[name] for name in PARAM_NAMES] + [cfg.k])
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    best, diverged = None, 0
    for r, seq in enumerate(seeds):
        theta0 = base.copy()
        if r > 0:
            theta0 += np.random.default_rng(seq).normal(0.0, cfg.init_spread, size=base.size)
        run = _descend(theta0, cols, labels, cfg)
        if run is None:
            diverged += 1
            continue
        theta, f, iters = run
        if best is None or f < best[1]:
            best = (theta, f, iters, r)
    if best is None:
        raise FitError(f"all {cfg.restarts} restarts diverged")
    theta, f, iters, r = best
    params, k = _unpack(theta)
    return FitResult(
        params=params,
        k=k,
        nll=f * len(dataset),
        accuracy=evaluate_accuracy(params, dataset),
        iterations=iters,
        best_restart=r,
        diverged_restarts=diverged,
    )
