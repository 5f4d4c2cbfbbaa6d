"""Model selection by profile log-likelihood.

A uniform (gamma, omega) grid picks the starting point; coordinate ascent
then nudges one parameter at a time and keeps a change only when the
consensus partition's log-likelihood strictly increases.  Every evaluation
runs the stochastic maximizer several times and reconciles the runs by
consensus clustering.
"""

from __future__ import annotations

import contextlib
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_network

from .leiden import SupraGraph, build_supra, maximize, maximize_supra, partition_to_supra, supra_to_partition
from .network import (
    ModelParams,
    MultilayerNetwork,
    MultilayerPartition,
    NetworkError,
    canonicalize,
    pair_key,
)
from .quality import ScoreBreakdown, total_loglik

logger = logging.getLogger(__name__)

GAMMA_FLOOR = 0.05
CONSENSUS_MAX_ITER = 20


@dataclass(frozen=True)
class SelectionConfig:
    gamma_grid: Sequence[float] = (0.6, 0.8, 1.0, 1.2, 1.4)
    omega_grid: Sequence[float] = (0.0, 0.25, 0.5, 1.0, 2.0)
    step_gamma: float = 0.05
    step_omega: float = 0.05
    runs: int = 10
    max_passes: int = 50
    base_seed: int = 0
    k_max: int | None | Mapping[str, int | None] = 3
    mode: str = "multilayer"
    workers: int = 1

    def __post_init__(self):
        if not self.gamma_grid or not self.omega_grid:
            raise ValueError("grids must be non-empty")
        if any(g <= 0 for g in self.gamma_grid):
            raise ValueError("gamma grid values must be > 0")
        if any(w < 0 for w in self.omega_grid):
            raise ValueError("omega grid values must be >= 0")
        if self.step_gamma <= 0 or self.step_omega <= 0:
            raise ValueError("steps must be > 0")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.mode not in ("multilayer", "monolayer"):
            raise ValueError("mode must be 'multilayer' or 'monolayer'")
        object.__setattr__(self, "gamma_grid", tuple(float(x) for x in self.gamma_grid))
        object.__setattr__(self, "omega_grid", tuple(float(x) for x in self.omega_grid))

    def k_max_for(self, key: str) -> int | None:
        if isinstance(self.k_max, Mapping):
            return self.k_max.get(key)
        return self.k_max

    def replace(self, **changes) -> "SelectionConfig":
        d = asdict(self)
        d.update(changes)
        return SelectionConfig(**d)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        d["gamma_grid"] = list(self.gamma_grid)
        d["omega_grid"] = list(self.omega_grid)
        if isinstance(self.k_max, Mapping):
            d["k_max"] = dict(self.k_max)
        return d


@dataclass(frozen=True)
class TraceRecord:
    params: ModelParams
    total: float
    accepted: bool
    stage: str
    parameter: str = ""

    def to_json(self) -> dict:
        from .io import params_to_json

        return {
            "stage": self.stage,
            "parameter": self.parameter,
            "total": self.total,
            "accepted": self.accepted,
            "params": params_to_json(self.params),
        }


@dataclass
class SelectionTrace:
    records: list[TraceRecord] = field(default_factory=list)
    params: ModelParams | None = None
    partition: MultilayerPartition | None = None
    scores: ScoreBreakdown | None = None
    passes: int = 0

    def accepted_totals(self) -> list[float]:
        return [r.total for r in self.records if r.accepted]


def _hash64(*parts) -> int:
    h = hashlib.blake2b(":".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def run_seed(base_seed: int, eval_index, run_index: int) -> int:
    """Seed of one maximizer run: ``base_seed`` xor a hash of the indices."""
    return (int(base_seed) ^ _hash64(eval_index, run_index)) & (2**64 - 1)


def params_key(params: ModelParams, digits: int = 4) -> tuple:
    """Cache key: parameters quantized to ``digits`` decimals."""
    return (
        tuple((k, round(v, digits)) for k, v in params.gamma.items()),
        tuple((pair_key(p), round(v, digits)) for p, v in params.omega.items()),
        tuple((k, round(v, digits)) for k, v in params.beta.items()),
        tuple(params.k_max.items()),
    )


def _maximize_job(args):
    net, params, seed = args
    return maximize(net, params, seed)


def _supra_job(args):
    sg, seed = args
    return maximize_supra(sg, seed)


class _Serial:
    def map(self, fn, items):
        return [fn(x) for x in items]


class _Processes:
    def __init__(self, executor):
        self.executor = executor

    def map(self, fn, items):
        return list(self.executor.map(fn, items))


@contextlib.contextmanager
def worker_pool(workers: int):
    """Ordered list-returning ``map`` over ``workers`` processes (serial for 1)."""
    if workers <= 1:
        yield _Serial()
        return
    with ProcessPoolExecutor(max_workers=workers) as executor:
        yield _Processes(executor)


def coassignment(net: MultilayerNetwork, labels: np.ndarray, sg: SupraGraph) -> tuple:
    """Fraction of runs co-assigning supra-node pairs.

    ``labels`` has one row per run.  Pairs are all within-layer node pairs
    plus same-vertex pairs of coupled layers.  Returns ``(src, dst, frac, inter)``.
    """
    runs = labels.shape[0]
    src, dst, frac, inter = [], [], [], []
    start = 0
    offsets = {}
    for layer in net.layers:
        n = layer.n_participants
        offsets[layer.key] = start
        if n > 1:
            block = labels[:, start : start + n]
            same = (block[:, :, None] == block[:, None, :]).sum(axis=0) / runs
            i, j = np.triu_indices(n, 1)
            src.append(i + start)
            dst.append(j + start)
            frac.append(same[i, j])
            inter.append(np.zeros(len(i), dtype=bool))
        start += n
    for pair in net.couplings:
        la, lb = net.layer(pair[0]), net.layer(pair[1])
        _, ia, ib = np.intersect1d(la.participants, lb.participants, return_indices=True)
        ia = ia + offsets[pair[0]]
        ib = ib + offsets[pair[1]]
        src.append(ia)
        dst.append(ib)
        frac.append((labels[:, ia] == labels[:, ib]).sum(axis=0) / runs)
        inter.append(np.ones(len(ia), dtype=bool))
    if not src:
        empty = np.zeros(0)
        return empty.astype(np.int64), empty.astype(np.int64), empty, empty.astype(bool)
    return np.concatenate(src), np.concatenate(dst), np.concatenate(frac), np.concatenate(inter)


def _coassignment_graph(sg: SupraGraph, src, dst, frac, inter) -> SupraGraph:
    keep = frac > 0
    src, dst, frac, inter = src[keep], dst[keep], frac[keep], inter[keep]
    strength = np.zeros(sg.n_nodes)
    intra = ~inter
    np.add.at(strength, src[intra], frac[intra])
    np.add.at(strength, dst[intra], frac[intra])
    scales = []
    for s in range(sg.n_layers):
        m = strength[sg.node_layer == s].sum() / 2.0
        scales.append(1.0 / (2.0 * m) if m > 0 else 0.0)
    return SupraGraph(
        layer_keys=sg.layer_keys,
        node_layer=sg.node_layer,
        node_vertex=sg.node_vertex,
        strength=strength,
        null_scale=np.array(scales),
        k_max=sg.k_max,
        src=src,
        dst=dst,
        weight=frac,
        inter=inter,
    )


def consensus(
    partitions: Sequence[MultilayerPartition],
    net: MultilayerNetwork,
    params: ModelParams,
    scorer: Callable[[MultilayerPartition], float] | None = None,
    seed: int = 0,
    pool=None,
) -> MultilayerPartition:
    """Reconcile stochastic partitions through their co-assignment graph.

    The co-assignment graph is reclustered with the same maximizer (as many
    runs as inputs) until every co-assignment weight is 0 or 1.  Without
    convergence after ``CONSENSUS_MAX_ITER`` rounds the best-scoring input is
    returned.
    """
    if not partitions:
        raise ValueError("consensus needs at least one partition")
    for p in partitions:
        p.check_domain(net)
    first = partitions[0]
    for p in partitions[1:]:
        if {k: set(v) for k, v in p.assignments.items()} != {
            k: set(v) for k, v in first.assignments.items()
        }:
            raise NetworkError("partitions cover different node sets")
    if scorer is None:
        caps = dict(params.k_max)
        scorer = lambda p: total_loglik(net, p, caps).total  # noqa: E731
    pool = pool or _Serial()
    sg = build_supra(net, params)
    labels = np.vstack([partition_to_supra(net, p) for p in partitions])
    runs = len(partitions)
    for it in range(CONSENSUS_MAX_ITER):
        src, dst, frac, inter = coassignment(net, labels, sg)
        if np.all((frac == 0) | (frac == 1)):
            return supra_to_partition(net, labels[0])
        cg = _coassignment_graph(sg, src, dst, frac, inter)
        seeds = [run_seed(seed, f"consensus/{it}", r) for r in range(runs)]
        labels = np.vstack(pool.map(_supra_job, [(cg, s) for s in seeds]))
    logger.info("consensus did not converge; returning best input partition")
    scores = [scorer(p) for p in partitions]
    return canonicalize(partitions[int(np.argmax(scores))])


def evaluate(
    net: MultilayerNetwork,
    params: ModelParams,
    config: SelectionConfig,
    eval_index=None,
    pool=None,
) -> tuple[MultilayerPartition, ScoreBreakdown]:
    """Consensus partition of ``config.runs`` maximizer runs and its score.

    ``eval_index`` defaults to the quantized parameters, which makes the
    result a function of the parameters alone.
    """
    if eval_index is None:
        eval_index = repr(params_key(params))
    pool = pool or _Serial()
    seeds = [run_seed(config.base_seed, eval_index, r) for r in range(config.runs)]
    parts = pool.map(_maximize_job, [(net, params, s) for s in seeds])
    if len(parts) == 1:
        result = parts[0]
    else:
        result = consensus(parts, net, params, seed=run_seed(config.base_seed, eval_index, -1), pool=pool)
    return result, total_loglik(net, result, dict(params.k_max))


class _Evaluator:
    """Cached evaluation keyed by quantized parameters."""

    def __init__(self, net, config, pool):
        self.net = net
        self.config = config
        self.pool = pool
        self.cache = {}

    def __call__(self, params):
        key = params_key(params)
        if key not in self.cache:
            self.cache[key] = evaluate(self.net, params, self.config, repr(key), self.pool)
        return self.cache[key]


def _uniform(net, config, gamma, omega) -> ModelParams:
    return ModelParams(
        gamma={k: gamma for k in net.layer_keys},
        omega={p: omega for p in net.couplings},
        beta={k: 1.0 for k in net.layer_keys},
        k_max={k: config.k_max_for(k) for k in net.layer_keys},
    )


def grid_init(net, config: SelectionConfig, trace: SelectionTrace | None = None, evaluator=None):
    """Best uniform (gamma, omega) on the grids; ties go to smaller omega, then smaller gamma."""
    evaluator = evaluator or _Evaluator(net, config, _Serial())
    omegas = config.omega_grid if (config.mode == "multilayer" and net.couplings) else (0.0,)
    best = None
    for omega in sorted(set(omegas)):
        for gamma in sorted(set(config.gamma_grid)):
            params = _uniform(net, config, gamma, omega)
            _, scores = evaluator(params)
            improved = best is None or scores.total > best[1]
            if improved:
                best = (params, scores.total)
            if trace is not None:
                trace.records.append(TraceRecord(params, scores.total, improved, "grid"))
    return best[0]


def _step(value, delta, floor):
    return max(floor, round(value + delta, 10))


def coordinate_ascent(net: MultilayerNetwork, config: SelectionConfig, pool=None) -> SelectionTrace:
    """Grid start, then one-parameter-at-a-time ascent on the log-likelihood.

    Sweep order: gamma by layer order, then omega by coupling order; each
    parameter tries ``+step`` before ``-step``.  Stops after a pass without
    updates or after ``max_passes``.
    """
    if config.mode == "monolayer":
        net = net.with_couplings([])
    pool = pool or _Serial()
    evaluator = _Evaluator(net, config, pool)
    trace = SelectionTrace()
    current = grid_init(net, config, trace, evaluator)
    best_total = evaluator(current)[1].total
    slots = [("gamma", k) for k in net.layer_keys]
    if config.mode == "multilayer":
        slots += [("omega", p) for p in net.couplings]
    for npass in range(1, config.max_passes + 1):
        trace.passes = npass
        updated = False
        for kind, key in slots:
            table = dict(getattr(current, kind))
            step = config.step_gamma if kind == "gamma" else config.step_omega
            floor = GAMMA_FLOOR if kind == "gamma" else 0.0
            label = f"{kind}[{key if kind == 'gamma' else pair_key(key)}]"
            for delta in (step, -step):
                value = _step(table[key], delta, floor)
                if value == table[key]:
                    continue
                trial = current.replace(**{kind: {**table, key: value}})
                _, scores = evaluator(trial)
                accepted = scores.total > best_total
                trace.records.append(TraceRecord(trial, scores.total, accepted, "ascent", label))
                if accepted:
                    current, best_total = trial, scores.total
                    updated = True
                    break
        if not updated:
            break
    partition, scores = evaluator(current)
    trace.params, trace.partition, trace.scores = current, partition, scores
    return trace


def run_monolayer_baseline(net: MultilayerNetwork, config: SelectionConfig, pool=None):
    """Per-layer selection with couplings removed.

    Each layer is selected as a standalone network; the inter-layer map
    reports zero for every original coupling.
    """
    config = config.replace(mode="monolayer")
    gamma, k_max, labels, traces = {}, {}, {}, {}
    for layer in net.layers:
        sub = net.subnetwork([layer.key]).with_couplings([])
        trace = coordinate_ascent(sub, config, pool)
        traces[layer.key] = trace
        gamma[layer.key] = trace.params.gamma[layer.key]
        k_max[layer.key] = trace.params.k_max[layer.key]
        labels[layer.key] = dict(trace.partition.layer_labels(layer.key))
    params = ModelParams(
        gamma=gamma,
        omega={p: 0.0 for p in net.couplings},
        beta={k: 1.0 for k in net.layer_keys},
        k_max=k_max,
    )
    partition = MultilayerPartition(labels)
    scores = monolayer_scores(net, partition, k_max)
    return params, partition, scores, traces


def monolayer_scores(net, partition, k_max=None) -> ScoreBreakdown:
    """Scores with couplings removed; every original pair reports 0."""
    base = total_loglik(net.with_couplings([]), partition, k_max)
    inter = {p: 0.0 for p in net.couplings}
    return ScoreBreakdown(base.intra, inter, base.total, base.stats)


@dataclass
class SelectionResult:
    params: ModelParams
    partition: MultilayerPartition
    scores: ScoreBreakdown
    trace: SelectionTrace | None = None
    layer_traces: dict = field(default_factory=dict)


def select(net: MultilayerNetwork, config: SelectionConfig) -> SelectionResult:
    """Run the configured selection mode."""
    with worker_pool(config.workers) as pool:
        if config.mode == "monolayer":
            params, partition, scores, traces = run_monolayer_baseline(net, config, pool)
            return SelectionResult(params, partition, scores, None, traces)
        trace = coordinate_ascent(net, config, pool)
        return SelectionResult(trace.params, trace.partition, trace.scores, trace)


class CoalitionModel(BaseEstimator):
    """Estimator front end for likelihood-based multilayer community selection.

    ``fit(net)`` sets ``params_``, ``partition_``, ``scores_`` and
    ``trace_``; ``score(net)`` returns the fitted partition's log-likelihood.
    """

    def __init__(
        self,
        gamma_grid=(0.6, 0.8, 1.0, 1.2, 1.4),
        omega_grid=(0.0, 0.25, 0.5, 1.0, 2.0),
        step_gamma=0.05,
        step_omega=0.05,
        runs=10,
        max_passes=50,
        k_max=3,
        mode="multilayer",
        random_state=0,
        n_jobs=1,
    ):
        self.gamma_grid = gamma_grid
        self.omega_grid = omega_grid
        self.step_gamma = step_gamma
        self.step_omega = step_omega
        self.runs = runs
        self.max_passes = max_passes
        self.k_max = k_max
        self.mode = mode
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _config(self) -> SelectionConfig:
        return SelectionConfig(
            gamma_grid=self.gamma_grid,
            omega_grid=self.omega_grid,
            step_gamma=self.step_gamma,
            step_omega=self.step_omega,
            runs=self.runs,
            max_passes=self.max_passes,
            base_seed=self.random_state,
            k_max=self.k_max,
            mode=self.mode,
            workers=self.n_jobs,
        )

    def fit(self, net: MultilayerNetwork, y=None):
        check_network(net)
        result = select(net, self._config())
        self.params_ = result.params
        self.partition_ = result.partition
        self.scores_ = result.scores
        self.trace_ = result.trace
        return self

    def fit_predict(self, net, y=None) -> MultilayerPartition:
        return self.fit(net).partition_

    def score(self, net, y=None) -> float:
        check_is_fitted(self, "partition_")
        if self.mode == "monolayer":
            return monolayer_scores(net, self.partition_, dict(self.params_.k_max)).total
        return total_loglik(net, self.partition_, dict(self.params_.k_max)).total
