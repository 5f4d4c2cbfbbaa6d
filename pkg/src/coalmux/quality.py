"""Partition scores: multilayer modularity and planted-partition log-likelihood.

All logarithms are natural.  The likelihood terms are profile
log-likelihood ratios: the within/between edge rates and the copy
probability are replaced by their maximum-likelihood values and the result
is measured against the undifferentiated model (one edge rate, independent
labels), so every term is non-negative and an uncoupled model has an
inter-layer term of exactly zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .network import (
    Layer,
    ModelParams,
    MultilayerNetwork,
    MultilayerPartition,
    NetworkError,
    Pair,
)

logger = logging.getLogger(__name__)

COPY_EPS = 1e-3
THETA_EPS = 1e-12


class DegenerateError(ArithmeticError):
    """A score is undefined for the given configuration."""


@dataclass(frozen=True)
class LayerSufficientStats:
    m: float
    m_in: float
    e_in: float
    theta_in: float
    theta_out: float
    degenerate: bool = False


@dataclass(frozen=True)
class PairStats:
    n_shared: int
    n_same: int
    k_pair: int
    p_hat: float


@dataclass(frozen=True)
class ScoreBreakdown:
    intra: Mapping[str, float]
    inter: Mapping[Pair, float]
    total: float
    stats: Mapping = field(default_factory=dict, compare=False, repr=False)

    @property
    def intra_total(self) -> float:
        return float(sum(self.intra.values()))

    @property
    def inter_total(self) -> float:
        return float(sum(self.inter.values()))


def _positions(layer: Layer) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.searchsorted(layer.participants, layer.src),
        np.searchsorted(layer.participants, layer.dst),
    )


def layer_strengths(layer: Layer) -> np.ndarray:
    """Weighted degree aligned with ``layer.participants``."""
    i, j = _positions(layer)
    d = np.zeros(layer.n_participants)
    np.add.at(d, i, layer.weight)
    np.add.at(d, j, layer.weight)
    return d


def _xlog_ratio(a: float, b: float) -> float:
    return a * math.log(a / b) if a > 0 else 0.0


def layer_stats(layer: Layer, labels: np.ndarray) -> LayerSufficientStats:
    """Edge mass inside communities and its expectation under the null."""
    labels = np.asarray(labels)
    if len(labels) != layer.n_participants:
        raise NetworkError(f"layer {layer.key!r}: labels do not cover the participants")
    m = layer.total_weight
    if m <= 0:
        return LayerSufficientStats(0.0, 0.0, 0.0, 1.0, 1.0, degenerate=True)
    i, j = _positions(layer)
    m_in = float(layer.weight[labels[i] == labels[j]].sum())
    d = layer_strengths(layer)
    _, inv = np.unique(labels, return_inverse=True)
    kappa = np.bincount(inv, weights=d)
    e_in = float(np.dot(kappa, kappa) / (4.0 * m))
    theta_in = m_in / e_in
    if m - e_in <= 1e-12 * m:
        return LayerSufficientStats(m, m_in, m, theta_in, math.nan, degenerate=True)
    theta_out = (m - m_in) / (m - e_in)
    return LayerSufficientStats(m, m_in, e_in, theta_in, theta_out)


def intra_loglik(layer: Layer, labels: np.ndarray) -> tuple[float, LayerSufficientStats]:
    """Profile log-likelihood ratio of one layer's community assignment.

    The rates are fitted under the assortative constraint
    ``theta_in >= theta_out``, so partitions with fewer internal edges than
    expected score 0 rather than a disassortative fit.
    """
    st = layer_stats(layer, labels)
    if st.m <= 0:
        return 0.0, st
    if st.e_in >= st.m:
        if st.m - st.m_in > 1e-12 * st.m:
            raise DegenerateError(
                f"layer {layer.key!r}: expected in-community mass equals m but m_in < m"
            )
        return 0.0, st
    if st.theta_in < st.theta_out:
        # assortative constraint theta_in >= theta_out: the profile maximum sits at theta_in = theta_out
        return 0.0, st
    value = _xlog_ratio(st.m_in, st.e_in) + _xlog_ratio(st.m - st.m_in, st.m - st.e_in)
    return max(value, 0.0), st


def gamma_hat(theta_in: float, theta_out: float) -> float:
    """Resolution matching the planted-partition rates (their logarithmic mean)."""
    theta_in = max(float(theta_in), THETA_EPS)
    theta_out = max(float(theta_out), THETA_EPS)
    if abs(theta_in - theta_out) < 1e-9:
        return theta_in
    return (theta_in - theta_out) / (math.log(theta_in) - math.log(theta_out))


def omega_from_p(p: float, k: int) -> float:
    """Coupling equal to the log-odds gain of a shared label under copy probability ``p``."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if not 0.0 <= p <= 1.0 - COPY_EPS + 1e-15:
        raise ValueError(f"p must lie in [0, 1 - {COPY_EPS}]")
    return math.log1p(p * k / (1.0 - p))


def p_from_omega(omega: float, k: int) -> float:
    """Inverse of :func:`omega_from_p`."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if omega < 0:
        raise ValueError("omega must be >= 0")
    e = math.expm1(omega)
    return e / (e + k)


def copy_loglik(n_same: int, n_shared: int, k: int) -> tuple[float, float]:
    """Copy-prior log-likelihood ratio against independent labels, and ``p_hat``."""
    if k < 2:
        raise ValueError("k_pair must be >= 2")
    if not 0 <= n_same <= n_shared:
        raise ValueError("need 0 <= n_same <= n_shared")
    if n_shared == 0:
        return 0.0, 0.0
    f = n_same / n_shared
    p = min(max((f * k - 1.0) / (k - 1.0), 0.0), 1.0 - COPY_EPS)
    if p == 0.0:
        return 0.0, 0.0
    value = n_same * math.log1p(p * (k - 1)) + (n_shared - n_same) * math.log1p(-p)
    return max(value, 0.0), p


def pair_k(
    labels_a: np.ndarray,
    labels_b: np.ndarray,
    k_max_a: int | None = None,
    k_max_b: int | None = None,
) -> int:
    """Label-universe size for a coupled pair: distinct labels in both layers.

    Floored at 2; capped at the larger per-layer cap when both are bounded.
    """
    k = len(np.union1d(labels_a, labels_b))
    if k_max_a is not None and k_max_b is not None:
        k = min(k, max(k_max_a, k_max_b))
    return max(k, 2)


def _shared_labels(net, partition, pair):
    la, lb = net.layer(pair[0]), net.layer(pair[1])
    ga = partition.labels_for(net, pair[0])
    gb = partition.labels_for(net, pair[1])
    _, ia, ib = np.intersect1d(la.participants, lb.participants, return_indices=True)
    return ga, gb, ga[ia], gb[ib]


def inter_loglik(
    net: MultilayerNetwork,
    partition: MultilayerPartition,
    pair: Pair,
    k_pair: int | None = None,
    k_max: Mapping[str, int | None] | None = None,
) -> tuple[float, PairStats]:
    """Copy-prior term for one coupled layer pair."""
    ga, gb, sa, sb = _shared_labels(net, partition, pair)
    if k_pair is None:
        caps = k_max or {}
        k_pair = pair_k(ga, gb, caps.get(pair[0]), caps.get(pair[1]))
    n_shared = len(sa)
    n_same = int(np.count_nonzero(sa == sb))
    value, p = copy_loglik(n_same, n_shared, k_pair)
    return value, PairStats(n_shared, n_same, k_pair, p)


def _kmax_map(net, k_max) -> dict:
    if k_max is None or isinstance(k_max, int):
        return {key: k_max for key in net.layer_keys}
    return dict(k_max)


def total_loglik(
    net: MultilayerNetwork,
    partition: MultilayerPartition,
    k_max: Mapping[str, int | None] | int | None = None,
) -> ScoreBreakdown:
    """Sum of per-layer and per-coupled-pair likelihood terms.

    Terms are added in layer order, then coupling order, so totals are
    bit-stable.  A network without couplings has an empty inter map.
    """
    caps = _kmax_map(net, k_max)
    intra, inter, layer_st, pair_st = {}, {}, {}, {}
    for layer in net.layers:
        value, st = intra_loglik(layer, partition.labels_for(net, layer.key))
        intra[layer.key] = value
        layer_st[layer.key] = st
    for pair in net.couplings:
        value, st = inter_loglik(net, partition, pair, k_max=caps)
        inter[pair] = value
        pair_st[pair] = st
    total = 0.0
    for v in intra.values():
        total += v
    for v in inter.values():
        total += v
    return ScoreBreakdown(intra, inter, total, {"layers": layer_st, "pairs": pair_st})


def multilayer_modularity(
    net: MultilayerNetwork, params: ModelParams, partition: MultilayerPartition
) -> float:
    """Unnormalized multilayer modularity.

    Within a layer every unordered vertex pair contributes
    ``beta * (A_ij - gamma * d_i d_j / 2m)`` when co-assigned; each coupled
    pair adds ``omega`` per shared vertex with equal labels.
    """
    partition.check_domain(net)
    q = 0.0
    for layer in net.layers:
        m = layer.total_weight
        if m <= 0:
            continue
        g = partition.labels_for(net, layer.key)
        i, j = _positions(layer)
        internal = float(layer.weight[g[i] == g[j]].sum())
        d = layer_strengths(layer)
        _, inv = np.unique(g, return_inverse=True)
        kappa = np.bincount(inv, weights=d)
        pair_null = (float(np.dot(kappa, kappa)) - float(np.dot(d, d))) / 2.0
        beta, gamma = params.beta_of(layer.key), params.gamma_of(layer.key)
        q += beta * (internal - gamma * pair_null / (2.0 * m))
    for pair in net.couplings:
        w = params.omega_of(pair)
        if w == 0:
            continue
        _, _, sa, sb = _shared_labels(net, partition, pair)
        q += w * int(np.count_nonzero(sa == sb))
    return q


def update_params_from_partition(
    net: MultilayerNetwork,
    partition: MultilayerPartition,
    params: ModelParams | None = None,
) -> ModelParams:
    """Fixed-point parameter update: rates -> resolution, copy probability -> coupling."""
    if params is None:
        params = ModelParams.uniform(net)
    scores = total_loglik(net, partition, params.k_max)
    gamma = {}
    for key, st in scores.stats["layers"].items():
        if st.degenerate or st.m_in == 0:
            logger.warning("layer %s: degenerate planted-partition fit, gamma set to 1.0", key)
            gamma[key] = 1.0
            continue
        if st.theta_out <= 0:
            logger.warning("layer %s: theta_out = 0 clamped to %g", key, THETA_EPS)
        gamma[key] = gamma_hat(st.theta_in, st.theta_out)
    omega = {}
    for pair in net.couplings:
        st = scores.stats["pairs"][pair]
        omega[pair] = omega_from_p(st.p_hat, st.k_pair)
    return params.replace(gamma=gamma, omega=omega)
