"""Significance filter for weighted layers.

Each edge weight is compared with a count null that keeps vertex strengths
in expectation: the layer's total weight ``T`` is redistributed over vertex
pairs, each unit landing on pair ``{i, j}`` with probability
``s_i s_j / (2 T^2)``.  The expected weight is ``s_i s_j / (2T)``.  An edge is
kept when the upper-tail probability of its observed weight is below
``alpha``.

This null is a stand-in for noise-corrected backboning; output metadata
labels it as such.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_alpha, check_network
from .network import Layer, MultilayerNetwork, NetworkError

NULLS = ("binomial", "poisson")
NULL_DESCRIPTION = {
    "binomial": "binomial count null, mean s_i*s_j/(2T) (stand-in for noise-corrected backbone)",
    "poisson": "poisson count null, mean s_i*s_j/(2T) (stand-in for noise-corrected backbone)",
}


@dataclass(frozen=True)
class BackboneResult:
    layer_id: str
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    pvalues: np.ndarray
    kept: np.ndarray
    alpha: float
    density_before: float
    density_after: float
    null: str = "binomial"

    def pvalue_map(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(p) for i, j, p in zip(self.src, self.dst, self.pvalues)}

    def kept_edges(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in zip(self.src[self.kept], self.dst[self.kept])}


def null_means(layer: Layer) -> np.ndarray:
    """Expected weight ``s_i s_j / (2T)`` of every edge under the null."""
    total = layer.total_weight
    s = layer.strengths(int(max(layer.participants.max(), 0)) + 1)
    return s[layer.src] * s[layer.dst] / (2.0 * total)


def edge_pvalues(layer: Layer, null: str = "binomial") -> np.ndarray:
    """Upper-tail p-value ``P(W >= w)`` of each edge, in edge order.

    ``binomial``: ``W ~ Binomial(T, s_i s_j / 2T^2)``, extended to real
    weights through the regularized incomplete beta function.
    ``poisson``: ``W ~ Poisson(s_i s_j / 2T)``, extended through the
    regularized lower incomplete gamma function.
    """
    if null not in NULLS:
        raise ValueError(f"null must be one of {NULLS}")
    if layer.n_edges == 0:
        raise NetworkError(f"layer {layer.key!r} has no edges")
    total = layer.total_weight
    if not total > 0:
        raise NetworkError(f"layer {layer.key!r} has zero total weight")
    mu = null_means(layer)
    w = layer.weight
    if null == "poisson":
        return special.gammainc(w, mu)
    prob = mu / total
    # P(X >= w) = I_prob(w, T - w + 1); w <= T always holds for a single edge
    return special.betainc(w, np.maximum(total - w + 1.0, 1e-300), prob)


def filter_layer(layer: Layer, alpha: float = 0.05, null: str = "binomial"):
    """Keep edges with p-value strictly below ``alpha``; kept edges get weight 1."""
    alpha = check_alpha(alpha)
    pvalues = edge_pvalues(layer, null)
    kept = pvalues < alpha
    out = layer.with_edges(layer.src[kept], layer.dst[kept], np.ones(int(kept.sum())))
    result = BackboneResult(
        layer_id=layer.key,
        src=layer.src,
        dst=layer.dst,
        weight=layer.weight,
        pvalues=pvalues,
        kept=kept,
        alpha=alpha,
        density_before=layer.density(),
        density_after=out.density(),
        null=null,
    )
    return out, result


def binarize(layer: Layer) -> Layer:
    return layer.with_edges(layer.src, layer.dst, np.ones(layer.n_edges))


class NoiseCorrectedBackbone(TransformerMixin, BaseEstimator):
    """Per-layer significance filter over a multilayer network.

    ``keep_all=True`` bypasses the test and only binarizes weights.  Layers
    without edges pass through unchanged.
    """

    def __init__(self, alpha=0.05, null="binomial", keep_all=False):
        self.alpha = alpha
        self.null = null
        self.keep_all = keep_all

    def _filter(self, net):
        check_network(net)
        check_alpha(self.alpha)
        results, layers = {}, []
        for layer in net.layers:
            if self.keep_all or layer.n_edges == 0:
                layers.append(binarize(layer))
                continue
            out, res = filter_layer(layer, self.alpha, self.null)
            layers.append(out)
            results[layer.key] = res
        return results, net.with_layers(layers)

    def fit(self, net: MultilayerNetwork, y=None):
        self.results_, self.network_ = self._filter(net)
        return self

    def transform(self, net: MultilayerNetwork) -> MultilayerNetwork:
        """Filter ``net`` with the fitted settings (the test is per network)."""
        check_is_fitted(self, "results_")
        return self._filter(net)[1]

    def fit_transform(self, net, y=None, **fit_params):
        return self.fit(net).network_
