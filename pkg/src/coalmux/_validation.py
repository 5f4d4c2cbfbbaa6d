"""Input checks shared by the estimators."""

from __future__ import annotations

from .network import MultilayerNetwork, NetworkError


def check_network(net) -> MultilayerNetwork:
    if not isinstance(net, MultilayerNetwork):
        raise TypeError(f"expected a MultilayerNetwork, got {type(net).__name__}")
    if not net.layers:
        raise NetworkError("network has no layers")
    return net


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha
