"""Multilayer network data model.

Vertices are opaque string ids kept in registry order; every layer refers to
them through dense integer handles (their registry position).  All values are
immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np


class NetworkError(ValueError):
    """Raised when network data violate the model invariants."""


@dataclass(frozen=True)
class Vertex:
    id: str
    name: str = ""
    actor_type: str = ""
    power: float = 0.0


class VertexRegistry:
    """Ordered collection of vertices with an id -> handle table."""

    def __init__(self, vertices: Iterable[Vertex]):
        self._vertices = tuple(vertices)
        index = {}
        for pos, v in enumerate(self._vertices):
            if not v.id:
                raise NetworkError("vertex id must be non-empty")
            if v.id in index:
                raise NetworkError(f"duplicate vertex id {v.id!r}")
            if not (v.power >= 0) or math.isinf(v.power):
                raise NetworkError(f"vertex {v.id!r}: power must be finite and >= 0")
            index[v.id] = pos
        self._index = MappingProxyType(index)

    def __reduce__(self):
        return (VertexRegistry, (self._vertices,))

    @classmethod
    def from_ids(cls, ids: Iterable[str]) -> "VertexRegistry":
        return cls(Vertex(str(i)) for i in ids)

    def __len__(self) -> int:
        return len(self._vertices)

    def __iter__(self):
        return iter(self._vertices)

    def __getitem__(self, pos: int) -> Vertex:
        return self._vertices[pos]

    def __contains__(self, vid: str) -> bool:
        return vid in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, VertexRegistry) and self._vertices == other._vertices

    @property
    def ids(self) -> list[str]:
        return [v.id for v in self._vertices]

    def index(self, vid: str) -> int:
        try:
            return self._index[vid]
        except KeyError:
            raise NetworkError(f"unknown vertex id {vid!r}") from None

    @property
    def powers(self) -> np.ndarray:
        return np.array([v.power for v in self._vertices], dtype=float)


@dataclass(frozen=True, eq=False)
class Layer:
    """One relational context.

    ``participants`` are sorted vertex handles; ``src``/``dst``/``weight``
    hold each undirected edge once with ``src < dst``.
    """

    key: str
    mode: str
    time: int
    participants: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        part = np.unique(np.asarray(self.participants, dtype=np.int64))
        src = np.asarray(self.src, dtype=np.int64)
        dst = np.asarray(self.dst, dtype=np.int64)
        w = np.asarray(self.weight, dtype=float)
        if not (src.shape == dst.shape == w.shape) or src.ndim != 1:
            raise NetworkError(f"layer {self.key!r}: edge arrays must be 1-d and aligned")
        if np.any(src == dst):
            raise NetworkError(f"layer {self.key!r}: self-loop")
        if np.any(~(w > 0)) or np.any(~np.isfinite(w)):
            raise NetworkError(f"layer {self.key!r}: edge weights must be finite and > 0")
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if len(lo) > 1 and np.any((lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])):
            raise NetworkError(f"layer {self.key!r}: duplicate edge")
        if len(lo) and not np.all(np.isin(np.concatenate([lo, hi]), part)):
            raise NetworkError(f"layer {self.key!r}: edge endpoint is not a participant")
        for name, arr in (("participants", part), ("src", lo), ("dst", hi), ("weight", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def n_participants(self) -> int:
        return len(self.participants)

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    def strengths(self, n_vertices: int) -> np.ndarray:
        """Weighted degree of every registry vertex (zero for non-participants)."""
        s = np.zeros(n_vertices)
        np.add.at(s, self.src, self.weight)
        np.add.at(s, self.dst, self.weight)
        return s

    def degrees(self, n_vertices: int) -> np.ndarray:
        d = np.zeros(n_vertices, dtype=np.int64)
        np.add.at(d, self.src, 1)
        np.add.at(d, self.dst, 1)
        return d

    def density(self) -> float:
        n = self.n_participants
        return self.n_edges / (n * (n - 1) / 2) if n > 1 else 0.0

    def with_edges(self, src, dst, weight) -> "Layer":
        return Layer(self.key, self.mode, self.time, self.participants, src, dst, weight)

    def same_as(self, other: "Layer") -> bool:
        return (
            self.key == other.key
            and self.mode == other.mode
            and self.time == other.time
            and np.array_equal(self.participants, other.participants)
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.weight, other.weight)
        )


Pair = tuple[str, str]


def pair_key(pair: Pair) -> str:
    return f"{pair[0]}|{pair[1]}"


def parse_pair_key(text: str) -> Pair:
    a, sep, b = text.partition("|")
    if not sep or not a or not b:
        raise NetworkError(f"malformed layer pair {text!r}")
    return a, b


class MultilayerNetwork:
    """Vertex registry, ordered layers and a coupling topology over layer pairs.

    ``couplings=None`` couples every pair of layers.  Pairs are stored in
    layer order, i.e. ``(a, b)`` with ``a`` before ``b``.
    """

    def __init__(
        self,
        registry: VertexRegistry,
        layers: Sequence[Layer],
        couplings: Iterable[Pair] | None = None,
    ):
        self.registry = registry
        self.layers = tuple(layers)
        self._pos = {}
        for pos, layer in enumerate(self.layers):
            if layer.key in self._pos:
                raise NetworkError(f"duplicate layer id {layer.key!r}")
            self._pos[layer.key] = pos
            if layer.n_participants and (
                layer.participants[0] < 0 or layer.participants[-1] >= len(registry)
            ):
                raise NetworkError(f"layer {layer.key!r}: participant outside registry")
        modes = [(l.mode, l.time) for l in self.layers]
        if len(set(modes)) != len(modes):
            raise NetworkError("(mode, time) pairs must be unique")
        if couplings is None:
            pairs = [(a.key, b.key) for a, b in combinations(self.layers, 2)]
        else:
            seen = set()
            for a, b in couplings:
                if a not in self._pos or b not in self._pos:
                    raise NetworkError(f"coupling references unknown layer: {a!r}, {b!r}")
                if a == b:
                    raise NetworkError(f"self-coupling of layer {a!r}")
                if self._pos[a] > self._pos[b]:
                    a, b = b, a
                seen.add((a, b))
            pairs = sorted(seen, key=lambda p: (self._pos[p[0]], self._pos[p[1]]))
        self.couplings: tuple[Pair, ...] = tuple(pairs)

    # lookups
    @property
    def n_vertices(self) -> int:
        return len(self.registry)

    @property
    def layer_keys(self) -> list[str]:
        return [l.key for l in self.layers]

    def layer(self, key: str) -> Layer:
        return self.layers[self.layer_index(key)]

    def layer_index(self, key: str) -> int:
        try:
            return self._pos[key]
        except KeyError:
            raise NetworkError(f"unknown layer {key!r}") from None

    def shared(self, pair: Pair) -> np.ndarray:
        """Vertex handles participating in both layers of ``pair``."""
        a, b = self.layer(pair[0]), self.layer(pair[1])
        return np.intersect1d(a.participants, b.participants)

    def n_supra_nodes(self) -> int:
        return sum(l.n_participants for l in self.layers)

    # derived networks
    def with_couplings(self, couplings: Iterable[Pair] | None) -> "MultilayerNetwork":
        return MultilayerNetwork(self.registry, self.layers, couplings)

    def with_layers(self, layers: Sequence[Layer]) -> "MultilayerNetwork":
        keys = {l.key for l in layers}
        pairs = [p for p in self.couplings if p[0] in keys and p[1] in keys]
        return MultilayerNetwork(self.registry, layers, pairs)

    def subnetwork(self, keys: Sequence[str]) -> "MultilayerNetwork":
        return self.with_layers([self.layer(k) for k in keys])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MultilayerNetwork)
            and self.registry == other.registry
            and len(self.layers) == len(other.layers)
            and all(a.same_as(b) for a, b in zip(self.layers, other.layers))
            and self.couplings == other.couplings
        )

    def __repr__(self) -> str:
        return (
            f"MultilayerNetwork(n_vertices={self.n_vertices}, layers={self.layer_keys}, "
            f"n_couplings={len(self.couplings)})"
        )


def temporal_couplings(layers: Sequence[Layer]) -> list[Pair]:
    """Pairs of layers sharing a mode in adjacent time slices."""
    out = []
    for a, b in combinations(layers, 2):
        if a.mode == b.mode and abs(a.time - b.time) == 1:
            out.append((a.key, b.key))
    return out


class MultilayerPartition:
    """Community label per participating (vertex, layer) pair.

    Labels are shared across layers: equal labels in two layers denote the
    same community.  ``assignments`` maps ``layer key -> {vertex id: label}``.
    """

    def __init__(self, assignments: Mapping[str, Mapping[str, int]]):
        frozen = {}
        for layer, labels in assignments.items():
            frozen[str(layer)] = MappingProxyType({str(v): int(c) for v, c in labels.items()})
        self._assignments = MappingProxyType(frozen)

    @property
    def assignments(self) -> Mapping[str, Mapping[str, int]]:
        return self._assignments

    def __reduce__(self):
        return (MultilayerPartition, ({k: dict(v) for k, v in self._assignments.items()},))

    @classmethod
    def from_arrays(cls, net: MultilayerNetwork, labels: Mapping[str, np.ndarray]):
        """Build from label arrays aligned with each layer's participants."""
        ids = net.registry.ids
        out = {}
        for layer in net.layers:
            arr = labels.get(layer.key)
            if arr is None:
                arr = np.zeros(0, dtype=np.int64)
            if len(arr) != layer.n_participants:
                raise NetworkError(f"layer {layer.key!r}: label array has wrong length")
            out[layer.key] = {ids[v]: int(c) for v, c in zip(layer.participants, arr)}
        return cls(out)

    def labels_for(self, net: MultilayerNetwork, key: str) -> np.ndarray:
        """Label array aligned with the participants of layer ``key``."""
        layer = net.layer(key)
        labels = self._assignments.get(key)
        if labels is None or len(labels) != layer.n_participants:
            raise NetworkError(f"partition does not cover the participants of layer {key!r}")
        ids = net.registry.ids
        try:
            return np.array([labels[ids[v]] for v in layer.participants], dtype=np.int64)
        except KeyError as exc:
            raise NetworkError(f"layer {key!r}: participant {exc.args[0]!r} unassigned") from None

    def check_domain(self, net: MultilayerNetwork) -> None:
        if set(self._assignments) != set(net.layer_keys):
            raise NetworkError("partition layers differ from network layers")
        for key in net.layer_keys:
            self.labels_for(net, key)

    def layer_labels(self, key: str) -> Mapping[str, int]:
        return self._assignments[key]

    def n_communities(self, key: str) -> int:
        return len(set(self._assignments[key].values()))

    def items(self):
        for layer, labels in self._assignments.items():
            for v, c in labels.items():
                yield (v, layer), c

    def __len__(self) -> int:
        return sum(len(l) for l in self._assignments.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultilayerPartition):
            return NotImplemented
        return {k: dict(v) for k, v in self._assignments.items()} == {
            k: dict(v) for k, v in other._assignments.items()
        }

    def __repr__(self) -> str:
        sizes = {k: len(set(v.values())) for k, v in self._assignments.items()}
        return f"MultilayerPartition(communities_per_layer={sizes})"


def canonicalize(partition: MultilayerPartition) -> MultilayerPartition:
    """Relabel communities 0, 1, ... by order of first appearance.

    Layers are scanned in stored order and vertices in stored (registry)
    order.  The relabeling is global, so cross-layer identity and every
    co-assignment relation are preserved.
    """
    mapping: dict[int, int] = {}
    out = {}
    for layer, labels in partition.assignments.items():
        new = {}
        for v, c in labels.items():
            if c not in mapping:
                mapping[c] = len(mapping)
            new[v] = mapping[c]
        out[layer] = new
    return MultilayerPartition(out)


@dataclass(frozen=True)
class ModelParams:
    """Resolution per layer, coupling per layer pair, layer weight, community cap.

    ``k_max`` entries of ``None`` mean unbounded.
    """

    gamma: Mapping[str, float]
    omega: Mapping[Pair, float]
    beta: Mapping[str, float] = field(default_factory=dict)
    k_max: Mapping[str, int | None] = field(default_factory=dict)

    def __post_init__(self):
        for k, g in self.gamma.items():
            if not g > 0:
                raise NetworkError(f"gamma[{k}] must be > 0")
        for p, w in self.omega.items():
            if not w >= 0:
                raise NetworkError(f"omega[{pair_key(p)}] must be >= 0")
        for k, b in self.beta.items():
            if not b > 0:
                raise NetworkError(f"beta[{k}] must be > 0")
        for k, c in self.k_max.items():
            if c is not None and int(c) < 1:
                raise NetworkError(f"k_max[{k}] must be a positive integer")
        for name in ("gamma", "omega", "beta", "k_max"):
            object.__setattr__(self, name, MappingProxyType(dict(getattr(self, name))))

    @classmethod
    def uniform(
        cls,
        net: MultilayerNetwork,
        gamma: float = 1.0,
        omega: float = 1.0,
        beta: float = 1.0,
        k_max: int | None = None,
    ) -> "ModelParams":
        keys = net.layer_keys
        return cls(
            gamma={k: float(gamma) for k in keys},
            omega={p: float(omega) for p in net.couplings},
            beta={k: float(beta) for k in keys},
            k_max={k: k_max for k in keys},
        )

    def gamma_of(self, key: str) -> float:
        return float(self.gamma.get(key, 1.0))

    def beta_of(self, key: str) -> float:
        return float(self.beta.get(key, 1.0))

    def omega_of(self, pair: Pair) -> float:
        return float(self.omega.get(pair, 0.0))

    def k_max_of(self, key: str) -> int | None:
        k = self.k_max.get(key)
        return None if k is None else int(k)

    def replace(self, **changes) -> "ModelParams":
        fields = {"gamma": self.gamma, "omega": self.omega, "beta": self.beta, "k_max": self.k_max}
        fields.update(changes)
        return ModelParams(**{k: dict(v) for k, v in fields.items()})

    def scaled(self, c: float) -> "ModelParams":
        """Multiply every beta and omega by ``c``."""
        return self.replace(
            beta={k: v * c for k, v in self.beta.items()},
            omega={k: v * c for k, v in self.omega.items()},
        )

    def __reduce__(self):
        return (ModelParams, tuple(dict(getattr(self, n)) for n in ("gamma", "omega", "beta", "k_max")))

    def monolayer(self) -> "ModelParams":
        return self.replace(omega={p: 0.0 for p in self.omega})

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return all(
            dict(getattr(self, n)) == dict(getattr(other, n))
            for n in ("gamma", "omega", "beta", "k_max")
        )

    def __hash__(self):
        return hash(tuple(sorted(self.gamma.items())))
