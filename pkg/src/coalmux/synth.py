"""Synthetic multilayer networks with planted coalition structure.

Four structures are supported:

* ``pillar``: every modal layer of a time slice shares the slice labels.
* ``semipillar``: pillar labels, but each vertex joins each layer with
  probability ``participation``.
* ``hierarchy``: layers of the modes in ``split_layers`` split every
  community in two (alternate members by vertex index).
* ``overlap``: each modal layer relabels each vertex independently with
  probability ``relabel_q`` (uniform over ``k``, so a relabel can be a no-op).

Between time slices a vertex keeps its label with probability ``copy_p`` and
otherwise draws a fresh one.  Every random array is drawn for every
structure, so specs that differ only in structure share a random stream.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .leiden import make_rng
from .network import (
    Layer,
    MultilayerNetwork,
    MultilayerPartition,
    Vertex,
    VertexRegistry,
    canonicalize,
)

STRUCTURES = ("pillar", "semipillar", "hierarchy", "overlap")
DEFAULT_MODES = ("Res", "Dis", "Com")


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 60
    modes: int = 3
    slices: int = 2
    k: int = 3
    p_in: float = 0.3
    p_out: float = 0.02
    participation: float = 1.0
    structure: str = "pillar"
    copy_p: float | Sequence[float] = 1.0
    relabel_q: float | Sequence[float] = 0.0
    split_layers: Sequence[str] = field(default_factory=tuple)
    seed: int = 0
    mode_names: Sequence[str] | None = None

    def __post_init__(self):
        if self.n < 1 or self.modes < 1 or self.slices < 1:
            raise ValueError("n, modes and slices must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.p_out < self.p_in <= 1:
            raise ValueError("need 0 <= p_out < p_in <= 1")
        if not 0 <= self.participation <= 1:
            raise ValueError("participation must lie in [0, 1]")
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        for name in ("copy_p", "relabel_q"):
            for x in np.atleast_1d(getattr(self, name)):
                if not 0 <= x <= 1:
                    raise ValueError(f"{name} must lie in [0, 1]")
        names = self.modes_list()
        if len(names) != self.modes or len(set(names)) != self.modes:
            raise ValueError("mode_names must be unique and match modes")
        unknown = set(self.split_layers) - set(names)
        if unknown:
            raise ValueError(f"split_layers name unknown modes: {sorted(unknown)}")
        object.__setattr__(self, "split_layers", tuple(self.split_layers))

    def modes_list(self) -> list[str]:
        if self.mode_names is not None:
            return list(self.mode_names)
        if self.modes <= len(DEFAULT_MODES):
            return list(DEFAULT_MODES[: self.modes])
        return [f"M{i}" for i in range(self.modes)]

    def schedule(self, name: str) -> list[float]:
        """Per-slice value of ``copy_p`` or ``relabel_q``."""
        value = getattr(self, name)
        if np.isscalar(value):
            return [float(value)] * self.slices
        value = [float(x) for x in value]
        if name == "copy_p" and len(value) == self.slices - 1:
            value = [1.0] + value
        if len(value) != self.slices:
            raise ValueError(f"{name} schedule must have one entry per slice")
        return value

    def replace(self, **changes) -> "SyntheticSpec":
        d = asdict(self)
        d.update(changes)
        return SyntheticSpec(**d)

    def to_json(self) -> dict:
        d = asdict(self)
        d["split_layers"] = list(self.split_layers)
        for key in ("copy_p", "relabel_q", "mode_names"):
            if isinstance(d[key], tuple):
                d[key] = list(d[key])
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown spec fields: {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SyntheticSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def case_preset(**overrides) -> SyntheticSpec:
    """Case-sized preset: 100 actors, three modes at two time slices, three coalitions.

    Edge rates give layer densities around 0.12.
    """
    spec = SyntheticSpec(
        n=100,
        modes=3,
        slices=2,
        k=3,
        p_in=0.3,
        p_out=0.03,
        participation=0.9,
        structure="overlap",
        copy_p=0.9,
        relabel_q=0.1,
    )
    return spec.replace(**overrides) if overrides else spec


def layer_key(mode: str, t: int) -> str:
    return f"{mode}_T{t}"


def _split_half(labels: np.ndarray, k: int) -> np.ndarray:
    out = labels.copy()
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        out[members[1::2]] = c + k
    return out


def generate(spec: SyntheticSpec) -> tuple[MultilayerNetwork, MultilayerPartition]:
    """Draw a network and its planted partition (over participating pairs)."""
    rng = make_rng(spec.seed)
    n, k = spec.n, spec.k
    copy_p = spec.schedule("copy_p")
    relabel_q = spec.schedule("relabel_q")
    modes = spec.modes_list()

    slice_labels = [rng.integers(k, size=n)]
    for t in range(1, spec.slices):
        keep = rng.random(n) < copy_p[t]
        fresh = rng.integers(k, size=n)
        slice_labels.append(np.where(keep, slice_labels[-1], fresh))

    iu, ju = np.triu_indices(n, 1)
    power = rng.random(n)
    layers, truth = [], {}
    for t in range(spec.slices):
        for mode in modes:
            labels = slice_labels[t].copy()
            relabel = rng.random(n) < relabel_q[t]
            fresh = rng.integers(k, size=n)
            joins = rng.random(n) < spec.participation
            draws = rng.random(len(iu))
            if spec.structure == "overlap":
                labels = np.where(relabel, fresh, labels)
            elif spec.structure == "hierarchy" and mode in spec.split_layers:
                labels = _split_half(labels, k)
            prob = np.where(labels[iu] == labels[ju], spec.p_in, spec.p_out)
            keep = (draws < prob) & joins[iu] & joins[ju]
            part = np.flatnonzero(joins)
            key = layer_key(mode, t)
            layers.append(
                Layer(key, mode, t, part, iu[keep], ju[keep], np.ones(int(keep.sum())))
            )
            truth[key] = labels[part]
    width = len(str(n - 1))
    registry = VertexRegistry(
        Vertex(f"v{i:0{width}d}", f"actor {i}", "org", float(round(power[i], 6)))
        for i in range(n)
    )
    net = MultilayerNetwork(registry, layers)
    return net, canonicalize(MultilayerPartition.from_arrays(net, truth))
