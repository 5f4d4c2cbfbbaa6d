"""Leiden-style maximization of multilayer modularity with a per-layer community cap.

The optimizer works on the supra-graph whose nodes are participating
(vertex, layer) pairs.  Intra-layer edges carry ``beta * A_ij``, inter-layer
edges carry ``omega`` between copies of the same vertex, and every node
carries the strength that enters the layer's null term.  Gains are derived
from the same unnormalized quality as :func:`coalmux.quality.multilayer_modularity`.

Aggregate nodes never mix layers: refinement only merges nodes of one layer,
so the resolution and the community cap stay attached to a single layer at
every level.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_network
from .network import ModelParams, MultilayerNetwork, MultilayerPartition, canonicalize
from .quality import multilayer_modularity

TOL = 1e-10
REFINE_THETA = 0.01
MAX_LEVELS = 64
MAX_POLISH_ROUNDS = 50


@dataclass(frozen=True, eq=False)
class SupraGraph:
    """Flattened multilayer network.

    Node ``i`` is vertex ``node_vertex[i]`` of layer ``node_layer[i]``; nodes
    are ordered by layer, then by vertex handle.  ``null_scale[s]`` is
    ``beta_s * gamma_s / (2 m_s)`` (zero for an edgeless layer).
    """

    layer_keys: tuple
    node_layer: np.ndarray
    node_vertex: np.ndarray
    strength: np.ndarray
    null_scale: np.ndarray
    k_max: tuple
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    inter: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_layer)

    @property
    def n_layers(self) -> int:
        return len(self.layer_keys)

    @property
    def n_inter_edges(self) -> int:
        return int(self.inter.sum())

    def quality(self, labels) -> float:
        """Modularity of node labels, recomputed from scratch."""
        labels = np.asarray(labels)
        same = labels[self.src] == labels[self.dst]
        q = float(self.weight[same].sum())
        d = self.strength
        for s in range(self.n_layers):
            scale = self.null_scale[s]
            if scale == 0:
                continue
            mask = self.node_layer == s
            _, inv = np.unique(labels[mask], return_inverse=True)
            kappa = np.bincount(inv, weights=d[mask])
            q -= scale * (float(np.dot(kappa, kappa)) - float(np.dot(d[mask], d[mask]))) / 2.0
        return q


def build_supra(net: MultilayerNetwork, params: ModelParams) -> SupraGraph:
    """Deterministic supra-graph; couplings with zero omega add no edges."""
    offsets = {}
    node_layer, node_vertex, strength, scales, caps = [], [], [], [], []
    src, dst, wts, inter = [], [], [], []
    start = 0
    for s, layer in enumerate(net.layers):
        offsets[layer.key] = start
        n = layer.n_participants
        node_layer.append(np.full(n, s, dtype=np.int64))
        node_vertex.append(layer.participants)
        i = np.searchsorted(layer.participants, layer.src)
        j = np.searchsorted(layer.participants, layer.dst)
        d = np.zeros(n)
        np.add.at(d, i, layer.weight)
        np.add.at(d, j, layer.weight)
        strength.append(d)
        m = layer.total_weight
        beta = params.beta_of(layer.key)
        scales.append(beta * params.gamma_of(layer.key) / (2.0 * m) if m > 0 else 0.0)
        caps.append(params.k_max_of(layer.key))
        src.append(i + start)
        dst.append(j + start)
        wts.append(beta * layer.weight)
        inter.append(np.zeros(len(i), dtype=bool))
        start += n
    for pair in net.couplings:
        w = params.omega_of(pair)
        if w <= 0:
            continue
        la, lb = net.layer(pair[0]), net.layer(pair[1])
        _, ia, ib = np.intersect1d(la.participants, lb.participants, return_indices=True)
        src.append(ia + offsets[pair[0]])
        dst.append(ib + offsets[pair[1]])
        wts.append(np.full(len(ia), w))
        inter.append(np.ones(len(ia), dtype=bool))

    def cat(parts, dtype):
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

    return SupraGraph(
        layer_keys=tuple(net.layer_keys),
        node_layer=cat(node_layer, np.int64),
        node_vertex=cat(node_vertex, np.int64),
        strength=cat(strength, float),
        null_scale=np.array(scales, dtype=float),
        k_max=tuple(caps),
        src=cat(src, np.int64),
        dst=cat(dst, np.int64),
        weight=cat(wts, float),
        inter=cat(inter, bool),
    )


class _Graph:
    """Adjacency-list view used by the optimizer (possibly aggregated).

    ``parts[v]`` lists ``(layer, strength, count)`` for the original nodes
    merged into ``v``; ``diag[v]`` is the null-term mass of pairs (i, i) of
    those nodes, which the quality excludes.
    """

    __slots__ = ("n", "parts", "diag", "selfw", "nbr", "wts", "scale", "k_max", "n_layers")

    def __init__(self, n, parts, diag, selfw, nbr, wts, scale, k_max):
        self.n = n
        self.parts = parts
        self.diag = diag
        self.selfw = selfw
        self.nbr = nbr
        self.wts = wts
        self.scale = scale
        self.k_max = k_max
        self.n_layers = len(scale)

    @classmethod
    def from_supra(cls, sg: SupraGraph) -> "_Graph":
        n = sg.n_nodes
        acc = [dict() for _ in range(n)]
        for u, v, w in zip(sg.src.tolist(), sg.dst.tolist(), sg.weight.tolist()):
            if w == 0 or u == v:
                continue
            acc[u][v] = acc[u].get(v, 0.0) + w
            acc[v][u] = acc[v].get(u, 0.0) + w
        scale = sg.null_scale.tolist()
        layer = sg.node_layer.tolist()
        deg = sg.strength.tolist()
        return cls(
            n,
            [((s, d, 1),) for s, d in zip(layer, deg)],
            [scale[s] * d * d / 2.0 for s, d in zip(layer, deg)],
            [0.0] * n,
            [list(a.keys()) for a in acc],
            [list(a.values()) for a in acc],
            scale,
            list(sg.k_max),
        )

    def quality(self, comm) -> float:
        q = sum(self.selfw) + sum(self.diag)
        for v in range(self.n):
            cv = comm[v]
            for u, w in zip(self.nbr[v], self.wts[v]):
                if u > v and comm[u] == cv:
                    q += w
        kap = {}
        for v in range(self.n):
            for s, d, _ in self.parts[v]:
                key = (comm[v], s)
                kap[key] = kap.get(key, 0.0) + d
        for (c, s), k in kap.items():
            q -= self.scale[s] * k * k / 2.0
        return q


class LocalMover:
    """Community bookkeeping and single-node move evaluation.

    ``comm`` holds the community of every node.  Community totals are kept
    per (community, layer).  A move may raise a layer's community count only
    while that count is below the layer cap.
    """

    def __init__(self, g: _Graph, comm):
        self.g = g
        n, L = g.n, g.n_layers
        n_comm = max(n, (max(comm) + 1) if len(comm) else 0) + 1
        self.comm = list(comm)
        self.n_comm = n_comm
        self.K = [0.0] * (n_comm * L)
        self.size = [0] * (n_comm * L)
        self.total_size = [0] * n_comm
        self.present = [set() for _ in range(L)]
        for v in range(n):
            c = self.comm[v]
            for s, d, cnt in g.parts[v]:
                self.K[c * L + s] += d
                self.size[c * L + s] += cnt
                self.present[s].add(c)
            self.total_size[c] += 1
        self.free = [c for c in range(n_comm) if self.total_size[c] == 0]
        heapq.heapify(self.free)

    def free_community(self) -> int:
        """Lowest-index empty community (lazy heap)."""
        free = self.free
        while free and self.total_size[free[0]] > 0:
            heapq.heappop(free)
        if free:
            return free[0]
        c = self.n_comm
        self.n_comm += 1
        self.K.extend([0.0] * self.g.n_layers)
        self.size.extend([0] * self.g.n_layers)
        self.total_size.append(0)
        heapq.heappush(free, c)
        return c

    def evaluate(self, v):
        """Best admissible target for ``v`` as ``(community, gain)``.

        The gain is relative to staying.  Staying wins unless a target
        improves by more than ``TOL``; among equal targets the lowest
        community index wins.  State is not modified.
        """
        g, L = self.g, self.g.n_layers
        comm, K, size, scale = self.comm, self.K, self.size, g.scale
        c_old = comm[v]
        parts = g.parts[v]
        w_to = {}
        for u, w in zip(g.nbr[v], g.wts[v]):
            c = comm[u]
            w_to[c] = w_to.get(c, 0.0) + w
        stay = w_to.get(c_old, 0.0)
        grow_ok = True
        blocked = []
        extra = None
        for s, d, cnt in parts:
            idx = c_old * L + s
            stay -= scale[s] * d * (K[idx] - d)
            cap = g.k_max[s]
            if cap is None:
                continue
            alone = size[idx] == cnt
            count = len(self.present[s]) - (1 if alone else 0)
            if count <= cap:
                extra = self.present[s] if extra is None else extra | self.present[s]
            if not (count < cap or alone):
                grow_ok = False
                blocked.append(s)
        candidates = w_to.keys() if extra is None else set(w_to) | extra
        best_c, best_gain = -1, -math.inf
        for c in candidates:
            if c == c_old:
                continue
            base = c * L
            if blocked and any(size[base + s] == 0 for s in blocked):
                continue
            gain = w_to.get(c, 0.0)
            for s, d, _ in parts:
                gain -= scale[s] * d * K[base + s]
            if gain > best_gain + TOL or (gain >= best_gain - TOL and c < best_c):
                best_c, best_gain = c, gain
        if grow_ok and self.total_size[c_old] > 1:
            c = self.free_community()
            if 0.0 > best_gain + TOL or (0.0 >= best_gain - TOL and c < best_c):
                best_c, best_gain = c, 0.0
        if best_c < 0 or best_gain <= stay + TOL:
            return c_old, 0.0
        return best_c, best_gain - stay

    def move(self, v, c):
        c_old = self.comm[v]
        if c == c_old:
            return
        g, L = self.g, self.g.n_layers
        while c >= self.n_comm:
            self.free_community()
        for s, d, cnt in g.parts[v]:
            idx = c_old * L + s
            self.K[idx] -= d
            self.size[idx] -= cnt
            if self.size[idx] == 0:
                self.K[idx] = 0.0
                self.present[s].discard(c_old)
            idx = c * L + s
            self.K[idx] += d
            self.size[idx] += cnt
            self.present[s].add(c)
        self.total_size[c_old] -= 1
        if self.total_size[c_old] == 0:
            heapq.heappush(self.free, c_old)
        self.total_size[c] += 1
        self.comm[v] = c

    def layer_count(self, s) -> int:
        return len(self.present[s])


def constrained_local_move(mover: LocalMover, node: int):
    """Decide and apply the best admissible move for ``node``; returns ``(community, gain)``."""
    c, gain = mover.evaluate(node)
    mover.move(node, c)
    return c, gain


def _move_nodes(mover: LocalMover, rng) -> float:
    g = mover.g
    order = rng.permutation(g.n).tolist()
    queue = deque(order)
    queued = [True] * g.n
    total = 0.0
    while queue:
        v = queue.popleft()
        queued[v] = False
        c, gain = mover.evaluate(v)
        if c == mover.comm[v]:
            continue
        mover.move(v, c)
        total += gain
        for u in g.nbr[v]:
            if not queued[u] and mover.comm[u] != c:
                queued[u] = True
                queue.append(u)
    return total


def _null(scale, parts, totals) -> float:
    """Null-model mass between a node's parts and per-layer totals."""
    return sum(scale[s] * d * totals.get(s, 0.0) for s, d, _ in parts)


def _refine(g: _Graph, comm, rng):
    """Leiden refinement: merge well-connected singletons inside each community."""
    ref = list(range(g.n))
    groups = {}
    for v in range(g.n):
        groups.setdefault(comm[v], []).append(v)
    scale = g.scale
    for c in sorted(groups):
        members = groups[c]
        if len(members) < 2:
            continue
        inside = set(members)
        k_comm = {}
        for v in members:
            for s, d, _ in g.parts[v]:
                k_comm[s] = k_comm.get(s, 0.0) + d
        ext = {}
        k_ref = {}
        for v in members:
            ext[v] = sum(w for u, w in zip(g.nbr[v], g.wts[v]) if u in inside)
            k_ref[v] = {s: d for s, d, _ in g.parts[v]}
        e_ref = dict(ext)
        size_ref = {v: 1 for v in members}

        def outside_null(tot):
            return sum(scale[s] * k * (k_comm[s] - k) for s, k in tot.items())

        for idx in rng.permutation(len(members)).tolist():
            v = members[idx]
            r_old = ref[v]
            if size_ref[r_old] != 1:
                continue
            if ext[v] < outside_null(k_ref[v]) - TOL:
                continue
            w_to = {}
            for u, w in zip(g.nbr[v], g.wts[v]):
                if u in inside:
                    r = ref[u]
                    w_to[r] = w_to.get(r, 0.0) + w
            cands, gains = [r_old], [0.0]
            for r in sorted(w_to):
                if r == r_old:
                    continue
                if e_ref[r] < outside_null(k_ref[r]) - TOL:
                    continue
                gain = w_to[r] - _null(scale, g.parts[v], k_ref[r])
                if gain >= 0:
                    cands.append(r)
                    gains.append(gain)
            if len(cands) == 1:
                continue
            gains = np.array(gains)
            prob = np.exp((gains - gains.max()) / REFINE_THETA)
            cum = np.cumsum(prob)
            pick = cands[min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), len(cands) - 1)]
            if pick == r_old:
                continue
            ref[v] = pick
            e_ref[pick] = e_ref[pick] + ext[v] - 2.0 * w_to[pick]
            tot = k_ref[pick]
            for s, d, _ in g.parts[v]:
                tot[s] = tot.get(s, 0.0) + d
            size_ref[pick] += 1
            size_ref[r_old] = 0
    return ref


def _aggregate(g: _Graph, ref, comm):
    relabel = {}
    for v in range(g.n):
        if ref[v] not in relabel:
            relabel[ref[v]] = len(relabel)
    member = [relabel[ref[v]] for v in range(g.n)]
    n2 = len(relabel)
    parts = [dict() for _ in range(n2)]
    diag = [0.0] * n2
    selfw = [0.0] * n2
    new_comm = [0] * n2
    acc = [dict() for _ in range(n2)]
    for v in range(g.n):
        a = member[v]
        for s, d, cnt in g.parts[v]:
            old = parts[a].get(s, (0.0, 0))
            parts[a][s] = (old[0] + d, old[1] + cnt)
        diag[a] += g.diag[v]
        selfw[a] += g.selfw[v]
        new_comm[a] = comm[v]
        for u, w in zip(g.nbr[v], g.wts[v]):
            b = member[u]
            if a == b:
                if u > v:
                    selfw[a] += w
            else:
                acc[a][b] = acc[a].get(b, 0.0) + w
    g2 = _Graph(
        n2,
        [tuple((s, d, cnt) for s, (d, cnt) in sorted(p.items())) for p in parts],
        diag,
        selfw,
        [list(a.keys()) for a in acc],
        [list(a.values()) for a in acc],
        g.scale,
        g.k_max,
    )
    return g2, member, new_comm


def _repair_caps(g: _Graph, mover: LocalMover):
    """Merge whole layer pieces of communities until every layer obeys its cap.

    ``g`` must be the unaggregated graph.
    """
    L = g.n_layers
    changed = False
    for s in range(L):
        cap = g.k_max[s]
        if cap is None:
            continue
        while mover.layer_count(s) > cap:
            pieces = {}
            for v in range(g.n):
                if g.parts[v][0][0] == s:
                    pieces.setdefault(mover.comm[v], []).append(v)
            best = None
            for c, nodes in sorted(pieces.items()):
                node_set = set(nodes)
                k_piece = sum(g.parts[v][0][1] for v in nodes)
                w_to = {}
                for v in nodes:
                    for u, w in zip(g.nbr[v], g.wts[v]):
                        if u not in node_set:
                            cu = mover.comm[u]
                            w_to[cu] = w_to.get(cu, 0.0) + w
                for c2 in sorted(pieces):
                    if c2 == c:
                        continue
                    gain = (
                        w_to.get(c2, 0.0)
                        - w_to.get(c, 0.0)
                        - g.scale[s] * k_piece * mover.K[c2 * L + s]
                    )
                    if best is None or gain > best[0] + TOL:
                        best = (gain, c, c2)
            _, c, c2 = best
            for v in pieces[c]:
                mover.move(v, c2)
            changed = True
    return changed


def _split_disconnected(g: _Graph, mover: LocalMover) -> bool:
    """Split communities into connected components where the caps allow it.

    ``g`` must be the unaggregated graph.
    """
    L = g.n_layers
    members = {}
    for v in range(g.n):
        members.setdefault(mover.comm[v], []).append(v)
    changed = False
    for c in sorted(members):
        nodes = members[c]
        if len(nodes) < 2:
            continue
        node_set = set(nodes)
        seen = set()
        comps = []
        for start in nodes:
            if start in seen:
                continue
            seen.add(start)
            comp, stack = [start], [start]
            while stack:
                v = stack.pop()
                for u in g.nbr[v]:
                    if u in node_set and u not in seen:
                        seen.add(u)
                        comp.append(u)
                        stack.append(u)
            comps.append(comp)
        for comp in comps[1:]:
            per_layer = {}
            for v in comp:
                s = g.parts[v][0][0]
                per_layer[s] = per_layer.get(s, 0) + 1
            ok = True
            for s, cnt in per_layer.items():
                cap = g.k_max[s]
                grows = mover.size[c * L + s] > cnt
                if cap is not None and grows and mover.layer_count(s) + 1 > cap:
                    ok = False
                    break
            if not ok:
                continue
            target = mover.free_community()
            for v in comp:
                mover.move(v, target)
            changed = True
    return changed


def _leiden(g0: _Graph, rng, debug: bool = False):
    comm = list(range(g0.n))
    g = g0
    chain = []
    q_track = g0.quality(comm) if debug else 0.0
    for _ in range(MAX_LEVELS):
        mover = LocalMover(g, comm)
        gained = _move_nodes(mover, rng)
        comm = mover.comm
        if debug:
            q_track += gained
            _check_quality(g0, _flatten(chain, comm), q_track)
        ref = _refine(g, comm, rng)
        if len(set(ref)) == g.n:
            break
        g, member, comm = _aggregate(g, ref, comm)
        chain.append(member)
        if debug:
            _check_quality(g0, _flatten(chain, comm), g.quality(comm))
    flat = _flatten(chain, comm)
    mover = LocalMover(g0, flat)
    _repair_caps(g0, mover)
    for _ in range(MAX_POLISH_ROUNDS):
        moved = _move_nodes(mover, rng) > 0
        split = _split_disconnected(g0, mover)
        if not moved and not split:
            break
    return mover.comm


def _flatten(chain, comm):
    if not chain:
        return list(comm)
    labels = list(range(len(chain[0])))
    for member in chain:
        labels = [member[x] for x in labels]
    return [comm[x] for x in labels]


def _check_quality(g0: _Graph, labels, expected):
    actual = g0.quality(labels)
    if abs(actual - expected) > 1e-9 * max(1.0, abs(actual)):
        raise AssertionError(f"tracked quality {expected!r} != recomputed {actual!r}")


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator owned by one call."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def maximize_supra(sg: SupraGraph, seed: int, debug: bool = False) -> np.ndarray:
    """Community label per supra node."""
    if sg.n_nodes == 0:
        return np.zeros(0, dtype=np.int64)
    g = _Graph.from_supra(sg)
    labels = _leiden(g, make_rng(seed), debug=debug)
    return np.asarray(labels, dtype=np.int64)


def supra_to_partition(net: MultilayerNetwork, labels: np.ndarray) -> MultilayerPartition:
    out, start = {}, 0
    for layer in net.layers:
        n = layer.n_participants
        out[layer.key] = labels[start : start + n]
        start += n
    return canonicalize(MultilayerPartition.from_arrays(net, out))


def partition_to_supra(net: MultilayerNetwork, partition: MultilayerPartition) -> np.ndarray:
    parts = [partition.labels_for(net, layer.key) for layer in net.layers]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def maximize(
    net: MultilayerNetwork, params: ModelParams, seed: int = 0, debug: bool = False
) -> MultilayerPartition:
    """Leiden-style modularity maximization; deterministic given the seed."""
    sg = build_supra(net, params)
    return supra_to_partition(net, maximize_supra(sg, seed, debug=debug))


class MultilayerLeiden(BaseEstimator):
    """Estimator wrapper around :func:`maximize`.

    ``fit(net)`` stores ``partition_`` and ``quality_``; uniform parameters
    are used unless an explicit :class:`ModelParams` is passed as ``params``.
    """

    def __init__(self, gamma=1.0, omega=1.0, beta=1.0, k_max=None, params=None, seed=0):
        self.gamma = gamma
        self.omega = omega
        self.beta = beta
        self.k_max = k_max
        self.params = params
        self.seed = seed

    def _resolve_params(self, net):
        if self.params is not None:
            return self.params
        return ModelParams.uniform(net, self.gamma, self.omega, self.beta, self.k_max)

    def fit(self, net: MultilayerNetwork, y=None):
        check_network(net)
        params = self._resolve_params(net)
        self.params_ = params
        self.partition_ = maximize(net, params, self.seed)
        self.quality_ = multilayer_modularity(net, params, self.partition_)
        return self

    def fit_predict(self, net: MultilayerNetwork, y=None) -> MultilayerPartition:
        return self.fit(net).partition_
