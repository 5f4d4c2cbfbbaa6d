"""Partition comparison and structure metrics.

Information quantities are in nats.  Reduced mutual information subtracts
``ln(Omega) / n`` from the mutual information, where ``Omega`` counts the
non-negative integer matrices with the contingency table's margins.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import stats

from .leiden import make_rng
from .network import Layer, MultilayerNetwork, MultilayerPartition

EXACT_MAX_CELLS = 16
EXACT_MAX_N = 200
EXACT_SMALL_N = 24
DEFAULT_SAMPLES = 4000


# contingency tables -----------------------------------------------------------


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    row_labels: tuple
    col_labels: tuple

    @property
    def a(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def b(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def _aligned(g1, g2) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(g1, Mapping) or isinstance(g2, Mapping):
        if not (isinstance(g1, Mapping) and isinstance(g2, Mapping)):
            raise TypeError("pass two mappings or two aligned arrays")
        common = sorted(set(g1) & set(g2))
        return np.array([g1[v] for v in common]), np.array([g2[v] for v in common])
    x, y = np.asarray(g1), np.asarray(g2)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("label arrays must be 1-d and aligned")
    return x, y


def contingency(g1, g2) -> ContingencyTable:
    """Counts over the common domain (mappings) or aligned label arrays."""
    x, y = _aligned(g1, g2)
    if len(x) == 0:
        raise ValueError("partitions share no elements")
    rl, xi = np.unique(x, return_inverse=True)
    cl, yi = np.unique(y, return_inverse=True)
    counts = np.zeros((len(rl), len(cl)), dtype=np.int64)
    np.add.at(counts, (xi, yi), 1)
    return ContingencyTable(counts, tuple(rl.tolist()), tuple(cl.tolist()))


# counting tables with fixed margins --------------------------------------------


@dataclass(frozen=True)
class TableCount:
    log_value: float
    value: int | None
    stderr: float = 0.0
    approximate: bool = False


def _bounded_compositions(caps: tuple, total: int) -> int:
    """Number of integer vectors ``0 <= x_i <= caps[i]`` summing to ``total``."""
    dp = [1] + [0] * total
    for cap in caps:
        prefix = [0]
        for v in dp:
            prefix.append(prefix[-1] + v)
        dp = [prefix[k + 1] - prefix[max(0, k - cap)] for k in range(total + 1)]
    return dp[total]


def _column_splits(rows: tuple, need: int):
    """All ``x`` with ``0 <= x_i <= rows[i]`` and ``sum(x) == need``."""
    suffix = [0] * (len(rows) + 1)
    for i in range(len(rows) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + rows[i]
    x = [0] * len(rows)

    def rec(i, left):
        if i == len(rows) - 1:
            x[i] = left
            yield x
            return
        for v in range(max(0, left - suffix[i + 1]), min(rows[i], left) + 1):
            x[i] = v
            yield from rec(i + 1, left - v)

    yield from rec(0, need)


@functools.lru_cache(maxsize=1 << 18)
def _count_sorted(rows: tuple, cols: tuple) -> int:
    # rows and cols: positive, sorted descending, equal sums; recursion runs over the shorter side
    if len(rows) > len(cols):
        rows, cols = cols, rows
    if len(rows) <= 1:
        return 1
    if len(cols) == 2:
        return _bounded_compositions(rows, cols[1])
    # peel the smallest column: fewest splits to enumerate
    last, rest = cols[-1], cols[:-1]
    total = 0
    for x in _column_splits(rows, last):
        left = tuple(sorted((r - v for r, v in zip(rows, x) if r > v), reverse=True))
        total += _count_sorted(left, rest)
    return total


def _normalize_margins(a, b) -> tuple[tuple, tuple, int]:
    a = [int(v) for v in np.asarray(a).ravel()]
    b = [int(v) for v in np.asarray(b).ravel()]
    if any(v < 0 for v in a + b):
        raise ValueError("margins must be non-negative")
    if sum(a) != sum(b):
        raise ValueError(f"margin sums differ: {sum(a)} != {sum(b)}")
    a = tuple(sorted((v for v in a if v), reverse=True))
    b = tuple(sorted((v for v in b if v), reverse=True))
    if len(a) > len(b):
        a, b = b, a
    return a, b, sum(a)


def _primes_below(limit: int, count: int) -> list[int]:
    out, v = [], limit - 1
    while len(out) < count:
        if v % 2 and all(v % d for d in range(3, math.isqrt(v) + 1, 2)):
            out.append(v)
        v -= 2 if v % 2 else 1
    return out


_MODULI = _primes_below(2**31, 8)


def _count_dp_mod(rows: tuple, cols: tuple, p: int) -> int:
    # state: remaining row sums; absorbing a column of sum c is a suffix sum
    # along every axis restricted to the slice whose total dropped by c
    shape = tuple(r + 1 for r in rows)
    total_index = sum(np.indices(shape, sparse=True))
    f = np.zeros(shape, dtype=np.int64)
    f[tuple(rows)] = 1
    left = sum(rows)
    for c in cols[:-1]:
        for axis in range(len(rows)):
            f = np.flip(np.cumsum(np.flip(f, axis), axis), axis) % p
        left -= c
        f = np.where(total_index == left, f, 0)
    return int(f.sum() % p)


def _count_dp(rows: tuple, cols: tuple) -> int:
    bound = math.comb(sum(rows) + len(rows) * len(cols) - 1, len(rows) * len(cols) - 1)
    residues, moduli, prod = [], [], 1
    for p in _MODULI:
        residues.append(_count_dp_mod(rows, cols, p))
        moduli.append(p)
        prod *= p
        if prod > bound:
            break
    else:
        raise OverflowError("table count exceeds the modular range")
    value = 0
    for r, p in zip(residues, moduli):
        q = prod // p
        value += r * q * pow(q, -1, p)
    return value % prod


DP_MAX_STATES = 1 << 23


def count_tables_exact(a, b) -> int:
    """Exact number of non-negative integer matrices with row sums ``a`` and column sums ``b``."""
    rows, cols = _normalize_margins(a, b)[:2]
    if len(rows) <= 1:
        return 1
    if math.prod(r + 1 for r in rows) <= DP_MAX_STATES:
        return _count_dp(rows, cols)
    return _count_sorted(rows, cols)


def count_tables_sampled(a, b, samples: int = DEFAULT_SAMPLES, seed: int = 0) -> TableCount:
    """Sequential importance sampling estimate of the table count.

    Cells are filled row by row, each drawn uniformly over its feasible
    range; the product of range sizes is an unbiased estimate of the count.
    """
    rows, cols, _ = _normalize_margins(a, b)
    if not rows:
        return TableCount(0.0, 1, 0.0, False)
    rng = make_rng(seed)
    col_left = np.tile(np.array(cols, dtype=np.int64), (samples, 1))
    logw = np.zeros(samples)
    for i, r in enumerate(rows):
        if i == len(rows) - 1:
            break  # last row is forced
        row_left = np.full(samples, r, dtype=np.int64)
        for j in range(len(cols) - 1):
            after = col_left[:, j + 1 :].sum(axis=1)
            lo = np.maximum(0, row_left - after)
            hi = np.minimum(row_left, col_left[:, j])
            span = hi - lo + 1
            x = lo + np.floor(rng.random(samples) * span).astype(np.int64)
            logw += np.log(span)
            row_left -= x
            col_left[:, j] -= x
        col_left[:, -1] -= row_left
    top = logw.max()
    w = np.exp(logw - top)
    mean = w.mean()
    log_est = top + math.log(mean)
    se = float(w.std(ddof=1) / (math.sqrt(samples) * mean)) if samples > 1 else math.inf
    return TableCount(log_est, None, se, True)


def in_exact_regime(a, b) -> bool:
    rows, cols, n = _normalize_margins(a, b)
    return n <= EXACT_SMALL_N or (len(rows) * len(cols) <= EXACT_MAX_CELLS and n <= EXACT_MAX_N)


def count_tables(a, b, method: str = "auto", samples: int = DEFAULT_SAMPLES, seed: int = 0) -> TableCount:
    """Count of tables with margins ``(a, b)``: exact when small, otherwise a flagged estimate."""
    if method not in ("auto", "exact", "sample"):
        raise ValueError("method must be 'auto', 'exact' or 'sample'")
    if method == "sample" or (method == "auto" and not in_exact_regime(a, b)):
        return count_tables_sampled(a, b, samples, seed)
    value = count_tables_exact(a, b)
    return TableCount(math.log(value), value)


# reduced mutual information -----------------------------------------------------


@dataclass(frozen=True)
class RmiResult:
    rmi: float
    mi: float
    log_omega: float
    n: int
    approximate: bool = False
    stderr: float = 0.0


def mutual_information(table: ContingencyTable) -> float:
    n = table.n
    c = table.counts
    a, b = table.a, table.b
    i, j = np.nonzero(c)
    nij = c[i, j].astype(float)
    return float(np.sum(nij / n * np.log(n * nij / (a[i] * b[j]))))


def reduced_mutual_information(g1, g2, seed: int = 0) -> RmiResult:
    table = contingency(g1, g2)
    count = count_tables(table.a, table.b, seed=seed)
    n = table.n
    mi = mutual_information(table)
    return RmiResult(mi - count.log_value / n, mi, count.log_value, n, count.approximate, count.stderr / n)


def rmi(g1, g2, normalized: bool = False, seed: int = 0) -> float:
    """Reduced mutual information of two labelings (nats).

    ``normalized`` divides by the mean self-information:
    ``2 RMI(g1, g2) / (RMI(g1, g1) + RMI(g2, g2))``, which is NaN when both
    labelings are constant.
    """
    value = reduced_mutual_information(g1, g2, seed).rmi
    if not normalized:
        return value
    x, y = _aligned(g1, g2)
    denom = reduced_mutual_information(x, x, seed).rmi + reduced_mutual_information(y, y, seed).rmi
    if denom == 0:
        return math.nan
    return 2.0 * value / denom


def rmi_grid(
    net: MultilayerNetwork,
    p1: MultilayerPartition,
    p2: MultilayerPartition | None = None,
    normalized: bool = True,
) -> np.ndarray:
    """Layer-by-layer RMI: entry ``(s, r)`` compares layer ``s`` of ``p1`` with layer ``r`` of ``p2``.

    Entries without shared vertices are NaN.
    """
    p2 = p1 if p2 is None else p2
    keys = net.layer_keys
    out = np.full((len(keys), len(keys)), np.nan)
    for s, ks in enumerate(keys):
        for r, kr in enumerate(keys):
            a, b = p1.layer_labels(ks), p2.layer_labels(kr)
            if set(a) & set(b):
                out[s, r] = rmi(a, b, normalized)
    return out


def partition_rmi(net: MultilayerNetwork, p1: MultilayerPartition, p2: MultilayerPartition) -> float:
    """Mean over layers of the normalized RMI between matching layers."""
    values = []
    for key in net.layer_keys:
        a, b = p1.layer_labels(key), p2.layer_labels(key)
        v = rmi(a, b, normalized=True)
        if math.isnan(v):
            # both constant on this layer: identical iff co-assignments agree
            v = 1.0 if len(set(a.values())) == len(set(b.values())) == 1 else 0.0
        values.append(v)
    return float(np.mean(values))


# adaptive external-internal index -------------------------------------------------


class DegenerateNullError(ArithmeticError):
    pass


@dataclass(frozen=True)
class AeiEntry:
    layer: str
    c1: int | None
    c2: int | None
    m_int: int
    m_ext: int
    ei_obs: float
    ei_null_mean: float
    ei_null_sd: float
    aei: float


def ei_index(m_int: int, m_ext: int) -> float:
    return (m_ext - m_int) / (m_ext + m_int)


def double_edge_swaps(src, dst, n_swaps: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Degree-preserving rewiring of a simple undirected graph.

    Each attempt picks two edges ``(a, b)``, ``(c, d)`` and a random
    orientation, proposing ``(a, d), (c, b)``; proposals creating a self-loop
    or a multi-edge are rejected.
    """
    src = [int(v) for v in src]
    dst = [int(v) for v in dst]
    m = len(src)
    if m < 2:
        return np.array(src), np.array(dst)
    present = {(min(a, b), max(a, b)) for a, b in zip(src, dst)}
    picks = rng.integers(m, size=(n_swaps, 2))
    flips = rng.random(n_swaps) < 0.5
    for (e, f), flip in zip(picks.tolist(), flips.tolist()):
        if e == f:
            continue
        a, b = src[e], dst[e]
        c, d = (dst[f], src[f]) if flip else (src[f], dst[f])
        if a == d or c == b:
            continue
        new1 = (a, d) if a < d else (d, a)
        new2 = (c, b) if c < b else (b, c)
        if new1 in present or new2 in present or new1 == new2:
            continue
        present.discard((min(a, b), max(a, b)))
        present.discard((min(c, d), max(c, d)))
        present.add(new1)
        present.add(new2)
        src[e], dst[e] = new1
        src[f], dst[f] = new2
    return np.array(src), np.array(dst)


def _aei_from_edges(src, dst, labels_of, layer_key, c1, c2, rewires, seed) -> AeiEntry:
    src, dst = np.asarray(src), np.asarray(dst)
    if len(src) == 0:
        raise ValueError(f"layer {layer_key!r}: no edges among the compared communities")
    same = labels_of[src] == labels_of[dst]
    m_int = int(same.sum())
    m_ext = len(src) - m_int
    ei_obs = ei_index(m_int, m_ext)
    rng = make_rng(seed)
    null = np.empty(rewires)
    for z in range(rewires):
        s, d = double_edge_swaps(src, dst, 10 * len(src), rng)
        k = int(np.count_nonzero(labels_of[s] == labels_of[d]))
        null[z] = ei_index(k, len(src) - k)
    mean = float(null.mean())
    sd = float(null.std(ddof=1)) if rewires > 1 else 0.0
    if mean + 1.0 <= 1e-12:
        raise DegenerateNullError(f"layer {layer_key!r}: degenerate null (rewiring cannot mix)")
    return AeiEntry(layer_key, c1, c2, m_int, m_ext, ei_obs, mean, sd, (mean - ei_obs) / (mean + 1.0))


def _layer_arrays(layer: Layer, labels: Mapping[str, int] | np.ndarray, registry=None):
    if isinstance(labels, Mapping):
        ids = registry.ids if registry is not None else None
        if ids is None:
            raise ValueError("a registry is needed to resolve vertex ids")
        lab = np.array([labels[ids[v]] for v in layer.participants])
    else:
        lab = np.asarray(labels)
    full = np.full(int(layer.participants.max()) + 1 if layer.n_participants else 0, -1, dtype=np.int64)
    full[layer.participants] = lab
    return full


def aei(
    layer: Layer,
    labels,
    pair: tuple[int, int],
    rewires: int = 100,
    seed: int = 0,
    registry=None,
) -> AeiEntry:
    """Segregation of two communities relative to degree-preserving rewiring.

    ``labels`` is aligned with ``layer.participants`` (or maps vertex ids to
    labels, with ``registry``).  On the subgraph induced by the two
    communities, ``ei = (m_ext - m_int) / (m_ext + m_int)`` and
    ``aei = (null_mean - ei_obs) / (null_mean + 1)``.
    """
    full = _layer_arrays(layer, labels, registry)
    c1, c2 = sorted(pair)
    if c1 == c2:
        raise ValueError("pair must name two different communities")
    for c in (c1, c2):
        if not np.any(full == c):
            raise ValueError(f"layer {layer.key!r}: community {c} is empty")
    inside = np.isin(full[layer.src], (c1, c2)) & np.isin(full[layer.dst], (c1, c2))
    return _aei_from_edges(layer.src[inside], layer.dst[inside], full, layer.key, c1, c2, rewires, seed)


def aei_pooled(layer: Layer, labels, rewires: int = 100, seed: int = 0, registry=None) -> AeiEntry:
    """All community pairs of one layer pooled into a single index."""
    full = _layer_arrays(layer, labels, registry)
    return _aei_from_edges(layer.src, layer.dst, full, layer.key, None, None, rewires, seed)


def _entry_seed(seed: int, *parts) -> int:
    h = hashlib.blake2b(":".join(map(str, (seed,) + parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def aei_table(
    net: MultilayerNetwork,
    partition: MultilayerPartition,
    rewires: int = 100,
    seed: int = 0,
    aggregate: bool = False,
) -> list[AeiEntry | tuple]:
    """AEI for every community pair of every layer (or one pooled entry per layer).

    Pairs that cannot be scored yield ``(layer, c1, c2, reason)`` tuples.
    """
    out = []
    for layer in net.layers:
        labels = partition.labels_for(net, layer.key)
        if aggregate:
            try:
                out.append(aei_pooled(layer, labels, rewires, _entry_seed(seed, layer.key)))
            except (ValueError, DegenerateNullError) as exc:
                out.append((layer.key, None, None, str(exc)))
            continue
        comms = sorted(set(labels.tolist()))
        for i, c1 in enumerate(comms):
            for c2 in comms[i + 1 :]:
                try:
                    out.append(aei(layer, labels, (c1, c2), rewires, _entry_seed(seed, layer.key, c1, c2)))
                except (ValueError, DegenerateNullError) as exc:
                    out.append((layer.key, c1, c2, str(exc)))
    return out


# layer similarity -----------------------------------------------------------------


def layer_similarity(net: MultilayerNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Edge-set Jaccard and degree Kendall tau-b for every layer pair.

    Both use the vertices participating in both layers; Jaccard counts
    edges with both endpoints among them, tau-b compares those vertices'
    degrees in each layer.  Undefined entries are NaN.
    """
    if len(net.layers) < 2:
        raise ValueError("layer similarity needs at least two layers")
    n = net.n_vertices
    L = len(net.layers)
    jac = np.full((L, L), np.nan)
    tau = np.full((L, L), np.nan)
    degrees = [layer.degrees(n) for layer in net.layers]
    for s, ls in enumerate(net.layers):
        for r, lr in enumerate(net.layers):
            common = np.intersect1d(ls.participants, lr.participants)
            if len(common) == 0:
                continue
            es = _edges_within(ls, common)
            er = _edges_within(lr, common)
            union = len(es | er)
            if union:
                jac[s, r] = len(es & er) / union
            if len(common) > 1:
                with np.errstate(all="ignore"):
                    t = stats.kendalltau(degrees[s][common], degrees[r][common], variant="b")
                tau[s, r] = t.statistic
    return jac, tau


def _edges_within(layer: Layer, vertices: np.ndarray) -> set:
    keep = np.isin(layer.src, vertices) & np.isin(layer.dst, vertices)
    return set(zip(layer.src[keep].tolist(), layer.dst[keep].tolist()))


# participation and power ------------------------------------------------------------


@dataclass(frozen=True)
class LayerParticipation:
    layer: str
    n_active: int
    rate: float


@dataclass(frozen=True)
class CoalitionShare:
    layer: str
    coalition: int
    n_members: int
    member_share: float
    power_share: float | None


def participation_and_power(
    net: MultilayerNetwork, partition: MultilayerPartition
) -> tuple[list[LayerParticipation], list[CoalitionShare]]:
    """Participation rate per layer and each coalition's share of actors and power.

    Coalition members are the layer's active vertices (degree >= 1), so
    member shares of a layer add up to its participation rate.  Power shares
    are None when the registry's total power is zero.
    """
    n = net.n_vertices
    power = net.registry.powers
    total_power = float(power.sum())
    rates, shares = [], []
    for layer in net.layers:
        deg = layer.degrees(n)
        active = layer.participants[deg[layer.participants] >= 1]
        rates.append(LayerParticipation(layer.key, len(active), len(active) / n))
        labels = partition.labels_for(net, layer.key)
        lab = dict(zip(layer.participants.tolist(), labels.tolist()))
        members: dict[int, list[int]] = {}
        for v in active.tolist():
            members.setdefault(lab[v], []).append(v)
        for c in sorted(members):
            idx = np.array(members[c])
            ps = float(power[idx].sum()) / total_power if total_power > 0 else None
            shares.append(CoalitionShare(layer.key, c, len(idx), len(idx) / n, ps))
    return rates, shares


def degree_by_layer(net: MultilayerNetwork) -> np.ndarray:
    """Vertex-by-layer degree matrix (zero where a vertex does not participate)."""
    return np.stack([layer.degrees(net.n_vertices) for layer in net.layers], axis=1)
