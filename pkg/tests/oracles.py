"""Slow reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def modularity_pairs(net, params, partition):
    """Unnormalized multilayer modularity by explicit double loop over vertex pairs."""
    q = 0.0
    n = net.n_vertices
    for layer in net.layers:
        m = layer.total_weight
        if m == 0:
            continue
        a = np.zeros((n, n))
        for i, j, w in zip(layer.src, layer.dst, layer.weight):
            a[i, j] = a[j, i] = w
        d = a.sum(axis=1)
        g = dict(zip(layer.participants.tolist(), partition.labels_for(net, layer.key).tolist()))
        part = layer.participants.tolist()
        for x, i in enumerate(part):
            for j in part[x + 1 :]:
                if g[i] == g[j]:
                    q += params.beta_of(layer.key) * (a[i, j] - params.gamma_of(layer.key) * d[i] * d[j] / (2 * m))
    for s, r in net.couplings:
        gs = dict(zip(net.layer(s).participants.tolist(), partition.labels_for(net, s).tolist()))
        gr = dict(zip(net.layer(r).participants.tolist(), partition.labels_for(net, r).tolist()))
        for v in set(gs) & set(gr):
            if gs[v] == gr[v]:
                q += params.omega_of((s, r))
    return q


def set_partitions(n, max_blocks=None):
    """All set partitions of range(n) as restricted growth strings."""
    def rec(prefix, k):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        top = k + 1 if max_blocks is None else min(k + 1, max_blocks)
        for c in range(top):
            yield from rec(prefix + [c], max(k, c + 1))
    if n == 0:
        yield ()
        return
    yield from rec([0], 1)


def tables_brute_force(a, b):
    """Count non-negative integer matrices with margins (a, b) by literal enumeration."""
    a, b = list(a), list(b)
    if not a or not b:
        return 1 if sum(a) == sum(b) == 0 else 0
    count = 0

    def fill_row(i, cols_left):
        nonlocal count
        if i == len(a):
            if all(c == 0 for c in cols_left):
                count += 1
            return
        for row in itertools.product(*(range(min(c, a[i]) + 1) for c in cols_left)):
            if sum(row) == a[i]:
                fill_row(i + 1, [c - x for c, x in zip(cols_left, row)])

    fill_row(0, b)
    return count


def tables_row_dp(a, b):
    """Count tables by a row-at-a-time dictionary DP over remaining column sums."""
    states = {tuple(b): 1}
    for r in a:
        nxt = {}
        for cols, ways in states.items():
            def spread(j, left, cur):
                if j == len(cols) - 1:
                    if left <= cols[j]:
                        key = tuple(cur + [cols[j] - left])
                        nxt[key] = nxt.get(key, 0) + ways
                    return
                for x in range(min(left, cols[j]) + 1):
                    spread(j + 1, left - x, cur + [cols[j] - x])
            spread(0, r, [])
        states = nxt
    return sum(v for k, v in states.items() if not any(k))


def integer_partitions(n, max_part=None):
    max_part = n if max_part is None else max_part
    if n == 0:
        yield ()
        return
    for first in range(min(n, max_part), 0, -1):
        for rest in integer_partitions(n - first, first):
            yield (first,) + rest


def supra_optimum(sg, max_per_layer=None):
    """Exhaustive maximum of the supra-graph quality under per-layer caps."""
    layer = sg.node_layer
    best, best_labels = -math.inf, None
    for g in set_partitions(sg.n_nodes):
        g = np.array(g)
        if max_per_layer is not None and any(
            len(set(g[layer == s].tolist())) > max_per_layer for s in range(sg.n_layers)
        ):
            continue
        q = sg.quality(g)
        if q > best:
            best, best_labels = q, g
    return best, best_labels


def improving_single_moves(sg, labels, tol=1e-9):
    """Single-node relabelings that raise quality while respecting ``sg.k_max``."""
    labels = np.asarray(labels).copy()
    q0 = sg.quality(labels)
    fresh = int(labels.max()) + 1
    found = []
    for v in range(sg.n_nodes):
        old = labels[v]
        for c in set(labels.tolist()) | {fresh}:
            if c == old:
                continue
            labels[v] = c
            s = sg.node_layer[v]
            cap = sg.k_max[s]
            ok = cap is None or len(set(labels[sg.node_layer == s].tolist())) <= cap
            if ok and sg.quality(labels) > q0 + tol:
                found.append((v, c))
            labels[v] = old
    return found


def backbone_monte_carlo(layer, samples=100_000, seed=0):
    """Resampling oracle for edge p-values.

    The layer's total weight ``T`` (integer) is redistributed unit by unit:
    each unit picks two endpoints independently with probability
    ``s_i / 2T``.  Pairs that are not edges of the layer are pooled into one
    bucket, which leaves the multinomial law of the edge counts unchanged.
    Returns the fraction of samples with count >= observed weight.
    """
    rng = np.random.default_rng(seed)
    total = int(round(layer.total_weight))
    n = int(layer.participants.max()) + 1
    s = layer.strengths(n)
    p_end = s / (2.0 * total)
    p_edge = 2.0 * p_end[layer.src] * p_end[layer.dst]
    pvals = np.append(p_edge, max(0.0, 1.0 - p_edge.sum()))
    out = np.zeros(layer.n_edges)
    done = 0
    while done < samples:
        chunk = min(20_000, samples - done)
        counts = rng.multinomial(total, pvals, size=chunk)[:, :-1]
        out += (counts >= layer.weight[None, :]).sum(axis=0)
        done += chunk
    return out / samples
