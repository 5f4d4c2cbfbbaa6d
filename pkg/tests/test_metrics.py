import itertools
import math

import numpy as np
import pytest

from coalmux.metrics import (
    DegenerateNullError,
    aei,
    aei_table,
    contingency,
    count_tables,
    count_tables_exact,
    double_edge_swaps,
    ei_index,
    in_exact_regime,
    layer_similarity,
    participation_and_power,
    partition_rmi,
    rmi,
    rmi_grid,
)

from conftest import clique_edges, make_net, partition_from, random_layer_edges
from oracles import integer_partitions, tables_brute_force, tables_row_dp


# table counting


@pytest.mark.parametrize(
    "a,b,expected",
    [((2, 2), (2, 2), 3), ((1, 1, 1), (1, 1, 1), 6), ((3,), (1, 1, 1), 1), ((1,) * 6, (1,) * 6, 720)],
)
def test_count_tables_known(a, b, expected):
    assert count_tables_exact(a, b) == expected


def test_count_tables_matches_literal_enumeration():
    for n in range(1, 8):
        parts = list(integer_partitions(n))
        for a, b in itertools.product(parts, parts):
            assert count_tables_exact(a, b) == tables_brute_force(a, b), (a, b)


def test_count_tables_matches_row_dp_random_orders():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 13))
        a = np.bincount(rng.integers(int(rng.integers(1, 6)), size=n))
        b = np.bincount(rng.integers(int(rng.integers(1, 6)), size=n))
        a, b = a[a > 0].tolist(), b[b > 0].tolist()
        rng.shuffle(a)
        assert count_tables_exact(a, b) == tables_row_dp(a, b)
        assert count_tables_exact(b, a) == count_tables_exact(a, b)


def test_count_tables_large_margins_exact():
    a = (50, 50, 50, 50)
    assert in_exact_regime(a, a)
    assert count_tables(a, a).value == 2697649164626


def test_sampled_count_is_flagged_and_close():
    a, b = (3, 4, 2, 5, 6), (4, 4, 4, 4, 4)
    exact = count_tables(a, b, method="exact")
    est = count_tables(a, b, method="sample", samples=20000, seed=1)
    assert est.approximate and est.value is None and est.stderr > 0
    assert not exact.approximate
    assert est.log_value == pytest.approx(exact.log_value, abs=0.05)


def test_large_problem_uses_sampling():
    rng = np.random.default_rng(1)
    x, y = rng.integers(8, size=500), rng.integers(8, size=500)
    t = contingency(x, y)
    assert not in_exact_regime(t.a, t.b)
    assert count_tables(t.a, t.b).approximate


# reduced mutual information


def test_rmi_two_blocks():
    g = [0, 0, 1, 1]
    assert rmi(g, g) == pytest.approx(math.log(2) - math.log(3) / 4, abs=1e-12)
    assert rmi(g, g) == pytest.approx(0.41849, abs=1e-5)


def test_rmi_symmetry_and_label_permutation():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        x, y = rng.integers(4, size=n), rng.integers(3, size=n)
        perm = rng.permutation(4)
        assert rmi(x, y) == pytest.approx(rmi(y, x), abs=1e-12)
        assert rmi(perm[x], y) == pytest.approx(rmi(x, y), abs=1e-12)


def test_normalized_self_is_one():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.integers(5, size=int(rng.integers(3, 80)))
        if len(set(x.tolist())) < 2:
            continue
        assert rmi(x, x, normalized=True) == pytest.approx(1.0, abs=1e-12)


def test_constant_labels_give_nan_normalized():
    assert math.isnan(rmi([0, 0, 0], [1, 1, 1], normalized=True))


def test_independent_labels_near_zero():
    rng = np.random.default_rng(4)
    vals = [rmi(rng.integers(3, size=200), rng.integers(3, size=200), normalized=True) for _ in range(10)]
    # the plug-in information term leaves a small negative bias
    assert np.mean(vals) <= 0.05
    assert min(vals) > -0.15


def test_mapping_inputs_use_common_domain():
    g1 = {"a": 0, "b": 0, "c": 1, "d": 1, "x": 5}
    g2 = {"a": 1, "b": 1, "c": 0, "d": 0, "y": 2}
    assert rmi(g1, g2) == pytest.approx(rmi([0, 0, 1, 1], [0, 0, 1, 1]))
    with pytest.raises(ValueError):
        contingency({"a": 0}, {"b": 0})


def test_rmi_grid_and_partition_rmi():
    net = make_net(6, {"A": clique_edges(range(3)), "B": clique_edges(range(3, 6))})
    p = partition_from(net, {"A": [0, 0, 0, 1, 1, 1], "B": [0, 1, 0, 1, 0, 1]})
    grid = rmi_grid(net, p)
    assert np.allclose(np.diag(grid), 1.0)
    assert grid[0, 1] == pytest.approx(grid[1, 0])
    assert partition_rmi(net, p, p) == pytest.approx(1.0)


# AEI


def test_aei_segregated_pair_is_one():
    edges = clique_edges(range(5)) + clique_edges(range(5, 10))
    layer = make_net(10, {"A": edges}).layers[0]
    entry = aei(layer, np.array([0] * 5 + [1] * 5), (0, 1), rewires=50, seed=0)
    assert entry.ei_obs == -1.0
    assert entry.aei == pytest.approx(1.0, abs=1e-9)


def test_ei_index():
    assert ei_index(3, 1) == -0.5
    assert ei_index(0, 4) == 1.0


def test_double_edge_swaps_preserve_degrees_and_simplicity():
    rng = np.random.default_rng(5)
    src, dst = zip(*random_layer_edges(rng, 30, 0.2))
    s2, d2 = double_edge_swaps(src, dst, 2000, rng)
    assert np.array_equal(np.bincount(np.r_[src, dst], minlength=30), np.bincount(np.r_[s2, d2], minlength=30))
    pairs = {(min(a, b), max(a, b)) for a, b in zip(s2.tolist(), d2.tolist())}
    assert len(pairs) == len(src) and all(a != b for a, b in pairs)
    assert pairs != {(min(a, b), max(a, b)) for a, b in zip(src, dst)}


def test_degenerate_null_raises():
    # only community 0 has edges and a triangle cannot be rewired
    lab = np.array([0, 0, 0, 1])
    layer = make_net(4, {"A": clique_edges(range(3))}).layers[0]
    with pytest.raises(DegenerateNullError):
        aei(layer, lab, (0, 1), rewires=20)


def test_aei_is_seeded():
    rng = np.random.default_rng(6)
    layer = make_net(40, {"A": random_layer_edges(rng, 40, 0.15)}).layers[0]
    lab = rng.integers(2, size=40)
    assert aei(layer, lab, (0, 1), rewires=20, seed=3) == aei(layer, lab, (0, 1), rewires=20, seed=3)


def test_aei_table_reports_unscorable_pairs():
    net = make_net(6, {"A": clique_edges(range(3)) + clique_edges(range(3, 6))})
    p = partition_from(net, {"A": [0, 0, 0, 1, 1, 2]})
    rows = aei_table(net, p, rewires=10)
    assert len(rows) == 3
    assert any(isinstance(r, tuple) for r in rows)


# layer similarity


def _tau_b(x, y):
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif dx == dy:
            conc += 1
        else:
            disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def test_layer_similarity_hand_built():
    net = make_net(5, {"A": [(0, 1), (1, 2), (2, 3)], "B": [(0, 1), (1, 2), (3, 4)], "C": [(0, 4)]})
    jac, tau = layer_similarity(net)
    assert np.allclose(np.diag(jac), 1.0) and np.allclose(np.diag(tau), 1.0)
    assert jac[0, 1] == pytest.approx(0.5)
    assert jac[0, 2] == 0.0
    assert tau[0, 1] == pytest.approx(_tau_b([1, 2, 2, 1, 0], [1, 2, 1, 1, 1]))
    assert np.allclose(jac, jac.T, equal_nan=True)


def test_layer_similarity_needs_two_layers():
    with pytest.raises(ValueError):
        layer_similarity(make_net(3, {"A": [(0, 1)]}))


# participation and power


def test_power_share_and_participation():
    net = make_net(4, {"A": [(0, 1), (2, 3)]}, powers=[1, 2, 3, 4])
    p = partition_from(net, {"A": [0, 0, 1, 1]})
    rates, shares = participation_and_power(net, p)
    assert rates[0].rate == 1.0
    by_c = {s.coalition: s for s in shares}
    assert by_c[1].power_share == pytest.approx(0.7)
    assert by_c[0].power_share == pytest.approx(0.3)


def test_member_shares_sum_to_participation():
    rng = np.random.default_rng(7)
    net = make_net(30, {"A": random_layer_edges(rng, 30, 0.05), "B": random_layer_edges(rng, 30, 0.1)})
    p = partition_from(net, {k: rng.integers(3, size=30) for k in "AB"})
    rates, shares = participation_and_power(net, p)
    for r in rates:
        total = sum(s.member_share for s in shares if s.layer == r.layer)
        assert total == pytest.approx(r.rate)
