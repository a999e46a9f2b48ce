import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierprob.hierarchy import (HierarchySpec, StructureError, aggregate_bottom, build_summing_matrix,
                                coherency_residual, random_hierarchy)

FIG1_S = np.array([
    [1, 1, 1, 1, 1],
    [1, 1, 1, 0, 0],
    [0, 0, 0, 1, 1],
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, 0, 1, 0, 0],
    [0, 0, 0, 1, 0],
    [0, 0, 0, 0, 1],
])


def test_fig1_summing_matrix(fig1, S1):
    assert fig1.nodes == ("Total", "A", "B", "AA", "AB", "AC", "BA", "BB")
    np.testing.assert_array_equal(S1.entries, FIG1_S)
    assert (S1.n, S1.m) == (8, 5)


def test_single_node():
    spec = HierarchySpec.from_edges([("root", None)])
    np.testing.assert_array_equal(build_summing_matrix(spec).entries, [[1]])


def test_root_two_leaves():
    spec = HierarchySpec.from_edges([("t", ""), ("a", "t"), ("b", "t")])
    np.testing.assert_array_equal(build_summing_matrix(spec).entries, [[1, 1], [1, 0], [0, 1]])


def test_levels_and_children(fig1):
    assert fig1.levels == (1, 2, 2, 3, 3, 3, 3, 3)
    assert fig1.children("A") == ("AA", "AB", "AC")
    assert fig1.internal_nodes == ("Total", "A", "B")


def test_input_order_does_not_matter_for_levels():
    spec = HierarchySpec.from_edges([("x", "A"), ("A", "T"), ("T", None), ("y", "A"), ("B", "T"), ("z", "B")])
    assert spec.nodes == ("T", "A", "B", "x", "y", "z")


def test_unbalanced_tree_keeps_leaves_last():
    spec = HierarchySpec.from_edges([("T", None), ("leaf", "T"), ("A", "T"), ("a1", "A"), ("a2", "A")])
    assert spec.nodes[-3:] == ("leaf", "a1", "a2")
    S = build_summing_matrix(spec)
    np.testing.assert_array_equal(S.entries[-3:], np.eye(3))


@pytest.mark.parametrize("edges, bad", [
    ([("a", None), ("b", None)], "b"),
    ([("a", None), ("b", "c")], "c"),
    ([("a", None), ("b", "c"), ("c", "b")], "b"),
    ([("a", None), ("a", None)], "a"),
])
def test_malformed_trees(edges, bad):
    with pytest.raises(StructureError) as err:
        HierarchySpec.from_edges(edges)
    assert err.value.node == bad


def test_edge_file_roundtrip(tmp_path, fig1):
    path = tmp_path / "h.csv"
    fig1.to_file(path)
    assert HierarchySpec.from_file(path) == fig1
    path.write_text("Total,\nA,Total\nB,Total\n")
    assert HierarchySpec.from_file(path).nodes == ("Total", "A", "B")


def test_aggregate_examples(S1):
    np.testing.assert_array_equal(aggregate_bottom(S1, np.ones(5)), [5, 3, 2, 1, 1, 1, 1, 1])
    np.testing.assert_array_equal(aggregate_bottom(S1, np.zeros(5)), np.zeros(8))
    # hand product: Total 2+3, A = 2, B = 3
    np.testing.assert_array_equal(aggregate_bottom(S1, [2, 0, 0, 0, 3]), [5, 2, 3, 2, 0, 0, 0, 3])
    with pytest.raises(ValueError):
        aggregate_bottom(S1, np.ones(4))


def test_coherency_residual_examples(S1):
    assert coherency_residual(S1, [6, 3, 2, 1, 1, 1, 1, 1]) == 1
    assert coherency_residual(S1, aggregate_bottom(S1, [1.5, 2, 3, 4, 5])) == 0
    spec = HierarchySpec.from_edges([("only", None)])
    assert coherency_residual(build_summing_matrix(spec), [42.0]) == 0
    with pytest.raises(ValueError):
        coherency_residual(S1, np.ones(7))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_random_trees_have_identity_bottom_and_row_sums(seed):
    spec = random_hierarchy(np.random.default_rng(seed))
    S = build_summing_matrix(spec).entries
    assert S.shape == (spec.n, spec.m)
    np.testing.assert_array_equal(S[spec.n - spec.m:], np.eye(spec.m))
    for i, v in enumerate(spec.nodes):
        # row sum = number of bottom descendants
        count, stack = 0, [v]
        while stack:
            u = stack.pop()
            kids = spec.children(u)
            count += not kids
            stack.extend(kids)
        assert S[i].sum() == count
    # parents precede children
    for v in spec.nodes[1:]:
        assert spec.index(spec.parent[v]) < spec.index(v)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-10, 10))
def test_aggregation_linear_and_coherent(seed, a):
    rng = np.random.default_rng(seed)
    S = build_summing_matrix(random_hierarchy(rng))
    b1, b2 = rng.normal(size=(2, S.m))
    np.testing.assert_allclose(aggregate_bottom(S, a * b1 + b2),
                               a * aggregate_bottom(S, b1) + aggregate_bottom(S, b2), atol=1e-9)
    assert coherency_residual(S, aggregate_bottom(S, b1)) <= 1e-12
