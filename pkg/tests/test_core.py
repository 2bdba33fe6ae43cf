import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from backbone.core import (
    BipartiteGraph, DirectedBipartiteGraph, DirectedGraph, StructuralError, degrees_bipartite,
    degrees_directed, read_bipartite_csv, read_directed_bipartite_csv, read_validated_csv,
    remove_self_loops, write_bipartite_csv, write_directed_bipartite_csv, write_validated_csv,
)


def test_degrees_complete():
    g = BipartiteGraph.from_pairs(["a", "b"], ["x", "y", "z"], [(a, b) for a in "ab" for b in "xyz"])
    left, right = degrees_bipartite(g)
    assert left.tolist() == [3, 3]
    assert right.tolist() == [2, 2, 2]


def test_degrees_empty():
    g = BipartiteGraph.from_pairs(["a", "b"], ["x", "y", "z"], [])
    left, right = degrees_bipartite(g)
    assert left.tolist() == [0, 0] and right.tolist() == [0, 0, 0]
    assert g.m == 0


def test_degrees_small():
    g = BipartiteGraph(("0", "1"), ("0", "1"), [0, 0, 1], [0, 1, 1])
    left, right = degrees_bipartite(g)
    assert left.tolist() == [2, 1]
    assert right.tolist() == [1, 2]


def test_duplicates_collapse_with_multiplicity():
    g = BipartiteGraph.from_pairs(["v"], ["u"], [("v", "u")] * 5)
    assert g.m == 1
    assert g.multiplicity.tolist() == [5]


def test_invalid_index_rejected():
    with pytest.raises(StructuralError):
        BipartiteGraph(("a",), ("x",), [0], [3])


def test_unknown_id_rejected():
    with pytest.raises(KeyError):
        BipartiteGraph.from_pairs(["a"], ["x"], [("a", "nope")])


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 8)), max_size=60))
def test_degree_sums(pairs):
    left = [f"l{i}" for i in range(7)]
    right = [f"r{a}" for a in range(9)]
    g = BipartiteGraph.from_pairs(left, right, [(left[i], right[a]) for i, a in pairs])
    k, kk = degrees_bipartite(g)
    assert k.sum() == kk.sum() == g.m == len(set(pairs))


def test_directed_single_post():
    g = DirectedBipartiteGraph.from_pairs(["A", "B", "C"], ["p1"], [("A", "p1")], [("B", "p1"), ("C", "p1")])
    d = degrees_directed(g)
    assert d.user_out.tolist() == [1, 0, 0]
    assert d.user_in.tolist() == [0, 1, 1]
    assert d.post_out.tolist() == [2]
    assert d.post_in.tolist() == [1]


def test_directed_no_retweets():
    g = DirectedBipartiteGraph.from_pairs(["A", "B"], ["p1", "p2"], [("A", "p1"), ("B", "p2")], [])
    d = degrees_directed(g)
    assert d.user_in.tolist() == [0, 0]
    assert d.post_out.tolist() == [0, 0]


def test_two_authors_violation():
    g = DirectedBipartiteGraph.from_pairs(["A", "B"], ["p1"], [("A", "p1"), ("B", "p1")], [])
    with pytest.raises(StructuralError, match="p1"):
        degrees_directed(g)


def test_orphan_post_violation():
    g = DirectedBipartiteGraph.from_pairs(["A"], ["p1", "p2"], [("A", "p1")], [("A", "p2")])
    with pytest.raises(StructuralError, match="p2"):
        degrees_directed(g)


@given(st.integers(1, 6), st.lists(st.integers(0, 5), min_size=1, max_size=12), st.data())
def test_directed_degree_sums(n_users, authors, data):
    users = [f"u{k}" for k in range(n_users)]
    posts = [f"p{k}" for k in range(len(authors))]
    t = [(users[a % n_users], posts[k]) for k, a in enumerate(authors)]
    r = data.draw(st.lists(st.tuples(st.sampled_from(users), st.sampled_from(posts)), max_size=30))
    g = DirectedBipartiteGraph.from_pairs(users, posts, t, r)
    d = degrees_directed(g)
    assert d.user_out.sum() == g.n_posts
    assert d.user_in.sum() == d.post_out.sum()
    assert (d.post_in == 1).all()


def test_self_loops_removed():
    g = DirectedGraph.from_edges(["a", "b"], [("a", "a"), ("a", "b")], p_value=np.array([0.1, 0.2]))
    h, n = remove_self_loops(g)
    assert n == 1
    assert h.edges() == [("a", "b")]
    assert h.annotations["p_value"].tolist() == [0.2]


def test_loop_free_unchanged():
    g = DirectedGraph.from_edges(["a", "b", "c"], [("a", "b"), ("b", "c")])
    h, n = remove_self_loops(g)
    assert n == 0 and h.edges() == g.edges()


def test_all_loops():
    g = DirectedGraph.from_edges(["a", "b", "c"], [("a", "a"), ("b", "b"), ("c", "c")])
    h, n = remove_self_loops(g)
    assert n == 3 and h.n_edges == 0


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), unique=True, max_size=25))
def test_remove_self_loops_idempotent(edges):
    nodes = [str(k) for k in range(5)]
    g = DirectedGraph.from_edges(nodes, [(nodes[a], nodes[b]) for a, b in edges])
    once, n1 = remove_self_loops(g)
    twice, n2 = remove_self_loops(once)
    assert n2 == 0 and twice.edges() == once.edges()
    assert n1 == sum(1 for a, b in edges if a == b)


def test_duplicate_directed_edge_rejected():
    with pytest.raises(StructuralError):
        DirectedGraph.from_edges(["a", "b"], [("a", "b"), ("a", "b")])


def test_undirected_canonical():
    g = DirectedGraph.from_edges(["a", "b"], [("b", "a")], directed=False)
    assert g.edges() == [("a", "b")]
    assert (g.adjacency() != g.adjacency().T).nnz == 0
    with pytest.raises(StructuralError):
        DirectedGraph.from_edges(["a", "b"], [("b", "a"), ("a", "b")], directed=False)


def test_drop_isolated_and_induced():
    g = DirectedGraph.from_edges(["a", "b", "c"], [("a", "b")])
    h, iso = g.drop_isolated()
    assert iso == ["c"] and h.node_ids == ("a", "b")
    assert g.induced(["b", "c"]).n_edges == 0


def test_bipartite_csv_roundtrip(tmp_path):
    g = BipartiteGraph.from_pairs(["v1", "v2"], ["u1", "u2", "u3"], [("v1", "u1"), ("v2", "u3"), ("v1", "u3")])
    write_bipartite_csv(g, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().splitlines()[0] == "left_id,right_id"
    h = read_bipartite_csv(tmp_path / "b.csv")
    ids = lambda x: sorted((x.left_ids[r], x.right_ids[c]) for r, c in zip(x.rows, x.cols))  # noqa: E731
    assert ids(h) == ids(g)
    assert "u2" not in h.right_ids
    kept = read_bipartite_csv(tmp_path / "b.csv", g.left_ids, g.right_ids)
    assert kept.shape == (2, 3)


def test_bipartite_csv_requires_header(tmp_path):
    (tmp_path / "b.csv").write_text("v1,u1\n")
    with pytest.raises(StructuralError, match="header"):
        read_bipartite_csv(tmp_path / "b.csv")


def test_directed_csv_roundtrip(tmp_path):
    g = DirectedBipartiteGraph.from_pairs(["A", "B"], ["p1", "p2"], [("A", "p1"), ("B", "p2")],
                                          [("B", "p1"), ("A", "p1")])
    write_directed_bipartite_csv(g, tmp_path / "d.csv")
    h = read_directed_bipartite_csv(tmp_path / "d.csv")
    assert degrees_directed(h).user_in.tolist() == degrees_directed(g).user_in.tolist()
    (tmp_path / "bad.csv").write_text("user_id,post_id,kind\nA,p1,X\n")
    with pytest.raises(StructuralError, match="kind"):
        read_directed_bipartite_csv(tmp_path / "bad.csv")


def test_validated_csv_roundtrip(tmp_path):
    g = DirectedGraph.from_edges(["a", "b", "c"], [("b", "a"), ("a", "c")], observed=np.array([3, 4]),
                                 **{"lambda": np.array([0.5, 0.25]), "p_value": np.array([1e-5, 2e-7])})
    write_validated_csv(g, tmp_path / "v.csv")
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "source,target,observed,lambda,p_value"
    assert lines[1].startswith("a,c,4,0.25,")
    h = read_validated_csv(tmp_path / "v.csv")
    assert sorted(h.edges()) == sorted(g.edges())
    assert sorted(h.annotations["p_value"].tolist()) == [2e-7, 1e-5]
