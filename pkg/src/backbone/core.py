"""Sparse graph containers shared by every stage of the pipeline.

Node identifiers are opaque strings.  They are mapped to dense integer
indices once, at construction, and every numerical kernel works on the
indices.  Containers are treated as immutable after construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp


class StructuralError(ValueError):
    """Raised when a container violates one of its structural invariants."""


def _index(ids: Sequence[str]) -> dict[str, int]:
    lookup = {name: k for k, name in enumerate(ids)}
    if len(lookup) != len(ids):
        raise StructuralError("duplicate node identifiers")
    return lookup


def _dedup_pairs(rows: np.ndarray, cols: np.ndarray, n_cols: int):
    """Collapse repeated (row, col) pairs; returns sorted unique pairs and multiplicities."""
    if rows.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    keys = rows.astype(np.int64) * max(n_cols, 1) + cols.astype(np.int64)
    uniq, counts = np.unique(keys, return_counts=True)
    return uniq // max(n_cols, 1), uniq % max(n_cols, 1), counts.astype(np.int64)


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Binary undirected bipartite network.

    ``rows`` and ``cols`` hold the index pairs of the biadjacency matrix;
    ``left_ids`` label layer L (rows), ``right_ids`` layer Gamma (columns).
    ``multiplicity`` records how many raw interactions collapsed into each
    binary link and is kept for diagnostics only.
    """

    left_ids: tuple[str, ...]
    right_ids: tuple[str, ...]
    rows: np.ndarray
    cols: np.ndarray
    multiplicity: np.ndarray = field(default=None)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        if rows.shape != cols.shape:
            raise StructuralError("rows and cols differ in length")
        if rows.size and (rows.min() < 0 or rows.max() >= len(self.left_ids)):
            raise StructuralError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= len(self.right_ids)):
            raise StructuralError("column index out of range")
        keys = rows * max(len(self.right_ids), 1) + cols
        if np.unique(keys).size != keys.size:
            raise StructuralError("duplicate pairs in a binary bipartite graph")
        mult = self.multiplicity
        mult = np.ones(rows.size, dtype=np.int64) if mult is None else np.asarray(mult, dtype=np.int64)
        object.__setattr__(self, "left_ids", tuple(self.left_ids))
        object.__setattr__(self, "right_ids", tuple(self.right_ids))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "multiplicity", mult)

    @classmethod
    def from_pairs(cls, left_ids: Sequence[str], right_ids: Sequence[str],
                   pairs: Iterable[tuple[str, str]]) -> "BipartiteGraph":
        """Build from identifier pairs; repeated pairs collapse to one link."""
        li, ri = _index(left_ids), _index(right_ids)
        pairs = list(pairs)
        rows = np.fromiter((li[a] for a, _ in pairs), dtype=np.int64, count=len(pairs))
        cols = np.fromiter((ri[b] for _, b in pairs), dtype=np.int64, count=len(pairs))
        rows, cols, mult = _dedup_pairs(rows, cols, len(right_ids))
        return cls(tuple(left_ids), tuple(right_ids), rows, cols, mult)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.left_ids), len(self.right_ids)

    @property
    def m(self) -> int:
        return int(self.rows.size)

    def biadjacency(self) -> sp.csr_matrix:
        data = np.ones(self.m, dtype=np.float64)
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=self.shape)

    def left_index(self) -> dict[str, int]:
        return _index(self.left_ids)

    def right_index(self) -> dict[str, int]:
        return _index(self.right_ids)


def degrees_bipartite(g: BipartiteGraph) -> tuple[np.ndarray, np.ndarray]:
    """Degree sequences of both layers; each sums to ``g.m``."""
    left = np.bincount(g.rows, minlength=g.shape[0]).astype(np.int64)
    right = np.bincount(g.cols, minlength=g.shape[1]).astype(np.int64)
    return left, right


@dataclass(frozen=True, eq=False)
class DirectedBipartiteGraph:
    """Users x posts network with authorship (T) and retweet (R) links.

    ``t_users[k]`` authored ``t_posts[k]``; ``r_users[k]`` retweeted
    ``r_posts[k]``.  Self-retweets are allowed.
    """

    user_ids: tuple[str, ...]
    post_ids: tuple[str, ...]
    t_users: np.ndarray
    t_posts: np.ndarray
    r_users: np.ndarray
    r_posts: np.ndarray

    def __post_init__(self):
        for name, bound in (("t_users", len(self.user_ids)), ("t_posts", len(self.post_ids)),
                            ("r_users", len(self.user_ids)), ("r_posts", len(self.post_ids))):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.size and (arr.min() < 0 or arr.max() >= bound):
                raise StructuralError(f"{name} index out of range")
            object.__setattr__(self, name, arr)
        if self.t_users.shape != self.t_posts.shape or self.r_users.shape != self.r_posts.shape:
            raise StructuralError("pair arrays differ in length")
        for u, p, label in ((self.t_users, self.t_posts, "T"), (self.r_users, self.r_posts, "R")):
            keys = u * max(len(self.post_ids), 1) + p
            if np.unique(keys).size != keys.size:
                raise StructuralError(f"duplicate pairs in {label}")
        object.__setattr__(self, "user_ids", tuple(self.user_ids))
        object.__setattr__(self, "post_ids", tuple(self.post_ids))

    @classmethod
    def from_pairs(cls, user_ids: Sequence[str], post_ids: Sequence[str],
                   authorship: Iterable[tuple[str, str]],
                   retweets: Iterable[tuple[str, str]]) -> "DirectedBipartiteGraph":
        ui, pi = _index(user_ids), _index(post_ids)
        arrays = []
        for pairs in (list(authorship), list(retweets)):
            u = np.fromiter((ui[a] for a, _ in pairs), dtype=np.int64, count=len(pairs))
            p = np.fromiter((pi[b] for _, b in pairs), dtype=np.int64, count=len(pairs))
            u, p, _ = _dedup_pairs(u, p, len(post_ids))
            arrays.extend([u, p])
        return cls(tuple(user_ids), tuple(post_ids), *arrays)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_posts(self) -> int:
        return len(self.post_ids)

    def authorship_matrix(self) -> sp.csr_matrix:
        data = np.ones(self.t_users.size)
        return sp.csr_matrix((data, (self.t_users, self.t_posts)), shape=(self.n_users, self.n_posts))

    def retweet_matrix(self) -> sp.csr_matrix:
        data = np.ones(self.r_users.size)
        return sp.csr_matrix((data, (self.r_users, self.r_posts)), shape=(self.n_users, self.n_posts))


@dataclass(frozen=True)
class DirectedDegrees:
    user_out: np.ndarray  # posts authored
    user_in: np.ndarray   # posts retweeted
    post_in: np.ndarray   # authors (always 1 when well-formed)
    post_out: np.ndarray  # retweets received


def degrees_directed(g: DirectedBipartiteGraph) -> DirectedDegrees:
    """Out/in degrees of users and posts.

    Raises
    ------
    StructuralError
        If any post does not have exactly one author.
    """
    degs = DirectedDegrees(
        user_out=np.bincount(g.t_users, minlength=g.n_users).astype(np.int64),
        user_in=np.bincount(g.r_users, minlength=g.n_users).astype(np.int64),
        post_in=np.bincount(g.t_posts, minlength=g.n_posts).astype(np.int64),
        post_out=np.bincount(g.r_posts, minlength=g.n_posts).astype(np.int64),
    )
    bad = np.flatnonzero(degs.post_in != 1)
    if bad.size:
        shown = ", ".join(f"{g.post_ids[k]} (in-degree {degs.post_in[k]})" for k in bad[:10])
        raise StructuralError(f"{bad.size} post(s) without exactly one author: {shown}")
    return degs


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Monopartite graph with per-edge annotations.

    With ``directed=False`` every edge is stored once with ``source < target``
    (index order) and read symmetrically.
    """

    node_ids: tuple[str, ...]
    sources: np.ndarray
    targets: np.ndarray
    annotations: Mapping[str, np.ndarray] = field(default_factory=dict)
    directed: bool = True

    def __post_init__(self):
        src = np.asarray(self.sources, dtype=np.int64)
        tgt = np.asarray(self.targets, dtype=np.int64)
        n = len(self.node_ids)
        if src.shape != tgt.shape:
            raise StructuralError("sources and targets differ in length")
        if src.size and (min(src.min(), tgt.min()) < 0 or max(src.max(), tgt.max()) >= n):
            raise StructuralError("edge endpoint out of range")
        if not self.directed:
            lo, hi = np.minimum(src, tgt), np.maximum(src, tgt)
            src, tgt = lo, hi
        keys = src * max(n, 1) + tgt
        if np.unique(keys).size != keys.size:
            raise StructuralError("duplicate edges")
        ann = {}
        for name, values in dict(self.annotations).items():
            values = np.asarray(values)
            if values.shape != src.shape:
                raise StructuralError(f"annotation {name!r} has wrong length")
            ann[name] = values
        object.__setattr__(self, "node_ids", tuple(self.node_ids))
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "targets", tgt)
        object.__setattr__(self, "annotations", ann)

    @classmethod
    def from_edges(cls, node_ids: Sequence[str], edges: Iterable[tuple[str, str]],
                   directed: bool = True, **annotations) -> "DirectedGraph":
        idx = _index(node_ids)
        edges = list(edges)
        src = np.fromiter((idx[a] for a, _ in edges), dtype=np.int64, count=len(edges))
        tgt = np.fromiter((idx[b] for _, b in edges), dtype=np.int64, count=len(edges))
        return cls(tuple(node_ids), src, tgt, annotations, directed)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return int(self.sources.size)

    @property
    def loop_mask(self) -> np.ndarray:
        return self.sources == self.targets

    def edges(self) -> list[tuple[str, str]]:
        return [(self.node_ids[s], self.node_ids[t]) for s, t in zip(self.sources, self.targets)]

    def adjacency(self) -> sp.csr_matrix:
        """Sparse adjacency; symmetric when the graph is undirected."""
        n = self.n_nodes
        data = np.ones(self.n_edges)
        a = sp.csr_matrix((data, (self.sources, self.targets)), shape=(n, n))
        if not self.directed:
            off = self.sources != self.targets
            a = a + sp.csr_matrix((data[off], (self.targets[off], self.sources[off])), shape=(n, n))
        return a

    def subset_edges(self, mask: np.ndarray) -> "DirectedGraph":
        mask = np.asarray(mask, dtype=bool)
        ann = {k: v[mask] for k, v in self.annotations.items()}
        return DirectedGraph(self.node_ids, self.sources[mask], self.targets[mask], ann, self.directed)

    def induced(self, keep: Iterable[str]) -> "DirectedGraph":
        """Subgraph induced by ``keep``; node order follows ``self.node_ids``."""
        keep = set(keep)
        old = [k for k, name in enumerate(self.node_ids) if name in keep]
        remap = -np.ones(self.n_nodes, dtype=np.int64)
        remap[old] = np.arange(len(old))
        mask = (remap[self.sources] >= 0) & (remap[self.targets] >= 0)
        ann = {k: v[mask] for k, v in self.annotations.items()}
        return DirectedGraph(tuple(self.node_ids[k] for k in old), remap[self.sources[mask]],
                             remap[self.targets[mask]], ann, self.directed)

    def drop_isolated(self) -> tuple["DirectedGraph", list[str]]:
        used = np.zeros(self.n_nodes, dtype=bool)
        used[self.sources] = True
        used[self.targets] = True
        isolated = [name for name, u in zip(self.node_ids, used) if not u]
        return self.induced(name for name, u in zip(self.node_ids, used) if u), isolated


def remove_self_loops(g: DirectedGraph) -> tuple[DirectedGraph, int]:
    """Drop ``(v, v)`` edges, keeping annotations of the surviving edges."""
    loops = g.loop_mask
    return g.subset_edges(~loops), int(loops.sum())


# --------------------------------------------------------------------------
# CSV persistence

def _open_csv(path, header: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise StructuralError(f"{path}: missing header row") from None
        if [c.strip() for c in first[: len(header)]] != list(header):
            raise StructuralError(f"{path}: expected header {','.join(header)}, got {','.join(first)}")
        return [row for row in reader if row]


def read_bipartite_csv(path, left_ids: Sequence[str] | None = None,
                       right_ids: Sequence[str] | None = None) -> BipartiteGraph:
    """Read a ``left_id,right_id`` edge list.

    Layers default to the sorted identifiers seen in the file; pass explicit
    layers to retain zero-degree nodes.
    """
    rows = _open_csv(path, ("left_id", "right_id"))
    pairs = [(r[0], r[1]) for r in rows]
    left = sorted({a for a, _ in pairs}) if left_ids is None else list(left_ids)
    right = sorted({b for _, b in pairs}) if right_ids is None else list(right_ids)
    return BipartiteGraph.from_pairs(left, right, pairs)


def write_bipartite_csv(g: BipartiteGraph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["left_id", "right_id"])
        for r, c in sorted(zip(g.rows.tolist(), g.cols.tolist())):
            w.writerow([g.left_ids[r], g.right_ids[c]])


def read_directed_bipartite_csv(path) -> DirectedBipartiteGraph:
    """Read a ``user_id,post_id,kind`` file with kind T (authorship) or R (retweet)."""
    rows = _open_csv(path, ("user_id", "post_id", "kind"))
    t, r = [], []
    for row in rows:
        kind = row[2].strip().upper()
        if kind == "T":
            t.append((row[0], row[1]))
        elif kind == "R":
            r.append((row[0], row[1]))
        else:
            raise StructuralError(f"{path}: unknown kind {row[2]!r}")
    users = sorted({u for u, _ in t} | {u for u, _ in r})
    posts = sorted({p for _, p in t} | {p for _, p in r})
    return DirectedBipartiteGraph.from_pairs(users, posts, t, r)


def write_directed_bipartite_csv(g: DirectedBipartiteGraph, path) -> None:
    lines = [(g.user_ids[u], g.post_ids[p], "T") for u, p in zip(g.t_users, g.t_posts)]
    lines += [(g.user_ids[u], g.post_ids[p], "R") for u, p in zip(g.r_users, g.r_posts)]
    lines.sort(key=lambda x: (x[2], x[0], x[1]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "post_id", "kind"])
        w.writerows(lines)


VALIDATED_COLUMNS = ("source", "target", "observed", "lambda", "p_value")


def write_validated_csv(g: DirectedGraph, path) -> None:
    """Write ``source,target,observed,lambda,p_value`` rows in canonical order."""
    ann = g.annotations
    order = sorted(range(g.n_edges), key=lambda k: (g.node_ids[g.sources[k]], g.node_ids[g.targets[k]]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VALIDATED_COLUMNS)
        for k in order:
            s, t = g.node_ids[g.sources[k]], g.node_ids[g.targets[k]]
            if not g.directed and s > t:
                s, t = t, s
            w.writerow([s, t,
                        int(ann["observed"][k]) if "observed" in ann else "",
                        repr(float(ann["lambda"][k])) if "lambda" in ann else "",
                        repr(float(ann["p_value"][k])) if "p_value" in ann else ""])


def read_validated_csv(path, directed: bool = True) -> DirectedGraph:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"source", "target"} <= set(reader.fieldnames):
            raise StructuralError(f"{path}: expected at least source,target columns")
        rows = list(reader)
    nodes = sorted({r["source"] for r in rows} | {r["target"] for r in rows})
    ann = {}
    for col, cast in (("observed", int), ("lambda", float), ("p_value", float)):
        if rows and col in rows[0] and all(r[col] != "" for r in rows):
            ann[col] = np.array([cast(r[col]) for r in rows])
    return DirectedGraph.from_edges(nodes, [(r["source"], r["target"]) for r in rows],
                                    directed=directed, **ann)


def read_edge_list_csv(path, columns=("user_a", "user_b")) -> list[tuple[str, str]]:
    rows = _open_csv(path, columns)
    return [(r[0], r[1]) for r in rows]


def write_edge_list_csv(edges: Iterable[tuple[str, str]], path, columns=("user_a", "user_b")) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(sorted(edges))


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
