"""Hub scores, bot statistics and bot squads on the validated directed network.

An edge ``u -> v`` of the validated network means ``v`` retweets ``u``
significantly, so the bots among ``u``'s out-neighbours are the bots that
amplify ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import networkx as nx
import numpy as np

from .bicm import ConvergenceError
from .core import DirectedGraph

BOT = "bot"
GENUINE = "genuine"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class HitsScores:
    node_ids: tuple[str, ...]
    hub: np.ndarray
    authority: np.ndarray
    iterations: int

    def hub_of(self) -> dict[str, float]:
        return dict(zip(self.node_ids, self.hub.tolist()))

    def authority_of(self) -> dict[str, float]:
        return dict(zip(self.node_ids, self.authority.tolist()))


def hits_scores(g: DirectedGraph, tol: float = 1e-10, max_iter: int = 10_000) -> HitsScores:
    """Kleinberg hubs and authorities by alternating power iteration.

    Each sweep sets authorities to the summed hub scores of in-neighbours and
    hubs to the summed authority scores of out-neighbours, with Euclidean
    normalisation.  Converged scores are rescaled so each maximum is 1.

    Raises
    ------
    ConvergenceError
        If the largest score change is still above ``tol`` after ``max_iter`` sweeps.
    """
    n = g.n_nodes
    if n == 0 or g.n_edges == 0:
        return HitsScores(g.node_ids, np.zeros(n), np.zeros(n), 0)
    if g.loop_mask.any():
        raise ValueError("remove self-loops before computing hub scores")
    A = g.adjacency().tocsr()
    AT = A.T.tocsr()
    h = np.full(n, 1.0 / np.sqrt(n))
    a = np.zeros(n)
    change = np.inf
    for it in range(1, max_iter + 1):
        a_new = AT @ h
        a_new /= np.linalg.norm(a_new)
        h_new = A @ a_new
        h_new /= np.linalg.norm(h_new)
        change = max(np.abs(h_new - h).max(), np.abs(a_new - a).max())
        h, a = h_new, a_new
        if change <= tol:
            return HitsScores(g.node_ids, h / h.max(), a / a.max(), it)
    raise ConvergenceError("HITS power iteration did not converge", float(change), max_iter)


@dataclass
class HubRow:
    node: str
    hub_score: float
    authority_score: float
    k_out: int
    bots: int
    bot_fraction: float | None
    bot_fraction_ratio: float | None


@dataclass
class HubReport:
    rows: list[HubRow]
    global_bot_fraction: float | None
    n_bots: int
    n_labelled: int
    n_unknown: int

    def top(self, n: int) -> list[HubRow]:
        return self.rows[:n]


def bot_followers(g: DirectedGraph, labels: Mapping[str, str]) -> dict[str, set[str]]:
    """Bots among each node's validated out-neighbours."""
    out: dict[str, set[str]] = {v: set() for v in g.node_ids}
    for s, t in zip(g.sources.tolist(), g.targets.tolist()):
        if labels.get(g.node_ids[t]) == BOT:
            out[g.node_ids[s]].add(g.node_ids[t])
    return out


def bot_fractions(g: DirectedGraph, labels: Mapping[str, str], hits: HitsScores | None = None) -> HubReport:
    """Fraction of bots among every node's out-neighbours and its ratio to the global fraction.

    The global fraction is ``|bots| / |validated users with a known label|``.
    Fractions with ``k_out = 0`` and ratios against a zero global fraction
    are ``None``.  Rows are ordered by decreasing hub score, then node id.
    """
    known = [v for v in g.node_ids if labels.get(v, UNKNOWN) in (BOT, GENUINE)]
    n_bots = sum(1 for v in known if labels[v] == BOT)
    global_fraction = n_bots / len(known) if known else None
    k_out = np.bincount(g.sources, minlength=g.n_nodes)
    bots = bot_followers(g, labels)
    hub = hits.hub_of() if hits is not None else {}
    auth = hits.authority_of() if hits is not None else {}
    rows = []
    for k, v in enumerate(g.node_ids):
        frac = len(bots[v]) / k_out[k] if k_out[k] else None
        ratio = frac / global_fraction if frac is not None and global_fraction else None
        rows.append(HubRow(v, hub.get(v, 0.0), auth.get(v, 0.0), int(k_out[k]), len(bots[v]), frac, ratio))
    rows.sort(key=lambda r: (-r.hub_score, r.node))
    return HubReport(rows, global_fraction, n_bots, len(known), g.n_nodes - len(known))


def overlap_matrix(hubs: Sequence[str], bot_sets: Mapping[str, set[str]]):
    """Relative overlap ``|bot_i & bot_j| / |bot_i|`` for every ordered pair of hubs.

    Returns the matrix and a boolean mask of rows with ``|bot_i| = 0``, which
    are left as zero rows.
    """
    n = len(hubs)
    mat = np.zeros((n, n))
    empty = np.zeros(n, dtype=bool)
    for i, hi in enumerate(hubs):
        bi = bot_sets.get(hi, set())
        if not bi:
            empty[i] = True
            continue
        for j, hj in enumerate(hubs):
            mat[i, j] = len(bi & bot_sets.get(hj, set())) / len(bi)
    return mat, empty


@dataclass
class Squad:
    genuine_members: list[str]
    shared_bots: list[str]
    all_bot_followers: list[str]
    subgraph: DirectedGraph
    top_hub: str


@dataclass
class SquadReport:
    squads: list[Squad] = field(default_factory=list)
    min_shared: int = 3


def detect_squads(g: DirectedGraph, labels: Mapping[str, str], min_shared: int = 3,
                  hub_scores: Mapping[str, float] | None = None) -> SquadReport:
    """Groups of genuine accounts amplified by a common set of bots.

    Two genuine (or unlabelled) accounts are joined when at least
    ``min_shared`` bots are among the validated out-neighbours of both;
    connected groups of two or more accounts are squads.  Squads are ordered
    by size, largest first.
    """
    if min_shared < 1:
        raise ValueError("min_shared must be at least 1")
    bots = bot_followers(g, labels)
    humans = sorted(v for v, b in bots.items() if b and labels.get(v, UNKNOWN) != BOT)
    by_bot: dict[str, list[str]] = {}
    for v in humans:
        for b in bots[v]:
            by_bot.setdefault(b, []).append(v)
    shared: dict[tuple[str, str], int] = {}
    for members in by_bot.values():
        for x in range(len(members)):
            for y in range(x + 1, len(members)):
                key = (members[x], members[y])
                shared[key] = shared.get(key, 0) + 1
    aux = nx.Graph()
    aux.add_edges_from(pair for pair, n in shared.items() if n >= min_shared)
    hub_scores = hub_scores or {}
    squads = []
    for comp in nx.connected_components(aux):
        members = sorted(comp)
        followers = sorted(set().union(*(bots[v] for v in members)))
        counts: dict[str, int] = {}
        for v in members:
            for b in bots[v]:
                counts[b] = counts.get(b, 0) + 1
        shared_bots = sorted(b for b, c in counts.items() if c >= 2)
        sub = g.induced(set(members) | set(followers))
        top = max(members, key=lambda v: (hub_scores.get(v, 0.0), -members.index(v)))
        squads.append(Squad(members, shared_bots, followers, sub, top))
    squads.sort(key=lambda s: (-len(s.genuine_members), -len(s.shared_bots), s.genuine_members[0]))
    return SquadReport(squads, min_shared)
