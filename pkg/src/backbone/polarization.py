"""Polarization of users with respect to verified-layer communities.

A user's polarization index is the largest fraction of its links that point
into a single community.  Unverified users first inherit the community of
the verified accounts they interact with; users that remain unpolarized
then take part in a synchronous majority contagion over the interaction
graph of all users.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

from .core import BipartiteGraph

THRESHOLD = 0.5
DEFAULT_MAX_ROUNDS = 50


@dataclass
class UserPolarization:
    rho: float | None
    community: Hashable | None
    round_assigned: int | None = None


@dataclass
class PolarizationState:
    """Per-user polarization.

    ``seeds`` maps verified accounts to their community; they are polarized
    by construction and never relabelled.  ``history`` holds
    ``(round, newly_polarized)`` for every productive round; round 1 is the
    assignment from verified interactions, later rounds are contagion.
    """

    users: dict[str, UserPolarization] = field(default_factory=dict)
    seeds: dict[str, Hashable] = field(default_factory=dict)
    history: list[tuple[int, int]] = field(default_factory=list)

    def community_of(self, user: str):
        if user in self.seeds:
            return self.seeds[user]
        rec = self.users.get(user)
        return None if rec is None else rec.community

    def polarized(self) -> set[str]:
        return set(self.seeds) | {u for u, r in self.users.items() if r.community is not None}

    @property
    def last_round(self) -> int:
        return self.history[-1][0] if self.history else 1

    def copy(self) -> "PolarizationState":
        return PolarizationState({u: UserPolarization(r.rho, r.community, r.round_assigned)
                                  for u, r in self.users.items()},
                                 dict(self.seeds), list(self.history))


def polarization_index(neighbor_communities: Iterable[Hashable | None]):
    """``(rho, community)`` for a user whose neighbours carry these labels.

    ``None`` entries are unpolarized neighbours: they count in the degree but
    not towards any community.  A tie for the maximum gives community
    ``None``.  Returns ``(None, None)`` when no neighbour is polarized.
    """
    labels = list(neighbor_communities)
    k = len(labels)
    counts = Counter(c for c in labels if c is not None)
    if k == 0 or not counts:
        return None, None
    top = counts.most_common()
    best = top[0][1]
    rho = best / k
    winners = [c for c, n in top if n == best]
    return rho, (winners[0] if len(winners) == 1 else None)


def assign_from_verified(g: BipartiteGraph, verified_partition: Mapping[str, Hashable],
                         threshold: float = THRESHOLD) -> PolarizationState:
    """Polarize unverified users (layer Gamma) from their verified neighbours (layer L).

    Only links to verified accounts that carry a community count.  Users with
    ``rho <= threshold`` keep their index but no community.
    """
    neighbours: dict[int, list] = {}
    for r, c in zip(g.rows.tolist(), g.cols.tolist()):
        label = verified_partition.get(g.left_ids[r])
        if label is not None:
            neighbours.setdefault(c, []).append(label)
    state = PolarizationState(seeds=dict(verified_partition))
    newly = 0
    for c in sorted(neighbours, key=lambda k: g.right_ids[k]):
        rho, comm = polarization_index(neighbours[c])
        if comm is not None and rho > threshold:
            state.users[g.right_ids[c]] = UserPolarization(rho, comm, 1)
            newly += 1
        else:
            state.users[g.right_ids[c]] = UserPolarization(rho, None)
    if newly:
        state.history.append((1, newly))
    return state


def _adjacency(edges: Iterable[tuple[str, str]]) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {}
    for a, b in edges:
        if a == b:
            continue
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    return adj


def contagion(edges: Iterable[tuple[str, str]], state: PolarizationState,
              max_rounds: int = DEFAULT_MAX_ROUNDS, threshold: float = THRESHOLD) -> PolarizationState:
    """Iterative majority contagion over the undirected interaction graph.

    In each round every unpolarized user computes its index over *all* its
    neighbours, using the labels of the previous round, and adopts the
    majority community when the index exceeds ``threshold``.  Adoptions are
    committed together at the end of the round.  Stops after a round with no
    adoption or after ``max_rounds`` rounds.
    """
    adj = _adjacency(edges)
    out = state.copy()
    round_no = out.last_round
    for _ in range(max_rounds):
        round_no += 1
        snapshot = {u: out.community_of(u) for u in adj}
        adopted = {}
        for u in sorted(adj):
            if snapshot[u] is not None:
                continue
            rho, comm = polarization_index(snapshot[v] for v in adj[u])
            if rho is None:
                continue
            if comm is not None and rho > threshold:
                adopted[u] = UserPolarization(rho, comm, round_no)
            else:
                prev = out.users.get(u)
                out.users[u] = UserPolarization(rho, None, None if prev is None else prev.round_assigned)
        if not adopted:
            break
        out.users.update(adopted)
        out.history.append((round_no, len(adopted)))
    return out


def rho_histogram(state: PolarizationState, users: Iterable[str] | None = None, bins: int = 10) -> dict:
    """Counts of ``rho`` per community in ``bins`` equal-width bins of ``[0, 1]``.

    Users without a community are reported under ``unpolarized``.
    """
    pool = state.users if users is None else {u: state.users[u] for u in users if u in state.users}
    hist: dict[str, list[int]] = {}
    for rec in pool.values():
        if rec.rho is None:
            continue
        key = "unpolarized" if rec.community is None else str(rec.community)
        row = hist.setdefault(key, [0] * bins)
        row[min(int(rec.rho * bins), bins - 1)] += 1
    return {k: hist[k] for k in sorted(hist)}
