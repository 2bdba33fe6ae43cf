"""Statistically validated monopartite projections.

For each pair of same-layer nodes the observed number of shared neighbours
(V-motifs) is compared with its null distribution.  The null is a
Poisson-binomial over the middle layer; in the sparse regime a Poisson
distribution with the same mean is used instead.  P-values are one-sided,
``P(X >= observed)``, and are validated jointly with the Benjamini-Hochberg
false discovery rate procedure.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import stats

from .bicm import CHUNG_LU, BicmFit, logistic
from .bidcm import EXACT as BIDCM_EXACT
from .bidcm import BidcmFit, directed_lambda
from .core import (BipartiteGraph, DirectedBipartiteGraph, DirectedGraph, degrees_directed,
                   remove_self_loops)

logger = logging.getLogger(__name__)

EXACT = "exact"
POISSON = "poisson"

# below this middle-layer size the exact Poisson-binomial is affordable
EXACT_MAX_MIDDLE = 5000
EXACT_MIN_PROBABILITY = 0.1


# --------------------------------------------------------------------------
# null distributions

def _check_probs(probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=float).ravel()
    if probs.size and (np.any(~np.isfinite(probs)) or probs.min() < 0.0 or probs.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return probs


def poisson_binomial_tail_table(probs, kmax: int, counts=None) -> np.ndarray:
    """Truncated distribution of a Poisson-binomial sum.

    Returns ``t`` of length ``kmax + 1`` with ``t[j] = P(X = j)`` for
    ``j < kmax`` and ``t[kmax] = P(X >= kmax)``.  The last state absorbs, so
    every entry is accumulated from nonnegative terms and tiny tails keep
    full relative precision.  ``counts`` repeats each probability that many
    times (binomial blocks).
    """
    probs = _check_probs(probs)
    kmax = int(kmax)
    state = np.zeros(kmax + 1)
    state[0] = 1.0
    if kmax == 0:
        return state
    if counts is None:
        for p in probs:
            if p == 0.0:
                continue
            absorbed = state[kmax - 1] * p
            state[1:kmax] = state[1:kmax] * (1.0 - p) + state[:kmax - 1] * p
            state[0] *= 1.0 - p
            state[kmax] += absorbed
        return state
    counts = np.asarray(counts, dtype=np.int64).ravel()
    if counts.shape != probs.shape:
        raise ValueError("counts and probs differ in length")
    # scipy's binomial overflows on subnormal p; expand those blocks instead
    tiny = (probs > 0) & (probs < np.finfo(float).tiny)
    if tiny.any():
        state = poisson_binomial_tail_table(np.repeat(probs[tiny], counts[tiny]), kmax)
        probs, counts = probs[~tiny], counts[~tiny]
    b = np.arange(kmax + 1)
    gap = kmax - np.arange(kmax)
    for p, c in zip(probs, counts):
        if p == 0.0 or c == 0:
            continue
        pmf = stats.binom.pmf(b[:kmax], c, p)
        sfb = stats.binom.sf(b - 1, c, p)   # P(B >= b)
        new = np.empty(kmax + 1)
        new[:kmax] = np.convolve(state[:kmax], pmf)[:kmax]
        new[kmax] = state[kmax] + state[:kmax] @ sfb[gap]
        state = new
    return state


def poisson_binomial_sf(observed, probs, counts=None):
    """``P(X >= observed)`` for a sum of independent Bernoulli(probs)."""
    obs = np.asarray(observed, dtype=np.int64)
    kmax = int(max(obs.max(initial=0), 0))
    table = poisson_binomial_tail_table(probs, kmax, counts)
    tails = np.cumsum(table[::-1])[::-1]
    out = np.where(obs <= 0, 1.0, tails[np.clip(obs, 0, kmax)])
    return float(out) if out.ndim == 0 else out


def poisson_sf(observed, lam):
    """``P(X >= observed)`` for a Poisson variable of mean ``lam``."""
    obs = np.asarray(observed, dtype=np.int64)
    out = np.where(obs <= 0, 1.0, stats.poisson.sf(obs - 1, lam))
    return float(out) if out.ndim == 0 else out


def survival_probability(observed, null, mode: str = EXACT):
    """P-value of ``observed`` co-occurrences.

    ``null`` is a probability sequence in ``exact`` mode and the Poisson
    mean in ``poisson`` mode.  Non-positive observations give 1.
    """
    if mode == EXACT:
        return poisson_binomial_sf(observed, null)
    if mode == POISSON:
        lam = float(null) if np.ndim(null) == 0 else float(np.sum(_check_probs(null)))
        return poisson_sf(observed, lam)
    raise ValueError(f"unknown null mode {mode!r}")


# --------------------------------------------------------------------------
# multiple testing

@dataclass(frozen=True)
class FdrResult:
    alpha: float
    threshold_rank: int     # 0 when nothing is rejected
    threshold: float        # p-value at the threshold rank (0.0 when nothing is rejected)
    n_tests: int
    rejected: np.ndarray    # boolean mask aligned with the input p-values


def fdr_select(p_values, alpha: float = 0.01, n_tests: int | None = None) -> FdrResult:
    """Benjamini-Hochberg step-up selection.

    The threshold rank is the largest ``i`` with ``p_(i) <= i alpha / N``;
    every p-value not above ``p_(i)`` is rejected, so ties at the threshold
    are rejected together.  ``n_tests`` may exceed ``len(p_values)`` to
    account for untested pairs whose p-value is 1.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    p = np.asarray(p_values, dtype=float).ravel()
    n = p.size if n_tests is None else int(n_tests)
    if n < p.size:
        raise ValueError("n_tests smaller than the number of p-values")
    if p.size == 0:
        return FdrResult(alpha, 0, 0.0, n, np.zeros(0, dtype=bool))
    ordered = np.sort(p)
    ranks = np.arange(1, p.size + 1)
    ok = np.flatnonzero(ordered <= ranks * alpha / n)
    if ok.size == 0:
        return FdrResult(alpha, 0, 0.0, n, np.zeros(p.size, dtype=bool))
    rank = int(ok[-1]) + 1
    threshold = float(ordered[rank - 1])
    return FdrResult(alpha, rank, threshold, n, p <= threshold)


def bonferroni_select(p_values, alpha: float = 0.01, n_tests: int | None = None) -> FdrResult:
    """Family-wise Bonferroni selection, for diagnostics only."""
    p = np.asarray(p_values, dtype=float).ravel()
    n = p.size if n_tests is None else int(n_tests)
    rejected = p <= alpha / max(n, 1)
    return FdrResult(alpha, int(rejected.sum()), alpha / max(n, 1), n, rejected)


# --------------------------------------------------------------------------
# observed co-occurrences

def observed_vmotifs_undirected(g: BipartiteGraph):
    """Shared-neighbour counts for every unordered L-pair with nonzero overlap.

    Returns index arrays ``(i, j, observed)`` with ``i < j``.
    """
    M = g.biadjacency()
    C = sp.triu(M @ M.T, k=1).tocoo()
    order = np.lexsort((C.col, C.row))
    return (C.row[order].astype(np.int64), C.col[order].astype(np.int64),
            np.rint(C.data[order]).astype(np.int64))


def observed_vmotifs_directed(g: DirectedBipartiteGraph):
    """Ordered pairs ``(u, v)`` where ``v`` retweeted at least one post authored by ``u``."""
    C = (g.authorship_matrix() @ g.retweet_matrix().T).tocoo()
    keep = C.data > 0
    u, v, obs = C.row[keep], C.col[keep], np.rint(C.data[keep]).astype(np.int64)
    order = np.lexsort((v, u))
    return u[order].astype(np.int64), v[order].astype(np.int64), obs[order]


# --------------------------------------------------------------------------
# expected co-occurrences

def _chung_lu_middle_sum(fit: BicmFit) -> float:
    k = fit.right_degrees.astype(float)
    return float(k @ k)


def pair_lambda_undirected(fit: BicmFit, i, j):
    """Mean shared-neighbour count ``sum_a p_ia p_ja`` of L-nodes ``i`` and ``j``.

    In ``chung_lu`` mode the closed form ``k_i k_j / m^2 * sum_a k_a^2`` is
    returned.  ``i`` and ``j`` may be index arrays.
    """
    i = np.asarray(i)
    j = np.asarray(j)
    if fit.mode == CHUNG_LU:
        m = fit.m
        if m == 0:
            return np.zeros(np.broadcast(i, j).shape) if i.ndim else 0.0
        kl = fit.left_degrees.astype(float)
        out = kl[i] * kl[j] / m**2 * _chung_lu_middle_sum(fit)
        return float(out) if np.ndim(out) == 0 else out
    if i.ndim == 0 and j.ndim == 0:
        P = fit.probabilities([int(i), int(j)])
        return float(P[0] @ P[1])
    lam = np.empty(np.broadcast(i, j).shape)
    flat_i, flat_j = np.broadcast_arrays(i, j)
    flat_i, flat_j = flat_i.ravel(), flat_j.ravel()
    out = lam.ravel()
    classes, inv = np.unique(fit.x, return_inverse=True)
    reps = np.array([np.flatnonzero(inv == c)[0] for c in range(classes.size)])
    Pc = fit.probabilities(reps)
    L = Pc @ Pc.T
    out[:] = L[inv[flat_i], inv[flat_j]]
    return lam


@dataclass
class PairStatistics:
    """Tested pairs: index arrays plus observed count, null mean and p-value."""

    source: np.ndarray
    target: np.ndarray
    observed: np.ndarray
    lam: np.ndarray
    p_value: np.ndarray
    mode: str

    def __len__(self):
        return int(self.source.size)


def choose_mode(n_middle: int, max_probability: float) -> str:
    if n_middle <= EXACT_MAX_MIDDLE or max_probability > EXACT_MIN_PROBABILITY:
        return EXACT
    return POISSON


def _grouped_exact_pvalues(key_a, key_b, observed, prob_fn):
    """Exact p-values where the null depends only on a pair of node classes.

    ``prob_fn(a, b)`` returns ``(probs, counts)`` of the per-middle-class
    V-motif probabilities for classes ``a`` and ``b``.
    """
    p = np.ones(observed.size)
    if observed.size == 0:
        return p
    keys = np.stack([key_a, key_b], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(uniq.shape[0] + 1))
    for g in range(uniq.shape[0]):
        members = order[bounds[g]:bounds[g + 1]]
        probs, counts = prob_fn(int(uniq[g, 0]), int(uniq[g, 1]))
        p[members] = poisson_binomial_sf(observed[members], probs, counts)
    return p


def undirected_pair_statistics(g: BipartiteGraph, fit: BicmFit, mode: str | None = None) -> PairStatistics:
    i, j, obs = observed_vmotifs_undirected(g)
    if fit.x.size != g.shape[0] or fit.y.size != g.shape[1]:
        raise ValueError("fit does not match the graph dimensions")
    row_classes, row_inv = np.unique(fit.x, return_inverse=True)
    col_classes, col_inv, col_counts = np.unique(fit.y, return_inverse=True, return_counts=True)
    row_reps = np.array([np.flatnonzero(row_inv == c)[0] for c in range(row_classes.size)], dtype=np.int64)
    col_reps = np.array([np.flatnonzero(col_inv == c)[0] for c in range(col_classes.size)], dtype=np.int64)
    Pc = fit.probabilities(row_reps)[:, col_reps] if row_reps.size else np.zeros((0, col_reps.size))
    lam = pair_lambda_undirected(fit, i, j) if i.size else np.zeros(0)
    if mode is None:
        mode = choose_mode(g.shape[1], float(Pc.max(initial=0.0)))
    if mode == POISSON:
        p = poisson_sf(obs, lam) if obs.size else np.ones(0)
    elif mode == EXACT:
        p = _grouped_exact_pvalues(row_inv[i], row_inv[j], obs,
                                   lambda a, b: (Pc[a] * Pc[b], col_counts))
    else:
        raise ValueError(f"unknown null mode {mode!r}")
    return PairStatistics(i, j, obs, np.asarray(lam, dtype=float), np.atleast_1d(p), mode)


def directed_pair_statistics(g: DirectedBipartiteGraph, fit: BidcmFit, mode: str | None = None) -> PairStatistics:
    degrees_directed(g)
    u, v, obs = observed_vmotifs_directed(g)
    if fit.q_author.size != g.n_users or fit.n_posts != g.n_posts:
        raise ValueError("fit does not match the graph dimensions")
    lam = directed_lambda(fit, u, v) if u.size else np.zeros(0)
    if mode is None:
        if fit.mode != BIDCM_EXACT:
            mode = POISSON
        else:
            top = float(fit.q_author.max(initial=0.0)) * float(
                logistic(fit.z_prime.max(initial=0.0), fit.zeta_prime.max(initial=0.0)))
            mode = choose_mode(g.n_posts, top)
    if mode == POISSON:
        p = poisson_sf(obs, lam) if obs.size else np.ones(0)
    elif mode == EXACT:
        if fit.mode != BIDCM_EXACT:
            raise ValueError("exact Poisson-binomial p-values need an exact-mode BiDCM fit")
        a_classes, a_inv = np.unique(fit.q_author, return_inverse=True)
        v_classes, v_inv = np.unique(fit.z_prime, return_inverse=True)
        p_classes, p_inv, p_counts = np.unique(fit.zeta_prime, return_inverse=True, return_counts=True)
        Q = logistic(v_classes[:, None], p_classes[None, :])
        p = _grouped_exact_pvalues(a_inv[u], v_inv[v], obs,
                                   lambda a, b: (a_classes[a] * Q[b], p_counts))
    else:
        raise ValueError(f"unknown null mode {mode!r}")
    return PairStatistics(u, v, obs, np.asarray(lam, dtype=float), np.atleast_1d(p), mode)


# --------------------------------------------------------------------------
# validation

@dataclass
class ValidatedProjection:
    """Result of a validated projection.

    ``graph`` holds the validated edges over the nodes they touch (self-loops
    already removed for directed projections); ``isolated`` lists tested-layer
    nodes left without edges; ``loops`` counts validated self-loops.
    """

    graph: DirectedGraph
    isolated: list[str]
    tests: PairStatistics
    selection: FdrResult
    mode: str
    loops: int = 0
    loop_nodes: list[str] = field(default_factory=list)

    @property
    def n_validated_links(self) -> int:
        """Validated links including discarded self-loops."""
        return self.graph.n_edges + self.loops


def _select(stats_: PairStatistics, alpha, n_tests, n_all, correction):
    n = n_all if n_tests == "all" else len(stats_)
    if n_tests not in ("all", "nonzero"):
        raise ValueError("n_tests must be 'nonzero' or 'all'")
    if correction == "fdr":
        return fdr_select(stats_.p_value, alpha, n_tests=max(n, len(stats_)))
    if correction == "bonferroni":
        return bonferroni_select(stats_.p_value, alpha, n_tests=max(n, len(stats_)))
    raise ValueError(f"unknown correction {correction!r}")


def _emit(node_ids, stats_, selection, directed):
    mask = selection.rejected
    graph = DirectedGraph(node_ids, stats_.source[mask], stats_.target[mask],
                          {"observed": stats_.observed[mask], "lambda": stats_.lam[mask],
                           "p_value": stats_.p_value[mask]}, directed=directed)
    return graph


def validate_undirected(g: BipartiteGraph, fit: BicmFit, alpha: float = 0.01, mode: str | None = None,
                        n_tests: str = "nonzero", correction: str = "fdr") -> ValidatedProjection:
    """Project ``g`` on layer L keeping pairs whose overlap the BiCM cannot explain."""
    st = undirected_pair_statistics(g, fit, mode)
    n_l = g.shape[0]
    sel = _select(st, alpha, n_tests, n_l * (n_l - 1) // 2, correction)
    full = _emit(g.left_ids, st, sel, directed=False)
    graph, isolated = full.drop_isolated()
    logger.info("undirected projection: %d tests, %d validated links (%s null)", len(st), graph.n_edges, st.mode)
    return ValidatedProjection(graph, isolated, st, sel, st.mode)


def validate_directed(g: DirectedBipartiteGraph, fit: BidcmFit, alpha: float = 0.01, mode: str | None = None,
                      n_tests: str = "nonzero", correction: str = "fdr") -> ValidatedProjection:
    """Directed projection on users: edge ``u -> v`` when ``v`` retweets ``u`` significantly.

    Self-loops are validated like any pair, then counted and removed.
    """
    st = directed_pair_statistics(g, fit, mode)
    sel = _select(st, alpha, n_tests, g.n_users * g.n_users, correction)
    full = _emit(g.user_ids, st, sel, directed=True)
    loop_nodes = sorted(g.user_ids[s] for s in full.sources[full.loop_mask])
    no_loops, loops = remove_self_loops(full)
    graph, isolated = no_loops.drop_isolated()
    logger.info("directed projection: %d tests, %d validated links, %d loops (%s null)",
                len(st), graph.n_edges, loops, st.mode)
    return ValidatedProjection(graph, isolated, st, sel, st.mode, loops, loop_nodes)
