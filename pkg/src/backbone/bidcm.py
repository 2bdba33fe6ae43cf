"""Bipartite Directed Configuration Model over users x posts.

Every post has exactly one author, so the authorship probabilities are
closed-form: ``q_up = kappa_u^out / N_P`` for every post ``p``.  The
retweet side is a BiCM on the retweet matrix and is only solved in
``exact`` mode; the Poisson parameter of the directed projection needs
only the degree sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bicm import logistic, solve_fitness
from .core import DirectedBipartiteGraph, degrees_directed

LAMBDA_ONLY = "lambda_only"
EXACT = "exact"


@dataclass
class BidcmFit:
    q_author: np.ndarray        # per user, identical across posts
    user_in: np.ndarray         # observed retweet counts per user
    post_out: np.ndarray        # observed retweet counts per post
    n_posts: int
    mode: str
    residual: float = 0.0
    iterations: int = 0
    z_prime: np.ndarray | None = None
    zeta_prime: np.ndarray | None = None
    user_ids: tuple[str, ...] = ()

    @property
    def user_out(self) -> np.ndarray:
        return np.rint(self.q_author * self.n_posts).astype(np.int64)

    def retweet_probabilities(self, users=None) -> np.ndarray:
        """Dense ``q'_vp`` block for the selected users (exact mode only)."""
        if self.mode != EXACT:
            raise ValueError("retweet probabilities require an exact-mode fit")
        z = self.z_prime if users is None else self.z_prime[np.asarray(users)]
        return logistic(z[:, None], self.zeta_prime[None, :])

    def to_dict(self) -> dict:
        def enc(a):
            return None if a is None else [None if np.isinf(v) else float(v) for v in a]
        return {
            "model": "bidcm",
            "mode": self.mode,
            "n_posts": int(self.n_posts),
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "user_ids": list(self.user_ids),
            "user_out": self.user_out.tolist(),
            "user_in": self.user_in.tolist(),
            "post_out": self.post_out.tolist(),
            "z_prime": enc(self.z_prime),
            "zeta_prime": enc(self.zeta_prime),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BidcmFit":
        if d.get("model") != "bidcm":
            raise ValueError("not a BiDCM fit file")

        def dec(a):
            return None if a is None else np.array([np.inf if v is None else v for v in a], dtype=float)
        n_posts = int(d["n_posts"])
        q = np.asarray(d["user_out"], dtype=float) / n_posts if n_posts else np.zeros(len(d["user_out"]))
        return cls(q, np.asarray(d["user_in"], dtype=np.int64), np.asarray(d["post_out"], dtype=np.int64),
                   n_posts, d["mode"], d["residual"], d["iterations"], dec(d["z_prime"]), dec(d["zeta_prime"]),
                   tuple(d["user_ids"]))


def fit_bidcm(g: DirectedBipartiteGraph, mode: str = LAMBDA_ONLY, tol: float = 1e-8,
              max_iter: int = 10_000) -> BidcmFit:
    """Fit the directed model.  ``N_P`` counts every post, retweeted or not."""
    degs = degrees_directed(g)
    n_posts = g.n_posts
    q = degs.user_out / n_posts if n_posts else np.zeros(g.n_users)
    fit = BidcmFit(q.astype(float), degs.user_in, degs.post_out, n_posts, mode, user_ids=g.user_ids)
    if mode == LAMBDA_ONLY:
        return fit
    if mode != EXACT:
        raise ValueError(f"unknown BiDCM mode {mode!r}")
    if degs.user_in.sum() == 0:
        fit.z_prime = np.zeros(g.n_users)
        fit.zeta_prime = np.zeros(n_posts)
        return fit
    sol = solve_fitness(degs.user_in, degs.post_out, tol=tol, max_iter=max_iter)
    fit.z_prime, fit.zeta_prime = sol.x, sol.y
    fit.residual, fit.iterations = sol.residual, sol.iterations
    return fit


def directed_lambda(fit: BidcmFit, u, v):
    """Expected number of posts by ``u`` retweeted by ``v``: ``k_u^out k_v^in / N_P``.

    ``u`` and ``v`` may be index arrays.
    """
    if fit.n_posts == 0:
        return np.zeros(np.broadcast(np.asarray(u), np.asarray(v)).shape) if np.ndim(u) else 0.0
    return fit.q_author[u] * fit.user_in[v]
