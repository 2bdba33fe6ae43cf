"""Bipartite Configuration Model fitting.

The link probability between ``i`` on layer L and ``a`` on layer Gamma is
``x_i y_a / (1 + x_i y_a)``.  Fitnesses are chosen so that the expected
degree of every node equals its observed degree.  The system is solved on
degree classes: nodes with the same degree necessarily share a fitness, so
the number of unknowns is the number of distinct degrees.

``chung_lu`` mode skips the solve and uses ``p = k_i k_a / m``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import BipartiteGraph, degrees_bipartite

logger = logging.getLogger(__name__)

EXACT = "exact"
CHUNG_LU = "chung_lu"


class ConvergenceError(RuntimeError):
    """The likelihood system was not solved within the iteration budget."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class FitnessSolution:
    x: np.ndarray
    y: np.ndarray
    residual: float
    iterations: int
    pinned_rows: int
    pinned_cols: int


def logistic(x, y):
    """``xy / (1 + xy)`` with infinite (pinned) fitnesses mapped to 1."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pinned = np.isinf(x) | np.isinf(y)
    with np.errstate(invalid="ignore", over="ignore"):
        xy = x * y
        p = xy / (1.0 + xy)
    return np.where(pinned, 1.0, p)


def _relative_error(expected, observed):
    if expected.size == 0:
        return 0.0
    return float(np.max(np.abs(expected - observed) / np.maximum(observed, 1.0)))


def _class_residual(X, Y, dr, ds, cr, cs):
    P = logistic(X[:, None], Y[None, :])
    er = P @ cs
    es = cr @ P
    return max(_relative_error(er, dr), _relative_error(es, ds))


def _newton_polish(X, Y, dr, ds, cr, cs, tol, max_iter):
    """Newton steps on log-fitnesses; minimum-norm steps absorb the gauge freedom."""
    t = np.concatenate([np.log(X), np.log(Y)])
    nr = X.size
    target = np.concatenate([dr, ds]).astype(float)
    scale = np.maximum(target, 1.0)

    def residual_vec(theta):
        with np.errstate(over="ignore"):
            P = logistic(np.exp(theta[:nr])[:, None], np.exp(theta[nr:])[None, :])
        return np.concatenate([P @ cs, cr @ P]) - target, P

    f, P = residual_vec(t)
    it = 0
    for it in range(1, max_iter + 1):
        err = float(np.max(np.abs(f) / scale))
        if err <= tol:
            return np.exp(t[:nr]), np.exp(t[nr:]), err, it - 1
        W = P * (1.0 - P)
        J = np.zeros((t.size, t.size))
        J[:nr, :nr] = np.diag(W @ cs)
        J[:nr, nr:] = W * cs[None, :]
        J[nr:, :nr] = (W * cr[:, None]).T
        J[nr:, nr:] = np.diag(cr @ W)
        step = np.linalg.lstsq(J, -f, rcond=None)[0]
        norm0 = float(np.linalg.norm(f / scale))
        lam = 1.0
        while lam > 1e-8:
            f_new, P_new = residual_vec(t + lam * step)
            if np.linalg.norm(f_new / scale) < norm0:
                break
            lam *= 0.5
        t = t + lam * step
        f, P = f_new, P_new
    err = float(np.max(np.abs(f) / scale))
    with np.errstate(over="ignore"):
        return np.exp(t[:nr]), np.exp(t[nr:]), err, it


def solve_fitness(row_degrees, col_degrees, tol: float = 1e-8, max_iter: int = 10_000) -> FitnessSolution:
    """Solve ``sum_a p_ia = k_i`` and ``sum_i p_ia = k_a`` for the fitnesses.

    Zero-degree nodes get fitness 0.  Nodes of full degree get an infinite
    fitness (probability 1 towards every partner) and are removed from the
    system, with a warning.

    Raises
    ------
    ConvergenceError
        If the relative degree error stays above ``tol``.
    """
    kr = np.asarray(row_degrees, dtype=np.int64)
    kc = np.asarray(col_degrees, dtype=np.int64)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if kr.sum() != kc.sum():
        raise ValueError("degree sequences have different sums")
    nr, nc = kr.size, kc.size
    full_r = (kr == nc) & (nc > 0)
    full_c = (kc == nr) & (nr > 0)
    if full_r.any() or full_c.any():
        warnings.warn(f"{int(full_r.sum())} row(s) and {int(full_c.sum())} column(s) have full degree; "
                      "their link probabilities are pinned to 1", RuntimeWarning, stacklevel=2)
    x = np.zeros(nr)
    y = np.zeros(nc)
    x[full_r] = np.inf
    y[full_c] = np.inf
    tr = kr - int(full_c.sum())
    tc = kc - int(full_r.sum())
    act_r = ~full_r & (tr > 0)
    act_c = ~full_c & (tc > 0)

    iterations = 0
    if act_r.any() and act_c.any():
        dr, inv_r, cr = np.unique(tr[act_r], return_inverse=True, return_counts=True)
        ds, inv_c, cs = np.unique(tc[act_c], return_inverse=True, return_counts=True)
        dr, ds, cr, cs = (a.astype(float) for a in (dr, ds, cr, cs))
        X, Y, residual, iterations = _fixed_point(dr, ds, cr, cs, tol, max_iter)
        if residual > tol:
            logger.debug("fixed point stalled at %.3e; switching to Newton", residual)
            X, Y, residual, extra = _newton_polish(X, Y, dr, ds, cr, cs, tol, 200)
            iterations += extra
        x[act_r] = X[inv_r]
        y[act_c] = Y[inv_c]
    elif act_r.any() or act_c.any():
        raise ConvergenceError("degree sequence cannot be matched", float("inf"), 0)

    P = logistic(x[:, None], y[None, :]) if nr * nc <= 4_000_000 else None
    if P is not None:
        residual = max(_relative_error(P.sum(1), kr.astype(float)), _relative_error(P.sum(0), kc.astype(float)))
    else:
        residual = _blocked_residual(x, y, kr, kc)
    if not np.isfinite(residual) or residual > tol:
        raise ConvergenceError("BiCM likelihood system not solved", residual, iterations)
    return FitnessSolution(x, y, residual, iterations, int(full_r.sum()), int(full_c.sum()))


def _blocked_residual(x, y, kr, kc, block=2048):
    col_sum = np.zeros(y.size)
    err = 0.0
    for start in range(0, x.size, block):
        P = logistic(x[start:start + block, None], y[None, :])
        err = max(err, _relative_error(P.sum(1), kr[start:start + block].astype(float)))
        col_sum += P.sum(0)
    return max(err, _relative_error(col_sum, kc.astype(float)))


def _fixed_point(dr, ds, cr, cs, tol, max_iter):
    m = float(dr @ cr)
    X = dr / np.sqrt(m)
    Y = ds / np.sqrt(m)
    damping = 1.0
    checkpoint = np.inf
    best = (np.inf, X, Y)
    residual = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        D = 1.0 + X[:, None] * Y[None, :]
        X_new = dr / ((cs * Y)[None, :] / D).sum(1)
        D = 1.0 + X_new[:, None] * Y[None, :]
        Y_new = ds / ((cr * X_new)[:, None] / D).sum(0)
        if damping < 1.0:
            X_new = np.exp(damping * np.log(X_new) + (1 - damping) * np.log(X))
            Y_new = np.exp(damping * np.log(Y_new) + (1 - damping) * np.log(Y))
        X, Y = X_new, Y_new
        residual = _class_residual(X, Y, dr, ds, cr, cs)
        if residual <= tol:
            return X, Y, residual, it
        if residual < best[0]:
            best = (residual, X, Y)
        elif residual > 2 * best[0]:
            # oscillation: restart from the best iterate with a smaller step
            damping = max(damping * 0.5, 0.05)
            _, X, Y = best
        if it % 500 == 0:
            # slow linear convergence: hand over to Newton
            if best[0] > 0.5 * checkpoint:
                break
            checkpoint = best[0]
    return best[1], best[2], best[0], it


@dataclass
class BicmFit:
    """Fitted BiCM.  ``x`` indexes layer L, ``y`` layer Gamma.

    In ``chung_lu`` mode ``x_i = k_i / sqrt(m)`` and ``y_a = k_a / sqrt(m)``
    so that ``x_i y_a`` is the Chung-Lu value; probabilities above 1 are
    clamped and counted in ``clamped``.
    """

    x: np.ndarray
    y: np.ndarray
    mode: str
    residual: float
    iterations: int
    left_degrees: np.ndarray
    right_degrees: np.ndarray
    left_ids: tuple[str, ...] = ()
    right_ids: tuple[str, ...] = ()
    clamped: int = field(default=0, compare=False)

    @property
    def m(self) -> int:
        return int(self.left_degrees.sum())

    def probabilities(self, rows=None) -> np.ndarray:
        """Dense probability block for the selected rows (all rows by default)."""
        xs = self.x if rows is None else self.x[np.asarray(rows)]
        if self.mode == CHUNG_LU:
            raw = xs[:, None] * self.y[None, :]
            over = raw > 1.0
            self.clamped += int(over.sum())
            return np.minimum(raw, 1.0)
        return logistic(xs[:, None], self.y[None, :])

    def expected_degrees(self) -> tuple[np.ndarray, np.ndarray]:
        row = np.zeros(self.x.size)
        col = np.zeros(self.y.size)
        for start in range(0, self.x.size, 2048):
            P = self.probabilities(np.arange(start, min(start + 2048, self.x.size)))
            row[start:start + P.shape[0]] = P.sum(1)
            col += P.sum(0)
        return row, col

    def to_dict(self) -> dict:
        def enc(a):
            return [None if np.isinf(v) else float(v) for v in a]
        return {
            "model": "bicm",
            "mode": self.mode,
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "left_ids": list(self.left_ids),
            "right_ids": list(self.right_ids),
            "left_degrees": self.left_degrees.tolist(),
            "right_degrees": self.right_degrees.tolist(),
            "x": enc(self.x),
            "y": enc(self.y),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BicmFit":
        def dec(a):
            return np.array([np.inf if v is None else v for v in a], dtype=float)
        if d.get("model") != "bicm":
            raise ValueError("not a BiCM fit file")
        return cls(dec(d["x"]), dec(d["y"]), d["mode"], d["residual"], d["iterations"],
                   np.asarray(d["left_degrees"], dtype=np.int64), np.asarray(d["right_degrees"], dtype=np.int64),
                   tuple(d["left_ids"]), tuple(d["right_ids"]))


def fit_bicm(g: BipartiteGraph, tol: float = 1e-8, max_iter: int = 10_000, mode: str = EXACT) -> BicmFit:
    """Fit the BiCM to ``g`` by matching expected and observed degrees."""
    kl, kr = degrees_bipartite(g)
    if mode == CHUNG_LU:
        m = g.m
        if m == 0:
            x, y = np.zeros(kl.size), np.zeros(kr.size)
        else:
            s = np.sqrt(m)
            x, y = kl / s, kr / s
        fit = BicmFit(x.astype(float), y.astype(float), CHUNG_LU, 0.0, 0, kl, kr, g.left_ids, g.right_ids)
        if m:
            row, col = fit.expected_degrees()
            fit.residual = max(_relative_error(row, kl.astype(float)), _relative_error(col, kr.astype(float)))
        fit.clamped = 0
        return fit
    if mode != EXACT:
        raise ValueError(f"unknown BiCM mode {mode!r}")
    if g.m == 0:
        raise ValueError("cannot fit the BiCM to an empty graph")
    sol = solve_fitness(kl, kr, tol=tol, max_iter=max_iter)
    return BicmFit(sol.x, sol.y, EXACT, sol.residual, sol.iterations, kl, kr, g.left_ids, g.right_ids)


def link_probability(fit: BicmFit, i: int, a: int) -> float:
    """Probability of the link ``(i, a)`` under ``fit``."""
    if fit.mode == CHUNG_LU:
        raw = float(fit.left_degrees[i]) * float(fit.right_degrees[a]) / fit.m if fit.m else 0.0
        if raw > 1.0:
            fit.clamped += 1
            return 1.0
        return raw
    return float(logistic(fit.x[i], fit.y[a]))
