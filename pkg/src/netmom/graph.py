"""Sparse graph learning from lead-lag matrices.

Solves, for a signal matrix ``X`` (one row per market),

    minimise  tr(X^T (D - A) X) - alpha * 1^T log(A 1) + beta * ||A||_F^2
    s.t.      A symmetric, A >= 0 off the diagonal, diag(A) = 0,

with ``D = diag(A 1)``.  The problem is written over the upper-triangular
edge vector ``w`` where the trace term becomes ``sum_e z_e w_e`` with
``z_e = ||x_i - x_j||^2`` and the Frobenius term becomes ``2 beta ||w||^2``.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numba
import numpy as np
import pandas as pd

from .errors import ConvergenceError, DataError

log = logging.getLogger(__name__)

ZERO_FLOOR = 1e-10


@dataclass(frozen=True)
class GraphHyperParams:
    alpha: float = 1.0
    beta: float = 1.0
    max_iters: int = 20000
    tol: float = 1e-7

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if self.max_iters < 1 or not self.tol > 0:
            raise ValueError("max_iters and tol must be positive")


@dataclass(frozen=True)
class SolverInfo:
    iterations: int
    residual: float
    objective: float
    history: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class NetworkMatrix:
    date: pd.Timestamp | None
    values: np.ndarray
    raw: np.ndarray
    degrees: np.ndarray

    def to_frame(self, markets=None) -> pd.DataFrame:
        """Long-format dump with columns ``market_i, market_j, weight``."""
        n = len(self.values)
        names = list(markets) if markets is not None else [str(i) for i in range(n)]
        rows = [(names[i], names[j], self.values[i, j]) for i in range(n) for j in range(n) if i != j]
        return pd.DataFrame(rows, columns=["market_i", "market_j", "weight"])


def pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    sq = np.einsum("ij,ij->i", X, X)
    z = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    # exact zeros on the diagonal, no negative round-off
    np.fill_diagonal(z, 0.0)
    return np.maximum(z, 0.0)


def graph_objective(A: np.ndarray, X: np.ndarray, alpha: float, beta: float) -> float:
    """Objective evaluated straight from the matrix form (no edge linearisation)."""
    A = np.asarray(A, dtype=float)
    X = np.asarray(X, dtype=float)
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        return np.inf
    lap = np.diag(deg) - A
    return float(np.trace(X.T @ lap @ X) - alpha * np.sum(np.log(deg)) + beta * np.sum(A * A))


@functools.lru_cache(maxsize=64)
def _edges(n: int):
    iu, ju = np.triu_indices(n, 1)
    iu, ju = iu.astype(np.int64), ju.astype(np.int64)
    iu.setflags(write=False)
    ju.setflags(write=False)
    return iu, ju


def _to_matrix(w: np.ndarray, n: int) -> np.ndarray:
    iu, ju = _edges(n)
    A = np.zeros((n, n))
    A[iu, ju] = w
    A[ju, iu] = w
    return A


@numba.njit(cache=True)
def _degrees(w, ei, ej, n):
    d = np.zeros(n)
    for e in range(w.shape[0]):
        d[ei[e]] += w[e]
        d[ej[e]] += w[e]
    return d


@numba.njit(cache=True)
def _edge_objective(w, z, ei, ej, n, alpha, beta):
    d = _degrees(w, ei, ej, n)
    f = 0.0
    for i in range(n):
        if d[i] <= 0.0:
            return np.inf
        f -= alpha * np.log(d[i])
    for e in range(w.shape[0]):
        f += z[e] * w[e] + 2.0 * beta * w[e] * w[e]
    return f


@numba.njit(cache=True)
def _edge_gradient(w, z, ei, ej, n, alpha, beta):
    d = _degrees(w, ei, ej, n)
    g = np.empty_like(w)
    for e in range(w.shape[0]):
        g[e] = z[e] + 4.0 * beta * w[e] - alpha * (1.0 / d[ei[e]] + 1.0 / d[ej[e]])
    return g


@numba.njit(cache=True)
def _edge_hessian(w, ei, ej, n, beta, alpha):
    d = _degrees(w, ei, ej, n)
    E = w.shape[0]
    inv2 = alpha / (d * d)
    H = np.zeros((E, E))
    for e in range(E):
        for f in range(E):
            h = 0.0
            if ei[e] == ei[f] or ei[e] == ej[f]:
                h += inv2[ei[e]]
            if ej[e] == ei[f] or ej[e] == ej[f]:
                h += inv2[ej[e]]
            H[e, f] = h
        H[e, e] += 4.0 * beta
    return H


@numba.njit(cache=True)
def _newton(z, ei, ej, n, alpha, beta, w0, max_iters, tol):
    """Projected Newton iteration for the bound-constrained edge problem.

    Edges sitting at zero with a positive gradient form the active set and
    take a diagonally scaled gradient step; the remaining edges take a
    Newton step.  A trial point along the projected arc is accepted when it
    passes the Armijo test or when the directional derivative at the trial
    point along the step is still non-positive.  By convexity either test
    implies the objective did not increase, and the second one stays
    reliable once objective differences fall below floating-point
    resolution.
    """
    E = w0.shape[0]
    w = w0.copy()
    f = _edge_objective(w, z, ei, ej, n, alpha, beta)
    g = _edge_gradient(w, z, ei, ej, n, alpha, beta)
    history = np.empty(max_iters + 1)
    history[0] = f
    change = np.inf
    it = 0
    while True:
        residual = 0.0
        for e in range(E):
            residual = max(residual, abs(w[e] - max(0.0, w[e] - g[e])))
        if residual <= tol and change <= tol:
            return w, it, residual, history[: it + 1], True
        if it >= max_iters:
            return w, it, residual, history[: it + 1], False

        H = _edge_hessian(w, ei, ej, n, beta, alpha)
        eps_active = min(1e-8, residual)
        free = np.empty(E, dtype=np.int64)
        nf = 0
        p = np.empty(E)
        for e in range(E):
            if w[e] <= eps_active and g[e] > 0.0:
                p[e] = -g[e] / H[e, e]
            else:
                free[nf] = e
                nf += 1
        if nf > 0:
            idx = free[:nf]
            Hf = np.empty((nf, nf))
            rhs = np.empty(nf)
            ridge = 0.0
            for a in range(nf):
                ridge += H[idx[a], idx[a]]
            ridge = 1e-12 * ridge / nf
            for a in range(nf):
                rhs[a] = -g[idx[a]]
                for b in range(nf):
                    Hf[a, b] = H[idx[a], idx[b]]
                Hf[a, a] += ridge
            pf = np.linalg.solve(Hf, rhs)
            for a in range(nf):
                p[idx[a]] = pf[a]

        t = 1.0
        while True:
            w_new = np.maximum(0.0, w + t * p)
            f_new = _edge_objective(w_new, z, ei, ej, n, alpha, beta)
            if np.isfinite(f_new):
                g_new = _edge_gradient(w_new, z, ei, ej, n, alpha, beta)
                decrease = 0.0
                slope = 0.0
                for e in range(E):
                    decrease += g[e] * (w_new[e] - w[e])
                    slope += g_new[e] * (w_new[e] - w[e])
                if f_new <= f + 1e-4 * decrease or slope <= 0.0:
                    break
            t *= 0.5
            if t < 1e-20:
                return w, it, residual, history[: it + 1], residual <= tol
        dmax = 0.0
        wmax = 0.0
        for e in range(E):
            dmax = max(dmax, abs(w_new[e] - w[e]))
            wmax = max(wmax, abs(w_new[e]))
        change = dmax / max(1.0, wmax)
        w = w_new
        g = g_new
        f = f_new
        it += 1
        history[it] = f


def _primal_dual(z, ei, ej, n, alpha, beta, w0, max_iters, tol):
    """Forward-backward-forward primal-dual splitting on the edge vector."""
    E = len(z)
    S = np.zeros((n, E))
    S[ei, np.arange(E)] = 1.0
    S[ej, np.arange(E)] = 1.0
    gamma = 0.95 / (1.0 + 4.0 * beta + np.sqrt(2.0 * (n - 1)))
    w = w0.copy()
    v = -alpha / np.maximum(S @ w, 1e-12)
    history = [_edge_objective(w, z, ei, ej, n, alpha, beta)]
    it = 0
    residual = np.inf
    while it < max_iters:
        y = w - gamma * (4.0 * beta * w + S.T @ v)
        yb = v + gamma * (S @ w)
        p = np.maximum(0.0, y - gamma * z)
        pb = (yb - np.sqrt(yb * yb + 4.0 * alpha * gamma)) / 2.0
        q = p - gamma * (4.0 * beta * p + S.T @ pb)
        qb = pb + gamma * (S @ p)
        w_new = w - y + q
        v_new = v - yb + qb
        it += 1
        dw = np.max(np.abs(w_new - w)) / max(1.0, np.max(np.abs(w_new)))
        dv = np.max(np.abs(v_new - v)) / max(1.0, np.max(np.abs(v_new)))
        w, v = w_new, v_new
        history.append(_edge_objective(np.maximum(w, 0.0), z, ei, ej, n, alpha, beta))
        residual = max(dw, dv)
        if residual <= tol:
            break
    return np.maximum(w, 0.0), it, residual, np.array(history), residual <= tol


def _initial_edges(z: np.ndarray, n: int, alpha: float, beta: float) -> np.ndarray:
    # best constant graph: minimiser of F(c * 1) over c > 0
    E = len(z)
    zs = float(z.sum())
    if beta > 0:
        c = (-zs + np.sqrt(zs * zs + 16.0 * alpha * beta * E * n)) / (8.0 * beta * E)
    elif zs > 0:
        c = alpha * n / zs
    else:
        raise ConvergenceError("objective unbounded below: beta = 0 and all signal rows equal")
    return np.full(E, c)


def learn_graph(
    V: np.ndarray,
    params: GraphHyperParams | None = None,
    *,
    init: np.ndarray | None = None,
    method: str = "newton",
    return_info: bool = False,
):
    """Learn the raw adjacency matrix for signal matrix ``V`` (rows = nodes).

    ``method="newton"`` (default) is a monotone projected Newton solver;
    ``"primal_dual"`` runs the forward-backward-forward splitting instead.
    ``init`` may be a previous adjacency matrix to warm-start from.
    Entries below 1e-10 are set to exactly zero after convergence.
    """
    params = params or GraphHyperParams()
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] < 2:
        raise DataError("signal matrix must be 2-D with at least two rows")
    if not np.isfinite(V).all():
        raise DataError("signal matrix contains non-finite values")
    n = V.shape[0]
    ei, ej = _edges(n)
    zmat = pairwise_sq_dists(V)
    z = zmat[ei, ej]
    if params.beta == 0 and np.any(z == 0):
        raise ConvergenceError("objective unbounded below: beta = 0 with a zero-distance pair")
    w0 = _initial_edges(z, n, params.alpha, params.beta)
    if init is not None:
        winit = np.asarray(init, dtype=float)
        winit = winit[ei, ej] if winit.ndim == 2 else winit
        if np.all(_degrees(winit, ei, ej, n) > 0):
            w0 = winit.copy()

    solver = _newton if method == "newton" else _primal_dual if method == "primal_dual" else None
    if solver is None:
        raise ValueError(f"unknown solver {method!r}")
    w, iters, residual, history, converged = solver(
        z, ei, ej, n, float(params.alpha), float(params.beta), w0, int(params.max_iters), float(params.tol)
    )
    log.debug(
        "graph solve method=%s n=%d alpha=%g beta=%g iterations=%d residual=%.3e",
        method, n, params.alpha, params.beta, iters, residual,
    )
    if not converged:
        raise ConvergenceError(
            f"graph solver did not converge in {iters} iterations (residual {residual:.3e})",
            iterations=iters,
            residual=residual,
        )
    w = np.where(w < ZERO_FLOOR, 0.0, w)
    A = _to_matrix(w, n)
    if return_info:
        obj = float(_edge_objective(w, z, ei, ej, n, params.alpha, params.beta))
        return A, SolverInfo(iters, float(residual), obj, np.asarray(history))
    return A


def normalize_graph(A: np.ndarray) -> np.ndarray:
    """Symmetric degree normalisation ``D^-1/2 A D^-1/2``."""
    A = np.asarray(A, dtype=float)
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        raise DataError("cannot normalise a graph with an isolated node (zero row sum)")
    inv = 1.0 / np.sqrt(deg)
    return A * inv[:, None] * inv[None, :]


def ensemble_network(V_list, params: GraphHyperParams | None = None, *, date=None) -> NetworkMatrix:
    """Average the graphs learned from each lead-lag matrix, then normalise.

    With a single matrix this is plain learn-then-normalise.
    """
    V_list = [np.asarray(V, dtype=float) for V in V_list]
    if not V_list:
        raise ValueError("need at least one lead-lag matrix")
    shape = V_list[0].shape
    if any(V.shape != shape for V in V_list):
        raise DataError("lead-lag matrices must share the same market order and size")
    mean = np.zeros(shape)
    for V in V_list:
        mean += learn_graph(V, params) / len(V_list)
    return NetworkMatrix(date=date, values=normalize_graph(mean), raw=mean, degrees=mean.sum(axis=1))
