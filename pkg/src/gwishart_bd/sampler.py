"""Exact G-Wishart sampling.

A complete-graph Wishart draw ``K0`` is converted into a draw on ``P_G``
by the covariance-completion fixed point: starting from ``W = K0^{-1}``
each column ``j`` is refitted by regressing on its neighbours only, which
leaves ``W^{-1}`` with zeros on the missing edges while ``W`` keeps the
sampled covariance entries on the edges and the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DeltaTooSmall, DimensionMismatch, NoConvergence, NotPositiveDefinite
from .graph import Graph


@dataclass(frozen=True)
class SamplerConfig:
    """Stopping rule for the completion fixed point."""

    max_iters: int = 1000
    tol: float = 1e-8

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


DEFAULT_CONFIG = SamplerConfig()


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _scale_factor(scale, p: int) -> np.ndarray | None:
    """Upper-triangular ``U`` with ``U^T U = scale^{-1}``; ``None`` for the identity."""
    if scale is None:
        return None
    D = np.asarray(scale, dtype=float)
    if D.shape != (p, p):
        raise DimensionMismatch(f"scale must be {p}x{p}")
    if np.array_equal(D, np.eye(p)):
        return None
    try:
        L = np.linalg.cholesky(np.linalg.inv(D))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("scale must be positive definite") from exc
    return L.T


def _bartlett(delta: float, p: int, rng: np.random.Generator) -> np.ndarray:
    """Upper ``psi`` with ``psi^T psi ~ W(delta + p - 1, I)`` in the
    ``|K|^((delta-2)/2) exp(-tr K / 2)`` parametrisation."""
    psi = np.zeros((p, p))
    iu = np.triu_indices(p, 1)
    psi[iu] = rng.standard_normal(len(iu[0]))
    nu = np.arange(p - 1, -1, -1)
    psi[np.diag_indices(p)] = np.sqrt(rng.chisquare(delta + nu))
    return psi


def sample_wishart(delta: float, scale=None, seed=None, p: int | None = None) -> np.ndarray:
    """Draw ``K`` with density proportional to ``|K|^((delta-2)/2) exp(-tr(K D)/2)``.

    Parameters
    ----------
    delta : float
        Shape, ``> 2``.
    scale : array_like, optional
        Scale ``D``; identity when omitted (then ``p`` is required).
    seed : int, SeedSequence or Generator, optional
    p : int, optional
        Dimension when ``scale`` is omitted.
    """
    if not delta > 2:
        raise DeltaTooSmall(f"delta must exceed 2, got {delta}")
    if scale is None and p is None:
        raise DimensionMismatch("give either scale or p")
    p = int(np.shape(scale)[0]) if scale is not None else int(p)
    rng = _rng(seed)
    psi = _bartlett(delta, p, rng)
    U = _scale_factor(scale, p)
    if U is not None:
        psi = psi @ U
    K = psi.T @ psi
    return 0.5 * (K + K.T)


@numba.njit(cache=True)
def _complete_covariance(sigma, adj, tol, max_iters):
    p = sigma.shape[0]
    W = sigma.copy()
    for it in range(1, max_iters + 1):
        change = 0.0
        for j in range(p):
            nb = np.flatnonzero(adj[j])
            others = np.empty(p - 1, dtype=np.int64)
            k = 0
            for v in range(p):
                if v != j:
                    others[k] = v
                    k += 1
            new_col = np.zeros(p - 1)
            if nb.size > 0:
                A = np.empty((nb.size, nb.size))
                rhs = np.empty(nb.size)
                for a in range(nb.size):
                    rhs[a] = sigma[nb[a], j]
                    for b in range(nb.size):
                        A[a, b] = W[nb[a], nb[b]]
                beta = np.linalg.solve(A, rhs)
                for a in range(p - 1):
                    s = 0.0
                    for b in range(nb.size):
                        s += W[others[a], nb[b]] * beta[b]
                    new_col[a] = s
            for a in range(p - 1):
                v = others[a]
                d = abs(new_col[a] - W[v, j])
                if d > change:
                    change = d
                W[v, j] = new_col[a]
                W[j, v] = new_col[a]
        if change < tol:
            return W, it
    return W, -1


def sample_gwishart(g: Graph, delta: float, scale=None, cfg: SamplerConfig = DEFAULT_CONFIG,
                    seed=None) -> np.ndarray:
    """Draw ``K`` from the G-Wishart ``W_G(delta, D)``.

    The returned matrix is symmetric positive definite with exact zeros on
    the missing edges of ``g``. For the complete graph the Wishart draw is
    returned unchanged, so it matches :func:`sample_wishart` for the same seed.

    Raises
    ------
    NoConvergence
        If the completion has not settled within ``cfg.max_iters`` sweeps.
    """
    K0 = sample_wishart(delta, scale, seed, p=g.p)
    p = g.p
    if g.n_edges == p * (p - 1) // 2:
        return K0
    if g.n_edges == 0:
        return np.diag(1.0 / np.diag(np.linalg.inv(K0)))
    sigma = np.linalg.inv(K0)
    sigma = 0.5 * (sigma + sigma.T)
    W, it = _complete_covariance(sigma, np.ascontiguousarray(g.adjacency), cfg.tol, cfg.max_iters)
    if it < 0:
        raise NoConvergence(f"covariance completion did not converge in {cfg.max_iters} sweeps")
    K = np.linalg.inv(W)
    K = 0.5 * (K + K.T)
    K[~g.adjacency & ~np.eye(p, dtype=bool)] = 0.0
    return K
