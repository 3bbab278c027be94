"""G-Wishart normalizing constants and the closed-form edge-removal ratio.

With identity scale the prior normalizing constant factors as a product of
per-vertex Gamma terms times ``E f_E(psi_E)``, where ``psi`` is the upper
Cholesky factor of ``K`` in a fixed vertex order, the free entries
(diagonal and edge positions) are independent chi / standard normal
variables, and ``f_E = exp(-sum of squared completed entries / 2)``.
This module implements that Monte Carlo route, the exact route for
decomposable graphs, the Gamma-ratio approximation to
``I(G - e) / I(G)`` together with its error bound, and a direct
simulation of the approximation gap on disjoint-path graphs.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from scipy import special as sp

from .errors import (
    DeltaTooSmall,
    DimensionMismatch,
    EdgeAbsent,
    MissingFreeEntry,
    NonPositiveDiagonal,
    NotPositiveDefinite,
    ZeroSamples,
)
from .graph import Graph, PathProfile, decompose
from .special import big_r, little_r

LOG2 = math.log(2.0)
LOG2PI = math.log(2.0 * math.pi)
# floats per Monte Carlo block (N * p * p); fixes the block layout for a given (N, p)
BLOCK_FLOATS = 1 << 22


class TruncatedProfileWarning(UserWarning):
    """The chordless-path enumeration hit its cap; the bound is a lower estimate."""


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Accept ``None``, an int, a sequence of ints or an existing ``SeedSequence``."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _check_delta(delta: float):
    if not delta > 2:
        raise DeltaTooSmall(f"delta must exceed 2, got {delta}")


@dataclass(frozen=True)
class GWishartParams:
    """Shape ``delta`` and scale ``D`` of the G-Wishart prior (``D = I`` when omitted)."""

    delta: float
    scale: np.ndarray | None = None

    def __post_init__(self):
        _check_delta(self.delta)
        if self.scale is not None:
            D = np.asarray(self.scale, dtype=float)
            if D.ndim != 2 or D.shape[0] != D.shape[1] or not np.allclose(D, D.T):
                raise DimensionMismatch("scale must be a symmetric square matrix")
            if np.linalg.eigvalsh(D).min() <= 0:
                raise NotPositiveDefinite("scale must be positive definite")
            object.__setattr__(self, "scale", D)

    def scale_matrix(self, p: int) -> np.ndarray:
        if self.scale is None:
            return np.eye(p)
        if self.scale.shape[0] != p:
            raise DimensionMismatch(f"scale is {self.scale.shape[0]}x{self.scale.shape[0]}, K is {p}x{p}")
        return self.scale


@dataclass(frozen=True)
class NormEstimate:
    """A log-scale estimate with its (delta-method) standard error."""

    log_value: float
    std_error: float
    n_samples: int

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


@dataclass(frozen=True)
class GapEstimate:
    value: float
    std_error: float
    n_samples: int


def log_unnormalized_density(K, params: GWishartParams, graph: Graph | None = None) -> float:
    """``(delta-2)/2 log|K| - tr(K D)/2`` for ``K`` in the cone of ``graph``."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionMismatch("K must be square")
    p = K.shape[0]
    D = params.scale_matrix(p)
    if graph is not None:
        if graph.p != p:
            raise DimensionMismatch(f"graph has {graph.p} vertices, K is {p}x{p}")
        off = ~graph.adjacency & ~np.eye(p, dtype=bool)
        if np.any(K[off] != 0):
            raise NotPositiveDefinite("K has non-zero entries on missing edges")
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("K is not positive definite") from exc
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return 0.5 * (params.delta - 2) * logdet - 0.5 * float(np.sum(K * D))


# ---------------------------------------------------------------------------
# Cholesky parametrisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CholeskyFrame:
    """Completed upper-triangular ``psi`` in the coordinates of ``order``.

    ``psi[a, b]`` refers to vertices ``order[a]`` and ``order[b]``; ``nu[a]``
    counts neighbours of ``order[a]`` placed after it.
    """

    order: tuple[int, ...]
    nu: np.ndarray
    psi: np.ndarray

    def precision(self) -> np.ndarray:
        """``K = psi^T psi`` mapped back to the original vertex labels."""
        Kp = self.psi.T @ self.psi
        inv = np.argsort(self.order)
        return Kp[np.ix_(inv, inv)]


def _resolve_order(g: Graph, order: Sequence[int] | None) -> np.ndarray:
    if order is None:
        return np.arange(g.p)
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(g.p)):
        raise DimensionMismatch("order must be a permutation of the vertices")
    return order


def ordered_structure(g: Graph, order: Sequence[int] | None = None):
    """Return ``(order, nu, free_mask, missing_mask)`` for the ordered frame.

    Masks are strictly upper triangular (``free_mask`` excludes the diagonal).
    """
    order = _resolve_order(g, order)
    adj = g.adjacency[np.ix_(order, order)]
    upper = np.triu(np.ones((g.p, g.p), dtype=bool), 1)
    free = adj & upper
    missing = ~adj & upper
    nu = free.sum(axis=1)
    return order, nu, free, missing


def complete_batch(psi: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Fill the non-free entries of a stack of upper-triangular factors in place.

    ``psi`` has shape ``(N, p, p)``; row ``i`` of the non-free entries is
    ``-(sum_{r<i} psi_ri psi_rj) / psi_ii``, which only needs rows above it,
    so rows are processed top to bottom.
    """
    p = psi.shape[-1]
    for i in range(p):
        cols = np.flatnonzero(missing[i])
        if cols.size == 0:
            continue
        if i == 0:
            psi[:, 0, cols] = 0.0
            continue
        s = np.einsum("nr,nrc->nc", psi[:, :i, i], psi[:, :i, cols])
        psi[:, i, cols] = -s / psi[:, i, i, None]
    return psi


def cholesky_completion(free_psi, g: Graph, order: Sequence[int] | None = None) -> CholeskyFrame:
    """Complete a partially specified Cholesky factor so that ``psi^T psi``
    vanishes on the missing edges of ``g``.

    ``free_psi`` is a ``p x p`` array in the ordered frame; only the
    diagonal and the edge positions are read.
    """
    order, nu, free, missing = ordered_structure(g, order)
    free_psi = np.asarray(free_psi, dtype=float)
    if free_psi.shape != (g.p, g.p):
        raise DimensionMismatch(f"free_psi must be {g.p}x{g.p}")
    diag = np.diag(free_psi)
    if not np.all(np.isfinite(diag)) or not np.all(np.isfinite(free_psi[free])):
        raise MissingFreeEntry("every diagonal and edge entry must be supplied")
    if np.any(diag <= 0):
        raise NonPositiveDiagonal("diagonal of psi must be positive")
    psi = np.zeros((1, g.p, g.p))
    psi[0][free] = free_psi[free]
    psi[0][np.diag_indices(g.p)] = diag
    complete_batch(psi, missing)
    return CholeskyFrame(order=tuple(order.tolist()), nu=nu, psi=psi[0])


def log_const_factor(nu, delta: float) -> float:
    """Log of ``prod_i 2^((delta+nu_i)/2) (2 pi)^(nu_i/2) Gamma((delta+nu_i)/2)``."""
    nu = np.asarray(nu, dtype=float)
    a = (delta + nu) / 2
    return float(np.sum(a * LOG2 + 0.5 * nu * LOG2PI + sp.gammaln(a)))


# ---------------------------------------------------------------------------
# Monte Carlo constant
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _missing_sq(z, diag, free_i, free_j, miss_i, miss_j):
    """Per-sample ``sum of squared completed entries`` (``-2 log f_E``).

    Missing entries are listed row-major so every completion only reads
    entries already filled.
    """
    n, p = diag.shape
    psi = np.zeros((p, p))
    out = np.empty(n)
    for s in range(n):
        for k in range(p):
            psi[k, k] = diag[s, k]
        for k in range(free_i.size):
            psi[free_i[k], free_j[k]] = z[s, k]
        ss = 0.0
        for k in range(miss_i.size):
            i = miss_i[k]
            j = miss_j[k]
            acc = 0.0
            for r in range(i):
                acc += psi[r, i] * psi[r, j]
            v = -acc / psi[i, i]
            psi[i, j] = v
            ss += v * v
        if not ss < np.inf:  # overflowed completion: f_E underflows to 0
            ss = np.inf
        out[s] = ss
    return out


def _fe_block(n: int, nu, free, missing, delta, seed_seq) -> tuple[float, float, float]:
    """Shifted sums for one block: ``(m, sum exp(-(ss-m)/2), sum exp(-(ss-m)))``."""
    rng = np.random.default_rng(seed_seq)
    fi, fj = np.nonzero(free)
    mi, mj = np.nonzero(missing)
    z = rng.standard_normal((n, fi.size))
    diag = np.empty((n, nu.size))
    for k, v in enumerate(nu):  # scalar shapes take numpy's fast gamma path
        diag[:, k] = rng.standard_gamma((delta + v) / 2, n)
    np.sqrt(2.0 * diag, out=diag)
    ss = _missing_sq(z, diag, fi, fj, mi, mj)
    m = float(ss.min())
    if m == np.inf:
        return m, 0.0, 0.0
    h = np.exp(-0.5 * (ss - m))
    return m, float(h.sum()), float(np.dot(h, h))


def _mc_log_mean_fe(g: Graph, delta: float, n_samples: int, seed, order=None, threads: int = 1):
    """``(log mean f_E, relative sd of f_E, nu)``; computed with a common shift so
    averages whose terms all underflow still come out finite."""
    order, nu, free, missing = ordered_structure(g, order)
    if not missing.any():
        return 0.0, 0.0, nu
    per_block = max(1, BLOCK_FLOATS // (g.p * g.p))
    sizes = [per_block] * (n_samples // per_block)
    if n_samples % per_block:
        sizes.append(n_samples % per_block)
    seqs = as_seed_sequence(seed).spawn(len(sizes))
    jobs = [(n, nu, free, missing, delta, s) for n, s in zip(sizes, seqs)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda a: _fe_block(*a), jobs))
    else:
        parts = [_fe_block(*a) for a in jobs]
    m = min(b[0] for b in parts)
    if m == np.inf:
        return -np.inf, np.inf, nu
    s1 = math.fsum(b[1] * math.exp(-0.5 * (b[0] - m)) for b in parts)
    s2 = math.fsum(b[2] * math.exp(-(b[0] - m)) for b in parts)
    log_mean = -0.5 * m + math.log(s1 / n_samples)
    # var(f) / mean(f)^2
    rel_var = max(n_samples * s2 / (s1 * s1) - 1.0, 0.0)
    if n_samples > 1:
        rel_var *= n_samples / (n_samples - 1)
    return log_mean, math.sqrt(rel_var), nu


def mc_log_norm(g: Graph, delta: float, n_samples: int, seed=None,
                order: Sequence[int] | None = None, threads: int = 1) -> NormEstimate:
    """Monte Carlo estimate of ``log I_G(delta, I)``.

    Samples are drawn in fixed-size blocks, each with its own child seed,
    so the result is reproducible for a given ``(seed, n_samples, p)``
    regardless of ``threads``.
    """
    _check_delta(delta)
    if n_samples < 1:
        raise ZeroSamples("n_samples must be >= 1")
    log_mean, rel_sd, nu = _mc_log_mean_fe(g, delta, n_samples, seed, order, threads)
    return NormEstimate(log_const_factor(nu, delta) + log_mean, rel_sd / math.sqrt(n_samples), n_samples)


def mc_ratio(g: Graph, e: tuple[int, int], delta: float, n_samples: int, seed=None,
             threads: int = 1) -> NormEstimate:
    """Monte Carlo estimate of ``I(G - e) / I(G)`` (log scale) from two
    independent constant estimates."""
    _check_delta(delta)
    i, j = e
    if not g.has_edge(i, j):
        raise EdgeAbsent(f"edge {e} is not in the graph")
    s_minus, s_full = as_seed_sequence(seed).spawn(2)
    num = mc_log_norm(g.without_edge(i, j), delta, n_samples, s_minus, threads=threads)
    den = mc_log_norm(g, delta, n_samples, s_full, threads=threads)
    return NormEstimate(num.log_value - den.log_value,
                        math.hypot(num.std_error, den.std_error), n_samples)


# ---------------------------------------------------------------------------
# exact constants for decomposable graphs
# ---------------------------------------------------------------------------

def log_clique_norm(m: int, delta: float) -> float:
    """``log I`` of the complete graph on ``m`` vertices (0 for ``m = 0``)."""
    return log_const_factor(np.arange(m - 1, -1, -1), delta) if m else 0.0


def exact_log_norm_decomposable(g: Graph, delta: float) -> float:
    """``log I_G(delta, I)`` from the clique/separator factorisation."""
    _check_delta(delta)
    seq = decompose(g)
    return (sum(log_clique_norm(len(c), delta) for c in seq.components)
            - sum(log_clique_norm(len(s), delta) for s in seq.separators))


# ---------------------------------------------------------------------------
# closed-form approximation and error bound
# ---------------------------------------------------------------------------

def log_ratio_approx(delta: float, d) -> float | np.ndarray:
    """Log of :func:`ratio_approx`; vectorised over ``d``."""
    d = np.asarray(d, dtype=float)
    out = sp.gammaln((delta + d) / 2) - sp.gammaln((delta + d + 1) / 2) - LOG2 - 0.5 * math.log(math.pi)
    return float(out) if out.ndim == 0 else out


def ratio_approx(delta: float, d: int) -> float:
    """Approximate ``I(G - e) / I(G)`` with ``d`` common neighbours of the endpoints:
    ``Gamma((delta+d)/2) / (2 sqrt(pi) Gamma((delta+d+1)/2))``."""
    _check_delta(delta)
    if d < 0:
        raise ValueError("d must be >= 0")
    return math.exp(log_ratio_approx(delta, d))


def error_bound(delta: float, profile: PathProfile) -> float:
    """Upper bound on the relative error of :func:`ratio_approx` for disjoint paths.

    Warns with :class:`TruncatedProfileWarning` when the profile was cut
    short by the enumeration caps.
    """
    _check_delta(delta)
    if profile.truncated:
        warnings.warn("path enumeration truncated; bound covers enumerated paths only",
                      TruncatedProfileWarning, stacklevel=2)
    if not profile.long_lengths:
        return 0.0
    r_delta = big_r(delta)
    path_sum = math.fsum(r_delta ** ell for ell in profile.long_lengths)
    lead = 2.0 / (math.pi * little_r(delta)) * delta / (delta + 2)
    return lead * path_sum * big_r(delta + profile.d - 1)


def _gap_terms(delta: float, d: int, long_lengths, n: int, rng: np.random.Generator):
    """Per-sample ``(num, den)`` integrands on the disjoint-path graph.

    Vertex order: interior vertices path by path, then ``q``, then ``p``.
    ``q`` has no later neighbour once the edge is removed, so
    ``psi_qq^2 ~ chi2_delta``; interior vertices past the first have one
    later neighbour, giving ``chi2_{delta+1}`` diagonals along each path.
    """
    psi_qq = np.sqrt(rng.chisquare(delta, n))
    if d:
        short = np.einsum("nk,nk->n", rng.standard_normal((n, d)), rng.standard_normal((n, d)))
    else:
        short = np.zeros(n)
    missing_ss = np.zeros(n)  # sum over missing edges other than e
    long_cross = np.zeros(n)
    for ell in long_lengths:
        col_q = rng.standard_normal(n)  # psi between first interior vertex and q
        for _ in range(ell - 1):
            step = rng.standard_normal(n)
            diag = np.sqrt(rng.chisquare(delta + 1, n))
            col_q = -step * col_q / diag
            missing_ss += col_q ** 2
        long_cross += col_q * rng.standard_normal(n)  # times free psi(last, p)
    a_term = short / psi_qq
    psi_e = -(short + long_cross) / psi_qq
    num = np.exp(-0.5 * (missing_ss + psi_e ** 2))
    den = np.exp(-0.5 * (missing_ss + a_term ** 2))
    return num, den


def theorem_gap_mc(delta: float, d: int, long_lengths: Sequence[int], n_samples: int,
                   seed=None, n_batches: int = 20) -> GapEstimate:
    """Monte Carlo estimate of ``1 - E[f(psi_e)] / E[f(A)]``, the relative error
    of replacing ``psi_e`` by its length-2-path part.

    Numerator and denominator share random numbers; the standard error
    comes from ``n_batches`` independent batches.
    """
    _check_delta(delta)
    if n_samples < 1:
        raise ZeroSamples("n_samples must be >= 1")
    long_lengths = [int(ell) for ell in long_lengths]
    if any(ell < 2 for ell in long_lengths):
        raise ValueError("long path lengths must be >= 2")
    if not long_lengths:
        return GapEstimate(0.0, 0.0, n_samples)
    n_batches = max(1, min(n_batches, n_samples))
    sizes = np.full(n_batches, n_samples // n_batches)
    sizes[: n_samples % n_batches] += 1
    sums = []
    for size, ss in zip(sizes, as_seed_sequence(seed).spawn(n_batches)):
        num, den = _gap_terms(delta, d, long_lengths, int(size), np.random.default_rng(ss))
        sums.append((num.sum(), den.sum()))
    sums = np.array(sums)
    value = 1.0 - sums[:, 0].sum() / sums[:, 1].sum()
    if n_batches > 1:
        batch_vals = 1.0 - sums[:, 0] / sums[:, 1]
        se = float(batch_vals.std(ddof=1) / math.sqrt(n_batches))
    else:
        se = float("nan")
    return GapEstimate(float(value), se, n_samples)
