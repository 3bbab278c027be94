"""Continuous-time birth-death MCMC over graphs and precision matrices.

Each state ``(G, K)`` carries a death rate for every edge and a birth
rate for every non-edge,

    death(e) = min{ I_G / I_{G-e} * H(K, D*, e), 1 },
    birth(e) = min{ I_G / I_{G+e} / H(K, D*, e), 1 },

with ``I`` the prior G-Wishart constants (``D = I``) and ``H`` the
K-dependent factor computed from ``Sigma = K^{-1}``.  The chain sits in a
state for ``W = 1 / (total rate)``, jumps along one edge chosen in
proportion to its rate, and then redraws ``K`` from the G-Wishart
posterior ``W_G(delta + n, I + S)``.  Edge posteriors are the
``W``-weighted edge frequencies.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    EdgeAbsent,
    EdgePresent,
    EmptyTrace,
    NoLegalMove,
    NonPositiveA11,
    SingularSubmatrix,
)
from .graph import Graph, is_decomposable, new_graph
from .gwishart import (
    _check_delta,
    as_seed_sequence,
    exact_log_norm_decomposable,
    log_ratio_approx,
    mc_log_norm,
)
from .sampler import DEFAULT_CONFIG, SamplerConfig, sample_gwishart

PROVIDER_MODES = ("approximation", "mc_ratio", "exact_decomposable")
LOG2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# normalizing-constant ratio providers
# ---------------------------------------------------------------------------

@dataclass
class RatioProvider:
    """Source of ``log I_G - log I_{G-e}`` for every pair.

    ``approximation`` uses the closed form in the common-neighbour count;
    ``mc_ratio`` estimates each constant by Monte Carlo; ``exact_decomposable``
    uses clique factorisations when both graphs are decomposable and falls
    back to Monte Carlo otherwise.  Constant estimates are cached by graph
    fingerprint, and each graph's Monte Carlo stream is seeded from
    ``(seed, fingerprint)`` so a graph always gets the same estimate.
    """

    mode: str = "approximation"
    mc_samples: int = 1000
    seed: int = 0
    threads: int = 1
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in PROVIDER_MODES:
            raise ConfigError(f"unknown provider mode {self.mode!r}; expected one of {PROVIDER_MODES}")
        if self.mode != "approximation" and self.mc_samples < 100:
            raise ConfigError("mc_samples must be >= 100")

    def log_norm(self, g: Graph, delta: float) -> float:
        key = (g.fingerprint, float(delta))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self.mode == "exact_decomposable" and is_decomposable(g):
            val = exact_log_norm_decomposable(g, delta)
        else:
            ss = np.random.SeedSequence([int(self.seed) & (2**64 - 1), int(g.fingerprint, 16)])
            val = mc_log_norm(g, delta, self.mc_samples, ss, threads=self.threads).log_value
        self._cache[key] = val
        return val

    def log_ratio_factors(self, g: Graph, delta: float) -> np.ndarray:
        """Matrix whose ``(i, j)`` entry (``i < j``) is ``log I_{G+e} - log I_{G-e}``
        for ``e = (i, j)``; the upper triangle is filled, the rest is zero."""
        p = g.p
        out = np.zeros((p, p))
        iu = np.triu_indices(p, 1)
        if self.mode == "approximation":
            A = g.adjacency.astype(np.int64)
            d = (A @ A)[iu]
            out[iu] = -log_ratio_approx(delta, d)
            return out
        base = self.log_norm(g, delta)
        for i, j in zip(*iu):
            other = self.log_norm(g.toggled(int(i), int(j)), delta)
            out[i, j] = base - other if g.has_edge(i, j) else other - base
        return out


# ---------------------------------------------------------------------------
# H factor
# ---------------------------------------------------------------------------

def _log_h_pairs(K: np.ndarray, sigma: np.ndarray, d_star: np.ndarray, ii, jj) -> np.ndarray:
    """``log H`` for pairs ``(ii[k], jj[k])`` from ``K`` and ``Sigma = K^{-1}``.

    For ``e = (i, j)``: ``K1 = K_ee - inv(Sigma_ee)``, ``a11 = inv(Sigma_ee)_ii``
    and ``k0_jj = K_{j,-j} (K_{-j,-j})^{-1} K_{-j,j}`` with ``k_ij`` zeroed,
    expanded through ``Sigma`` so no per-pair inverse is needed.
    """
    s_ii = sigma[ii, ii]
    s_jj = sigma[jj, jj]
    s_ij = sigma[ii, jj]
    k_ij = K[ii, jj]
    k_jj = K[jj, jj]
    det = s_ii * s_jj - s_ij * s_ij
    if np.any(det <= 0) or np.any(s_jj <= 0):
        raise SingularSubmatrix("Sigma_ee is singular")
    p_ii = s_jj / det
    p_jj = s_ii / det
    p_ij = -s_ij / det
    a11 = p_ii
    if np.any(a11 <= 0):
        raise NonPositiveA11("a11 must be positive")
    # k0_jj - k_jj
    k0_minus = (-1.0 / s_jj + 2.0 * k_ij * s_ij / s_jj
                + k_ij * k_ij * (s_ii - s_ij * s_ij / s_jj))
    d_ii = d_star[ii, ii]
    d_jj = d_star[jj, jj]
    d_ij = d_star[ii, jj]
    inner = d_ii * p_ii + d_jj * (k0_minus + p_jj) + 2.0 * d_ij * (p_ij - k_ij)
    return (0.5 * (np.log(d_jj / a11) - LOG2PI)
            - 0.5 * (inner - (d_ii - d_ij * d_ij / d_jj) * a11))


def _sigma(K: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise SingularSubmatrix("K is not positive definite") from exc
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def h_factor(K, d_star, e: tuple[int, int]) -> float:
    """``H(K, D*, e)``, the K-dependent part of the rate for edge ``e``.

    Parameters
    ----------
    K : (p, p) array
        Current precision matrix.
    d_star : (p, p) array
        Posterior scale ``I + X^T X``.
    e : (int, int)
        Distinct vertices; ordered internally as ``i < j``.
    """
    K = np.asarray(K, dtype=float)
    d_star = np.asarray(d_star, dtype=float)
    if K.shape != d_star.shape or K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DimensionMismatch("K and d_star must be square and of equal size")
    i, j = sorted(e)
    if i == j:
        raise ValueError("edge endpoints must differ")
    sigma = _sigma(K)
    return float(np.exp(_log_h_pairs(K, sigma, d_star, np.array([i]), np.array([j]))[0]))


# ---------------------------------------------------------------------------
# chain state, rates and a single jump
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainState:
    graph: Graph
    K: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.shape != (self.graph.p, self.graph.p):
            raise DimensionMismatch("K does not match the graph size")
        off = ~self.graph.adjacency & ~np.eye(self.graph.p, dtype=bool)
        if np.any(K[off] != 0):
            raise DimensionMismatch("K has non-zero entries on missing edges")


def log_rates(state: ChainState, d_star, delta: float, provider: RatioProvider) -> np.ndarray:
    """Log birth/death rates for every pair ``i < j`` in ``triu_indices`` order."""
    p = state.graph.p
    ii, jj = np.triu_indices(p, 1)
    sigma = _sigma(state.K)
    log_h = _log_h_pairs(state.K, sigma, np.asarray(d_star, dtype=float), ii, jj)
    log_rf = provider.log_ratio_factors(state.graph, delta)[ii, jj]
    present = state.graph.adjacency[ii, jj]
    x = np.where(present, log_rf + log_h, -(log_rf + log_h))
    return np.minimum(x, 0.0)


def death_rate(state: ChainState, e, d_star, delta: float, provider: RatioProvider) -> float:
    """``min{I_G / I_{G-e} * H, 1}`` for an edge ``e`` of the current graph."""
    i, j = sorted(e)
    if not state.graph.has_edge(i, j):
        raise EdgeAbsent(f"{e} is not an edge")
    return _single_rate(state, i, j, d_star, delta, provider)


def birth_rate(state: ChainState, e, d_star, delta: float, provider: RatioProvider) -> float:
    """``min{I_G / I_{G+e} / H, 1}`` for a non-edge ``e`` of the current graph."""
    i, j = sorted(e)
    if state.graph.has_edge(i, j):
        raise EdgePresent(f"{e} is already an edge")
    return _single_rate(state, i, j, d_star, delta, provider)


def _single_rate(state, i, j, d_star, delta, provider) -> float:
    _check_delta(delta)
    sigma = _sigma(state.K)
    log_h = _log_h_pairs(state.K, sigma, np.asarray(d_star, dtype=float), np.array([i]), np.array([j]))[0]
    if provider.mode == "approximation":
        d = len(state.graph.common_neighbors(i, j))
        log_rf = -float(log_ratio_approx(delta, d))
    else:
        g = state.graph
        lo, hi = (g.without_edge(i, j), g) if g.has_edge(i, j) else (g, g.with_edge(i, j))
        log_rf = provider.log_norm(hi, delta) - provider.log_norm(lo, delta)
    x = log_rf + log_h if state.graph.has_edge(i, j) else -(log_rf + log_h)
    return math.exp(min(x, 0.0))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def step(state: ChainState, d_star, delta: float, provider: RatioProvider, seed=None, *,
         n_obs: int, sampler_cfg: SamplerConfig = DEFAULT_CONFIG) -> tuple[ChainState, float]:
    """One jump of the chain.

    Returns the new state and the waiting time ``W = 1 / sum(rates)`` of the
    state that was left.  ``n_obs`` is the sample size behind ``d_star``;
    the new ``K`` is drawn from ``W_G'(delta + n_obs, d_star)``.
    """
    rng = _rng(seed)
    lr = log_rates(state, d_star, delta, provider)
    rates = np.exp(lr)
    total = math.fsum(rates)
    if not total > 0 or not math.isfinite(total):
        raise NoLegalMove("total jump rate is zero")
    k = int(np.searchsorted(np.cumsum(rates), rng.random() * rates.sum(), side="right"))
    k = min(k, len(rates) - 1)
    ii, jj = np.triu_indices(state.graph.p, 1)
    g_new = state.graph.toggled(int(ii[k]), int(jj[k]))
    K_new = sample_gwishart(g_new, delta + n_obs, d_star, sampler_cfg, rng)
    return ChainState(g_new, K_new, state.iteration + 1), 1.0 / total


# ---------------------------------------------------------------------------
# traces and summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    fingerprint: str
    edges: tuple[tuple[int, int], ...]
    weight: float
    K: np.ndarray | None = None


@dataclass
class Trace:
    p: int
    records: list[TraceRecord]
    burn_in: int
    config: dict

    def __len__(self):
        return len(self.records)

    @property
    def weights(self) -> np.ndarray:
        return np.array([r.weight for r in self.records])

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps({"edges": [list(e) for e in r.edges], "w": r.weight}) + "\n")

    @classmethod
    def from_jsonl(cls, path, p: int, burn_in: int = 0, config: dict | None = None) -> "Trace":
        recs = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                g = new_graph(p, obj["edges"])
                recs.append(TraceRecord(g.fingerprint, g.edges, float(obj["w"])))
        return cls(p, recs, burn_in, dict(config or {}))


@dataclass(frozen=True)
class PosteriorSummary:
    edge_prob: np.ndarray

    @property
    def p(self) -> int:
        return self.edge_prob.shape[0]

    def to_dict(self) -> dict:
        return {"p": self.p, "edge_prob": self.edge_prob.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorSummary":
        P = np.asarray(d["edge_prob"], dtype=float)
        if P.shape != (d["p"], d["p"]):
            raise DimensionMismatch("edge_prob shape does not match p")
        return cls(P)


def edge_posteriors(trace: Trace) -> PosteriorSummary:
    """Weight-averaged edge indicators: ``sum_t 1(e in G_t) W_t / sum_t W_t``."""
    if not trace.records:
        raise EmptyTrace("trace has no records")
    acc = np.zeros((trace.p, trace.p))
    total = 0.0
    for r in trace.records:
        if r.edges:
            idx = np.array(r.edges)
            acc[idx[:, 0], idx[:, 1]] += r.weight
        total += r.weight
    P = acc / total
    P = np.clip(P + P.T, 0.0, 1.0)
    return PosteriorSummary(P)


def select_graph(summary: PosteriorSummary, threshold: float = 0.5) -> Graph:
    """Graph of the edges whose posterior probability strictly exceeds ``threshold``."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return Graph.from_adjacency(np.triu(summary.edge_prob > threshold, 1))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    delta: float = 3.0
    iterations: int = 10_000
    burn_in: int = 5_000
    provider: str = "approximation"
    mc_samples: int = 1000
    seed: int | None = None
    snapshot_K: bool = False
    threads: int = 1

    def __post_init__(self):
        _check_delta(self.delta)
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("need iterations > burn_in >= 0")
        if self.provider not in PROVIDER_MODES:
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


def posterior_scale(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return np.eye(X.shape[1]) + X.T @ X


def run(data, config: RunConfig) -> Trace:
    """Run the chain on an ``n x p`` data matrix and return the post-burn-in trace.

    The chain starts at the empty graph with ``K`` drawn from the prior.
    All randomness comes from ``config.seed``.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ConfigError("data must be an n x p matrix with n >= 1")
    n, p = X.shape
    if p < 2:
        raise ConfigError("need at least two variables")
    d_star = posterior_scale(X)
    root = as_seed_sequence(config.seed)
    chain_ss, provider_ss = root.spawn(2)
    rng = np.random.default_rng(chain_ss)
    provider = RatioProvider(config.provider, config.mc_samples,
                             int(provider_ss.generate_state(1, np.uint64)[0]), config.threads)
    g0 = new_graph(p)
    state = ChainState(g0, sample_gwishart(g0, config.delta, None, DEFAULT_CONFIG, rng))
    records = []
    for t in range(config.iterations):
        g, K = state.graph, state.K
        state, w = step(state, d_star, config.delta, provider, rng, n_obs=n)
        if t >= config.burn_in:
            records.append(TraceRecord(g.fingerprint, g.edges, w, K.copy() if config.snapshot_K else None))
    echo = asdict(config)
    echo.update(seed=root.entropy, n=n, p=p)
    return Trace(p, records, config.burn_in, echo)
