import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import gammaln

from gwishart_bd.bdmcmc import (
    ChainState,
    PosteriorSummary,
    RatioProvider,
    RunConfig,
    Trace,
    TraceRecord,
    birth_rate,
    death_rate,
    edge_posteriors,
    h_factor,
    log_rates,
    posterior_scale,
    run,
    select_graph,
    step,
)
from gwishart_bd.errors import ConfigError, EdgeAbsent, EdgePresent, EmptyTrace
from gwishart_bd.graph import Graph, new_graph
from gwishart_bd.sampler import sample_gwishart
from gwishart_bd.simharness import simulate_dataset


def random_spd(rng, p):
    A = rng.standard_normal((p, p))
    return A @ A.T + p * np.eye(p)


def direct_log_h(K, D, i, j):
    """log H from explicit partial inverses."""
    p = K.shape[0]
    mj = [v for v in range(p) if v != j]
    row = K[j, mj].copy()
    row[mj.index(i)] = 0.0
    k0jj = row @ np.linalg.solve(K[np.ix_(mj, mj)], row)
    e = [i, j]
    ne = [v for v in range(p) if v not in e]
    if ne:
        K1 = K[np.ix_(e, ne)] @ np.linalg.solve(K[np.ix_(ne, ne)], K[np.ix_(ne, e)])
    else:
        K1 = np.zeros((2, 2))
    K0 = np.diag([K[i, i], k0jj])
    a11 = K0[0, 0] - K1[0, 0]
    De = D[np.ix_(e, e)]
    return (0.5 * math.log(D[j, j] / (2 * math.pi * a11))
            - 0.5 * (np.sum(De * (K0 - K1)) - (D[i, i] - D[i, j] ** 2 / D[j, j]) * a11))


# H factor -------------------------------------------------------------------

def test_h_factor_quadrature_p2():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(2)
    D = np.eye(2) + np.outer(x, x)
    K = np.array([[1.0, 0.5], [0.5, 1.0]])
    # reciprocal of the integral of the conditional kernel over the off-diagonal entry
    f = lambda t: math.exp(-(t * D[0, 1] + t * t * D[1, 1] / (2 * K[0, 0])))
    oracle = 1 / integrate.quad(f, -np.inf, np.inf)[0]
    assert h_factor(K, D, (0, 1)) == pytest.approx(oracle, rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 8), st.integers(0, 2**32 - 1), st.data())
def test_h_factor_matches_partial_inverses(p, seed, data):
    rng = np.random.default_rng(seed)
    K = random_spd(rng, p)
    X = rng.standard_normal((p + 3, p))
    D = np.eye(p) + X.T @ X
    i = data.draw(st.integers(0, p - 1))
    j = data.draw(st.integers(0, p - 1).filter(lambda v: v != i))
    assert math.log(h_factor(K, D, (i, j))) == pytest.approx(direct_log_h(K, D, min(i, j), max(i, j)), rel=1e-8, abs=1e-8)


def test_h_factor_pure_under_rescaling():
    rng = np.random.default_rng(1)
    K = random_spd(rng, 4)
    vals = [h_factor(K, c * np.eye(4), (0, 2)) for c in (1.0, 1.001, 1.0, 2.0)]
    assert vals[0] == vals[2]
    assert abs(vals[1] - vals[0]) < 1e-2 * vals[0]
    assert vals[3] != vals[0]


def test_h_factor_tiny_off_diagonal():
    K = np.array([[2.0, 1e-12, 0.3], [1e-12, 1.5, 0.2], [0.3, 0.2, 1.0]])
    v = h_factor(K, np.eye(3) * 3, (0, 1))
    assert math.isfinite(v) and v > 0
    K0 = K.copy()
    K0[0, 1] = K0[1, 0] = 0.0
    assert v == pytest.approx(h_factor(K0, np.eye(3) * 3, (0, 1)), rel=1e-9)


# rates -----------------------------------------------------------------------

def test_approximation_ratio_factor_values():
    # with H = 1 the unclipped death rate is the ratio factor; recover it from the birth side
    prov = RatioProvider("approximation")
    g = new_graph(3, [(0, 1)])
    lr = prov.log_ratio_factors(g, 3)
    assert math.exp(lr[0, 1]) == pytest.approx(4.0, rel=1e-12)  # d = 0
    g = new_graph(3, [(0, 2), (1, 2)])
    lr = prov.log_ratio_factors(g, 3)
    assert math.exp(lr[0, 1]) == pytest.approx(1.5 * math.pi, rel=1e-12)  # d = 1


def test_single_rates_agree_with_vector():
    rng = np.random.default_rng(2)
    g = new_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)])
    K = sample_gwishart(g, 3, seed=rng)
    D = posterior_scale(rng.standard_normal((20, 5)))
    state = ChainState(g, K)
    prov = RatioProvider("approximation")
    lr = log_rates(state, D, 3, prov)
    ii, jj = np.triu_indices(5, 1)
    for k, (i, j) in enumerate(zip(ii, jj)):
        f = death_rate if g.has_edge(i, j) else birth_rate
        assert f(state, (i, j), D, 3, prov) == pytest.approx(math.exp(lr[k]), rel=1e-10)
    with pytest.raises(EdgeAbsent):
        death_rate(state, (0, 2), D, 3, prov)
    with pytest.raises(EdgePresent):
        birth_rate(state, (0, 1), D, 3, prov)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_rates_in_unit_interval(p, seed, dens):
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(p, 1)
    A = np.zeros((p, p), bool)
    A[iu] = rng.random(len(iu[0])) < dens
    g = Graph.from_adjacency(A)
    K = sample_gwishart(g, 3, seed=rng)
    D = posterior_scale(rng.standard_normal((rng.integers(1, 30), p)))
    r = np.exp(log_rates(ChainState(g, K), D, 3, RatioProvider("approximation")))
    assert np.all((r > 0) & (r <= 1))


def test_step_single_move_p2():
    D = posterior_scale(np.array([[0.3, -1.0], [1.2, 0.4]]))
    g = new_graph(2)
    state = ChainState(g, np.diag([1.5, 0.7]))
    prov = RatioProvider("approximation")
    rate = birth_rate(state, (0, 1), D, 3, prov)
    new, w = step(state, D, 3, prov, seed=0, n_obs=2)
    assert new.graph == Graph.complete(2)
    assert w == pytest.approx(1 / rate, rel=1e-12)
    assert new.iteration == 1


def test_chain_state_checks_pattern():
    with pytest.raises(Exception):
        ChainState(new_graph(2), np.array([[1.0, 0.1], [0.1, 1.0]]))


def test_provider_config():
    with pytest.raises(ConfigError):
        RatioProvider("double_mh")
    with pytest.raises(ConfigError):
        RatioProvider("mc_ratio", mc_samples=50)


def test_exact_provider_on_decomposable_pair():
    prov = RatioProvider("exact_decomposable")
    g = Graph.complete(3)
    lr = prov.log_ratio_factors(g, 3)
    assert math.exp(lr[0, 1]) == pytest.approx(1.5 * math.pi, rel=1e-10)


# summaries ---------------------------------------------------------------------

def rec(edges, w, p=3):
    g = new_graph(p, edges)
    return TraceRecord(g.fingerprint, g.edges, w)


def test_edge_posterior_examples():
    P = edge_posteriors(Trace(3, [rec([(0, 1)], 5.0)], 0, {})).edge_prob
    assert P[0, 1] == 1.0 and P[1, 0] == 1.0 and P[0, 2] == 0.0
    P = edge_posteriors(Trace(3, [rec([(0, 1)], 1.0), rec([], 1.0)], 0, {})).edge_prob
    assert P[0, 1] == 0.5
    P = edge_posteriors(Trace(3, [rec([], 1.0), rec([(0, 1)], 3.0)], 0, {})).edge_prob
    assert P[0, 1] == 0.75
    with pytest.raises(EmptyTrace):
        edge_posteriors(Trace(3, [], 0, {}))


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sets(st.sampled_from([(0, 1), (0, 2), (1, 2)])), st.floats(1e-3, 1e3)),
                min_size=1, max_size=10), st.floats(1e-3, 1e3))
def test_edge_posteriors_scale_invariant(items, c):
    a = Trace(3, [rec(sorted(e), w) for e, w in items], 0, {})
    b = Trace(3, [rec(sorted(e), w * c) for e, w in items], 0, {})
    Pa, Pb = edge_posteriors(a).edge_prob, edge_posteriors(b).edge_prob
    assert np.allclose(Pa, Pb, atol=1e-12)
    assert np.array_equal(Pa, Pa.T) and np.all(np.diag(Pa) == 0)
    assert np.all((Pa >= 0) & (Pa <= 1))


def test_select_graph_examples():
    assert select_graph(PosteriorSummary(np.zeros((4, 4)))).n_edges == 0
    P = np.zeros((3, 3))
    P[0, 1] = P[1, 0] = 0.6
    P[1, 2] = P[2, 1] = 0.4
    assert select_graph(PosteriorSummary(P)).edges == ((0, 1),)
    P[0, 2] = P[2, 0] = 0.5  # strict inequality
    assert select_graph(PosteriorSummary(P)).edges == ((0, 1),)
    rng = np.random.default_rng(3)
    Q = np.triu(rng.random((8, 8)), 1)
    s = PosteriorSummary(Q + Q.T)
    hi, lo = select_graph(s, 0.8), select_graph(s, 0.5)
    assert set(hi.edges) <= set(lo.edges)
    with pytest.raises(ValueError):
        select_graph(s, 1.0)


def test_summary_dict_roundtrip():
    P = np.array([[0, 0.3], [0.3, 0]])
    s = PosteriorSummary.from_dict(PosteriorSummary(P).to_dict())
    assert np.array_equal(s.edge_prob, P)


# driver -------------------------------------------------------------------------

def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(iterations=10, burn_in=10)
    with pytest.raises(ConfigError):
        RunConfig(provider="nope")
    X = np.random.default_rng(0).standard_normal((5, 3))
    with pytest.raises(ConfigError):
        run(X[:, :1], RunConfig(iterations=2, burn_in=0))


def test_run_single_record_and_determinism(tmp_path):
    X = np.random.default_rng(0).standard_normal((30, 4))
    t = run(X, RunConfig(iterations=51, burn_in=50, seed=11))
    assert len(t) == 1
    cfg = RunConfig(iterations=300, burn_in=100, seed=7, snapshot_K=True)
    a, b = run(X, cfg), run(X, cfg)
    assert [r.fingerprint for r in a.records] == [r.fingerprint for r in b.records]
    assert np.array_equal(a.weights, b.weights)
    assert all(np.array_equal(r.K, s.K) for r, s in zip(a.records, b.records))
    assert len(a) == 200 and np.all(a.weights > 0) and np.all(np.isfinite(a.weights))
    path = tmp_path / "trace.jsonl"
    a.to_jsonl(path)
    c = Trace.from_jsonl(path, 4)
    assert [r.edges for r in c.records] == [r.edges for r in a.records]
    assert np.array_equal(c.weights, a.weights)
    assert np.array_equal(edge_posteriors(c).edge_prob, edge_posteriors(a).edge_prob)


def test_provider_equivalence_p4():
    # data from a path: every removal along the chain's likely states has no long chordless paths
    g = Graph.path(4)
    ds = simulate_dataset(g, 3, 300, seed=4)
    kw = dict(iterations=4000, burn_in=1000, seed=5)
    pa = edge_posteriors(run(ds.X, RunConfig(provider="approximation", **kw)))
    pe = edge_posteriors(run(ds.X, RunConfig(provider="exact_decomposable", mc_samples=2000, **kw)))
    assert np.max(np.abs(pa.edge_prob - pe.edge_prob)) <= 0.1
    assert select_graph(pa) == select_graph(pe)


# stationarity at p = 2 ---------------------------------------------------------

def log_norm_full2(b, D):
    # complete graph, p = 2
    return ((b + 1) * math.log(2) - (b + 1) / 2 * np.linalg.slogdet(D)[1]
            + 0.5 * math.log(math.pi) + gammaln((b + 1) / 2) + gammaln(b / 2))


def log_norm_1(b, d):
    return gammaln(b / 2) + b / 2 * math.log(2 / d)


def exact_edge_prob(X, delta):
    n = X.shape[0]
    D = posterior_scale(X)
    full = log_norm_full2(delta + n, D) - log_norm_full2(delta, np.eye(2))
    empty = (log_norm_1(delta + n, D[0, 0]) + log_norm_1(delta + n, D[1, 1]) - 2 * log_norm_1(delta, 1.0))
    return 1 / (1 + math.exp(empty - full))


@pytest.mark.slow
@pytest.mark.parametrize("delta", [3, 4])
def test_stationarity_p2(delta):
    rng = np.random.default_rng(3)
    X = rng.multivariate_normal([0, 0], [[1, 0.08], [0.08, 1]], 1000)
    target = exact_edge_prob(X, delta)
    assert 0.05 < target < 0.95
    t = run(X, RunConfig(delta=delta, iterations=50_000, burn_in=1000, seed=1))
    assert abs(edge_posteriors(t).edge_prob[0, 1] - target) <= 0.02
