"""Simulation studies: synthetic data, confusion metrics, ROC and timing."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bdmcmc import PosteriorSummary, RunConfig, edge_posteriors, run, select_graph
from .errors import ConfigError, DimensionMismatch
from .graph import GRAPH_KINDS, Graph, generate
from .gwishart import as_seed_sequence
from .sampler import sample_gwishart

EXPERIMENT_KINDS = GRAPH_KINDS + ("cycle",)
REPORT_FIELDS = ("kind", "p", "n", "provider", "sensitivity", "specificity", "mcc", "auc",
                 "seconds_per_1k_iters")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    truth: Graph | None = None
    gen_K: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise DimensionMismatch("X must be n x p with n >= 1")
        if self.truth is not None and self.truth.p != self.X.shape[1]:
            raise DimensionMismatch("X columns do not match the truth graph")

    def to_csv(self, path) -> None:
        np.savetxt(path, self.X, delimiter=",", fmt="%.17g")

    @staticmethod
    def read_csv(path) -> np.ndarray:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def simulate_dataset(g: Graph, delta: float, n: int, seed=None) -> Dataset:
    """Draw ``K ~ W_G(delta, I)`` and ``n`` rows from ``N_p(0, K^{-1})``."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    ss = as_seed_sequence(seed)
    rng = np.random.default_rng(ss)
    K = sample_gwishart(g, delta, seed=rng)
    # rows x = L^{-T} z with K = L L^T have covariance K^{-1}
    L = np.linalg.cholesky(K)
    Z = rng.standard_normal((n, g.p))
    X = np.linalg.solve(L.T, Z.T).T
    return Dataset(X, g, K, ss.entropy)


@dataclass(frozen=True)
class MetricsReport:
    tp: int
    tn: int
    fp: int
    fn: int
    sensitivity: float
    specificity: float
    mcc: float
    roc: tuple = ()
    auc: float = float("nan")


def _pairs(p: int):
    return np.triu_indices(p, 1)


def metrics(true_g: Graph, est_g: Graph) -> MetricsReport:
    """Confusion counts over all vertex pairs, sensitivity, specificity and MCC.

    MCC is 0 when any factor of its denominator vanishes.
    """
    if true_g.p != est_g.p:
        raise DimensionMismatch("graphs differ in size")
    iu = _pairs(true_g.p)
    t = true_g.adjacency[iu]
    e = est_g.adjacency[iu]
    tp = int(np.sum(t & e))
    tn = int(np.sum(~t & ~e))
    fp = int(np.sum(~t & e))
    fn = int(np.sum(t & ~e))
    sens = tp / (tp + fn) if tp + fn else 0.0
    spec = tn / (tn + fp) if tn + fp else 0.0
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(denom) if denom else 0.0
    return MetricsReport(tp, tn, fp, fn, sens, spec, mcc)


def roc(summary: PosteriorSummary, true_g: Graph):
    """ROC points from thresholding edge probabilities, and the trapezoidal AUC.

    Pairs with equal probability enter together, so ties give diagonal segments.
    Returns ``(points, auc)`` with points running from ``(0, 0)`` to ``(1, 1)``.
    """
    if summary.p != true_g.p:
        raise DimensionMismatch("summary and graph differ in size")
    iu = _pairs(true_g.p)
    score = summary.edge_prob[iu]
    label = true_g.adjacency[iu]
    n_pos = int(label.sum())
    n_neg = label.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DimensionMismatch("ROC needs both edges and non-edges in the truth graph")
    order = np.argsort(-score, kind="stable")
    s, y = score[order], label[order]
    # one point per run of tied scores
    cuts = np.append(np.flatnonzero(np.diff(s)), s.size - 1)
    tps = np.cumsum(y)[cuts]
    fps = cuts + 1 - tps
    tpr = np.concatenate([[0.0], tps / n_pos])
    fpr = np.concatenate([[0.0], fps / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    return list(zip(fpr.tolist(), tpr.tolist())), auc


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "cycle"
    p: int = 10
    n: int = 500
    delta: float = 3.0
    iterations: int = 20_000
    burn_in: int = 8_000
    provider: str = "approximation"
    mc_samples: int = 1000
    replications: int = 1
    seed: int | None = None
    threshold: float = 0.5
    threads: int = 1

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown graph kind {self.kind!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")


@dataclass
class ReplicationResult:
    report: MetricsReport
    seconds_per_1k_iters: float
    summary: PosteriorSummary
    truth: Graph
    extra: dict = field(default_factory=dict)


def _make_graph(kind: str, p: int, seed) -> Graph:
    return Graph.cycle(p) if kind == "cycle" else generate(kind, p, seed)


def run_replication(cfg: ExperimentConfig, ss: np.random.SeedSequence) -> ReplicationResult:
    g_ss, d_ss, c_ss = ss.spawn(3)
    truth = _make_graph(cfg.kind, cfg.p, g_ss)
    data = simulate_dataset(truth, cfg.delta, cfg.n, d_ss)
    rc = RunConfig(cfg.delta, cfg.iterations, cfg.burn_in, cfg.provider, cfg.mc_samples,
                   int(c_ss.generate_state(1, np.uint64)[0]))
    t0 = time.perf_counter()
    trace = run(data.X, rc)
    secs = (time.perf_counter() - t0) * 1000.0 / cfg.iterations
    summary = edge_posteriors(trace)
    rep = metrics(truth, select_graph(summary, cfg.threshold))
    try:
        points, auc = roc(summary, truth)
    except DimensionMismatch:  # truth with no edges or no non-edges
        points, auc = [(0.0, 0.0), (1.0, 1.0)], float("nan")
    rep = MetricsReport(rep.tp, rep.tn, rep.fp, rep.fn, rep.sensitivity, rep.specificity,
                        rep.mcc, tuple(points), auc)
    return ReplicationResult(rep, secs, summary, truth)


def run_experiment(cfg: ExperimentConfig) -> list[ReplicationResult]:
    """Generate, simulate, fit and score ``cfg.replications`` independent problems.

    Replication ``r`` uses the ``r``-th child of the master seed, so the list
    is identical for a fixed seed whatever ``cfg.threads`` is (timings aside).
    """
    seeds = as_seed_sequence(cfg.seed).spawn(cfg.replications)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            return list(pool.map(lambda s: run_replication(cfg, s), seeds))
    return [run_replication(cfg, s) for s in seeds]


def write_report_csv(path, cfg: ExperimentConfig, results: list[ReplicationResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for r in results:
            m = r.report
            w.writerow([cfg.kind, cfg.p, cfg.n, cfg.provider, m.sensitivity, m.specificity,
                        m.mcc, m.auc, r.seconds_per_1k_iters])


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
