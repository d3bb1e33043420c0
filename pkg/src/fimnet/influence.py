"""Influence estimation by sampled shortest diffusion times.

One sample draws an exponential delay for every edge it relaxes and runs a
Dijkstra traversal started from all seeds at time 0 (equivalently, from one
seed with zero-delay edges to the others).  Nodes reached by the horizon
count towards the spread.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graph import Graph

__all__ = [
    "InfluenceQuery",
    "InfluenceEstimate",
    "SpreadGroundTruth",
    "hoeffding_theta",
    "sample_delays",
    "sdts_sample",
    "estimate_influence",
    "ground_truth_spread",
    "ie_mae",
    "time_window_bound",
]

# samples per independently seeded RNG stream
CHUNK = 1024


@dataclass(frozen=True)
class InfluenceQuery:
    seeds: tuple
    horizon: float
    eta: float = 0.1
    delta: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        seeds = tuple(sorted({int(s) for s in self.seeds}))
        if not seeds:
            raise ValueError("seed set must be nonempty")
        object.__setattr__(self, "seeds", seeds)
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if not 0 < self.eta < 1 or not 0 < self.delta < 1:
            raise ValueError("eta and delta must lie in (0, 1)")

    @property
    def theta(self):
        return hoeffding_theta(self.eta, self.delta)


@dataclass
class InfluenceEstimate:
    theta: int
    mean_spread: float
    samples: np.ndarray


@dataclass
class SpreadGroundTruth:
    seeds: tuple
    mean_spread: float
    resamples: int


def hoeffding_theta(eta, delta):
    """Sample count ``ceil(ln(2/delta) / (2 eta^2))`` for additive error ``eta*n``."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return math.ceil(math.log(2.0 / delta) / (2.0 * eta * eta))


def _check_seeds(graph, seeds):
    seeds = sorted({int(s) for s in seeds})
    if not seeds:
        raise ValueError("seed set must be nonempty")
    for s in seeds:
        if not 0 <= s < graph.n:
            raise ValueError(f"seed {s} out of range [0, {graph.n})")
    return seeds


def sample_delays(graph, rng):
    """Draw one delay per edge (used to replay an instance at several horizons)."""
    return rng.standard_exponential(graph.m) / graph.rate


def _traverse(adj, seeds, horizon, next_unit, delays):
    dist = {}
    heap = [(0.0, s) for s in seeds]
    while heap:
        d, v = heapq.heappop(heap)
        if d > horizon:
            break
        if v in dist:
            continue
        dist[v] = d
        for w, rate, e in adj[v]:
            if w in dist:
                continue
            t = d + (delays[e] if delays is not None else next_unit() / rate)
            if t <= horizon:
                heapq.heappush(heap, (t, w))
    return dist


class _UnitExp:
    """Buffered standard-exponential draws from one generator."""

    __slots__ = ("rng", "buf", "pos")

    def __init__(self, rng):
        self.rng = rng
        self.buf = rng.standard_exponential(256).tolist()
        self.pos = 0

    def __call__(self):
        if self.pos == len(self.buf):
            self.buf = self.rng.standard_exponential(len(self.buf)).tolist()
            self.pos = 0
        x = self.buf[self.pos]
        self.pos += 1
        return x


def sdts_sample(graph, seeds, horizon, rng=None, delays=None, return_nodes=False):
    """Spread of ``seeds`` within ``horizon`` in one sampled instance.

    Delays are drawn lazily from ``rng`` as edges are first relaxed, unless
    a full ``delays`` vector (indexed by edge id) is supplied.
    """
    seeds = _check_seeds(graph, seeds)
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if delays is None:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        draw = _UnitExp(rng)
    else:
        delays = np.asarray(delays, dtype=np.float64)
        if delays.shape != (graph.m,):
            raise ValueError(f"need {graph.m} delays, got shape {delays.shape}")
        delays = delays.tolist()
        draw = None
    dist = _traverse(graph.out_adjacency, seeds, float(horizon), draw, delays)
    return set(dist) if return_nodes else len(dist)


def _chunk_samples(args):
    graph, seeds, horizon, rng_seed, chunk, count = args
    rng = np.random.default_rng([rng_seed, chunk])
    draw = _UnitExp(rng)
    adj = graph.out_adjacency
    return [len(_traverse(adj, seeds, horizon, draw, None)) for _ in range(count)]


def estimate_influence(graph, query, workers=1):
    """Mean spread over ``theta`` independent instances.

    Samples are generated in fixed chunks of ``CHUNK`` with one RNG stream
    per chunk, so results are identical for any ``workers``.
    """
    if not isinstance(graph, Graph):
        raise TypeError("graph must be a Graph")
    seeds = _check_seeds(graph, query.seeds)
    theta = query.theta
    jobs = [
        (graph, seeds, float(query.horizon), int(query.rng_seed), i, min(CHUNK, theta - start))
        for i, start in enumerate(range(0, theta, CHUNK))
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_chunk_samples, jobs))
    else:
        parts = [_chunk_samples(j) for j in jobs]
    samples = np.fromiter((s for p in parts for s in p), dtype=np.int64, count=theta)
    return InfluenceEstimate(theta, float(samples.mean()), samples)


def ground_truth_spread(cascades, seeds, resamples=1000, rng_seed=0):
    """Empirical spread of ``seeds`` assembled from single-source cascades.

    Each resample draws, for every seed, one cascade whose seed set is
    exactly that node and counts the union of activated nodes.
    """
    seeds = sorted({int(s) for s in seeds})
    if not seeds:
        raise ValueError("seed set must be nonempty")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    by_source = {s: [] for s in seeds}
    for c in cascades:
        src = c.seeds
        if len(src) == 1:
            (s,) = src
            if s in by_source:
                by_source[s].append(c.nodes)
    for s, pool in by_source.items():
        if not pool:
            raise ValueError(f"no single-source cascade starts at seed {s}")
    rng = np.random.default_rng(rng_seed)
    picks = {s: rng.integers(0, len(by_source[s]), size=resamples) for s in seeds}
    total = 0
    for r in range(resamples):
        reached = set()
        for s in seeds:
            reached.update(by_source[s][picks[s][r]].tolist())
        total += len(reached)
    return SpreadGroundTruth(tuple(seeds), total / resamples, resamples)


def ie_mae(estimates, truths):
    """Mean absolute error between estimated and ground-truth spreads."""
    e = np.asarray(estimates, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if e.shape != t.shape or e.ndim != 1 or e.size == 0:
        raise ValueError("estimates and truths must be equal-length, nonempty sequences")
    return float(np.abs(e - t).mean())


def time_window_bound(eps_err, c, t_star):
    """Interval for the expected horizon that covers the same nodes under
    rates perturbed by at most ``eps_err`` (with the smallest true rate equal
    to ``c * eps_err``)."""
    if eps_err < 0:
        raise ValueError("eps_err must be nonnegative")
    if not c > 1:
        raise ValueError(f"c must exceed 1, got {c}")
    if not t_star > 0:
        raise ValueError("t_star must be positive")
    lower = t_star if eps_err == 0 else -math.expm1(-eps_err * t_star) / eps_err
    return lower, c * t_star / (c - 1)
