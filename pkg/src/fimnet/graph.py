"""Directed diffusion graphs and Kronecker network generation.

A :class:`Graph` stores the nonzero entries of the adjacency parameter
matrix: edge ``u -> v`` carries the transmission rate ``A[u, v]``.  Edges are
kept sorted by ``(dst, src)`` so incoming neighbours of a node form a
contiguous slice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Graph",
    "GraphFormatError",
    "KroneckerSpec",
    "kronecker_generate",
    "graph_load",
    "graph_save",
    "incoming_neighbors",
]

# 4**power cells must stay addressable with int64
_MAX_KRONECKER_POWER = 31
_ROW_CHUNK_CELLS = 1 << 22


class GraphFormatError(ValueError):
    """Raised when a graph file cannot be parsed."""


class Graph:
    """Immutable directed graph with one positive rate per edge.

    Parameters
    ----------
    n : int
        Number of nodes; ids are ``0 .. n-1``.
    src, dst : array-like of int
        Edge endpoints.
    rate : array-like of float
        Transmission rate of each edge, strictly positive and finite.
    """

    __slots__ = ("n", "src", "dst", "rate", "indptr", "__dict__")

    def __init__(self, n, src=(), dst=(), rate=()):
        n = int(n)
        if n < 1:
            raise ValueError(f"node count must be >= 1, got {n}")
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        rate = np.asarray(rate, dtype=np.float64).ravel()
        if not (src.shape == dst.shape == rate.shape):
            raise ValueError("src, dst and rate must have equal length")
        if src.size:
            if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
                raise ValueError(f"edge endpoint out of range [0, {n})")
            if np.any(src == dst):
                i = int(np.flatnonzero(src == dst)[0])
                raise ValueError(f"self-loop on node {src[i]}")
            if not np.all(np.isfinite(rate)):
                raise ValueError("edge rates must be finite")
            if np.any(rate <= 0):
                i = int(np.flatnonzero(rate <= 0)[0])
                raise ValueError(
                    f"edge {src[i]}->{dst[i]} has rate {rate[i]!r}; rates must be > 0"
                )
        order = np.lexsort((src, dst))
        src, dst, rate = src[order], dst[order], rate[order]
        if src.size > 1:
            dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
            if dup.any():
                i = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate edge {src[i]}->{dst[i]}")
        for arr in (src, dst, rate):
            arr.setflags(write=False)
        self.n = n
        self.src = src
        self.dst = dst
        self.rate = rate
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(dst, minlength=n), out=indptr[1:])
        indptr.setflags(write=False)
        self.indptr = indptr

    @property
    def m(self):
        """Number of edges."""
        return int(self.src.size)

    def __len__(self):
        return self.m

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.rate, other.rate)
        )

    def __hash__(self):
        return hash((self.n, self.src.tobytes(), self.dst.tobytes(), self.rate.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"

    def in_degree(self):
        return np.diff(self.indptr)

    def out_degree(self):
        return np.bincount(self.src, minlength=self.n)

    def edge_set(self):
        return set(zip(self.src.tolist(), self.dst.tolist()))

    @cached_property
    def out_adjacency(self):
        """Per-source lists of ``(dst, rate, edge_id)`` built on first use."""
        adj = [[] for _ in range(self.n)]
        for e, (u, v, r) in enumerate(
            zip(self.src.tolist(), self.dst.tolist(), self.rate.tolist())
        ):
            adj[u].append((v, r, e))
        return adj

    def to_sparse(self):
        """Return the adjacency parameter matrix as CSR."""
        return sp.csr_matrix((self.rate, (self.src, self.dst)), shape=(self.n, self.n))

    def to_dense(self):
        A = np.zeros((self.n, self.n))
        A[self.src, self.dst] = self.rate
        return A

    @classmethod
    def from_matrix(cls, A, threshold=0.0):
        """Build a graph from the off-diagonal entries of ``A`` that are
        ``>= threshold`` and strictly positive."""
        if sp.issparse(A):
            coo = sp.coo_matrix(A)
            rows, cols, vals = coo.row, coo.col, coo.data
            n = A.shape[0]
        else:
            A = np.asarray(A, dtype=np.float64)
            n = A.shape[0]
            rows, cols = np.nonzero(A)
            vals = A[rows, cols]
        keep = (rows != cols) & (vals > 0) & (vals >= threshold)
        return cls(n, rows[keep], cols[keep], vals[keep])

    @classmethod
    def from_edges(cls, n, edges):
        """Build from an iterable of ``(src, dst, rate)`` triples."""
        edges = list(edges)
        if not edges:
            return cls(n)
        s, d, r = zip(*edges)
        return cls(n, s, d, r)


def incoming_neighbors(graph, v):
    """Return ``[(u, rate), ...]`` for every edge ``u -> v``."""
    if not 0 <= v < graph.n:
        raise IndexError(f"node {v} out of range [0, {graph.n})")
    lo, hi = graph.indptr[v], graph.indptr[v + 1]
    return list(zip(graph.src[lo:hi].tolist(), graph.rate[lo:hi].tolist()))


@dataclass(frozen=True)
class KroneckerSpec:
    """Parameters of a stochastic Kronecker graph.

    ``seed`` is the 2x2 initiator matrix, ``power`` the number of Kronecker
    products (``2**power`` nodes).  Cell probabilities are rescaled by one
    global constant so that the expected number of off-diagonal edges equals
    ``target_edges``; rates are drawn from ``Uniform(rate_low, rate_high)``.
    """

    seed: tuple = ((0.9, 0.1), (0.1, 0.9))
    power: int = 10
    target_edges: int = 4096
    rate_low: float = 0.0
    rate_high: float = 0.1

    def __post_init__(self):
        seed = np.asarray(self.seed, dtype=np.float64)
        if seed.shape != (2, 2):
            raise ValueError("Kronecker seed must be a 2x2 matrix")
        if np.any(seed < 0) or np.any(seed > 1) or not np.all(np.isfinite(seed)):
            raise ValueError("Kronecker seed entries must lie in [0, 1]")
        object.__setattr__(self, "seed", tuple(map(tuple, seed.tolist())))
        if int(self.power) != self.power or self.power < 1:
            raise ValueError(f"power must be an integer >= 1, got {self.power}")
        if self.power > _MAX_KRONECKER_POWER:
            raise OverflowError(
                f"power {self.power} exceeds the supported maximum {_MAX_KRONECKER_POWER}"
            )
        n = 2 ** int(self.power)
        if self.target_edges < 0:
            raise ValueError("target_edges must be nonnegative")
        if self.target_edges > n * (n - 1):
            raise ValueError(
                f"target_edges={self.target_edges} exceeds the {n * (n - 1)} "
                "off-diagonal cells"
            )
        if not (0 <= self.rate_low < self.rate_high) or not math.isfinite(self.rate_high):
            raise ValueError("rates must satisfy 0 <= rate_low < rate_high < inf")

    @property
    def n(self):
        return 2 ** int(self.power)


def _kronecker_probabilities(seed, power):
    P = np.array([[1.0]])
    S = np.asarray(seed, dtype=np.float64)
    for _ in range(power):
        P = np.kron(P, S)
    return P


def _saturating_scale(values, counts, target):
    """Find ``c`` with ``sum(counts * min(1, c * values)) == target``."""
    order = np.argsort(values)[::-1]
    values, counts = values[order], counts[order]
    positive = values > 0
    values, counts = values[positive], counts[positive]
    if target == 0:
        return 0.0
    if target > counts.sum():
        raise ValueError(
            f"target_edges={target} exceeds the {int(counts.sum())} cells with "
            "nonzero Kronecker probability"
        )
    # first j value classes saturated at probability 1
    tail_mass = np.concatenate([np.cumsum((values * counts)[::-1])[::-1], [0.0]])
    saturated = np.concatenate([[0], np.cumsum(counts)])
    for j in range(len(values) + 1):
        if tail_mass[j] == 0:
            return 1.0 / values[j - 1]
        c = (target - saturated[j]) / tail_mass[j]
        if c * values[j] <= 1.0 and (j == 0 or c * values[j - 1] >= 1.0):
            return c
    return 1.0 / values[-1]


def kronecker_generate(spec, rng_seed=0):
    """Sample a stochastic Kronecker graph.

    Each off-diagonal cell ``(u, v)`` becomes an edge independently with
    probability ``min(1, c * P[u, v])`` where ``P`` is the ``power``-th
    Kronecker power of the seed.  Deterministic given ``rng_seed``.
    """
    rng = np.random.default_rng(rng_seed)
    n = spec.n
    P = _kronecker_probabilities(spec.seed, int(spec.power))
    np.fill_diagonal(P, 0.0)
    values, counts = np.unique(P, return_counts=True)
    c = _saturating_scale(values, counts, spec.target_edges)

    srcs, dsts = [], []
    rows = max(1, _ROW_CHUNK_CELLS // n)
    for start in range(0, n, rows):
        block = np.minimum(1.0, c * P[start : start + rows])
        hit = rng.random(block.shape) < block
        r, col = np.nonzero(hit)
        srcs.append(r + start)
        dsts.append(col)
    src = np.concatenate(srcs)
    dst = np.concatenate(dsts)
    rate = rng.uniform(spec.rate_low, spec.rate_high, size=src.size)
    # keep rates strictly inside the open interval
    bad = rate <= spec.rate_low
    while bad.any():
        rate[bad] = rng.uniform(spec.rate_low, spec.rate_high, size=int(bad.sum()))
        bad = rate <= spec.rate_low
    return Graph(n, src, dst, rate)


def graph_save(graph, path, header=None):
    """Write ``graph`` in the ``n <count>`` / ``src dst rate`` text format.

    ``header`` lines, if given, are written as ``#`` comments.
    """
    lines = []
    for h in header or ():
        lines.append(f"# {h}")
    lines.append(f"n {graph.n}")
    for u, v, r in zip(graph.src.tolist(), graph.dst.tolist(), graph.rate.tolist()):
        lines.append(f"{u} {v} {r!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def graph_load(path):
    """Parse a graph file; errors carry the offending line number."""
    n = None
    src, dst, rate = [], [], []
    seen = set()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if n is None:
                if len(parts) != 2 or parts[0] != "n":
                    raise GraphFormatError(f"{path}:{lineno}: expected header 'n <count>'")
                try:
                    n = int(parts[1])
                except ValueError:
                    raise GraphFormatError(f"{path}:{lineno}: bad node count {parts[1]!r}")
                if n < 1:
                    raise GraphFormatError(f"{path}:{lineno}: node count must be >= 1")
                continue
            if len(parts) != 3:
                raise GraphFormatError(f"{path}:{lineno}: expected '<src> <dst> <rate>'")
            try:
                u, v, r = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: malformed edge {line!r}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(f"{path}:{lineno}: node id out of range [0, {n})")
            if u == v:
                raise GraphFormatError(f"{path}:{lineno}: self-loop on node {u}")
            if not math.isfinite(r) or r < 0:
                raise GraphFormatError(f"{path}:{lineno}: invalid rate {parts[2]!r}")
            if r == 0:
                raise GraphFormatError(f"{path}:{lineno}: zero rate; omit the edge instead")
            if (u, v) in seen:
                raise GraphFormatError(f"{path}:{lineno}: duplicate edge {u}->{v}")
            seen.add((u, v))
            src.append(u)
            dst.append(v)
            rate.append(r)
    if n is None:
        raise GraphFormatError(f"{path}: missing header 'n <count>'")
    return Graph(n, src, dst, rate)
