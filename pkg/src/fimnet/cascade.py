"""Continuous-time independent cascade simulation and cascade I/O."""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Cascade",
    "CascadeFormatError",
    "StateVector",
    "simulate_cascade",
    "simulate_cascades",
    "state_at",
    "cascades_load",
    "cascades_save",
    "split_cascades",
]


class CascadeFormatError(ValueError):
    """Raised when a cascade file cannot be parsed."""


class Cascade:
    """Activation times of one diffusion observed up to ``horizon``.

    Only activated nodes are stored; every other node has activation time
    ``inf``.  The seed set is the set of nodes activated at time 0.

    Parameters
    ----------
    n : int
        Number of nodes in the network.
    times : mapping of int to float
        Activation time of each activated node.
    horizon : float
        Observation window ``T``.
    """

    __slots__ = ("n", "horizon", "nodes", "node_times")

    def __init__(self, n, times, horizon):
        n = int(n)
        horizon = float(horizon)
        if not (horizon > 0 and math.isfinite(horizon)):
            raise ValueError(f"horizon must be positive and finite, got {horizon}")
        items = list(times.items() if hasattr(times, "items") else times)
        nodes = np.array([int(k) for k, _ in items], dtype=np.int64)
        ts = np.array([float(t) for _, t in items], dtype=np.float64)
        if nodes.size == 0:
            raise ValueError("cascade must contain at least one activated node")
        if nodes.min() < 0 or nodes.max() >= n:
            raise ValueError(f"node id out of range [0, {n})")
        if np.unique(nodes).size != nodes.size:
            raise ValueError("duplicate node in cascade")
        if not np.all(np.isfinite(ts)) or ts.min() < 0 or ts.max() > horizon:
            raise ValueError(f"activation times must lie in [0, {horizon}]")
        if not np.any(ts == 0):
            raise ValueError("cascade has no seed (no activation at time 0)")
        order = np.lexsort((nodes, ts))
        self.n = n
        self.horizon = horizon
        self.nodes = nodes[order]
        self.node_times = ts[order]
        self.nodes.setflags(write=False)
        self.node_times.setflags(write=False)

    @property
    def times(self):
        return dict(zip(self.nodes.tolist(), self.node_times.tolist()))

    @property
    def seeds(self):
        return frozenset(self.nodes[self.node_times == 0].tolist())

    @property
    def size(self):
        """Number of activated nodes."""
        return int(self.nodes.size)

    def truncate(self, horizon):
        """The same diffusion observed only up to an earlier ``horizon``."""
        if horizon > self.horizon:
            raise ValueError(f"cannot extend horizon {self.horizon} to {horizon}")
        keep = self.node_times <= horizon
        return Cascade(self.n, zip(self.nodes[keep].tolist(), self.node_times[keep].tolist()), horizon)

    def activation_times(self):
        """Dense length-``n`` vector with ``inf`` for inactive nodes."""
        t = np.full(self.n, np.inf)
        t[self.nodes] = self.node_times
        return t

    def __eq__(self, other):
        if not isinstance(other, Cascade):
            return NotImplemented
        return (
            self.n == other.n
            and self.horizon == other.horizon
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.node_times, other.node_times)
        )

    def __hash__(self):
        return hash((self.n, self.horizon, self.nodes.tobytes(), self.node_times.tobytes()))

    def __repr__(self):
        return f"Cascade(n={self.n}, size={self.size}, horizon={self.horizon})"


@dataclass(frozen=True)
class StateVector:
    """Binary activation state of every node at time ``t``."""

    bits: np.ndarray
    t: float


def state_at(cascade, t):
    """Return the state of ``cascade`` at time ``t``: bit v is 1 iff t_v <= t."""
    if not 0 <= t <= cascade.horizon:
        raise ValueError(f"t={t} outside [0, {cascade.horizon}]")
    bits = np.zeros(cascade.n, dtype=np.int8)
    bits[cascade.nodes[cascade.node_times <= t]] = 1
    return StateVector(bits, float(t))


def _check_seeds(graph, seeds):
    seeds = sorted({int(s) for s in seeds})
    if not seeds:
        raise ValueError("seed set must be nonempty")
    if seeds[0] < 0 or seeds[-1] >= graph.n:
        raise ValueError(f"seed out of range [0, {graph.n})")
    return seeds


def simulate_cascade(graph, seeds, horizon, rng_seed=None):
    """Simulate one CIC diffusion from ``seeds`` up to ``horizon``.

    Every activation of ``u`` at ``t_u`` proposes ``t_u + Exp(rate)`` to
    each out-neighbour; a node takes its earliest proposal that does not
    exceed the horizon.  Exact ties go to the smallest ``(src, dst)`` edge.
    """
    seeds = _check_seeds(graph, seeds)
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    adj = graph.out_adjacency
    times = {}
    heap = [(0.0, -1, s) for s in seeds]
    heapq.heapify(heap)
    buf = rng.random(64)
    pos = 0
    while heap:
        t, _, v = heapq.heappop(heap)
        if v in times:
            continue
        times[v] = t
        for w, rate, _ in adj[v]:
            if w in times:
                continue
            if pos == buf.size:
                buf = rng.random(max(64, buf.size * 2))
                pos = 0
            u = buf[pos]
            pos += 1
            # guard U == 0
            delay = -math.log(u if u > 0.0 else 5e-324) / rate
            tw = t + delay
            if tw <= horizon:
                heapq.heappush(heap, (tw, v, w))
    return Cascade(graph.n, times, horizon)


def _simulate_chunk(args):
    graph, jobs, horizon = args
    return [simulate_cascade(graph, seeds, horizon, seed) for seeds, seed in jobs]


def simulate_cascades(graph, seed_sets, horizon, rng_seed=0, workers=1):
    """Simulate one cascade per seed set; cascade ``i`` uses seed ``rng_seed + i``.

    Results do not depend on ``workers``.
    """
    jobs = [(s, rng_seed + i) for i, s in enumerate(seed_sets)]
    if workers <= 1 or len(jobs) < 2 * workers:
        return _simulate_chunk((graph, jobs, horizon))
    size = math.ceil(len(jobs) / workers)
    chunks = [(graph, jobs[i : i + size], horizon) for i in range(0, len(jobs), size)]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for part in ex.map(_simulate_chunk, chunks):
            out.extend(part)
    return out


def _format_time(t):
    return "0" if t == 0 else repr(float(t))


def cascades_save(cascades, path, n=None, horizon=None):
    """Write cascades, one per line, as ``node:time`` pairs."""
    cascades = list(cascades)
    if cascades:
        n = cascades[0].n if n is None else n
        horizon = cascades[0].horizon if horizon is None else horizon
        for c in cascades:
            if c.n != n or c.horizon != horizon:
                raise ValueError("all cascades must share n and horizon")
    if n is None or horizon is None:
        raise ValueError("n and horizon are required to save an empty cascade list")
    lines = [f"meta n={int(n)} T={float(horizon)!r}"]
    for c in cascades:
        lines.append(
            ",".join(f"{u}:{_format_time(t)}" for u, t in zip(c.nodes.tolist(), c.node_times.tolist()))
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_cascade_meta(path):
    """Return ``(n, horizon)`` from a cascade file header."""
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            return _parse_meta(line, path, lineno)
    raise CascadeFormatError(f"{path}: missing 'meta n=<nodes> T=<horizon>' header")


def _parse_meta(line, path, lineno):
    parts = line.split()
    if not parts or parts[0] != "meta":
        raise CascadeFormatError(f"{path}:{lineno}: expected 'meta n=<nodes> T=<horizon>'")
    fields = {}
    for p in parts[1:]:
        k, _, v = p.partition("=")
        fields[k] = v
    try:
        n = int(fields["n"])
        horizon = float(fields["T"])
    except (KeyError, ValueError):
        raise CascadeFormatError(f"{path}:{lineno}: malformed meta line {line!r}")
    if n < 1 or not (horizon > 0 and math.isfinite(horizon)):
        raise CascadeFormatError(f"{path}:{lineno}: invalid n or T in meta line")
    return n, horizon


def cascades_load(path, n=None):
    """Parse a cascade file.

    ``n``, when given, must agree with the header.  Errors name the line.
    """
    meta = None
    cascades = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if meta is None:
                meta = _parse_meta(line, path, lineno)
                if n is not None and int(n) != meta[0]:
                    raise CascadeFormatError(
                        f"{path}:{lineno}: header says n={meta[0]}, expected {n}"
                    )
                continue
            file_n, horizon = meta
            times = {}
            for pair in line.split(","):
                node, sep, t = pair.strip().partition(":")
                try:
                    if not sep:
                        raise ValueError
                    node, t = int(node), float(t)
                except ValueError:
                    raise CascadeFormatError(f"{path}:{lineno}: malformed pair {pair!r}")
                if not 0 <= node < file_n:
                    raise CascadeFormatError(f"{path}:{lineno}: node {node} out of range")
                if not math.isfinite(t) or t < 0:
                    raise CascadeFormatError(f"{path}:{lineno}: negative or invalid time {t}")
                if t > horizon:
                    raise CascadeFormatError(f"{path}:{lineno}: time {t} exceeds horizon {horizon}")
                if node in times:
                    raise CascadeFormatError(f"{path}:{lineno}: duplicate node {node}")
                times[node] = t
            if 0.0 not in times.values():
                raise CascadeFormatError(f"{path}:{lineno}: cascade has no seed (time 0)")
            cascades.append(Cascade(file_n, times, horizon))
    if meta is None:
        raise CascadeFormatError(f"{path}: missing 'meta n=<nodes> T=<horizon>' header")
    return cascades


def split_cascades(cascades, fractions=(0.8, 0.1, 0.1), rng_seed=0):
    """Shuffle and partition cascades into train/validation/test lists.

    Validation and test sizes are ``round(fraction * N)``; train gets the rest.
    """
    cascades = list(cascades)
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError(f"fractions must be three positive numbers, got {fractions}")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    N = len(cascades)
    if N < 3:
        raise ValueError(f"need at least 3 cascades to split, got {N}")
    n_val = max(1, round(fractions[1] * N))
    n_test = max(1, round(fractions[2] * N))
    n_train = N - n_val - n_test
    if n_train < 1:
        raise ValueError("split leaves no training cascades")
    perm = np.random.default_rng(rng_seed).permutation(N)
    shuffled = [cascades[i] for i in perm]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )
