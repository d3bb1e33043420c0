"""Projected gradient training of the rate matrix, edge inference and metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .fim import CLAMP_LO, as_param_matrix, batch_loss_grad, cascade_loss_grad, forward_cascade
from .graph import Graph, graph_load, graph_save

__all__ = [
    "DENSE_LIMIT",
    "TrainConfig",
    "TrainedModel",
    "TrainingError",
    "init_params",
    "candidate_pattern",
    "project",
    "train",
    "infer_edges",
    "f1_score",
    "eval_bce",
    "model_save",
    "model_load",
    "loss_history_save",
]

# largest n stored densely under storage="auto"
DENSE_LIMIT = 4096
# largest n for which a whole batch is evaluated with stacked matrix products
STACKED_LIMIT = 256


class TrainingError(RuntimeError):
    """Raised when training diverges."""


@dataclass
class TrainConfig:
    """Hyperparameters for :func:`train`.

    ``passes=None`` means one batch per ``batch_size`` cascades, i.e.
    ``ceil(len(cascades) / batch_size)`` updates.  ``init_sigma=None`` means
    ``1 / n``.  ``optimizer="sgd"`` applies plain (optionally momentum)
    steps; ``"adam"`` rescales each entry's step by its gradient history,
    which keeps rare ``1/q`` gradient spikes from throwing entries into the
    clamped region.  ``storage`` is ``"auto"``, ``"dense"`` or ``"sparse"``.
    """

    eps: float = 1.0
    horizon: float | None = None
    batch_size: int = 16
    learning_rate: float = 0.005
    passes: int | None = None
    init_sigma: float | None = None
    rng_seed: int = 0
    threshold: float = 0.01
    clamp_lo: float = CLAMP_LO
    momentum: float = 0.0
    optimizer: str = "adam"
    storage: str = "auto"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.horizon is not None and self.eps > self.horizon:
            raise ValueError(f"eps={self.eps} exceeds horizon {self.horizon}")
        if int(self.batch_size) < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.passes is not None and int(self.passes) < 1:
            raise ValueError("passes must be >= 1")
        if self.init_sigma is not None and self.init_sigma < 0:
            raise ValueError("init_sigma must be nonnegative")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.storage not in ("auto", "dense", "sparse"):
            raise ValueError(f"unknown storage mode {self.storage!r}")


@dataclass
class TrainedModel:
    params: np.ndarray | sp.csr_matrix
    loss_history: list = field(default_factory=list)
    config: TrainConfig | None = None

    @property
    def n(self):
        return self.params.shape[0]

    def to_graph(self, threshold=0.0):
        return Graph.from_matrix(self.params, threshold)


def project(A):
    """Clip to nonnegative and zero the diagonal, in place."""
    if sp.issparse(A):
        np.maximum(A.data, 0.0, out=A.data)
        return A
    np.maximum(A, 0.0, out=A)
    np.fill_diagonal(A, 0.0)
    return A


def init_params(n, init_sigma=None, rng_seed=0, pattern=None):
    """Draw ``N(0, sigma^2)`` entries and project; ``sigma`` defaults to ``1/n``.

    With ``pattern`` (a sparse matrix) only its stored entries are drawn.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    sigma = 1.0 / n if init_sigma is None else float(init_sigma)
    rng = np.random.default_rng(rng_seed)
    if pattern is not None:
        A = sp.csr_matrix(pattern, dtype=np.float64, copy=True)
        A.data = rng.normal(0.0, sigma, size=A.nnz)
        return project(A)
    return project(rng.normal(0.0, sigma, size=(n, n)))


def candidate_pattern(cascades, n):
    """Pairs ``(u, v)`` with ``t_u < t_v`` in at least one cascade."""
    pairs = set()
    for c in cascades:
        nodes, ts = c.nodes.tolist(), c.node_times.tolist()
        for i, v in enumerate(nodes):
            tv = ts[i]
            for j in range(i):
                if ts[j] < tv:
                    pairs.add((nodes[j], v))
    if not pairs:
        return sp.csr_matrix((n, n))
    r, c = map(np.asarray, zip(*pairs))
    order = np.lexsort((c, r))
    P = sp.csr_matrix((np.ones(r.size), (r[order], c[order])), shape=(n, n))
    P.sum_duplicates()
    return P


def _check_cascades(cascades):
    cascades = list(cascades)
    if not cascades:
        raise ValueError("no training cascades")
    n, T = cascades[0].n, cascades[0].horizon
    for i, c in enumerate(cascades):
        if c.n != n or c.horizon != T:
            raise ValueError(
                f"cascade {i} has (n={c.n}, T={c.horizon}), expected (n={n}, T={T})"
            )
    return cascades, n, T


def _batch_loss_grad(A, batch, eps, clamp_lo):
    loss = 0.0
    if sp.issparse(A):
        grad = np.zeros_like(A.data)
        for c in batch:
            l, rows, block = cascade_loss_grad(A, c, eps, clamp_lo)
            loss += l
            for r, g in zip(rows.tolist(), block):
                lo, hi = A.indptr[r], A.indptr[r + 1]
                grad[lo:hi] += g[A.indices[lo:hi]]
    elif A.shape[0] <= STACKED_LIMIT:
        loss, grad = batch_loss_grad(A, batch, eps, clamp_lo)
    else:
        grad = np.zeros_like(A)
        for c in batch:
            l, rows, block = cascade_loss_grad(A, c, eps, clamp_lo)
            loss += l
            grad[rows] += block
    k = len(batch)
    return loss / k, grad / k


def train(cascades, config=None, init=None):
    """Fit the rate matrix to ``cascades`` with projected mini-batch SGD.

    Each update samples ``batch_size`` cascades uniformly with replacement,
    takes a step against the mean cascade loss and projects back onto
    nonnegative matrices with zero diagonal.
    """
    config = TrainConfig() if config is None else config
    cascades, n, T = _check_cascades(cascades)
    if config.eps > T:
        raise ValueError(f"eps={config.eps} exceeds cascade horizon {T}")
    storage = config.storage
    if storage == "auto":
        storage = "dense" if n <= DENSE_LIMIT else "sparse"
    if init is not None:
        A = as_param_matrix(init)
        if storage == "sparse":
            A = sp.csr_matrix(A, copy=True)
        else:
            A = A.toarray() if sp.issparse(A) else A.copy()
        project(A)
    elif storage == "sparse":
        A = init_params(n, config.init_sigma, config.rng_seed, candidate_pattern(cascades, n))
    else:
        A = init_params(n, config.init_sigma, config.rng_seed)

    rng = np.random.default_rng(config.rng_seed + 1)
    B = int(config.batch_size)
    passes = config.passes if config.passes is not None else math.ceil(len(cascades) / B)
    velocity = None
    second = None
    history = []
    for it in range(int(passes)):
        idx = rng.integers(0, len(cascades), size=B)
        loss, grad = _batch_loss_grad(A, [cascades[i] for i in idx], config.eps, config.clamp_lo)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite loss or gradient at batch {it}")
        history.append(loss)
        if config.optimizer == "adam":
            b1, b2 = config.momentum or 0.9, 0.999
            if velocity is None:
                velocity, second = np.zeros_like(grad), np.zeros_like(grad)
            velocity = b1 * velocity + (1 - b1) * grad
            second = b2 * second + (1 - b2) * grad * grad
            step = (velocity / (1 - b1 ** (it + 1))) / (
                np.sqrt(second / (1 - b2 ** (it + 1))) + 1e-8
            )
        elif config.momentum:
            velocity = grad if velocity is None else config.momentum * velocity + grad
            step = velocity
        else:
            step = grad
        if sp.issparse(A):
            A.data -= config.learning_rate * step
        else:
            A -= config.learning_rate * step
        project(A)
    return TrainedModel(A, history, config)


def infer_edges(params, threshold=0.01):
    """Return ``{(u, v): A[u, v] >= threshold, u != v}`` over stored nonzeros."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    A = params.params if isinstance(params, TrainedModel) else as_param_matrix(params)
    if sp.issparse(A):
        coo = A.tocoo()
        r, c, v = coo.row, coo.col, coo.data
    else:
        r, c = np.nonzero(A)
        v = A[r, c]
    keep = (r != c) & (v >= threshold) & (v != 0)
    return set(zip(r[keep].tolist(), c[keep].tolist()))


def f1_score(predicted, truth):
    """Precision, recall and F1 of predicted directed edges."""
    predicted, truth = set(predicted), set(truth)
    if not predicted and not truth:
        return 1.0, 1.0, 1.0
    tp = len(predicted & truth)
    precision = tp / len(predicted) if predicted else 0.0
    recall = tp / len(truth) if truth else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def eval_bce(params, cascades, eps, clamp_lo=CLAMP_LO):
    """Mean per-cascade loss over ``cascades``."""
    cascades = list(cascades)
    if not cascades:
        raise ValueError("no cascades to evaluate")
    A = params.params if isinstance(params, TrainedModel) else as_param_matrix(params)
    return float(np.mean([forward_cascade(A, c, eps, clamp_lo)[0] for c in cascades]))


def model_save(model, path, floor=0.0):
    """Write the learned matrix in graph edge-list format with a config header."""
    header = []
    if model.config is not None:
        header = [f"{k}={v}" for k, v in asdict(model.config).items()]
    graph_save(model.to_graph(floor), path, header=header)


def model_load(path):
    """Read a model file back as a dense (or sparse, for large n) matrix."""
    g = graph_load(path)
    cfg = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            k, sep, v = line[1:].strip().partition("=")
            if sep:
                cfg[k] = v
    params = g.to_dense() if g.n <= DENSE_LIMIT else g.to_sparse()
    return TrainedModel(params, [], _config_from_strings(cfg) if cfg else None)


def _config_from_strings(raw):
    kwargs = {}
    for f in fields(TrainConfig):
        if f.name not in raw:
            continue
        v = raw[f.name]
        if v == "None":
            kwargs[f.name] = None
        elif f.name in ("storage", "optimizer"):
            kwargs[f.name] = v
        elif f.name in ("batch_size", "passes", "rng_seed"):
            kwargs[f.name] = int(v)
        else:
            kwargs[f.name] = float(v)
    return TrainConfig(**kwargs)


def loss_history_save(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["batch", "loss"])
        for i, loss in enumerate(history):
            w.writerow([i, repr(float(loss))])
