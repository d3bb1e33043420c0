"""Euler approximation of continuous-time diffusion and its BCE loss.

Parameter matrices may be dense ``ndarray`` objects, ``scipy.sparse``
matrices (the learnable entries are then the stored pattern) or a
:class:`~fimnet.graph.Graph`.  Entry ``A[u, v]`` is the rate of ``u -> v``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph

__all__ = [
    "CLAMP_LO",
    "StepRecord",
    "as_param_matrix",
    "step_grid",
    "conditional_rate",
    "euler_step",
    "bce_step_loss",
    "forward_cascade",
    "grad_cascade",
    "cascade_loss_grad",
    "batch_loss_grad",
    "local_error",
]

CLAMP_LO = 1e-7


@dataclass
class StepRecord:
    k: int
    gamma: np.ndarray
    predicted: np.ndarray
    target: np.ndarray
    loss: float


def as_param_matrix(params):
    """Return ``params`` as a square float ndarray or CSR matrix."""
    if isinstance(params, Graph):
        return params.to_sparse()
    if sp.issparse(params):
        A = sp.csr_matrix(params, dtype=np.float64)
    else:
        A = np.asarray(params, dtype=np.float64)
        if A.ndim != 2:
            raise ValueError(f"parameter matrix must be 2-D, got shape {A.shape}")
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"parameter matrix must be square, got shape {A.shape}")
    return A


def step_grid(horizon, eps):
    """Grid times ``0, eps, ..., K*eps`` plus ``horizon`` when a partial step remains."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if eps > horizon * (1 + 1e-12):
        raise ValueError(f"eps={eps} exceeds the horizon {horizon}")
    K = int(math.floor(horizon / eps * (1 + 1e-12)))
    grid = [k * eps for k in range(K + 1)]
    if horizon - K * eps > 1e-12 * horizon:
        grid.append(float(horizon))
    else:
        grid[-1] = float(horizon)
    return np.asarray(grid)


def _bits(state):
    return np.asarray(getattr(state, "bits", state), dtype=np.float64)


def conditional_rate(params, state):
    """Sum of rates from active in-neighbours for each inactive node; 0 for active nodes."""
    phi = _bits(state)
    if isinstance(params, Graph):
        if phi.shape != (params.n,):
            raise ValueError(f"state has length {phi.size}, expected {params.n}")
        active_src = phi[params.src] > 0
        gamma = np.bincount(
            params.dst[active_src], weights=params.rate[active_src], minlength=params.n
        )
    else:
        A = as_param_matrix(params)
        if phi.shape != (A.shape[0],):
            raise ValueError(f"state has length {phi.size}, expected {A.shape[0]}")
        gamma = np.asarray(A.T @ phi).ravel()
    gamma[phi > 0] = 0.0
    return gamma


def euler_step(state, gamma, eps, clamp_lo=CLAMP_LO):
    """One explicit Euler step ``phi + eps * gamma`` clamped into ``[lo, 1 - lo]``."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    gamma = np.asarray(gamma, dtype=np.float64)
    if not np.all(np.isfinite(gamma)):
        raise ValueError("gamma contains non-finite values")
    return np.clip(_bits(state) + eps * gamma, clamp_lo, 1.0 - clamp_lo)


def bce_step_loss(predicted, target, start=None):
    """Negative Bernoulli log-likelihood of ``target`` under ``predicted``.

    When ``start`` (the state at the beginning of the step) is given, nodes
    already active there are skipped.
    """
    q = np.asarray(predicted, dtype=np.float64)
    y = _bits(target)
    if q.shape != y.shape:
        raise ValueError("predicted and target lengths differ")
    if np.any(q <= 0) or np.any(q >= 1):
        raise FloatingPointError("predictions must lie strictly inside (0, 1)")
    terms = y * np.log(q) + (1.0 - y) * np.log1p(-q)
    if start is not None:
        terms = terms[_bits(start) == 0]
    return float(-terms.sum())


def _activation_steps(cascade, grid):
    """Step index at which each activated node is first marked active."""
    return np.searchsorted(grid, cascade.node_times, side="left")


def _step_rates(A, nodes, steps, J, n, counter=None):
    """Row ``j`` holds ``A^T phi_j`` for the state before step ``j + 1``."""
    used = steps < J
    nodes, steps = nodes[used], steps[used]
    if sp.issparse(A):
        M = sp.csr_matrix(
            (np.ones(nodes.size), (steps, nodes)), shape=(J, n)
        )
        S = np.cumsum((M @ A).toarray(), axis=0)
        if counter is not None:
            counter["work"] = counter.get("work", 0) + int(A[nodes].nnz) + J * n
        return S
    rows = A[nodes]
    uniq, starts = np.unique(steps, return_index=True)
    R = np.zeros((J, n))
    R[uniq] = np.add.reduceat(rows, starts, axis=0)
    if counter is not None:
        counter["work"] = counter.get("work", 0) + rows.size + J * n
    return np.cumsum(R, axis=0)


def _evaluate(A, cascade, eps, clamp_lo, want_grad, counter=None):
    n = A.shape[0]
    if cascade.n != n:
        raise ValueError(f"cascade has n={cascade.n}, parameters have n={n}")
    grid = step_grid(cascade.horizon, eps)
    widths = np.diff(grid)
    J = widths.size
    steps = _activation_steps(cascade, grid)
    a = np.full(n, J + 1, dtype=np.int64)
    a[cascade.nodes] = steps
    S = _step_rates(A, cascade.nodes, steps, J, n, counter)
    k = np.arange(J)[:, None]
    active = a[None, :] <= k
    target = a[None, :] <= k + 1
    raw = widths[:, None] * np.where(active, 0.0, S)
    q = np.clip(raw, clamp_lo, 1.0 - clamp_lo)
    inactive = ~active
    ll = np.where(target, np.log(q), np.log1p(-q))
    step_losses = -np.where(inactive, ll, 0.0).sum(axis=1)
    out = {"loss": float(step_losses.sum()), "step_losses": step_losses,
           "S": S, "active": active, "target": target, "q": q, "widths": widths}
    if want_grad:
        free = inactive & (raw > clamp_lo) & (raw < 1.0 - clamp_lo)
        g = np.where(
            free,
            widths[:, None] * np.where(target, -1.0 / q, 1.0 / (1.0 - q)),
            0.0,
        )
        suffix = np.cumsum(g[::-1], axis=0)[::-1]
        used = steps < J
        out["grad_rows"] = cascade.nodes[used]
        out["grad_block"] = suffix[steps[used]]
    return out


def cascade_loss_grad(A, cascade, eps, clamp_lo=CLAMP_LO):
    """Loss of one cascade plus its gradient as ``(rows, block)``.

    ``block[i]`` is the gradient row for node ``rows[i]``; all other rows
    are zero.  For sparse ``A`` only the stored pattern is meaningful.
    """
    r = _evaluate(A, cascade, eps, clamp_lo, want_grad=True)
    return r["loss"], r["grad_rows"], r["grad_block"]


def batch_loss_grad(A, cascades, eps, clamp_lo=CLAMP_LO):
    """Summed loss and dense gradient over cascades sharing ``n`` and horizon.

    All cascades are stacked into a ``(batch * steps, n)`` state matrix
    ``Phi`` so that rates are ``Phi @ A`` and the gradient is ``Phi.T @ g``.
    Intended for dense ``A`` with moderate ``n``.
    """
    n = A.shape[0]
    horizon = cascades[0].horizon
    grid = step_grid(horizon, eps)
    widths = np.diff(grid)
    J = widths.size
    B = len(cascades)
    a = np.full((B, n), J + 1, dtype=np.int64)
    for b, c in enumerate(cascades):
        if c.n != n or c.horizon != horizon:
            raise ValueError("cascades in a batch must share n and horizon")
        a[b, c.nodes] = _activation_steps(c, grid)
    k = np.arange(J)[None, :, None]
    active = a[:, None, :] <= k
    target = a[:, None, :] <= k + 1
    phi = active.reshape(B * J, n).astype(np.float64)
    S = (phi @ A).reshape(B, J, n)
    w = widths[None, :, None]
    raw = w * np.where(active, 0.0, S)
    q = np.clip(raw, clamp_lo, 1.0 - clamp_lo)
    inactive = ~active
    ll = np.where(target, np.log(q), np.log1p(-q))
    loss = float(-np.where(inactive, ll, 0.0).sum())
    free = inactive & (raw > clamp_lo) & (raw < 1.0 - clamp_lo)
    g = np.where(free, w * np.where(target, -1.0 / q, 1.0 / (1.0 - q)), 0.0)
    G = phi.T @ g.reshape(B * J, n)
    np.fill_diagonal(G, 0.0)
    return loss, G


def forward_cascade(params, cascade, eps, clamp_lo=CLAMP_LO, counter=None):
    """Run the step-wise approximation over one cascade.

    Returns ``(total_loss, records)`` with one :class:`StepRecord` per grid
    step, including the final partial step when ``eps`` does not divide the
    horizon.  Each step conditions on the observed state of the cascade at
    the previous grid point.
    """
    A = as_param_matrix(params)
    r = _evaluate(A, cascade, eps, clamp_lo, want_grad=False, counter=counter)
    records = []
    for j in range(r["widths"].size):
        gamma = np.where(r["active"][j], 0.0, r["S"][j])
        pred = np.where(r["active"][j], 1.0 - clamp_lo, r["q"][j])
        records.append(
            StepRecord(
                k=j + 1,
                gamma=gamma,
                predicted=pred,
                target=r["target"][j].astype(np.int8),
                loss=float(r["step_losses"][j]),
            )
        )
    return r["loss"], records


def grad_cascade(params, cascade, eps, clamp_lo=CLAMP_LO):
    """Gradient of the cascade loss with respect to the parameter matrix.

    Returned as an ``n x n`` CSR matrix whose stored rows are the nodes that
    were active before the last step.  For sparse ``params`` the gradient is
    restricted to the stored pattern.
    """
    A = as_param_matrix(params)
    _, rows, block = cascade_loss_grad(A, cascade, eps, clamp_lo)
    n = A.shape[0]
    if sp.issparse(A):
        sub = A[rows].tocoo()
        data = block[sub.row, sub.col]
        return sp.csr_matrix((data, (rows[sub.row], sub.col)), shape=(n, n))
    r = np.repeat(rows, n)
    c = np.tile(np.arange(n), rows.size)
    G = sp.csr_matrix((block.ravel(), (r, c)), shape=(n, n))
    G.setdiag(0)
    G.eliminate_zeros()
    return G


def local_error(gamma, eps):
    """Per-node error of one Euler step: ``eps*gamma + exp(-eps*gamma) - 1``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if eps < 0 or np.any(gamma < 0):
        raise ValueError("gamma and eps must be nonnegative")
    x = eps * gamma
    # expm1 keeps precision for small x
    return x + np.expm1(-x)
