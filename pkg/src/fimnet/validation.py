"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .cascade import Cascade
from .graph import Graph


def check_cascades(cascades, n=None, horizon=None):
    """Return ``cascades`` as a list after checking they share ``n`` and horizon."""
    if isinstance(cascades, Cascade):
        cascades = [cascades]
    cascades = list(cascades)
    if not cascades:
        raise ValueError("expected at least one cascade")
    for i, c in enumerate(cascades):
        if not isinstance(c, Cascade):
            raise TypeError(f"item {i} is {type(c).__name__}, expected Cascade")
    n = cascades[0].n if n is None else n
    horizon = cascades[0].horizon if horizon is None else horizon
    for i, c in enumerate(cascades):
        if c.n != n:
            raise ValueError(f"cascade {i} has n={c.n}, expected {n}")
        if c.horizon != horizon:
            raise ValueError(f"cascade {i} has horizon {c.horizon}, expected {horizon}")
    return cascades


def check_seed_set(seeds, n):
    seeds = sorted({int(s) for s in np.atleast_1d(seeds)})
    if not seeds:
        raise ValueError("seed set must be nonempty")
    bad = [s for s in seeds if not 0 <= s < n]
    if bad:
        raise ValueError(f"seed(s) {bad} out of range [0, {n})")
    return tuple(seeds)


def check_probability(name, value):
    value = float(value)
    if not 0 < value < 1:
        raise ValueError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_params(A):
    """Check a rate matrix: square, finite, nonnegative, zero diagonal."""
    if sp.issparse(A):
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"rate matrix must be square, got {A.shape}")
        data, diag = A.data, A.diagonal()
    else:
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"rate matrix must be square, got {A.shape}")
        data, diag = A, np.diagonal(A)
    if not np.all(np.isfinite(data)):
        raise ValueError("rate matrix has non-finite entries")
    if np.any(data < 0):
        raise ValueError("rate matrix has negative entries")
    if np.any(diag != 0):
        raise ValueError("rate matrix has a nonzero diagonal")
    return A


def as_graph(obj, threshold=None):
    """Coerce a Graph, rate matrix or fitted model to a :class:`Graph`.

    ``threshold`` drops entries below it; ``None`` keeps every positive entry.
    """
    if isinstance(obj, Graph):
        return obj if threshold is None else Graph.from_matrix(obj.to_sparse(), threshold)
    params = getattr(obj, "params_", None)
    if params is None:
        params = getattr(obj, "params", obj)
    params = check_params(params)
    return Graph.from_matrix(params, 0.0 if threshold is None else threshold)
