"""scikit-learn style wrappers around training and influence estimation."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .graph import Graph
from .influence import InfluenceQuery, estimate_influence
from .train import TrainConfig, eval_bce, f1_score, infer_edges, train
from .validation import as_graph, check_cascades, check_probability, check_seed_set

__all__ = ["FIMNetworkInference", "SDTSInfluenceEstimator"]


class FIMNetworkInference(BaseEstimator):
    """Learn transmission rates from cascades.

    Parameters
    ----------
    eps : float
        Width of one approximation step.
    batch_size : int
        Cascades per update.
    learning_rate : float
    passes : int or None
        Number of updates; ``None`` means one per ``batch_size`` cascades.
    init_sigma : float or None
        Std of the Gaussian initialisation, ``1/n`` when ``None``.
    threshold : float
        Minimum rate for an entry to count as an edge.
    optimizer : {"adam", "sgd"}
    momentum : float
    storage : {"auto", "dense", "sparse"}
    random_state : int

    Attributes
    ----------
    params_ : ndarray or scipy.sparse.csr_matrix
        Learned rate matrix, ``params_[u, v]`` is the rate of ``u -> v``.
    loss_history_ : list of float
        Mean batch loss before each update.
    """

    def __init__(
        self,
        eps=1.0,
        batch_size=16,
        learning_rate=0.005,
        passes=None,
        init_sigma=None,
        threshold=0.01,
        optimizer="adam",
        momentum=0.0,
        storage="auto",
        random_state=0,
    ):
        self.eps = eps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.passes = passes
        self.init_sigma = init_sigma
        self.threshold = threshold
        self.optimizer = optimizer
        self.momentum = momentum
        self.storage = storage
        self.random_state = random_state

    def _config(self, horizon):
        return TrainConfig(
            eps=self.eps,
            horizon=horizon,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            passes=self.passes,
            init_sigma=self.init_sigma,
            rng_seed=self.random_state,
            threshold=self.threshold,
            momentum=self.momentum,
            optimizer=self.optimizer,
            storage=self.storage,
        )

    def fit(self, X, y=None, init=None):
        """Fit on a list of cascades.  ``y`` is ignored."""
        X = check_cascades(X)
        model = train(X, self._config(X[0].horizon), init=init)
        self.model_ = model
        self.params_ = model.params
        self.loss_history_ = model.loss_history
        self.n_nodes_ = X[0].n
        self.horizon_ = X[0].horizon
        return self

    def loss(self, X):
        """Mean held-out loss per cascade."""
        check_is_fitted(self, "params_")
        X = check_cascades(X, n=self.n_nodes_)
        return eval_bce(self.params_, X, self.eps)

    def score(self, X, y=None):
        """Negated :meth:`loss`, so larger is better."""
        return -self.loss(X)

    def predict(self, X=None):
        """Inferred edge set ``{(u, v)}`` at ``threshold``."""
        check_is_fitted(self, "params_")
        return infer_edges(self.params_, self.threshold)

    def edge_scores(self, truth):
        """Precision, recall and F1 of :meth:`predict` against ``truth``."""
        truth = truth.edge_set() if hasattr(truth, "edge_set") else set(truth)
        return f1_score(self.predict(), truth)

    def to_graph(self, threshold=None):
        check_is_fitted(self, "params_")
        return as_graph(self.params_, threshold)


class SDTSInfluenceEstimator(BaseEstimator):
    """Expected spread of seed sets on a fixed rate network.

    ``fit`` accepts a :class:`~fimnet.graph.Graph` (used as is), a rate
    matrix or a fitted :class:`FIMNetworkInference`.  For learned rates,
    ``use_threshold`` keeps only entries ``>= threshold``; otherwise every
    positive entry becomes an edge.
    """

    def __init__(
        self,
        horizon=10.0,
        eta=0.1,
        delta=0.05,
        threshold=0.01,
        use_threshold=True,
        random_state=0,
        workers=1,
    ):
        self.horizon = horizon
        self.eta = eta
        self.delta = delta
        self.threshold = threshold
        self.use_threshold = use_threshold
        self.random_state = random_state
        self.workers = workers

    def fit(self, X, y=None):
        check_probability("eta", self.eta)
        check_probability("delta", self.delta)
        if isinstance(X, Graph):
            self.graph_ = X
        else:
            self.graph_ = as_graph(X, self.threshold if self.use_threshold else None)
        self.n_nodes_ = self.graph_.n
        return self

    def estimate(self, seeds, rng_seed=None):
        """Full :class:`~fimnet.influence.InfluenceEstimate` for one seed set."""
        check_is_fitted(self, "graph_")
        query = InfluenceQuery(
            seeds=check_seed_set(seeds, self.n_nodes_),
            horizon=self.horizon,
            eta=self.eta,
            delta=self.delta,
            rng_seed=self.random_state if rng_seed is None else rng_seed,
        )
        return estimate_influence(self.graph_, query, workers=self.workers)

    def predict(self, X):
        """Mean spread for each seed set in ``X``."""
        return np.array(
            [self.estimate(s, rng_seed=self.random_state + i).mean_spread for i, s in enumerate(X)]
        )
