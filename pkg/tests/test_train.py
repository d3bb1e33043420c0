import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fimnet.cascade import Cascade, simulate_cascades
from fimnet.graph import Graph
from fimnet.train import (
    TrainConfig,
    TrainedModel,
    candidate_pattern,
    eval_bce,
    f1_score,
    infer_edges,
    init_params,
    loss_history_save,
    model_load,
    model_save,
    project,
    train,
)

from conftest import random_graph, single_edge_oracle


@pytest.fixture(scope="module")
def small_task():
    g = random_graph(10, 25, np.random.default_rng(0), 0.2, 0.5)
    sources = np.random.default_rng(1).integers(0, 10, 400)
    return g, simulate_cascades(g, [[int(s)] for s in sources], 10.0, rng_seed=0)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"eps": 0}, {"batch_size": 0}, {"learning_rate": 0}, {"threshold": -1},
         {"eps": 2.0, "horizon": 1.0}, {"optimizer": "rmsprop"}, {"storage": "disk"}],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestInitParams:
    def test_single_node(self):
        np.testing.assert_array_equal(init_params(1), [[0.0]])

    def test_half_zero_and_half_normal_scale(self):
        A = init_params(100, 0.01, rng_seed=0)
        off = A[~np.eye(100, dtype=bool)]
        assert abs(np.mean(off == 0) - 0.5) < 0.02
        pos = off[off > 0]
        # second moment of a half-normal equals sigma^2
        assert np.sqrt(np.mean(pos**2)) == pytest.approx(0.01, rel=0.03)
        assert np.all(np.diag(A) == 0)

    def test_default_sigma_and_determinism(self):
        A = init_params(50, rng_seed=3)
        np.testing.assert_array_equal(A, init_params(50, rng_seed=3))
        pos = A[A > 0]
        assert np.sqrt(np.mean(pos**2)) == pytest.approx(1 / 50, rel=0.06)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 15), st.integers(0, 2**31 - 1))
def test_projection_invariant(n, seed):
    A = project(np.random.default_rng(seed).normal(size=(n, n)))
    assert A.min() >= 0 and np.all(np.diag(A) == 0)


class TestTrain:
    def test_zero_cascades(self):
        with pytest.raises(ValueError):
            train([], TrainConfig())

    def test_mixed_dimensions(self):
        with pytest.raises(ValueError):
            train([Cascade(3, {0: 0.0}, 5), Cascade(4, {0: 0.0}, 5)])

    def test_reproducible_and_projected(self, small_task):
        _, cs = small_task
        cfg = TrainConfig(eps=0.5, batch_size=32, passes=40)
        a, b = train(cs, cfg), train(cs, cfg)
        np.testing.assert_array_equal(a.params, b.params)
        assert a.loss_history == b.loss_history
        assert a.params.min() >= 0 and np.all(np.diag(a.params) == 0)
        assert len(a.loss_history) == 40

    def test_default_pass_count(self, small_task):
        _, cs = small_task
        model = train(cs, TrainConfig(batch_size=64))
        assert len(model.loss_history) == 7

    def test_loss_trend_decreases(self, small_task):
        _, cs = small_task
        hist = train(cs, TrainConfig(eps=0.5, batch_size=64, passes=300)).loss_history
        slope = np.polyfit(np.arange(len(hist)), hist, 1)[0]
        assert slope <= 0

    def test_sgd_runs(self, small_task):
        _, cs = small_task
        m = train(cs, TrainConfig(optimizer="sgd", learning_rate=1e-4, momentum=0.5, passes=20))
        assert np.all(np.isfinite(m.params))

    def test_sparse_storage_matches_pattern(self, small_task):
        _, cs = small_task
        m = train(cs, TrainConfig(storage="sparse", passes=20))
        assert sp.issparse(m.params)
        pattern = candidate_pattern(cs, 10)
        assert set(zip(*m.params.nonzero())) <= set(zip(*pattern.nonzero()))

    def test_single_edge_recovery(self):
        g = Graph.from_edges(2, [(0, 1, 0.5)])
        cs = simulate_cascades(g, [[0]] * 5000, 10.0, rng_seed=0)
        oracle = single_edge_oracle(cs, 1.0)
        # optimum of the step-wise model, not the true rate
        assert oracle == pytest.approx(1 - np.exp(-0.5), abs=0.02)
        # an entry projected to 0 sits at the lower clamp and gets no gradient
        init = np.array([[0.0, 0.001], [0.001, 0.0]])
        m = train(cs, TrainConfig(eps=1.0, batch_size=64, passes=2000), init=init)
        assert abs(m.params[0, 1] - oracle) <= 0.1
        assert m.params[1, 0] < 0.01


class TestInferEdges:
    def test_threshold_example(self):
        A = np.array([[0, 0.009], [0.011, 0]])
        assert infer_edges(A, 0.01) == {(1, 0)}
        assert infer_edges(A, 0.0) == {(0, 1), (1, 0)}

    def test_sparse_input(self):
        A = sp.csr_matrix(np.array([[0, 0.5, 0], [0, 0, 0], [0.02, 0, 0]]))
        assert infer_edges(A, 0.01) == {(0, 1), (2, 0)}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 1))
def test_infer_edges_monotone(seed, a, b):
    A = project(np.random.default_rng(seed).normal(0, 0.5, (8, 8)))
    lo, hi = sorted((a, b))
    assert infer_edges(A, hi) <= infer_edges(A, lo)


class TestF1:
    def test_examples(self):
        assert f1_score({(0, 1)}, {(0, 1)}) == (1.0, 1.0, 1.0)
        assert f1_score({(0, 1)}, {(1, 0)}) == (0.0, 0.0, 0.0)
        assert f1_score(set(), set()) == (1.0, 1.0, 1.0)
        assert f1_score(set(), {(0, 1)}) == (0.0, 0.0, 0.0)
        pred = {(0, 1), (1, 2), (2, 3), (3, 0)}
        truth = {(0, 1), (1, 2), (0, 2), (1, 3)}
        assert f1_score(pred, truth) == pytest.approx((0.5, 0.5, 0.5))


class TestEvalBCE:
    def test_deterministic_and_trend_in_eps(self, small_task):
        g, cs = small_task
        m = train(cs, TrainConfig(eps=0.5, batch_size=64, passes=200))
        assert eval_bce(m, cs[:50], 0.5) == eval_bce(m, cs[:50], 0.5)
        assert eval_bce(m, cs[:50], 0.5) >= eval_bce(m, cs[:50], 2.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            eval_bce(np.zeros((2, 2)), [], 1.0)


class TestModelFile:
    def test_round_trip(self, tmp_path, small_task):
        _, cs = small_task
        m = train(cs, TrainConfig(passes=10, optimizer="sgd", learning_rate=1e-4))
        p = tmp_path / "model.txt"
        model_save(m, p)
        back = model_load(p)
        np.testing.assert_array_equal(back.params, m.params)
        assert back.config == m.config

    def test_loss_history_csv(self, tmp_path):
        p = tmp_path / "loss.csv"
        loss_history_save([1.5, 0.25], p)
        assert p.read_text() == "batch,loss\n0,1.5\n1,0.25\n"

    def test_to_graph(self):
        m = TrainedModel(np.array([[0, 0.3], [0.005, 0]]))
        assert m.to_graph(0.01).edge_set() == {(0, 1)}
