import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fimnet.cascade import Cascade
from fimnet.graph import Graph
from fimnet.influence import (
    InfluenceQuery,
    estimate_influence,
    ground_truth_spread,
    hoeffding_theta,
    ie_mae,
    sample_delays,
    sdts_sample,
    time_window_bound,
)

from conftest import CHAIN_SPREAD, random_graph, union_of_singletons


class TestHoeffding:
    def test_values(self):
        assert hoeffding_theta(0.1, 0.05) == 185
        assert hoeffding_theta(0.1, 0.01) == 265
        assert hoeffding_theta(0.01, 0.05) == math.ceil(math.log(40) / 2e-4)

    @pytest.mark.parametrize("eta,delta", [(1.0, 0.5), (0.0, 0.5), (0.1, 1.0), (0.1, 0.0)])
    def test_rejects(self, eta, delta):
        with pytest.raises(ValueError):
            hoeffding_theta(eta, delta)


class TestSample:
    def test_edgeless(self):
        g = Graph(6, [], [], [])
        assert sdts_sample(g, {1, 4}, 5.0, rng=0) == 2
        est = estimate_influence(g, InfluenceQuery((1, 4), 5.0))
        assert est.mean_spread == 2 and np.all(est.samples == 2)

    def test_huge_rates_give_reachability(self):
        g = Graph.from_edges(6, [(0, 1, 1e9), (1, 2, 1e9), (2, 0, 1e9), (3, 4, 1e9)])
        assert sdts_sample(g, {0}, 1.0, rng=1, return_nodes=True) == {0, 1, 2}
        assert sdts_sample(g, {3, 5}, 1.0, rng=1) == 3

    def test_chain_oracle(self, chain3):
        assert CHAIN_SPREAD == pytest.approx(1.89636, abs=1e-5)
        est = estimate_influence(chain3, InfluenceQuery((0,), 1.0, eta=0.0096, delta=0.05))
        assert est.theta >= 20000
        assert abs(est.mean_spread - CHAIN_SPREAD) < 0.02

    def test_determinism_and_workers(self, chain3):
        q = InfluenceQuery((0,), 1.0, eta=0.02, delta=0.05, rng_seed=4)
        a = estimate_influence(chain3, q)
        b = estimate_influence(chain3, q, workers=2)
        np.testing.assert_array_equal(a.samples, b.samples)
        assert a.samples.size == a.theta

    def test_rejects(self, chain3):
        with pytest.raises(ValueError):
            sdts_sample(chain3, {5}, 1.0)
        with pytest.raises(ValueError):
            InfluenceQuery((), 1.0)
        with pytest.raises(ValueError):
            InfluenceQuery((0,), 0.0)


class TestSharedDelays:
    def test_union_of_singletons(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            g = random_graph(32, int(rng.integers(32, 160)), rng, 0.1, 2.0)
            seeds = set(rng.choice(32, size=int(rng.integers(1, 5)), replace=False).tolist())
            T = float(rng.uniform(0.5, 3.0))
            d = sample_delays(g, rng)
            assert sdts_sample(g, seeds, T, delays=d) == union_of_singletons(g, seeds, T, d)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 5), st.floats(0.1, 5))
def test_spread_monotone_in_horizon_and_seeds(seed, t1, t2):
    rng = np.random.default_rng(seed)
    g = random_graph(20, 60, rng, 0.1, 1.0)
    d = sample_delays(g, rng)
    lo, hi = sorted((t1, t2))
    S = {int(rng.integers(20))}
    bigger = S | {int(rng.integers(20))}
    a = sdts_sample(g, S, lo, delays=d)
    assert len(S) <= a <= sdts_sample(g, S, hi, delays=d) <= g.n
    assert a <= sdts_sample(g, bigger, lo, delays=d)


class TestGroundTruth:
    def test_single_cascade(self):
        c = Cascade(10, {0: 0.0, 1: 1.0, 2: 2.0, 3: 3.0, 4: 4.0}, 10)
        assert ground_truth_spread([c], {0}).mean_spread == 5

    def test_disjoint_union(self):
        a = Cascade(10, {0: 0.0, 1: 1.0, 2: 1.0}, 10)
        b = Cascade(10, {5: 0.0, 6: 1.0, 7: 1.0, 8: 2.0}, 10)
        gt = ground_truth_spread([a, b], {0, 5})
        assert gt.mean_spread == 7 and gt.resamples == 1000

    def test_missing_seed_named(self):
        a = Cascade(10, {0: 0.0}, 10)
        with pytest.raises(ValueError, match="seed 3"):
            ground_truth_spread([a], {0, 3})

    def test_resampling_mean(self):
        cs = [Cascade(10, {0: 0.0}, 10), Cascade(10, {0: 0.0, 1: 1.0, 2: 1.0}, 10)]
        gt = ground_truth_spread(cs, {0}, resamples=4000, rng_seed=1)
        assert gt.mean_spread == pytest.approx(2.0, abs=0.1)


class TestMetrics:
    def test_mae(self):
        assert ie_mae([1, 2], [1, 2]) == 0
        assert ie_mae([3], [5]) == 2
        assert ie_mae([1, 2, 3], [2, 2, 5]) == 1.0
        with pytest.raises(ValueError):
            ie_mae([1], [1, 2])

    def test_time_window(self):
        lo, hi = time_window_bound(0.1, 2, 10)
        assert lo == pytest.approx(6.3212, abs=1e-4) and hi == 20
        assert time_window_bound(0.0, 2, 10) == (10, 20)
        assert time_window_bound(1e-9, 2, 10)[0] == pytest.approx(10)
        assert time_window_bound(0.1, 1e9, 10)[1] == pytest.approx(10)
        with pytest.raises(ValueError):
            time_window_bound(0.1, 1.0, 10)
