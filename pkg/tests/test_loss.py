"""MMI objective, gradient structure, and failure handling."""

import math

import numpy as np
import pytest

from chainloss import (
    ChainGraph,
    ChainGraphBatch,
    FBOptions,
    LogLikBatch,
    PhoneTopology,
    brute_posteriors,
    build_denominator,
    build_numerator,
    chain_loss,
    estimate_bigram,
    make_batch,
)
from chainloss.oracle import random_loss_instance

NO_LEAK = FBOptions(leak_coefficient=0.0)
SELF_LOOP = ChainGraph([(0, 0, 0, 1.0)], 1, 1, 0, [1.0])


def replace_values(batch, values):
    return LogLikBatch(values, batch.lengths, batch.valid_batch_sizes, batch.order_map)


class TestIdenticalGraphs:
    def test_zero_objective_and_gradient(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            batch, _, den = random_loss_instance(rng)
            numerators = ChainGraphBatch.from_graphs(
                [den.graph(b) for b in range(batch.batch_size)]
            )
            res = chain_loss(batch, numerators, den, NO_LEAK)
            assert abs(res.objective) < 1e-10
            assert np.abs(res.grad).max() < 1e-10

    def test_self_loop_any_likelihoods(self):
        rng = np.random.default_rng(1)
        batch = make_batch([rng.normal(size=(5, 1))])
        graphs = ChainGraphBatch.broadcast(SELF_LOOP, 1)
        res = chain_loss(batch, graphs, graphs, NO_LEAK)
        assert res.objective == 0.0


class TestGradientStructure:
    def test_forced_path_gradient(self):
        # Numerator forces pdf sequence (0, 1) in two frames; denominator is a
        # free loop over both pdfs. At uniform likelihoods the gradient at
        # frame 0 is one_hot(0) - den posterior at frame 0.
        topo = PhoneTopology(1)
        num = ChainGraph([(0, 1, 0, 1.0), (1, 2, 1, 1.0)], 3, 2, 0, [0, 0, 1.0])
        den = ChainGraph([(0, 0, 0, 0.5), (0, 0, 1, 0.5)], 1, 2, 0, [1.0])
        loglikes = np.zeros((2, 2))
        batch = make_batch([loglikes])
        res = chain_loss(
            batch,
            ChainGraphBatch.from_graphs([num]),
            ChainGraphBatch.broadcast(den, 1),
            NO_LEAK,
        )
        den_gamma = brute_posteriors(den, loglikes)
        np.testing.assert_allclose(
            res.grad[0, 0], np.array([1.0, 0.0]) - den_gamma[0], atol=1e-12
        )

    def test_valid_frame_rows_sum_to_zero(self):
        rng = np.random.default_rng(2)
        for leak in (0.0, 1e-5):
            batch, nums, den = random_loss_instance(rng)
            res = chain_loss(batch, nums, den, FBOptions(leak_coefficient=leak))
            for b in range(batch.batch_size):
                n = int(batch.lengths[b])
                np.testing.assert_allclose(res.grad[b, :n].sum(axis=1), 0.0, atol=1e-8)
                assert np.all(res.grad[b, n:] == 0.0)

    def test_additivity_over_singletons(self):
        rng = np.random.default_rng(3)
        batch, nums, den = random_loss_instance(rng)
        total = chain_loss(batch, nums, den, NO_LEAK).objective
        parts = 0.0
        for b in range(batch.batch_size):
            n = int(batch.lengths[b])
            solo = make_batch([batch.values[b, :n]])
            parts += chain_loss(
                solo,
                ChainGraphBatch.from_graphs([nums.graph(b)]),
                ChainGraphBatch.broadcast(den.graph(b), 1),
                NO_LEAK,
            ).objective
        assert abs(total - parts) < 1e-10


class TestFiniteDifference:
    def test_random_instance_gradient(self):
        rng = np.random.default_rng(4)
        batch, nums, den = random_loss_instance(rng)
        res = chain_loss(batch, nums, den, NO_LEAK)
        eps = 1e-6
        numeric = np.zeros_like(res.grad)
        for b in range(batch.batch_size):
            for t in range(int(batch.lengths[b])):
                for d in range(batch.num_pdfs):
                    hi = batch.values.copy()
                    hi[b, t, d] += eps
                    lo = batch.values.copy()
                    lo[b, t, d] -= eps
                    f_hi = chain_loss(replace_values(batch, hi), nums, den, NO_LEAK).objective
                    f_lo = chain_loss(replace_values(batch, lo), nums, den, NO_LEAK).objective
                    numeric[b, t, d] = (f_hi - f_lo) / (2 * eps)
        scale = max(np.abs(res.grad).max(), np.abs(numeric).max(), 1e-12)
        assert np.abs(numeric - res.grad).max() / scale < 1e-6


class TestSubAutomatonBound:
    def test_den_weighted_numerators_give_nonpositive_objective(self):
        corpus = [[[0, 1]], [[1], [2]], [[2, 0, 1]]]
        topo = PhoneTopology(3)
        lm = estimate_bigram(corpus, silence=None, smoothing=0.1)
        den_graph = build_denominator(lm, topo)
        rng = np.random.default_rng(5)
        for utt in corpus:
            phones = [p for word in utt for p in word]
            num = build_numerator(phones, topo, lm=lm)
            for frames in (len(phones), len(phones) + 3):
                loglikes = rng.normal(0, 1, size=(frames, topo.num_pdfs))
                batch = make_batch([loglikes])
                res = chain_loss(
                    batch,
                    ChainGraphBatch.from_graphs([num]),
                    ChainGraphBatch.broadcast(den_graph, 1),
                    NO_LEAK,
                )
                assert res.objective <= 1e-12


class TestFailuresAndOptions:
    def failing_pair(self):
        chain3 = ChainGraph(
            [(0, 1, 0, 1.0), (1, 2, 0, 1.0), (2, 2, 0, 0.5)], 3, 1, 0, [0, 0, 0.5]
        )
        batch = make_batch([np.zeros((4, 1)), np.zeros((1, 1))])
        nums = ChainGraphBatch.broadcast(chain3, 2)  # item of length 1 fails
        den = ChainGraphBatch.broadcast(SELF_LOOP, 2)
        return batch, nums, den

    def test_failed_item_excluded(self):
        batch, nums, den = self.failing_pair()
        res = chain_loss(batch, nums, den, NO_LEAK)
        assert res.num_failed == 1
        assert np.all(res.grad[1] == 0.0)
        assert math.isfinite(res.objective)
        num_lp, den_lp = res.per_utt[1]
        assert math.isnan(num_lp) and not math.isnan(den_lp)

    def test_all_failed_raises(self):
        chain3 = ChainGraph(
            [(0, 1, 0, 1.0), (1, 2, 0, 1.0), (2, 2, 0, 0.5)], 3, 1, 0, [0, 0, 0.5]
        )
        batch = make_batch([np.zeros((1, 1))])
        graphs = ChainGraphBatch.broadcast(chain3, 1)
        with pytest.raises(RuntimeError, match="failed"):
            chain_loss(batch, graphs, graphs, NO_LEAK)

    def test_normalization_flag(self):
        rng = np.random.default_rng(6)
        batch, nums, den = random_loss_instance(rng)
        raw = chain_loss(batch, nums, den, NO_LEAK, normalize_by_frames=False)
        per_frame = chain_loss(batch, nums, den, NO_LEAK, normalize_by_frames=True)
        assert raw.loss == -raw.objective
        assert per_frame.loss == -per_frame.objective / batch.total_frames

    def test_shape_mismatch(self):
        batch = make_batch([np.zeros((2, 1))])
        good = ChainGraphBatch.broadcast(SELF_LOOP, 1)
        bad = ChainGraphBatch.broadcast(SELF_LOOP, 2)
        with pytest.raises(ValueError, match="batch size"):
            chain_loss(batch, bad, good, NO_LEAK)
