"""Toy topology, bigram estimation, and graph construction."""

import math

import numpy as np
import pytest

from chainloss import (
    ChainGraphBatch,
    FBOptions,
    PhoneTopology,
    Transition,
    build_denominator,
    build_numerator,
    enumerate_paths,
    estimate_bigram,
    forward_backward,
    load_phone_table,
    make_batch,
    parse_transcripts,
)
from chainloss.oracle import brute_logprob


class TestTopology:
    def test_pdf_assignment(self):
        topo = PhoneTopology(3)
        assert topo.num_pdfs == 6
        assert topo.entry_pdf(2) == 4
        assert topo.loop_pdf(2) == 5

    def test_validation(self):
        with pytest.raises(ValueError, match="num_phones"):
            PhoneTopology(0)
        with pytest.raises(ValueError, match="self_loop_prob"):
            PhoneTopology(1, self_loop_prob=1.0)


class TestNumerator:
    def test_single_phone_structure(self):
        topo = PhoneTopology(1)
        g = build_numerator([0], topo)
        assert g.num_states == 2
        assert set(g.transitions()) == {
            Transition(0, 1, 0, 1.0),
            Transition(1, 1, 1, 0.5),
        }
        np.testing.assert_array_equal(g.final_probs, [0.0, 0.5])
        # Accepts entry, entry.loop, entry.loop.loop, ...
        for frames in (1, 2, 3):
            paths = enumerate_paths(g, frames)
            assert len(paths) == 1
            assert paths[0].pdf_ids == (0,) + (1,) * (frames - 1)

    def test_two_phone_unique_min_path(self):
        topo = PhoneTopology(2)
        g = build_numerator([0, 1], topo)
        paths = enumerate_paths(g, 2)
        assert len(paths) == 1
        assert paths[0].pdf_ids == (0, 2)
        np.testing.assert_allclose(paths[0].prob, 0.25)

    def test_minimum_duration_one_frame_per_phone(self):
        topo = PhoneTopology(3)
        g = build_numerator([0, 1, 2], topo)
        assert enumerate_paths(g, 2) == []
        assert len(enumerate_paths(g, 3)) == 1

    def test_errors(self):
        topo = PhoneTopology(2)
        with pytest.raises(ValueError, match="empty"):
            build_numerator([], topo)
        with pytest.raises(ValueError, match="unknown phone"):
            build_numerator([5], topo)


class TestBigram:
    def test_single_utterance_counts(self):
        lm = estimate_bigram([[[0]]], silence=None, smoothing=0.0)
        assert lm.phones == (0,)
        np.testing.assert_allclose(lm.start_probs, [1.0])
        np.testing.assert_allclose(lm.end_probs, [1.0])

    def test_hand_counted_corpus(self):
        # "a b" and "a": history a has one bigram to b and one sequence end.
        lm = estimate_bigram([[[0, 1]], [[0]]], silence=None, smoothing=0.0)
        a, b = lm.index(0), lm.index(1)
        np.testing.assert_allclose(lm.trans_probs[a, b], 0.5)
        np.testing.assert_allclose(lm.end_probs[a], 0.5)
        np.testing.assert_allclose(lm.start_probs[a], 1.0)
        np.testing.assert_allclose(lm.end_probs[b], 1.0)

    def test_silence_fractional_counts(self):
        # One utterance "a | b" with silence phone 2: expected counts are
        # begin: 0.8 via silence, 0.2 direct; same at the end; 0.2 via
        # silence between the words.
        lm = estimate_bigram(
            [[[0], [1]]], silence=2, sil_between=0.2, sil_boundary=0.8, smoothing=0.0
        )
        a, b, s = lm.index(0), lm.index(1), lm.index(2)
        np.testing.assert_allclose(lm.start_probs[s], 0.8)
        np.testing.assert_allclose(lm.start_probs[a], 0.2)
        np.testing.assert_allclose(lm.trans_probs[s, a], 0.8 / 1.8)
        np.testing.assert_allclose(lm.trans_probs[s, b], 0.2 / 1.8)
        np.testing.assert_allclose(lm.end_probs[s], 0.8 / 1.8)
        np.testing.assert_allclose(lm.trans_probs[a, s], 0.2)
        np.testing.assert_allclose(lm.trans_probs[a, b], 0.8)
        np.testing.assert_allclose(lm.trans_probs[b, s], 0.8)
        np.testing.assert_allclose(lm.end_probs[b], 0.2)

    def test_histories_normalize(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            corpus = []
            for _ in range(int(rng.integers(1, 6))):
                words = []
                for _ in range(int(rng.integers(1, 4))):
                    words.append([int(p) for p in rng.integers(0, 4, rng.integers(1, 4))])
                corpus.append(words)
            silence = 9 if rng.random() < 0.5 else None
            lm = estimate_bigram(corpus, silence=silence, smoothing=float(rng.uniform(0, 0.5)))
            np.testing.assert_allclose(lm.start_probs.sum() + lm.begin_end, 1.0, atol=1e-12)
            np.testing.assert_allclose(
                lm.trans_probs.sum(axis=1) + lm.end_probs, 1.0, atol=1e-12
            )

    def test_errors(self):
        with pytest.raises(ValueError, match="empty corpus"):
            estimate_bigram([])
        with pytest.raises(ValueError, match="empty"):
            estimate_bigram([[[]]])
        with pytest.raises(ValueError, match="also appears"):
            estimate_bigram([[[0, 1]]], silence=1)
        with pytest.raises(ValueError, match="no probability mass"):
            estimate_bigram([[[0]]], silence=1, sil_between=0.0, sil_boundary=0.0,
                            smoothing=0.0)


class TestDenominator:
    def test_single_phone_lm_structure(self):
        topo = PhoneTopology(1)
        lm = estimate_bigram([[[0]], [[0, 0]]], silence=None, smoothing=0.0)
        g = build_denominator(lm, topo)
        assert g.num_states == 2
        kinds = {(t.from_state, t.to_state, t.pdf_id) for t in g.transitions()}
        assert kinds == {(0, 1, 0), (1, 1, 1), (1, 1, 0)}

    def test_loop_states_are_stochastic(self):
        corpus = [[[0, 1], [2]], [[1]], [[2, 2, 0]]]
        topo = PhoneTopology(4)
        lm = estimate_bigram(corpus, silence=3, smoothing=0.05)
        g = build_denominator(lm, topo)
        for s in range(1, g.num_states):
            lo, hi = g.forward_index[s]
            mass = g.forward_probs[lo:hi].sum() + g.final_probs[s]
            np.testing.assert_allclose(mass, 1.0, atol=1e-12)

    def test_forward_matches_brute_force(self):
        topo = PhoneTopology(2)
        lm = estimate_bigram([[[0, 1]], [[1, 0]]], silence=None, smoothing=0.1)
        g = build_denominator(lm, topo)
        rng = np.random.default_rng(1)
        loglikes = rng.normal(0, 1, size=(3, topo.num_pdfs))
        fb = forward_backward(
            make_batch([loglikes]),
            ChainGraphBatch.broadcast(g, 1),
            FBOptions(leak_coefficient=0.0),
        )
        assert abs(fb.log_probs[0] - brute_logprob(g, loglikes)) < 1e-10

    def test_denominator_contains_numerator_paths(self):
        topo = PhoneTopology(2)
        corpus = [[[0, 1]]]
        lm = estimate_bigram(corpus, silence=None, smoothing=0.0)
        den = build_denominator(lm, topo)
        num = build_numerator([0, 1], topo)
        for frames in (2, 3, 4):
            num_seqs = {p.pdf_ids for p in enumerate_paths(num, frames)}
            den_seqs = {p.pdf_ids for p in enumerate_paths(den, frames)}
            assert num_seqs <= den_seqs

    def test_den_weights_match_denominator_arcs(self):
        topo = PhoneTopology(2)
        lm = estimate_bigram([[[0, 1]], [[0]]], silence=None, smoothing=0.1)
        num = build_numerator([0, 1], topo, lm=lm)
        arcs = list(num.transitions())
        i0, i1 = lm.index(0), lm.index(1)
        assert arcs[0].prob == lm.start_probs[i0]
        advance = [t for t in arcs if t.from_state == 1 and t.to_state == 2][0]
        assert advance.prob == 0.5 * lm.trans_probs[i0, i1]
        assert num.final_probs[2] == 0.5 * lm.end_probs[i1]

    def test_vocabulary_mismatch(self):
        lm = estimate_bigram([[[3]]], silence=None)
        with pytest.raises(ValueError, match="not covered"):
            build_denominator(lm, PhoneTopology(2))


class TestFileFormats:
    def test_phone_table(self):
        table = load_phone_table("aa\nbb\ncc\n")
        assert table == {"aa": 0, "bb": 1, "cc": 2}
        with pytest.raises(ValueError, match="duplicate"):
            load_phone_table("aa\naa\n")
        with pytest.raises(ValueError, match="empty phone name"):
            load_phone_table("aa\n\nbb\n")
        with pytest.raises(ValueError, match="empty phone table"):
            load_phone_table("")

    def test_transcripts(self):
        table = {"a": 0, "b": 1}
        utts = parse_transcripts("a b | a\n\nb\n", table)
        assert utts == [[[0, 1], [0]], [[1]]]
        with pytest.raises(ValueError, match="unknown phone 'c'"):
            parse_transcripts("a c\n", table)
        with pytest.raises(ValueError, match="no phones"):
            parse_transcripts("|\n", table)
        with pytest.raises(ValueError, match="empty transcript"):
            parse_transcripts("\n\n", table)
