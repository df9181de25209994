"""Synthetic trainer: determinism and basic learning behaviour."""

import numpy as np

from chainloss.demo import corpus_to_text, synthesize_corpus, train_demo
from chainloss.toy_builder import load_phone_table, parse_transcripts


def small_corpus(seed=0):
    return synthesize_corpus(np.random.default_rng(seed), num_phones=3, num_utterances=20)


class TestTrainDemo:
    def test_deterministic_for_fixed_seed(self):
        corpus = small_corpus()
        a = train_demo(corpus, num_phones=3, epochs=4, seed=5)
        b = train_demo(corpus, num_phones=3, epochs=4, seed=5)
        assert a.losses == b.losses
        assert a.accuracy == b.accuracy

    def test_seed_changes_curve(self):
        corpus = small_corpus()
        a = train_demo(corpus, num_phones=3, epochs=3, seed=5)
        b = train_demo(corpus, num_phones=3, epochs=3, seed=6)
        assert a.losses != b.losses

    def test_loss_improves(self):
        corpus = small_corpus()
        result = train_demo(corpus, num_phones=3, epochs=8, seed=0)
        assert result.losses[-1] < result.losses[0]

    def test_corpus_round_trips_through_file_format(self):
        corpus = small_corpus(3)
        names = ["p0", "p1", "p2"]
        text = corpus_to_text(corpus, names)
        table = load_phone_table("\n".join(names) + "\n")
        assert parse_transcripts(text, table) == corpus


class TestSynthesizeCorpus:
    def test_shapes_and_determinism(self):
        a = synthesize_corpus(np.random.default_rng(1), 5, 10)
        b = synthesize_corpus(np.random.default_rng(1), 5, 10)
        assert a == b
        assert len(a) == 10
        for utt in a:
            assert all(0 <= p < 5 for word in utt for p in word)
            assert len(utt) >= 1
