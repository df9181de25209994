"""Synthetic end-to-end training demo at desk scale.

Builds a toy corpus over a handful of phones, synthesizes per-frame
features from seeded alignments (each phone lasting roughly a configurable
number of frames), and trains a single affine map from those features to
pdf scores by plain full-batch gradient ascent on the sequence objective.
Stands in for a real acoustic model pipeline: small enough to run in
seconds, faithful enough that the loss falls and frame accuracy climbs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .batching import LogLikBatch, make_batch
from .forward_backward import FBOptions
from .graph import ChainGraphBatch
from .loss import chain_loss
from .toy_builder import PhoneTopology, build_denominator, build_numerator, estimate_bigram

__all__ = ["TrainDemoResult", "synthesize_corpus", "corpus_to_text", "train_demo"]

Utterance = list[list[int]]


@dataclass
class TrainDemoResult:
    """Per-epoch normalized losses and final frame-level argmax accuracy."""

    losses: list[float]
    accuracy: float
    total_frames: int


def synthesize_corpus(
    rng: np.random.Generator,
    num_phones: int,
    num_utterances: int,
    max_words: int = 3,
    max_word_length: int = 4,
) -> list[Utterance]:
    """Sample a random corpus of word-segmented phone transcripts."""
    corpus: list[Utterance] = []
    for _ in range(num_utterances):
        words = []
        for _ in range(int(rng.integers(1, max_words + 1))):
            length = int(rng.integers(1, max_word_length + 1))
            words.append([int(p) for p in rng.integers(0, num_phones, size=length)])
        corpus.append(words)
    return corpus


def corpus_to_text(corpus: Sequence[Utterance], phone_names: Sequence[str]) -> str:
    """Render a corpus in the transcript file format (``|`` between words)."""
    lines = []
    for utt in corpus:
        words = [" ".join(phone_names[p] for p in word) for word in utt]
        lines.append(" | ".join(words))
    return "\n".join(lines) + "\n"


def _expand_alignment(
    phones: Sequence[int],
    topology: PhoneTopology,
    frames_per_phone: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pdf target sequence: entry pdf once, then the loop pdf, per phone."""
    targets: list[int] = []
    jitter = max(1, frames_per_phone // 3)
    for p in phones:
        duration = max(1, frames_per_phone + int(rng.integers(-jitter, jitter + 1)))
        targets.append(topology.entry_pdf(p))
        targets.extend([topology.loop_pdf(p)] * (duration - 1))
    return np.asarray(targets, dtype=np.int64)


def train_demo(
    corpus: Sequence[Utterance],
    num_phones: int,
    frames_per_phone: int = 8,
    epochs: int = 150,
    learning_rate: float = 6.0,
    seed: int = 0,
    noise: float = 0.2,
    leak: float = 1e-5,
    self_loop_prob: float = 0.5,
    smoothing: float = 0.1,
) -> TrainDemoResult:
    """Train the affine toy model and report the loss curve and accuracy.

    Fully deterministic for a fixed seed. The reported loss for epoch ``e``
    is evaluated at the parameters entering that epoch; accuracy is measured
    after the final update, over valid frames only.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if frames_per_phone < 1:
        raise ValueError(f"frames_per_phone must be >= 1, got {frames_per_phone}")

    topology = PhoneTopology(num_phones, self_loop_prob)
    num_pdfs = topology.num_pdfs
    rng = np.random.default_rng(seed)

    flat = [[p for word in utt for p in word] for utt in corpus]
    targets = [_expand_alignment(phones, topology, frames_per_phone, rng) for phones in flat]
    features = []
    for tgt in targets:
        x = noise * rng.standard_normal((tgt.shape[0], num_pdfs))
        x[np.arange(tgt.shape[0]), tgt] += 1.0
        features.append(x)

    feat_batch = make_batch(features)
    order = feat_batch.order_map
    numerators = ChainGraphBatch.from_graphs(
        [build_numerator(flat[i], topology) for i in order]
    )
    lm = estimate_bigram(corpus, silence=None, smoothing=smoothing)
    denominator = ChainGraphBatch.broadcast(build_denominator(lm, topology), len(corpus))
    opts = FBOptions(leak_coefficient=leak)

    sorted_targets = [targets[i] for i in order]
    total_frames = feat_batch.total_frames

    weights = np.zeros((num_pdfs, num_pdfs))
    bias = np.zeros(num_pdfs)
    losses: list[float] = []

    def logits_batch() -> LogLikBatch:
        return LogLikBatch(
            values=feat_batch.values @ weights + bias,
            lengths=feat_batch.lengths,
            valid_batch_sizes=feat_batch.valid_batch_sizes,
            order_map=feat_batch.order_map,
        )

    for _ in range(epochs):
        batch = logits_batch()
        result = chain_loss(batch, numerators, denominator, opts, normalize_by_frames=True)
        losses.append(result.loss)
        step = result.grad / total_frames
        weights += learning_rate * np.einsum("btf,btd->fd", feat_batch.values, step)
        bias += learning_rate * step.sum(axis=(0, 1))

    final = logits_batch()
    correct = 0
    for b, tgt in enumerate(sorted_targets):
        n = tgt.shape[0]
        predicted = final.values[b, :n].argmax(axis=1)
        correct += int((predicted == tgt).sum())
    return TrainDemoResult(
        losses=losses,
        accuracy=correct / total_frames,
        total_frames=total_frames,
    )
