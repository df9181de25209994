"""Desk-scale construction of numerator and denominator graphs.

Each phone uses a two-pdf, minimum-duration-one topology: a mandatory
first-frame arc emitting the phone's entry pdf (``2 * phone``), then a
self-loop emitting its continuation pdf (``2 * phone + 1``). Numerators
chain the topology along a transcript; the denominator wires one topology
instance per phone through a bigram phone LM estimated from training
transcripts, optionally with deterministic fractional silence insertion
between words and at utterance boundaries.

File formats handled here:

* transcripts: one utterance per line, phones whitespace-separated, ``|``
  marking word boundaries for silence insertion;
* phone table: one phone name per line, the line number (0-based) being the
  phone index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import ChainGraph

__all__ = [
    "PhoneTopology",
    "BigramLM",
    "estimate_bigram",
    "build_numerator",
    "build_denominator",
    "load_phone_table",
    "parse_transcripts",
]

Utterance = Sequence[Sequence[int]]  # words, each a sequence of phone ids


@dataclass(frozen=True)
class PhoneTopology:
    """Pdf assignment and self-loop weight shared by all builders."""

    num_phones: int
    self_loop_prob: float = 0.5

    def __post_init__(self) -> None:
        if self.num_phones < 1:
            raise ValueError(f"num_phones must be >= 1, got {self.num_phones}")
        if not 0.0 < self.self_loop_prob < 1.0:
            raise ValueError(
                f"self_loop_prob must lie in (0, 1), got {self.self_loop_prob}"
            )

    @property
    def num_pdfs(self) -> int:
        return 2 * self.num_phones

    def entry_pdf(self, phone: int) -> int:
        return 2 * phone

    def loop_pdf(self, phone: int) -> int:
        return 2 * phone + 1


@dataclass(frozen=True)
class BigramLM:
    """Bigram phone LM with explicit begin/end-of-sequence probabilities.

    ``phones`` lists the vocabulary (ascending phone ids, including the
    silence phone when silence insertion was enabled); the probability
    arrays are indexed by position in that tuple. For every history,
    successor probabilities plus the end probability sum to one.
    """

    phones: tuple[int, ...]
    start_probs: np.ndarray        # (V,)  P(q | begin)
    trans_probs: np.ndarray        # (V, V)  P(q' | q)
    end_probs: np.ndarray          # (V,)  P(end | q)
    begin_end: float               # P(end | begin); unused by graph building
    silence: int | None = None

    def __post_init__(self) -> None:
        v = len(self.phones)
        if self.start_probs.shape != (v,) or self.trans_probs.shape != (v, v) \
                or self.end_probs.shape != (v,):
            raise ValueError("BigramLM probability arrays have inconsistent shapes")
        if abs(self.start_probs.sum() + self.begin_end - 1.0) > 1e-12:
            raise ValueError("begin-history probabilities do not sum to 1")
        row_sums = self.trans_probs.sum(axis=1) + self.end_probs
        if np.any(np.abs(row_sums - 1.0) > 1e-12):
            bad = int(np.argmax(np.abs(row_sums - 1.0)))
            raise ValueError(
                f"history {self.phones[bad]}: probabilities sum to {row_sums[bad]!r}"
            )

    def index(self, phone: int) -> int:
        try:
            return self.phones.index(phone)
        except ValueError:
            raise ValueError(f"phone {phone} is not in the LM vocabulary") from None


def _validate_corpus(transcripts: Sequence[Utterance]) -> None:
    if len(transcripts) == 0:
        raise ValueError("empty corpus")
    for u, utt in enumerate(transcripts):
        if sum(len(word) for word in utt) == 0:
            raise ValueError(f"utterance {u} is empty")
        for word in utt:
            for phone in word:
                if phone < 0:
                    raise ValueError(f"utterance {u}: negative phone id {phone}")


def estimate_bigram(
    transcripts: Sequence[Utterance],
    silence: int | None = None,
    sil_between: float = 0.2,
    sil_boundary: float = 0.8,
    smoothing: float = 0.1,
) -> BigramLM:
    """Estimate a bigram phone LM from word-segmented transcripts.

    With ``silence`` set, deterministic expected counts route ``sil_between``
    of the bigram mass through the silence phone at each word boundary and
    ``sil_boundary`` at each utterance boundary (no sampling). Add-k
    smoothing with ``smoothing`` is applied over the observed vocabulary
    plus end-of-sequence, then each history is normalized.
    """
    _validate_corpus(transcripts)
    if not 0.0 <= sil_between <= 1.0 or not 0.0 <= sil_boundary <= 1.0:
        raise ValueError("silence insertion probabilities must lie in [0, 1]")
    if smoothing < 0.0:
        raise ValueError(f"smoothing must be >= 0, got {smoothing}")

    vocab: set[int] = set()
    for utt in transcripts:
        for word in utt:
            vocab.update(int(p) for p in word)
    if silence is not None:
        if silence in vocab:
            raise ValueError(
                f"silence phone {silence} also appears in the transcripts"
            )
        vocab.add(int(silence))

    phones = tuple(sorted(vocab))
    pos = {p: i for i, p in enumerate(phones)}
    v = len(phones)

    start = np.zeros(v)
    trans = np.zeros((v, v))
    end = np.zeros(v)
    begin_end_count = 0.0

    sil = pos[silence] if silence is not None else None

    def junction(prev: int | None, nxt: int | None, sil_prob: float) -> None:
        # Route sil_prob of this junction's mass through silence.
        direct = 1.0 - sil_prob if sil is not None else 1.0
        via = sil_prob if sil is not None else 0.0
        nonlocal begin_end_count
        if prev is None and nxt is None:
            raise AssertionError("junction needs at least one phone")
        if prev is None:
            start[nxt] += direct
            if via:
                start[sil] += via
                trans[sil, nxt] += via
        elif nxt is None:
            end[prev] += direct
            if via:
                trans[prev, sil] += via
                end[sil] += via
        else:
            trans[prev, nxt] += direct
            if via:
                trans[prev, sil] += via
                trans[sil, nxt] += via

    for utt in transcripts:
        words = [[pos[int(p)] for p in word] for word in utt if len(word) > 0]
        flat_first = words[0][0]
        flat_last = words[-1][-1]
        junction(None, flat_first, sil_boundary)
        junction(flat_last, None, sil_boundary)
        for word in words:
            for a, b in zip(word, word[1:]):
                trans[a, b] += 1.0
        for left, right in zip(words, words[1:]):
            junction(left[-1], right[0], sil_between)

    start += smoothing
    trans += smoothing
    end += smoothing
    begin_end_count += smoothing

    begin_norm = start.sum() + begin_end_count
    if begin_norm <= 0.0:
        raise ValueError("begin history has no probability mass")
    row_norms = trans.sum(axis=1) + end
    if np.any(row_norms <= 0.0):
        bad = phones[int(np.argmax(row_norms <= 0.0))]
        raise ValueError(f"history {bad} has no probability mass (set smoothing > 0)")

    return BigramLM(
        phones=phones,
        start_probs=start / begin_norm,
        trans_probs=trans / row_norms[:, None],
        end_probs=end / row_norms,
        begin_end=begin_end_count / begin_norm,
        silence=int(silence) if silence is not None else None,
    )


def build_numerator(
    phones: Sequence[int],
    topology: PhoneTopology,
    lm: BigramLM | None = None,
) -> ChainGraph:
    """Build the linear reference graph of one transcript.

    States are the initial entry state followed by one loop state per phone
    in order. Each phone is entered through an arc emitting its entry pdf
    and extended by a self-loop emitting its continuation pdf, so its
    minimum duration is one frame. With ``lm`` given, arc probabilities are
    replaced by the denominator graph's corresponding weights (entry
    ``P(q_0 | begin)``, advance ``(1 - rho) * P(q_{k+1} | q_k)``, final
    ``(1 - rho) * P(end | q_last)``), which makes every path of this graph a
    path of the denominator built from the same LM, with equal weight.
    """
    phones = [int(p) for p in phones]
    if len(phones) == 0:
        raise ValueError("cannot build a numerator for an empty phone sequence")
    for p in phones:
        if not 0 <= p < topology.num_phones:
            raise ValueError(f"unknown phone {p} (topology has {topology.num_phones})")

    rho = topology.self_loop_prob
    n = len(phones)

    if lm is None:
        entry = 1.0
        advance = [1.0 - rho] * (n - 1)
        final = 1.0 - rho
    else:
        idx = [lm.index(p) for p in phones]
        entry = float(lm.start_probs[idx[0]])
        advance = [
            (1.0 - rho) * float(lm.trans_probs[a, b]) for a, b in zip(idx, idx[1:])
        ]
        final = (1.0 - rho) * float(lm.end_probs[idx[-1]])

    # State 0 is the entry state; loop state of phone k is k + 1.
    arcs: list[tuple[int, int, int, float]] = [(0, 1, topology.entry_pdf(phones[0]), entry)]
    for k, p in enumerate(phones):
        arcs.append((k + 1, k + 1, topology.loop_pdf(p), rho))
        if k + 1 < n:
            arcs.append((k + 1, k + 2, topology.entry_pdf(phones[k + 1]), advance[k]))

    finals = np.zeros(n + 1)
    finals[n] = final
    return ChainGraph(arcs, n + 1, topology.num_pdfs, 0, finals)


def build_denominator(lm: BigramLM, topology: PhoneTopology) -> ChainGraph:
    """Build the all-hypotheses graph of a bigram LM.

    State 0 is an explicit start state fanning out to each phone's loop
    state through that phone's entry pdf, weighted by ``P(q | begin)``.
    Phone ``q``'s loop state self-loops with the topology weight and hands
    its exit mass to successors proportionally to ``P(q' | q)``, entering
    them through their entry pdfs; its final probability is
    ``(1 - rho) * P(end | q)``. Loop states are therefore stochastic:
    outgoing mass plus final probability is exactly one. The empty-sequence
    mass ``P(end | begin)`` has no graph counterpart and is dropped.
    """
    for p in lm.phones:
        if not 0 <= p < topology.num_phones:
            raise ValueError(
                f"LM phone {p} is not covered by the topology "
                f"({topology.num_phones} phones)"
            )

    rho = topology.self_loop_prob
    v = len(lm.phones)

    def loop_state(vocab_pos: int) -> int:
        return vocab_pos + 1

    arcs: list[tuple[int, int, int, float]] = []
    for j, q in enumerate(lm.phones):
        p_start = float(lm.start_probs[j])
        if p_start > 0.0:
            arcs.append((0, loop_state(j), topology.entry_pdf(q), p_start))
    for j, q in enumerate(lm.phones):
        arcs.append((loop_state(j), loop_state(j), topology.loop_pdf(q), rho))
        for k, q_next in enumerate(lm.phones):
            p = float(lm.trans_probs[j, k])
            if p > 0.0:
                arcs.append(
                    (loop_state(j), loop_state(k), topology.entry_pdf(q_next), (1.0 - rho) * p)
                )

    finals = np.zeros(v + 1)
    for j in range(v):
        finals[loop_state(j)] = (1.0 - rho) * float(lm.end_probs[j])
    return ChainGraph(arcs, v + 1, topology.num_pdfs, 0, finals)


def load_phone_table(text: str) -> dict[str, int]:
    """Parse a phone table: one phone name per line, line number = index."""
    table: dict[str, int] = {}
    lines = text.splitlines()
    for i, line in enumerate(lines):
        name = line.strip()
        if not name:
            raise ValueError(f"phone table line {i + 1}: empty phone name")
        if name in table:
            raise ValueError(f"phone table line {i + 1}: duplicate phone {name!r}")
        table[name] = i
    if not table:
        raise ValueError("empty phone table")
    return table


def parse_transcripts(text: str, phone_table: dict[str, int]) -> list[list[list[int]]]:
    """Parse a transcript file into utterances of words of phone ids.

    Blank lines are skipped; ``|`` tokens separate words. Unknown phone
    names are an error.
    """
    utterances: list[list[list[int]]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        words: list[list[int]] = []
        current: list[int] = []
        for token in tokens:
            if token == "|":
                if current:
                    words.append(current)
                    current = []
                continue
            if token not in phone_table:
                raise ValueError(f"transcript line {lineno}: unknown phone {token!r}")
            current.append(phone_table[token])
        if current:
            words.append(current)
        if not words:
            raise ValueError(f"transcript line {lineno}: no phones")
        utterances.append(words)
    if not utterances:
        raise ValueError("empty transcript file")
    return utterances
