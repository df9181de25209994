"""Line-oriented text format for chain graphs.

The format is an acceptor-style text FST:

* arc lines: ``src dst label [weight]`` — ``label`` is ``pdf_id + 1``
  (label 0 is reserved for epsilon and rejected), ``weight`` is the negative
  natural log of the transition probability and defaults to 0 (prob 1);
* final lines: ``state [weight]`` — weight again ``-ln(prob)``;
* ``#``-prefixed comment lines and blank lines are ignored;
* whitespace-separated fields, UTF-8, LF line endings.

The first-mentioned state (the first arc line's source, or the first final
line's state if there are no arcs) is the start state. On parsing, states
are densely re-indexed in order of first appearance with the start state
mapped to index 0, so a graph whose own numbering already follows that
convention round-trips exactly; other graphs round-trip to a relabeled but
otherwise identical graph.
"""

from __future__ import annotations

import math

from .graph import ChainGraph

__all__ = ["FstParseError", "parse_fst_text", "serialize_fst_text"]


class FstParseError(ValueError):
    """Malformed text-FST input; messages carry 1-based line numbers."""


def _parse_int(field: str, lineno: int, what: str) -> int:
    try:
        value = int(field)
    except ValueError:
        raise FstParseError(f"line {lineno}: {what} is not an integer: {field!r}") from None
    if value < 0:
        raise FstParseError(f"line {lineno}: {what} must be non-negative, got {value}")
    return value


def _parse_weight(field: str, lineno: int) -> float:
    try:
        value = float(field)
    except ValueError:
        raise FstParseError(f"line {lineno}: weight is not a number: {field!r}") from None
    if not math.isfinite(value):
        raise FstParseError(f"line {lineno}: weight must be finite, got {field!r}")
    return value


def parse_fst_text(text: str, num_pdfs: int) -> ChainGraph:
    """Parse text-FST content into a :class:`ChainGraph` with ``num_pdfs`` pdfs.

    Raises :class:`FstParseError` on malformed lines, epsilon labels, labels
    above ``num_pdfs``, duplicate final lines, or a missing final state, and
    :class:`ValueError` when the described graph fails construction checks.
    """
    if num_pdfs < 1:
        raise ValueError(f"num_pdfs must be >= 1, got {num_pdfs}")

    state_index: dict[int, int] = {}

    def dense(state_id: int) -> int:
        if state_id not in state_index:
            state_index[state_id] = len(state_index)
        return state_index[state_id]

    arcs: list[tuple[int, int, int, float]] = []
    finals: dict[int, float] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) in (1, 2):
            state = dense(_parse_int(fields[0], lineno, "state"))
            weight = _parse_weight(fields[1], lineno) if len(fields) == 2 else 0.0
            if state in finals:
                raise FstParseError(f"line {lineno}: duplicate final line for state {fields[0]}")
            finals[state] = math.exp(-weight)
        elif len(fields) in (3, 4):
            src = dense(_parse_int(fields[0], lineno, "src state"))
            dst = dense(_parse_int(fields[1], lineno, "dst state"))
            label = _parse_int(fields[2], lineno, "label")
            if label == 0:
                raise FstParseError(f"line {lineno}: label 0 is reserved for epsilon")
            if label > num_pdfs:
                raise FstParseError(
                    f"line {lineno}: label {label} exceeds num_pdfs={num_pdfs}"
                )
            weight = _parse_weight(fields[3], lineno) if len(fields) == 4 else 0.0
            arcs.append((src, dst, label - 1, math.exp(-weight)))
        else:
            raise FstParseError(
                f"line {lineno}: expected 1-2 (final) or 3-4 (arc) fields, got {len(fields)}"
            )

    if not state_index:
        raise FstParseError("empty FST: no states mentioned")
    if not finals:
        raise FstParseError("no final state in FST")

    num_states = len(state_index)
    final_probs = [0.0] * num_states
    for state, prob in finals.items():
        final_probs[state] = prob
    return ChainGraph(arcs, num_states, num_pdfs, 0, final_probs)


def _format_weight(prob: float) -> str:
    weight = -math.log(prob) + 0.0  # + 0.0 normalizes -0.0
    return f"{weight:.17g}"


def serialize_fst_text(graph: ChainGraph) -> str:
    """Serialize a graph to text-FST form.

    Arcs appear in from-state-sorted order with the initial state's block
    first; final lines follow, in ascending state order. Weights are printed
    with 17 significant digits so they survive the text round trip exactly.
    """
    order = [graph.initial_state]
    order.extend(s for s in range(graph.num_states) if s != graph.initial_state)

    lines: list[str] = []
    for s in order:
        lo, hi = graph.forward_index[s]
        for i in range(lo, hi):
            lines.append(
                f"{graph.forward_from[i]} {graph.forward_to[i]} "
                f"{graph.forward_pdf[i] + 1} {_format_weight(graph.forward_probs[i])}"
            )
    for s in range(graph.num_states):
        p = graph.final_probs[s]
        if p > 0.0:
            lines.append(f"{s} {_format_weight(p)}")
    return "\n".join(lines) + "\n"
