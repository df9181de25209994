"""Sparse transition-list encoding of chain HMM graphs and their batched form.

A chain graph is a finite acceptor over pdf emission labels: each transition
carries ``(from_state, to_state, pdf_id, prob)``, paths start at a single
initial state, and a path of T transitions is accepted with the final
probability of the state it ends in. The same transitions are stored twice,
once sorted by from-state and once by to-state, together with per-state row
ranges into each layout, so incoming and outgoing arcs of any state are
contiguous slices (a COO-style layout with a per-row index).

Graphs may be unnormalized: outgoing probabilities plus the final probability
of a state need not sum to one, and nothing downstream assumes they do.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = ["Transition", "ChainGraph", "ChainGraphBatch"]

INDEX_DTYPE = np.uint32


@dataclass(frozen=True)
class Transition:
    """One weighted, emitting arc of a chain graph."""

    from_state: int
    to_state: int
    pdf_id: int
    prob: float


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class ChainGraph:
    """Immutable sparse chain HMM graph.

    Parameters
    ----------
    transitions:
        Iterable of :class:`Transition` or ``(from_state, to_state, pdf_id,
        prob)`` tuples. Zero-probability arcs are silently dropped and
        counted in :attr:`dropped_transitions`; negative or non-finite
        probabilities are rejected. Probabilities above 1 are accepted
        (pruned production graphs are not stochastic).
    num_states:
        Number of states ``S``; all state indices must be below it.
    num_pdfs:
        Number of emission labels ``D``; all pdf ids must be below it.
    initial_state:
        The unique start state (implicit start probability 1).
    final_probs:
        Length-``S`` vector of per-state final probabilities in ``[0, 1]``,
        at least one of them positive.

    Raises
    ------
    ValueError
        On out-of-range indices, invalid probabilities, or when some state
        is unreachable from the initial state or cannot reach a final state.
        Disconnected states are an error rather than being trimmed, so that
        upstream graph bugs surface here.
    """

    def __init__(
        self,
        transitions: Iterable[Transition | tuple],
        num_states: int,
        num_pdfs: int,
        initial_state: int,
        final_probs: Sequence[float] | np.ndarray,
    ) -> None:
        if num_states < 1:
            raise ValueError(f"num_states must be >= 1, got {num_states}")
        if num_pdfs < 1:
            raise ValueError(f"num_pdfs must be >= 1, got {num_pdfs}")
        if not 0 <= initial_state < num_states:
            raise ValueError(
                f"initial_state {initial_state} out of range [0, {num_states})"
            )

        finals = np.asarray(final_probs, dtype=np.float64)
        if finals.shape != (num_states,):
            raise ValueError(
                f"final_probs must have shape ({num_states},), got {finals.shape}"
            )
        if not np.all(np.isfinite(finals)):
            raise ValueError("final_probs must be finite")
        if np.any(finals < 0.0) or np.any(finals > 1.0):
            raise ValueError("final_probs entries must lie in [0, 1]")
        if not np.any(finals > 0.0):
            raise ValueError("graph accepts nothing: no state has final_prob > 0")

        from_states: list[int] = []
        to_states: list[int] = []
        pdf_ids: list[int] = []
        probs: list[float] = []
        dropped = 0
        for k, arc in enumerate(transitions):
            if isinstance(arc, Transition):
                sf, st, d, p = arc.from_state, arc.to_state, arc.pdf_id, arc.prob
            else:
                sf, st, d, p = arc
            if not 0 <= sf < num_states:
                raise ValueError(f"transition {k}: from_state {sf} out of range")
            if not 0 <= st < num_states:
                raise ValueError(f"transition {k}: to_state {st} out of range")
            if not 0 <= d < num_pdfs:
                raise ValueError(
                    f"transition {k}: pdf_id {d} out of range [0, {num_pdfs})"
                )
            p = float(p)
            if not np.isfinite(p) or p < 0.0:
                raise ValueError(f"transition {k}: invalid probability {p}")
            if p == 0.0:
                dropped += 1
                continue
            from_states.append(sf)
            to_states.append(st)
            pdf_ids.append(d)
            probs.append(p)

        sf_arr = np.asarray(from_states, dtype=INDEX_DTYPE)
        st_arr = np.asarray(to_states, dtype=INDEX_DTYPE)
        d_arr = np.asarray(pdf_ids, dtype=INDEX_DTYPE)
        p_arr = np.asarray(probs, dtype=np.float64)

        fwd_order = np.argsort(sf_arr, kind="stable")
        bwd_order = np.argsort(st_arr, kind="stable")

        self.num_states = int(num_states)
        self.num_pdfs = int(num_pdfs)
        self.initial_state = int(initial_state)
        self.dropped_transitions = dropped
        self.final_probs = _freeze(finals)

        self.forward_from = _freeze(sf_arr[fwd_order])
        self.forward_to = _freeze(st_arr[fwd_order])
        self.forward_pdf = _freeze(d_arr[fwd_order])
        self.forward_probs = _freeze(p_arr[fwd_order])
        self.forward_index = _freeze(self._ranges(self.forward_from, num_states))

        self.backward_from = _freeze(sf_arr[bwd_order])
        self.backward_to = _freeze(st_arr[bwd_order])
        self.backward_pdf = _freeze(d_arr[bwd_order])
        self.backward_probs = _freeze(p_arr[bwd_order])
        self.backward_index = _freeze(self._ranges(self.backward_to, num_states))

        self._check_connectivity()

    @staticmethod
    def _ranges(sorted_keys: np.ndarray, num_states: int) -> np.ndarray:
        counts = np.bincount(sorted_keys, minlength=num_states)
        bounds = np.zeros(num_states + 1, dtype=np.int64)
        np.cumsum(counts, out=bounds[1:])
        ranges = np.stack([bounds[:-1], bounds[1:]], axis=1)
        return ranges.astype(INDEX_DTYPE)

    def _check_connectivity(self) -> None:
        reachable = np.zeros(self.num_states, dtype=bool)
        stack = [self.initial_state]
        reachable[self.initial_state] = True
        while stack:
            s = stack.pop()
            lo, hi = self.forward_index[s]
            for st in self.forward_to[lo:hi]:
                if not reachable[st]:
                    reachable[st] = True
                    stack.append(int(st))
        if not reachable.all():
            bad = int(np.flatnonzero(~reachable)[0])
            raise ValueError(
                f"state {bad} is not reachable from initial state {self.initial_state}"
            )

        coaccessible = self.final_probs > 0.0
        stack = list(np.flatnonzero(coaccessible))
        while stack:
            s = stack.pop()
            lo, hi = self.backward_index[s]
            for sf in self.backward_from[lo:hi]:
                if not coaccessible[sf]:
                    coaccessible[sf] = True
                    stack.append(int(sf))
        if not coaccessible.all():
            bad = int(np.flatnonzero(~coaccessible)[0])
            raise ValueError(
                f"state {bad} cannot reach any state with positive final probability"
            )

    @property
    def num_transitions(self) -> int:
        return int(self.forward_probs.shape[0])

    def transitions(self) -> Iterator[Transition]:
        """Yield the transitions in from-state-sorted order."""
        for sf, st, d, p in zip(
            self.forward_from, self.forward_to, self.forward_pdf, self.forward_probs
        ):
            yield Transition(int(sf), int(st), int(d), float(p))

    def __repr__(self) -> str:
        return (
            f"ChainGraph(states={self.num_states}, transitions="
            f"{self.num_transitions}, pdfs={self.num_pdfs})"
        )


class ChainGraphBatch:
    """Zero-padded batch view over one or more :class:`ChainGraph` objects.

    Built either from a list of per-item graphs (typical for numerators) or
    by broadcasting a single shared graph (typical for the denominator).
    Physical storage has one row per distinct graph; ``row_map`` maps each
    logical batch item to its physical row, so a broadcast batch stores the
    graph once regardless of the batch size.

    Padding beyond each graph's true ``(num_transitions, num_states)`` is
    all-zeros and is never read by the recursions: padded per-state index
    ranges are empty and padded transition rows carry probability zero.
    """

    def __init__(self) -> None:
        raise TypeError(
            "use ChainGraphBatch.from_graphs(...) or ChainGraphBatch.broadcast(...)"
        )

    @classmethod
    def _build(cls, graphs: Sequence[ChainGraph], row_map: np.ndarray, is_broadcast: bool) -> "ChainGraphBatch":
        self = object.__new__(cls)
        rows = [graphs[0]] if is_broadcast else list(graphs)
        num_pdfs = rows[0].num_pdfs
        for g in rows[1:]:
            if g.num_pdfs != num_pdfs:
                raise ValueError(
                    f"all graphs must share num_pdfs: got {g.num_pdfs} and {num_pdfs}"
                )

        g_count = len(rows)
        i_max = max(g.num_transitions for g in rows)
        s_max = max(g.num_states for g in rows)

        def padded(dtype) -> np.ndarray:
            return np.zeros((g_count, i_max), dtype=dtype)

        self.forward_from = padded(INDEX_DTYPE)
        self.forward_to = padded(INDEX_DTYPE)
        self.forward_pdf = padded(INDEX_DTYPE)
        self.forward_probs = padded(np.float64)
        self.backward_from = padded(INDEX_DTYPE)
        self.backward_to = padded(INDEX_DTYPE)
        self.backward_pdf = padded(INDEX_DTYPE)
        self.backward_probs = padded(np.float64)
        self.forward_index = np.zeros((g_count, s_max, 2), dtype=INDEX_DTYPE)
        self.backward_index = np.zeros((g_count, s_max, 2), dtype=INDEX_DTYPE)
        self.final_probs = np.zeros((g_count, s_max), dtype=np.float64)
        self.initial_states = np.zeros(g_count, dtype=INDEX_DTYPE)

        for r, g in enumerate(rows):
            n, s = g.num_transitions, g.num_states
            self.forward_from[r, :n] = g.forward_from
            self.forward_to[r, :n] = g.forward_to
            self.forward_pdf[r, :n] = g.forward_pdf
            self.forward_probs[r, :n] = g.forward_probs
            self.backward_from[r, :n] = g.backward_from
            self.backward_to[r, :n] = g.backward_to
            self.backward_pdf[r, :n] = g.backward_pdf
            self.backward_probs[r, :n] = g.backward_probs
            self.forward_index[r, :s] = g.forward_index
            self.backward_index[r, :s] = g.backward_index
            self.final_probs[r, :s] = g.final_probs
            self.initial_states[r] = g.initial_state

        for name in (
            "forward_from", "forward_to", "forward_pdf", "forward_probs",
            "backward_from", "backward_to", "backward_pdf", "backward_probs",
            "forward_index", "backward_index", "final_probs", "initial_states",
        ):
            _freeze(getattr(self, name))

        self._graphs = tuple(graphs)
        self.batch_size = len(graphs)
        self.num_pdfs = num_pdfs
        self.is_broadcast = is_broadcast
        self.max_transitions = i_max
        self.max_states = s_max
        self.row_map = _freeze(row_map)
        self.item_num_states = _freeze(
            np.asarray([g.num_states for g in graphs], dtype=np.int64)
        )
        self.item_num_transitions = _freeze(
            np.asarray([g.num_transitions for g in graphs], dtype=np.int64)
        )
        return self

    @classmethod
    def from_graphs(cls, graphs: Sequence[ChainGraph]) -> "ChainGraphBatch":
        """Batch a list of per-item graphs, zero-padding to the largest sizes."""
        graphs = list(graphs)
        if not graphs:
            raise ValueError("cannot batch an empty list of graphs")
        row_map = np.arange(len(graphs), dtype=np.int64)
        return cls._build(graphs, row_map, is_broadcast=False)

    @classmethod
    def broadcast(cls, graph: ChainGraph, batch_size: int) -> "ChainGraphBatch":
        """Share one graph across ``batch_size`` items without copying it."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        row_map = np.zeros(batch_size, dtype=np.int64)
        return cls._build([graph] * batch_size, row_map, is_broadcast=True)

    def graph(self, item: int) -> ChainGraph:
        """Return the graph of one logical batch item."""
        return self._graphs[item]

    def __len__(self) -> int:
        return self.batch_size

    def __repr__(self) -> str:
        kind = "broadcast" if self.is_broadcast else "list"
        return (
            f"ChainGraphBatch({kind}, batch={self.batch_size}, "
            f"max_states={self.max_states}, max_transitions={self.max_transitions})"
        )
