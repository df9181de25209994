"""Brute-force references: exact path enumeration and finite differences.

These are the independent ground truths the fast recursions are tested
against. Everything here is deliberately simple and single-threaded;
a path-count guard keeps enumeration at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .batching import LogLikBatch, make_batch
from .forward_backward import FBOptions
from .graph import ChainGraph, ChainGraphBatch
from .loss import chain_loss

__all__ = [
    "Path",
    "enumerate_paths",
    "brute_logprob",
    "brute_posteriors",
    "finite_diff_grad",
    "random_chain_graph",
    "random_loss_instance",
    "gradcheck_trials",
]

MAX_PATHS = 1_000_000


@dataclass(frozen=True)
class Path:
    """One accepting path: T+1 states, T emitted pdf ids, and its weight
    (product of arc probabilities times the final probability, emissions
    excluded)."""

    states: tuple[int, ...]
    pdf_ids: tuple[int, ...]
    prob: float


def enumerate_paths(
    graph: ChainGraph, num_frames: int, max_paths: int = MAX_PATHS
) -> list[Path]:
    """Enumerate every accepting path of exactly ``num_frames`` transitions.

    Raises ``RuntimeError`` when more than ``max_paths`` paths (or an
    excessive number of partial expansions) are encountered; shrink the
    instance in that case.
    """
    if num_frames < 1:
        raise ValueError(f"num_frames must be >= 1, got {num_frames}")

    paths: list[Path] = []
    expansions = 0
    expansion_limit = 20 * max_paths

    def visit(state: int, depth: int, states: list[int], pdfs: list[int], prob: float) -> None:
        nonlocal expansions
        if depth == num_frames:
            final = graph.final_probs[state]
            if final > 0.0:
                if len(paths) >= max_paths:
                    raise RuntimeError(
                        f"more than {max_paths} accepting paths; shrink the instance"
                    )
                paths.append(Path(tuple(states), tuple(pdfs), prob * float(final)))
            return
        lo, hi = graph.forward_index[state]
        for i in range(lo, hi):
            expansions += 1
            if expansions > expansion_limit:
                raise RuntimeError(
                    f"path enumeration exceeded {expansion_limit} expansions; "
                    "shrink the instance"
                )
            nxt = int(graph.forward_to[i])
            states.append(nxt)
            pdfs.append(int(graph.forward_pdf[i]))
            visit(nxt, depth + 1, states, pdfs, prob * float(graph.forward_probs[i]))
            states.pop()
            pdfs.pop()

    visit(graph.initial_state, 0, [graph.initial_state], [], 1.0)
    return paths


def brute_logprob(graph: ChainGraph, loglikes: np.ndarray) -> float:
    """Log of the summed weight of all accepting paths under ``loglikes``.

    ``loglikes`` has shape (T, D); the path length is T. Returns ``-inf``
    when no accepting path of that length exists.
    """
    loglikes = np.asarray(loglikes, dtype=np.float64)
    num_frames = loglikes.shape[0]
    total = 0.0
    for path in enumerate_paths(graph, num_frames):
        emission = 1.0
        for t, d in enumerate(path.pdf_ids):
            emission *= math.exp(loglikes[t, d])
        total += path.prob * emission
    return math.log(total) if total > 0.0 else -math.inf


def brute_posteriors(graph: ChainGraph, loglikes: np.ndarray) -> np.ndarray:
    """Per-frame pdf occupation probabilities by path-weighted counting."""
    loglikes = np.asarray(loglikes, dtype=np.float64)
    num_frames, num_pdfs = loglikes.shape
    gamma = np.zeros((num_frames, num_pdfs))
    total = 0.0
    for path in enumerate_paths(graph, num_frames):
        weight = path.prob
        for t, d in enumerate(path.pdf_ids):
            weight *= math.exp(loglikes[t, d])
        total += weight
        for t, d in enumerate(path.pdf_ids):
            gamma[t, d] += weight
    if total <= 0.0:
        raise ValueError(f"no accepting path of length {num_frames}")
    return gamma / total


def finite_diff_grad(
    objective: Callable[[np.ndarray], float],
    loglikes: np.ndarray,
    epsilon: float = 1e-6,
) -> np.ndarray:
    """Central finite differences of ``objective`` at ``loglikes``."""
    loglikes = np.asarray(loglikes, dtype=np.float64)
    grad = np.zeros_like(loglikes)
    for index in np.ndindex(loglikes.shape):
        bumped = loglikes.copy()
        bumped[index] += epsilon
        hi = objective(bumped)
        bumped[index] -= 2.0 * epsilon
        lo = objective(bumped)
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise ValueError(f"objective is not finite at perturbation {index}")
        grad[index] = (hi - lo) / (2.0 * epsilon)
    return grad


def random_chain_graph(
    rng: np.random.Generator,
    num_pdfs: int,
    num_frames: int | None = None,
    max_states: int = 5,
    max_transitions: int = 10,
) -> ChainGraph:
    """Sample a small random connected graph, unnormalized weights included.

    With ``num_frames`` given, rejection-sample until the graph accepts at
    least one path of exactly that many frames.
    """
    while True:
        num_states = int(rng.integers(1, max_states + 1))
        arcs: list[tuple[int, int, int, float]] = []
        for s in range(1, num_states):
            arcs.append(
                (int(rng.integers(0, s)), s, int(rng.integers(0, num_pdfs)),
                 float(rng.uniform(0.2, 1.2)))
            )
        # Self-loop on the last state so longer frame counts stay reachable.
        arcs.append(
            (num_states - 1, num_states - 1, int(rng.integers(0, num_pdfs)),
             float(rng.uniform(0.2, 1.0)))
        )
        while len(arcs) < max_transitions and rng.random() < 0.5:
            arcs.append(
                (int(rng.integers(0, num_states)), int(rng.integers(0, num_states)),
                 int(rng.integers(0, num_pdfs)), float(rng.uniform(0.2, 1.2)))
            )

        finals = np.zeros(num_states)
        finals[num_states - 1] = rng.uniform(0.2, 1.0)
        for s in range(num_states - 1):
            if rng.random() < 0.3:
                finals[s] = rng.uniform(0.2, 1.0)

        try:
            graph = ChainGraph(arcs, num_states, num_pdfs, 0, finals)
        except ValueError:
            continue
        if num_frames is not None:
            probe = np.zeros((num_frames, num_pdfs))
            if not math.isfinite(brute_logprob(graph, probe)):
                continue
        return graph


def random_loss_instance(
    rng: np.random.Generator,
    max_batch: int = 3,
    min_frames: int = 2,
    max_frames: int = 6,
    max_pdfs: int = 4,
) -> tuple[LogLikBatch, ChainGraphBatch, ChainGraphBatch]:
    """Sample a small loss instance with per-item numerators and a broadcast
    denominator, all graphs guaranteed to accept every item's length."""
    num_pdfs = int(rng.integers(2, max_pdfs + 1))
    batch_size = int(rng.integers(1, max_batch + 1))
    lengths = [int(rng.integers(min_frames, max_frames + 1)) for _ in range(batch_size)]

    sequences = [rng.normal(0.0, 1.0, size=(t, num_pdfs)) for t in lengths]
    batch = make_batch(sequences)

    numerators = [random_chain_graph(rng, num_pdfs, num_frames=t) for t in lengths]
    numerators = [numerators[i] for i in batch.order_map]

    while True:
        den = random_chain_graph(rng, num_pdfs)
        if all(
            math.isfinite(brute_logprob(den, np.zeros((t, num_pdfs))))
            for t in set(lengths)
        ):
            break

    return (
        batch,
        ChainGraphBatch.from_graphs(numerators),
        ChainGraphBatch.broadcast(den, batch_size),
    )


def gradcheck_trials(
    seed: int,
    trials: int,
    leak: float = 1e-5,
    epsilon: float = 1e-6,
) -> list[float]:
    """Finite-difference checks of the loss gradient on random instances.

    Returns one relative error per trial: the max-norm difference between
    central differences of the objective and the analytic gradient, divided
    by the larger of the two max-norms.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    opts = FBOptions(leak_coefficient=leak)
    errors: list[float] = []
    for _ in range(trials):
        batch, numerators, denominator = random_loss_instance(rng)

        def objective(values: np.ndarray) -> float:
            perturbed = LogLikBatch(
                values=values,
                lengths=batch.lengths,
                valid_batch_sizes=batch.valid_batch_sizes,
                order_map=batch.order_map,
            )
            return chain_loss(perturbed, numerators, denominator, opts).objective

        analytic = chain_loss(batch, numerators, denominator, opts).grad
        numeric = np.zeros_like(analytic)
        for b in range(batch.batch_size):
            for t in range(int(batch.lengths[b])):
                for d in range(batch.num_pdfs):
                    bumped = batch.values.copy()
                    bumped[b, t, d] += epsilon
                    hi = objective(bumped)
                    bumped[b, t, d] -= 2.0 * epsilon
                    lo = objective(bumped)
                    numeric[b, t, d] = (hi - lo) / (2.0 * epsilon)

        scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
        errors.append(float(np.abs(numeric - analytic).max() / scale))
    return errors
