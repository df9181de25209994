"""Batched probability-space forward-backward over chain graph batches.

The forward recursion propagates path probability mass through each item's
graph, multiplies final probabilities at the item's own last frame (not at
the padded maximum length), optionally applies leaky smoothing, and then
normalizes each trellis column, recording the log of the normalizer. The
per-utterance log-probability is the sum of those per-frame log scale
factors. The backward pass is the exact adjoint of the forward computation
(including the leak), reusing the forward scale factors, so that the
occupation posteriors are exactly the derivative of each item's
log-probability with respect to its log-likelihoods.

An item whose trellis column total falls below ``scale_floor`` (typically
because the graph accepts no path of that length) is marked failed at the
offending frame and excluded from further computation; other items in the
batch are unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .batching import LogLikBatch
from .graph import ChainGraphBatch

__all__ = [
    "FBOptions",
    "ForwardResult",
    "FBResult",
    "forward",
    "backward",
    "occupation_posteriors",
    "forward_backward",
]


@dataclass(frozen=True)
class FBOptions:
    """Knobs of the forward-backward recursion.

    ``leak_coefficient`` adds ``leak * pi[s] * total`` to every state after
    each frame's update, smearing a little mass across the graph so sparse
    graphs cannot strand the recursion at an exact zero. ``leak_distribution``
    defaults to uniform over each graph's own states; a custom one must be
    non-negative with unit sum per item. Items whose column total drops
    below ``scale_floor`` are marked numerically failed.
    """

    leak_coefficient: float = 1e-5
    leak_distribution: np.ndarray | None = None
    scale_floor: float = 1e-300

    def __post_init__(self) -> None:
        if not np.isfinite(self.leak_coefficient) or self.leak_coefficient < 0.0:
            raise ValueError(f"leak_coefficient must be >= 0, got {self.leak_coefficient}")
        if not np.isfinite(self.scale_floor) or self.scale_floor <= 0.0:
            raise ValueError(f"scale_floor must be positive, got {self.scale_floor}")


@dataclass
class ForwardResult:
    """Output of :func:`forward`.

    ``log_probs[b]`` is ``ln P(X_b | G_b)`` (NaN for failed items);
    ``alpha`` is the scaled trellis of shape ``(B, T_max + 1, S_max)``;
    ``scale_logs[b, t]`` the per-frame log scale factor (zero on padding);
    ``failure_frames[b]`` the 0-based frame where item ``b`` failed, or -1.

    ``emission_probs`` and ``frame_scales`` are the shifted emission
    probabilities and raw column normalizers consumed by :func:`backward`
    and :func:`occupation_posteriors`.
    """

    log_probs: np.ndarray
    alpha: np.ndarray
    scale_logs: np.ndarray
    failure_frames: np.ndarray
    emission_probs: np.ndarray
    frame_scales: np.ndarray


@dataclass
class FBResult:
    """Bundled forward-backward output for one graph batch.

    ``posteriors[b, t, d]`` is the occupation probability of pdf ``d`` at
    valid frame ``t`` (rows sum to 1; padded and failed rows are zero), and
    equals ``d log_probs[b] / d L[b, t, d]`` for the recursion as computed,
    leak included. ``alpha``/``beta`` are retained only when requested.
    """

    log_probs: np.ndarray
    posteriors: np.ndarray
    scale_logs: np.ndarray
    failure_frames: np.ndarray
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None

    @property
    def num_failed(self) -> int:
        return int(np.count_nonzero(self.failure_frames >= 0))


def _check_compatible(batch: LogLikBatch, graphs: ChainGraphBatch) -> None:
    if batch.batch_size != graphs.batch_size:
        raise ValueError(
            f"batch size mismatch: {batch.batch_size} sequences vs "
            f"{graphs.batch_size} graphs"
        )
    if batch.num_pdfs != graphs.num_pdfs:
        raise ValueError(
            f"pdf dimension mismatch: batch has {batch.num_pdfs}, "
            f"graphs have {graphs.num_pdfs}"
        )


def _emissions(batch: LogLikBatch) -> tuple[np.ndarray, np.ndarray]:
    """Shifted emission probabilities and per-frame shifts, padding untouched."""
    expl = np.zeros_like(batch.values)
    shifts = np.zeros((batch.batch_size, batch.max_length), dtype=np.float64)
    for b in range(batch.batch_size):
        n = int(batch.lengths[b])
        valid = batch.values[b, :n]
        m = valid.max(axis=1)
        shifts[b, :n] = m
        np.exp(valid - m[:, None], out=expl[b, :n])
    return expl, shifts


def _leak_distribution(graphs: ChainGraphBatch, opts: FBOptions) -> np.ndarray:
    rows = graphs.final_probs.shape[0]
    s_max = graphs.max_states
    custom = opts.leak_distribution
    if custom is None:
        pi = np.zeros((rows, s_max), dtype=np.float64)
        for r in range(rows):
            n = graphs.item_num_states[0] if graphs.is_broadcast else graphs.item_num_states[r]
            pi[r, :n] = 1.0 / float(n)
        return pi

    arr = np.asarray(custom, dtype=np.float64)
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (graphs.batch_size, arr.shape[0]))
    if arr.shape != (graphs.batch_size, s_max):
        raise ValueError(
            f"leak_distribution must have shape ({graphs.batch_size}, {s_max}) "
            f"or ({s_max},), got {np.asarray(custom).shape}"
        )
    pi = np.zeros((rows, s_max), dtype=np.float64)
    for b in range(graphs.batch_size):
        n = int(graphs.item_num_states[b])
        row = arr[b]
        if np.any(row < 0.0) or np.any(row[n:] != 0.0):
            raise ValueError(f"leak_distribution item {b}: negative or padded-state mass")
        if abs(row[:n].sum() - 1.0) > 1e-12:
            raise ValueError(f"leak_distribution item {b}: must sum to 1")
        r = int(graphs.row_map[b])
        if np.any(pi[r] != 0.0) and not np.array_equal(pi[r], row):
            raise ValueError(
                "broadcast graph batches require one shared leak_distribution"
            )
        pi[r] = row
    return pi


def forward(
    batch: LogLikBatch,
    graphs: ChainGraphBatch,
    opts: FBOptions = FBOptions(),
) -> ForwardResult:
    """Run the forward recursion; see the module docstring for semantics."""
    _check_compatible(batch, graphs)
    expl, shifts = _emissions(batch)
    leak_pi = _leak_distribution(graphs, opts)

    b_count = batch.batch_size
    t_max = batch.max_length
    s_max = graphs.max_states

    alpha = np.zeros((b_count, t_max + 1, s_max), dtype=np.float64)
    scales = np.ones((b_count, t_max), dtype=np.float64)
    fail = np.full(b_count, -1, dtype=np.int64)

    _kernels.forward_kernel(
        expl,
        batch.lengths,
        batch.valid_batch_sizes,
        graphs.row_map,
        graphs.backward_from,
        graphs.backward_pdf,
        graphs.backward_probs,
        graphs.backward_index,
        graphs.final_probs,
        graphs.initial_states,
        float(opts.leak_coefficient),
        leak_pi,
        float(opts.scale_floor),
        alpha,
        scales,
        fail,
    )

    scale_logs = np.log(scales) + shifts
    log_probs = np.empty(b_count, dtype=np.float64)
    for b in range(b_count):
        if fail[b] >= 0:
            log_probs[b] = np.nan
        else:
            log_probs[b] = scale_logs[b, : batch.lengths[b]].sum()

    return ForwardResult(
        log_probs=log_probs,
        alpha=alpha,
        scale_logs=scale_logs,
        failure_frames=fail,
        emission_probs=expl,
        frame_scales=scales,
    )


def backward(
    batch: LogLikBatch,
    graphs: ChainGraphBatch,
    opts: FBOptions,
    fwd: ForwardResult,
) -> np.ndarray:
    """Run the backward recursion as the adjoint of a completed forward pass.

    Returns the scaled beta trellis of shape ``(B, T_max + 1, S_max)``; for
    each item, the product ``alpha[b, 0, :] . beta[b, 0, :]`` is 1 up to
    rounding, which is the forward/backward agreement invariant.
    """
    _check_compatible(batch, graphs)
    leak_pi = _leak_distribution(graphs, opts)

    beta = np.zeros_like(fwd.alpha)
    _kernels.backward_kernel(
        fwd.emission_probs,
        batch.lengths,
        batch.valid_batch_sizes,
        graphs.row_map,
        graphs.forward_to,
        graphs.forward_pdf,
        graphs.forward_probs,
        graphs.forward_index,
        graphs.final_probs,
        fwd.frame_scales,
        float(opts.leak_coefficient),
        leak_pi,
        fwd.failure_frames,
        beta,
    )
    return beta


def occupation_posteriors(
    batch: LogLikBatch,
    graphs: ChainGraphBatch,
    fwd: ForwardResult,
    beta: np.ndarray,
) -> np.ndarray:
    """Per-frame pdf occupation probabilities from matched alpha/beta passes.

    The emission consumed between trellis columns ``t`` and ``t + 1``
    belongs to output frame ``t``. Valid rows sum to 1; padded rows and
    failed items are all-zero.
    """
    _check_compatible(batch, graphs)
    gamma = np.zeros_like(batch.values)
    _kernels.posterior_kernel(
        fwd.emission_probs,
        batch.lengths,
        graphs.row_map,
        graphs.item_num_transitions,
        graphs.forward_from,
        graphs.forward_to,
        graphs.forward_pdf,
        graphs.forward_probs,
        fwd.alpha,
        beta,
        fwd.failure_frames,
        gamma,
    )
    return gamma


def forward_backward(
    batch: LogLikBatch,
    graphs: ChainGraphBatch,
    opts: FBOptions = FBOptions(),
    keep_trellis: bool = False,
) -> FBResult:
    """Forward pass, backward pass, and posteriors in one call."""
    fwd = forward(batch, graphs, opts)
    beta = backward(batch, graphs, opts, fwd)
    gamma = occupation_posteriors(batch, graphs, fwd, beta)
    return FBResult(
        log_probs=fwd.log_probs,
        posteriors=gamma,
        scale_logs=fwd.scale_logs,
        failure_frames=fwd.failure_frames,
        alpha=fwd.alpha if keep_trellis else None,
        beta=beta if keep_trellis else None,
    )
