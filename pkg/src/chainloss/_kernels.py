"""Compiled kernels for the batched probability-space recursions.

Parallel decomposition: within one time step the forward pass is partitioned
by (item, to-state) over the to-state-sorted transition layout and the
backward pass by (item, from-state) over the from-state-sorted layout, so
every parallel unit owns its output cell exclusively and accumulates its
transition range in a fixed order. Results are therefore bit-identical for
any thread count. The time loop itself is sequential.

All kernels take the shifted emission probabilities ``expl[b, t, d] =
exp(L[b, t, d] - max_d L[b, t, :])``; the per-frame shifts are folded back
into the recorded per-frame log scale factors by the caller, which leaves
every published quantity exactly equal to its unshifted definition while
keeping the arithmetic in a safe range.
"""

from __future__ import annotations

import os

os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))
# OpenMP avoids numba's TBB-version probe warning and supports mid-process
# thread-count changes; results never depend on the layer or thread count.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numba
import numpy as np
from numba import njit, prange

__all__ = [
    "forward_kernel",
    "backward_kernel",
    "posterior_kernel",
    "set_num_threads",
    "get_num_threads",
]


def set_num_threads(count: int) -> None:
    """Set the worker thread count for the compiled kernels.

    Values above the process-wide maximum (``NUMBA_NUM_THREADS``, at least 8
    here) are clamped to it. Thread count affects speed only, never results.
    """
    if count < 1:
        raise ValueError(f"thread count must be >= 1, got {count}")
    numba.set_num_threads(min(count, numba.config.NUMBA_NUM_THREADS))


def get_num_threads() -> int:
    return numba.get_num_threads()


@njit(cache=True, parallel=True)
def forward_kernel(
    expl,          # (B, T, D) shifted emission probs, zero on padding
    lengths,       # (B,) int64, non-increasing
    bvalid,        # (T,) int64 valid batch size per step
    row_map,       # (B,) int64 item -> graph row
    bw_from,       # (G, I) uint32, to-state-sorted layout
    bw_pdf,        # (G, I) uint32
    bw_prob,       # (G, I) float64
    bw_index,      # (G, S, 2) uint32 per-to-state ranges
    final_probs,   # (G, S) float64
    init_states,   # (G,) uint32
    leak,          # float
    leak_pi,       # (G, S) float64, zero on padded states
    scale_floor,   # float
    alpha,         # (B, T+1, S) float64, zero-initialized, written
    scales,        # (B, T) float64, one-initialized, written
    fail_frames,   # (B,) int64, -1-initialized, written
):
    batch, t_max, _ = expl.shape
    n_states = alpha.shape[2]

    for b in range(batch):
        alpha[b, 0, init_states[row_map[b]]] = 1.0

    for t in range(1, t_max + 1):
        active = bvalid[t - 1]

        for u in prange(active * n_states):
            b = u // n_states
            s = u % n_states
            if fail_frames[b] >= 0:
                continue
            g = row_map[b]
            lo = bw_index[g, s, 0]
            hi = bw_index[g, s, 1]
            acc = 0.0
            for i in range(lo, hi):
                acc += (
                    bw_prob[g, i]
                    * alpha[b, t - 1, bw_from[g, i]]
                    * expl[b, t - 1, bw_pdf[g, i]]
                )
            if t == lengths[b]:
                acc *= final_probs[g, s]
            alpha[b, t, s] = acc

        for b in prange(active):
            if fail_frames[b] >= 0:
                continue
            g = row_map[b]
            total = 0.0
            for s in range(n_states):
                total += alpha[b, t, s]
            if leak > 0.0 and total > 0.0:
                for s in range(n_states):
                    alpha[b, t, s] += leak * leak_pi[g, s] * total
                total = 0.0
                for s in range(n_states):
                    total += alpha[b, t, s]
            if not (total >= scale_floor) or total == np.inf:
                fail_frames[b] = t - 1
                for s in range(n_states):
                    alpha[b, t, s] = 0.0
                continue
            inv = 1.0 / total
            for s in range(n_states):
                alpha[b, t, s] *= inv
            scales[b, t - 1] = total


@njit(cache=True, parallel=True)
def backward_kernel(
    expl,          # (B, T, D)
    lengths,       # (B,) int64
    bvalid,        # (T,) int64
    row_map,       # (B,) int64
    fw_to,         # (G, I) uint32, from-state-sorted layout
    fw_pdf,        # (G, I) uint32
    fw_prob,       # (G, I) float64
    fw_index,      # (G, S, 2) uint32 per-from-state ranges
    final_probs,   # (G, S) float64
    scales,        # (B, T) float64 from the forward pass
    leak,          # float
    leak_pi,       # (G, S) float64
    fail_frames,   # (B,) int64 from the forward pass
    beta,          # (B, T+1, S) float64, zero-initialized, written
):
    t_max = expl.shape[1]
    n_states = beta.shape[2]

    for t in range(t_max, 0, -1):
        active = bvalid[t - 1]

        # Items whose last frame is t start their recursion here: the final
        # probabilities enter the trellis at each item's own last column,
        # scaled by that column's forward scale factor. The (1 + leak)
        # factor is the adjoint of the last column's leak update.
        for b in prange(active):
            if fail_frames[b] >= 0 or lengths[b] != t:
                continue
            g = row_map[b]
            factor = (1.0 + leak) / scales[b, t - 1]
            for s in range(n_states):
                beta[b, t, s] = final_probs[g, s] * factor

        for u in prange(active * n_states):
            b = u // n_states
            s = u % n_states
            if fail_frames[b] >= 0:
                continue
            g = row_map[b]
            lo = fw_index[g, s, 0]
            hi = fw_index[g, s, 1]
            acc = 0.0
            for i in range(lo, hi):
                acc += (
                    fw_prob[g, i]
                    * expl[b, t - 1, fw_pdf[g, i]]
                    * beta[b, t, fw_to[g, i]]
                )
            beta[b, t - 1, s] = acc

        if t - 1 >= 1:
            for b in prange(active):
                if fail_frames[b] >= 0:
                    continue
                g = row_map[b]
                if leak > 0.0:
                    dot = 0.0
                    for s in range(n_states):
                        dot += leak_pi[g, s] * beta[b, t - 1, s]
                    add = leak * dot
                    for s in range(n_states):
                        beta[b, t - 1, s] += add
                inv = 1.0 / scales[b, t - 2]
                for s in range(n_states):
                    beta[b, t - 1, s] *= inv


@njit(cache=True, parallel=True)
def posterior_kernel(
    expl,          # (B, T, D)
    lengths,       # (B,) int64
    row_map,       # (B,) int64
    item_ntrans,   # (B,) int64 true transition counts
    fw_from,       # (G, I) uint32
    fw_to,         # (G, I) uint32
    fw_pdf,        # (G, I) uint32
    fw_prob,       # (G, I) float64
    alpha,         # (B, T+1, S)
    beta,          # (B, T+1, S)
    fail_frames,   # (B,) int64
    gamma,         # (B, T, D) float64, zero-initialized, written
):
    batch, t_max, _ = expl.shape

    for u in prange(batch * t_max):
        b = u // t_max
        t = u % t_max
        if t >= lengths[b] or fail_frames[b] >= 0:
            continue
        g = row_map[b]
        for i in range(item_ntrans[b]):
            d = fw_pdf[g, i]
            gamma[b, t, d] += (
                alpha[b, t, fw_from[g, i]]
                * fw_prob[g, i]
                * expl[b, t, d]
                * beta[b, t + 1, fw_to[g, i]]
            )
