"""Assembly of variable-length log-likelihood sequences into padded batches.

Sequences are sorted by length in descending order (stable, so ties keep
their input order), right-padded with zeros, and annotated with the valid
batch size at every time step: ``valid_batch_sizes[t]`` counts the sequences
whose length exceeds ``t``. Because the sort is by descending length, the
active sequences at any step are exactly the leading ``valid_batch_sizes[t]``
rows, and padded cells are never read by any downstream recursion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["LogLikBatch", "make_batch", "unsort"]


@dataclass
class LogLikBatch:
    """Padded batch of per-frame pdf log-likelihoods.

    ``values`` has shape ``(B, T_max, D)`` with rows at ``t >= lengths[b]``
    zero-padded; ``order_map[k]`` is the input position of the sequence
    stored at sorted position ``k``.
    """

    values: np.ndarray
    lengths: np.ndarray
    valid_batch_sizes: np.ndarray
    order_map: np.ndarray

    @property
    def batch_size(self) -> int:
        return int(self.values.shape[0])

    @property
    def max_length(self) -> int:
        return int(self.values.shape[1])

    @property
    def num_pdfs(self) -> int:
        return int(self.values.shape[2])

    @property
    def total_frames(self) -> int:
        return int(self.lengths.sum())


def make_batch(sequences: Sequence[np.ndarray]) -> LogLikBatch:
    """Sort, pad, and annotate a list of ``(T_b, D)`` log-likelihood arrays.

    All sequences must share ``D``, have at least one frame, and contain
    only finite values.
    """
    if len(sequences) == 0:
        raise ValueError("cannot batch an empty list of sequences")

    arrays = []
    for k, seq in enumerate(sequences):
        arr = np.asarray(seq, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"sequence {k}: expected a (T, D) array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError(f"sequence {k}: zero-length sequence")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"sequence {k}: log-likelihoods must be finite")
        arrays.append(arr)

    num_pdfs = arrays[0].shape[1]
    for k, arr in enumerate(arrays):
        if arr.shape[1] != num_pdfs:
            raise ValueError(
                f"sequence {k}: pdf dimension {arr.shape[1]} != {num_pdfs} of sequence 0"
            )

    input_lengths = np.asarray([arr.shape[0] for arr in arrays], dtype=np.int64)
    order = np.argsort(-input_lengths, kind="stable")
    lengths = input_lengths[order]

    batch = len(arrays)
    t_max = int(lengths[0])
    values = np.zeros((batch, t_max, num_pdfs), dtype=np.float64)
    for k, src in enumerate(order):
        values[k, : lengths[k]] = arrays[src]

    steps = np.arange(t_max, dtype=np.int64)
    valid = (lengths[:, None] > steps[None, :]).sum(axis=0).astype(np.int64)

    return LogLikBatch(
        values=values,
        lengths=lengths,
        valid_batch_sizes=valid,
        order_map=order.astype(np.int64),
    )


def unsort(array: np.ndarray, order_map: np.ndarray) -> np.ndarray:
    """Permute a batch-major array from sorted order back to input order."""
    order_map = np.asarray(order_map)
    if array.shape[0] != order_map.shape[0]:
        raise ValueError(
            f"batch axis {array.shape[0]} does not match order_map length {order_map.shape[0]}"
        )
    out = np.empty_like(array)
    out[order_map] = array
    return out
