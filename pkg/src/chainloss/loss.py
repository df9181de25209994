"""Maximum-mutual-information sequence objective over chain graph batches.

The objective of a batch is the sum over utterances of the reference
graph's log-probability minus the competing-hypotheses graph's
log-probability; its gradient with respect to the per-frame pdf
log-likelihoods is the difference of the two graphs' occupation posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .batching import LogLikBatch
from .forward_backward import FBOptions, forward_backward
from .graph import ChainGraphBatch

__all__ = ["ChainLossResult", "chain_loss"]


@dataclass
class ChainLossResult:
    """Objective, loss, and gradient of one batch, in sorted batch order.

    ``objective`` is the summed log-probability ratio over the utterances
    that completed numerically; ``loss`` is its negation, divided by the
    total number of valid frames when per-frame normalization was requested.
    ``grad[b, t, d]`` is the derivative of ``objective`` with respect to the
    log-likelihoods; rows of failed items and padded frames are zero.
    ``per_utt`` holds ``(num_logprob, den_logprob)`` pairs with NaN marking
    the side that failed.
    """

    objective: float
    loss: float
    grad: np.ndarray
    per_utt: list[tuple[float, float]]
    num_failed: int


def chain_loss(
    batch: LogLikBatch,
    numerators: ChainGraphBatch,
    denominator: ChainGraphBatch,
    opts: FBOptions = FBOptions(),
    normalize_by_frames: bool = True,
) -> ChainLossResult:
    """Compute the MMI objective and its gradient for one batch.

    ``numerators`` is a per-item graph batch aligned with the sorted batch
    order; ``denominator`` is typically a broadcast batch sharing one graph.
    Utterances for which either recursion fails numerically contribute zero
    gradient and are excluded from the objective (and from the frame count
    used for normalization); if every utterance fails, a ``RuntimeError`` is
    raised.
    """
    num_fb = forward_backward(batch, numerators, opts)
    den_fb = forward_backward(batch, denominator, opts)

    failed = (num_fb.failure_frames >= 0) | (den_fb.failure_frames >= 0)
    ok = ~failed
    if not ok.any():
        raise RuntimeError(f"all {batch.batch_size} utterances failed numerically")

    objective = float((num_fb.log_probs[ok] - den_fb.log_probs[ok]).sum())
    grad = num_fb.posteriors - den_fb.posteriors
    if failed.any():
        grad[failed] = 0.0

    total_frames = int(batch.lengths[ok].sum())
    loss = -objective / total_frames if normalize_by_frames else -objective

    per_utt = [
        (float(num_fb.log_probs[b]), float(den_fb.log_probs[b]))
        for b in range(batch.batch_size)
    ]
    return ChainLossResult(
        objective=objective,
        loss=loss,
        grad=grad,
        per_utt=per_utt,
        num_failed=int(np.count_nonzero(failed)),
    )
