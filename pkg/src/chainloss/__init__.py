"""Lattice-free MMI sequence loss over sparse chain HMM graphs.

The library computes, for batches of variable-length utterances, the
log-probability of the per-frame network scores under reference and
competing-hypotheses HMM graphs, the resulting discriminative objective,
and its analytic gradient, using a batched probability-space
forward-backward recursion with per-frame scaling and optional leaky
smoothing. Brute-force oracles, a toy graph builder, text FST and binary
array formats, and a CLI round it out.
"""

from ._kernels import get_num_threads, set_num_threads
from .array_io import read_array, write_array
from .batching import LogLikBatch, make_batch, unsort
from .forward_backward import (
    FBOptions,
    FBResult,
    ForwardResult,
    backward,
    forward,
    forward_backward,
    occupation_posteriors,
)
from .fst_io import FstParseError, parse_fst_text, serialize_fst_text
from .graph import ChainGraph, ChainGraphBatch, Transition
from .loss import ChainLossResult, chain_loss
from .oracle import (
    brute_logprob,
    brute_posteriors,
    enumerate_paths,
    finite_diff_grad,
)
from .toy_builder import (
    BigramLM,
    PhoneTopology,
    build_denominator,
    build_numerator,
    estimate_bigram,
    load_phone_table,
    parse_transcripts,
)

__version__ = "0.1.0"

__all__ = [
    "BigramLM",
    "ChainGraph",
    "ChainGraphBatch",
    "ChainLossResult",
    "FBOptions",
    "FBResult",
    "ForwardResult",
    "FstParseError",
    "LogLikBatch",
    "PhoneTopology",
    "Transition",
    "backward",
    "brute_logprob",
    "brute_posteriors",
    "build_denominator",
    "build_numerator",
    "chain_loss",
    "enumerate_paths",
    "estimate_bigram",
    "finite_diff_grad",
    "forward",
    "forward_backward",
    "get_num_threads",
    "load_phone_table",
    "make_batch",
    "occupation_posteriors",
    "parse_fst_text",
    "parse_transcripts",
    "read_array",
    "serialize_fst_text",
    "set_num_threads",
    "unsort",
    "write_array",
    "__version__",
]
