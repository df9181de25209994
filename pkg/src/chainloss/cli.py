"""Command-line surface over the library.

Subcommands: ``loss``, ``grad``, ``gradcheck``, ``make-num``, ``make-den``,
``train-demo``. Exit codes: 0 on success, 1 on usage or I/O errors, 2 when
any utterance failed numerically (or a gradcheck run exceeds tolerance).
All subcommands are deterministic for a fixed ``--seed``.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from ._kernels import set_num_threads
from .array_io import read_array, write_array
from .batching import LogLikBatch, make_batch, unsort
from .demo import train_demo
from .forward_backward import FBOptions
from .fst_io import parse_fst_text, serialize_fst_text
from .graph import ChainGraphBatch
from .loss import ChainLossResult, chain_loss
from .oracle import gradcheck_trials
from .toy_builder import (
    PhoneTopology,
    estimate_bigram,
    build_denominator,
    build_numerator,
    load_phone_table,
    parse_transcripts,
)

__all__ = ["main"]

GRADCHECK_TOLERANCE = 1e-6


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's 2
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chainloss", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_batch_io(p: argparse.ArgumentParser) -> None:
        p.add_argument("--logits", required=True,
                       help="PCTN file with a (B, T, D) batch, or a comma-separated "
                            "list of per-utterance (T, D) PCTN files")
        p.add_argument("--lengths",
                       help="sidecar file with one frame count per line "
                            "(only with a single batched --logits file)")
        p.add_argument("--num-fsts", required=True,
                       help="directory of *.fst numerator files (sorted by name) "
                            "or a comma-separated list of files")
        p.add_argument("--den-fst", required=True, help="denominator text FST")
        p.add_argument("--leak", type=float, default=1e-5,
                       help="leaky smoothing coefficient (default 1e-5)")
        p.add_argument("--per-frame", action="store_true",
                       help="report the loss divided by the total valid frames")
        p.add_argument("--threads", type=int, help="worker thread count")

    p_loss = sub.add_parser("loss", help="compute the batch objective")
    add_batch_io(p_loss)
    p_loss.set_defaults(func=_cmd_loss)

    p_grad = sub.add_parser("grad", help="compute and write the gradient")
    add_batch_io(p_grad)
    p_grad.add_argument("--out", required=True, help="output PCTN path for the gradient")
    p_grad.set_defaults(func=_cmd_grad)

    p_check = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--trials", type=int, default=50)
    p_check.add_argument("--leak", type=float, default=1e-5)
    p_check.add_argument("--threads", type=int)
    p_check.set_defaults(func=_cmd_gradcheck)

    def add_builder_opts(p: argparse.ArgumentParser, with_silence: bool) -> None:
        p.add_argument("--corpus", required=True, help="transcript file")
        p.add_argument("--phones", required=True, help="phone table file")
        p.add_argument("--self-loop-prob", type=float, default=0.5)
        if with_silence:
            p.add_argument("--silence", help="phone name to insert as silence")
            p.add_argument("--sil-between", type=float, default=0.2)
            p.add_argument("--sil-boundary", type=float, default=0.8)
            p.add_argument("--smoothing", type=float, default=0.1)

    p_num = sub.add_parser("make-num", help="write per-utterance numerator FSTs")
    add_builder_opts(p_num, with_silence=True)
    p_num.add_argument("--out-dir", required=True)
    p_num.add_argument("--den-weights", action="store_true",
                       help="re-weight arcs with the denominator LM so every "
                            "numerator path is a denominator path")
    p_num.set_defaults(func=_cmd_make_num)

    p_den = sub.add_parser("make-den", help="write the denominator FST")
    add_builder_opts(p_den, with_silence=True)
    p_den.add_argument("--out", required=True)
    p_den.set_defaults(func=_cmd_make_den)

    p_demo = sub.add_parser("train-demo", help="train the synthetic toy model")
    p_demo.add_argument("--corpus", required=True)
    p_demo.add_argument("--phones", required=True)
    p_demo.add_argument("--frames-per-phone", type=int, default=8)
    p_demo.add_argument("--epochs", type=int, default=150)
    p_demo.add_argument("--lr", type=float, default=6.0)
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.add_argument("--leak", type=float, default=1e-5)
    p_demo.add_argument("--threads", type=int)
    p_demo.set_defaults(func=_cmd_train_demo)

    return parser


def _maybe_set_threads(args) -> None:
    if getattr(args, "threads", None) is not None:
        set_num_threads(args.threads)


def _load_batch(args) -> LogLikBatch:
    paths = args.logits.split(",")
    if len(paths) == 1:
        values = read_array(paths[0])
        if values.ndim != 3:
            raise UsageError(
                f"{paths[0]}: expected a (B, T, D) array, got {values.ndim} dimensions"
            )
        batch, t_max, _ = values.shape
        if args.lengths:
            lengths = []
            for lineno, line in enumerate(Path(args.lengths).read_text().splitlines(), 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    lengths.append(int(line))
                except ValueError:
                    raise UsageError(f"{args.lengths}:{lineno}: not an integer: {line!r}")
            if len(lengths) != batch:
                raise UsageError(
                    f"{args.lengths}: {len(lengths)} lengths for a batch of {batch}"
                )
            for b, n in enumerate(lengths):
                if not 1 <= n <= t_max:
                    raise UsageError(f"{args.lengths}: length {n} of item {b} not in [1, {t_max}]")
        else:
            lengths = [t_max] * batch
        return make_batch([values[b, : lengths[b]] for b in range(batch)])

    if args.lengths:
        raise UsageError("--lengths is only valid with a single batched --logits file")
    sequences = []
    for path in paths:
        arr = read_array(path)
        if arr.ndim != 2:
            raise UsageError(f"{path}: expected a (T, D) array, got {arr.ndim} dimensions")
        sequences.append(arr)
    return make_batch(sequences)


def _load_graphs(args, batch: LogLikBatch) -> tuple[ChainGraphBatch, ChainGraphBatch]:
    num_pdfs = batch.num_pdfs
    spec = Path(args.num_fsts)
    if spec.is_dir():
        files = sorted(spec.glob("*.fst"))
        if not files:
            raise UsageError(f"{spec}: no *.fst files found")
    else:
        files = [Path(s) for s in args.num_fsts.split(",")]
    if len(files) != batch.batch_size:
        raise UsageError(
            f"{len(files)} numerator graphs for a batch of {batch.batch_size}"
        )
    graphs = [parse_fst_text(f.read_text(), num_pdfs) for f in files]
    graphs = [graphs[i] for i in batch.order_map]
    den = parse_fst_text(Path(args.den_fst).read_text(), num_pdfs)
    return (
        ChainGraphBatch.from_graphs(graphs),
        ChainGraphBatch.broadcast(den, batch.batch_size),
    )


def _print_report(batch: LogLikBatch, result: ChainLossResult) -> None:
    inverse = np.empty(batch.batch_size, dtype=np.int64)
    inverse[batch.order_map] = np.arange(batch.batch_size)
    for i in range(batch.batch_size):
        num_lp, den_lp = result.per_utt[int(inverse[i])]
        if math.isnan(num_lp) or math.isnan(den_lp):
            print(f"utt {i}: FAILED")
        else:
            print(f"utt {i}: num={num_lp:.10f} den={den_lp:.10f} F={num_lp - den_lp:.10f}")
    frames = batch.total_frames
    print(
        f"batch: F={result.objective:.10f} loss={result.loss:.10f} "
        f"frames={frames} failed={result.num_failed}"
    )


def _run_loss(args) -> tuple[LogLikBatch, ChainLossResult | None]:
    _maybe_set_threads(args)
    batch = _load_batch(args)
    numerators, denominator = _load_graphs(args, batch)
    opts = FBOptions(leak_coefficient=args.leak)
    try:
        result = chain_loss(batch, numerators, denominator, opts,
                            normalize_by_frames=args.per_frame)
    except RuntimeError as exc:  # every utterance failed numerically
        print(f"error: {exc}", file=sys.stderr)
        return batch, None
    return batch, result


def _cmd_loss(args) -> int:
    batch, result = _run_loss(args)
    if result is None:
        return 2
    _print_report(batch, result)
    return 2 if result.num_failed else 0


def _cmd_grad(args) -> int:
    batch, result = _run_loss(args)
    if result is None:
        return 2
    _print_report(batch, result)
    write_array(args.out, unsort(result.grad, batch.order_map))
    print(f"wrote {args.out}")
    return 2 if result.num_failed else 0


def _cmd_gradcheck(args) -> int:
    _maybe_set_threads(args)
    if args.trials < 1:
        raise UsageError(f"--trials must be >= 1, got {args.trials}")
    errors = gradcheck_trials(args.seed, args.trials, leak=args.leak)
    for k, err in enumerate(errors):
        print(f"trial {k}: rel_err={err:.3e}")
    worst = max(errors)
    passed = worst < GRADCHECK_TOLERANCE
    print(
        f"gradcheck: trials={args.trials} max_rel_err={worst:.3e} "
        f"-> {'PASS' if passed else 'FAIL'}"
    )
    return 0 if passed else 2


def _load_builder_inputs(args):
    table = load_phone_table(Path(args.phones).read_text())
    corpus = parse_transcripts(Path(args.corpus).read_text(), table)
    topology = PhoneTopology(len(table), args.self_loop_prob)
    return table, corpus, topology


def _estimate_lm(args, table, corpus):
    silence = None
    if args.silence is not None:
        if args.silence not in table:
            raise UsageError(f"silence phone {args.silence!r} is not in the phone table")
        silence = table[args.silence]
    return estimate_bigram(
        corpus,
        silence=silence,
        sil_between=args.sil_between,
        sil_boundary=args.sil_boundary,
        smoothing=args.smoothing,
    )


def _cmd_make_num(args) -> int:
    table, corpus, topology = _load_builder_inputs(args)
    lm = _estimate_lm(args, table, corpus) if args.den_weights else None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for u, utterance in enumerate(corpus):
        phones = [p for word in utterance for p in word]
        graph = build_numerator(phones, topology, lm)
        path = out_dir / f"utt{u:04d}.fst"
        path.write_text(serialize_fst_text(graph))
        print(f"wrote {path}")
    return 0


def _cmd_make_den(args) -> int:
    table, corpus, topology = _load_builder_inputs(args)
    lm = _estimate_lm(args, table, corpus)
    graph = build_denominator(lm, topology)
    Path(args.out).write_text(serialize_fst_text(graph))
    print(
        f"wrote {args.out} (states={graph.num_states}, "
        f"transitions={graph.num_transitions})"
    )
    return 0


def _cmd_train_demo(args) -> int:
    _maybe_set_threads(args)
    table = load_phone_table(Path(args.phones).read_text())
    corpus = parse_transcripts(Path(args.corpus).read_text(), table)
    result = train_demo(
        corpus,
        num_phones=len(table),
        frames_per_phone=args.frames_per_phone,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
        leak=args.leak,
    )
    for e, loss in enumerate(result.losses, start=1):
        print(f"epoch {e}/{args.epochs} loss={loss:.6f}")
    print(f"frame accuracy: {result.accuracy:.4f} ({result.total_frames} frames)")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
