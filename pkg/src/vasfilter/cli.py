"""Command-line entry point: ``vasfilter <subcommand> ...``.

Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 numerical
failure. Every successful run writes ``<out>.manifest.json`` next to its
main output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .embstore import Modality, align_pairs, atomic_write, load_embeddings
from .errors import DimMismatch, IoFailure, ValidationError, VasError
from .optdesign import a_optimal_select, random_select, v_optimal_select
from .scoring import (
    MomentMatrix,
    ScoreKind,
    clip_scores,
    format_moment,
    format_scores_csv,
    load_moment,
    read_scores_csv,
    score_stats,
    second_moment,
    vas_scores,
)
from .selection import (
    DEFAULT_CLIP_KEEP,
    DEFAULT_TAU,
    DEFAULT_VAS_KEEP,
    SelectionResult,
    StageRecord,
    format_selection,
    format_stages,
    read_index_list,
    remap_to_ids,
    resolve_count,
    two_stage_filter,
    vas_d,
)

log = logging.getLogger("vasfilter")


def blake2b64(path) -> str:
    h = hashlib.blake2b(digest_size=8)
    try:
        with open(path, "rb") as fh:
            for block in iter(lambda: fh.read(1 << 20), b""):
                h.update(block)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return h.hexdigest()


def keep_value(text: str) -> float | int:
    """``--clip-keep``/``--vas-keep``: a decimal in (0, 1] is a fraction, an integer a count."""
    t = text.strip()
    try:
        if any(c in t for c in ".eE"):
            value = float(t)
            if not 0.0 < value <= 1.0:
                raise ValueError
            return value
        value = int(t)
        if value < 1:
            raise ValueError
        return value
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{text!r} is neither a fraction in (0, 1] nor a positive count") from None


def float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma-separated list of numbers") from None


class Run:
    """Collects outputs and input digests; writes everything at the end."""

    def __init__(self, args):
        self.args = args
        self.inputs: dict[str, str] = {}
        self.outputs: list = []
        self.start = time.perf_counter()

    def read(self, path) -> Path:
        path = Path(path)
        self.inputs[str(path)] = blake2b64(path)
        return path

    def emit(self, path, payload) -> None:
        self.outputs.append((Path(path), payload))

    def defer(self, fn) -> None:
        """Run ``fn()`` only once the command has succeeded."""
        self.outputs.append((None, fn))

    def finish(self) -> None:
        for path, payload in self.outputs:
            if path is None:
                payload()
            else:
                atomic_write(path, payload)
        params = {k: v for k, v in sorted(vars(self.args).items()) if k != "func"}
        manifest = {
            "subcommand": self.args.command + (f" {self.args.sim_command}"
                                               if getattr(self.args, "sim_command", None) else ""),
            "params": {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()},
            "inputs": self.inputs,
            "version": __version__,
            "duration_ms": round((time.perf_counter() - self.start) * 1000.0, 3),
        }
        atomic_write(Path(str(self.args.out) + ".manifest.json"),
                     json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _load(run: Run, path, modality, args):
    return load_embeddings(run.read(path), expect_normalized=not args.raw, modality=modality)


def _load_prior(run: Run, args, image) -> MomentMatrix:
    if args.prior:
        prior = load_moment(run.read(args.prior))
    else:
        src = _load(run, args.prior_from, Modality.VISION, args)
        if getattr(args, "cross", False):
            if not args.prior_from_text:
                raise ValidationError("--cross with --prior-from also needs --prior-from-text")
            src_l = _load(run, args.prior_from_text, Modality.LANGUAGE, args)
            pairs = align_pairs(src, src_l)
            prior = second_moment(pairs.vision, pairs.language, label="prior", workers=args.threads)
        else:
            prior = second_moment(src, label="prior", workers=args.threads)
    if prior.d != image.d:
        raise DimMismatch(f"prior d={prior.d} vs embedding d={image.d}")
    return prior


def _emit_selection(run: Run, args, result: SelectionResult, image) -> None:
    ids = remap_to_ids(result, image) if args.emit_ids else None
    run.emit(args.out, format_selection(result, ids))
    run.emit(str(args.out) + ".stages.jsonl", format_stages(result))


def _input_set(run: Run, args, n: int) -> SelectionResult:
    if not args.input_set:
        return SelectionResult.full(n)
    idx = read_index_list(run.read(args.input_set), n)
    stage = StageRecord(f"input_set:{Path(args.input_set).name}", n, int(idx.size))
    return SelectionResult(idx, [stage], target_n=int(idx.size))


# -- subcommands ----------------------------------------------------------------------

def cmd_clipscore(args, run: Run) -> None:
    pairs = align_pairs(_load(run, args.image, Modality.VISION, args),
                        _load(run, args.text, Modality.LANGUAGE, args))
    scores = clip_scores(pairs, workers=args.threads)
    run.emit(args.out, format_scores_csv(scores, pairs.ids))


def cmd_vas(args, run: Run) -> None:
    image = _load(run, args.image, Modality.VISION, args)
    text = None
    if args.cross:
        if not args.text:
            raise ValidationError("--cross needs --text")
        text = _load(run, args.text, Modality.LANGUAGE, args)
        align_pairs(image, text)
    prior = _load_prior(run, args, image)
    scores = vas_scores(image, text, prior, workers=args.threads)
    run.emit(args.out, format_scores_csv(scores, image.ids))
    if args.save_prior:
        run.emit(args.save_prior, format_moment(prior))


def cmd_pipeline(args, run: Run) -> None:
    pairs = align_pairs(_load(run, args.image, Modality.VISION, args),
                        _load(run, args.text, Modality.LANGUAGE, args))
    prior = _load_prior(run, args, pairs.vision)
    target = resolve_count(args.vas_keep, len(pairs))
    result = two_stage_filter(pairs, prior, target, args.clip_keep,
                              clip_threshold=args.clip_threshold, workers=args.threads)
    _emit_selection(run, args, result, pairs.vision)


def cmd_vasd(args, run: Run) -> None:
    image = _load(run, args.image, Modality.VISION, args)
    start = _input_set(run, args, image.n)
    result, trace = vas_d(image, start, args.target, args.tau, workers=args.threads)
    _emit_selection(run, args, result, image)
    if args.trace:
        run.emit(args.trace, trace.to_csv())


def cmd_optdesign(args, run: Run) -> None:
    image = _load(run, args.image, Modality.VISION, args)
    start = _input_set(run, args, image.n)
    if args.mode == "random":
        picked = random_select(len(start), args.target, args.seed)
        kept = start.kept[picked.kept]
        result = SelectionResult(kept, start.stages + picked.stages, args.target, picked.meta)
    elif args.mode == "a":
        result = a_optimal_select(image, start, args.target, args.tau, args.lam,
                                  workers=args.threads)
    else:
        if not (args.prior or args.prior_from):
            raise ValidationError("--mode v needs --prior or --prior-from")
        prior = _load_prior(run, args, image)
        result = v_optimal_select(image, start, args.target, args.tau, args.lam, prior,
                                  workers=args.threads)
    _emit_selection(run, args, result, image)
    run.emit(str(args.out) + ".meta.json", json.dumps(result.meta, indent=1, sort_keys=True) + "\n")


def cmd_stats(args, run: Run) -> None:
    a, _ = read_scores_csv(run.read(args.scores_a), ScoreKind.VAS)
    b, _ = read_scores_csv(run.read(args.scores_b), ScoreKind.CLIP_SCORE)
    hist = score_stats(a, b, args.bins)
    run.emit(args.out, hist.to_csv())
    run.emit(str(args.out) + ".axes.csv", hist.axes_csv())


def _sim_config(args):
    from .theorysim import SynthConfig

    r = args.r
    train = args.sigma_train or (0.8 / r,) * r
    test = args.sigma_test or (0.8 / r,) * r
    return SynthConfig(r=r, d=args.d, n_train=args.n_train, n_test=args.n_test,
                       sigma_train_diag=train, sigma_test_diag=test,
                       noise_std=args.noise_std, rho=args.rho, seed=args.seed)


def cmd_sim(args, run: Run) -> None:
    from . import theorysim as ts

    cfg = _sim_config(args)
    if args.sim_command == "verify-lemma1":
        report = ts.verify_lemma1(cfg, args.pool_n, args.k, args.trials)
        run.emit(args.out, report.to_csv())
    elif args.sim_command == "faceoff":
        strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
        report = ts.strategy_faceoff(cfg, args.budget, strategies, args.trials,
                                     accuracy_trials=args.accuracy_trials, workers=args.threads)
        run.emit(args.out, report.to_csv())
        run.emit(str(args.out) + ".summary.csv", report.summary_csv())
    else:
        reports, constant = ts.bound_trials(cfg, args.budget, args.trials, mode=args.mode)
        run.emit(args.out, ts.bound_csv(reports))
    if args.save_world:
        world = ts.gen_world(cfg)
        run.defer(lambda: ts.save_world(world, args.save_world))


# -- parser ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads; results do not depend on it (default: %(default)s)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _embed_flags(p, text: str | None = "optional") -> None:
    p.add_argument("--image", required=True, help="vision embeddings (.vemb or .csv)")
    if text == "required":
        p.add_argument("--text", required=True, help="language embeddings, row-aligned with --image")
    elif text == "optional":
        p.add_argument("--text", help="language embeddings, row-aligned with --image")
    p.add_argument("--raw", action="store_true",
                   help="use embeddings as stored instead of renormalizing rows to unit length")


def _prior_flags(p, required: bool) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--prior", help="precomputed VMOM moment file")
    g.add_argument("--prior-from", help="embedding file whose second moment is the prior")
    p.add_argument("--prior-from-text", help="language side of --prior-from for a cross moment")


def _selection_out(p) -> None:
    p.add_argument("--out", required=True, help="selected indices, one per line")
    p.add_argument("--emit-ids", action="store_true", help="write sample ids instead of row indices")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="vasfilter", description=__doc__.splitlines()[0],
                                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clipscore", help="per-pair cosine similarity", formatter_class=fmt)
    _embed_flags(p, "required")
    p.add_argument("--out", required=True, help="score CSV (index,id,score)")
    _common(p)
    p.set_defaults(func=cmd_clipscore)

    p = sub.add_parser("vas", help="variance alignment scores against a prior moment",
                       formatter_class=fmt)
    _embed_flags(p)
    _prior_flags(p, required=True)
    p.add_argument("--cross", action="store_true",
                   help="score image against text through a cross moment (needs --text)")
    p.add_argument("--save-prior", help="also write the prior moment used, as VMOM")
    p.add_argument("--out", required=True, help="score CSV (index,id,score)")
    _common(p)
    p.set_defaults(func=cmd_vas)

    p = sub.add_parser("pipeline", help="CLIP-score filter followed by top VAS",
                       formatter_class=fmt)
    _embed_flags(p, "required")
    _prior_flags(p, required=True)
    p.add_argument("--clip-keep", type=keep_value, default=DEFAULT_CLIP_KEEP,
                   help="stage-1 fraction (decimal in (0,1]) or count (integer)")
    p.add_argument("--clip-threshold", type=float, default=None,
                   help="keep CLIP scores >= this instead of --clip-keep")
    p.add_argument("--vas-keep", type=keep_value, default=DEFAULT_VAS_KEEP,
                   help="final size as a fraction of the original n, or a count")
    _selection_out(p)
    _common(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("vasd", help="dynamic VAS by greedy removal", formatter_class=fmt)
    _embed_flags(p, None)
    p.add_argument("--input-set", help="restrict to these row indices (one per line)")
    p.add_argument("--target", type=int, required=True, help="number of rows to keep")
    p.add_argument("--tau", type=int, default=DEFAULT_TAU, help="greedy rounds")
    p.add_argument("--trace", help="per-round trace CSV (t,N_t,removed,tr_sigma_sq)")
    _selection_out(p)
    _common(p)
    p.set_defaults(func=cmd_vasd)

    p = sub.add_parser("optdesign", help="A-/V-optimal or seeded random selection",
                       formatter_class=fmt)
    _embed_flags(p, None)
    p.add_argument("--mode", choices=("a", "v", "random"), required=True)
    _prior_flags(p, required=False)
    p.add_argument("--input-set", help="restrict to these row indices (one per line)")
    p.add_argument("--target", type=int, required=True, help="number of rows to keep")
    p.add_argument("--tau", type=int, default=DEFAULT_TAU, help="greedy rounds")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="ridge; default 1e-6 x mean squared row norm")
    p.add_argument("--seed", type=int, default=0, help="seed for --mode random")
    _selection_out(p)
    _common(p)
    p.set_defaults(func=cmd_optdesign)

    p = sub.add_parser("stats", help="joint histogram of two score files", formatter_class=fmt)
    p.add_argument("--scores-a", required=True, help="first score CSV")
    p.add_argument("--scores-b", required=True, help="second score CSV")
    p.add_argument("--bins", type=int, default=20, help="bins per axis")
    p.add_argument("--out", required=True, help="histogram CSV (bin_x,bin_y,count)")
    _common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sim", help="synthetic linear-model experiments", formatter_class=fmt)
    sim = p.add_subparsers(dest="sim_command", required=True)
    for name, help_text in (("verify-lemma1", "test-loss gap vs alignment term"),
                            ("faceoff", "compare selection strategies"),
                            ("bound-report", "bound terms for the proxy-VAS subset")):
        q = sim.add_parser(name, help=help_text, formatter_class=fmt)
        q.add_argument("--r", type=int, default=4, help="latent dimension")
        q.add_argument("--d", type=int, default=16, help="ambient dimension")
        q.add_argument("--n-train", type=int, default=200, help="training pool size")
        q.add_argument("--n-test", type=int, default=2000, help="test split size")
        q.add_argument("--sigma-train", type=float_list, default=None,
                       help="comma-separated train cross-moment diagonal (default 0.8/r each)")
        q.add_argument("--sigma-test", type=float_list, default=None,
                       help="comma-separated test cross-moment diagonal (default 0.8/r each)")
        q.add_argument("--noise-std", type=float, default=0.05, help="observation noise std")
        q.add_argument("--rho", type=float, default=1.0, help="regularizer constant")
        q.add_argument("--seed", type=int, default=0, help="base seed")
        q.add_argument("--trials", type=int, default=20, help="seeded trials")
        q.add_argument("--save-world", help="also snapshot the base-seed world to this directory")
        q.add_argument("--out", required=True, help="report CSV")
        if name == "verify-lemma1":
            q.add_argument("--pool-n", type=int, default=12, help="pool size for exhaustive search")
            q.add_argument("--k", type=int, default=6, help="subset size")
        else:
            q.add_argument("--budget", type=int, default=40, help="subset size")
        if name == "faceoff":
            q.add_argument("--strategies", default="random,vas_prior,vas_d,a_opt,v_opt,clip_top",
                           help="comma-separated strategies")
            q.add_argument("--accuracy-trials", type=int, default=2000,
                           help="Monte-Carlo draws for accuracy")
        if name == "bound-report":
            q.add_argument("--mode", choices=("vision_only", "vision_language"),
                           default="vision_only", help="which teacher slack applies")
        _common(q)
        q.set_defaults(func=cmd_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    run = Run(args)
    try:
        args.func(args, run)
        run.finish()
    except VasError as exc:
        print(str(exc).splitlines()[0], file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"IoFailure: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"NumericalError: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
