"""One executable, six subcommands: rescore, ppl, wer, oracle, sigtest, sweep.

Shared conventions: every run prints an effective-config line to stderr
for reproducibility; results go to stdout, human-readable by default or
as JSON with --json; outputs are byte-identical across repeated runs on
identical inputs.  Exit codes: 0 success, 1 validation/usage errors
(bad flags, missing files, malformed data), 2 scorer and transport
failures (the transport case is retriable).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

from .corpus import load_nbest, load_references, load_utterance_texts, write_selection
from .errors import ScorerError, TransportError, ValidationError
from .ppl import ppl_corpus
from .rescorer import RescoreConfig, rescore_corpus
from .scorers import build_scorer
from .sweep import SweepGrid, sweep
from .textprep import Ordering, PrepConfig
from .wer import (
    align,
    corpus_wer,
    oracle_select,
    significance_matched_pairs,
    words_for_scoring,
)

log = logging.getLogger("ctx_rescore")

ORDERINGS = {"conv": Ordering.CONVERSATIONAL, "spkr": Ordering.SPEAKER_CONDITIONED}


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this engine reserves 2
    for scorer failures, so usage problems surface as validation errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _prep_config(args: argparse.Namespace) -> PrepConfig:
    return PrepConfig(
        ordering=ORDERINGS[args.ordering],
        add_period=not args.no_period,
        capitalize_first=args.capitalize,
    )


def _emit(args: argparse.Namespace, payload: dict, human_lines: list[str]) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


def _wer_payload(report) -> dict:
    return {
        "counts": asdict(report.counts),
        "ref_words": report.ref_words,
        "wer": report.wer,
    }


def _wer_lines(report) -> list[str]:
    c = report.counts
    return [
        f"hits {c.hits} substitutions {c.substitutions} "
        f"deletions {c.deletions} insertions {c.insertions}",
        f"ref_words {report.ref_words}",
        f"wer {report.wer}",
    ]


def _paired_texts(ref_sessions, texts: dict, what: str) -> list[tuple[str, str]]:
    """(ref_text, hyp_text) in reference order; every reference needs a match."""
    pairs = []
    for session in ref_sessions:
        for item in session.items:
            key = (session.session_id, item.utterance.utterance_id)
            if key not in texts:
                raise ValidationError(
                    f"{what} is missing utterance {key[1]!r} in session {key[0]!r}"
                )
            pairs.append((item.text, texts[key]))
    return pairs


def cmd_rescore(args: argparse.Namespace) -> int:
    scorer = build_scorer(args.scorer)
    cfg = RescoreConfig(
        alpha=args.alpha,
        gamma=args.gamma,
        context_len=args.context_len,
        prep=_prep_config(args),
        reset_on_speaker_change=args.reset_on_speaker_change,
    )
    sessions = load_nbest(args.nbest)
    prepared, picks = rescore_corpus(sessions, cfg, scorer, jobs=args.jobs)
    write_selection(prepared, picks, args.out)
    log.info("rescored %d utterances in %d sessions", len(picks), len(prepared))
    _emit(
        args,
        {"utterances": len(picks), "sessions": len(prepared), "out": args.out},
        [f"wrote {len(picks)} selections across {len(prepared)} sessions to {args.out}"],
    )
    return 0


def cmd_ppl(args: argparse.Namespace) -> int:
    scorer = build_scorer(args.scorer)
    sessions = load_references(args.refs)
    report = ppl_corpus(
        sessions, args.context_len, scorer, _prep_config(args), jobs=args.jobs
    )
    _emit(
        args,
        {
            "token_count": report.token_count,
            "sum_logprob": report.sum_logprob,
            "ppl": report.ppl,
        },
        [
            f"token_count {report.token_count}",
            f"sum_logprob {report.sum_logprob}",
            f"ppl {report.ppl}",
        ],
    )
    return 0


def cmd_wer(args: argparse.Namespace) -> int:
    ref_sessions = load_references(args.refs)
    hyp_texts = load_utterance_texts(args.hyps)
    pairs = _paired_texts(ref_sessions, hyp_texts, args.hyps)
    report = corpus_wer(
        [(words_for_scoring(r), words_for_scoring(h)) for r, h in pairs]
    )
    payload = _wer_payload(report)
    lines = _wer_lines(report)
    if args.per_session:
        payload["per_session"] = {}
        for session in ref_sessions:
            session_pairs = [
                (
                    words_for_scoring(item.text),
                    words_for_scoring(
                        hyp_texts[(session.session_id, item.utterance.utterance_id)]
                    ),
                )
                for item in session.items
            ]
            session_report = corpus_wer(session_pairs)
            payload["per_session"][session.session_id] = _wer_payload(session_report)
            lines.append(f"session {session.session_id} wer {session_report.wer}")
    _emit(args, payload, lines)
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    ref_sessions = load_references(args.refs)
    nbest_sessions = load_nbest(args.nbest)
    refs = {
        (s.session_id, item.utterance.utterance_id): item
        for s in ref_sessions
        for item in s.items
    }
    pairs = []
    for session in nbest_sessions:
        for item in session.items:
            key = (session.session_id, item.utterance.utterance_id)
            if key not in refs:
                raise ValidationError(
                    f"{args.refs} is missing utterance {key[1]!r} in session {key[0]!r}"
                )
            pick = oracle_select(item, refs[key])
            pairs.append(
                (words_for_scoring(refs[key].text), words_for_scoring(pick.text))
            )
    report = corpus_wer(pairs)
    _emit(args, _wer_payload(report), _wer_lines(report))
    return 0


def cmd_sigtest(args: argparse.Namespace) -> int:
    ref_sessions = load_references(args.refs)
    texts_a = load_utterance_texts(args.hyps_a)
    texts_b = load_utterance_texts(args.hyps_b)
    errors_a = []
    errors_b = []
    for ref_text, a_text in _paired_texts(ref_sessions, texts_a, args.hyps_a):
        errors_a.append(align(words_for_scoring(ref_text), words_for_scoring(a_text)).errors)
    for ref_text, b_text in _paired_texts(ref_sessions, texts_b, args.hyps_b):
        errors_b.append(align(words_for_scoring(ref_text), words_for_scoring(b_text)).errors)
    result = significance_matched_pairs(errors_a, errors_b)
    _emit(
        args,
        {
            "n": result.n,
            "mean_diff": result.mean_diff,
            "statistic": result.statistic,
            "p_value": result.p_value,
            "significant_5": result.significant_5,
            "significant_1": result.significant_1,
            "flags": list(result.flags),
        },
        [
            f"n {result.n}",
            f"mean_diff {result.mean_diff}",
            f"statistic {result.statistic}",
            f"p_value {result.p_value}",
            f"significant_5 {result.significant_5}",
            f"significant_1 {result.significant_1}",
            f"flags {','.join(result.flags) or '-'}",
        ],
    )
    return 0


def _parse_grid_values(spec: str, what: str) -> tuple[float, ...]:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    try:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError("expected START:STOP:STEP")
            start, stop, step = (float(p) for p in parts)
            if step <= 0:
                raise ValueError("step must be > 0")
            values = []
            k = 0
            while (value := round(start + k * step, 10)) <= stop + 1e-9:
                values.append(value)
                k += 1
            return tuple(values)
        return tuple(float(p) for p in spec.split(","))
    except ValueError as exc:
        raise ValidationError(f"bad {what} grid {spec!r}: {exc}") from None


def cmd_sweep(args: argparse.Namespace) -> int:
    scorer = build_scorer(args.scorer)
    grid = SweepGrid(
        alphas=_parse_grid_values(args.alphas, "alpha"),
        gammas=_parse_grid_values(args.gammas, "gamma"),
    )
    result = sweep(
        load_nbest(args.nbest),
        load_references(args.refs),
        grid,
        args.context_len,
        scorer,
        _prep_config(args),
        jobs=args.jobs,
        reset_on_speaker_change=args.reset_on_speaker_change,
    )
    payload = {
        "best_alpha": result.best_alpha,
        "best_gamma": result.best_gamma,
        "table": [
            {"alpha": p.alpha, "gamma": p.gamma, "wer": p.wer} for p in result.table
        ],
    }
    lines = [f"alpha {p.alpha} gamma {p.gamma} wer {p.wer}" for p in result.table]
    lines.append(f"best alpha {result.best_alpha} gamma {result.best_gamma}")
    _emit(args, payload, lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="print results as JSON")
    common.add_argument(
        "--jobs",
        type=int,
        default=os.cpu_count() or 1,
        help="worker pool size for session/grid parallelism (default: all cores)",
    )
    common.add_argument(
        "--log-level",
        choices=["debug", "info", "warning", "error"],
        default="warning",
    )
    common.add_argument(
        "--seed", type=int, default=0, help="reserved; deterministic paths ignore it"
    )

    prep = _Parser(add_help=False)
    prep.add_argument(
        "--ordering",
        choices=sorted(ORDERINGS),
        default="conv",
        help="conv: sort utterances by start time; spkr: group per speaker",
    )
    prep.add_argument(
        "--no-period", action="store_true", help="do not append sentence periods"
    )
    prep.add_argument(
        "--capitalize", action="store_true", help="uppercase each sentence's first letter"
    )

    scorer = _Parser(add_help=False)
    scorer.add_argument(
        "--scorer",
        default="uniform",
        help="uniform[:V], ngram:PATH[:ORDER], or remote[:URL] "
        "(URL default: $CTX_RESCORE_SCORER_URL)",
    )

    parser = _Parser(
        prog="ctx-rescore",
        description="Session-aware N-best rescoring with LM fusion, plus its "
        "evaluation stack (WER, oracle, perplexity, significance, weight sweep).",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser(
        "rescore", parents=[common, prep, scorer], help="select 1-best with LM fusion"
    )
    p.add_argument("--nbest", required=True, help="N-best JSONL input")
    p.add_argument("--out", required=True, help="selection JSONL output")
    p.add_argument("--alpha", type=float, default=0.0, help="LM weight (>= 0)")
    p.add_argument("--gamma", type=float, default=0.0, help="length reward (>= 0)")
    p.add_argument(
        "--context-len", type=int, default=0, help="carried-over context tokens L"
    )
    p.add_argument(
        "--reset-on-speaker-change",
        action="store_true",
        help="clear LM context at speaker turns",
    )
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser(
        "ppl", parents=[common, prep, scorer], help="perplexity of references"
    )
    p.add_argument("--refs", required=True, help="reference JSONL input")
    p.add_argument(
        "--context-len", type=int, default=0, help="carried-over context tokens L"
    )
    p.set_defaults(func=cmd_ppl)

    p = sub.add_parser("wer", parents=[common], help="word error rate of a hypothesis file")
    p.add_argument("--refs", required=True, help="reference JSONL input")
    p.add_argument("--hyps", required=True, help="hypothesis/selection JSONL input")
    p.add_argument(
        "--per-session", action="store_true", help="also break WER down per session"
    )
    p.set_defaults(func=cmd_wer)

    p = sub.add_parser("oracle", parents=[common], help="best-achievable N-best WER")
    p.add_argument("--refs", required=True, help="reference JSONL input")
    p.add_argument("--nbest", required=True, help="N-best JSONL input")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser(
        "sigtest", parents=[common], help="matched-pairs significance of two systems"
    )
    p.add_argument("--refs", required=True, help="reference JSONL input")
    p.add_argument("--hypsA", dest="hyps_a", required=True, help="system A selections")
    p.add_argument("--hypsB", dest="hyps_b", required=True, help="system B selections")
    p.set_defaults(func=cmd_sigtest)

    p = sub.add_parser(
        "sweep", parents=[common, prep, scorer], help="grid-search alpha and gamma"
    )
    p.add_argument("--nbest", required=True, help="dev N-best JSONL input")
    p.add_argument("--refs", required=True, help="dev reference JSONL input")
    p.add_argument("--alphas", default="0:1:0.1", help="START:STOP:STEP or comma list")
    p.add_argument("--gammas", default="0:1:0.25", help="START:STOP:STEP or comma list")
    p.add_argument(
        "--context-len", type=int, default=0, help="carried-over context tokens L"
    )
    p.add_argument(
        "--reset-on-speaker-change",
        action="store_true",
        help="clear LM context at speaker turns",
    )
    p.set_defaults(func=cmd_sweep)

    return parser


def _config_header(args: argparse.Namespace) -> str:
    shown = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return "config " + " ".join(f"{k}={v}" for k, v in shown.items())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    print(_config_header(args), file=sys.stderr)
    try:
        return args.func(args)
    except TransportError as exc:
        print(f"error (transport, retriable): {exc}", file=sys.stderr)
        return 2
    except ScorerError as exc:
        print(f"error (scorer): {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
