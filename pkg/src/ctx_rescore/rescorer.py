"""Score fusion and hypothesis selection with cross-utterance context.

Each hypothesis gets a combined score

    asr_score + alpha * lm_score + gamma * token_count

and the argmax wins, ties going to the lower rank so that zero weights
reproduce the first-pass baseline exactly.  The winner's trailing tokens
are kept in a bounded buffer and condition the LM scores of the next
utterance in the session; the buffer ignores hypothesis boundaries (it
may start mid-sentence) and never crosses a session boundary.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .corpus import Hypothesis, NBestList, Selection, Session
from .errors import EngineError, ScorerError, ValidationError
from .scorers import LmScorer, ScoreRequest
from .textprep import PrepConfig, prepare_session


@dataclass(frozen=True)
class RescoreConfig:
    """Fusion weights, context size, and text prep, fixed for a whole run.

    alpha scales the LM log-score and gamma rewards token count (both
    non-negative); context_len is the buffer capacity L in tokens, zero
    disabling carry-over.  reset_on_speaker_change clears the buffer at
    speaker turns, for speaker-conditioned runs where cross-speaker
    context is unwanted (off by default).
    """

    alpha: float = 0.0
    gamma: float = 0.0
    context_len: int = 0
    prep: PrepConfig = PrepConfig()
    reset_on_speaker_change: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValidationError(f"alpha must be finite and >= 0, got {self.alpha!r}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ValidationError(f"gamma must be finite and >= 0, got {self.gamma!r}")
        if self.context_len < 0:
            raise ValidationError(f"context_len must be >= 0, got {self.context_len!r}")


def combine_scores(asr: float, lm: float, length: int, cfg: RescoreConfig) -> float:
    """Fused score of one hypothesis: asr + alpha*lm + gamma*length."""
    if not (math.isfinite(asr) and math.isfinite(lm)):
        raise ValidationError(f"scores must be finite, got asr={asr!r} lm={lm!r}")
    if length < 0:
        raise ValidationError(f"length must be >= 0, got {length!r}")
    return asr + cfg.alpha * lm + cfg.gamma * length


@dataclass(frozen=True)
class ContextBuffer:
    """Trailing tokens of everything selected so far, capped at capacity.

    Always a suffix of the concatenated selected-token stream of the
    session, by construction of append_best.  Capacity zero stays empty.
    """

    capacity: int
    ids: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.capacity < 0:
            raise ValidationError(f"buffer capacity must be >= 0, got {self.capacity}")
        if len(self.ids) > self.capacity:
            raise ValidationError(
                f"buffer holds {len(self.ids)} tokens, over capacity {self.capacity}"
            )


def append_best(ctx: ContextBuffer, tokens: Sequence[int]) -> ContextBuffer:
    """Buffer after the selected hypothesis' tokens are appended.

    Keeps the last min(capacity, len) tokens of the concatenation.
    """
    if ctx.capacity == 0:
        return ctx
    merged = ctx.ids + tuple(tokens)
    return ContextBuffer(ctx.capacity, merged[-ctx.capacity :])


@dataclass(frozen=True)
class ScoredHypothesis:
    """A hypothesis with its LM evidence and fused score."""

    hypothesis: Hypothesis
    lm_logprob: float
    token_len: int
    combined: float


def rescore_nbest(
    nbest: NBestList,
    ctx: ContextBuffer,
    cfg: RescoreConfig,
    scorer: LmScorer,
) -> tuple[ScoredHypothesis, list[ScoredHypothesis]]:
    """Score all hypotheses under one context and pick the winner.

    Hypotheses must be prepared (normalized and tokenized with this
    scorer's tokenizer).  They share the context, so the non-empty ones
    go to the scorer as one batch; a hypothesis with no tokens scores
    lm=0 at length 0 and competes on its ASR score alone.  A failed
    batch element is re-raised with the utterance id attached.  Ties go
    to the lowest rank.
    """
    uid = nbest.utterance.utterance_id
    for hyp in nbest.hypotheses:
        if hyp.tokens is None:
            raise ValidationError(
                f"utterance {uid!r}: hypothesis rank {hyp.rank} was not prepared"
            )
    batch = [ScoreRequest(ctx.ids, h.tokens) for h in nbest.hypotheses if h.tokens]
    results = iter(scorer.batch_score(batch))

    scored: list[ScoredHypothesis] = []
    for hyp in nbest.hypotheses:
        if not hyp.tokens:
            lm = 0.0
        else:
            result = next(results)
            if isinstance(result, EngineError):
                raise type(result)(f"utterance {uid!r}: {result}") from result
            if isinstance(result, Exception):
                raise ScorerError(f"utterance {uid!r}: {result}") from result
            if len(result.token_logprobs) != len(hyp.tokens):
                raise ScorerError(
                    f"utterance {uid!r}: scorer returned "
                    f"{len(result.token_logprobs)} logprobs for {len(hyp.tokens)} tokens"
                )
            lm = result.total
        combined = combine_scores(hyp.asr_score, lm, len(hyp.tokens), cfg)
        scored.append(ScoredHypothesis(hyp, lm, len(hyp.tokens), combined))

    best = scored[0]
    for candidate in scored[1:]:
        if candidate.combined > best.combined:
            best = candidate
    return best, scored


def rescore_session(
    session: Session, cfg: RescoreConfig, scorer: LmScorer
) -> list[ScoredHypothesis]:
    """Rescore a prepared session in item order, carrying context forward.

    One selection per utterance, in session order.  The buffer starts
    empty, absorbs each winner's tokens, and is rebuilt at speaker turns
    when the config asks for that.  The first scorer error aborts the
    whole session: a broken context chain has no usable partial result.
    """
    buffer = ContextBuffer(cfg.context_len)
    selected: list[ScoredHypothesis] = []
    previous_speaker: str | None = None
    for item in session.items:
        if not isinstance(item, NBestList):
            raise ValidationError(
                f"session {session.session_id!r}: cannot rescore item of type "
                f"{type(item).__name__}"
            )
        speaker = item.utterance.speaker_id
        if cfg.reset_on_speaker_change and speaker != previous_speaker:
            buffer = ContextBuffer(cfg.context_len)
        previous_speaker = speaker
        best, _ = rescore_nbest(item, buffer, cfg, scorer)
        buffer = append_best(buffer, best.hypothesis.tokens)
        selected.append(best)
    return selected


def baseline_select(session: Session) -> list[Hypothesis]:
    """The rank-1 hypothesis of every utterance, in session order."""
    picks = []
    for item in session.items:
        if not isinstance(item, NBestList):
            raise ValidationError(
                f"session {session.session_id!r}: no hypotheses for item of type "
                f"{type(item).__name__}"
            )
        picks.append(item.hypotheses[0])
    return picks


def rescore_corpus(
    sessions: Sequence[Session],
    cfg: RescoreConfig,
    scorer: LmScorer,
    jobs: int = 1,
) -> tuple[list[Session], dict[tuple[str, str], Selection]]:
    """Prepare and rescore raw sessions end to end.

    Returns the prepared sessions (ordered, normalized) and one
    Selection per utterance, keyed by (session_id, utterance_id).
    Sessions are independent, so they may run on a worker pool; results
    merge in input order, so the outcome does not depend on ``jobs``.
    """
    if jobs < 1:
        raise ValidationError(f"jobs must be >= 1, got {jobs}")

    def run(session: Session) -> tuple[Session, list[ScoredHypothesis]]:
        prepared = prepare_session(session, cfg.prep, scorer.tokenize)
        return prepared, rescore_session(prepared, cfg, scorer)

    if jobs == 1 or len(sessions) <= 1:
        done = [run(s) for s in sessions]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(run, sessions))

    prepared_sessions = []
    picks: dict[tuple[str, str], Selection] = {}
    for prepared, selected in done:
        prepared_sessions.append(prepared)
        for item, best in zip(prepared.items, selected):
            key = (prepared.session_id, item.utterance.utterance_id)
            picks[key] = Selection(
                text=best.hypothesis.text,
                rank=best.hypothesis.rank,
                combined_score=best.combined,
            )
    return prepared_sessions, picks
