"""Token-level perplexity of reference transcripts with context carry-over.

References are ordered and normalized like rescoring input, then scored
in sequence: each reference's tokens are conditioned on the trailing L
tokens of the previous references (ground truth, not hypotheses, so the
history is teacher-forced), and the buffer rolls forward under the same
suffix rule the rescorer uses.  Perplexity is exp of the negative mean
per-token log-probability; corpus-level numbers pool token counts and
log-probability mass across sessions, with the buffer reset at every
session boundary.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .corpus import Reference, Session
from .errors import EngineError, ScorerError, ValidationError
from .rescorer import ContextBuffer, append_best
from .scorers import LmScorer, ScoreRequest
from .textprep import PrepConfig, prepare_session


@dataclass(frozen=True)
class PplReport:
    """Pooled token count, total log-probability, and perplexity."""

    token_count: int
    sum_logprob: float
    ppl: float

    @classmethod
    def from_totals(cls, token_count: int, sum_logprob: float) -> "PplReport":
        if token_count <= 0:
            raise ValidationError("no tokens to evaluate: perplexity is undefined")
        return cls(token_count, sum_logprob, math.exp(-sum_logprob / token_count))


def _session_totals(
    session: Session, context_len: int, scorer: LmScorer, prep: PrepConfig
) -> tuple[int, float]:
    """(token_count, sum_logprob) for one session of references."""
    prepared = prepare_session(session, prep, scorer.tokenize)
    buffer = ContextBuffer(context_len)
    count = 0
    total = 0.0
    for item in prepared.items:
        if not isinstance(item, Reference):
            raise ValidationError(
                f"session {session.session_id!r}: perplexity needs references, "
                f"got {type(item).__name__}"
            )
        tokens = tuple(scorer.tokenize(item.text))
        if tokens:
            try:
                response = scorer.score(ScoreRequest(buffer.ids, tokens))
            except EngineError as exc:
                raise type(exc)(
                    f"session {session.session_id!r}, utterance "
                    f"{item.utterance.utterance_id!r}: {exc}"
                ) from exc
            if len(response.token_logprobs) != len(tokens):
                raise ScorerError(
                    f"session {session.session_id!r}, utterance "
                    f"{item.utterance.utterance_id!r}: scorer returned "
                    f"{len(response.token_logprobs)} logprobs for {len(tokens)} tokens"
                )
            count += len(tokens)
            total += response.total
        buffer = append_best(buffer, tokens)
    return count, total


def ppl_session(
    session: Session, context_len: int, scorer: LmScorer, prep: PrepConfig
) -> PplReport:
    """Perplexity of one session's references under context carry-over."""
    if context_len < 0:
        raise ValidationError(f"context_len must be >= 0, got {context_len}")
    count, total = _session_totals(session, context_len, scorer, prep)
    return PplReport.from_totals(count, total)


def ppl_corpus(
    sessions: Sequence[Session],
    context_len: int,
    scorer: LmScorer,
    prep: PrepConfig,
    jobs: int = 1,
) -> PplReport:
    """Pooled perplexity over sessions; the buffer resets at each boundary.

    Token counts and log-probability mass pool across sessions (the
    per-session alternative, a plain average of perplexities, is not
    offered: pooled counts weight every token equally).  Sessions are
    independent and may run on a worker pool; totals merge in input
    order, so the result does not depend on ``jobs``.
    """
    if context_len < 0:
        raise ValidationError(f"context_len must be >= 0, got {context_len}")
    if jobs < 1:
        raise ValidationError(f"jobs must be >= 1, got {jobs}")

    def run(session: Session) -> tuple[int, float]:
        return _session_totals(session, context_len, scorer, prep)

    if jobs == 1 or len(sessions) <= 1:
        totals = [run(s) for s in sessions]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            totals = list(pool.map(run, sessions))

    count = sum(c for c, _ in totals)
    total = math.fsum(t for _, t in totals)
    return PplReport.from_totals(count, total)
