"""Grid search over the fusion weights (alpha, gamma) on a dev set.

Every grid point is rescored and measured by pooled corpus WER; the
best point is the WER argmin, ties going to the smaller alpha, then the
smaller gamma.  With no context carry-over (L = 0) the per-hypothesis
LM scores do not depend on the weights, so they are computed once and
every grid point reduces to arithmetic; with L > 0 the selections feed
the context buffer, so each grid point is a full rescoring pass.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .corpus import NBestList, Reference, Session
from .errors import EngineError, ValidationError
from .rescorer import (
    ContextBuffer,
    RescoreConfig,
    combine_scores,
    rescore_nbest,
    rescore_session,
)
from .scorers import LmScorer
from .textprep import PrepConfig, normalize_sentence, prepare_session
from .wer import corpus_wer, words_for_scoring


@dataclass(frozen=True)
class SweepGrid:
    """Candidate weights: ascending, duplicate-free, non-negative."""

    alphas: tuple[float, ...]
    gammas: tuple[float, ...]

    def __post_init__(self) -> None:
        for name, values in (("alphas", self.alphas), ("gammas", self.gammas)):
            if not values:
                raise ValidationError(f"{name} must be non-empty")
            for value in values:
                if not (math.isfinite(value) and value >= 0):
                    raise ValidationError(
                        f"{name} must be finite and >= 0, got {value!r}"
                    )
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ValidationError(
                    f"{name} must be strictly ascending, got {list(values)}"
                )


DEFAULT_GRID = SweepGrid(
    alphas=tuple(round(0.1 * k, 10) for k in range(11)),
    gammas=(0.0, 0.25, 0.5, 0.75, 1.0),
)


@dataclass(frozen=True)
class GridPoint:
    alpha: float
    gamma: float
    wer: float


@dataclass(frozen=True)
class SweepResult:
    """Full WER table plus the chosen operating point."""

    best_alpha: float
    best_gamma: float
    table: tuple[GridPoint, ...]


def _reference_words(
    ref_sessions: Sequence[Session], prep: PrepConfig
) -> dict[tuple[str, str], tuple[str, ...]]:
    """Reference words keyed by utterance, normalized like the hypotheses.

    Normalizing both sides keeps WER invariant to prep choices (the
    appended period is stripped again for scoring; capitalization, when
    on, applies equally).
    """
    words: dict[tuple[str, str], tuple[str, ...]] = {}
    for session in ref_sessions:
        for item in session.items:
            if not isinstance(item, Reference):
                raise ValidationError(
                    f"session {session.session_id!r}: sweep references must be "
                    f"reference transcripts, got {type(item).__name__}"
                )
            key = (session.session_id, item.utterance.utterance_id)
            words[key] = words_for_scoring(normalize_sentence(item.text, prep))
    return words


def _paired_words(
    prepared: Sequence[Session],
    picked_texts: Sequence[Sequence[str]],
    ref_words: dict[tuple[str, str], tuple[str, ...]],
) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    pairs = []
    for session, texts in zip(prepared, picked_texts):
        for item, text in zip(session.items, texts):
            key = (session.session_id, item.utterance.utterance_id)
            if key not in ref_words:
                raise ValidationError(
                    f"no reference for utterance {key[1]!r} in session {key[0]!r}"
                )
            pairs.append((ref_words[key], words_for_scoring(text)))
    return pairs


def sweep(
    dev_sessions: Sequence[Session],
    ref_sessions: Sequence[Session],
    grid: SweepGrid,
    context_len: int,
    scorer: LmScorer,
    prep: PrepConfig,
    jobs: int = 1,
    reset_on_speaker_change: bool = False,
) -> SweepResult:
    """Corpus WER at every (alpha, gamma); argmin with deterministic ties.

    The table is emitted in ascending alpha-major, gamma-minor order.
    Rescoring errors surface with the offending grid point named.
    """
    if context_len < 0:
        raise ValidationError(f"context_len must be >= 0, got {context_len}")
    if jobs < 1:
        raise ValidationError(f"jobs must be >= 1, got {jobs}")

    prepared = [prepare_session(s, prep, scorer.tokenize) for s in dev_sessions]
    ref_words = _reference_words(ref_sessions, prep)
    points = [(alpha, gamma) for alpha in grid.alphas for gamma in grid.gammas]

    if context_len == 0:
        # Empty context at every utterance: LM scores are weight-independent,
        # so score once and make each grid point pure arithmetic.
        base = RescoreConfig(prep=prep)
        empty = ContextBuffer(0)

        def features(session: Session) -> list[list[tuple[float, float, int]]]:
            out = []
            for item in session.items:
                if not isinstance(item, NBestList):
                    raise ValidationError(
                        f"session {session.session_id!r}: cannot sweep item of "
                        f"type {type(item).__name__}"
                    )
                _, scored = rescore_nbest(item, empty, base, scorer)
                out.append([(s.hypothesis.asr_score, s.lm_logprob, s.token_len) for s in scored])
            return out

        if jobs == 1 or len(prepared) <= 1:
            cached = [features(s) for s in prepared]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                cached = list(pool.map(features, prepared))

        def wer_at(alpha: float, gamma: float) -> float:
            cfg = RescoreConfig(alpha=alpha, gamma=gamma, prep=prep)
            picked_texts = []
            for session, session_features in zip(prepared, cached):
                texts = []
                for item, per_hyp in zip(session.items, session_features):
                    best_index = 0
                    best_score = combine_scores(*per_hyp[0], cfg)
                    for index in range(1, len(per_hyp)):
                        score = combine_scores(*per_hyp[index], cfg)
                        if score > best_score:
                            best_index, best_score = index, score
                    texts.append(item.hypotheses[best_index].text)
                picked_texts.append(texts)
            return corpus_wer(_paired_words(prepared, picked_texts, ref_words)).wer

    else:

        def wer_at(alpha: float, gamma: float) -> float:
            cfg = RescoreConfig(
                alpha=alpha,
                gamma=gamma,
                context_len=context_len,
                prep=prep,
                reset_on_speaker_change=reset_on_speaker_change,
            )
            picked_texts = [
                [best.hypothesis.text for best in rescore_session(s, cfg, scorer)]
                for s in prepared
            ]
            return corpus_wer(_paired_words(prepared, picked_texts, ref_words)).wer

    def measure(point: tuple[float, float]) -> GridPoint:
        alpha, gamma = point
        try:
            return GridPoint(alpha, gamma, wer_at(alpha, gamma))
        except EngineError as exc:
            raise type(exc)(
                f"grid point (alpha={alpha}, gamma={gamma}): {exc}"
            ) from exc

    if context_len > 0 and jobs > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            table = list(pool.map(measure, points))
    else:
        table = [measure(point) for point in points]

    best = table[0]
    for point in table[1:]:
        if point.wer < best.wer:
            best = point
    return SweepResult(best.alpha, best.gamma, tuple(table))
