"""Utterance ordering and sentence normalization.

Two orderings of a session's utterances: conversational (by start time,
interleaving speakers as they talked) and speaker-conditioned (one block
per speaker, blocks by first appearance).  Normalization appends a
period to any sentence that does not already end in terminal
punctuation; capitalizing the first letter is available but off by
default.  The same transforms apply to hypotheses and references, so
scored text and training-style text agree.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .corpus import NBestList, Reference, Session, SessionItem
from .errors import ValidationError

TERMINAL_PUNCTUATION = (".", "?", "!")


class Ordering(str, Enum):
    """How a session's utterances are sequenced before scoring."""

    CONVERSATIONAL = "conversational"
    SPEAKER_CONDITIONED = "speaker_conditioned"


class PrepError(ValidationError):
    """Session cannot be ordered or normalized as configured."""


@dataclass(frozen=True)
class PrepConfig:
    """Normalization and ordering settings, fixed for a whole run.

    Defaults: conversational order, periods appended, no capitalization.
    """

    ordering: Ordering = Ordering.CONVERSATIONAL
    add_period: bool = True
    capitalize_first: bool = False


def normalize_sentence(text: str, cfg: PrepConfig = PrepConfig()) -> str:
    """Apply sentence normalization.  Idempotent.

    Trailing whitespace is dropped first, so ``"hello "`` becomes
    ``"hello."`` rather than ``"hello ."``.  A period is appended only
    when the text does not already end in ``.``, ``?`` or ``!``.  Empty
    (or all-whitespace) text stays empty: a bare period would hand an
    empty hypothesis unearned LM probability.  Capitalization uppercases
    the first alphabetic character, wherever it sits.
    """
    text = text.rstrip()
    if not text:
        return ""
    if cfg.add_period and not text.endswith(TERMINAL_PUNCTUATION):
        text = text + "."
    if cfg.capitalize_first:
        for i, ch in enumerate(text):
            if ch.isalpha():
                text = text[:i] + ch.upper() + text[i + 1 :]
                break
    return text


def _require_times(session: Session) -> None:
    for item in session.items:
        if item.utterance.start_time is None:
            raise PrepError(
                f"session {session.session_id!r}: utterance "
                f"{item.utterance.utterance_id!r} has no start_time; cannot order"
            )


def order_conversational(session: Session) -> Session:
    """Items stably sorted by ascending start_time; ties keep input order."""
    _require_times(session)
    items = sorted(session.items, key=lambda item: item.utterance.start_time)
    return replace(session, items=tuple(items))


def order_speaker_conditioned(session: Session) -> Session:
    """One contiguous block per speaker.

    Blocks are ordered by each speaker's first start_time; within a
    block, ascending start_time.  Every utterance appears exactly once.
    """
    _require_times(session)
    by_time = sorted(session.items, key=lambda item: item.utterance.start_time)
    blocks: dict[str, list[SessionItem]] = {}
    for item in by_time:
        blocks.setdefault(item.utterance.speaker_id, []).append(item)
    ordered = [item for block in blocks.values() for item in block]
    return replace(session, items=tuple(ordered))


def order_session(session: Session, ordering: Ordering) -> Session:
    if ordering is Ordering.CONVERSATIONAL:
        return order_conversational(session)
    if ordering is Ordering.SPEAKER_CONDITIONED:
        return order_speaker_conditioned(session)
    raise PrepError(f"unknown ordering {ordering!r}")


def prepare_nbest(nbest: NBestList, cfg: PrepConfig, tokenize) -> NBestList:
    """Normalize every hypothesis and attach its token ids.

    ``tokenize`` maps normalized text to token ids and must come from
    the scorer that will consume them.  The returned copy carries the
    normalized text, so downstream output shows what was really scored.
    """
    prepared = []
    for hyp in nbest.hypotheses:
        norm = normalize_sentence(hyp.text, cfg)
        prepared.append(replace(hyp, text=norm, tokens=tuple(tokenize(norm))))
    return replace(nbest, hypotheses=tuple(prepared))


def prepare_session(session: Session, cfg: PrepConfig, tokenize) -> Session:
    """Order a session and normalize/tokenize every item in it."""
    ordered = order_session(session, cfg.ordering)
    items = []
    for item in ordered.items:
        if isinstance(item, NBestList):
            items.append(prepare_nbest(item, cfg, tokenize))
        elif isinstance(item, Reference):
            items.append(replace(item, text=normalize_sentence(item.text, cfg)))
        else:
            raise PrepError(f"cannot prepare item of type {type(item).__name__}")
    return replace(ordered, items=tuple(items))
