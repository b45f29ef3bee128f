"""Data model and JSONL ingestion/serialization for rescoring corpora.

One JSON object per line.  N-best files carry one hypothesis per line
(``session_id, utterance_id, speaker_id, start_time, rank, text,
asr_score``) and are grouped into per-utterance ranked lists; reference
files carry one transcript per line (same fields minus rank/asr_score).
Loaded sessions are immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence, Union

from .errors import ValidationError


@dataclass(frozen=True)
class Utterance:
    """One utterance's identity and timing within a session."""

    session_id: str
    utterance_id: str
    speaker_id: str
    start_time: float | None
    end_time: float | None = None

    def __post_init__(self) -> None:
        if self.start_time is not None:
            if not math.isfinite(self.start_time) or self.start_time < 0:
                raise ValidationError(
                    f"utterance {self.utterance_id!r}: start_time must be a "
                    f"finite non-negative number, got {self.start_time!r}"
                )
        if self.end_time is not None:
            if not math.isfinite(self.end_time):
                raise ValidationError(
                    f"utterance {self.utterance_id!r}: end_time must be finite"
                )
            if self.start_time is not None and self.end_time < self.start_time:
                raise ValidationError(
                    f"utterance {self.utterance_id!r}: end_time "
                    f"{self.end_time} precedes start_time {self.start_time}"
                )


@dataclass(frozen=True)
class Hypothesis:
    """One ranked ASR hypothesis.

    ``asr_score`` is the first-pass log-score, taken as given (no
    renormalization).  ``tokens`` is None until the hypothesis has been
    normalized and tokenized with a specific scorer; an empty tuple means
    "tokenized, and the text produced no tokens".
    """

    rank: int
    text: str
    asr_score: float
    tokens: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValidationError(f"hypothesis rank must be >= 1, got {self.rank}")
        if not math.isfinite(self.asr_score):
            raise ValidationError(
                f"hypothesis rank {self.rank}: asr_score must be finite, "
                f"got {self.asr_score!r}"
            )


@dataclass(frozen=True)
class NBestList:
    """Ranked hypotheses of one utterance, rank 1 first."""

    utterance: Utterance
    hypotheses: tuple[Hypothesis, ...]

    def __post_init__(self) -> None:
        uid = self.utterance.utterance_id
        if not self.hypotheses:
            raise ValidationError(f"utterance {uid!r}: empty N-best list")
        ranks = [h.rank for h in self.hypotheses]
        if ranks != sorted(ranks):
            raise ValidationError(f"utterance {uid!r}: hypotheses not in rank order")
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValidationError(
                f"utterance {uid!r}: non-contiguous ranks {ranks} (expected 1..K)"
            )
        top = self.hypotheses[0].asr_score
        if any(h.asr_score > top for h in self.hypotheses):
            raise ValidationError(
                f"utterance {uid!r}: rank 1 must carry the maximal asr_score"
            )


@dataclass(frozen=True)
class Reference:
    """Ground-truth transcript of one utterance."""

    utterance: Utterance
    text: str

    @property
    def degenerate(self) -> bool:
        """True for empty transcripts, which are legal but contribute nothing."""
        return self.text == ""


SessionItem = Union[NBestList, Reference]


@dataclass(frozen=True)
class Session:
    """Time-ordered utterances of one conversation.

    The unit of context continuity: LM context never crosses a session
    boundary.
    """

    session_id: str
    items: tuple[SessionItem, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for item in self.items:
            utt = item.utterance
            if utt.session_id != self.session_id:
                raise ValidationError(
                    f"session {self.session_id!r}: item {utt.utterance_id!r} "
                    f"belongs to session {utt.session_id!r}"
                )
            if utt.utterance_id in seen:
                raise ValidationError(
                    f"session {self.session_id!r}: duplicate utterance_id "
                    f"{utt.utterance_id!r}"
                )
            seen.add(utt.utterance_id)

    def utterances(self) -> list[Utterance]:
        return [item.utterance for item in self.items]


@dataclass(frozen=True)
class Selection:
    """The hypothesis picked for one utterance, with its fused score."""

    text: str
    rank: int
    combined_score: float


# -- JSONL helpers --


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, object) for every non-blank line."""
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{line_no}: malformed JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ValidationError(f"{path}:{line_no}: expected a JSON object")
            yield line_no, obj


def _get_str(obj: dict, key: str, where: str) -> str:
    if key not in obj:
        raise ValidationError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, str):
        raise ValidationError(f"{where}: field {key!r} must be a string")
    return value


def _get_number(obj: dict, key: str, where: str) -> float:
    if key not in obj:
        raise ValidationError(f"{where}: missing field {key!r}")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{where}: field {key!r} must be a number")
    if not math.isfinite(value):
        raise ValidationError(f"{where}: field {key!r} must be finite, got {value!r}")
    return float(value)


def _get_int(obj: dict, key: str, where: str) -> int:
    if key not in obj:
        raise ValidationError(f"{where}: missing field {key!r}")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{where}: field {key!r} must be an integer")
    return value


def _parse_utterance(obj: dict, where: str) -> Utterance:
    end_time = None
    if obj.get("end_time") is not None:
        end_time = _get_number(obj, "end_time", where)
    return Utterance(
        session_id=_get_str(obj, "session_id", where),
        utterance_id=_get_str(obj, "utterance_id", where),
        speaker_id=_get_str(obj, "speaker_id", where),
        start_time=_get_number(obj, "start_time", where),
        end_time=end_time,
    )


def _check_consistent(known: Utterance, seen: Utterance, where: str) -> None:
    for fld in ("speaker_id", "start_time", "end_time"):
        if getattr(known, fld) != getattr(seen, fld):
            raise ValidationError(
                f"{where}: field {fld!r} disagrees with an earlier line for "
                f"utterance {known.utterance_id!r}"
            )


def load_nbest(path: str | Path) -> list[Session]:
    """Load an N-best JSONL file into sessions.

    Sessions and utterances keep first-appearance order; hypotheses are
    sorted by rank and validated (contiguous ranks from 1, finite scores,
    rank 1 maximal).  Ordering by time is a separate transform.
    """
    path = Path(path)
    utts: dict[tuple[str, str], Utterance] = {}
    hyps: dict[tuple[str, str], dict[int, Hypothesis]] = {}
    session_order: dict[str, list[tuple[str, str]]] = {}

    for line_no, obj in _iter_jsonl(path):
        where = f"{path}:{line_no}"
        try:
            utt = _parse_utterance(obj, where)
            rank = _get_int(obj, "rank", where)
            hyp = Hypothesis(
                rank=rank,
                text=_get_str(obj, "text", where),
                asr_score=_get_number(obj, "asr_score", where),
            )
        except ValidationError as exc:
            # Utterance/Hypothesis invariants re-raised with file position.
            if where in str(exc):
                raise
            raise ValidationError(f"{where}: {exc}") from exc
        key = (utt.session_id, utt.utterance_id)
        if key not in utts:
            utts[key] = utt
            hyps[key] = {}
            session_order.setdefault(utt.session_id, []).append(key)
        else:
            _check_consistent(utts[key], utt, where)
        if rank in hyps[key]:
            raise ValidationError(
                f"{where}: duplicate rank {rank} for utterance "
                f"{utt.utterance_id!r} in session {utt.session_id!r}"
            )
        hyps[key][rank] = hyp

    sessions = []
    for session_id, keys in session_order.items():
        items = tuple(
            NBestList(utts[key], tuple(h for _, h in sorted(hyps[key].items())))
            for key in keys
        )
        sessions.append(Session(session_id, items))
    return sessions


def load_references(path: str | Path) -> list[Session]:
    """Load a reference JSONL file into sessions, one Reference per utterance."""
    path = Path(path)
    refs: dict[tuple[str, str], Reference] = {}
    session_order: dict[str, list[tuple[str, str]]] = {}

    for line_no, obj in _iter_jsonl(path):
        where = f"{path}:{line_no}"
        utt = _parse_utterance(obj, where)
        text = _get_str(obj, "text", where)
        key = (utt.session_id, utt.utterance_id)
        if key in refs:
            raise ValidationError(
                f"{where}: duplicate reference for utterance "
                f"{utt.utterance_id!r} in session {utt.session_id!r}"
            )
        refs[key] = Reference(utt, text)
        session_order.setdefault(utt.session_id, []).append(key)

    return [
        Session(session_id, tuple(refs[key] for key in keys))
        for session_id, keys in session_order.items()
    ]


def load_utterance_texts(path: str | Path) -> dict[tuple[str, str], str]:
    """Map (session_id, utterance_id) -> text from any per-utterance JSONL.

    Accepts both reference files and selection files; only the three
    fields are required, everything else is ignored.
    """
    path = Path(path)
    texts: dict[tuple[str, str], str] = {}
    for line_no, obj in _iter_jsonl(path):
        where = f"{path}:{line_no}"
        key = (_get_str(obj, "session_id", where), _get_str(obj, "utterance_id", where))
        if key in texts:
            raise ValidationError(f"{where}: duplicate utterance {key[1]!r}")
        texts[key] = _get_str(obj, "text", where)
    return texts


def _utterance_fields(utt: Utterance) -> dict:
    out = {
        "session_id": utt.session_id,
        "utterance_id": utt.utterance_id,
        "speaker_id": utt.speaker_id,
        "start_time": utt.start_time,
    }
    if utt.end_time is not None:
        out["end_time"] = utt.end_time
    return out


def write_nbest(sessions: Sequence[Session], path: str | Path) -> None:
    """Write sessions of N-best lists as JSONL, one hypothesis per line."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for session in sessions:
            for item in session.items:
                if not isinstance(item, NBestList):
                    raise ValidationError("write_nbest expects N-best sessions")
                for hyp in item.hypotheses:
                    record = _utterance_fields(item.utterance)
                    record.update(rank=hyp.rank, text=hyp.text, asr_score=hyp.asr_score)
                    handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_references(sessions: Sequence[Session], path: str | Path) -> None:
    """Write sessions of references as JSONL, one utterance per line."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for session in sessions:
            for item in session.items:
                if not isinstance(item, Reference):
                    raise ValidationError("write_references expects reference sessions")
                record = _utterance_fields(item.utterance)
                record["text"] = item.text
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def write_selection(
    sessions: Sequence[Session],
    picks: Mapping[tuple[str, str], Selection],
    path: str | Path,
) -> None:
    """Write the per-utterance picks as JSONL, in session/item order.

    Byte output is deterministic for identical input.  Raises if any
    utterance in ``sessions`` has no pick.
    """
    with Path(path).open("w", encoding="utf-8") as handle:
        for session in sessions:
            for item in session.items:
                key = (session.session_id, item.utterance.utterance_id)
                if key not in picks:
                    raise ValidationError(
                        f"missing pick for utterance {key[1]!r} "
                        f"in session {key[0]!r}"
                    )
                pick = picks[key]
                record = {
                    "session_id": key[0],
                    "utterance_id": key[1],
                    "text": pick.text,
                    "rank": pick.rank,
                    "combined_score": pick.combined_score,
                }
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")
