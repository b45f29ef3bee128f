"""Shared builders and stubs for the test suite."""

from __future__ import annotations

import json
from typing import Callable, Sequence

from ctx_rescore.corpus import Hypothesis, NBestList, Reference, Session, Utterance
from ctx_rescore.scorers import LmScorer, ScoreRequest, ScoreResponse


def utt(sid: str, uid: str, spk: str = "sp1", t: float = 0.0) -> Utterance:
    return Utterance(session_id=sid, utterance_id=uid, speaker_id=spk, start_time=t)


def write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")


def nbest_row(sid, uid, rank, text, score, spk="sp1", t=0.0) -> dict:
    return {
        "session_id": sid,
        "utterance_id": uid,
        "speaker_id": spk,
        "start_time": t,
        "rank": rank,
        "text": text,
        "asr_score": score,
    }


def ref_row(sid, uid, text, spk="sp1", t=0.0) -> dict:
    return {
        "session_id": sid,
        "utterance_id": uid,
        "speaker_id": spk,
        "start_time": t,
        "text": text,
    }


class StubScorer(LmScorer):
    """Scorer with a pluggable logprob rule; records every score request.

    ``logprob_fn(context, target)`` returns one float per target token.
    Defaults to -1.0 per token.  Tokenization interns whitespace words.
    """

    def __init__(self, logprob_fn: Callable | None = None):
        self._fn = logprob_fn or (lambda ctx, tgt: [-1.0] * len(tgt))
        self._ids: dict[str, int] = {}
        self._words: list[str] = []
        self.calls: list[tuple[tuple[int, ...], tuple[int, ...]]] = []

    @property
    def vocab_size(self) -> int:
        return max(len(self._words), 1)

    def tokenize(self, text: str) -> list[int]:
        out = []
        for word in text.split():
            if word not in self._ids:
                self._ids[word] = len(self._words)
                self._words.append(word)
            out.append(self._ids[word])
        return out

    def detokenize(self, ids: Sequence[int]) -> str:
        return " ".join(self._words[i] for i in ids)

    def score(self, request: ScoreRequest) -> ScoreResponse:
        self.calls.append((tuple(request.context), tuple(request.target)))
        return ScoreResponse(tuple(self._fn(request.context, request.target)))


def prepared_nbest(
    scorer: LmScorer,
    sid: str,
    uid: str,
    texts_scores: Sequence[tuple[str, float]],
    spk: str = "sp1",
    t: float = 0.0,
) -> NBestList:
    """NBestList with tokens already attached (texts used verbatim)."""
    hypotheses = tuple(
        Hypothesis(rank=i + 1, text=text, asr_score=score, tokens=tuple(scorer.tokenize(text)))
        for i, (text, score) in enumerate(texts_scores)
    )
    return NBestList(utt(sid, uid, spk, t), hypotheses)


# -- cyclic synthetic corpus --
#
# Ten single-token words w0. .. w9.; training lines are the ten rotations
# of the cycle, so every word starts exactly one line (first-token
# probabilities tie) while each in-cycle bigram is seen 9 times
# (P(next|prev) = 0.5 vs 0.05 for any other word).  An LM can only fix a
# corrupted word through cross-utterance context.

CYCLE = 10


def cyclic_word(k: int) -> str:
    return f"w{k % CYCLE}"


def cyclic_training_lines() -> list[str]:
    return [
        " ".join(cyclic_word(r + i) + "." for i in range(CYCLE)) for r in range(CYCLE)
    ]


def make_cyclic_corpus(
    rng,
    n_sessions: int,
    n_utts: int,
    plant_fraction: float,
    uncorrectable_fraction: float = 0.0,
):
    """Single-word utterances walking the cycle, with planted rank-1 errors.

    A planted utterance has a wrong word at rank 1 and the correct word
    at rank 2 (asr margin 0.2), fixable by context; an uncorrectable one
    has wrong words at both ranks.  Position 0 of a session is never
    planted, so the context chain starts clean.  Returns (nbest_sessions,
    ref_sessions, n_planted, n_uncorrectable).
    """
    nbest_sessions = []
    ref_sessions = []
    n_planted = 0
    n_uncorrectable = 0
    for s in range(n_sessions):
        sid = f"sess{s}"
        items = []
        refs = []
        for j in range(n_utts):
            uid = f"{sid}-u{j:03d}"
            correct = cyclic_word(j + s)
            wrong = cyclic_word(j + s + 3)
            wrong2 = cyclic_word(j + s + 5)
            u = utt(sid, uid, spk=f"spk{j % 2}", t=float(j))
            roll = rng.random()
            if j > 0 and roll < plant_fraction:
                hyps = ((wrong, 0.0), (correct, -0.2))
                n_planted += 1
            elif j > 0 and roll < plant_fraction + uncorrectable_fraction:
                hyps = ((wrong, 0.0), (wrong2, -0.2))
                n_uncorrectable += 1
            else:
                hyps = ((correct, 0.0), (wrong, -0.2))
            items.append(
                NBestList(
                    u,
                    tuple(
                        Hypothesis(rank=i + 1, text=text, asr_score=score)
                        for i, (text, score) in enumerate(hyps)
                    ),
                )
            )
            refs.append(Reference(u, correct))
        nbest_sessions.append(Session(sid, tuple(items)))
        ref_sessions.append(Session(sid, tuple(refs)))
    return nbest_sessions, ref_sessions, n_planted, n_uncorrectable


def random_nbest_sessions(
    rng,
    n_sessions: int,
    n_utts: int,
    n_hyps: int,
    vocab: Sequence[str] = ("alpha", "beta", "gamma", "delta", "echo"),
) -> list[Session]:
    """Random well-formed N-best sessions (rank-1 asr score maximal)."""
    sessions = []
    for s in range(n_sessions):
        sid = f"rs{s}"
        items = []
        for j in range(n_utts):
            uid = f"{sid}-u{j}"
            scores = sorted((rng.uniform(-30, 0) for _ in range(n_hyps)), reverse=True)
            hyps = tuple(
                Hypothesis(
                    rank=i + 1,
                    text=" ".join(
                        rng.choice(vocab) for _ in range(rng.randint(1, 6))
                    ),
                    asr_score=scores[i],
                )
                for i in range(n_hyps)
            )
            items.append(
                NBestList(utt(sid, uid, spk=f"spk{rng.randint(0, 2)}", t=float(j)), hyps)
            )
        sessions.append(Session(sid, tuple(items)))
    return sessions
