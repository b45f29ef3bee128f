"""Word error rate, oracle selection, and matched-pairs significance.

Alignment is minimal edit distance over words with unit costs; among
minimal alignments the backtrace prefers hit over substitution over
insertion over deletion, so counts are deterministic.  Corpus WER pools
counts over utterances (never an average of per-utterance rates).  The
oracle picks the hypothesis closest to the reference, a lower bound for
any selection policy.  System comparison uses a matched-pairs normal
approximation over per-utterance error-count differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import Hypothesis, NBestList, Reference
from .errors import ValidationError


def words_for_scoring(text: str) -> tuple[str, ...]:
    """Whitespace words with one sentence-final period stripped.

    The engine appends a period before LM scoring; references carry no
    symbols, so scoring a selection against a reference must ignore it.
    Exactly one trailing period is removed (from whichever side has one;
    both sides get the same treatment, so genuine periods stay fair).
    """
    text = text.rstrip()
    if text.endswith("."):
        text = text[:-1]
    return tuple(text.split())


@dataclass(frozen=True)
class AlignCounts:
    """Hit/substitution/deletion/insertion decomposition of one alignment."""

    hits: int = 0
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def ref_words(self) -> int:
        return self.hits + self.substitutions + self.deletions

    @property
    def hyp_words(self) -> int:
        return self.hits + self.substitutions + self.insertions

    def __add__(self, other: "AlignCounts") -> "AlignCounts":
        return AlignCounts(
            self.hits + other.hits,
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
        )


def align(ref: Sequence[str], hyp: Sequence[str]) -> AlignCounts:
    """Minimal-edit-distance alignment counts between word sequences.

    Unit costs (hit 0, substitution/deletion/insertion 1).  Backtrace
    tie preference: hit, then substitution, then insertion, then
    deletion.  Empty sequences are legal.
    """
    m, n = len(ref), len(hyp)
    # dist[i][j]: cost of aligning ref[:i] with hyp[:j].
    dist = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        dist[i][0] = i
    for j in range(1, n + 1):
        dist[0][j] = j
    for i in range(1, m + 1):
        row, above = dist[i], dist[i - 1]
        for j in range(1, n + 1):
            diagonal = above[j - 1] + (ref[i - 1] != hyp[j - 1])
            row[j] = min(diagonal, row[j - 1] + 1, above[j] + 1)

    hits = substitutions = deletions = insertions = 0
    i, j = m, n
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == dist[i - 1][j - 1]:
            hits += 1
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and here == dist[i - 1][j - 1] + 1:
            substitutions += 1
            i, j = i - 1, j - 1
        elif j > 0 and here == dist[i][j - 1] + 1:
            insertions += 1
            j -= 1
        else:
            deletions += 1
            i -= 1
    return AlignCounts(hits, substitutions, deletions, insertions)


@dataclass(frozen=True)
class WerReport:
    """Pooled alignment counts and the word error rate they imply."""

    counts: AlignCounts
    ref_words: int
    wer: float


def corpus_wer(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> WerReport:
    """WER pooled over (reference, hypothesis) word-sequence pairs.

    Errors and reference words are summed first and divided once; a
    corpus with no reference words has no defined error rate.
    """
    total = AlignCounts()
    for ref, hyp in pairs:
        total = total + align(ref, hyp)
    if total.ref_words == 0:
        raise ValidationError("corpus has no reference words: WER is undefined")
    return WerReport(total, total.ref_words, total.errors / total.ref_words)


def oracle_select(nbest: NBestList, ref: Reference) -> Hypothesis:
    """The hypothesis closest to the reference; ties go to the lowest rank."""
    ref_words = words_for_scoring(ref.text)
    best = nbest.hypotheses[0]
    best_distance = align(ref_words, words_for_scoring(best.text)).errors
    for hyp in nbest.hypotheses[1:]:
        distance = align(ref_words, words_for_scoring(hyp.text)).errors
        if distance < best_distance:
            best, best_distance = hyp, distance
    return best


@dataclass(frozen=True)
class SigTestResult:
    """Matched-pairs comparison of two systems' per-utterance error counts.

    ``statistic`` is None when the difference variance is zero (nothing
    to standardize by): all-equal systems report p = 1.0 with a
    ``no_difference`` flag, and a constant nonzero difference reports
    p = 0.0 with a ``degenerate_variance`` flag.
    """

    n: int
    mean_diff: float
    statistic: float | None
    p_value: float
    significant_5: bool
    significant_1: bool
    flags: tuple[str, ...] = ()


def significance_matched_pairs(
    errors_a: Sequence[int], errors_b: Sequence[int]
) -> SigTestResult:
    """Two-sided matched-pairs test on per-utterance error counts.

    The statistic is mean(d) / (stddev(d) / sqrt(n)) over the
    differences d_i = errors_a[i] - errors_b[i] (population standard
    deviation), with the p-value from the normal approximation.  Needs
    at least two utterances where the systems differ; identical systems
    short-circuit to p = 1.0.
    """
    if len(errors_a) != len(errors_b):
        raise ValidationError(
            f"matched pairs need equal lengths, got {len(errors_a)} and {len(errors_b)}"
        )
    if not errors_a:
        raise ValidationError("matched-pairs test needs at least one utterance")
    diffs = [a - b for a, b in zip(errors_a, errors_b)]
    n = len(diffs)
    nonzero = sum(1 for d in diffs if d != 0)
    if nonzero == 0:
        return SigTestResult(n, 0.0, None, 1.0, False, False, ("no_difference",))
    if nonzero < 2:
        raise ValidationError(
            "insufficient pairs: need >= 2 utterances with differing error counts"
        )
    mean = sum(diffs) / n
    variance = sum((d - mean) ** 2 for d in diffs) / n
    if variance == 0.0:
        return SigTestResult(n, mean, None, 0.0, True, True, ("degenerate_variance",))
    statistic = mean / (math.sqrt(variance) / math.sqrt(n))
    p_value = math.erfc(abs(statistic) / math.sqrt(2))
    return SigTestResult(
        n, mean, statistic, p_value, p_value < 0.05, p_value < 0.01, ()
    )
