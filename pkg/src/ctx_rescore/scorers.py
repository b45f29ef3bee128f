"""Language-model scorers behind one interface.

A scorer owns its tokenizer and returns one natural-log conditional
probability per target token, given an explicit token-id context.  All
implementations satisfy prefix consistency: scoring a concatenated
target equals scoring its pieces with the history rolled forward, token
by token, bit for bit.

Three implementations: a uniform distribution over a notional vocabulary
(every token costs -ln(V)), an add-one smoothed n-gram trained from a
text file, and a client for a remote scorer speaking the HTTP protocol
(POST /tokenize, POST /logprobs, GET /health).
"""

from __future__ import annotations

import math
import os
import threading
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import requests

from .errors import ScorerError, TransportError, ValidationError

SCORER_URL_ENV = "CTX_RESCORE_SCORER_URL"


@dataclass(frozen=True)
class ScoreRequest:
    """Target token ids to score, conditioned on preceding context ids."""

    context: tuple[int, ...]
    target: tuple[int, ...]


@dataclass(frozen=True)
class ScoreResponse:
    """Natural-log conditional probability of each target token, in order."""

    token_logprobs: tuple[float, ...]

    @property
    def total(self) -> float:
        return sum(self.token_logprobs)


class LmScorer(ABC):
    """Tokenization plus per-token conditional log-probabilities."""

    @abstractmethod
    def tokenize(self, text: str) -> list[int]:
        """Map text to token ids.  Deterministic per scorer instance."""

    @abstractmethod
    def detokenize(self, ids: Sequence[int]) -> str:
        """Map token ids back to text (diagnostics only; may be lossy)."""

    @property
    @abstractmethod
    def vocab_size(self) -> int:
        """Number of distinct token ids the scorer can emit."""

    @abstractmethod
    def score(self, request: ScoreRequest) -> ScoreResponse:
        """Score the request's target tokens.  One logprob per token."""

    def batch_score(self, requests_: Sequence[ScoreRequest]) -> list:
        """Score many requests; failures isolate per element.

        Element i of the result is a ScoreResponse, or the exception the
        i-th request raised.  Later requests still run.
        """
        results: list = []
        for request in requests_:
            try:
                results.append(self.score(request))
            except Exception as exc:  # noqa: BLE001 - isolate per element
                results.append(exc)
        return results


def _validate_request(request: ScoreRequest, vocab_size: int) -> None:
    for name, ids in (("context", request.context), ("target", request.target)):
        for token in ids:
            if isinstance(token, bool) or not isinstance(token, int):
                raise ValidationError(f"{name} ids must be integers, got {token!r}")
            if not 0 <= token < vocab_size:
                raise ValidationError(
                    f"{name} id {token} out of range for vocab size {vocab_size}"
                )


class UniformScorer(LmScorer):
    """Every token costs -ln(V), regardless of identity or context.

    V is a distribution parameter, not a tokenizer limit: the whitespace
    tokenizer interns new words on sight, and ids beyond V still cost
    -ln(V).  The closed form makes it the reference point for pipeline
    checks (rescoring with it degenerates to a pure length reward, and
    perplexity under it is exactly V).
    """

    def __init__(self, vocab_size: int = 100):
        if vocab_size < 1:
            raise ValidationError(f"vocab size must be >= 1, got {vocab_size}")
        self._vocab_size = vocab_size
        self._logprob = -math.log(vocab_size)
        self._ids: dict[str, int] = {}
        self._words: list[str] = []
        self._lock = threading.Lock()

    @property
    def vocab_size(self) -> int:
        return self._vocab_size

    def tokenize(self, text: str) -> list[int]:
        out = []
        with self._lock:
            for word in text.split():
                if word not in self._ids:
                    self._ids[word] = len(self._words)
                    self._words.append(word)
                out.append(self._ids[word])
        return out

    def detokenize(self, ids: Sequence[int]) -> str:
        with self._lock:
            try:
                return " ".join(self._words[i] for i in ids)
            except IndexError:
                raise ValidationError("unknown token id in detokenize") from None

    def score(self, request: ScoreRequest) -> ScoreResponse:
        for token in request.target:
            if isinstance(token, bool) or not isinstance(token, int) or token < 0:
                raise ValidationError(f"target ids must be non-negative ints, got {token!r}")
        return ScoreResponse(tuple(self._logprob for _ in request.target))


class NGramScorer(LmScorer):
    """Add-one smoothed n-gram over a whitespace vocabulary.

    The vocabulary is the sorted set of words in the training lines, plus
    an unknown-word token; out-of-vocabulary words tokenize to it.  Each
    training line is padded on the left with order-1 start sentinels, so
    line starts are modeled; the sentinel is context-only and never a
    predicted event.  With V = len(vocab) + 1 event types,

        P(w | h) = (count(h, w) + 1) / (count(h) + V)

    which is strictly positive for any history, seen or not.  Instances
    are immutable after training and safe to share across threads.
    """

    UNK = "<unk>"

    def __init__(self, lines: Sequence[str], order: int = 2):
        if order < 1:
            raise ValidationError(f"n-gram order must be >= 1, got {order}")
        self.order = order
        words = sorted({word for line in lines for word in line.split()})
        if not words:
            raise ValidationError("n-gram training data contains no tokens")
        self._ids = {word: i for i, word in enumerate(words)}
        self._words = words
        self._unk_id = len(words)
        self._sentinel = len(words) + 1  # internal only, never in requests
        self._event_types = len(words) + 1  # vocab plus unknown

        self._ngram_counts: Counter = Counter()
        self._context_counts: Counter = Counter()
        pad = (self._sentinel,) * (order - 1)
        for line in lines:
            ids = tuple(self._ids[word] for word in line.split())
            if not ids:
                continue
            seq = pad + ids
            for i in range(order - 1, len(seq)):
                history = seq[i - order + 1 : i]
                self._ngram_counts[(history, seq[i])] += 1
                self._context_counts[history] += 1

    @classmethod
    def from_file(cls, path: str | Path, order: int = 2) -> "NGramScorer":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ValidationError(f"training file not found: {path}") from None
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise ValidationError(f"training file is empty: {path}")
        return cls(lines, order=order)

    @property
    def vocab_size(self) -> int:
        return self._event_types

    def tokenize(self, text: str) -> list[int]:
        return [self._ids.get(word, self._unk_id) for word in text.split()]

    def detokenize(self, ids: Sequence[int]) -> str:
        words = []
        for token in ids:
            if 0 <= token < len(self._words):
                words.append(self._words[token])
            elif token == self._unk_id:
                words.append(self.UNK)
            else:
                raise ValidationError(f"unknown token id {token} in detokenize")
        return " ".join(words)

    def _history(self, prefix: tuple[int, ...]) -> tuple[int, ...]:
        """Last order-1 tokens of the prefix, sentinel-padded on the left."""
        need = self.order - 1
        tail = prefix[-need:] if need else ()
        return (self._sentinel,) * (need - len(tail)) + tuple(tail)

    def logprob(self, history: tuple[int, ...], token: int) -> float:
        numer = self._ngram_counts[(history, token)] + 1
        denom = self._context_counts[history] + self._event_types
        return math.log(numer / denom)

    def score(self, request: ScoreRequest) -> ScoreResponse:
        _validate_request(request, self._event_types)
        prefix = tuple(request.context)
        logprobs = []
        for token in request.target:
            logprobs.append(self.logprob(self._history(prefix), token))
            prefix = prefix + (token,)
        return ScoreResponse(tuple(logprobs))


class RemoteScorer(LmScorer):
    """Client for a scorer served over HTTP.

    Checks GET /health eagerly at construction, so a dead or misconfigured
    endpoint fails at startup rather than mid-run.  Connection failures,
    timeouts, and 5xx responses raise TransportError (retry may succeed);
    4xx responses raise ValidationError; malformed or non-finite payloads
    raise ScorerError.
    """

    def __init__(self, url: str | None = None, timeout: float = 30.0):
        url = url or os.environ.get(SCORER_URL_ENV)
        if not url:
            raise ValidationError(
                f"remote scorer needs a URL (flag or {SCORER_URL_ENV})"
            )
        self.url = url.rstrip("/")
        self.timeout = timeout
        self._local = threading.local()
        health = self._request("GET", "/health")
        try:
            self.model = str(health["model"])
            self._vocab_size = int(health["vocab_size"])
            self.max_len = int(health["max_len"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerError(f"bad /health payload from {self.url}: {health!r}") from exc

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def _request(self, method: str, route: str, payload: dict | None = None) -> dict:
        try:
            response = self._session().request(
                method, self.url + route, json=payload, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"scorer unreachable at {self.url}{route}: {exc}") from exc
        if response.status_code >= 500:
            raise TransportError(
                f"scorer error {response.status_code} from {route}: {response.text[:200]}"
            )
        if response.status_code >= 400:
            raise ValidationError(
                f"scorer rejected {route} ({response.status_code}): {response.text[:200]}"
            )
        try:
            body = response.json()
        except ValueError as exc:
            raise ScorerError(f"non-JSON response from {route}") from exc
        if not isinstance(body, dict):
            raise ScorerError(f"unexpected response shape from {route}: {body!r}")
        return body

    @property
    def vocab_size(self) -> int:
        return self._vocab_size

    def tokenize(self, text: str) -> list[int]:
        body = self._request("POST", "/tokenize", {"text": text})
        ids = body.get("ids")
        if not isinstance(ids, list) or not all(
            isinstance(i, int) and not isinstance(i, bool) for i in ids
        ):
            raise ScorerError(f"bad /tokenize payload: {body!r}")
        return ids

    def detokenize(self, ids: Sequence[int]) -> str:
        raise NotImplementedError("the wire protocol has no detokenize endpoint")

    def score(self, request: ScoreRequest) -> ScoreResponse:
        total = len(request.context) + len(request.target)
        if total > self.max_len:
            raise ValidationError(
                f"request of {total} tokens exceeds scorer max_len {self.max_len}"
            )
        body = self._request(
            "POST",
            "/logprobs",
            {"context_ids": list(request.context), "target_ids": list(request.target)},
        )
        logprobs = body.get("token_logprobs")
        if not isinstance(logprobs, list) or len(logprobs) != len(request.target):
            raise ScorerError(f"bad /logprobs payload: {body!r}")
        values = []
        for value in logprobs:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ScorerError(f"non-numeric logprob in response: {value!r}")
            if not math.isfinite(value) or value > 0:
                raise ScorerError(f"logprob out of range: {value!r}")
            values.append(float(value))
        return ScoreResponse(tuple(values))


def build_scorer(spec: str) -> LmScorer:
    """Build a scorer from a compact spec string.

    ``uniform`` or ``uniform:V`` (default V=100); ``ngram:PATH`` or
    ``ngram:PATH:ORDER`` (default order 2); ``remote`` or ``remote:URL``
    (URL falls back to the CTX_RESCORE_SCORER_URL environment variable).
    """
    kind, _, rest = spec.partition(":")
    if kind == "uniform":
        if not rest:
            return UniformScorer()
        try:
            return UniformScorer(int(rest))
        except ValueError:
            raise ValidationError(f"bad uniform vocab size: {rest!r}") from None
    if kind == "ngram":
        if not rest:
            raise ValidationError("ngram scorer needs a training file: ngram:PATH[:ORDER]")
        path, _, order_text = rest.rpartition(":")
        if path and order_text.isdigit():
            return NGramScorer.from_file(path, order=int(order_text))
        return NGramScorer.from_file(rest)
    if kind == "remote":
        return RemoteScorer(rest or None)
    raise ValidationError(
        f"unknown scorer {spec!r} (expected uniform[:V], ngram:PATH[:ORDER], remote[:URL])"
    )
