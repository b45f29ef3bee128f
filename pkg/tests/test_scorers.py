"""Scorer implementations: uniform, add-one n-gram, remote client."""

import json
import math
import random
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from ctx_rescore.errors import ScorerError, TransportError, ValidationError
from ctx_rescore.scorers import (
    NGramScorer,
    RemoteScorer,
    ScoreRequest,
    UniformScorer,
    build_scorer,
)


def test_uniform_logprobs_ignore_identity_and_context():
    scorer = UniformScorer(100)
    expected = -math.log(100)
    for context in ((), (0, 1, 2)):
        response = scorer.score(ScoreRequest(context, (5, 5, 7)))
        assert response.token_logprobs == (expected,) * 3
    assert scorer.vocab_size == 100


def test_uniform_tokenize_deterministic_and_open():
    scorer = UniformScorer(3)
    ids1 = scorer.tokenize("a b a")
    assert ids1 == scorer.tokenize("a b a")
    assert ids1[0] == ids1[2]
    assert scorer.tokenize("") == []
    # Interning is open-ended: more distinct words than V is fine.
    scorer.tokenize("c d e f g")
    assert scorer.detokenize(ids1) == "a b a"


def test_uniform_rejects_bad_vocab():
    with pytest.raises(ValidationError):
        UniformScorer(0)


def test_empty_target_yields_empty_response():
    # Scoring nothing is a no-op, not an error; callers that want to
    # skip empty hypotheses do so before building the request.
    for scorer in (UniformScorer(5), make_bigram()):
        response = scorer.score(ScoreRequest((0,), ()))
        assert response.token_logprobs == ()
        assert response.total == 0.0


def make_bigram():
    return NGramScorer(["a b a b"], order=2)


def test_ngram_hand_counted_probabilities():
    # Train "a b a b": counts (<s>,a)=1, (a,b)=2, (b,a)=1; V = 3 events.
    scorer = make_bigram()
    a, b = scorer.tokenize("a b")[:2]
    p_b_given_a = math.exp(scorer.score(ScoreRequest((a,), (b,))).token_logprobs[0])
    assert p_b_given_a == pytest.approx(3 / 5, rel=1e-12)
    p_a_start = math.exp(scorer.score(ScoreRequest((), (a,))).token_logprobs[0])
    assert p_a_start == pytest.approx(2 / 4, rel=1e-12)
    unk = scorer.tokenize("zzz")[0]
    p_unk_given_a = math.exp(scorer.score(ScoreRequest((a,), (unk,))).token_logprobs[0])
    assert p_unk_given_a == pytest.approx(1 / 5, rel=1e-12)


def test_ngram_tokenize_and_detokenize():
    scorer = make_bigram()
    assert scorer.tokenize("a b a") == [scorer.tokenize("a")[0], scorer.tokenize("b")[0], scorer.tokenize("a")[0]]
    assert scorer.vocab_size == 3  # a, b, <unk>
    unk = scorer.tokenize("missing")[0]
    assert scorer.detokenize([unk]) == "<unk>"
    assert scorer.detokenize(scorer.tokenize("b a")) == "b a"
    with pytest.raises(ValidationError):
        scorer.detokenize([99])


def test_ngram_distribution_sums_to_one():
    rng = random.Random(3)
    words = ["red", "green", "blue", "cyan"]
    lines = [
        " ".join(rng.choice(words) for _ in range(rng.randint(1, 8))) for _ in range(20)
    ]
    for order in (1, 2, 3):
        scorer = NGramScorer(lines, order=order)
        for context in [(), tuple(scorer.tokenize("red green")), tuple(scorer.tokenize("blue"))]:
            total = sum(
                math.exp(scorer.score(ScoreRequest(context, (t,))).token_logprobs[0])
                for t in range(scorer.vocab_size)
            )
            assert total == pytest.approx(1.0, abs=1e-9)


def test_chain_rule_exact():
    # Per-token logprobs of a concatenation equal the concatenated
    # per-token logprobs of the split scoring, bit for bit.
    rng = random.Random(4)
    words = ["w1", "w2", "w3"]
    lines = [" ".join(rng.choice(words) for _ in range(6)) for _ in range(10)]
    scorers = [NGramScorer(lines, order=o) for o in (1, 2, 3)] + [UniformScorer(42)]
    for scorer in scorers:
        vocab = min(scorer.vocab_size, 3)
        for _ in range(200):
            ctx = tuple(rng.randrange(vocab) for _ in range(rng.randint(0, 6)))
            t1 = tuple(rng.randrange(vocab) for _ in range(rng.randint(1, 5)))
            t2 = tuple(rng.randrange(vocab) for _ in range(rng.randint(1, 5)))
            whole = scorer.score(ScoreRequest(ctx, t1 + t2)).token_logprobs
            part1 = scorer.score(ScoreRequest(ctx, t1)).token_logprobs
            part2 = scorer.score(ScoreRequest(ctx + t1, t2)).token_logprobs
            assert whole == part1 + part2
            # Prefix consistency is the same statement for the first part.
            assert whole[: len(t1)] == part1


def test_ngram_rejects_out_of_range_ids():
    scorer = make_bigram()
    with pytest.raises(ValidationError, match="out of range"):
        scorer.score(ScoreRequest((), (scorer.vocab_size,)))  # the sentinel id
    with pytest.raises(ValidationError, match="out of range"):
        scorer.score(ScoreRequest((-1,), (0,)))
    with pytest.raises(ValidationError, match="integers"):
        scorer.score(ScoreRequest((0,), (True,)))


def test_ngram_training_validation(tmp_path):
    with pytest.raises(ValidationError, match="order"):
        NGramScorer(["a"], order=0)
    with pytest.raises(ValidationError, match="no tokens"):
        NGramScorer(["   "])
    missing = tmp_path / "nope.txt"
    with pytest.raises(ValidationError, match="nope"):
        NGramScorer.from_file(missing)
    empty = tmp_path / "empty.txt"
    empty.write_text("\n\n")
    with pytest.raises(ValidationError, match="empty"):
        NGramScorer.from_file(empty)


def test_batch_score_matches_map_and_isolates_errors():
    scorer = make_bigram()
    a = scorer.tokenize("a")[0]
    good = ScoreRequest((), (a,))
    bad = ScoreRequest((), (999,))
    results = scorer.batch_score([good, bad, good])
    assert results[0] == scorer.score(good)
    assert isinstance(results[1], ValidationError)
    assert results[2] == scorer.score(good)
    assert scorer.batch_score([]) == []
    many = scorer.batch_score([good] * 32)
    assert all(r == results[0] for r in many)


def test_build_scorer_specs(tmp_path, monkeypatch):
    monkeypatch.delenv("CTX_RESCORE_SCORER_URL", raising=False)
    assert isinstance(build_scorer("uniform"), UniformScorer)
    assert build_scorer("uniform:7").vocab_size == 7
    train = tmp_path / "train.txt"
    train.write_text("a b\n")
    assert isinstance(build_scorer(f"ngram:{train}"), NGramScorer)
    assert build_scorer(f"ngram:{train}:3").order == 3
    for bad in ("uniform:x", "ngram", "mystery", "uniform:-1"):
        with pytest.raises(ValidationError):
            build_scorer(bad)
    with pytest.raises(ValidationError, match="URL"):
        build_scorer("remote")


# -- remote scorer against a canned HTTP stub --


@contextmanager
def stub_server(routes):
    """Serve canned (status, payload) responses; payload may be raw bytes."""

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _respond(self, key):
            status, payload = routes[key]
            body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            self._respond(("GET", self.path))

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            self.rfile.read(length)
            self._respond(("POST", self.path))

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        thread.join()


HEALTH = {"model": "stub", "vocab_size": 50, "max_len": 16}


def test_remote_scorer_happy_path():
    routes = {
        ("GET", "/health"): (200, HEALTH),
        ("POST", "/tokenize"): (200, {"ids": [1, 2, 3]}),
        ("POST", "/logprobs"): (200, {"token_logprobs": [-0.5, -1.5]}),
    }
    with stub_server(routes) as url:
        scorer = RemoteScorer(url)
        assert scorer.model == "stub"
        assert scorer.vocab_size == 50
        assert scorer.tokenize("anything") == [1, 2, 3]
        response = scorer.score(ScoreRequest((1,), (2, 3)))
        assert response.token_logprobs == (-0.5, -1.5)
        with pytest.raises(NotImplementedError):
            scorer.detokenize([1])


def test_remote_scorer_env_url(monkeypatch):
    routes = {("GET", "/health"): (200, HEALTH)}
    with stub_server(routes) as url:
        monkeypatch.setenv("CTX_RESCORE_SCORER_URL", url)
        scorer = build_scorer("remote")
        assert scorer.max_len == 16


def test_remote_scorer_connection_refused_is_transport_error():
    with pytest.raises(TransportError):
        RemoteScorer("http://127.0.0.1:9", timeout=0.5)


def test_remote_scorer_5xx_is_transport_4xx_is_validation():
    with stub_server({("GET", "/health"): (500, {"detail": "boom"})}) as url:
        with pytest.raises(TransportError):
            RemoteScorer(url)
    with stub_server(
        {
            ("GET", "/health"): (200, HEALTH),
            ("POST", "/logprobs"): (422, {"detail": "too long"}),
        }
    ) as url:
        scorer = RemoteScorer(url)
        with pytest.raises(ValidationError):
            scorer.score(ScoreRequest((), (1,)))


def test_remote_scorer_rejects_bad_payloads():
    base = {("GET", "/health"): (200, HEALTH)}
    with stub_server({**base, ("POST", "/logprobs"): (200, b"not json")}) as url:
        with pytest.raises(ScorerError, match="non-JSON"):
            RemoteScorer(url).score(ScoreRequest((), (1,)))
    with stub_server({**base, ("POST", "/logprobs"): (200, {"token_logprobs": [-1.0]})}) as url:
        with pytest.raises(ScorerError, match="logprobs"):
            RemoteScorer(url).score(ScoreRequest((), (1, 2)))
    with stub_server(
        {**base, ("POST", "/logprobs"): (200, b'{"token_logprobs": [Infinity]}')}
    ) as url:
        with pytest.raises(ScorerError, match="range"):
            RemoteScorer(url).score(ScoreRequest((), (1,)))
    with stub_server({**base, ("POST", "/tokenize"): (200, {"ids": ["x"]})}) as url:
        with pytest.raises(ScorerError, match="tokenize"):
            RemoteScorer(url).tokenize("hi")
    with stub_server({("GET", "/health"): (200, {"model": "m"})}) as url:
        with pytest.raises(ScorerError, match="health"):
            RemoteScorer(url)


def test_remote_scorer_client_side_max_len():
    with stub_server({("GET", "/health"): (200, HEALTH)}) as url:
        scorer = RemoteScorer(url)
        with pytest.raises(ValidationError, match="max_len"):
            scorer.score(ScoreRequest(tuple(range(10)), tuple(range(7))))
