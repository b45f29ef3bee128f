"""Model backends: a fixed-seed byte-level stub and a Hugging Face loader.

A backend owns tokenization and teacher-forced scoring.  Scoring is one
forward pass in evaluation mode, no sampling, no dropout, so identical
requests produce identical float lists.  A beginning-of-sequence token
is prepended only when the request's context is empty: mid-stream
requests are continuations, and adding a BOS there would break the
chain-rule composition the client relies on.
"""

from __future__ import annotations

import torch

from .config import BridgeError


class _ByteGru(torch.nn.Module):
    """Tiny causal model over bytes; weights come from the seed alone."""

    def __init__(self, vocab: int):
        super().__init__()
        self.embed = torch.nn.Embedding(vocab, 32)
        self.gru = torch.nn.GRU(32, 64, batch_first=True)
        self.head = torch.nn.Linear(64, vocab)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        hidden, _ = self.gru(self.embed(ids))
        return self.head(hidden)


class StubBackend:
    """Byte-level causal scorer with randomly initialized, seeded weights.

    Tokens are UTF-8 bytes (ids 0..255) plus a BOS token (id 256).  The
    model is untrained; what matters is that it is a genuine causal LM:
    deterministic for a fixed seed, normalized over the vocabulary, and
    consistent under context extension.
    """

    BOS = 256

    def __init__(self, seed: int = 0):
        self.vocab_size = 257
        self.default_max_len = 512
        torch.manual_seed(seed)
        self._model = _ByteGru(self.vocab_size).eval()

    @property
    def module(self) -> torch.nn.Module:
        return self._model

    def tokenize(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def logprobs(self, context: list[int], target: list[int]) -> list[float]:
        if not target:
            return []
        prefix = list(context) if context else [self.BOS]
        seq = prefix + list(target)
        with torch.no_grad():
            ids = torch.tensor([seq[:-1]], dtype=torch.long)
            logprob = torch.log_softmax(self._model(ids), dim=-1)[0]
        start = len(prefix) - 1
        return [float(logprob[start + i, token]) for i, token in enumerate(target)]


class HfBackend:
    """Scorer over a Hugging Face causal LM.

    Loaded lazily so the stub path works without the transformers stack.
    Uses the model's own BOS token when the context is empty (skipped if
    the tokenizer defines none).
    """

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise BridgeError(
                f"model {model_id!r} needs the transformers package: {exc}"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModelForCausalLM.from_pretrained(model_id)
        except Exception as exc:
            raise BridgeError(f"cannot load model {model_id!r}: {exc}") from exc
        self._model.to(device).eval()
        self._device = device
        self.vocab_size = int(self._model.config.vocab_size)
        self.default_max_len = int(
            getattr(self._model.config, "max_position_embeddings", 4096)
        )
        # A causal model needs one input position before the first target
        # token; BOS is the natural choice, EOS the usual stand-in.
        self._start = self._tokenizer.bos_token_id
        if self._start is None:
            self._start = self._tokenizer.eos_token_id
        if self._start is None:
            raise BridgeError(
                f"model {model_id!r} defines neither BOS nor EOS; "
                "empty-context requests cannot be scored"
            )

    @property
    def module(self) -> torch.nn.Module:
        return self._model

    def tokenize(self, text: str) -> list[int]:
        return self._tokenizer.encode(text, add_special_tokens=False)

    def logprobs(self, context: list[int], target: list[int]) -> list[float]:
        if not target:
            return []
        prefix = list(context) if context else [self._start]
        seq = prefix + list(target)
        with torch.no_grad():
            ids = torch.tensor([seq[:-1]], dtype=torch.long, device=self._device)
            logits = self._model(ids).logits
            logprob = torch.log_softmax(logits.float(), dim=-1)[0]
        start = len(prefix) - 1
        return [float(logprob[start + i, token]) for i, token in enumerate(target)]


def build_backend(model: str, device: str = "cpu"):
    """``stub`` / ``stub:SEED`` or a Hugging Face model identifier."""
    if model == "stub":
        return StubBackend()
    if model.startswith("stub:"):
        seed_text = model.split(":", 1)[1]
        try:
            return StubBackend(int(seed_text))
        except ValueError:
            raise BridgeError(f"bad stub seed {seed_text!r}") from None
    return HfBackend(model, device)
