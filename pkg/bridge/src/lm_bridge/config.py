"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass


class BridgeError(Exception):
    """Startup or configuration failure; the service refuses to come up."""


@dataclass(frozen=True)
class BridgeConfig:
    """Everything the service needs, fixed at startup.

    ``model`` is either ``stub`` / ``stub:SEED`` (a tiny fixed-seed byte
    model for tests and plumbing) or a Hugging Face model identifier.
    ``max_len`` caps len(context_ids) + len(target_ids) per request and
    is reported verbatim by /health.
    """

    model: str
    adapters: str | None = None
    max_len: int = 512
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8080

    def __post_init__(self) -> None:
        if not self.model:
            raise BridgeError("model identifier must be non-empty")
        if self.max_len < 2:
            raise BridgeError(f"max_len must be >= 2, got {self.max_len}")
        if not 0 < self.port < 65536:
            raise BridgeError(f"port must be in 1..65535, got {self.port}")
