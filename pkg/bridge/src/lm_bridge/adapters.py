"""Low-rank adapter merging.

Adapters arrive as a torch-saved dict:

    {"adapter_id": str,
     "weights": {param_name: {"a": Tensor[r, in],
                              "b": Tensor[out, r],
                              "scale": float}}}

Each named 2-D parameter gains ``scale * (b @ a)`` in place, the usual
merged deployment of a low-rank delta over frozen base weights.  Any
inconsistency (unknown parameter, wrong rank, shape mismatch) is a
startup failure: a half-adapted model must never serve.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .config import BridgeError


def load_adapters(model: torch.nn.Module, path: str | Path) -> str:
    """Merge the adapter file into the model; returns the adapter id."""
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise BridgeError(f"adapter file not found: {path}") from None
    except Exception as exc:
        raise BridgeError(f"cannot read adapter file {path}: {exc}") from exc

    if (
        not isinstance(payload, dict)
        or not isinstance(payload.get("adapter_id"), str)
        or not isinstance(payload.get("weights"), dict)
        or not payload["weights"]
    ):
        raise BridgeError(
            f"adapter file {path} must hold {{'adapter_id': str, 'weights': {{...}}}}"
        )

    params = dict(model.named_parameters())
    for name, spec in payload["weights"].items():
        if name not in params:
            raise BridgeError(f"adapter targets unknown parameter {name!r}")
        weight = params[name]
        if weight.ndim != 2:
            raise BridgeError(
                f"adapter target {name!r} must be a 2-D weight, got shape "
                f"{tuple(weight.shape)}"
            )
        try:
            a, b, scale = spec["a"], spec["b"], float(spec["scale"])
        except (KeyError, TypeError) as exc:
            raise BridgeError(f"adapter entry {name!r} needs a, b, scale: {exc}") from exc
        if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[1]:
            raise BridgeError(
                f"adapter entry {name!r} has inconsistent ranks: a {tuple(a.shape)}, "
                f"b {tuple(b.shape)}"
            )
        if (b.shape[0], a.shape[1]) != tuple(weight.shape):
            raise BridgeError(
                f"adapter entry {name!r} produces shape ({b.shape[0]}, {a.shape[1]}), "
                f"base weight is {tuple(weight.shape)}"
            )
        with torch.no_grad():
            weight.add_(scale * (b.float() @ a.float()))
    return payload["adapter_id"]
