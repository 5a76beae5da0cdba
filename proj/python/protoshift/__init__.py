"""Few-shot classification under data shift: graph-backed prototypes."""

from ._protoshift import (
    ConfigError,
    __version__,
    ablate,
    evaluate,
    grad_self_check,
    sweep,
    synth,
    train,
)

__all__ = [
    "ConfigError",
    "__version__",
    "ablate",
    "evaluate",
    "grad_self_check",
    "sweep",
    "synth",
    "train",
]
