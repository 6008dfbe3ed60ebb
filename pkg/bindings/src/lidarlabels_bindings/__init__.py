"""In-process array bindings over the lidarlabels toolkit."""

from .core import (
    SET_ACCURATE,
    SET_COARSE,
    SET_IGNORED,
    SET_NEGATIVE,
    BoundScene,
    assign,
    bind_assign,
    bind_sar,
    combine_loss,
    gen_labels,
    load_manifest,
    panoptic_eval,
    sar_refine,
)

__version__ = "0.1.0"

__all__ = [
    "SET_ACCURATE",
    "SET_COARSE",
    "SET_NEGATIVE",
    "SET_IGNORED",
    "BoundScene",
    "assign",
    "bind_assign",
    "bind_sar",
    "combine_loss",
    "gen_labels",
    "load_manifest",
    "panoptic_eval",
    "sar_refine",
]
