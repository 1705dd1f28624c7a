"""
Source-detection transfer configuration and the named transfer variants.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..context_transformer import ContextTransformerFlags
from ..exceptions import SplurgeContextTransformerParameterError

# Module domains
DOMAINS = ["detector", "transfer", "variants"]

__all__ = [
    "HEAD_MODES",
    "TARGET_HEADS",
    "TransferConfig",
    "Variant",
    "VARIANTS",
    "TABLE_ROWS",
    "get_variant",
]

# finetune: initialized from source, trained
# preserve: initialized from source, trained, and its scores feed the target pathway
# freeze:   initialized from source, never updated
# reinit:   freshly initialized, trained
# discard:  not used at all
HEAD_MODES = ("finetune", "preserve", "freeze", "reinit", "discard")
TARGET_HEADS = ("theta", "conv")


@dataclass(frozen=True)
class TransferConfig:
    """How each source head is treated during target fine-tuning and which target head is added."""

    bbox: str = "finetune"
    bg: str = "finetune"
    source_obj: str = "preserve"
    target_head: str = "theta"
    context: bool = True
    backbone: str = "finetune"

    def validate(self) -> None:
        for name in ("bbox", "bg", "source_obj", "backbone"):
            mode = getattr(self, name)
            if mode not in HEAD_MODES:
                raise SplurgeContextTransformerParameterError(
                    f"Unknown {name} mode '{mode}'", details={"allowed": list(HEAD_MODES)}
                )
        for name in ("bbox", "bg", "backbone"):
            if getattr(self, name) in ("discard", "preserve"):
                raise SplurgeContextTransformerParameterError(f"The {name} cannot be '{getattr(self, name)}'")
        if self.target_head not in TARGET_HEADS:
            raise SplurgeContextTransformerParameterError(f"Unknown target head '{self.target_head}'")
        if self.target_head == "theta" and self.source_obj == "discard":
            raise SplurgeContextTransformerParameterError("A Theta target head needs the source OBJ scores")
        if self.context and self.target_head != "theta":
            raise SplurgeContextTransformerParameterError("The context module sits on the Theta target head")

    @property
    def uses_source_obj(self) -> bool:
        return self.source_obj != "discard"

    def trainable(self, head: str) -> bool:
        return getattr(self, head) not in ("freeze", "discard")


@dataclass(frozen=True)
class Variant:
    """A named transfer setting: head treatment plus Context-Transformer flags."""

    name: str
    transfer: TransferConfig
    flags: ContextTransformerFlags = field(default_factory=ContextTransformerFlags)
    description: str = ""


VARIANTS: dict[str, Variant] = {
    v.name: v
    for v in (
        Variant(
            "baseline",
            TransferConfig(source_obj="discard", target_head="conv", context=False),
            description="new target OBJ conv head; source OBJ dropped",
        ),
        Variant(
            "source-obj-only",
            TransferConfig(context=False),
            description="source OBJ preserved, target OBJ on its scores",
        ),
        Variant(
            "transformer-only",
            TransferConfig(source_obj="reinit"),
            description="Context-Transformer on a re-initialized source OBJ",
        ),
        Variant("full", TransferConfig(), description="source OBJ preserved plus Context-Transformer"),
        Variant(
            "unload",
            TransferConfig(),
            ContextTransformerFlags(mode="unload-at-test"),
            description="trained with Context-Transformer, unloaded at test",
        ),
        Variant(
            "non-local",
            TransferConfig(),
            ContextTransformerFlags(mode="non-local"),
            description="affinity among prior boxes without contextual fields",
        ),
    )
}

# Row order of the transfer comparison table.
TABLE_ROWS = ("baseline", "source-obj-only", "transformer-only", "full", "unload")


def get_variant(name: str) -> Variant:
    """Look up a variant by name.

    Raises:
        SplurgeContextTransformerParameterError: If the name is unknown
    """
    try:
        return VARIANTS[name]
    except KeyError:
        raise SplurgeContextTransformerParameterError(
            f"Unknown variant '{name}'", details={"allowed": sorted(VARIANTS)}
        ) from None
