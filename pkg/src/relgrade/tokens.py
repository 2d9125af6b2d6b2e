"""Closed output-token vocabulary and special input markers.

The decoder emits reasoning-trace tokens from a closed template vocabulary
followed by one label token and an end-of-sequence token. Keeping the
trace vocabulary closed keeps the output space small and makes
well-formedness mechanically checkable.
"""

from __future__ import annotations

from relgrade.rulejudge import AttrOverlap, MatchState, ModifierAxis, ProductAxis
from relgrade.schema import Label, ORDERED_LABELS

# Special input tokens.
UNK = "<unk>"
SEP = "<sep>"
RA_MARK = "<ra>"
DR_MARK = "<dr>"

EOS = "<eos>"

#: Label tokens, canonical text forms in descending rank order.
LABEL_TOKENS: tuple[str, ...] = tuple(label.value for label in ORDERED_LABELS)


def label_token(label: Label) -> str:
    return label.value


# Per-dimension analysis tokens (one verdict per dimension the query states).
_TYPE_AXIS_TOKENS = {
    ProductAxis.TYPE_MATCH: "TYPE_MATCH",
    ProductAxis.FUNCTION_MATCH: "TYPE_FUNCTION",
    ProductAxis.ACCESSORY_MATCH: "TYPE_ACCESSORY",
    ProductAxis.MISMATCH: "TYPE_MISMATCH",
}

_BRAND_TOKENS = {
    MatchState.MATCHED: "BRAND_MATCH",
    MatchState.CONTRADICTED: "BRAND_MISMATCH",
    MatchState.UNMET: "BRAND_MISMATCH",
}

_MODEL_TOKENS = {
    MatchState.MATCHED: "MODEL_MATCH",
    MatchState.UNMET: "MODEL_UNMET",
    MatchState.CONTRADICTED: "MODEL_MISMATCH",
}

_ATTR_TOKENS = {
    AttrOverlap.ALL: "ATTR_MATCH",
    AttrOverlap.SOME: "ATTR_PARTIAL",
    AttrOverlap.NONE: "ATTR_MISMATCH",
}

EE_TOKENS: tuple[str, ...] = (
    "TYPE_MATCH",
    "TYPE_FUNCTION",
    "TYPE_ACCESSORY",
    "TYPE_MISMATCH",
    "BRAND_MATCH",
    "BRAND_MISMATCH",
    "MODEL_MATCH",
    "MODEL_UNMET",
    "MODEL_MISMATCH",
    "ATTR_MATCH",
    "ATTR_PARTIAL",
    "ATTR_MISMATCH",
)


def type_axis_token(axis: ProductAxis) -> str:
    return _TYPE_AXIS_TOKENS[axis]


def brand_token(state: MatchState) -> str:
    return _BRAND_TOKENS[state]


def model_token(state: MatchState) -> str:
    return _MODEL_TOKENS[state]


def attr_token(overlap: AttrOverlap) -> str:
    return _ATTR_TOKENS[overlap]


# Rule-trace tokens: product axis, modifier axis, then the ruled tier.
_PRODUCT_AXIS_TOKENS = {
    ProductAxis.TYPE_MATCH: "PRODUCT_TYPE_MATCH",
    ProductAxis.FUNCTION_MATCH: "PRODUCT_FUNCTION_MATCH",
    ProductAxis.ACCESSORY_MATCH: "PRODUCT_ACCESSORY_MATCH",
    ProductAxis.MISMATCH: "PRODUCT_MISMATCH",
}

_MODIFIER_AXIS_TOKENS = {
    ModifierAxis.ALL_MATCH: "MODIFIER_ALL_MATCH",
    ModifierAxis.PARTIAL_MATCH: "MODIFIER_PARTIAL_MATCH",
    ModifierAxis.MISMATCH: "MODIFIER_MISMATCH",
    ModifierAxis.NO_MODIFIERS: "MODIFIER_NONE",
}

RA_TOKENS: tuple[str, ...] = tuple(_PRODUCT_AXIS_TOKENS.values()) + tuple(
    _MODIFIER_AXIS_TOKENS.values()
) + tuple(f"DECIDE_{label.value.upper()}" for label in ORDERED_LABELS)


def product_axis_token(axis: ProductAxis) -> str:
    return _PRODUCT_AXIS_TOKENS[axis]


def modifier_axis_token(axis: ModifierAxis) -> str:
    return _MODIFIER_AXIS_TOKENS[axis]


def decide_token(label: Label) -> str:
    return f"DECIDE_{label.value.upper()}"


# Reflection tokens: the wrongly decided label, then the correct trace.
DR_TOKENS: tuple[str, ...] = tuple(
    f"WRONG_WAS_{label.value.upper()}" for label in ORDERED_LABELS
)


def wrong_was_token(label: Label) -> str:
    return f"WRONG_WAS_{label.value.upper()}"


def output_token_order() -> tuple[str, ...]:
    """Canonical output vocabulary: labels, trace tokens, end-of-sequence."""
    return LABEL_TOKENS + EE_TOKENS + RA_TOKENS + DR_TOKENS + (EOS,)
