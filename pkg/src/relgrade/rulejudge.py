"""Executable relevance rule: two-axis judgment mapped to a five-tier grade.

The rule grades a query-product pair along two axes. Product relevance
asks whether the item meets the basic type and functional need; modifier
relevance asks whether the stated brand/model/attribute constraints are
satisfied. A fixed decision table maps the axis pair to the final label.
The judge is deliberately exact so it can serve as a ground-truth oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from relgrade.schema import Facets, Label, QuerySpec


class ProductAxis(Enum):
    TYPE_MATCH = "TypeMatch"
    FUNCTION_MATCH = "FunctionMatch"
    ACCESSORY_MATCH = "AccessoryMatch"
    MISMATCH = "Mismatch"


class ModifierAxis(Enum):
    ALL_MATCH = "AllMatch"
    PARTIAL_MATCH = "PartialMatch"
    MISMATCH = "Mismatch"
    NO_MODIFIERS = "NoModifiers"


@dataclass(frozen=True)
class AxisVerdict:
    product_axis: ProductAxis
    modifier_axis: ModifierAxis


class MatchState(Enum):
    """Single-modifier outcome: satisfied, unmet (absent), or contradicted."""

    MATCHED = "matched"
    UNMET = "unmet"
    CONTRADICTED = "contradicted"


class AttrOverlap(Enum):
    ALL = "all"
    SOME = "some"
    NONE = "none"


@dataclass(frozen=True)
class ModifierDetail:
    """Per-dimension modifier outcomes; None where the query states nothing."""

    brand: MatchState | None
    model: MatchState | None
    attributes: AttrOverlap | None

    @property
    def any_stated(self) -> bool:
        return (
            self.brand is not None
            or self.model is not None
            or self.attributes is not None
        )


def modifier_detail(q: QuerySpec, p: Facets) -> ModifierDetail:
    brand: MatchState | None = None
    if q.desired_brand is not None:
        brand = (
            MatchState.MATCHED if p.brand == q.desired_brand else MatchState.CONTRADICTED
        )
    model: MatchState | None = None
    if q.desired_model is not None:
        if p.model is None:
            model = MatchState.UNMET
        elif p.model == q.desired_model:
            model = MatchState.MATCHED
        else:
            model = MatchState.CONTRADICTED
    attrs: AttrOverlap | None = None
    if q.desired_attributes:
        hit = len(q.desired_attributes & p.attributes)
        if hit == len(q.desired_attributes):
            attrs = AttrOverlap.ALL
        elif hit > 0:
            attrs = AttrOverlap.SOME
        else:
            attrs = AttrOverlap.NONE
    return ModifierDetail(brand=brand, model=model, attributes=attrs)


def product_axis(q: QuerySpec, p: Facets) -> ProductAxis:
    if q.desired_type == p.product_type:
        return ProductAxis.TYPE_MATCH
    if q.desired_function_class == p.function_class:
        return ProductAxis.FUNCTION_MATCH
    if p.accessory_of is not None and p.accessory_of == q.desired_type:
        return ProductAxis.ACCESSORY_MATCH
    return ProductAxis.MISMATCH


def modifier_axis(detail: ModifierDetail) -> ModifierAxis:
    if not detail.any_stated:
        return ModifierAxis.NO_MODIFIERS
    if MatchState.CONTRADICTED in (detail.brand, detail.model):
        return ModifierAxis.MISMATCH
    all_matched = (
        detail.brand in (None, MatchState.MATCHED)
        and detail.model in (None, MatchState.MATCHED)
        and detail.attributes in (None, AttrOverlap.ALL)
    )
    return ModifierAxis.ALL_MATCH if all_matched else ModifierAxis.PARTIAL_MATCH


def judge_axes(q: QuerySpec, p: Facets) -> AxisVerdict:
    """Grade both axes for a query-product pair."""
    return AxisVerdict(
        product_axis=product_axis(q, p),
        modifier_axis=modifier_axis(modifier_detail(q, p)),
    )


#: The 4x4 decision table. Monotone in the product axis: degrading it never
#: raises the label. An accessory hit caps the grade at Trivial regardless
#: of modifiers, and a functional sibling with contradicted modifiers also
#: lands at Trivial.
DECISION_TABLE: dict[tuple[ProductAxis, ModifierAxis], Label] = {
    (ProductAxis.TYPE_MATCH, ModifierAxis.ALL_MATCH): Label.EXACT,
    (ProductAxis.TYPE_MATCH, ModifierAxis.NO_MODIFIERS): Label.SIGNIFICANT,
    (ProductAxis.TYPE_MATCH, ModifierAxis.PARTIAL_MATCH): Label.SIGNIFICANT,
    (ProductAxis.TYPE_MATCH, ModifierAxis.MISMATCH): Label.MARGINAL,
    (ProductAxis.FUNCTION_MATCH, ModifierAxis.ALL_MATCH): Label.MARGINAL,
    (ProductAxis.FUNCTION_MATCH, ModifierAxis.NO_MODIFIERS): Label.MARGINAL,
    (ProductAxis.FUNCTION_MATCH, ModifierAxis.PARTIAL_MATCH): Label.MARGINAL,
    (ProductAxis.FUNCTION_MATCH, ModifierAxis.MISMATCH): Label.TRIVIAL,
    (ProductAxis.ACCESSORY_MATCH, ModifierAxis.ALL_MATCH): Label.TRIVIAL,
    (ProductAxis.ACCESSORY_MATCH, ModifierAxis.NO_MODIFIERS): Label.TRIVIAL,
    (ProductAxis.ACCESSORY_MATCH, ModifierAxis.PARTIAL_MATCH): Label.TRIVIAL,
    (ProductAxis.ACCESSORY_MATCH, ModifierAxis.MISMATCH): Label.TRIVIAL,
    (ProductAxis.MISMATCH, ModifierAxis.ALL_MATCH): Label.IRRELEVANT,
    (ProductAxis.MISMATCH, ModifierAxis.NO_MODIFIERS): Label.IRRELEVANT,
    (ProductAxis.MISMATCH, ModifierAxis.PARTIAL_MATCH): Label.IRRELEVANT,
    (ProductAxis.MISMATCH, ModifierAxis.MISMATCH): Label.IRRELEVANT,
}


def judge(q: QuerySpec, p: Facets) -> Label:
    """Final five-tier judgment: the decision table applied to both axes."""
    return DECISION_TABLE[
        (product_axis(q, p), modifier_axis(modifier_detail(q, p)))
    ]


_RULE_TEXT = """\
Relevance rule, version 1.

Grade a query-product pair on two axes, then combine them.

Axis 1, product relevance: does the item meet the basic product type and
functional need?
  TypeMatch      - the item's type equals the requested type.
  FunctionMatch  - different type, same functional group.
  AccessoryMatch - the item is an accessory for the requested type.
  Mismatch       - none of the above.

Axis 2, modifier relevance: are the stated brand, model, and attribute
constraints satisfied?
  NoModifiers  - the query states no brand, model, or attributes.
  AllMatch     - every stated modifier is satisfied.
  Mismatch     - the stated brand or model is contradicted.
  PartialMatch - some stated modifier is unmet, none contradicted.

Combine with this table:
  TypeMatch      + AllMatch                            -> Exact
  TypeMatch      + NoModifiers or PartialMatch         -> Significant
  TypeMatch      + Mismatch                            -> Marginal
  FunctionMatch  + AllMatch/NoModifiers/PartialMatch   -> Marginal
  FunctionMatch  + Mismatch                            -> Trivial
  AccessoryMatch + anything                            -> Trivial
  Mismatch       + anything                            -> Irrelevant
"""


def rule_text() -> str:
    """Fixed, versioned rendering of the rule; byte-identical across runs."""
    return _RULE_TEXT
