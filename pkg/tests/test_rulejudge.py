"""The two-axis rule: axis grading, the decision table, and the rule text."""

import itertools

import pytest

from relgrade.rulejudge import (
    AxisVerdict,
    DECISION_TABLE,
    ModifierAxis,
    ProductAxis,
    judge,
    judge_axes,
    modifier_axis,
    modifier_detail,
    rule_text,
)
from relgrade.schema import Facets, Label, QuerySpec

# The two worked cases the rule must reproduce: a same-function phone with
# the wrong brand, and a matching-brand charger for the queried device.
IPHONE_15_QUERY = QuerySpec(
    desired_type="iphone",
    desired_function_class="smartphone",
    desired_brand="apple",
    desired_model="15",
)
SAMSUNG_S24 = Facets(
    brand="samsung",
    product_type="galaxyphone",
    function_class="smartphone",
    model="s24",
)
IPHONE_QUERY = QuerySpec(
    desired_type="iphone",
    desired_function_class="smartphone",
    desired_brand="apple",
)
APPLE_CHARGER = Facets(
    brand="apple",
    product_type="charger",
    function_class="accessory",
    model="20w",
    attributes=frozenset({"usbc", "fast"}),
    accessory_of="iphone",
)


class TestPaperedCells:
    def test_same_function_wrong_brand_phone(self):
        verdict = judge_axes(IPHONE_15_QUERY, SAMSUNG_S24)
        assert verdict == AxisVerdict(ProductAxis.FUNCTION_MATCH, ModifierAxis.MISMATCH)

    def test_matching_brand_charger_is_trivial(self):
        verdict = judge_axes(IPHONE_QUERY, APPLE_CHARGER)
        assert verdict == AxisVerdict(ProductAxis.ACCESSORY_MATCH, ModifierAxis.ALL_MATCH)
        assert judge(IPHONE_QUERY, APPLE_CHARGER) is Label.TRIVIAL

    def test_type_match_no_modifiers(self):
        q = QuerySpec(desired_type="kettle", desired_function_class="kitchen")
        p = Facets(brand="kentro", product_type="kettle", function_class="kitchen")
        assert judge_axes(q, p) == AxisVerdict(
            ProductAxis.TYPE_MATCH, ModifierAxis.NO_MODIFIERS
        )
        assert judge(q, p) is Label.SIGNIFICANT


class TestDecisionTable:
    def test_exact_top_cell(self):
        assert DECISION_TABLE[
            (ProductAxis.TYPE_MATCH, ModifierAxis.ALL_MATCH)
        ] is Label.EXACT

    def test_all_sixteen_cells_covered(self):
        cells = set(itertools.product(ProductAxis, ModifierAxis))
        assert set(DECISION_TABLE) == cells

    def test_all_five_labels_reachable(self):
        assert set(DECISION_TABLE.values()) == set(Label)

    def test_monotone_in_product_axis(self):
        """Degrading the product axis never raises the label."""
        order = [
            ProductAxis.TYPE_MATCH,
            ProductAxis.FUNCTION_MATCH,
            ProductAxis.ACCESSORY_MATCH,
            ProductAxis.MISMATCH,
        ]
        for mod in ModifierAxis:
            ranks = [DECISION_TABLE[(p, mod)].rank for p in order]
            assert all(a >= b for a, b in zip(ranks, ranks[1:])), (mod, ranks)

    def test_judge_equals_table_on_constructed_grid(self):
        """Build a (query, product) pair for each of the 16 cells by brute
        force and check the judge lands on the table's label."""
        built = {}
        base_q = dict(desired_type="phone", desired_function_class="electronics")
        for paxis in ProductAxis:
            if paxis is ProductAxis.TYPE_MATCH:
                facet = dict(product_type="phone", function_class="electronics")
            elif paxis is ProductAxis.FUNCTION_MATCH:
                facet = dict(product_type="tablet", function_class="electronics")
            elif paxis is ProductAxis.ACCESSORY_MATCH:
                facet = dict(
                    product_type="case", function_class="outdoor", accessory_of="phone"
                )
            else:
                facet = dict(product_type="kettle", function_class="kitchen")
            for maxis in ModifierAxis:
                if maxis is ModifierAxis.NO_MODIFIERS:
                    q = QuerySpec(**base_q)
                    p = Facets(brand="veltrix", **facet)
                elif maxis is ModifierAxis.ALL_MATCH:
                    q = QuerySpec(**base_q, desired_brand="veltrix")
                    p = Facets(brand="veltrix", **facet)
                elif maxis is ModifierAxis.MISMATCH:
                    q = QuerySpec(**base_q, desired_brand="quorra")
                    p = Facets(brand="veltrix", **facet)
                else:
                    q = QuerySpec(
                        **base_q,
                        desired_brand="veltrix",
                        desired_attributes=frozenset({"slim"}),
                    )
                    p = Facets(brand="veltrix", **facet)
                assert judge_axes(q, p) == AxisVerdict(paxis, maxis)
                built[(paxis, maxis)] = judge(q, p)
        assert built == DECISION_TABLE


class TestModifierAxis:
    def _q(self, **kw):
        return QuerySpec(desired_type="phone", desired_function_class="electronics", **kw)

    def _p(self, **kw):
        base = dict(brand="veltrix", product_type="phone", function_class="electronics")
        base.update(kw)
        return Facets(**base)

    def test_model_absent_on_product_is_unmet_not_contradicted(self):
        q = self._q(desired_brand="veltrix", desired_model="x200")
        p = self._p(model=None)
        assert modifier_axis(modifier_detail(q, p)) is ModifierAxis.PARTIAL_MATCH

    def test_model_contradiction_wins_over_attr_match(self):
        q = self._q(desired_model="x200", desired_attributes=frozenset({"slim"}))
        p = self._p(model="y300", attributes=frozenset({"slim"}))
        assert modifier_axis(modifier_detail(q, p)) is ModifierAxis.MISMATCH

    def test_attribute_subset_is_all_match(self):
        q = self._q(desired_attributes=frozenset({"slim"}))
        p = self._p(attributes=frozenset({"slim", "black"}))
        assert modifier_axis(modifier_detail(q, p)) is ModifierAxis.ALL_MATCH

    def test_attribute_miss_is_partial_not_mismatch(self):
        q = self._q(desired_attributes=frozenset({"slim", "red"}))
        p = self._p(attributes=frozenset({"black"}))
        assert modifier_axis(modifier_detail(q, p)) is ModifierAxis.PARTIAL_MATCH

    def test_purity_and_determinism(self):
        q = self._q(desired_brand="veltrix")
        p = self._p()
        assert judge(q, p) is judge(q, p)
        assert judge_axes(q, p) == judge_axes(q, p)


class TestRuleText:
    def test_byte_identical_across_calls(self):
        assert rule_text() == rule_text()
        assert rule_text().encode() == rule_text().encode()

    def test_mentions_both_axes(self):
        text = rule_text()
        assert "product relevance" in text
        assert "modifier relevance" in text

    def test_bounded_size(self):
        assert len(rule_text().encode("utf-8")) < 2000

    def test_every_label_named(self):
        for label in Label:
            assert label.value in rule_text()
