"""Label algebra, sampling, and dataset file round-trips."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relgrade.errors import EmptyStratum, ParseError
from relgrade.schema import (
    BinaryLabel,
    Dataset,
    DEFAULT_RELEVANT,
    Example,
    Facets,
    Label,
    ORDERED_LABELS,
    Tier,
    adjacent_confound,
    collapse_to_binary,
    example_from_json,
    example_to_json,
    largest_remainder_counts,
    read_dataset,
    stratified_sample,
    uniform_proportions,
    write_dataset,
)


def make_example(i, label, tier=Tier.TOP, noisy=False, query="phone", title="veltrix phone"):
    return Example(
        id=f"t{i:04d}",
        query=query,
        title=title,
        label=label,
        facets=Facets(brand="veltrix", product_type="phone", function_class="electronics"),
        tier=tier,
        noisy=noisy,
    )


class TestLabel:
    def test_five_members_total_order(self):
        assert len(Label) == 5
        ranks = [l.rank for l in Label]
        assert sorted(ranks) == [0, 1, 2, 3, 4]
        assert (
            Label.EXACT.rank > Label.SIGNIFICANT.rank > Label.MARGINAL.rank
            > Label.TRIVIAL.rank > Label.IRRELEVANT.rank
        )

    def test_text_round_trip(self):
        for label in Label:
            assert Label.from_text(label.value) is label
            assert Label.from_text(label.value.upper()) is label
            assert Label.from_text(label.value.lower()) is label

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError):
            Label.from_text("Slightly")

    def test_ordered_labels_descending(self):
        assert ORDERED_LABELS[0] is Label.EXACT
        assert ORDERED_LABELS[-1] is Label.IRRELEVANT


class TestCollapse:
    def test_forced_endpoints(self):
        assert collapse_to_binary(Label.EXACT) is BinaryLabel.RELEVANT
        assert collapse_to_binary(Label.IRRELEVANT) is BinaryLabel.NOT_RELEVANT

    def test_total_and_two_relevant(self):
        relevant = [l for l in Label if collapse_to_binary(l) is BinaryLabel.RELEVANT]
        assert set(relevant) == set(DEFAULT_RELEVANT)
        assert len(relevant) == 2

    def test_marginal_boundary_makes_over_grading_a_false_positive(self):
        """On a six-example fixture, grading Marginal pairs as Significant
        strictly increases binary false positives, which is exactly the
        over-recall failure the boundary is meant to expose."""
        truths = [
            Label.EXACT, Label.SIGNIFICANT, Label.MARGINAL,
            Label.MARGINAL, Label.TRIVIAL, Label.IRRELEVANT,
        ]
        honest = list(truths)
        optimistic = [
            Label.SIGNIFICANT if t is Label.MARGINAL else t for t in truths
        ]

        def false_positives(preds):
            return sum(
                1
                for t, p in zip(truths, preds)
                if collapse_to_binary(t) is BinaryLabel.NOT_RELEVANT
                and collapse_to_binary(p) is BinaryLabel.RELEVANT
            )

        assert false_positives(honest) == 0
        assert false_positives(optimistic) == 2  # both Marginal pairs flip


class TestAdjacentConfound:
    @pytest.mark.parametrize(
        "label,expected",
        [
            (Label.IRRELEVANT, Label.TRIVIAL),
            (Label.TRIVIAL, Label.MARGINAL),
            (Label.MARGINAL, Label.SIGNIFICANT),
            (Label.SIGNIFICANT, Label.EXACT),
            (Label.EXACT, Label.SIGNIFICANT),
        ],
    )
    def test_one_step_toward_significant(self, label, expected):
        assert adjacent_confound(label) is expected

    def test_never_identity_always_adjacent(self):
        for label in Label:
            other = adjacent_confound(label)
            assert other is not label
            assert abs(other.rank - label.rank) == 1


class TestStratifiedSample:
    def _dataset(self, per_label):
        examples = []
        i = 0
        for label, count in per_label.items():
            for _ in range(count):
                examples.append(make_example(i, label))
                i += 1
        return Dataset(tuple(examples), seed=1)

    def test_uniform_quintiles(self):
        d = self._dataset({l: 40 for l in Label})
        out = stratified_sample(d, uniform_proportions(), 100, seed=3)
        hist = out.label_histogram()
        assert all(hist[l] == 20 for l in Label)

    def test_deterministic(self):
        d = self._dataset({l: 40 for l in Label})
        a = stratified_sample(d, uniform_proportions(), 50, seed=9)
        b = stratified_sample(d, uniform_proportions(), 50, seed=9)
        assert [ex.id for ex in a] == [ex.id for ex in b]

    def test_empty_stratum(self):
        d = self._dataset({Label.EXACT: 10, Label.SIGNIFICANT: 10})
        with pytest.raises(EmptyStratum):
            stratified_sample(d, uniform_proportions(), 10, seed=0)

    def test_proportions_must_sum_to_one(self):
        d = self._dataset({l: 10 for l in Label})
        bad = {l: 0.3 for l in Label}
        with pytest.raises(ValueError):
            stratified_sample(d, bad, 10, seed=0)

    def test_largest_remainder_sums_exactly(self):
        props = {"a": 0.333, "b": 0.333, "c": 0.334}
        counts = largest_remainder_counts(props, 100)
        assert sum(counts.values()) == 100

    @given(
        st.lists(
            st.floats(min_value=0.01, max_value=1.0),
            min_size=2,
            max_size=6,
        ),
        st.integers(min_value=0, max_value=5000),
    )
    @settings(max_examples=50, deadline=None)
    def test_largest_remainder_always_sums_to_n(self, weights, n):
        total = sum(weights)
        props = {i: w / total for i, w in enumerate(weights)}
        counts = largest_remainder_counts(props, n)
        assert sum(counts.values()) == n
        for key, c in counts.items():
            assert abs(c - n * props[key]) < 1.0


class TestDatasetFiles:
    def _dataset(self):
        examples = [
            make_example(0, Label.EXACT),
            Example(
                id="t9999",
                query="kenbrew steel",
                title="kentro k120 kettle steel ceramic",
                label=Label.SIGNIFICANT,
                facets=Facets(
                    brand="kentro",
                    product_type="kettle",
                    function_class="kitchen",
                    model="k120",
                    attributes=frozenset({"steel", "ceramic"}),
                ),
                tier=Tier.LONG_TAIL,
                noisy=True,
            ),
        ]
        return Dataset(tuple(examples), seed=42, config_hash="abc123")

    def test_round_trip_identity(self, tmp_path):
        d = self._dataset()
        path = tmp_path / "d.jsonl"
        write_dataset(d, path)
        back = read_dataset(path)
        assert back.examples == d.examples
        assert back.seed == 42
        assert back.config_hash == "abc123"

    def test_byte_stable_after_one_write(self, tmp_path):
        d = self._dataset()
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_dataset(d, p1)
        write_dataset(read_dataset(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        d = read_dataset(path)
        assert len(d) == 0

    def test_single_record(self, tmp_path):
        path = tmp_path / "one.jsonl"
        write_dataset(Dataset((make_example(0, Label.MARGINAL),), seed=5), path)
        d = read_dataset(path)
        assert len(d) == 1
        ex = d.examples[0]
        assert ex.label is Label.MARGINAL
        assert ex.query and ex.title and ex.id

    def test_unknown_label_names_line(self, tmp_path):
        d = self._dataset()
        path = tmp_path / "bad.jsonl"
        write_dataset(d, path)
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace("Significant", "Sorta")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as err:
            read_dataset(path)
        assert err.value.line == 3

    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"seed": 0}\n{not json\n')
        with pytest.raises(ParseError) as err:
            read_dataset(path)
        assert err.value.line == 2

    def test_duplicate_ids_rejected(self):
        ex = make_example(1, Label.EXACT)
        with pytest.raises(ValueError):
            Dataset((ex, ex))


@given(
    st.lists(st.sampled_from(sorted(Label, key=lambda l: l.rank)), min_size=1, max_size=30),
    st.booleans(),
)
@settings(max_examples=40, deadline=None)
def test_example_json_round_trip(labels, noisy):
    examples = [make_example(i, label, noisy=noisy) for i, label in enumerate(labels)]
    for ex in examples:
        assert example_from_json(json.loads(json.dumps(example_to_json(ex)))) == ex
