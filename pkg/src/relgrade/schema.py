"""Label algebra, example records, dataset files, and sampling utilities.

The five-tier relevance scale is shared by every stage of the pipeline:
``Exact > Significant > Marginal > Trivial > Irrelevant``, with a binary
collapse used for the user-facing relevant/not-relevant metrics.

Dataset files are line-delimited JSON (UTF-8): an optional leading meta
record ``{"seed": ..., "config_hash": ...}`` followed by one example per
line with fields exactly ``id/query/title/label/facets/tier/noisy``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from relgrade.errors import EmptyStratum, ParseError


class Label(Enum):
    """Five-tier relevance grade for a query-product pair."""

    EXACT = "Exact"
    SIGNIFICANT = "Significant"
    MARGINAL = "Marginal"
    TRIVIAL = "Trivial"
    IRRELEVANT = "Irrelevant"

    @property
    def rank(self) -> int:
        """Ordinal rank, Exact=4 down to Irrelevant=0."""
        return _RANKS[self]

    @classmethod
    def from_text(cls, text: str) -> "Label":
        """Parse a label from its text form, case-insensitively."""
        try:
            return _BY_LOWER[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown label {text!r}") from None

    def __lt__(self, other: "Label") -> bool:
        if not isinstance(other, Label):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other: "Label") -> bool:
        if not isinstance(other, Label):
            return NotImplemented
        return self.rank <= other.rank


_RANKS = {
    Label.EXACT: 4,
    Label.SIGNIFICANT: 3,
    Label.MARGINAL: 2,
    Label.TRIVIAL: 1,
    Label.IRRELEVANT: 0,
}

_BY_LOWER = {label.value.lower(): label for label in Label}

#: All labels in descending rank order (Exact first).
ORDERED_LABELS: tuple[Label, ...] = tuple(
    sorted(Label, key=lambda l: -l.rank)
)

_BY_RANK = {label.rank: label for label in Label}


def label_by_rank(rank: int) -> Label:
    return _BY_RANK[rank]


class BinaryLabel(Enum):
    RELEVANT = "Relevant"
    NOT_RELEVANT = "NotRelevant"


#: Default collapse boundary: the user-facing cut sits between Significant
#: and Marginal, because over-grading a Marginal pair as Significant is what
#: exposes insufficiently relevant products.
DEFAULT_RELEVANT: frozenset[Label] = frozenset({Label.EXACT, Label.SIGNIFICANT})


def collapse_to_binary(
    label: Label, relevant: frozenset[Label] = DEFAULT_RELEVANT
) -> BinaryLabel:
    """Collapse a five-tier label to Relevant/NotRelevant."""
    return BinaryLabel.RELEVANT if label in relevant else BinaryLabel.NOT_RELEVANT


def adjacent_confound(label: Label) -> Label:
    """The most confusable neighbor of ``label``.

    One ordinal step, toward Significant when two neighbors exist;
    Significant itself steps down to Marginal, its boundary neighbor.
    Used both for label-noise injection and as the confound-label oracle,
    so corrupted labels are exactly the labels the confound model
    predicts.
    """
    return _CONFOUND[label]


_CONFOUND = {
    Label.IRRELEVANT: Label.TRIVIAL,
    Label.TRIVIAL: Label.MARGINAL,
    Label.MARGINAL: Label.SIGNIFICANT,
    Label.SIGNIFICANT: Label.MARGINAL,
    Label.EXACT: Label.SIGNIFICANT,
}


class Tier(Enum):
    """Query popularity tier."""

    TOP = "Top"
    MIDDLE = "Middle"
    LONG_TAIL = "LongTail"

    @classmethod
    def from_text(cls, text: str) -> "Tier":
        try:
            return _TIER_BY_LOWER[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown tier {text!r}") from None


_TIER_BY_LOWER = {t.value.lower(): t for t in Tier}

ORDERED_TIERS: tuple[Tier, ...] = (Tier.TOP, Tier.MIDDLE, Tier.LONG_TAIL)


@dataclass(frozen=True)
class Facets:
    """Ground-truth product structure.

    ``function_class`` is the coarse functional group of ``product_type``;
    ``accessory_of`` names the product type this item is an accessory for,
    and must differ from the item's own type.
    """

    brand: str
    product_type: str
    function_class: str
    model: str | None = None
    attributes: frozenset[str] = frozenset()
    accessory_of: str | None = None

    def __post_init__(self):
        if not self.product_type:
            raise ValueError("product_type is required")
        if not self.function_class:
            raise ValueError("function_class is required")
        if self.accessory_of is not None and self.accessory_of == self.product_type:
            raise ValueError("accessory_of must differ from product_type")
        object.__setattr__(self, "attributes", frozenset(self.attributes))


@dataclass(frozen=True)
class QuerySpec:
    """Structured query intent: the query side of the relevance rule.

    ``desired_function_class`` is carried explicitly so the rule stays a
    pure function of its two inputs.
    """

    desired_type: str
    desired_function_class: str
    desired_brand: str | None = None
    desired_model: str | None = None
    desired_attributes: frozenset[str] = frozenset()
    tier: Tier | None = None

    def __post_init__(self):
        if not self.desired_type:
            raise ValueError("desired_type is required")
        object.__setattr__(
            self, "desired_attributes", frozenset(self.desired_attributes)
        )

    @property
    def has_modifiers(self) -> bool:
        return (
            self.desired_brand is not None
            or self.desired_model is not None
            or bool(self.desired_attributes)
        )


@dataclass(frozen=True)
class Example:
    """One (query, title, label) record with its ground-truth structure."""

    id: str
    query: str
    title: str
    label: Label
    facets: Facets
    tier: Tier
    noisy: bool = False

    def __post_init__(self):
        if not self.id:
            raise ValueError("example id is required")
        if not self.query.strip():
            raise ValueError(f"example {self.id}: query is empty")
        if not self.title.strip():
            raise ValueError(f"example {self.id}: title is empty")


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of examples with a provenance seed."""

    examples: tuple[Example, ...]
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "examples", tuple(self.examples))
        ids = [ex.id for ex in self.examples]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate example ids in dataset")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def label_histogram(self) -> dict[Label, int]:
        hist = {label: 0 for label in ORDERED_LABELS}
        for ex in self.examples:
            hist[ex.label] += 1
        return hist

    def tier_histogram(self) -> dict[Tier, int]:
        hist = {tier: 0 for tier in ORDERED_TIERS}
        for ex in self.examples:
            hist[ex.tier] += 1
        return hist


def largest_remainder_counts(
    proportions: Mapping, n: int
) -> dict:
    """Split ``n`` into integer counts matching ``proportions``.

    Floors each quota and hands the leftover units to the largest
    fractional remainders (ties broken by key order in ``proportions``),
    so the counts always sum to exactly ``n``.
    """
    keys = list(proportions.keys())
    quotas = [n * proportions[k] for k in keys]
    counts = [math.floor(q) for q in quotas]
    leftover = n - sum(counts)
    order = sorted(range(len(keys)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return dict(zip(keys, counts))


def stratified_sample(
    d: Dataset, proportions: Mapping[Label, float], n: int, seed: int
) -> Dataset:
    """Sample ``n`` examples with per-label counts matching ``proportions``.

    Counts follow largest-remainder rounding; draws are without
    replacement and deterministic for a fixed seed.

    Raises:
        EmptyStratum: if a label with a positive requested count has no,
            or too few, examples in ``d``.
        ValueError: if the proportions do not sum to 1 (tolerance 1e-9).
    """
    total = sum(proportions.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"proportions sum to {total!r}, expected 1")
    ordered = {
        label: proportions[label] for label in ORDERED_LABELS if label in proportions
    }
    counts = largest_remainder_counts(ordered, n)
    pools: dict[Label, list[Example]] = {label: [] for label in ordered}
    for ex in d.examples:
        if ex.label in pools:
            pools[ex.label].append(ex)

    rng = np.random.default_rng(seed)
    chosen: list[Example] = []
    for label in ordered:
        want = counts[label]
        pool = pools[label]
        if want == 0:
            continue
        if not pool:
            raise EmptyStratum(f"no examples with label {label.value}")
        if want > len(pool):
            raise EmptyStratum(
                f"stratum {label.value} has {len(pool)} examples, need {want}"
            )
        idx = np.sort(rng.choice(len(pool), size=want, replace=False))
        chosen.extend(pool[int(i)] for i in idx)
    return Dataset(tuple(chosen), seed=seed, config_hash=d.config_hash)


def uniform_proportions() -> dict[Label, float]:
    return {label: 1.0 / len(ORDERED_LABELS) for label in ORDERED_LABELS}


# ---------------------------------------------------------------------------
# File format


def _facets_to_json(f: Facets) -> dict:
    return {
        "brand": f.brand,
        "product_type": f.product_type,
        "function_class": f.function_class,
        "model": f.model,
        "attributes": sorted(f.attributes),
        "accessory_of": f.accessory_of,
    }


def _facets_from_json(obj: dict) -> Facets:
    return Facets(
        brand=obj["brand"],
        product_type=obj["product_type"],
        function_class=obj["function_class"],
        model=obj.get("model"),
        attributes=frozenset(obj.get("attributes", ())),
        accessory_of=obj.get("accessory_of"),
    )


def example_to_json(ex: Example) -> dict:
    return {
        "id": ex.id,
        "query": ex.query,
        "title": ex.title,
        "label": ex.label.value,
        "facets": _facets_to_json(ex.facets),
        "tier": ex.tier.value,
        "noisy": ex.noisy,
    }


def example_from_json(obj: dict) -> Example:
    return Example(
        id=obj["id"],
        query=obj["query"],
        title=obj["title"],
        label=Label.from_text(obj["label"]),
        facets=_facets_from_json(obj["facets"]),
        tier=Tier.from_text(obj["tier"]),
        noisy=bool(obj.get("noisy", False)),
    )


def write_dataset(d: Dataset, path) -> None:
    """Write ``d`` as line-delimited JSON with a leading meta record."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"seed": d.seed, "config_hash": d.config_hash}) + "\n")
        for ex in d.examples:
            fh.write(json.dumps(example_to_json(ex)) + "\n")


def read_dataset(path) -> Dataset:
    """Read a dataset file; raises ParseError naming the bad line."""
    path = Path(path)
    examples: list[Example] = []
    seed = 0
    config_hash = ""
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if "id" not in obj:
                # meta record
                seed = int(obj.get("seed", 0))
                config_hash = str(obj.get("config_hash", ""))
                continue
            try:
                examples.append(example_from_json(obj))
            except (KeyError, TypeError) as exc:
                raise ParseError(path, line_no, f"missing field: {exc}") from None
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from None
    return Dataset(tuple(examples), seed=seed, config_hash=config_hash)
