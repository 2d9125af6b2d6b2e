"""Seeded synthetic catalog and query stream with rule-derived labels.

Token role vocabularies (product types, brands, attributes, aliases, the
type-to-function-class map) are fixed module constants; only the catalog
contents and example stream are seeded. That keeps query parsing a pure
function of the query text, so every example's clean label can be
re-derived from its stored fields alone.

Queries read ``[brand] type [model] [attr ...]`` (or an alias word that
implies both brand and type); titles read ``brand [model] type [attr ...]``
with accessories appending ``for <target-type>``. Model tokens are the
only letter+digits tokens, so token roles never collide.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from relgrade.errors import ParseError
from relgrade.rulejudge import judge
from relgrade.schema import (
    Dataset,
    Example,
    Facets,
    Label,
    ORDERED_TIERS,
    QuerySpec,
    Tier,
    adjacent_confound,
    largest_remainder_counts,
)

PRODUCT_TYPES: tuple[str, ...] = (
    # electronics
    "phone", "laptop", "tablet", "camera", "speaker",
    # kitchen
    "kettle", "blender", "toaster", "skillet",
    # outdoor
    "tent", "lantern", "backpack", "kayak",
    # add-on gear (still product types in their own right)
    "charger", "case", "cable", "mount", "stand", "filter", "adapter",
)

FUNCTION_CLASSES: tuple[str, ...] = ("electronics", "kitchen", "outdoor")

#: Fixed partition of product types into functional groups.
TYPE_CLASS: dict[str, str] = {
    **{t: "electronics" for t in (
        "phone", "laptop", "tablet", "camera", "speaker",
        "charger", "cable", "adapter",
    )},
    **{t: "kitchen" for t in (
        "kettle", "blender", "toaster", "skillet", "stand", "filter",
    )},
    **{t: "outdoor" for t in (
        "tent", "lantern", "backpack", "kayak", "case", "mount",
    )},
}

#: Types that accessory products themselves belong to.
ACCESSORY_TYPES: tuple[str, ...] = (
    "charger", "case", "cable", "mount", "stand", "filter", "adapter",
)

BRANDS: tuple[str, ...] = (
    "veltrix", "quorra", "zenbok", "ashvale",
    "durnat", "polvex", "kentro", "mirado",
)

ATTRIBUTES: tuple[str, ...] = (
    "black", "white", "silver", "red", "blue", "green",
    "compact", "portable", "wireless", "cordless", "steel", "ceramic",
    "glass", "leather", "canvas", "foldable", "waterproof", "rechargeable",
    "digital", "analog", "heavy", "light", "mini", "large",
    "pro", "eco", "turbo", "quiet", "rugged", "slim",
)

#: Alias word -> (brand, product type) it stands for. A query of just the
#: alias states both the type and a brand modifier.
ALIASES: dict[str, tuple[str, str]] = {
    "veltphone": ("veltrix", "phone"),
    "quorrapad": ("quorra", "tablet"),
    "zencam": ("zenbok", "camera"),
    "ashpod": ("ashvale", "speaker"),
    "durnbook": ("durnat", "laptop"),
    "polcook": ("polvex", "skillet"),
    "kenbrew": ("kentro", "kettle"),
    "mirtrek": ("mirado", "backpack"),
    "fabtone": ("durnat", "lantern"),
    "ostflux": ("polvex", "kayak"),
}

ALIAS_BY_PAIR: dict[tuple[str, str], str] = {v: k for k, v in ALIASES.items()}

_MODEL_RE = re.compile(r"^[a-z][0-9]{2,3}$")


@dataclass(frozen=True)
class Catalog:
    """Generated product catalog plus per-type vocabulary assignments."""

    products: tuple[Facets, ...]
    type_brands: dict[str, tuple[str, ...]]
    type_attributes: dict[str, tuple[str, ...]]
    seed: int

    def model_tokens(self) -> tuple[str, ...]:
        seen: list[str] = []
        for p in self.products:
            if p.model is not None and p.model not in seen:
                seen.append(p.model)
        return tuple(seen)

    def vocabulary(self) -> tuple[str, ...]:
        """Every raw token that can appear in a query or title."""
        out: list[str] = []
        out.extend(BRANDS)
        out.extend(PRODUCT_TYPES)
        out.extend(FUNCTION_CLASSES)
        out.extend(ATTRIBUTES)
        out.extend(sorted(ALIASES))
        out.append("for")
        out.extend(sorted(self.model_tokens()))
        return tuple(out)


def gen_catalog(n_products: int, seed: int) -> Catalog:
    """Deterministic catalog of ``n_products`` items.

    For n >= 50 every product type gets at least one accessory product;
    for n >= 120 every type also gets two products of distinct brands.
    """
    if n_products < 1:
        raise ValueError("n_products must be >= 1")
    rng = np.random.default_rng(seed)

    type_brands = {
        t: tuple(
            sorted(rng.choice(BRANDS, size=int(rng.integers(3, 7)), replace=False))
        )
        for t in PRODUCT_TYPES
    }
    type_attributes = {
        t: tuple(
            sorted(rng.choice(ATTRIBUTES, size=int(rng.integers(6, 11)), replace=False))
        )
        for t in PRODUCT_TYPES
    }

    used_models: set[str] = set()

    def new_model() -> str:
        while True:
            letter = chr(ord("a") + int(rng.integers(0, 26)))
            number = int(rng.integers(10, 1000))
            token = f"{letter}{number}"
            if token not in used_models:
                used_models.add(token)
                return token

    def make_product(ptype: str, brand: str | None = None,
                     accessory_of: str | None = None) -> Facets:
        if brand is None:
            brand = str(rng.choice(type_brands[ptype]))
        model = new_model() if rng.random() < 0.7 else None
        pool = type_attributes[ptype]
        n_attr = int(rng.integers(1, 4))
        attrs = frozenset(
            str(a) for a in rng.choice(pool, size=min(n_attr, len(pool)), replace=False)
        )
        return Facets(
            brand=brand,
            product_type=ptype,
            function_class=TYPE_CLASS[ptype],
            model=model,
            attributes=attrs,
            accessory_of=accessory_of,
        )

    products: list[Facets] = []
    if n_products >= 50:
        # one accessory per target type; accessories live in a different
        # functional group than their target so an accessory hit never
        # shadows a function-level match
        for target in PRODUCT_TYPES:
            own_choices = [
                t for t in ACCESSORY_TYPES
                if t != target and TYPE_CLASS[t] != TYPE_CLASS[target]
            ]
            own = str(rng.choice(own_choices))
            products.append(make_product(own, accessory_of=target))
    if n_products >= 120:
        # two brand-distinct primary products per type
        for ptype in PRODUCT_TYPES:
            b1, b2 = rng.choice(type_brands[ptype], size=2, replace=False)
            products.append(make_product(ptype, brand=str(b1)))
            products.append(make_product(ptype, brand=str(b2)))
    while len(products) < n_products:
        ptype = str(rng.choice(PRODUCT_TYPES))
        if ptype in ACCESSORY_TYPES and rng.random() < 0.5:
            target_choices = [
                t for t in PRODUCT_TYPES
                if t != ptype and TYPE_CLASS[t] != TYPE_CLASS[ptype]
            ]
            target = str(rng.choice(target_choices))
            products.append(make_product(ptype, accessory_of=target))
        else:
            products.append(make_product(ptype))
    return Catalog(
        products=tuple(products[:n_products]),
        type_brands=type_brands,
        type_attributes=type_attributes,
        seed=seed,
    )


def parse_query(text: str) -> QuerySpec:
    """Recover the structured intent from a generated query string."""
    brand = None
    dtype = None
    model = None
    attrs: set[str] = set()
    for part in re.findall(r"[a-z0-9]+", text.lower()):
        if part in ALIASES:
            alias_brand, alias_type = ALIASES[part]
            brand = alias_brand
            dtype = alias_type
        elif part in TYPE_CLASS:
            dtype = part
        elif part in BRANDS:
            brand = part
        elif part in ATTRIBUTES:
            attrs.add(part)
        elif _MODEL_RE.match(part):
            model = part
    if dtype is None:
        raise ValueError(f"query has no recognizable product type: {text!r}")
    return QuerySpec(
        desired_type=dtype,
        desired_function_class=TYPE_CLASS[dtype],
        desired_brand=brand,
        desired_model=model,
        desired_attributes=frozenset(attrs),
    )


def render_title(p: Facets, show_model: bool = True) -> str:
    # titles carry a category breadcrumb (the function class), like real
    # listing titles do
    parts = [p.brand]
    if p.model is not None and show_model:
        parts.append(p.model)
    parts.extend([p.product_type, p.function_class])
    parts.extend(sorted(p.attributes))
    if p.accessory_of is not None:
        parts.extend(["for", p.accessory_of])
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Example generation

#: Relation families a template can realize; the label always comes from
#: the rule, the family only steers which cell the pair lands in. The
#: "type_model_query" family is a deliberately undecidable boundary: the
#: query states a model number and the title lists none, so the stored
#: facets alone decide between stated-but-unmet (Significant) and
#: contradicted (Marginal); graders can only follow the majority side of
#: the pattern.
FAMILIES: tuple[str, ...] = (
    "exact", "type_nomod", "type_partial", "type_modmis",
    "type_model_query", "func_nomod", "func_modmis", "accessory", "mismatch",
)

#: Within type_model_query, the fraction of draws whose product carries a
#: conflicting model number (the Marginal side of the boundary).
MODEL_QUERY_CONFLICT_RATE = 0.25

#: Popularity prior per family: common query shapes rank high (Top tier),
#: boundary shapes sink into the long tail.
_FAMILY_POPULARITY: dict[str, float] = {
    "exact": 2.6,
    "type_nomod": 1.3,
    "type_partial": 1.0,
    "type_modmis": 0.03,
    "type_model_query": 2.6,
    "func_nomod": 0.55,
    "func_modmis": 0.3,
    "accessory": 1.0,
    "mismatch": 0.25,
}


@dataclass(frozen=True)
class _Template:
    desired_type: str
    family: str
    tier: Tier
    weight: float


def _build_templates(rng: np.random.Generator) -> dict[Tier, tuple[list, np.ndarray]]:
    """Draw per-template frequencies and cut them into popularity tiers.

    Each (type, family) template gets a frequency proportional to its
    family's popularity prior with lognormal spread; the top 20% of
    templates by frequency rank are Top, the next 30% Middle, the rest
    LongTail. The same frequencies drive within-tier sampling, so family
    popularity controls both tier placement and instance mass.
    """
    combos = [(t, f) for t in PRODUCT_TYPES for f in FAMILIES]
    freqs = np.array(
        [_FAMILY_POPULARITY[f] for _, f in combos]
    ) * np.exp(0.8 * rng.standard_normal(len(combos)))
    order = np.argsort(-freqs)
    n = len(combos)
    cut_top = int(n * 0.2)
    cut_mid = int(n * 0.5)
    per_tier: dict[Tier, tuple[list, np.ndarray]] = {}
    buckets: dict[Tier, list[_Template]] = {t: [] for t in ORDERED_TIERS}
    for rank, idx in enumerate(order):
        dtype, family = combos[int(idx)]
        tier = (
            Tier.TOP if rank < cut_top else Tier.MIDDLE if rank < cut_mid else Tier.LONG_TAIL
        )
        buckets[tier].append(_Template(dtype, family, tier, float(freqs[idx])))
    for tier, templates in buckets.items():
        w = np.array([t.weight for t in templates])
        per_tier[tier] = (templates, w / w.sum())
    return per_tier


class _Pools:
    """Product index pools for fast family-consistent product picks."""

    def __init__(self, catalog: Catalog):
        # type-match families draw from standalone products only; a
        # "charger for phone" title under a plain "charger" query would
        # read like a cross-type pair and muddy the type-match signal
        self.by_type: dict[str, list[int]] = {t: [] for t in PRODUCT_TYPES}
        self.by_type_model: dict[str, list[int]] = {t: [] for t in PRODUCT_TYPES}
        self.by_type_bare: dict[str, list[int]] = {t: [] for t in PRODUCT_TYPES}
        self.by_class: dict[str, list[int]] = {c: [] for c in FUNCTION_CLASSES}
        self.accessories_for: dict[str, list[int]] = {t: [] for t in PRODUCT_TYPES}
        for i, p in enumerate(catalog.products):
            if p.accessory_of is None:
                self.by_type[p.product_type].append(i)
                if p.model is not None:
                    self.by_type_model[p.product_type].append(i)
                else:
                    self.by_type_bare[p.product_type].append(i)
                self.by_class[p.function_class].append(i)
            else:
                self.accessories_for[p.accessory_of].append(i)
        self.all = list(range(len(catalog.products)))
        self.models = list(catalog.model_tokens())
        self.catalog = catalog

    def pick(self, rng: np.random.Generator, pool: list[int]) -> Facets:
        if not pool:
            pool = self.all
        return self.catalog.products[int(rng.choice(pool))]

    def same_class_other_type(self, rng, dtype: str) -> Facets:
        pool = [
            i
            for i in self.by_class[TYPE_CLASS[dtype]]
            if self.catalog.products[i].product_type != dtype
        ]
        return self.pick(rng, pool)

    def unrelated(self, rng, dtype: str) -> Facets:
        pool = [
            i
            for i in self.all
            if self.catalog.products[i].product_type != dtype
            and self.catalog.products[i].function_class != TYPE_CLASS[dtype]
            and self.catalog.products[i].accessory_of is None
        ]
        return self.pick(rng, pool)


def _other_brand(rng, brand: str) -> str:
    choices = [b for b in BRANDS if b != brand]
    return str(rng.choice(choices))


def _realize(
    catalog: Catalog, pools: _Pools, template: _Template, rng: np.random.Generator
) -> tuple[str, str, Facets]:
    """Build (query text, title text, product) for one template draw."""
    dtype = template.desired_type
    family = template.family

    if family in ("exact", "type_nomod", "type_partial", "type_modmis"):
        p = pools.pick(rng, pools.by_type[dtype])
    elif family == "type_model_query":
        if rng.random() < MODEL_QUERY_CONFLICT_RATE:
            p = pools.pick(rng, pools.by_type_model[dtype] or pools.by_type[dtype])
        else:
            p = pools.pick(rng, pools.by_type_bare[dtype] or pools.by_type[dtype])
    elif family in ("func_nomod", "func_modmis"):
        p = pools.same_class_other_type(rng, dtype)
    elif family == "accessory":
        p = pools.pick(rng, pools.accessories_for[dtype])
    else:
        p = pools.unrelated(rng, dtype)
    if family.startswith("type") or family == "exact":
        # thin catalog fallback; the label still comes from the rule
        dtype = p.product_type

    q_parts: list[str] = []
    if family == "exact":
        alias = ALIAS_BY_PAIR.get((p.brand, p.product_type))
        if alias is not None and rng.random() < 0.15:
            q_parts.append(alias)
        else:
            q_parts.extend([p.brand, dtype])
        if p.attributes and rng.random() < 0.4:
            q_parts.append(str(rng.choice(sorted(p.attributes))))
    elif family == "type_nomod":
        q_parts.append(dtype)
    elif family == "type_partial":
        q_parts.append(dtype)
        absent = [a for a in catalog.type_attributes.get(dtype, ATTRIBUTES)
                  if a not in p.attributes]
        if not absent:
            absent = [a for a in ATTRIBUTES if a not in p.attributes]
        q_parts.append(str(rng.choice(absent)))
        if p.attributes and rng.random() < 0.5:
            q_parts.append(str(rng.choice(sorted(p.attributes))))
    elif family == "type_modmis":
        q_parts.extend([_other_brand(rng, p.brand), dtype])
    elif family == "type_model_query":
        choices = [m for m in pools.models if m != p.model]
        if choices:
            q_parts.extend([dtype, str(rng.choice(choices))])
        else:
            q_parts.append(dtype)
    elif family == "func_nomod":
        q_parts.append(dtype)
    elif family == "func_modmis":
        q_parts.extend([_other_brand(rng, p.brand), dtype])
    elif family == "accessory":
        if rng.random() < 0.5:
            q_parts.extend([p.brand, dtype])
        else:
            q_parts.append(dtype)
    else:  # mismatch
        q_parts.append(dtype)
        if rng.random() < 0.3:
            q_parts.insert(0, str(rng.choice(BRANDS)))

    # the model-number boundary stays cueless: whether the product's
    # model contradicts the query or is merely unlisted, the title reads
    # the same
    title = render_title(p, show_model=family != "type_model_query")
    return " ".join(q_parts), title, p


def gen_examples(
    catalog: Catalog,
    n: int,
    tier_mix: dict[Tier, float],
    noise_rate: float,
    seed: int,
) -> Dataset:
    """Generate ``n`` labeled examples with controlled label noise.

    Each example's clean label is the rule applied to (parsed query,
    facets); a ``noise_rate`` fraction gets the label replaced by its
    adjacent confound and the ``noisy`` flag set. The tier histogram
    matches ``tier_mix`` under largest-remainder rounding.
    """
    if not 0.0 <= noise_rate <= 0.5:
        raise ValueError("noise_rate must be in [0, 0.5]")
    total = sum(tier_mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"tier_mix sums to {total!r}, expected 1")
    rng = np.random.default_rng(seed)
    per_tier = _build_templates(rng)
    pools = _Pools(catalog)
    ordered_mix = {t: tier_mix.get(t, 0.0) for t in ORDERED_TIERS}
    counts = largest_remainder_counts(ordered_mix, n)

    examples: list[Example] = []
    serial = 0
    for tier in ORDERED_TIERS:
        want = counts[tier]
        if want == 0:
            continue
        templates, weights = per_tier[tier]
        picks = rng.choice(len(templates), size=want, p=weights)
        for t_idx in picks:
            template = templates[int(t_idx)]
            query, title, product = _realize(catalog, pools, template, rng)
            spec = parse_query(query)
            label = judge(spec, product)
            noisy = bool(rng.random() < noise_rate)
            if noisy:
                label = adjacent_confound(label)
            examples.append(
                Example(
                    id=f"ex{seed:04d}-{serial:06d}",
                    query=query,
                    title=title,
                    label=label,
                    facets=product,
                    tier=tier,
                    noisy=noisy,
                )
            )
            serial += 1
    return Dataset(tuple(examples), seed=seed)


def clean_label(ex: Example) -> Label:
    """Re-derive the ground-truth label from the stored fields."""
    return judge(parse_query(ex.query), ex.facets)


# ---------------------------------------------------------------------------
# Session logs


@dataclass(frozen=True)
class UserSession:
    user_id: str
    clicks: int
    orderlines: int
    gmv_cents: int


@dataclass(frozen=True)
class SessionLog:
    users: tuple[UserSession, ...]
    seed: int = 0
    config_hash: str = ""

    @property
    def unique_visitors(self) -> int:
        return len(self.users)

    def total_clicks(self) -> int:
        return sum(u.clicks for u in self.users)

    def total_orderlines(self) -> int:
        return sum(u.orderlines for u in self.users)

    def total_gmv_cents(self) -> int:
        return sum(u.gmv_cents for u in self.users)


_CLICK_P = {4: 0.65, 3: 0.45, 2: 0.20, 1: 0.08, 0: 0.02}
_ORDER_P = 0.30


def gen_session_log(d: Dataset, n_users: int, seed: int) -> SessionLog:
    """Simulate per-user clicks, orderlines, and spend over ``d``.

    Click propensity follows the shown example's relevance grade, so more
    relevant result streams convert better. Deterministic per seed.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    rng = np.random.default_rng(seed)
    n_examples = len(d.examples)
    users: list[UserSession] = []
    for u in range(n_users):
        impressions = int(rng.integers(0, 7))
        clicks = 0
        orders = 0
        gmv = 0
        for _ in range(impressions):
            if n_examples == 0:
                break
            ex = d.examples[int(rng.integers(0, n_examples))]
            if rng.random() < _CLICK_P[ex.label.rank]:
                clicks += 1
                if rng.random() < _ORDER_P:
                    orders += 1
                    gmv += int(rng.integers(500, 50001))
        users.append(UserSession(f"u{u:06d}", clicks, orders, gmv))
    return SessionLog(tuple(users), seed=seed)


def write_session_log(log: SessionLog, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"seed": log.seed, "config_hash": log.config_hash}) + "\n")
        for u in log.users:
            fh.write(
                json.dumps(
                    {
                        "user_id": u.user_id,
                        "clicks": u.clicks,
                        "orderlines": u.orderlines,
                        "gmv_cents": u.gmv_cents,
                    }
                )
                + "\n"
            )


def read_session_log(path) -> SessionLog:
    path = Path(path)
    users: list[UserSession] = []
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
            if "user_id" not in obj:
                seed = int(obj.get("seed", 0))
                config_hash = str(obj.get("config_hash", ""))
                continue
            users.append(
                UserSession(
                    user_id=obj["user_id"],
                    clicks=int(obj["clicks"]),
                    orderlines=int(obj["orderlines"]),
                    gmv_cents=int(obj["gmv_cents"]),
                )
            )
    return SessionLog(tuple(users), seed=seed, config_hash=config_hash)


# ---------------------------------------------------------------------------
# Catalog files


def write_catalog(catalog: Catalog, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        meta = {
            "seed": catalog.seed,
            "type_brands": {t: list(v) for t, v in catalog.type_brands.items()},
            "type_attributes": {
                t: list(v) for t, v in catalog.type_attributes.items()
            },
        }
        fh.write(json.dumps(meta) + "\n")
        for p in catalog.products:
            fh.write(
                json.dumps(
                    {
                        "brand": p.brand,
                        "product_type": p.product_type,
                        "function_class": p.function_class,
                        "model": p.model,
                        "attributes": sorted(p.attributes),
                        "accessory_of": p.accessory_of,
                    }
                )
                + "\n"
            )


def read_catalog(path) -> Catalog:
    path = Path(path)
    products: list[Facets] = []
    seed = 0
    type_brands: dict[str, tuple[str, ...]] = {}
    type_attributes: dict[str, tuple[str, ...]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if "brand" not in obj:
                seed = int(obj.get("seed", 0))
                type_brands = {
                    t: tuple(v) for t, v in obj.get("type_brands", {}).items()
                }
                type_attributes = {
                    t: tuple(v) for t, v in obj.get("type_attributes", {}).items()
                }
                continue
            products.append(
                Facets(
                    brand=obj["brand"],
                    product_type=obj["product_type"],
                    function_class=obj["function_class"],
                    model=obj.get("model"),
                    attributes=frozenset(obj.get("attributes", ())),
                    accessory_of=obj.get("accessory_of"),
                )
            )
    return Catalog(
        products=tuple(products),
        type_brands=type_brands,
        type_attributes=type_attributes,
        seed=seed,
    )
