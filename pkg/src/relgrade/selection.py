"""Stage 1: train the three auxiliary models and run the set-selection chain.

Three models drive the chain: the initial model (random subset), the
challenge identifier (tier-balanced subset), and the mislabeled
supervisor (trained to predict each example's most confusable neighbor
label). The selected set keeps examples the challenge identifier gets
right, the initial model gets wrong, and the supervisor does not flag as
confound-like:

    seed        = {x in D : CI(x) == L(x)}
    challenging = {x in seed : IM(x) != L(x)}
    selection   = {x in challenging : MS(x) != L(x)}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from relgrade.corpus import clean_label
from relgrade.errors import EmptySelection, EmptyStratum, TokenizerMismatch
from relgrade.model import (
    Checkpoint,
    Dims,
    Tokenizer,
    TrainConfig,
    batch_predict,
    encode_pair,
    init_checkpoint,
    label_target,
    train,
)
from relgrade.schema import (
    Dataset,
    Example,
    Label,
    ORDERED_LABELS,
    ORDERED_TIERS,
    adjacent_confound,
    largest_remainder_counts,
)


def training_pairs(tokenizer: Tokenizer, dims: Dims, examples: Sequence[Example],
                   labels: Sequence[Label] | None = None):
    """Encode (query, title) -> [label, EOS] pairs for plain training."""
    if labels is None:
        labels = [ex.label for ex in examples]
    return [
        (
            encode_pair(tokenizer, ex.query, ex.title),
            label_target(tokenizer, label),
        )
        for ex, label in zip(examples, labels)
    ]


def predictions(c: Checkpoint, d: Dataset) -> list[Label]:
    """Greedy predictions for every example, in dataset order."""
    inputs = [
        encode_pair(c.tokenizer, ex.query, ex.title) for ex in d.examples
    ]
    return batch_predict(c, inputs)


def train_initial_model(
    d: Dataset,
    n_random: int,
    seed: int,
    tokenizer: Tokenizer,
    dims: Dims,
    cfg: TrainConfig | None = None,
) -> Checkpoint:
    """Train the initial model on a uniform random subset of ``d``."""
    if n_random > len(d):
        raise ValueError(f"n_random={n_random} exceeds dataset size {len(d)}")
    cfg = cfg or TrainConfig(seed=seed)
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(d))[:n_random]
    subset = [d.examples[int(i)] for i in idx]
    start = init_checkpoint(dims, tokenizer, seed=seed)
    pairs = training_pairs(tokenizer, dims, subset)
    return train(start, pairs, cfg, stage_tag="IM")


def train_challenge_identifier(
    d: Dataset,
    n: int,
    seed: int,
    tokenizer: Tokenizer,
    dims: Dims,
    cfg: TrainConfig | None = None,
) -> Checkpoint:
    """Train the challenge identifier on a tier-uniform subset.

    Uniform sampling across the three tiers puts Middle plus LongTail at
    two thirds of the training data, so uncommon query shapes carry real
    weight.

    Raises EmptyStratum if a tier is missing or too small.
    """
    cfg = cfg or TrainConfig(seed=seed)
    by_tier = {tier: [] for tier in ORDERED_TIERS}
    for ex in d.examples:
        by_tier[ex.tier].append(ex)
    for tier in ORDERED_TIERS:
        if not by_tier[tier]:
            raise EmptyStratum(f"no examples in tier {tier.value}")
    counts = largest_remainder_counts(
        {tier: 1.0 / 3.0 for tier in ORDERED_TIERS}, n
    )
    rng = np.random.default_rng(seed)
    subset: list[Example] = []
    for tier in ORDERED_TIERS:
        want = counts[tier]
        pool = by_tier[tier]
        if want > len(pool):
            raise EmptyStratum(
                f"tier {tier.value} has {len(pool)} examples, need {want}"
            )
        idx = np.sort(rng.choice(len(pool), size=want, replace=False))
        subset.extend(pool[int(i)] for i in idx)
    start = init_checkpoint(dims, tokenizer, seed=seed)
    pairs = training_pairs(tokenizer, dims, subset)
    return train(start, pairs, cfg, stage_tag="CI")


def make_confound_labels(
    d: Dataset, seed: int, n: int | None = None
) -> list[tuple[Example, Label]]:
    """Pair a random sample of examples with their confound labels.

    The confound oracle returns the adjacent neighbor of the example's
    clean (re-derived) label, stepping toward Significant, so the
    confound never equals the true label.
    """
    rng = np.random.default_rng(seed)
    if n is None or n >= len(d):
        idx = list(range(len(d)))
    else:
        idx = sorted(int(i) for i in rng.choice(len(d), size=n, replace=False))
    out = []
    for i in idx:
        ex = d.examples[i]
        out.append((ex, adjacent_confound(clean_label(ex))))
    return out


def train_mislabeled_supervisor(
    pairs: Sequence[tuple[Example, Label]],
    seed: int,
    tokenizer: Tokenizer,
    dims: Dims,
    cfg: TrainConfig | None = None,
) -> Checkpoint:
    """Train the supervisor with confound labels as targets."""
    if len(pairs) == 0:
        raise ValueError("confound pairs must be non-empty")
    cfg = cfg or TrainConfig(seed=seed)
    examples = [ex for ex, _ in pairs]
    labels = [lab for _, lab in pairs]
    start = init_checkpoint(dims, tokenizer, seed=seed)
    encoded = training_pairs(tokenizer, dims, examples, labels)
    return train(start, encoded, cfg, stage_tag="MS")


# ---------------------------------------------------------------------------
# Set construction


@dataclass(frozen=True)
class SelectionReport:
    """Sizes, per-label histograms, and noise accounting of the chain."""

    size_full: int
    size_seed: int
    size_challenging: int
    size_selection: int
    histogram_full: dict[str, int]
    histogram_seed: dict[str, int]
    histogram_challenging: dict[str, int]
    histogram_selection: dict[str, int]
    noisy_in_challenging: int
    noisy_in_selection: int

    def to_json(self) -> dict:
        return {
            "sizes": {
                "full": self.size_full,
                "seed": self.size_seed,
                "challenging": self.size_challenging,
                "selection": self.size_selection,
            },
            "histograms": {
                "full": self.histogram_full,
                "seed": self.histogram_seed,
                "challenging": self.histogram_challenging,
                "selection": self.histogram_selection,
            },
            "noisy": {
                "in_challenging": self.noisy_in_challenging,
                "in_selection": self.noisy_in_selection,
                "removed_by_supervisor": self.noisy_in_challenging
                - self.noisy_in_selection,
            },
        }


def _hist(examples: Sequence[Example]) -> dict[str, int]:
    out = {label.value: 0 for label in ORDERED_LABELS}
    for ex in examples:
        out[ex.label.value] += 1
    return out


def select_sets(
    d: Dataset,
    im_preds: Sequence[Label],
    ci_preds: Sequence[Label],
    ms_preds: Sequence[Label],
) -> tuple[list[Example], list[Example], list[Example]]:
    """Sequential chain: seed, then challenging, then selection."""
    seed = [
        ex for ex, ci in zip(d.examples, ci_preds) if ci == ex.label
    ]
    keep = {ex.id for ex in seed}
    challenging = [
        ex
        for ex, im in zip(d.examples, im_preds)
        if ex.id in keep and im != ex.label
    ]
    keep = {ex.id for ex in challenging}
    selection = [
        ex
        for ex, ms in zip(d.examples, ms_preds)
        if ex.id in keep and ms != ex.label
    ]
    return seed, challenging, selection


def select_composed(
    d: Dataset,
    im_preds: Sequence[Label],
    ci_preds: Sequence[Label],
    ms_preds: Sequence[Label],
) -> list[Example]:
    """Single-pass form: one conjunction of the three membership tests."""
    return [
        ex
        for ex, im, ci, ms in zip(d.examples, im_preds, ci_preds, ms_preds)
        if ci == ex.label and im != ex.label and ms != ex.label
    ]


def select(
    d: Dataset, im: Checkpoint, ci: Checkpoint, ms: Checkpoint
) -> tuple[Dataset, SelectionReport]:
    """Run the full selection chain; returns the selected set and report.

    Raises TokenizerMismatch when the three checkpoints do not share a
    tokenizer.
    """
    chain = select_chain(d, im, ci, ms)
    return chain[2], chain[3]


def select_chain(
    d: Dataset, im: Checkpoint, ci: Checkpoint, ms: Checkpoint
) -> tuple[Dataset, Dataset, Dataset, SelectionReport]:
    """As ``select`` but also returns the intermediate seed and challenging sets."""
    if not (im.tokenizer == ci.tokenizer == ms.tokenizer):
        raise TokenizerMismatch("selection models must share a tokenizer")
    im_preds = predictions(im, d)
    ci_preds = predictions(ci, d)
    ms_preds = predictions(ms, d)
    seed, challenging, selection = select_sets(d, im_preds, ci_preds, ms_preds)
    report = SelectionReport(
        size_full=len(d),
        size_seed=len(seed),
        size_challenging=len(challenging),
        size_selection=len(selection),
        histogram_full=_hist(d.examples),
        histogram_seed=_hist(seed),
        histogram_challenging=_hist(challenging),
        histogram_selection=_hist(selection),
        noisy_in_challenging=sum(1 for ex in challenging if ex.noisy),
        noisy_in_selection=sum(1 for ex in selection if ex.noisy),
    )
    return (
        Dataset(tuple(seed), seed=d.seed, config_hash=d.config_hash),
        Dataset(tuple(challenging), seed=d.seed, config_hash=d.config_hash),
        Dataset(tuple(selection), seed=d.seed, config_hash=d.config_hash),
        report,
    )


def finetune_on_selection(
    im: Checkpoint, s_selection: Dataset, cfg: TrainConfig
) -> Checkpoint:
    """Continue training from the initial model on the selected set."""
    if len(s_selection) == 0:
        raise EmptySelection("selection set is empty")
    pairs = training_pairs(im.tokenizer, im.dims, s_selection.examples)
    return train(im, pairs, cfg, stage_tag="IM+select")


def write_selection_report(report: SelectionReport, path, seed: int = 0,
                           config_hash: str = "") -> None:
    path = Path(path)
    payload = {"seed": seed, "config_hash": config_hash, **report.to_json()}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
