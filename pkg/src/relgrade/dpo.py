"""Stage 3: mine preference pairs from beam search and de-bias with them.

A pair is mined wherever the greedy (top-1) label is wrong but some beam
entry in positions 2..k carries the correct label; the erroneous top-1
sequence is rejected and the highest-ranked correct sequence is chosen.
The loss is -log sigmoid(beta * (score(chosen) - score(rejected))) on
whole-sequence log-likelihoods, which pushes the margin between correct
and optimistic decodes apart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from relgrade.errors import Diverged, NonFinite, ParseError
from relgrade.model import (
    Checkpoint,
    Seq,
    _weighted_nll_and_grad,
    batch_greedy_decode,
    beam_search,
    encode_pair,
)
from relgrade.schema import Dataset, Label


@dataclass(frozen=True)
class PrefPair:
    """Input plus a (chosen, rejected) pair of full output sequences."""

    input_ids: Seq
    chosen: Seq
    rejected: Seq
    rank_of_chosen: int
    example_id: str = ""

    def __post_init__(self):
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected must differ")
        if self.rank_of_chosen < 2:
            raise ValueError("chosen must come from beam position 2 or below")


def mine_pref_pairs(
    c: Checkpoint, d: Dataset, k: int, search_width: int | None = None
) -> list[PrefPair]:
    """Mine one pair per correctable error in ``d``.

    ``k`` bounds the eligible beam positions (2..k); the search itself
    runs one slot wider by default so near-miss orderings stay visible.
    Deterministic for a fixed checkpoint and dataset.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    width = search_width if search_width is not None else k + 1
    if width < k:
        raise ValueError("search width must be at least k")
    tokenizer = c.tokenizer
    inputs = [
        encode_pair(tokenizer, ex.query, ex.title) for ex in d.examples
    ]
    greedy = batch_greedy_decode(c, inputs)
    pairs: list[PrefPair] = []
    for ex, input_ids, top1 in zip(d.examples, inputs, greedy):
        # cheap prefilter: only errors can yield a pair
        if tokenizer.label_for_id(top1[-2]) == ex.label:
            continue
        beams = beam_search(c, input_ids, width)
        want = tokenizer.id_for_label(ex.label)
        if not beams or beams[0][0][-2] == want:
            continue
        rejected = beams[0][0]
        for pos in range(1, min(k, len(beams))):
            seq = beams[pos][0]
            if seq[-2] == want:
                pairs.append(
                    PrefPair(
                        input_ids=tuple(input_ids),
                        chosen=seq,
                        rejected=rejected,
                        rank_of_chosen=pos + 1,
                        example_id=ex.id,
                    )
                )
                break
    return pairs


def _sequence_logprobs(
    c: Checkpoint, items: Sequence[tuple[Seq, Seq]]
) -> np.ndarray:
    """Batched whole-sequence log-likelihoods."""
    out = np.empty(len(items))
    for i, (input_ids, seq) in enumerate(items):
        nll, _ = _weighted_nll_and_grad(
            c.params, c.dims, [(input_ids, seq, 1.0)], want_grad=False
        )
        out[i] = -nll
    return out


def pair_margins(c: Checkpoint, pairs: Sequence[PrefPair]) -> np.ndarray:
    """score(chosen) - score(rejected) for every pair."""
    chosen = _sequence_logprobs(c, [(p.input_ids, p.chosen) for p in pairs])
    rejected = _sequence_logprobs(c, [(p.input_ids, p.rejected) for p in pairs])
    return chosen - rejected


def loss_dpo(c: Checkpoint, pair: PrefPair, beta: float = 1.0) -> float:
    """-log sigmoid(beta * margin); ln 2 at zero margin, falls as it grows."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    margin = float(pair_margins(c, [pair])[0])
    return float(np.logaddexp(0.0, -beta * margin))


def mean_loss_dpo(c: Checkpoint, pairs: Sequence[PrefPair], beta: float = 1.0) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    margins = pair_margins(c, pairs)
    return float(np.mean(np.logaddexp(0.0, -beta * margins)))


def grad_dpo(
    c: Checkpoint, pairs: Sequence[PrefPair], beta: float = 1.0
) -> np.ndarray:
    """Exact gradient of the mean preference loss over ``pairs``.

    d/d_margin of -log sigmoid(beta m) is -beta sigmoid(-beta m); the
    chosen side enters with that coefficient on its log-likelihood and
    the rejected side with the opposite sign, expressed here as weighted
    sequence NLL terms.
    """
    if len(pairs) == 0:
        raise ValueError("pairs must be non-empty")
    if beta <= 0:
        raise ValueError("beta must be positive")
    margins = pair_margins(c, pairs)
    # coefficient on the margin, averaged over pairs
    coef = -beta / (1.0 + np.exp(beta * margins)) / len(pairs)
    items = []
    for pair, ci in zip(pairs, coef):
        # grad(logprob) = -grad(nll): flip signs to express in NLL weights
        items.append((pair.input_ids, pair.chosen, float(-ci)))
        items.append((pair.input_ids, pair.rejected, float(ci)))
    _, grad = _weighted_nll_and_grad(c.params, c.dims, items)
    assert grad is not None
    return grad


@dataclass(frozen=True)
class DpoConfig:
    lr: float = 0.02
    epochs: int = 2
    beta: float = 1.0
    batch_size: int = 16
    seed: int = 0


def train_dpo(
    start: Checkpoint, pairs: Sequence[PrefPair], cfg: DpoConfig
) -> Checkpoint:
    """SGD on the preference loss; two epochs by default to avoid overfit."""
    if start.stage_tag != "IM+select+cot":
        raise ValueError(
            f"expected a checkpoint tagged IM+select+cot, got {start.stage_tag!r}"
        )
    if len(pairs) == 0:
        raise ValueError("no preference pairs to train on")
    current = start
    rng = np.random.default_rng(cfg.seed)
    n = len(pairs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for begin in range(0, n, cfg.batch_size):
            batch = [pairs[int(i)] for i in order[begin : begin + cfg.batch_size]]
            try:
                grad = grad_dpo(current, batch, beta=cfg.beta)
            except NonFinite as exc:
                raise Diverged(f"epoch {epoch}: {exc}") from exc
            params = current.params - cfg.lr * grad
            if not np.all(np.isfinite(params)):
                raise Diverged(f"epoch {epoch}: parameters became non-finite")
            current = replace(current, params=params)
    return replace(current, stage_tag="final")


# ---------------------------------------------------------------------------
# Bias reporting


@dataclass(frozen=True)
class BiasSide:
    """Error anatomy of one checkpoint on one dataset.

    Conditional fractions are None when their denominator is empty.
    """

    error_rate: float
    significant_error_fraction: float | None
    over_corrected_at_2: float | None
    marginal_recall: float | None
    significant_precision: float | None
    n_errors: int
    n_over_predictions: int

    def to_json(self) -> dict:
        return {
            "error_rate": self.error_rate,
            "significant_error_fraction": self.significant_error_fraction,
            "over_corrected_at_2": self.over_corrected_at_2,
            "marginal_recall": self.marginal_recall,
            "significant_precision": self.significant_precision,
            "n_errors": self.n_errors,
            "n_over_predictions": self.n_over_predictions,
        }


@dataclass(frozen=True)
class BiasReport:
    before: BiasSide
    after: BiasSide
    k: int

    def to_json(self) -> dict:
        return {"k": self.k, "before": self.before.to_json(), "after": self.after.to_json()}


def _bias_side(c: Checkpoint, d: Dataset, k: int) -> BiasSide:
    tokenizer = c.tokenizer
    inputs = [
        encode_pair(tokenizer, ex.query, ex.title) for ex in d.examples
    ]
    decoded = batch_greedy_decode(c, inputs)
    preds = [tokenizer.label_for_id(s[-2]) for s in decoded]
    truths = [ex.label for ex in d.examples]

    errors = [
        (i, t, p) for i, (t, p) in enumerate(zip(truths, preds)) if t != p
    ]
    n = len(truths)
    error_rate = len(errors) / n if n else 0.0
    sig_frac = (
        sum(1 for _, _, p in errors if p is Label.SIGNIFICANT) / len(errors)
        if errors
        else None
    )
    over = [(i, t, p) for i, t, p in errors if p.rank > t.rank]
    corrected = None
    if over:
        hits = 0
        for i, t, _ in over:
            beams = beam_search(c, inputs[i], max(2, k))
            if len(beams) >= 2 and tokenizer.label_for_id(beams[1][0][-2]) == t:
                hits += 1
        corrected = hits / len(over)
    marginal_truths = sum(1 for t in truths if t is Label.MARGINAL)
    marginal_hits = sum(
        1 for t, p in zip(truths, preds) if t is Label.MARGINAL and p is Label.MARGINAL
    )
    marginal_recall = marginal_hits / marginal_truths if marginal_truths else None
    sig_preds = sum(1 for p in preds if p is Label.SIGNIFICANT)
    sig_hits = sum(
        1
        for t, p in zip(truths, preds)
        if p is Label.SIGNIFICANT and t is Label.SIGNIFICANT
    )
    sig_precision = sig_hits / sig_preds if sig_preds else None
    return BiasSide(
        error_rate=error_rate,
        significant_error_fraction=sig_frac,
        over_corrected_at_2=corrected,
        marginal_recall=marginal_recall,
        significant_precision=sig_precision,
        n_errors=len(errors),
        n_over_predictions=len(over),
    )


def bias_report(
    before: Checkpoint, after: Checkpoint, d: Dataset, k: int
) -> BiasReport:
    """Error anatomy of two checkpoints on the same dataset."""
    return BiasReport(
        before=_bias_side(before, d, k), after=_bias_side(after, d, k), k=k
    )


# ---------------------------------------------------------------------------
# Pair files


def write_pref_pairs(pairs: Sequence[PrefPair], path, seed: int = 0,
                     config_hash: str = "") -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"seed": seed, "config_hash": config_hash}) + "\n")
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "example_id": p.example_id,
                        "input_ids": list(p.input_ids),
                        "chosen": list(p.chosen),
                        "rejected": list(p.rejected),
                        "rank_of_chosen": p.rank_of_chosen,
                    }
                )
                + "\n"
            )


def read_pref_pairs(path) -> list[PrefPair]:
    path = Path(path)
    pairs: list[PrefPair] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if "input_ids" not in obj:
                continue
            try:
                pairs.append(
                    PrefPair(
                        input_ids=tuple(obj["input_ids"]),
                        chosen=tuple(obj["chosen"]),
                        rejected=tuple(obj["rejected"]),
                        rank_of_chosen=int(obj["rank_of_chosen"]),
                        example_id=obj.get("example_id", ""),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ParseError(path, line_no, str(exc)) from None
    return pairs
