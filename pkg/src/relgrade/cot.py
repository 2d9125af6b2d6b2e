"""Stage 2: synthesize reasoning-trace records and train on them.

Three record kinds, all produced by deterministic template oracles over
the ground-truth structure:

* EE - per-dimension analysis (type, brand, model, attributes), input is
  the plain (query, title) form, so this is also the shape used at
  inference time.
* RA - the rule trace (product axis, modifier axis, ruled tier) plus the
  fixed rule text; input carries the rule marker.
* DR - reflection on a recorded wrong decision; input carries the
  reflection marker and the wrong label, and only exists where the model
  actually erred.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from relgrade import tokens as tok
from relgrade.corpus import parse_query
from relgrade.errors import ParseError
from relgrade.model import (
    Checkpoint,
    Dims,
    Seq,
    Tokenizer,
    TrainConfig,
    batch_predict,
    encode_pair,
    train,
)
from relgrade.rulejudge import judge, judge_axes, modifier_detail
from relgrade.schema import Dataset, Example, Label


class CotKind(Enum):
    EE = "EE"
    RA = "RA"
    DR = "DR"


ALL_KINDS: frozenset[CotKind] = frozenset(CotKind)


@dataclass(frozen=True)
class CotRecord:
    kind: CotKind
    query: str
    title: str
    label: Label
    cot_tokens: tuple[str, ...]
    rule: str | None = None
    wrong_decision: Label | None = None
    example_id: str = ""

    def __post_init__(self):
        if not self.cot_tokens:
            raise ValueError("cot_tokens must be non-empty")
        if self.kind is CotKind.RA and self.rule is None:
            raise ValueError("RA records carry the rule text")
        if self.kind is CotKind.DR:
            if self.wrong_decision is None:
                raise ValueError("DR records carry the wrong decision")
            if self.wrong_decision == self.label:
                raise ValueError("wrong decision must differ from the label")


def synth_ee(ex: Example) -> CotRecord:
    """Per-dimension verdict trace: one token per dimension the query states."""
    spec = parse_query(ex.query)
    axes = judge_axes(spec, ex.facets)
    detail = modifier_detail(spec, ex.facets)
    trace = [tok.type_axis_token(axes.product_axis)]
    if detail.brand is not None:
        trace.append(tok.brand_token(detail.brand))
    if detail.model is not None:
        trace.append(tok.model_token(detail.model))
    if detail.attributes is not None:
        trace.append(tok.attr_token(detail.attributes))
    return CotRecord(
        kind=CotKind.EE,
        query=ex.query,
        title=ex.title,
        label=ex.label,
        cot_tokens=tuple(trace),
        example_id=ex.id,
    )


def synth_ra(ex: Example) -> CotRecord:
    """Rule trace: product axis, modifier axis, then the ruled tier."""
    from relgrade.rulejudge import rule_text

    spec = parse_query(ex.query)
    axes = judge_axes(spec, ex.facets)
    ruled = judge(spec, ex.facets)
    trace = (
        tok.product_axis_token(axes.product_axis),
        tok.modifier_axis_token(axes.modifier_axis),
        tok.decide_token(ruled),
    )
    return CotRecord(
        kind=CotKind.RA,
        query=ex.query,
        title=ex.title,
        label=ex.label,
        cot_tokens=trace,
        rule=rule_text(),
        example_id=ex.id,
    )


def synth_dr(ex: Example, model: Checkpoint) -> CotRecord | None:
    """Reflection record for a model error; None when the model is right."""
    pred = batch_predict(
        model, [encode_pair(model.tokenizer, ex.query, ex.title)]
    )[0]
    if pred == ex.label:
        return None
    ra = synth_ra(ex)
    return CotRecord(
        kind=CotKind.DR,
        query=ex.query,
        title=ex.title,
        label=ex.label,
        cot_tokens=(tok.wrong_was_token(pred),) + ra.cot_tokens,
        wrong_decision=pred,
        example_id=ex.id,
    )


def synthesize_records(
    dataset: Dataset,
    model: Checkpoint,
    kinds: frozenset[CotKind] = ALL_KINDS,
) -> list[CotRecord]:
    """All trace records for a dataset, ordered by example then kind.

    DR records need the model's predictions, which are computed in one
    batched pass.
    """
    preds: list[Label] | None = None
    if CotKind.DR in kinds:
        inputs = [
            encode_pair(model.tokenizer, ex.query, ex.title)
            for ex in dataset.examples
        ]
        preds = batch_predict(model, inputs)
    records: list[CotRecord] = []
    for i, ex in enumerate(dataset.examples):
        if CotKind.EE in kinds:
            records.append(synth_ee(ex))
        if CotKind.RA in kinds:
            records.append(synth_ra(ex))
        if CotKind.DR in kinds and preds is not None and preds[i] != ex.label:
            ra = synth_ra(ex)
            records.append(
                CotRecord(
                    kind=CotKind.DR,
                    query=ex.query,
                    title=ex.title,
                    label=ex.label,
                    cot_tokens=(tok.wrong_was_token(preds[i]),) + ra.cot_tokens,
                    wrong_decision=preds[i],
                    example_id=ex.id,
                )
            )
    return records


_FORMS = {CotKind.EE: "plain", CotKind.RA: "ra", CotKind.DR: "dr"}


def record_input(tokenizer: Tokenizer, rec: CotRecord) -> Seq:
    return encode_pair(
        tokenizer,
        rec.query,
        rec.title,
        form=_FORMS[rec.kind],
        wrong=rec.wrong_decision,
    )


def record_target(tokenizer: Tokenizer, dims: Dims, rec: CotRecord) -> Seq:
    ids = tuple(tokenizer.output_index[t] for t in rec.cot_tokens)
    if len(ids) > dims.max_out_len - 2:
        raise ValueError(
            f"trace of {len(ids)} tokens does not fit max_out_len={dims.max_out_len}"
        )
    return ids + (tokenizer.id_for_label(rec.label), tokenizer.eos_id)


def assemble_cot_training(
    dataset: Dataset,
    model: Checkpoint,
    kinds: frozenset[CotKind] = ALL_KINDS,
) -> list[tuple[Seq, Seq]]:
    """Encoded (input, target) pairs for every synthesized record."""
    records = synthesize_records(dataset, model, kinds)
    return [
        (
            record_input(model.tokenizer, rec),
            record_target(model.tokenizer, model.dims, rec),
        )
        for rec in records
    ]


def train_cot(
    start: Checkpoint,
    cot_pairs: Sequence[tuple[Seq, Seq]],
    cfg: TrainConfig,
) -> Checkpoint:
    """Continue training from the selection-tuned model on trace pairs."""
    if start.stage_tag != "IM+select":
        raise ValueError(
            f"expected a checkpoint tagged IM+select, got {start.stage_tag!r}"
        )
    if len(cot_pairs) == 0:
        raise ValueError("no trace pairs to train on")
    return train(start, cot_pairs, cfg, stage_tag="IM+select+cot")


def parse_kinds(text: str) -> frozenset[CotKind]:
    """Parse a kinds mask like "ee,ra,dr"."""
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.add(CotKind(part.upper()))
        except ValueError:
            raise ValueError(f"unknown trace kind {part!r}") from None
    if not out:
        raise ValueError("at least one trace kind is required")
    return frozenset(out)


# ---------------------------------------------------------------------------
# Record files


def write_cot_records(records: Iterable[CotRecord], path, seed: int = 0,
                      config_hash: str = "") -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"seed": seed, "config_hash": config_hash}) + "\n")
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "kind": rec.kind.value,
                        "example_id": rec.example_id,
                        "query": rec.query,
                        "title": rec.title,
                        "label": rec.label.value,
                        "cot_tokens": list(rec.cot_tokens),
                        "rule": rec.rule,
                        "wrong_decision": (
                            rec.wrong_decision.value if rec.wrong_decision else None
                        ),
                    }
                )
                + "\n"
            )


def read_cot_records(path) -> list[CotRecord]:
    path = Path(path)
    records: list[CotRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if "kind" not in obj:
                continue
            try:
                records.append(
                    CotRecord(
                        kind=CotKind(obj["kind"]),
                        query=obj["query"],
                        title=obj["title"],
                        label=Label.from_text(obj["label"]),
                        cot_tokens=tuple(obj["cot_tokens"]),
                        rule=obj.get("rule"),
                        wrong_decision=(
                            Label.from_text(obj["wrong_decision"])
                            if obj.get("wrong_decision")
                            else None
                        ),
                        example_id=obj.get("example_id", ""),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ParseError(path, line_no, str(exc)) from None
    return records
