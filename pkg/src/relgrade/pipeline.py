"""Pipeline configuration, stage DAG, and artifact management.

Each stage reads its inputs from the run directory and writes its outputs
back there, so re-running a stage with the same config reproduces the
same bytes and a full run is resumable from the last complete stage.
Every emitted file carries the resolved config hash and the master seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

from relgrade import corpus as corpus_mod
from relgrade import cot as cot_mod
from relgrade import dpo as dpo_mod
from relgrade import metrics as metrics_mod
from relgrade import selection as selection_mod
from relgrade import tokens as tok
from relgrade.errors import ConfigError, MissingArtifact
from relgrade.model import (
    Checkpoint,
    Dims,
    Tokenizer,
    TrainConfig,
    read_checkpoint,
    write_checkpoint,
)
from relgrade.schema import Dataset, ORDERED_LABELS, Tier, read_dataset, write_dataset


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of a run; seeds are explicit, never wall-clock."""

    seed: int = 7
    out_dir: str = "runs/default"

    # corpus
    n_products: int = 400
    train_size: int = 50000
    test_size: int = 5000
    noise_rate: float = 0.1
    test_noise_rate: float = 0.1
    tier_top: float = 0.5
    tier_middle: float = 0.3
    tier_long_tail: float = 0.2
    n_users: int = 2000

    # model
    embed_dim: int = 32
    hidden_dim: int = 64
    max_out_len: int = 8

    # stage 1: selection
    im_n: int = 1500
    im_epochs: int = 150
    im_lr: float = 0.3
    im_batch: int = 16
    ci_n: int = 2400
    ci_epochs: int = 150
    ci_lr: float = 0.3
    ci_batch: int = 16
    ms_n: int = 2400
    ms_epochs: int = 150
    ms_lr: float = 0.3
    ms_batch: int = 16
    ft_epochs: int = 40
    ft_lr: float = 0.2
    ft_batch: int = 16

    # stage 2: trace tuning
    cot_kinds: str = "ee,ra,dr"
    cot_epochs: int = 30
    cot_lr: float = 0.2
    cot_batch: int = 16

    # stage 3: preference de-biasing
    mine_k: int = 3
    search_width: int = 4
    dpo_beta: float = 1.0
    dpo_epochs: int = 2
    dpo_lr: float = 0.02
    dpo_batch: int = 16

    def validate(self) -> None:
        if self.train_size < 1 or self.test_size < 1 or self.n_products < 1:
            raise ConfigError("corpus sizes must be positive")
        if not 0.0 <= self.noise_rate <= 0.5:
            raise ConfigError("noise_rate must be in [0, 0.5]")
        if not 0.0 <= self.test_noise_rate <= 0.5:
            raise ConfigError("test_noise_rate must be in [0, 0.5]")
        tiers = self.tier_top + self.tier_middle + self.tier_long_tail
        if abs(tiers - 1.0) > 1e-9:
            raise ConfigError(f"tier mix sums to {tiers!r}, expected 1")
        if self.max_out_len < 2:
            raise ConfigError("max_out_len must be >= 2")
        if self.im_n > self.train_size:
            raise ConfigError("im_n exceeds train_size")
        for name in ("im_lr", "ci_lr", "ms_lr", "ft_lr", "cot_lr", "dpo_lr"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in (
            "im_epochs", "ci_epochs", "ms_epochs", "ft_epochs",
            "cot_epochs", "dpo_epochs",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.dpo_beta <= 0:
            raise ConfigError("dpo_beta must be positive")
        if self.mine_k < 2:
            raise ConfigError("mine_k must be >= 2")
        if self.search_width < self.mine_k:
            raise ConfigError("search_width must be at least mine_k")
        cot_mod.parse_kinds(self.cot_kinds)  # raises ValueError on junk

    # -- serialization ----------------------------------------------------

    def to_text(self) -> str:
        lines = ["# resolved pipeline configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        values: dict[str, object] = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_no}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            ftype = known[key].type
            try:
                if ftype in ("int", int):
                    values[key] = int(value)
                elif ftype in ("float", float):
                    values[key] = float(value)
                else:
                    values[key] = value
            except ValueError:
                raise ConfigError(
                    f"line {line_no}: bad value for {key}: {value!r}"
                ) from None
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        cfg = dataclasses.replace(self, **kwargs)
        cfg.validate()
        return cfg

    @property
    def config_hash(self) -> str:
        # paths are excluded so moving a run directory does not change
        # the recorded provenance
        payload = "\n".join(
            f"{f.name}={getattr(self, f.name)}"
            for f in fields(self)
            if f.name != "out_dir"
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    @property
    def tier_mix(self) -> dict[Tier, float]:
        return {
            Tier.TOP: self.tier_top,
            Tier.MIDDLE: self.tier_middle,
            Tier.LONG_TAIL: self.tier_long_tail,
        }


# fixed offsets for per-stage seeds, derived from the master seed
_SEED_OFFSETS = {
    "catalog": 1,
    "train": 2,
    "test": 3,
    "sessions": 4,
    "im": 5,
    "ci": 6,
    "ms": 7,
    "ft": 8,
    "cot": 9,
    "dpo": 10,
}


def stage_seed(cfg: PipelineConfig, name: str) -> int:
    return cfg.seed * 100 + _SEED_OFFSETS[name]


ARTIFACTS: dict[str, str] = {
    "catalog": "catalog.jsonl",
    "train": "train.jsonl",
    "test": "test.jsonl",
    "sessions": "sessions.jsonl",
    "im": "im.ckpt",
    "ci": "ci.ckpt",
    "ms": "ms.ckpt",
    "S_seed": "s_seed.jsonl",
    "S_challenging": "s_challenging.jsonl",
    "S_selection": "s_selection.jsonl",
    "selection_report": "selection_report.json",
    "im_select": "im_select.ckpt",
    "cot_records": "cot_records.jsonl",
    "im_select_cot": "im_select_cot.ckpt",
    "pref_pairs": "pref_pairs.jsonl",
    "final": "final.ckpt",
    "evaluation": "evaluation.json",
    "bias_report": "bias_report.json",
    "report_txt": "report.txt",
    "report_json": "report.json",
}

#: stage name -> (required artifact names, produced artifact names)
STAGES: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "gen-corpus": ((), ("catalog", "train", "test", "sessions")),
    "train-im": (("catalog", "train"), ("im",)),
    "train-ci": (("catalog", "train"), ("ci",)),
    "train-ms": (("catalog", "train"), ("ms",)),
    "select": (
        ("train", "im", "ci", "ms"),
        ("S_seed", "S_challenging", "S_selection", "selection_report", "im_select"),
    ),
    "synth-cot": (("S_selection", "im_select"), ("cot_records",)),
    "train-cot": (
        ("S_selection", "im_select", "cot_records"),
        ("im_select_cot",),
    ),
    "mine-prefs": (("train", "im_select_cot"), ("pref_pairs",)),
    "train-dpo": (("im_select_cot", "pref_pairs"), ("final",)),
    "evaluate": (
        ("test", "im", "im_select", "im_select_cot", "final"),
        ("evaluation", "bias_report"),
    ),
    "report": (("evaluation",), ("report_txt", "report_json")),
}

STAGE_ORDER: tuple[str, ...] = tuple(STAGES)


def artifact_path(cfg: PipelineConfig, name: str) -> Path:
    return Path(cfg.out_dir) / ARTIFACTS[name]


def _require(cfg: PipelineConfig, names: tuple[str, ...]) -> None:
    for name in names:
        path = artifact_path(cfg, name)
        if not path.exists():
            raise MissingArtifact(name, str(path))


def _prepare_out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    return out


def build_tokenizer(catalog: corpus_mod.Catalog) -> Tokenizer:
    """Input vocabulary from the catalog; output vocabulary is fixed."""
    label_words = tuple(label.value.lower() for label in ORDERED_LABELS)
    input_tokens = (
        (tok.UNK, tok.SEP, tok.RA_MARK, tok.DR_MARK)
        + label_words
        + catalog.vocabulary()
    )
    return Tokenizer(
        input_tokens=input_tokens, output_tokens=tok.output_token_order()
    )


def model_dims(cfg: PipelineConfig, tokenizer: Tokenizer) -> Dims:
    return Dims(
        embed_dim=cfg.embed_dim,
        hidden_dim=cfg.hidden_dim,
        input_vocab=len(tokenizer.input_tokens),
        output_vocab=len(tokenizer.output_tokens),
        max_out_len=cfg.max_out_len,
    )


def _load_tokenizer_dims(cfg: PipelineConfig) -> tuple[Tokenizer, Dims]:
    catalog = corpus_mod.read_catalog(artifact_path(cfg, "catalog"))
    tokenizer = build_tokenizer(catalog)
    return tokenizer, model_dims(cfg, tokenizer)


def _save_ckpt(cfg: PipelineConfig, c: Checkpoint, name: str) -> None:
    c = dataclasses.replace(c, config_hash=cfg.config_hash)
    write_checkpoint(c, artifact_path(cfg, name))


# -- stage implementations ---------------------------------------------------


def _stage_gen_corpus(cfg: PipelineConfig) -> None:
    catalog = corpus_mod.gen_catalog(cfg.n_products, stage_seed(cfg, "catalog"))
    corpus_mod.write_catalog(catalog, artifact_path(cfg, "catalog"))
    train_d = corpus_mod.gen_examples(
        catalog, cfg.train_size, cfg.tier_mix, cfg.noise_rate,
        stage_seed(cfg, "train"),
    )
    train_d = dataclasses.replace(train_d, config_hash=cfg.config_hash)
    write_dataset(train_d, artifact_path(cfg, "train"))
    test_d = corpus_mod.gen_examples(
        catalog, cfg.test_size, cfg.tier_mix, cfg.test_noise_rate,
        stage_seed(cfg, "test"),
    )
    test_d = dataclasses.replace(test_d, config_hash=cfg.config_hash)
    write_dataset(test_d, artifact_path(cfg, "test"))
    log = corpus_mod.gen_session_log(
        test_d, cfg.n_users, stage_seed(cfg, "sessions")
    )
    log = dataclasses.replace(log, config_hash=cfg.config_hash)
    corpus_mod.write_session_log(log, artifact_path(cfg, "sessions"))


def _stage_train_im(cfg: PipelineConfig) -> None:
    tokenizer, dims = _load_tokenizer_dims(cfg)
    train_d = read_dataset(artifact_path(cfg, "train"))
    ckpt = selection_mod.train_initial_model(
        train_d,
        n_random=cfg.im_n,
        seed=stage_seed(cfg, "im"),
        tokenizer=tokenizer,
        dims=dims,
        cfg=TrainConfig(
            lr=cfg.im_lr, epochs=cfg.im_epochs, batch_size=cfg.im_batch,
            seed=stage_seed(cfg, "im"),
        ),
    )
    _save_ckpt(cfg, ckpt, "im")


def _stage_train_ci(cfg: PipelineConfig) -> None:
    tokenizer, dims = _load_tokenizer_dims(cfg)
    train_d = read_dataset(artifact_path(cfg, "train"))
    ckpt = selection_mod.train_challenge_identifier(
        train_d,
        n=cfg.ci_n,
        seed=stage_seed(cfg, "ci"),
        tokenizer=tokenizer,
        dims=dims,
        cfg=TrainConfig(
            lr=cfg.ci_lr, epochs=cfg.ci_epochs, batch_size=cfg.ci_batch,
            seed=stage_seed(cfg, "ci"),
        ),
    )
    _save_ckpt(cfg, ckpt, "ci")


def _stage_train_ms(cfg: PipelineConfig) -> None:
    tokenizer, dims = _load_tokenizer_dims(cfg)
    train_d = read_dataset(artifact_path(cfg, "train"))
    pairs = selection_mod.make_confound_labels(
        train_d, seed=stage_seed(cfg, "ms"), n=cfg.ms_n
    )
    ckpt = selection_mod.train_mislabeled_supervisor(
        pairs,
        seed=stage_seed(cfg, "ms"),
        tokenizer=tokenizer,
        dims=dims,
        cfg=TrainConfig(
            lr=cfg.ms_lr, epochs=cfg.ms_epochs, batch_size=cfg.ms_batch,
            seed=stage_seed(cfg, "ms"),
        ),
    )
    _save_ckpt(cfg, ckpt, "ms")


def _stage_select(cfg: PipelineConfig) -> None:
    train_d = read_dataset(artifact_path(cfg, "train"))
    im = read_checkpoint(artifact_path(cfg, "im"))
    ci = read_checkpoint(artifact_path(cfg, "ci"))
    ms = read_checkpoint(artifact_path(cfg, "ms"))
    s_seed, s_chal, s_sel, report = selection_mod.select_chain(train_d, im, ci, ms)
    for d, name in ((s_seed, "S_seed"), (s_chal, "S_challenging"),
                    (s_sel, "S_selection")):
        d = dataclasses.replace(d, config_hash=cfg.config_hash)
        write_dataset(d, artifact_path(cfg, name))
    selection_mod.write_selection_report(
        report, artifact_path(cfg, "selection_report"),
        seed=cfg.seed, config_hash=cfg.config_hash,
    )
    tuned = selection_mod.finetune_on_selection(
        im,
        s_sel,
        TrainConfig(
            lr=cfg.ft_lr, epochs=cfg.ft_epochs, batch_size=cfg.ft_batch,
            seed=stage_seed(cfg, "ft"),
        ),
    )
    _save_ckpt(cfg, tuned, "im_select")


def _stage_synth_cot(cfg: PipelineConfig) -> None:
    s_sel = read_dataset(artifact_path(cfg, "S_selection"))
    model = read_checkpoint(artifact_path(cfg, "im_select"))
    kinds = cot_mod.parse_kinds(cfg.cot_kinds)
    records = cot_mod.synthesize_records(s_sel, model, kinds)
    cot_mod.write_cot_records(
        records, artifact_path(cfg, "cot_records"),
        seed=cfg.seed, config_hash=cfg.config_hash,
    )


def _stage_train_cot(cfg: PipelineConfig) -> None:
    model = read_checkpoint(artifact_path(cfg, "im_select"))
    records = cot_mod.read_cot_records(artifact_path(cfg, "cot_records"))
    pairs = [
        (
            cot_mod.record_input(model.tokenizer, rec),
            cot_mod.record_target(model.tokenizer, model.dims, rec),
        )
        for rec in records
    ]
    tuned = cot_mod.train_cot(
        model,
        pairs,
        TrainConfig(
            lr=cfg.cot_lr, epochs=cfg.cot_epochs, batch_size=cfg.cot_batch,
            seed=stage_seed(cfg, "cot"),
        ),
    )
    _save_ckpt(cfg, tuned, "im_select_cot")


def _stage_mine_prefs(cfg: PipelineConfig) -> None:
    train_d = read_dataset(artifact_path(cfg, "train"))
    model = read_checkpoint(artifact_path(cfg, "im_select_cot"))
    pairs = dpo_mod.mine_pref_pairs(
        model, train_d, k=cfg.mine_k, search_width=cfg.search_width
    )
    dpo_mod.write_pref_pairs(
        pairs, artifact_path(cfg, "pref_pairs"),
        seed=cfg.seed, config_hash=cfg.config_hash,
    )


def _stage_train_dpo(cfg: PipelineConfig) -> None:
    model = read_checkpoint(artifact_path(cfg, "im_select_cot"))
    pairs = dpo_mod.read_pref_pairs(artifact_path(cfg, "pref_pairs"))
    tuned = dpo_mod.train_dpo(
        model,
        pairs,
        dpo_mod.DpoConfig(
            lr=cfg.dpo_lr, epochs=cfg.dpo_epochs, beta=cfg.dpo_beta,
            batch_size=cfg.dpo_batch, seed=stage_seed(cfg, "dpo"),
        ),
    )
    _save_ckpt(cfg, tuned, "final")


def _stage_evaluate(cfg: PipelineConfig) -> None:
    test_d = read_dataset(artifact_path(cfg, "test"))
    ckpts = [
        read_checkpoint(artifact_path(cfg, name))
        for name in ("im", "im_select", "im_select_cot", "final")
    ]
    report = metrics_mod.stage_report(ckpts, test_d)
    metrics_mod.write_stage_report(
        report, artifact_path(cfg, "evaluation"),
        seed=cfg.seed, config_hash=cfg.config_hash,
    )
    bias = dpo_mod.bias_report(ckpts[2], ckpts[3], test_d, k=cfg.mine_k)
    payload = {"seed": cfg.seed, "config_hash": cfg.config_hash, **bias.to_json()}
    artifact_path(cfg, "bias_report").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )


def _stage_report(cfg: PipelineConfig) -> None:
    payload = json.loads(
        artifact_path(cfg, "evaluation").read_text(encoding="utf-8")
    )
    header = (
        f"{'stage':<16} {'macro_f1':>8} {'wtd_f1':>8} {'acc':>8}"
        f" {'bin_p':>8} {'bin_r':>8} {'bin_f1':>8}"
    )
    lines = [
        f"# stage comparison (config {payload.get('config_hash', '')},"
        f" seed {payload.get('seed', '')})",
        header,
        "-" * len(header),
    ]

    def fmt(v) -> str:
        return "   n/a" if v is None else f"{v:8.2f}"

    for row in payload["rows"]:
        m = row["metrics"]
        b = m["binary"]
        lines.append(
            f"{row['stage_tag']:<16} {m['macro_f1']:8.2f} {m['weighted_f1']:8.2f}"
            f" {m['accuracy']:8.2f} {fmt(b['precision']):>8}"
            f" {fmt(b['recall']):>8} {fmt(b['f1']):>8}"
        )
    artifact_path(cfg, "report_txt").write_text(
        "\n".join(lines) + "\n", encoding="utf-8"
    )
    artifact_path(cfg, "report_json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )


_STAGE_FUNCS = {
    "gen-corpus": _stage_gen_corpus,
    "train-im": _stage_train_im,
    "train-ci": _stage_train_ci,
    "train-ms": _stage_train_ms,
    "select": _stage_select,
    "synth-cot": _stage_synth_cot,
    "train-cot": _stage_train_cot,
    "mine-prefs": _stage_mine_prefs,
    "train-dpo": _stage_train_dpo,
    "evaluate": _stage_evaluate,
    "report": _stage_report,
}


def run_stage(name: str, cfg: PipelineConfig) -> None:
    """Run one stage; raises MissingArtifact if upstream outputs are absent."""
    if name not in STAGES:
        raise ConfigError(f"unknown stage {name!r}")
    cfg.validate()
    requires, _ = STAGES[name]
    _prepare_out(cfg)
    _require(cfg, requires)
    _STAGE_FUNCS[name](cfg)


def stage_complete(name: str, cfg: PipelineConfig) -> bool:
    _, produces = STAGES[name]
    return all(artifact_path(cfg, art).exists() for art in produces)


def run_all(cfg: PipelineConfig, resume: bool = False) -> None:
    """Run every stage in dependency order, stopping at the first failure."""
    cfg.validate()
    for name in STAGE_ORDER:
        if resume and stage_complete(name, cfg):
            continue
        run_stage(name, cfg)
