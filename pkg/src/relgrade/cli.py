"""Command-line interface: one subcommand per pipeline stage.

Exit codes: 0 success, 1 configuration/validation error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from relgrade.errors import ConfigError, MissingArtifact
from relgrade.pipeline import (
    ARTIFACTS,
    PipelineConfig,
    STAGE_ORDER,
    run_all,
    run_stage,
)
from relgrade.rulejudge import rule_text


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relgrade",
        description="Seeded relevance-grading pipeline: corpus generation, "
        "selective fine-tuning, trace tuning, preference de-biasing, and "
        "evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=str, default=None,
                       help="path to a key = value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--out", type=str, default=None,
                       help="override the run directory")

    for name in STAGE_ORDER:
        p = sub.add_parser(name, help=f"run the {name} stage")
        add_common(p)
        if name == "synth-cot":
            p.add_argument("--kinds", type=str, default=None,
                           help="trace kinds to synthesize, e.g. ee,ra,dr")
        if name == "mine-prefs":
            p.add_argument("--k", type=int, default=None,
                           help="eligible beam positions 2..k")
        if name == "train-dpo":
            p.add_argument("--beta", type=float, default=None,
                           help="margin scale inside the sigmoid")
            p.add_argument("--epochs", type=int, default=None)
        if name == "evaluate":
            p.add_argument("--test", type=str, default=None,
                           help="test dataset file (defaults to the run's)")
            p.add_argument("--checkpoints", type=str, default=None,
                           help="directory holding the stage checkpoints")

    p = sub.add_parser("run-all", help="run every stage in order")
    add_common(p)
    p.add_argument("--resume", action="store_true",
                   help="skip stages whose artifacts already exist")

    sub.add_parser("rule", help="print the relevance rule text")
    return parser


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = (
        PipelineConfig.load(args.config)
        if getattr(args, "config", None)
        else PipelineConfig()
    )
    overrides: dict[str, object] = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "kinds", None) is not None:
        overrides["cot_kinds"] = args.kinds
    if getattr(args, "k", None) is not None:
        overrides["mine_k"] = args.k
        overrides["search_width"] = max(cfg.search_width, args.k + 1)
    if getattr(args, "beta", None) is not None:
        overrides["dpo_beta"] = args.beta
    if getattr(args, "epochs", None) is not None:
        overrides["dpo_epochs"] = args.epochs
    if overrides:
        cfg = cfg.with_overrides(**overrides)
    cfg.validate()
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "rule":
        print(rule_text(), end="")
        return 0

    try:
        cfg = _resolve_config(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "run-all":
            run_all(cfg, resume=args.resume)
        elif args.command == "evaluate" and (
            getattr(args, "test", None) or getattr(args, "checkpoints", None)
        ):
            _evaluate_with_paths(cfg, args)
        else:
            run_stage(args.command, cfg)
    except MissingArtifact as exc:
        print(f"error in stage {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - stage failures map to exit 2
        print(f"error in stage {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


def _evaluate_with_paths(cfg: PipelineConfig, args: argparse.Namespace) -> None:
    """Evaluate a test file against checkpoints outside the run layout."""
    import json

    from relgrade import metrics as metrics_mod
    from relgrade.model import read_checkpoint
    from relgrade.schema import read_dataset

    test_path = (
        Path(args.test)
        if args.test
        else Path(cfg.out_dir) / ARTIFACTS["test"]
    )
    ckpt_dir = Path(args.checkpoints) if args.checkpoints else Path(cfg.out_dir)
    if not test_path.exists():
        raise MissingArtifact("test", str(test_path))
    ckpt_paths = sorted(ckpt_dir.glob("*.ckpt"))
    if not ckpt_paths:
        raise MissingArtifact("checkpoints", str(ckpt_dir))
    order = {"im": 0, "im_select": 1, "im_select_cot": 2, "final": 3}
    ckpts = [read_checkpoint(p) for p in ckpt_paths]
    ckpts.sort(key=lambda c: (order.get(c.stage_tag, 99), c.stage_tag))
    test_d = read_dataset(test_path)
    report = metrics_mod.stage_report(ckpts, test_d)
    print(metrics_mod.render_table(report))
    out = Path(cfg.out_dir) / ARTIFACTS["evaluation"]
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"seed": cfg.seed, "config_hash": cfg.config_hash, **report.to_json()}
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    raise SystemExit(main())
