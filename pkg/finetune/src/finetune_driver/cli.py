"""CLI: reads the pipeline config's [finetune] section and runs fine_tune.

Exit codes: 0 ok, 2 config/usage, 3 data errors.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from .driver import FinetuneConfig, fine_tune
from .errors import CorpusMissingError, DriverError


def config_from_ini(path, overrides=None) -> FinetuneConfig:
    parser = configparser.ConfigParser(interpolation=None)
    if not Path(path).is_file():
        raise DriverError(f"config file not found: {path}")
    parser.read(path, encoding="utf-8")
    if not parser.has_section("finetune"):
        raise DriverError(f"{path}: missing [finetune] section")
    section = dict(parser.items("finetune"))
    section.update(overrides or {})

    def need(key):
        if key not in section:
            raise DriverError(f"[finetune] section needs {key!r}")
        return section[key]

    def opt_path(key):
        return Path(section[key]) if section.get(key) else None

    return FinetuneConfig(
        base_vocab=Path(need("base_vocab")),
        corpus_dir=Path(need("corpus_dir")),
        out_dir=Path(need("out_dir")),
        model=section.get("model", "tiny-local"),
        task=section.get("task", "diagnosis"),
        task_tag=section.get("task_tag", "task"),
        learning_rate=float(section.get("learning_rate", 2e-5)),
        lora_rank=int(section.get("lora_rank", 8)),
        lora_alpha=float(section.get("lora_alpha", 32)),
        lora_dropout=float(section.get("lora_dropout", 0.1)),
        bias=section.get("bias", "none"),
        epochs=int(section["epochs"]) if section.get("epochs") else None,
        quantize_4bit=str(section.get("quantize_4bit", "false")).lower() in ("1", "true", "yes"),
        max_seq_len=int(section.get("max_seq_len", 128)),
        batch_size=int(section.get("batch_size", 8)),
        added_tokens=opt_path("added_tokens"),
        seed=int(section.get("seed", 7)),
        run=int(section.get("run", 1)),
        d_model=int(section.get("d_model", 64)),
        n_heads=int(section.get("n_heads", 4)),
        n_layers=int(section.get("n_layers", 2)),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="finetune-driver",
        description="LoRA fine-tuning: prompt corpus in, prediction CSVs out",
    )
    parser.add_argument("--config", required=True, help="pipeline config with a [finetune] section")
    parser.add_argument("--run", type=int, default=None, help="run index override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--no-added-tokens", action="store_true",
                        help="ablation arm: ignore any configured added-tokens file")
    args = parser.parse_args(argv)

    overrides = {}
    if args.run is not None:
        overrides["run"] = str(args.run)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    try:
        cfg = config_from_ini(args.config, overrides)
        if args.no_added_tokens:
            cfg.added_tokens = None
        result = fine_tune(cfg)
    except CorpusMissingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DriverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    last = result.epochs[-1]
    print(f"finetune: model={result.model_label} "
          f"trainable={result.n_trainable}/{result.n_total} params")
    print(f"finetune: best epoch {result.best_epoch} "
          f"val PR-AUC {result.best_val_pr_auc:.4f}; "
          f"final train accuracy {last.train_accuracy:.3f}")
    for split, path in sorted(result.prediction_files.items()):
        print(f"finetune: {split} predictions -> {path}")
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
