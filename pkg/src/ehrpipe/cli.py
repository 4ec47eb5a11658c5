"""Pipeline CLI: synth, cohort, corpus, train-lr, eval, report.

Exit codes: 0 ok, 2 config/usage, 3 data/validation, 4 internal.
Every output directory gets a deterministic manifest.json; all
randomness funnels through the single configured seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Dict, List

from . import __version__
from .codemap import load_concept_map, load_descriptions
from .cohort import (
    TaskKind,
    assign_splits,
    build_next_diagnosis_cohort,
    build_next_visit_cohort,
    build_readmission_cohort,
    cohort_stats,
    dump_cohort,
    load_cohort,
    Split,
)
from .config import MAP_KEYS, PipelineConfig, load_config
from .errors import ConfigError, DataError, PipelineError
from .lrbaseline import (
    featurize,
    grid_search,
    predict_proba,
    save_feature_space,
    save_model,
)
from .metrics import (
    PredictionSet,
    ReportRow,
    compare_report,
    load_prediction_file,
    mean_ci,
    parse_prediction_filename,
    pr_auc,
    roc_auc,
    single_run_summary,
    write_prediction_file,
)
from .promptgen import (
    compute_vocab_extension,
    corpus_description_strings,
    default_template,
    emit_corpus,
    load_vocab,
    write_vocab,
)
from .readers import read_eicu_tables, read_mimic_tables
from .store import apply_concept_maps
from .synth import SynthConfig, generate_synthetic
from .util import write_manifest


def _load_cfg(args) -> PipelineConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "out", None) is not None:
        cfg.out_dir = Path(args.out)
    return cfg


def _threads(cfg: PipelineConfig) -> int:
    return cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)


def _load_maps(cfg: PipelineConfig, keys: List[str]):
    maps = []
    for key in keys:
        path = cfg.map_paths.get(key)
        if path is None:
            continue
        if not path.is_file():
            raise ConfigError(f"[maps] {key} does not exist: {path}")
        source, target = MAP_KEYS[key]
        maps.append(load_concept_map(path, source, target))
    return maps


def _read_store(cfg: PipelineConfig):
    tables_dir = cfg.require_path("tables_dir", "[paths] tables_dir")
    if cfg.dataset_kind == "mimic-like":
        return read_mimic_tables(tables_dir, bad_row_tolerance=cfg.bad_row_tolerance)
    return read_eicu_tables(tables_dir, bad_row_tolerance=cfg.bad_row_tolerance)


def cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(args.out) if args.out else cfg.require("out_dir", "an output directory (--out)")
    overrides = dict(cfg.synth)
    if args.n is not None:
        overrides["n_patients"] = str(args.n)
    if args.effect is not None:
        overrides["effect"] = str(args.effect)
    if args.base_rate is not None:
        overrides["base_rate"] = str(args.base_rate)
    if "n_patients" not in overrides:
        raise ConfigError("synth needs --n or a [synth] n_patients setting")

    kwargs = {}
    synth_fields = {f.name: f.type for f in SynthConfig.__dataclass_fields__.values()}
    for key, value in overrides.items():
        if key not in synth_fields:
            raise ConfigError(f"unknown synth option {key!r}")
        current = getattr(SynthConfig, key, None)
        if key in ("n_patients",):
            kwargs[key] = int(value)
        elif isinstance(current, bool):
            kwargs[key] = value.lower() in ("1", "true", "yes")
        elif isinstance(current, int) and not isinstance(current, bool):
            kwargs[key] = int(value)
        elif isinstance(current, float):
            kwargs[key] = float(value)
        else:
            kwargs[key] = value
    synth_cfg = SynthConfig(**kwargs)

    result = generate_synthetic(synth_cfg, cfg.seed, out_dir)
    write_manifest(
        out_dir, "synth", cfg.seed,
        params={"n_patients": synth_cfg.n_patients, "effect": synth_cfg.effect,
                "base_rate": synth_cfg.base_rate, "target_ccs": synth_cfg.target_ccs},
    )
    print(f"synth: wrote {len(result.files)} files under {out_dir}")
    print(f"synth: {synth_cfg.n_patients} patients, "
          f"visit-task prevalence {result.mimic_prevalence:.4f}, "
          f"diagnosis-task prevalence {result.eicu_prevalence:.4f}")
    return 0


def _build_cohort(cfg: PipelineConfig, store):
    task = cfg.require("task", "a [task] section")
    if task.kind is TaskKind.READMISSION:
        maps = _load_maps(cfg, list(MAP_KEYS))
        if maps:
            store = apply_concept_maps(store, maps)
        return store, build_readmission_cohort(store, task.window_days)
    dx_keys = ["diagnosis_icd10", "diagnosis_icd9"]
    maps = _load_maps(cfg, dx_keys)
    if not maps:
        raise ConfigError("diagnosis tasks need a [maps] diagnosis_icd10 or diagnosis_icd9 entry")
    if task.kind is TaskKind.NEXT_VISIT_DIAGNOSIS:
        if cfg.dataset_kind != "mimic-like":
            raise ConfigError("next-visit task needs a mimic-like (admission-grouped) dataset")
        return store, build_next_visit_cohort(store, task.target_ccs, maps)
    if cfg.dataset_kind != "eicu-like":
        raise ConfigError("next-diagnosis task needs an eicu-like (diagnosis-timed) dataset")
    return store, build_next_diagnosis_cohort(store, task.target_ccs, maps)


def cmd_cohort(args) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(cfg.require("out_dir", "an output directory (--out)"))
    store = _read_store(cfg)
    store, cohort = _build_cohort(cfg, store)
    cohort = assign_splits(cohort, cfg.seed)
    stats = cohort_stats(store, cohort)

    out_dir.mkdir(parents=True, exist_ok=True)
    dump_cohort(cohort, out_dir / "cohort.jsonl")
    (out_dir / "stats.txt").write_text(stats.render(), encoding="utf-8")
    inputs = {"tables_dir": cfg.tables_dir}
    inputs.update({f"map:{k}": p for k, p in cfg.map_paths.items()})
    write_manifest(out_dir, "cohort", cfg.seed, inputs=inputs,
                   params={"task": cfg.task.to_json(), "dataset_kind": cfg.dataset_kind})
    if store.report.bad_rows:
        print(f"cohort: tolerated malformed rows: {store.report.bad_rows}", file=sys.stderr)
    print(stats.render(), end="")
    print(f"cohort: wrote {len(cohort)} examples to {out_dir / 'cohort.jsonl'}")
    return 0


def cmd_corpus(args) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(cfg.require("out_dir", "an output directory (--out)"))
    cohort_path = Path(args.cohort) if args.cohort else out_dir / "cohort.jsonl"
    if not cohort_path.is_file():
        raise ConfigError(f"cohort dump not found: {cohort_path}")
    descriptions = load_descriptions(cfg.require_path("descriptions_path", "[paths] descriptions"))
    cohort = load_cohort(cohort_path)
    if not cohort:
        raise DataError(f"{cohort_path}: empty cohort")
    template = cfg.template or default_template(cohort[0].task)
    paths = emit_corpus(cohort, template, descriptions, out_dir,
                        strict=cfg.strict_descriptions)
    counts = {split.value: sum(1 for ex in cohort if ex.split is split) for split in Split}

    params = {"strict_descriptions": cfg.strict_descriptions, "counts": counts}
    if args.vocab_ext:
        base_vocab = load_vocab(cfg.require_path("base_vocab_path", "[paths] base_vocab"))
        extension = compute_vocab_extension(
            corpus_description_strings(cohort, descriptions), base_vocab
        )
        write_vocab(extension.added_tokens, out_dir / "added_tokens.txt")
        params["added_tokens"] = len(extension.added_tokens)
        print(f"corpus: wrote {len(extension.added_tokens)} added tokens")
    write_manifest(out_dir, "corpus", cfg.seed,
                   inputs={"cohort": cohort_path}, params=params)
    for split, path in sorted(paths.items(), key=lambda kv: kv[0].value):
        print(f"corpus: {split.value}: {counts[split.value]} examples -> {path}")
    return 0


def cmd_train_lr(args) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(cfg.require("out_dir", "an output directory (--out)"))
    cohort_path = Path(args.cohort) if args.cohort else out_dir / "cohort.jsonl"
    if not cohort_path.is_file():
        raise ConfigError(f"cohort dump not found: {cohort_path}")
    cohort = load_cohort(cohort_path)
    by_split = {split: [ex for ex in cohort if ex.split is split] for split in Split}
    for split in Split:
        if not by_split[split]:
            raise DataError(f"{cohort_path}: {split.value} split is empty")

    train_design, space = featurize(by_split[Split.TRAIN])
    val_design, _ = featurize(by_split[Split.VAL], space)
    test_design, _ = featurize(by_split[Split.TEST], space)

    model, cells = grid_search(cfg.grid, train_design, val_design, threads=_threads(cfg))

    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, out_dir / "model.txt")
    save_feature_space(space, out_dir / "features.csv")
    with (out_dir / "grid_report.csv").open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("penalty,C,solver,max_iter,val_pr_auc,val_roc_auc,objective,converged,"
                 "selected,error\n")
        for cell in cells:
            fh.write(",".join([
                cell.penalty, repr(cell.C), cell.solver, str(cell.max_iter),
                "" if cell.val_pr_auc is None else repr(cell.val_pr_auc),
                "" if cell.val_roc_auc is None else repr(cell.val_roc_auc),
                "" if cell.objective is None else repr(cell.objective),
                str(int(cell.converged)),
                str(int(cell.selected)),
                cell.error or "",
            ]) + "\n")

    task_tag = cohort[0].task.tag()
    for split_name, design in (("val", val_design), ("test", test_design)):
        scores = predict_proba(model, design)
        preds = PredictionSet.from_arrays(
            design.example_ids, scores, design.labels,
            model="lr", task=task_tag, run=args.run,
        )
        write_prediction_file(
            preds, out_dir / "predictions" / split_name / f"lr__{task_tag}__run{args.run}.csv"
        )

    write_manifest(out_dir, "train-lr", cfg.seed, inputs={"cohort": cohort_path},
                   params={"run": args.run, "grid_cells": len(cells),
                           "best": {"penalty": model.penalty, "C": model.C,
                                    "converged": model.converged}})
    best = next(c for c in cells if c.selected)
    if not model.converged:
        print("train-lr: warning: selected cell did not converge within max_iter",
              file=sys.stderr)
    print(f"train-lr: grid of {len(cells)} cells; best penalty={best.penalty} "
          f"C={best.C:g} solver={best.solver} max_iter={best.max_iter} "
          f"val PR-AUC={best.val_pr_auc:.4f}")
    print(f"train-lr: predictions under {out_dir / 'predictions'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(args.out) if args.out else None
    preds = [load_prediction_file(path) for path in args.files]
    tags = {(p.model, p.task) for p in preds}
    if len(tags) > 1:
        raise ConfigError(f"eval expects files from one (model, task); got {sorted(tags)}")
    model, task = next(iter(tags))

    pr_values = [pr_auc(p) for p in preds]
    roc_values = [roc_auc(p) for p in preds]
    if len(preds) < 2:
        print("eval: warning: single run, confidence interval omitted", file=sys.stderr)
    lines = [f"model={model or '?'} task={task or '?'} runs={len(preds)}"]
    for name, values in (("PR-AUC", pr_values), ("ROC-AUC", roc_values)):
        if len(values) >= 2:
            summary = mean_ci(values, metric=name)
            lines.append(
                f"{name}: {100 * summary.mean:.3f} ± {100 * summary.ci_half_width:.3f}"
            )
        else:
            lines.append(f"{name}: {100 * values[0]:.3f}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "eval.txt").write_text(text, encoding="utf-8")
        with (out_dir / "runs.csv").open("w", encoding="utf-8", newline="\n") as fh:
            fh.write("model,task,run,pr_auc,roc_auc\n")
            for p, pr_v, roc_v in zip(preds, pr_values, roc_values):
                fh.write(f"{p.model},{p.task},{p.run},{pr_v!r},{roc_v!r}\n")
        write_manifest(out_dir, "eval", cfg.seed,
                       inputs={Path(f).name: Path(f) for f in args.files})
    return 0


def cmd_report(args) -> int:
    cfg = _load_cfg(args)
    pred_dir = Path(args.pred_dir)
    if not pred_dir.is_dir():
        raise ConfigError(f"prediction directory not found: {pred_dir}")
    groups: Dict[tuple, List] = {}
    for path in sorted(pred_dir.glob("*.csv")):
        try:
            parse_prediction_filename(path.name)
        except PipelineError:
            continue
        pred = load_prediction_file(path)
        groups.setdefault((pred.task, pred.model), []).append(pred)
    if not groups:
        raise DataError(f"no prediction files matching '<model>__<task>__run<k>.csv' in {pred_dir}")

    rows = []
    for (task, model), preds in sorted(groups.items()):
        pr_values = [pr_auc(p) for p in preds]
        roc_values = [roc_auc(p) for p in preds]
        if len(preds) >= 2:
            pr_summary = mean_ci(pr_values, metric="pr_auc")
            roc_summary = mean_ci(roc_values, metric="roc_auc")
        else:
            print(f"report: warning: single run for {model}/{task}, CI omitted",
                  file=sys.stderr)
            pr_summary = single_run_summary(pr_values[0], metric="pr_auc")
            roc_summary = single_run_summary(roc_values[0], metric="roc_auc")
        rows.append(ReportRow(task=task, model=model, pr=pr_summary, roc=roc_summary))

    text, csv_text = compare_report(rows)
    print(text, end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(text, encoding="utf-8")
        (out_dir / "report.csv").write_text(csv_text, encoding="utf-8")
        write_manifest(out_dir, "report", cfg.seed,
                       inputs={"pred_dir": pred_dir})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehrpipe",
        description="EHR dumps to labeled prediction corpora, LR baseline, and "
                    "PR-AUC/ROC-AUC reports",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config file (INI)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker pool size (default: number of cores)")
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset (both schemas)")
    common(p)
    p.add_argument("--n", type=int, default=None, help="number of patients")
    p.add_argument("--effect", type=float, default=None,
                   help="planted log-odds effect per risk code")
    p.add_argument("--base-rate", dest="base_rate", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cohort", help="build the labeled cohort and Table-1-style stats")
    common(p)
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("corpus", help="emit train/val/test prompt corpora")
    common(p)
    p.add_argument("--cohort", default=None, help="cohort.jsonl path (default: <out>/cohort.jsonl)")
    p.add_argument("--vocab-ext", action="store_true",
                   help="also compute the tokenizer vocabulary extension")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("train-lr", help="grid-search the logistic-regression baseline")
    common(p)
    p.add_argument("--cohort", default=None)
    p.add_argument("--run", type=int, default=1, help="run index for prediction file names")
    p.set_defaults(func=cmd_train_lr)

    p = sub.add_parser("eval", help="score prediction files for one model/task")
    common(p)
    p.add_argument("files", nargs="+", help="prediction CSVs (<model>__<task>__run<k>.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render the cross-model comparison table")
    common(p)
    p.add_argument("--pred-dir", required=True, help="directory of prediction CSVs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
