"""Declarative INI-style pipeline configuration.

Sections: [dataset], [paths], [maps], [task], [template], [lr],
[runtime], [synth]; a [finetune] section is tolerated for downstream
consumers of the same file. Flags override file values at the CLI.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

from .codemap import CodeSystem
from .cohort import TaskKind, TaskSpec
from .errors import ConfigError, InvalidConfigError
from .lrbaseline import GridSearchSpec
from .promptgen import PromptTemplate, Section

# fixed semantics of [maps] keys: (source system, target system)
MAP_KEYS: Dict[str, Tuple[CodeSystem, CodeSystem]] = {
    "diagnosis_icd10": (CodeSystem.ICD10_CM, CodeSystem.CCS_DX),
    "diagnosis_icd9": (CodeSystem.ICD9_CM, CodeSystem.CCS_DX),
    "drug": (CodeSystem.NDC, CodeSystem.ATC),
    "procedure_icd10": (CodeSystem.ICD10_PROC, CodeSystem.CCS_PROC),
    "procedure_icd9": (CodeSystem.ICD9_PROC, CodeSystem.CCS_PROC),
}

VALID_DATASET_KINDS = ("mimic-like", "eicu-like")


@dataclass
class PipelineConfig:
    dataset_kind: str = "mimic-like"
    tables_dir: Optional[Path] = None
    map_paths: Dict[str, Path] = field(default_factory=dict)
    descriptions_path: Optional[Path] = None
    base_vocab_path: Optional[Path] = None
    out_dir: Optional[Path] = None
    task: Optional[TaskSpec] = None
    template: Optional[PromptTemplate] = None
    grid: GridSearchSpec = field(default_factory=GridSearchSpec)
    seed: int = 7
    threads: int = 0  # 0 = number of cores
    bad_row_tolerance: float = 0.01
    strict_descriptions: bool = False
    synth: Dict[str, str] = field(default_factory=dict)

    def require(self, attr: str, what: str):
        value = getattr(self, attr)
        if value is None:
            raise ConfigError(f"config is missing {what}")
        return value

    def require_path(self, attr: str, what: str) -> Path:
        path = Path(self.require(attr, what))
        if not path.exists():
            raise ConfigError(f"{what} does not exist: {path}")
        return path


def _parse_sections(raw: str) -> Tuple[Section, ...]:
    try:
        return tuple(Section(part.strip().lower()) for part in raw.split(",") if part.strip())
    except ValueError as exc:
        raise InvalidConfigError(f"bad template sections: {raw!r} ({exc})") from None


def _unescape(text: str) -> str:
    return text.replace("\\n", "\n").replace("\\t", "\t")


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    cfg = PipelineConfig()

    if parser.has_section("dataset"):
        kind = parser.get("dataset", "kind", fallback=cfg.dataset_kind).strip()
        if kind not in VALID_DATASET_KINDS:
            raise InvalidConfigError(f"dataset kind must be one of {VALID_DATASET_KINDS}, got {kind!r}")
        cfg.dataset_kind = kind

    if parser.has_section("paths"):
        get = lambda key: parser.get("paths", key, fallback=None)
        if get("tables_dir"):
            cfg.tables_dir = Path(get("tables_dir"))
        if get("descriptions"):
            cfg.descriptions_path = Path(get("descriptions"))
        if get("base_vocab"):
            cfg.base_vocab_path = Path(get("base_vocab"))
        if get("out_dir"):
            cfg.out_dir = Path(get("out_dir"))

    if parser.has_section("maps"):
        for key, value in parser.items("maps"):
            if key not in MAP_KEYS:
                raise InvalidConfigError(
                    f"unknown [maps] key {key!r}; valid keys: {sorted(MAP_KEYS)}"
                )
            cfg.map_paths[key] = Path(value)

    if parser.has_section("task"):
        kind_raw = parser.get("task", "kind", fallback=None)
        if kind_raw is None:
            raise InvalidConfigError("[task] section needs a 'kind'")
        try:
            kind = TaskKind(kind_raw.strip().lower())
        except ValueError:
            raise InvalidConfigError(f"unknown task kind {kind_raw!r}") from None
        target = parser.get("task", "target_ccs", fallback=None)
        window = parser.get("task", "window_days", fallback=None)
        cfg.task = TaskSpec(
            kind=kind,
            target_ccs=target.strip() if target else None,
            window_days=int(window) if window else None,
        )

    if parser.has_section("template"):
        get = lambda key, default: parser.get("template", key, fallback=default)
        preamble = get("preamble", None)
        if preamble is None:
            raise InvalidConfigError("[template] section needs a 'preamble'")
        cfg.template = PromptTemplate(
            preamble=_unescape(preamble),
            history_header=_unescape(get("history_header", "\\nHistory: ")),
            item_separator=_unescape(get("item_separator", "; ")),
            sections=_parse_sections(get("sections", "diagnoses")),
        )

    if parser.has_section("lr"):
        def floats(key, default):
            raw = parser.get("lr", key, fallback=None)
            return default if raw is None else tuple(float(v) for v in raw.split(","))

        def strs(key, default):
            raw = parser.get("lr", key, fallback=None)
            return default if raw is None else tuple(v.strip().lower() for v in raw.split(","))

        def ints(key, default):
            raw = parser.get("lr", key, fallback=None)
            return default if raw is None else tuple(int(v) for v in raw.split(","))

        base = GridSearchSpec()
        try:
            cfg.grid = GridSearchSpec(
                c_values=floats("c_values", base.c_values),
                penalties=strs("penalties", base.penalties),
                solvers=strs("solvers", base.solvers),
                max_iters=ints("max_iters", base.max_iters),
                tol=parser.getfloat("lr", "tol", fallback=base.tol),
            )
        except ValueError as exc:
            raise InvalidConfigError(f"bad [lr] grid value: {exc}") from None

    if parser.has_section("runtime"):
        try:
            cfg.seed = parser.getint("runtime", "seed", fallback=cfg.seed)
            cfg.threads = parser.getint("runtime", "threads", fallback=cfg.threads)
            cfg.bad_row_tolerance = parser.getfloat(
                "runtime", "bad_row_tolerance", fallback=cfg.bad_row_tolerance
            )
            cfg.strict_descriptions = parser.getboolean(
                "runtime", "strict_descriptions", fallback=cfg.strict_descriptions
            )
        except ValueError as exc:
            raise InvalidConfigError(f"bad [runtime] value: {exc}") from None

    if parser.has_section("synth"):
        cfg.synth = dict(parser.items("synth"))

    return cfg
