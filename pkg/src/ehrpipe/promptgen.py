"""Prompt rendering, corpus emission, and tokenizer vocabulary extensions.

The default prompt wording is pinned here (and overridable from the
config's [template] section); placeholders are ``{target_description}``,
``{unit}`` and ``{window_days}``, resolved from the example's task.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .codemap import CodeSystem, DescriptionTable, MedicalCode, describe
from .cohort import LabeledSequence, Split, TaskKind, TaskSpec
from .errors import (
    ConfigError,
    DataError,
    DuplicateExampleIdError,
    EmptyVocabFileError,
    MissingDescriptionError,
)


class Section(Enum):
    DIAGNOSES = "diagnoses"
    DRUGS = "drugs"
    PROCEDURES = "procedures"


_SECTION_OF_SYSTEM = {
    CodeSystem.NDC: Section.DRUGS,
    CodeSystem.ATC: Section.DRUGS,
    CodeSystem.ICD9_PROC: Section.PROCEDURES,
    CodeSystem.ICD10_PROC: Section.PROCEDURES,
    CodeSystem.CCS_PROC: Section.PROCEDURES,
}

_SECTION_LABEL = {
    Section.DIAGNOSES: "Diagnoses: ",
    Section.DRUGS: "Drugs: ",
    Section.PROCEDURES: "Procedures: ",
}


def section_of(code: MedicalCode) -> Section:
    return _SECTION_OF_SYSTEM.get(code.system, Section.DIAGNOSES)


@dataclass(frozen=True)
class PromptTemplate:
    preamble: str
    history_header: str = "\nHistory: "
    item_separator: str = "; "
    sections: Tuple[Section, ...] = (Section.DIAGNOSES,)

    def __post_init__(self):
        if not self.preamble:
            raise ConfigError("template preamble must be non-empty")
        if not self.sections:
            raise ConfigError("template needs at least one section")


DIAGNOSIS_PREAMBLE = (
    "You are given a patient's diagnosis history in chronological order. "
    "Predict whether the next {unit} includes {target_description}. "
    "Answer 1 for yes, 0 for no."
)

READMISSION_PREAMBLE = (
    "You are given a patient's medical history in chronological order: "
    "diagnoses, drugs, and procedures. Predict whether the patient will be "
    "readmitted to hospital within {window_days} days of discharge. "
    "Answer 1 for yes, 0 for no."
)


def default_template(task: TaskSpec) -> PromptTemplate:
    if task.kind is TaskKind.READMISSION:
        return PromptTemplate(
            preamble=READMISSION_PREAMBLE,
            sections=(Section.DIAGNOSES, Section.DRUGS, Section.PROCEDURES),
        )
    return PromptTemplate(preamble=DIAGNOSIS_PREAMBLE)


@dataclass(frozen=True)
class PromptExample:
    example_id: str
    text: str
    label: int
    split: Optional[Split]


def _placeholder_values(task: TaskSpec, descriptions: DescriptionTable, strict: bool) -> Dict[str, str]:
    values: Dict[str, str] = {}
    if task.kind is TaskKind.READMISSION:
        values["window_days"] = str(task.window_days)
    else:
        values["unit"] = "admission" if task.kind is TaskKind.NEXT_VISIT_DIAGNOSIS else "diagnosis"
        target_code = MedicalCode(CodeSystem.CCS_DX, task.target_ccs)
        desc = describe(descriptions, target_code)
        if desc is None:
            if strict:
                raise MissingDescriptionError(f"no description for target CCS {task.target_ccs!r}")
            desc = task.target_ccs
        values["target_description"] = desc
    return values


def _resolve(template_text: str, values: Dict[str, str]) -> str:
    out = []
    for literal, name, spec, _conv in string.Formatter().parse(template_text):
        out.append(literal)
        if name is None:
            continue
        if name not in values or spec:
            raise ConfigError(f"unresolvable placeholder {{{name}}} in prompt template")
        out.append(values[name])
    return "".join(out)


def _describe_item(code: MedicalCode, descriptions: DescriptionTable, strict: bool) -> str:
    desc = describe(descriptions, code)
    if desc is not None:
        return desc
    if strict:
        raise MissingDescriptionError(f"no description for {code.system.value} {code.code}")
    return code.code


def render_prompt(
    template: PromptTemplate,
    seq: LabeledSequence,
    descriptions: DescriptionTable,
    strict: bool = False,
) -> PromptExample:
    """Deterministic render: preamble, history header, then the selected
    sections in template order with items joined by the separator."""
    values = _placeholder_values(seq.task, descriptions, strict)
    parts = [_resolve(template.preamble, values), template.history_header]
    rendered_sections = []
    for section in template.sections:
        items = [c for c in seq.history if section_of(c) is section]
        body = template.item_separator.join(
            _describe_item(c, descriptions, strict) for c in items
        )
        if len(template.sections) == 1:
            rendered_sections.append(body)
        else:
            rendered_sections.append(_SECTION_LABEL[section] + body)
    parts.append("\n".join(rendered_sections))
    return PromptExample(
        example_id=seq.example_id,
        text="".join(parts),
        label=seq.label,
        split=seq.split,
    )


def emit_corpus(
    cohort: Sequence[LabeledSequence],
    template: PromptTemplate,
    descriptions: DescriptionTable,
    out_dir,
    strict: bool = False,
) -> Dict[Split, Path]:
    """Write train/val/test JSONL corpora (fields example_id, text, label)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seen: Set[str] = set()
    by_split: Dict[Split, List[PromptExample]] = {s: [] for s in Split}
    for seq in cohort:
        if seq.example_id in seen:
            raise DuplicateExampleIdError(f"duplicate example_id {seq.example_id!r}")
        seen.add(seq.example_id)
        if seq.split is None:
            raise DataError(f"example {seq.example_id!r} carries no split")
        by_split[seq.split].append(render_prompt(template, seq, descriptions, strict))

    paths: Dict[Split, Path] = {}
    for split, examples in by_split.items():
        path = out_dir / f"{split.value}.jsonl"
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for ex in sorted(examples, key=lambda e: e.example_id):
                fh.write(json.dumps(
                    {"example_id": ex.example_id, "text": ex.text, "label": ex.label},
                    separators=(",", ":"),
                ) + "\n")
        paths[split] = path
    return paths


@dataclass(frozen=True)
class VocabExtension:
    added_tokens: Tuple[str, ...]


def load_vocab(path) -> Set[str]:
    """One token per line; an empty vocabulary file is an error."""
    path = Path(path)
    tokens = {line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()}
    if not tokens:
        raise EmptyVocabFileError(f"{path}: base vocabulary file holds no tokens")
    return tokens


def write_vocab(tokens: Iterable[str], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(t + "\n" for t in tokens), encoding="utf-8")


def compute_vocab_extension(
    descriptions: Iterable[str], base_vocab: Set[str]
) -> VocabExtension:
    """Lowercased whitespace-split words of the descriptions, minus the
    base vocabulary, sorted and deduplicated."""
    words = {w for text in descriptions for w in text.lower().split()}
    return VocabExtension(added_tokens=tuple(sorted(words - set(base_vocab))))


def corpus_description_strings(
    cohort: Sequence[LabeledSequence], descriptions: DescriptionTable
) -> List[str]:
    """Descriptions of every diagnosis-section history code plus targets,
    the input to the vocabulary extension."""
    out: Set[str] = set()
    for seq in cohort:
        for code in seq.history:
            if section_of(code) is Section.DIAGNOSES:
                desc = describe(descriptions, code)
                if desc is not None:
                    out.add(desc)
        if seq.task.target_ccs is not None:
            desc = describe(descriptions, MedicalCode(CodeSystem.CCS_DX, seq.task.target_ccs))
            if desc is not None:
                out.add(desc)
    return sorted(out)
