"""Medical code normalization, terminology mapping, and descriptions.

All codes live in one canonical key space: uppercase, no dots, no
surrounding whitespace. That is the convention the single-level CCS
distribution files use, so mapping tables and event codes can share keys.
Mapping tables are plain CSV fixtures (header ``source,target``), never
hard-coded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

from .errors import (
    ConflictingMappingError,
    DataError,
    EmptyCodeError,
    MalformedCodeError,
    MissingColumnError,
    SystemMismatchError,
    UnknownSystemTagError,
)


class CodeSystem(Enum):
    """Closed set of coding systems an event code can belong to."""

    ICD9_CM = "icd9cm"
    ICD10_CM = "icd10cm"
    ICD9_PROC = "icd9proc"
    ICD10_PROC = "icd10proc"
    NDC = "ndc"
    ATC = "atc"
    CCS_DX = "ccsdx"
    CCS_PROC = "ccsproc"

    @classmethod
    def from_tag(cls, tag: str) -> "CodeSystem":
        try:
            return cls(tag.strip().lower())
        except ValueError:
            raise UnknownSystemTagError(f"unknown code system tag: {tag!r}") from None


SystemLike = Union[CodeSystem, str]


def _as_system(system: SystemLike) -> CodeSystem:
    return CodeSystem.from_tag(system) if isinstance(system, str) else system


@dataclass(frozen=True, slots=True)
class MedicalCode:
    system: CodeSystem
    code: str


def normalize_code(raw: str, system: SystemLike) -> MedicalCode:
    """Canonicalize a raw code string: trim, drop dots, uppercase.

    Idempotent by construction. Rejects codes that are empty after
    trimming or contain internal whitespace / control characters.
    """
    system = _as_system(system)
    trimmed = raw.strip()
    if not trimmed:
        raise EmptyCodeError("code is empty after trimming")
    if any(ch.isspace() or ord(ch) < 32 or ord(ch) == 127 for ch in trimmed):
        raise MalformedCodeError(
            f"code contains internal whitespace or control characters: {raw!r}"
        )
    return MedicalCode(system, trimmed.replace(".", "").upper())


@dataclass(frozen=True)
class ConceptMap:
    """Many-to-one mapping between two code systems, immutable after load."""

    source_system: CodeSystem
    target_system: CodeSystem
    entries: dict  # normalized source code -> normalized target code

    def __len__(self) -> int:
        return len(self.entries)

    def targets(self) -> set:
        return set(self.entries.values())


def load_concept_map(path, source: SystemLike, target: SystemLike) -> ConceptMap:
    """Load a two-column CSV mapping file (header ``source,target``).

    Identical duplicate rows collapse to one entry; a source code mapped
    to two different targets raises ConflictingMappingError.
    """
    source = _as_system(source)
    target = _as_system(target)
    path = Path(path)
    entries: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["source", "target"]:
            raise MissingColumnError(f"{path}: expected header 'source,target'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise MalformedCodeError(f"{path}:{lineno}: expected two columns")
            src = normalize_code(row[0], source).code
            dst = normalize_code(row[1], target).code
            existing = entries.get(src)
            if existing is not None and existing != dst:
                raise ConflictingMappingError(
                    f"{path}:{lineno}: {src!r} maps to both {existing!r} and {dst!r}"
                )
            entries[src] = dst
    return ConceptMap(source, target, entries)


def save_concept_map(cmap: ConceptMap, path) -> None:
    """Write a ConceptMap back into the two-column CSV contract."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source", "target"])
        for src in sorted(cmap.entries):
            writer.writerow([src, cmap.entries[src]])


def map_code(cmap: ConceptMap, code: MedicalCode) -> Optional[MedicalCode]:
    """Map a code through a ConceptMap; None means not mapped."""
    if code.system is not cmap.source_system:
        raise SystemMismatchError(
            f"code system {code.system.value} does not match map source "
            f"{cmap.source_system.value}"
        )
    dst = cmap.entries.get(code.code)
    if dst is None:
        return None
    return MedicalCode(cmap.target_system, dst)


@dataclass(frozen=True)
class DescriptionTable:
    """Free-text descriptions keyed by MedicalCode, immutable after load."""

    entries: dict  # MedicalCode -> description

    def __len__(self) -> int:
        return len(self.entries)


def load_descriptions(path) -> DescriptionTable:
    """Load a description CSV (header ``system,code,description``)."""
    path = Path(path)
    entries: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["system", "code", "description"]
        if header is None or [h.strip().lower() for h in header[:3]] != expected:
            raise MissingColumnError(f"{path}: expected header 'system,code,description'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 3:
                raise MalformedCodeError(f"{path}:{lineno}: expected three columns")
            code = normalize_code(row[1], CodeSystem.from_tag(row[0]))
            desc = row[2].strip()
            if not desc:
                raise DataError(f"{path}:{lineno}: empty description")
            existing = entries.get(code)
            if existing is not None and existing != desc:
                raise ConflictingMappingError(
                    f"{path}:{lineno}: two descriptions for {code.code!r}"
                )
            entries[code] = desc
    return DescriptionTable(entries)


def describe(table: DescriptionTable, code: MedicalCode) -> Optional[str]:
    """Exact stored description for a code; None when unknown."""
    return table.entries.get(code)
