"""Task definitions, exclusion rules, labeling, stats, and splits.

Labeling rules (shared by both diagnosis tasks, at their respective
granularity): patients with a single visit/diagnosis are excluded, as
are patients carrying the target at the first visit/diagnosis; a
positive example truncates history right before the first target
occurrence; a negative example keeps everything up to (not including)
the last visit/diagnosis, so "a next event exists" holds for both.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .codemap import CodeSystem, ConceptMap, MedicalCode, map_code
from .errors import DataError, EmptyCohortError, InvalidConfigError, UnknownTargetError
from .store import PatientStore, SECONDS_PER_DAY


class TaskKind(Enum):
    NEXT_DIAGNOSIS = "next-diagnosis"
    NEXT_VISIT_DIAGNOSIS = "next-visit"
    READMISSION = "readmission"


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    target_ccs: Optional[str] = None
    window_days: Optional[int] = None

    def __post_init__(self):
        is_dx = self.kind in (TaskKind.NEXT_DIAGNOSIS, TaskKind.NEXT_VISIT_DIAGNOSIS)
        if is_dx and not self.target_ccs:
            raise InvalidConfigError(f"{self.kind.value} task needs target_ccs")
        if not is_dx and self.target_ccs is not None:
            raise InvalidConfigError("readmission task takes no target_ccs")
        if self.kind is TaskKind.READMISSION and self.window_days is None:
            raise InvalidConfigError("readmission task needs window_days")
        if self.kind is not TaskKind.READMISSION and self.window_days is not None:
            raise InvalidConfigError(f"{self.kind.value} task takes no window_days")

    def tag(self) -> str:
        if self.kind is TaskKind.READMISSION:
            return f"readmission-{self.window_days}"
        return f"{self.kind.value}-{self.target_ccs}"

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "target_ccs": self.target_ccs,
                "window_days": self.window_days}

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSpec":
        return cls(kind=TaskKind(obj["kind"]), target_ccs=obj.get("target_ccs"),
                   window_days=obj.get("window_days"))


@dataclass
class LabeledSequence:
    example_id: str
    patient_id: str
    history: List[MedicalCode]
    label: int
    task: TaskSpec
    n_history_visits: int = 0
    split: Optional[Split] = None


MapsLike = Union[ConceptMap, Sequence[ConceptMap]]


def _as_maps(concept_maps: MapsLike) -> List[ConceptMap]:
    if isinstance(concept_maps, ConceptMap):
        return [concept_maps]
    return list(concept_maps)


def _check_target(target: str, maps: List[ConceptMap]) -> None:
    if not any(target in cmap.targets() for cmap in maps):
        raise UnknownTargetError(f"target CCS {target!r} not in any concept map's range")


def _mapper(maps: List[ConceptMap]):
    by_source = {}
    for cmap in maps:
        by_source.setdefault(cmap.source_system, cmap)

    def mapped(code: MedicalCode) -> Optional[MedicalCode]:
        cmap = by_source.get(code.system)
        return map_code(cmap, code) if cmap is not None else None

    return mapped


def build_next_visit_cohort(
    store: PatientStore, target: str, concept_maps: MapsLike
) -> List[LabeledSequence]:
    """Visit-granularity diagnosis task (MIMIC-like stores).

    History codes are mapped to their CCS category; unmappable codes are
    retained as-is (they can never match a CCS target).
    """
    maps = _as_maps(concept_maps)
    _check_target(target, maps)
    mapped = _mapper(maps)
    task = TaskSpec(kind=TaskKind.NEXT_VISIT_DIAGNOSIS, target_ccs=target)
    target_code = MedicalCode(CodeSystem.CCS_DX, target)

    def to_history(code: MedicalCode) -> MedicalCode:
        m = mapped(code)
        return m if m is not None else code

    cohort: List[LabeledSequence] = []
    for record in store:
        by_adm: Dict[str, List[MedicalCode]] = {}
        for ev in record.diagnoses:
            if ev.admission_id is None:
                raise DataError(
                    f"patient {record.patient_id}: diagnosis without admission_id in a "
                    "visit-grouped task"
                )
            by_adm.setdefault(ev.admission_id, []).append(ev.code)
        visits = [by_adm.get(adm.admission_id, []) for adm in record.admissions]
        if len(visits) < 2:
            continue
        if any(mapped(c) == target_code for c in visits[0]):
            continue
        first_hit = None
        for j, visit in enumerate(visits[1:], start=2):
            if any(mapped(c) == target_code for c in visit):
                first_hit = j
                break
        if first_hit is not None:
            label, kept = 1, visits[: first_hit - 1]
        else:
            label, kept = 0, visits[: len(visits) - 1]
        history = [to_history(c) for visit in kept for c in visit]
        if not history:
            continue
        cohort.append(LabeledSequence(
            example_id=f"{task.tag()}:{record.patient_id}",
            patient_id=record.patient_id,
            history=history,
            label=label,
            task=task,
            n_history_visits=len(kept),
        ))
    cohort.sort(key=lambda ex: ex.example_id)
    return cohort


def build_next_diagnosis_cohort(
    store: PatientStore, target: str, concept_maps: MapsLike
) -> List[LabeledSequence]:
    """Diagnosis-granularity task (eICU-like stores); history keeps raw codes."""
    maps = _as_maps(concept_maps)
    _check_target(target, maps)
    mapped = _mapper(maps)
    task = TaskSpec(kind=TaskKind.NEXT_DIAGNOSIS, target_ccs=target)
    target_code = MedicalCode(CodeSystem.CCS_DX, target)

    cohort: List[LabeledSequence] = []
    for record in store:
        codes = [ev.code for ev in record.diagnoses]
        if len(codes) < 2:
            continue
        if mapped(codes[0]) == target_code:
            continue
        first_hit = None
        for j, code in enumerate(codes[1:], start=2):
            if mapped(code) == target_code:
                first_hit = j
                break
        if first_hit is not None:
            label, history_events = 1, record.diagnoses[: first_hit - 1]
        else:
            label, history_events = 0, record.diagnoses[: len(codes) - 1]
        if not history_events:
            continue
        stays = {ev.admission_id for ev in history_events if ev.admission_id is not None}
        cohort.append(LabeledSequence(
            example_id=f"{task.tag()}:{record.patient_id}",
            patient_id=record.patient_id,
            history=[ev.code for ev in history_events],
            label=label,
            task=task,
            n_history_visits=max(len(stays), 1),
        ))
    cohort.sort(key=lambda ex: ex.example_id)
    return cohort


def build_readmission_cohort(store: PatientStore, window_days: int) -> List[LabeledSequence]:
    """One example per admission with a successor; label 1 iff the next
    admission starts within window_days of this discharge (inclusive).

    History is cumulative over visits 1..i: per visit, diagnoses, then
    drugs, then procedures.
    """
    task = TaskSpec(kind=TaskKind.READMISSION, window_days=window_days)
    cohort: List[LabeledSequence] = []
    for record in store:
        if len(record.admissions) < 2:
            continue
        dx_by_adm: Dict[str, List[MedicalCode]] = {}
        for ev in record.diagnoses:
            if ev.admission_id is not None:
                dx_by_adm.setdefault(ev.admission_id, []).append(ev.code)
        drug_by_adm: Dict[str, List[MedicalCode]] = {}
        for ev in record.drugs:
            drug_by_adm.setdefault(ev.admission_id, []).append(ev.code)
        proc_by_adm: Dict[str, List[MedicalCode]] = {}
        for ev in record.procedures:
            proc_by_adm.setdefault(ev.admission_id, []).append(ev.code)

        history: List[MedicalCode] = []
        for i, adm in enumerate(record.admissions[:-1], start=1):
            history = history + (
                dx_by_adm.get(adm.admission_id, [])
                + drug_by_adm.get(adm.admission_id, [])
                + proc_by_adm.get(adm.admission_id, [])
            )
            if not history:
                continue
            nxt = record.admissions[i]
            gap_days = (nxt.admit_time - adm.discharge_time) / SECONDS_PER_DAY
            cohort.append(LabeledSequence(
                example_id=f"{task.tag()}:{record.patient_id}:{i:04d}",
                patient_id=record.patient_id,
                history=list(history),
                label=1 if gap_days <= window_days else 0,
                task=task,
                n_history_visits=i,
            ))
    cohort.sort(key=lambda ex: ex.example_id)
    return cohort


_DIAGNOSIS_SYSTEMS = {CodeSystem.ICD9_CM, CodeSystem.ICD10_CM, CodeSystem.CCS_DX}


def is_diagnosis_code(code: MedicalCode) -> bool:
    return code.system in _DIAGNOSIS_SYSTEMS


@dataclass(frozen=True)
class CohortStats:
    n_patients_initial: int
    n_patients_final: int
    n_examples: int
    n_positive: int
    prevalence: float
    median_visits: float
    iqr_visits: Tuple[float, float]
    median_diagnoses: float
    iqr_diagnoses: Tuple[float, float]

    def render(self) -> str:
        lines = [
            f"# of patients: {self.n_patients_initial}",
            f"Final # of patients: {self.n_patients_final}",
            f"# of examples: {self.n_examples}",
            f"Positive examples: {self.n_positive} (prevalence {self.prevalence:.4f})",
            f"Median # of visits (IQR): {self.median_visits:g} "
            f"({self.iqr_visits[0]:g}-{self.iqr_visits[1]:g})",
            f"Median # of diagnoses (IQR): {self.median_diagnoses:g} "
            f"({self.iqr_diagnoses[0]:g}-{self.iqr_diagnoses[1]:g})",
        ]
        return "\n".join(lines) + "\n"


def cohort_stats(store: PatientStore, cohort: List[LabeledSequence]) -> CohortStats:
    """Table-1-style statistics over the final included examples' histories."""
    if not cohort:
        raise EmptyCohortError("cannot compute statistics of an empty cohort")
    visits = np.array([ex.n_history_visits for ex in cohort], dtype=float)
    n_dx = np.array(
        [sum(1 for c in ex.history if is_diagnosis_code(c)) for ex in cohort], dtype=float
    )
    v_q1, v_med, v_q3 = np.percentile(visits, [25, 50, 75])
    d_q1, d_med, d_q3 = np.percentile(n_dx, [25, 50, 75])
    n_pos = sum(ex.label for ex in cohort)
    return CohortStats(
        n_patients_initial=len(store),
        n_patients_final=len({ex.patient_id for ex in cohort}),
        n_examples=len(cohort),
        n_positive=n_pos,
        prevalence=n_pos / len(cohort),
        median_visits=float(v_med),
        iqr_visits=(float(v_q1), float(v_q3)),
        median_diagnoses=float(d_med),
        iqr_diagnoses=(float(d_q1), float(d_q3)),
    )


def assign_split(patient_id: str, seed: int) -> Split:
    """Deterministic 70/10/20 bucket from a stable 64-bit hash (blake2b)."""
    digest = hashlib.blake2b(f"{seed}:{patient_id}".encode("utf-8"), digest_size=8).digest()
    u = int.from_bytes(digest, "big") / 2.0**64
    if u < 0.70:
        return Split.TRAIN
    if u < 0.80:
        return Split.VAL
    return Split.TEST


def assign_splits(cohort: List[LabeledSequence], seed: int) -> List[LabeledSequence]:
    return [replace(ex, split=assign_split(ex.patient_id, seed)) for ex in cohort]


def dump_cohort(cohort: List[LabeledSequence], path) -> None:
    """Write the one-line-per-record JSON cohort dump (sorted by example_id)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    seen = set()
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for ex in sorted(cohort, key=lambda e: e.example_id):
            if ex.example_id in seen:
                raise DataError(f"duplicate example_id {ex.example_id!r} in cohort")
            seen.add(ex.example_id)
            if ex.split is None:
                raise DataError(f"example {ex.example_id!r} has no split assigned")
            obj = {
                "example_id": ex.example_id,
                "patient_id": ex.patient_id,
                "split": ex.split.value,
                "label": ex.label,
                "task": ex.task.to_json(),
                "history": [{"system": c.system.value, "code": c.code} for c in ex.history],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def load_cohort(path) -> List[LabeledSequence]:
    path = Path(path)
    cohort: List[LabeledSequence] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad JSON record: {exc}") from None
            cohort.append(LabeledSequence(
                example_id=obj["example_id"],
                patient_id=obj["patient_id"],
                history=[
                    MedicalCode(CodeSystem.from_tag(h["system"]), h["code"])
                    for h in obj["history"]
                ],
                label=int(obj["label"]),
                task=TaskSpec.from_json(obj["task"]),
                split=Split(obj["split"]),
            ))
    return cohort
