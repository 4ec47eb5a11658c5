"""Normalized per-patient event streams produced by ingestion.

Times are kept as numbers on a dataset-local clock: MIMIC-like
timestamps become seconds since 1970 (naive), eICU-like offsets stay
minute-based (scaled to seconds for admissions, raw integer minutes on
diagnosis events). Only differences and ordering are ever used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, Iterator, List, Optional

from .codemap import ConceptMap, MedicalCode, map_code

TIMESTAMP_FMT = "%Y-%m-%d %H:%M:%S"
_EPOCH = datetime(1970, 1, 1)
SECONDS_PER_DAY = 86400.0


def parse_timestamp(text: str) -> float:
    """Parse ``YYYY-MM-DD HH:MM:SS`` into seconds on the dataset clock."""
    dt = datetime.strptime(text.strip(), TIMESTAMP_FMT)
    return (dt - _EPOCH).total_seconds()


def format_timestamp(seconds: float) -> str:
    return (_EPOCH + timedelta(seconds=seconds)).strftime(TIMESTAMP_FMT)


@dataclass(frozen=True, slots=True)
class Admission:
    admission_id: str
    admit_time: float
    discharge_time: float


@dataclass(frozen=True, slots=True)
class DiagnosisEvent:
    code: MedicalCode
    admission_id: Optional[str] = None
    time_offset: Optional[int] = None  # minutes on the person clock (eICU-style)
    seq_num: Optional[int] = None

    def __post_init__(self):
        if self.admission_id is None and self.time_offset is None:
            raise ValueError("diagnosis event needs an admission_id or a time_offset")


@dataclass(frozen=True, slots=True)
class DrugEvent:
    code: MedicalCode
    admission_id: str


@dataclass(frozen=True, slots=True)
class ProcedureEvent:
    code: MedicalCode
    admission_id: str


@dataclass(slots=True)
class PatientRecord:
    patient_id: str
    admissions: List[Admission] = field(default_factory=list)
    diagnoses: List[DiagnosisEvent] = field(default_factory=list)
    drugs: List[DrugEvent] = field(default_factory=list)
    procedures: List[ProcedureEvent] = field(default_factory=list)

    def admission_order(self) -> Dict[str, int]:
        return {adm.admission_id: i for i, adm in enumerate(self.admissions)}


@dataclass
class IngestReport:
    rows_total: int = 0
    bad_rows: Dict[str, int] = field(default_factory=dict)

    def record(self, reason: str) -> None:
        self.bad_rows[reason] = self.bad_rows.get(reason, 0) + 1

    @property
    def bad_total(self) -> int:
        return sum(self.bad_rows.values())


class PatientStore:
    """Immutable-after-build map of patient id -> event history.

    Construction sorts everything into canonical order: admissions by
    admit time, diagnoses chronologically (admission order + seq_num for
    admission-grouped data, minute offset for offset-timed data), with
    stable ties preserving input order.
    """

    def __init__(self, records: Dict[str, PatientRecord], report: Optional[IngestReport] = None):
        self._records = {pid: records[pid] for pid in sorted(records)}
        self.report = report or IngestReport()
        for record in self._records.values():
            _finalize_record(record)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, patient_id: str) -> bool:
        return patient_id in self._records

    def __getitem__(self, patient_id: str) -> PatientRecord:
        return self._records[patient_id]

    def __iter__(self) -> Iterator[PatientRecord]:
        return iter(self._records.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PatientStore):
            return NotImplemented
        return self._records == other._records

    def patient_ids(self) -> List[str]:
        return list(self._records)

    def n_events(self) -> int:
        return sum(
            len(r.diagnoses) + len(r.drugs) + len(r.procedures) for r in self._records.values()
        )


def _finalize_record(record: PatientRecord) -> None:
    record.admissions.sort(key=lambda a: a.admit_time)
    order = record.admission_order()

    def dx_key(ev: DiagnosisEvent):
        if ev.time_offset is not None:
            return (0, ev.time_offset, 0)
        seq = ev.seq_num if ev.seq_num is not None else float("inf")
        return (1, order.get(ev.admission_id, len(order)), seq)

    record.diagnoses.sort(key=dx_key)
    record.drugs.sort(key=lambda ev: order.get(ev.admission_id, len(order)))
    record.procedures.sort(key=lambda ev: order.get(ev.admission_id, len(order)))


def apply_concept_maps(store: PatientStore, maps: List[ConceptMap]) -> PatientStore:
    """Rewrite every event code through the first map matching its system.

    Codes with no matching map, or absent from their map, are retained
    unchanged (unmappable codes are kept, not dropped).
    """
    by_source = {}
    for cmap in maps:
        by_source.setdefault(cmap.source_system, cmap)

    def convert(code: MedicalCode) -> MedicalCode:
        cmap = by_source.get(code.system)
        if cmap is None:
            return code
        mapped = map_code(cmap, code)
        return mapped if mapped is not None else code

    records = {}
    for record in store:
        records[record.patient_id] = PatientRecord(
            patient_id=record.patient_id,
            admissions=list(record.admissions),
            diagnoses=[
                DiagnosisEvent(
                    code=convert(ev.code),
                    admission_id=ev.admission_id,
                    time_offset=ev.time_offset,
                    seq_num=ev.seq_num,
                )
                for ev in record.diagnoses
            ],
            drugs=[DrugEvent(code=convert(ev.code), admission_id=ev.admission_id) for ev in record.drugs],
            procedures=[
                ProcedureEvent(code=convert(ev.code), admission_id=ev.admission_id)
                for ev in record.procedures
            ],
        )
    return PatientStore(records, report=store.report)
