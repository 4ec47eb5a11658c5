"""Streaming readers for MIMIC-like and eICU-like table dumps.

Rows are consumed one at a time through the csv module, so peak memory
is the output store plus one row. Malformed rows are recorded per
reason and tolerated up to ``bad_row_tolerance`` of all rows seen, then
the whole read aborts.
"""

from __future__ import annotations

import csv
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterator, Tuple

from .codemap import CodeSystem, normalize_code

# raw code strings repeat heavily in real dumps; caching also makes the
# resulting MedicalCode instances shared across events
_normalize = lru_cache(maxsize=1 << 16)(normalize_code)
from .errors import (
    EmptyCodeError,
    MalformedCodeError,
    MissingColumnError,
    MissingTableError,
    TooManyBadRowsError,
)
from .store import (
    Admission,
    DiagnosisEvent,
    DrugEvent,
    IngestReport,
    PatientRecord,
    PatientStore,
    ProcedureEvent,
    parse_timestamp,
)

DEFAULT_BAD_ROW_TOLERANCE = 0.01
_CHECK_EVERY = 10000

MIMIC_TABLES = {
    "admissions.csv": ("subject_id", "hadm_id", "admittime", "dischtime"),
    "diagnoses_icd.csv": ("subject_id", "hadm_id", "seq_num", "icd_code", "icd_version"),
    "procedures_icd.csv": ("subject_id", "hadm_id", "seq_num", "icd_code", "icd_version"),
    "prescriptions.csv": ("subject_id", "hadm_id", "drug_code"),
}

EICU_TABLES = {
    "patient.csv": (
        "uniquepid",
        "patientunitstayid",
        "hospitaladmitoffset",
        "hospitaldischargeoffset",
    ),
    "diagnosis.csv": ("patientunitstayid", "diagnosisoffset", "icd9code"),
}


def _iter_table(
    dir_path: Path, name: str, columns: Tuple[str, ...]
) -> Iterator[Tuple[int, dict]]:
    path = dir_path / name
    if not path.is_file():
        raise MissingTableError(f"missing table: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


class _RowBudget:
    """Tracks malformed-row counts against the configured tolerance."""

    def __init__(self, tolerance: float):
        self.tolerance = tolerance
        self.report = IngestReport()

    def saw_row(self) -> None:
        self.report.rows_total += 1
        if self.report.rows_total % _CHECK_EVERY == 0:
            self.check()

    def bad(self, reason: str) -> None:
        self.report.record(reason)

    def check(self) -> None:
        total = self.report.rows_total
        if total >= 100 and self.report.bad_total > self.tolerance * total:
            raise TooManyBadRowsError(
                f"{self.report.bad_total} malformed rows out of {total} exceeds "
                f"tolerance {self.tolerance:g}: {self.report.bad_rows}",
                bad_rows=self.report.bad_rows,
            )


def read_mimic_tables(
    dir_path, bad_row_tolerance: float = DEFAULT_BAD_ROW_TOLERANCE
) -> PatientStore:
    """Read a MIMIC-like dump (admissions, diagnoses, procedures, prescriptions)."""
    dir_path = Path(dir_path)
    budget = _RowBudget(bad_row_tolerance)
    records: Dict[str, PatientRecord] = {}
    admission_owner: Dict[str, str] = {}

    def record_for(pid: str) -> PatientRecord:
        rec = records.get(pid)
        if rec is None:
            rec = records[pid] = PatientRecord(patient_id=pid)
        return rec

    for lineno, row in _iter_table(dir_path, "admissions.csv", MIMIC_TABLES["admissions.csv"]):
        budget.saw_row()
        pid = row["subject_id"].strip()
        hadm = row["hadm_id"].strip()
        if not pid or not hadm:
            budget.bad("missing_id")
            continue
        if hadm in admission_owner:
            budget.bad("duplicate_admission_id")
            continue
        try:
            admit = parse_timestamp(row["admittime"])
            disch = parse_timestamp(row["dischtime"])
        except ValueError:
            budget.bad("unparseable_timestamp")
            continue
        if disch < admit:
            budget.bad("discharge_before_admit")
            continue
        admission_owner[hadm] = pid
        record_for(pid).admissions.append(Admission(hadm, admit, disch))

    def read_coded_table(name: str, version_systems: Dict[str, CodeSystem]) -> None:
        for lineno, row in _iter_table(dir_path, name, MIMIC_TABLES[name]):
            budget.saw_row()
            hadm = row["hadm_id"].strip()
            owner = admission_owner.get(hadm)
            if owner is None:
                budget.bad("unknown_admission")
                continue
            system = version_systems.get(row["icd_version"].strip())
            if system is None:
                budget.bad("unknown_icd_version")
                continue
            try:
                code = _normalize(row["icd_code"], system)
            except EmptyCodeError:
                budget.bad("empty_code")
                continue
            except MalformedCodeError:
                budget.bad("malformed_code")
                continue
            try:
                seq = int(row["seq_num"]) if row["seq_num"].strip() else None
            except ValueError:
                budget.bad("bad_seq_num")
                continue
            if name == "diagnoses_icd.csv":
                record_for(owner).diagnoses.append(
                    DiagnosisEvent(code=code, admission_id=hadm, seq_num=seq)
                )
            else:
                record_for(owner).procedures.append(ProcedureEvent(code=code, admission_id=hadm))

    read_coded_table(
        "diagnoses_icd.csv", {"9": CodeSystem.ICD9_CM, "10": CodeSystem.ICD10_CM}
    )
    read_coded_table(
        "procedures_icd.csv", {"9": CodeSystem.ICD9_PROC, "10": CodeSystem.ICD10_PROC}
    )

    for lineno, row in _iter_table(dir_path, "prescriptions.csv", MIMIC_TABLES["prescriptions.csv"]):
        budget.saw_row()
        hadm = row["hadm_id"].strip()
        owner = admission_owner.get(hadm)
        if owner is None:
            budget.bad("unknown_admission")
            continue
        try:
            code = _normalize(row["drug_code"], CodeSystem.NDC)
        except EmptyCodeError:
            budget.bad("empty_code")
            continue
        except MalformedCodeError:
            budget.bad("malformed_code")
            continue
        record_for(owner).drugs.append(DrugEvent(code=code, admission_id=hadm))

    budget.check()
    return PatientStore(records, report=budget.report)


def read_eicu_tables(
    dir_path, bad_row_tolerance: float = DEFAULT_BAD_ROW_TOLERANCE
) -> PatientStore:
    """Read an eICU-like dump (patient unit stays + timed diagnoses).

    Unit stays of one person are linked through ``uniquepid`` so that a
    person's diagnoses across stays form one chronological history.
    """
    dir_path = Path(dir_path)
    budget = _RowBudget(bad_row_tolerance)
    records: Dict[str, PatientRecord] = {}
    stay_owner: Dict[str, str] = {}
    stay_admit_min: Dict[str, int] = {}

    for lineno, row in _iter_table(dir_path, "patient.csv", EICU_TABLES["patient.csv"]):
        budget.saw_row()
        pid = row["uniquepid"].strip()
        stay = row["patientunitstayid"].strip()
        if not pid or not stay:
            budget.bad("missing_id")
            continue
        if stay in stay_owner:
            budget.bad("duplicate_admission_id")
            continue
        try:
            admit_min = int(row["hospitaladmitoffset"])
            disch_min = int(row["hospitaldischargeoffset"])
        except ValueError:
            budget.bad("unparseable_timestamp")
            continue
        if disch_min < admit_min:
            budget.bad("discharge_before_admit")
            continue
        stay_owner[stay] = pid
        stay_admit_min[stay] = admit_min
        rec = records.get(pid)
        if rec is None:
            rec = records[pid] = PatientRecord(patient_id=pid)
        rec.admissions.append(Admission(stay, admit_min * 60.0, disch_min * 60.0))

    for lineno, row in _iter_table(dir_path, "diagnosis.csv", EICU_TABLES["diagnosis.csv"]):
        budget.saw_row()
        stay = row["patientunitstayid"].strip()
        owner = stay_owner.get(stay)
        if owner is None:
            budget.bad("unknown_admission")
            continue
        try:
            offset = int(row["diagnosisoffset"])
        except ValueError:
            budget.bad("unparseable_timestamp")
            continue
        try:
            code = _normalize(row["icd9code"], CodeSystem.ICD9_CM)
        except EmptyCodeError:
            budget.bad("empty_code")
            continue
        except MalformedCodeError:
            budget.bad("malformed_code")
            continue
        records[owner].diagnoses.append(
            DiagnosisEvent(
                code=code,
                admission_id=stay,
                time_offset=stay_admit_min[stay] + offset,
            )
        )

    budget.check()
    return PatientStore(records, report=budget.report)
