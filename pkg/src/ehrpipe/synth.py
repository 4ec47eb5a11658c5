"""Seeded synthetic EHR generator with a plantable diagnosis signal.

One generated population is rendered into both table schemas (MIMIC-like
and eICU-like) plus the concept maps, code descriptions, and a base
vocabulary, so the whole pipeline can run end to end at desk scale.

The planted signal: a fixed set of risk codes may appear in a patient's
first visit, and the probability that the target diagnosis shows up in a
later visit follows a logistic model in the count of distinct risk codes
present, P = sigmoid(logit(base_rate) + effect * n_risk_present).
Filler codes never draw from the risk or target concepts, so the signal
survives history truncation exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .codemap import CodeSystem, MedicalCode
from .errors import InvalidConfigError
from .store import (
    Admission,
    DiagnosisEvent,
    DrugEvent,
    PatientRecord,
    PatientStore,
    ProcedureEvent,
    format_timestamp,
)

# minute 0 of the synthetic clock, kept away from the epoch so rendered
# timestamps look like plausible dates
_BASE_MIN = int((datetime(2019, 1, 1) - datetime(1970, 1, 1)).total_seconds() // 60)

_ADJECTIVES = ["acute", "chronic", "recurrent", "unspecified", "severe", "mild", "secondary", "progressive"]
_SITES = ["renal", "hepatic", "cardiac", "pulmonary", "vascular", "gastric", "neural", "dermal"]
_NOUNS = ["failure", "infection", "inflammation", "obstruction", "disorder", "insufficiency", "lesion", "stenosis"]
_AGENTS = ["analgesic", "antibiotic", "diuretic", "anticoagulant", "sedative", "antiviral", "statin", "steroid"]
_FORMS = ["tablet", "infusion", "injection", "capsule", "solution", "suspension", "patch", "syrup"]
_PROC_KINDS = ["endoscopic", "percutaneous", "open", "laparoscopic", "diagnostic", "therapeutic", "emergency", "elective"]
_PROC_ACTS = ["catheterization", "resection", "biopsy", "drainage", "repair", "replacement", "imaging", "ventilation"]

BASE_VOCAB_WORDS = ["acute", "chronic", "renal", "cardiac", "failure", "infection", "tablet", "infusion"]


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int
    n_codes: int = 120
    n_drug_codes: int = 24
    n_proc_codes: int = 16
    max_visits: int = 8
    visit_continue_prob: float = 0.45
    mean_dx_per_visit: float = 3.0
    target_ccs: str = "157"
    n_risk_codes: int = 3
    risk_code_prob: float = 0.25
    base_rate: float = 0.08
    effect: float = 2.0
    first_visit_target_prob: float = 0.03
    readmit_within_prob: float = 0.35
    drug_mean_per_visit: float = 2.0
    proc_mean_per_visit: float = 1.0

    def validate(self) -> None:
        if self.n_patients <= 0:
            raise InvalidConfigError("n_patients must be positive")
        if self.n_codes < self.n_risk_codes + 3:
            raise InvalidConfigError("code universe too small for the risk codes")
        if not 0.0 < self.visit_continue_prob < 1.0:
            raise InvalidConfigError("visit_continue_prob must be in (0,1)")
        if not 0.0 < self.base_rate < 1.0:
            raise InvalidConfigError("base_rate must be in (0,1)")
        if not 0.0 <= self.risk_code_prob <= 1.0:
            raise InvalidConfigError("risk_code_prob must be in [0,1]")
        if self.max_visits < 1 or self.mean_dx_per_visit < 1.0:
            raise InvalidConfigError("need at least one visit and one diagnosis per visit")
        if self.target_ccs == "" or any(self.target_ccs == str(1000 + c) for c in range(self.n_codes)):
            raise InvalidConfigError("target_ccs collides with the generated CCS range")

    # concept 0 is the target, concepts 1..n_risk_codes are the risk codes
    def risk_concepts(self) -> range:
        return range(1, self.n_risk_codes + 1)

    def icd10_raw(self, c: int) -> str:
        return f"Z{c:03d}.{c % 10}"

    def icd9_raw(self, c: int) -> str:
        return f"{100 + c}.{c % 10}"

    def ccs_of(self, c: int) -> str:
        return self.target_ccs if c == 0 else str(1000 + c)

    def description_of(self, c: int) -> str:
        return f"{_ADJECTIVES[c % 8]} {_SITES[(c // 8) % 8]} {_NOUNS[(c // 64) % 8]}"

    def ndc_raw(self, j: int) -> str:
        return str(50000 + j)

    def atc_of(self, j: int) -> str:
        return f"A{j:02d}AA"

    def drug_description(self, j: int) -> str:
        return f"{_AGENTS[j % 8]} {_FORMS[(j // 8) % 8]}"

    def proc_raw(self, k: int) -> str:
        return f"7{k:02d}09Z"

    def ccsproc_of(self, k: int) -> str:
        return str(5000 + k)

    def proc_description(self, k: int) -> str:
        return f"{_PROC_KINDS[k % 8]} {_PROC_ACTS[(k // 8) % 8]}"


@dataclass
class _Visit:
    admit_min: int
    disch_min: int
    dx_concepts: List[int] = field(default_factory=list)
    drug_ids: List[int] = field(default_factory=list)
    proc_ids: List[int] = field(default_factory=list)
    dx_offsets: List[int] = field(default_factory=list)  # minutes after admit


@dataclass
class _Patient:
    index: int
    visits: List[_Visit]
    n_risk_present: int


@dataclass
class SynthResult:
    config: SynthConfig
    seed: int
    out_dir: Path
    mimic_store: PatientStore
    eicu_store: PatientStore
    # patient id -> 1/0, or None when the task's exclusion rules apply
    mimic_labels: Dict[str, Optional[int]]
    eicu_labels: Dict[str, Optional[int]]
    files: List[Path]

    @staticmethod
    def _prevalence(labels: Dict[str, Optional[int]]) -> float:
        eligible = [v for v in labels.values() if v is not None]
        return sum(eligible) / len(eligible) if eligible else float("nan")

    @property
    def mimic_prevalence(self) -> float:
        return self._prevalence(self.mimic_labels)

    @property
    def eicu_prevalence(self) -> float:
        return self._prevalence(self.eicu_labels)


def _mimic_patient_id(i: int) -> str:
    return f"m{i:06d}"

def _eicu_patient_id(i: int) -> str:
    return f"e{i:06d}"


def _draw_patient(cfg: SynthConfig, rng: np.random.Generator, index: int) -> _Patient:
    n_visits = 1
    while n_visits < cfg.max_visits and rng.random() < cfg.visit_continue_prob:
        n_visits += 1

    filler_lo = cfg.n_risk_codes + 1
    visits: List[_Visit] = []
    t = _BASE_MIN + int(rng.integers(0, 365 * 24 * 60))
    for v in range(n_visits):
        los_min = int(rng.integers(1 * 1440, 10 * 1440))
        visit = _Visit(admit_min=t, disch_min=t + los_min)
        n_dx = 1 + int(rng.poisson(cfg.mean_dx_per_visit - 1.0))
        if v == 0:
            for c in cfg.risk_concepts():
                if rng.random() < cfg.risk_code_prob:
                    visit.dx_concepts.append(c)
            while len(visit.dx_concepts) < n_dx:
                visit.dx_concepts.append(int(rng.integers(filler_lo, cfg.n_codes)))
        else:
            visit.dx_concepts = [int(x) for x in rng.integers(filler_lo, cfg.n_codes, size=n_dx)]
        visit.drug_ids = [int(x) for x in rng.integers(0, cfg.n_drug_codes, size=rng.poisson(cfg.drug_mean_per_visit))]
        visit.proc_ids = [int(x) for x in rng.integers(0, cfg.n_proc_codes, size=rng.poisson(cfg.proc_mean_per_visit))]
        visits.append(visit)
        if v + 1 < n_visits:
            if rng.random() < cfg.readmit_within_prob:
                gap = int(rng.integers(360, 10 * 1440))
            else:
                gap = int(rng.integers(20 * 1440, 120 * 1440))
            t = visit.disch_min + gap

    n_risk = len(set(visits[0].dx_concepts) & set(cfg.risk_concepts()))

    # optionally plant the target in the first visit (exclusion-rule fodder)
    if rng.random() < cfg.first_visit_target_prob:
        pos = int(rng.integers(0, len(visits[0].dx_concepts) + 1))
        visits[0].dx_concepts.insert(pos, 0)

    # logistic draw for a later-visit target occurrence
    if n_visits >= 2:
        logit = math.log(cfg.base_rate / (1.0 - cfg.base_rate)) + cfg.effect * n_risk
        if rng.random() < 1.0 / (1.0 + math.exp(-logit)):
            j = int(rng.integers(1, n_visits))  # visit index 2..n_visits, 0-based
            pos = int(rng.integers(0, len(visits[j].dx_concepts) + 1))
            visits[j].dx_concepts.insert(pos, 0)

    for visit in visits:
        span = max(visit.disch_min - visit.admit_min, 1)
        offsets = sorted(int(x) for x in rng.integers(0, span, size=len(visit.dx_concepts)))
        visit.dx_offsets = offsets

    return _Patient(index=index, visits=visits, n_risk_present=n_risk)


def _ground_truth_visits(patient: _Patient) -> Optional[int]:
    """Visit-granularity label: None = excluded by the task rules."""
    if len(patient.visits) < 2:
        return None
    if 0 in patient.visits[0].dx_concepts:
        return None
    for visit in patient.visits[1:]:
        if 0 in visit.dx_concepts:
            return 1
    return 0


def _ground_truth_diagnoses(patient: _Patient) -> Optional[int]:
    """Diagnosis-granularity label over the flattened code sequence."""
    flat = [c for visit in patient.visits for c in visit.dx_concepts]
    if len(flat) < 2:
        return None
    if flat[0] == 0:
        return None
    return 1 if 0 in flat[1:] else 0


def _build_stores(cfg: SynthConfig, patients: List[_Patient]) -> Tuple[PatientStore, PatientStore]:
    mimic: Dict[str, PatientRecord] = {}
    eicu: Dict[str, PatientRecord] = {}
    for patient in patients:
        mpid = _mimic_patient_id(patient.index)
        epid = _eicu_patient_id(patient.index)
        mrec = PatientRecord(patient_id=mpid)
        erec = PatientRecord(patient_id=epid)
        for v, visit in enumerate(patient.visits):
            hadm = f"{mpid}-v{v + 1:02d}"
            stay = f"{epid}-s{v + 1:02d}"
            mrec.admissions.append(Admission(hadm, visit.admit_min * 60.0, visit.disch_min * 60.0))
            erec.admissions.append(Admission(stay, visit.admit_min * 60.0, visit.disch_min * 60.0))
            for seq, (c, off) in enumerate(zip(visit.dx_concepts, visit.dx_offsets), start=1):
                icd10 = MedicalCode(CodeSystem.ICD10_CM, cfg.icd10_raw(c).replace(".", "").upper())
                icd9 = MedicalCode(CodeSystem.ICD9_CM, cfg.icd9_raw(c).replace(".", "").upper())
                mrec.diagnoses.append(DiagnosisEvent(code=icd10, admission_id=hadm, seq_num=seq))
                erec.diagnoses.append(
                    DiagnosisEvent(code=icd9, admission_id=stay, time_offset=visit.admit_min + off)
                )
            for j in visit.drug_ids:
                code = MedicalCode(CodeSystem.NDC, cfg.ndc_raw(j))
                mrec.drugs.append(DrugEvent(code=code, admission_id=hadm))
            for k in visit.proc_ids:
                code = MedicalCode(CodeSystem.ICD10_PROC, cfg.proc_raw(k))
                mrec.procedures.append(ProcedureEvent(code=code, admission_id=hadm))
        mimic[mpid] = mrec
        eicu[epid] = erec
    return PatientStore(mimic), PatientStore(eicu)


def _write_csv(path: Path, header: List[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _write_tables(cfg: SynthConfig, patients: List[_Patient], out_dir: Path) -> List[Path]:
    files = []
    mimic = out_dir / "mimic"
    eicu = out_dir / "eicu"

    adm_rows, dx_rows, proc_rows, rx_rows = [], [], [], []
    pat_rows, ediag_rows = [], []
    for patient in patients:
        mpid = _mimic_patient_id(patient.index)
        epid = _eicu_patient_id(patient.index)
        for v, visit in enumerate(patient.visits):
            hadm = f"{mpid}-v{v + 1:02d}"
            stay = f"{epid}-s{v + 1:02d}"
            adm_rows.append([
                mpid, hadm,
                format_timestamp(visit.admit_min * 60.0),
                format_timestamp(visit.disch_min * 60.0),
            ])
            pat_rows.append([epid, stay, visit.admit_min, visit.disch_min])
            for seq, (c, off) in enumerate(zip(visit.dx_concepts, visit.dx_offsets), start=1):
                dx_rows.append([mpid, hadm, seq, cfg.icd10_raw(c), 10])
                ediag_rows.append([stay, off, cfg.icd9_raw(c)])
            for seq, k in enumerate(visit.proc_ids, start=1):
                proc_rows.append([mpid, hadm, seq, cfg.proc_raw(k), 10])
            for j in visit.drug_ids:
                rx_rows.append([mpid, hadm, cfg.ndc_raw(j)])

    files.append(_write_csv(mimic / "admissions.csv",
                            ["subject_id", "hadm_id", "admittime", "dischtime"], adm_rows))
    files.append(_write_csv(mimic / "diagnoses_icd.csv",
                            ["subject_id", "hadm_id", "seq_num", "icd_code", "icd_version"], dx_rows))
    files.append(_write_csv(mimic / "procedures_icd.csv",
                            ["subject_id", "hadm_id", "seq_num", "icd_code", "icd_version"], proc_rows))
    files.append(_write_csv(mimic / "prescriptions.csv",
                            ["subject_id", "hadm_id", "drug_code"], rx_rows))
    files.append(_write_csv(eicu / "patient.csv",
                            ["uniquepid", "patientunitstayid", "hospitaladmitoffset",
                             "hospitaldischargeoffset"], pat_rows))
    files.append(_write_csv(eicu / "diagnosis.csv",
                            ["patientunitstayid", "diagnosisoffset", "icd9code"], ediag_rows))
    return files


def _write_reference_files(cfg: SynthConfig, out_dir: Path) -> List[Path]:
    files = []
    maps = out_dir / "maps"
    norm = lambda raw: raw.replace(".", "").upper()

    files.append(_write_csv(maps / "icd10cm_to_ccsdx.csv", ["source", "target"],
                            [[norm(cfg.icd10_raw(c)), cfg.ccs_of(c)] for c in range(cfg.n_codes)]))
    files.append(_write_csv(maps / "icd9cm_to_ccsdx.csv", ["source", "target"],
                            [[norm(cfg.icd9_raw(c)), cfg.ccs_of(c)] for c in range(cfg.n_codes)]))
    files.append(_write_csv(maps / "ndc_to_atc.csv", ["source", "target"],
                            [[cfg.ndc_raw(j), cfg.atc_of(j)] for j in range(cfg.n_drug_codes)]))
    files.append(_write_csv(maps / "icd10proc_to_ccsproc.csv", ["source", "target"],
                            [[cfg.proc_raw(k), cfg.ccsproc_of(k)] for k in range(cfg.n_proc_codes)]))

    desc_rows = []
    for c in range(cfg.n_codes):
        desc_rows.append(["ccsdx", cfg.ccs_of(c), cfg.description_of(c)])
        desc_rows.append(["icd9cm", norm(cfg.icd9_raw(c)), cfg.description_of(c)])
        desc_rows.append(["icd10cm", norm(cfg.icd10_raw(c)), cfg.description_of(c)])
    for j in range(cfg.n_drug_codes):
        desc_rows.append(["atc", cfg.atc_of(j), cfg.drug_description(j)])
        desc_rows.append(["ndc", cfg.ndc_raw(j), cfg.drug_description(j)])
    for k in range(cfg.n_proc_codes):
        desc_rows.append(["ccsproc", cfg.ccsproc_of(k), cfg.proc_description(k)])
        desc_rows.append(["icd10proc", cfg.proc_raw(k), cfg.proc_description(k)])
    files.append(_write_csv(out_dir / "descriptions.csv", ["system", "code", "description"], desc_rows))

    vocab_path = out_dir / "base_vocab.txt"
    vocab_path.write_text("".join(w + "\n" for w in BASE_VOCAB_WORDS), encoding="utf-8")
    files.append(vocab_path)
    return files


def generate_synthetic(cfg: SynthConfig, seed: int, out_dir) -> SynthResult:
    """Generate the population and write both schemas plus reference files.

    Deterministic for fixed (cfg, seed): identical bytes on every run.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    rng = np.random.Generator(np.random.PCG64(seed))
    patients = [_draw_patient(cfg, rng, i) for i in range(cfg.n_patients)]

    mimic_store, eicu_store = _build_stores(cfg, patients)
    mimic_labels = {_mimic_patient_id(p.index): _ground_truth_visits(p) for p in patients}
    eicu_labels = {_eicu_patient_id(p.index): _ground_truth_diagnoses(p) for p in patients}

    files = _write_tables(cfg, patients, out_dir)
    files += _write_reference_files(cfg, out_dir)

    return SynthResult(
        config=cfg,
        seed=seed,
        out_dir=out_dir,
        mimic_store=mimic_store,
        eicu_store=eicu_store,
        mimic_labels=mimic_labels,
        eicu_labels=eicu_labels,
        files=files,
    )
