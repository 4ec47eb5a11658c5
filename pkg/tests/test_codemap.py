import csv
import random
import string

import pytest

from ehrpipe.codemap import (
    CodeSystem,
    MedicalCode,
    describe,
    load_concept_map,
    load_descriptions,
    map_code,
    normalize_code,
    save_concept_map,
)
from ehrpipe.errors import (
    ConflictingMappingError,
    EmptyCodeError,
    MalformedCodeError,
    MissingColumnError,
    SystemMismatchError,
    UnknownSystemTagError,
)


class TestNormalizeCode:
    def test_strips_dots(self):
        assert normalize_code("N17.9", CodeSystem.ICD10_CM).code == "N179"

    def test_idempotent_on_example(self):
        assert normalize_code("N179", CodeSystem.ICD10_CM).code == "N179"

    def test_trims_and_strips(self):
        assert normalize_code(" 585.6 ", CodeSystem.ICD9_CM).code == "5856"

    def test_uppercases(self):
        assert normalize_code("n17.9", CodeSystem.ICD10_CM).code == "N179"

    def test_empty_rejected(self):
        with pytest.raises(EmptyCodeError):
            normalize_code("   ", CodeSystem.ICD9_CM)

    def test_internal_whitespace_rejected(self):
        with pytest.raises(MalformedCodeError):
            normalize_code("N17 9", CodeSystem.ICD10_CM)

    def test_control_characters_rejected(self):
        with pytest.raises(MalformedCodeError):
            normalize_code("N17\x019", CodeSystem.ICD10_CM)

    def test_idempotence_fuzzed(self):
        rng = random.Random(42)
        alphabet = string.ascii_letters + string.digits + ".." + "  "
        for _ in range(500):
            raw = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
            try:
                once = normalize_code(raw, CodeSystem.ICD10_CM)
            except (EmptyCodeError, MalformedCodeError):
                continue
            twice = normalize_code(once.code, CodeSystem.ICD10_CM)
            assert once == twice


class TestConceptMap:
    def test_official_ccs_row_for_renal_failure(self, ccs_icd10_path):
        cmap = load_concept_map(ccs_icd10_path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)
        mapped = map_code(cmap, normalize_code("N17.9", CodeSystem.ICD10_CM))
        assert mapped == MedicalCode(CodeSystem.CCS_DX, "157")

    def test_mapping_matches_fixture_file(self, ccs_icd10_path):
        # independent read of the checked-in single-level CCS fixture
        with open(ccs_icd10_path, newline="") as fh:
            rows = {r["source"]: r["target"] for r in csv.DictReader(fh)}
        cmap = load_concept_map(ccs_icd10_path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)
        for source, target in rows.items():
            assert map_code(cmap, MedicalCode(CodeSystem.ICD10_CM, source)).code == target

    def test_duplicate_rows_deduplicated(self, tmp_path):
        path = tmp_path / "map.csv"
        path.write_text("source,target\nA1,X\nA1,X\n")
        cmap = load_concept_map(path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)
        assert len(cmap) == 1

    def test_conflicting_rows_rejected(self, tmp_path):
        path = tmp_path / "map.csv"
        path.write_text("source,target\nA1,X\nA1,Y\n")
        with pytest.raises(ConflictingMappingError):
            load_concept_map(path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "map.csv"
        path.write_text("from,to\nA1,X\n")
        with pytest.raises(MissingColumnError):
            load_concept_map(path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)

    def test_unknown_system_tag(self, ccs_icd10_path):
        with pytest.raises(UnknownSystemTagError):
            load_concept_map(ccs_icd10_path, "icd11", "ccsdx")

    def test_unmapped_code_returns_none(self, ccs_icd10_path):
        cmap = load_concept_map(ccs_icd10_path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)
        assert map_code(cmap, MedicalCode(CodeSystem.ICD10_CM, "Z9999")) is None

    def test_system_mismatch(self, ccs_icd10_path):
        cmap = load_concept_map(ccs_icd10_path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)
        with pytest.raises(SystemMismatchError):
            map_code(cmap, MedicalCode(CodeSystem.ICD9_CM, "5849"))

    def test_map_is_deterministic_and_total(self, ccs_icd10_path):
        cmap = load_concept_map(ccs_icd10_path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)
        rng = random.Random(7)
        for _ in range(200):
            code = MedicalCode(
                CodeSystem.ICD10_CM,
                "".join(rng.choice(string.ascii_uppercase + string.digits) for _ in range(4)),
            )
            assert map_code(cmap, code) == map_code(cmap, code)

    def test_save_load_round_trip(self, ccs_icd10_path, tmp_path):
        cmap = load_concept_map(ccs_icd10_path, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)
        out = tmp_path / "roundtrip.csv"
        save_concept_map(cmap, out)
        again = load_concept_map(out, CodeSystem.ICD10_CM, CodeSystem.CCS_DX)
        assert again.entries == cmap.entries


class TestDescriptions:
    def test_paper_pinned_labels(self, descriptions_path):
        table = load_descriptions(descriptions_path)
        assert describe(table, MedicalCode(CodeSystem.CCS_DX, "157")) == (
            "Acute and unspecified renal failure"
        )
        assert describe(table, MedicalCode(CodeSystem.CCS_DX, "158")) == "Chronic kidney disease"

    def test_unknown_code_is_none(self, descriptions_path):
        table = load_descriptions(descriptions_path)
        assert describe(table, MedicalCode(CodeSystem.CCS_DX, "999")) is None

    def test_description_untransformed(self, descriptions_path):
        table = load_descriptions(descriptions_path)
        text = describe(table, MedicalCode(CodeSystem.CCS_DX, "131"))
        assert text == "Respiratory failure; insufficiency; arrest (adult)"
