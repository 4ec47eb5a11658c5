import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def ccs_icd10_path() -> Path:
    return FIXTURES / "ccs_icd10_single_level.csv"


@pytest.fixture(scope="session")
def ccs_icd9_path() -> Path:
    return FIXTURES / "ccs_icd9_single_level.csv"


@pytest.fixture(scope="session")
def descriptions_path() -> Path:
    return FIXTURES / "ccs_descriptions.csv"


@pytest.fixture(scope="session")
def base_vocab_path() -> Path:
    return FIXTURES / "base_vocab.txt"
