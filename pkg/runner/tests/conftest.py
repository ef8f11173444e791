from __future__ import annotations

from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture
def known_good_code() -> str:
    return (DATA_DIR / "known_good_program.py").read_text(encoding="utf-8")
