import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixture_db import (  # noqa: E402
    build_schools_sqlite,
    racing_schema,
    schools_corpus,
    schools_kb,
    schools_schema,
    schools_value_samples,
)

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def racing():
    return racing_schema()


@pytest.fixture(scope="session")
def skeleton_corpus():
    rows = []
    for line in (DATA_DIR / "skeleton_corpus.jsonl").read_text().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


@pytest.fixture(scope="session")
def schools_db_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("schoolsdb") / "schools.sqlite"
    build_schools_sqlite(path)
    return path


@pytest.fixture(scope="session")
def schools(schools_db_path):
    return schools_value_samples(schools_db_path, schools_schema())


@pytest.fixture(scope="session")
def kb():
    return schools_kb()


@pytest.fixture(scope="session")
def corpus():
    return schools_corpus()
