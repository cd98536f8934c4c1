import os
from pathlib import Path

import pytest

from keyforge import dataset as kd

# The real CMU table is an external input; tests that need it look here and
# skip when it is absent.
CMU_ENV_VAR = "KEYFORGE_CMU_CSV"
CMU_DEFAULT_PATHS = (
    Path("data/DSL-StrongPasswordData.csv"),
    Path("DSL-StrongPasswordData.csv"),
    Path.home() / "DSL-StrongPasswordData.csv",
)


def find_cmu_csv() -> Path | None:
    env = os.environ.get(CMU_ENV_VAR)
    if env:
        p = Path(env)
        if p.exists():
            return p
    for p in CMU_DEFAULT_PATHS:
        if p.exists():
            return p
    return None


@pytest.fixture(scope="session")
def cmu_csv() -> Path:
    path = find_cmu_csv()
    if path is None:
        pytest.skip("CMU keystroke CSV not available (set %s)" % CMU_ENV_VAR)
    return path


@pytest.fixture(scope="session")
def cmu_dataset(cmu_csv):
    return kd.ingest_csv(cmu_csv)


def make_csv(path: Path, rows: list[list[str]], header: list[str] | None = None) -> Path:
    """Write a small CSV fixture; default header is the canonical CMU one."""
    if header is None:
        header = list(kd.METADATA_COLUMNS) + list(kd.FEATURE_COLUMNS)
    lines = [",".join(header)]
    lines += [",".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path
