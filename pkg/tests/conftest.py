import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kvtx.store import T0, KVStore, Version, tx  # noqa: E402

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def mkvs4() -> KVStore:
    a1, a2, b1, b2 = tx("cl1", 1), tx("cl1", 2), tx("cl2", 1), tx("cl2", 2)
    return KVStore(
        {
            "k1": [Version(0, T0, {a1, b2}), Version(1, a1)],
            "k2": [Version(0, T0, {b1, a2}), Version(1, b1)],
        }
    )
