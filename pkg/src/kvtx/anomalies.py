"""The eight classic anomaly stores and which models admit them."""

from __future__ import annotations

from pathlib import Path

from .engine import admits
from .models import MODELS
from .serialize import load_store
from .store import T0, KVStore, Version, tx

ANOMALY_NAMES = (
    "mr-disallowed",
    "ryw-disallowed",
    "wr-wfr-allowed-but-cc",
    "ua-disallowed",
    "cc-ua-allowed-but-psi",
    "cp-disallowed",
    "si-disallowed",
    "ser-disallowed",
)


def _v(value, writer, *readers) -> Version:
    return Version(value, writer, frozenset(readers))


def anomaly_stores() -> dict[str, KVStore]:
    a, a2 = tx("cl1", 1), tx("cl1", 2)
    b, c, d = tx("cl2", 1), tx("cl3", 1), tx("cl4", 1)
    return {
        # cl1 reads the newer value first, then the older one
        "mr-disallowed": KVStore({"k": [_v(0, T0, a2), _v(1, b, a)]}),
        # cl1 writes k, then reads the initial value
        "ryw-disallowed": KVStore({"k": [_v(0, T0, a, a2), _v(1, a), _v(1, a2)]}),
        # a causal chain cl1 -> cl2 -> cl3 where cl3 misses the head
        "wr-wfr-allowed-but-cc": KVStore(
            {
                "k1": [_v(0, T0, c), _v(1, a)],
                "k2": [_v(0, T0), _v(2, a2, b)],
                "k3": [_v(0, T0), _v(3, b, c)],
            }
        ),
        # lost update
        "ua-disallowed": KVStore({"k": [_v(0, T0, a, b), _v(1, a), _v(1, b)]}),
        "cc-ua-allowed-but-psi": KVStore(
            {
                "k1": [_v(0, T0), _v(1, a), _v(2, b)],
                "k2": [_v(0, T0), _v(2, b, c)],
                "k3": [_v(0, T0, c), _v(1, a)],
            }
        ),
        # long fork
        "cp-disallowed": KVStore(
            {
                "k1": [_v(0, T0, d), _v(1, a, c)],
                "k2": [_v(0, T0, c), _v(2, b, d)],
            }
        ),
        "si-disallowed": KVStore(
            {
                "k1": [_v(0, T0, d), _v(1, a), _v(2, b)],
                "k2": [_v(0, T0, b), _v(3, c, d)],
            }
        ),
        # write skew
        "ser-disallowed": KVStore(
            {
                "k1": [_v(0, T0, a, b), _v(1, a)],
                "k2": [_v(0, T0, a, b), _v(2, b)],
            }
        ),
    }


# model -> set of admitted anomaly stores
_ADMITTED = {
    "mr-disallowed": {"TOP", "MW", "RYW", "WFR", "UA"},
    "ryw-disallowed": {"TOP", "MR", "MW", "WFR"},
    "wr-wfr-allowed-but-cc": {"TOP", "MR", "MW", "RYW", "WFR", "UA"},
    "ua-disallowed": {"TOP", "MR", "MW", "RYW", "WFR", "CC", "CP"},
    "cc-ua-allowed-but-psi": {"TOP", "MR", "MW", "RYW", "WFR", "CC", "UA"},
    "cp-disallowed": {"TOP", "MR", "MW", "RYW", "WFR", "CC", "UA", "PSI"},
    "si-disallowed": set(MODELS) - {"SI", "SER"},
    "ser-disallowed": set(MODELS) - {"SER"},
}

EXPECTED: dict[str, dict[str, bool]] = {
    name: {m: m in _ADMITTED[name] for m in MODELS} for name in ANOMALY_NAMES
}


def load_fixtures(directory: str | Path) -> dict[str, KVStore]:
    d = Path(directory)
    return {name: load_store(d / f"{name}.json") for name in ANOMALY_NAMES}


def anomaly_matrix(stores: dict[str, KVStore], models=MODELS) -> dict[str, dict[str, bool]]:
    return {name: {m: admits(m, K) for m in models} for name, K in stores.items()}


def format_matrix(matrix: dict[str, dict[str, bool]], expected=EXPECTED) -> str:
    models = list(next(iter(matrix.values())))
    width = max(len(n) for n in matrix)
    lines = [" " * width + "  " + " ".join(f"{m:>4}" for m in models)]
    for name, row in matrix.items():
        cells = []
        for m in models:
            mark = "ok" if row[m] else "--"
            if name in expected and expected[name][m] != row[m]:
                mark += "!"
            cells.append(f"{mark:>4}")
        lines.append(f"{name:<{width}}  " + " ".join(cells))
    return "\n".join(lines)


def mismatches(matrix: dict[str, dict[str, bool]], expected=EXPECTED) -> list[tuple[str, str]]:
    return [
        (name, m)
        for name, row in matrix.items()
        for m, ok in row.items()
        if name in expected and expected[name][m] != ok
    ]
