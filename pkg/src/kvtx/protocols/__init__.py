"""Seeded simulators of distributed protocols, checked against execution tests."""

from .common import ConformanceReport, ProtocolError
from .cops import (
    CopsState,
    cops_check_run,
    cops_deliver,
    cops_encode,
    cops_get_trans,
    cops_put,
    cops_replay,
    cops_run,
)
from .clocksi import (
    AbortError,
    ClockSiState,
    clocksi_check_run,
    clocksi_commit,
    clocksi_read,
    clocksi_replay,
    clocksi_run,
    clocksi_start,
    clocksi_write,
)

__all__ = [
    "AbortError",
    "ClockSiState",
    "ConformanceReport",
    "CopsState",
    "ProtocolError",
    "clocksi_check_run",
    "clocksi_commit",
    "clocksi_read",
    "clocksi_replay",
    "clocksi_run",
    "clocksi_start",
    "clocksi_write",
    "cops_check_run",
    "cops_deliver",
    "cops_encode",
    "cops_get_trans",
    "cops_put",
    "cops_replay",
    "cops_run",
]
