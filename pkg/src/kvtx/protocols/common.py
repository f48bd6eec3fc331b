from __future__ import annotations

from dataclasses import dataclass, field

from ..models import et_allows
from ..store import KVStore, Op, StoreError, TxId, View, is_next_txid, update_kv, view_leq


class ProtocolError(RuntimeError):
    """The simulated protocol reached a state its own invariants forbid."""


@dataclass
class ConformanceReport:
    protocol: str
    model: str
    seed: int
    commits: int = 0
    violations: list = field(default_factory=list)  # [(index, txid, reason)]
    livelock: bool = False
    converged: bool | None = None
    trace: list = field(default_factory=list)

    @property
    def conformant(self) -> bool:
        return not self.violations and not self.livelock

    def summary(self) -> str:
        head = (
            f"{self.protocol} seed={self.seed}: {self.commits} commits, "
            f"{len(self.violations)} {self.model} violations"
        )
        if self.livelock:
            head += ", fuel exhausted"
        if self.converged is False:
            head += ", replicas diverge"
        lines = [head]
        for i, t, why in self.violations:
            lines.append(f"  commit #{i} {t}: {why}")
        return "\n".join(lines)


def check_commit(
    m: str, K: KVStore, u_prev: View, u_pre: View, F: frozenset, t: TxId, u_post_of
) -> tuple[KVStore | None, View | None, str | None]:
    """Check one encoded commit. Returns (K', u', None) or (None, None, reason).

    u_post_of computes the post-view from the extended store, since that is
    the only place the new version has an index.
    """
    if not is_next_txid(t, K):
        return None, None, f"{t} is not a fresh identifier for its client"
    if not view_leq(u_prev, u_pre):
        return None, None, "view shrank between transactions of one client"
    try:
        K2 = update_kv(K, u_pre, F, t)
    except StoreError as e:
        return None, None, str(e)
    u_post = u_post_of(K2)
    if not et_allows(m, K, u_pre, F, K2, u_post, t, check_update=False):
        return None, None, f"execution test {m} rejects the commit"
    return K2, u_post, None


def fp_of(reads: dict, writes: dict) -> frozenset:
    return frozenset(
        [Op("R", k, v) for k, v in reads.items()] + [Op("W", k, v) for k, v in writes.items()]
    )
