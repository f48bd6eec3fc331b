"""
Which model admits which anomaly
================================

Prints the admission matrix of the eight anomaly stores and the
dependency cycle behind write skew.
"""

from kvtx import deps
from kvtx.anomalies import anomaly_matrix, anomaly_stores, format_matrix

stores = anomaly_stores()
print(format_matrix(anomaly_matrix(stores)))
print()

skew = stores["ser-disallowed"]
for k, vs in skew.items():
    print(k, [(v.value, str(v.writer), sorted(map(str, v.readers))) for v in vs])

# the cycle has two anti-dependencies, so no serial order fits
cycle = deps.find_cycle(skew)
print("cycle:", " ".join(f"{a} -{lab}->" for a, lab, _ in cycle), cycle[0][0])

# graph and store carry the same information
G = deps.graph_of(skew)
print("round trip:", deps.kv_of(G) == skew)
