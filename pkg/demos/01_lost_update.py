"""
Two increments, one counter
===========================

Run with ``python3 demos/01_lost_update.py``.
"""

from kvtx.engine import explore
from kvtx.lang import Atomic, BinOp, Lit, Lookup, Mutate, Var, seq
from kvtx.robustness import canonical_up_to_clients

# read k into a, write a + 1 back
inc = Atomic(seq(Lookup("a", Lit("k")), Mutate(Lit("k"), BinOp("+", Var("a"), Lit(1)))))
program = {"cl1": inc, "cl2": inc}

for model in ("CC", "PSI", "SER"):
    ex = explore(model, program)
    shapes = {canonical_up_to_clients(K) for K in ex.finals}
    print(f"{model}: {len(ex.finals)} final stores, {len(shapes)} up to renaming")
    for K in sorted(ex.finals, key=lambda K: K.canonical()):
        print("   ", [(v.value, str(v.writer)) for v in K["k"]])

# under CC both clients may read 0, so the counter can end at 1
ex = explore("CC", program)
lost = [K for K in ex.finals if K["k"][-1].value == 1]
print("lost update reachable under CC:", bool(lost))
for c in ex.trace_to(next(st for st in ex.final_states if st.store == lost[0])):
    print("   ", c.client, c)
