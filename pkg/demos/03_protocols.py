"""
Seeded protocol runs
====================

COPS runs are checked against CC, Clock-SI runs against SI.  The mutants
drop the dependency check on delivery and commit at the smallest clock.
"""

from kvtx.protocols import clocksi_check_run, cops_check_run

ok = sum(cops_check_run(s, 3, 3, 6).conformant for s in range(200))
print(f"cops: {ok}/200 runs conformant")

ok = sum(clocksi_check_run(s, 3, 3, 6, 5).conformant for s in range(200))
print(f"clocksi: {ok}/200 runs conformant")

bad = next(s for s in range(2000) if not cops_check_run(s, 2, 2, 6, 2, check_deps=False).conformant)
rep = cops_check_run(bad, 2, 2, 6, 2, check_deps=False)
print(rep.summary())
print("\n".join(rep.trace[:12]))

bad = next(s for s in range(2000) if not clocksi_check_run(s, 3, 3, 6, 5, commit_rule="min").conformant)
print(clocksi_check_run(bad, 3, 3, 6, 5, commit_rule="min").summary())
