"""Product-form convergence: simulate the sweep and watch the scaled means
approach d1 and d4.

Each r gets one seeded run; the time averages of r*Z1 and r^2*Z4 are
compared against the closed-form limit means.  Convergence is slow in r
(the relative error decays roughly like r^0.8 on the symmetric instance),
which is why the sweep matters more than any single point.  The
high-priority classes collapse: their scaled means vanish.

Runtime: about a minute.
"""

import numpy as np

from reline import limit_constants, scale, summarize, symmetric_exponential_base
from reline.simulator import run

base = symmetric_exponential_base()
law = limit_constants(base)
print(f"Limit means: d1 = {law.d1}, d4 = {law.d4}")
print(
    f"\n{'r':>5} {'r*E[Z1]':>9} {'rel.err':>8} {'r^2*E[Z4]':>10} {'rel.err':>8} "
    f"{'r*E[Z2]':>9} {'r*E[Z3]':>9} {'r*E[Z5]':>9}"
)
for i, r in enumerate((0.4, 0.3, 0.2, 0.1)):
    inst = scale(base, r)
    traj = run(inst, 60_000_000, seed=(2026, i))
    est = summarize(traj)
    sm = est.scaled_mean
    print(
        f"{r:>5} {sm[0]:>9.4f} {abs(sm[0]/law.d1-1):>8.3f} "
        f"{sm[3]:>10.4f} {abs(sm[3]/law.d4-1):>8.3f} "
        f"{sm[1]:>9.4f} {sm[2]:>9.4f} {sm[4]:>9.4f}"
    )

print("""
Reading the table: the low-priority coordinates creep toward d1 and d4
from below while the high-priority scaled means shrink toward zero (state
space collapse).  The second moment of Z2+Z3+Z5 stays bounded but its
transient grows well past r = 0.1, so finite-r snapshots overstate the
limit gap.
""")

print("Exponential shape of the scaled coordinates at r = 0.1:")
inst = scale(base, 0.1)
traj = run(inst, 150_000_000, seed=77, snapshot_spacing=100.0 / 0.1**2)
z1s = 0.1 * traj.snapshots[:, 0].astype(float)
z4s = 0.01 * traj.snapshots[:, 3].astype(float)
from reline import fit_exponential  # noqa: E402

rep = fit_exponential(z1s, z4s, law, min_samples=1000)
print(f"  n = {rep.n} spaced samples")
print(f"  KS(r Z1   vs Exp(d1)) = {rep.ks1:.4f}  (converges slowly; mean still ~27% low)")
print(f"  KS(r^2 Z4 vs Exp(d4)) = {rep.ks4:.4f}")
print(f"  corr(r Z1, r^2 Z4)    = {rep.corr:+.4f}  (asymptotic independence)")
