"""Closed-form layer: scaling, stability region, and the limit constants.

The reentrant line 1 -> 2 -> 3 -> 4 -> 5 puts classes {1,3,5} on station 1
and {2,4} on station 2, served preemptively with priorities (5,3,1) and
(2,4).  A single index r in (0,1) drives both stations toward critical
load at different speeds: 1 - rho1 = r and 1 - rho2 = r^2.

As r -> 0 the scaled queue lengths (r Z1, r^2 Z4) become independent
exponentials with means d1 and d4, computable in closed form from the base
means and the squared coefficients of variation.  This script walks the
closed-form layer: no simulation happens here.
"""

import numpy as np

from reline import (
    BaseParams,
    check_stability,
    erlang,
    exponential,
    hyperexp2,
    limit_constants,
    limit_mgf,
    scale,
    stability_report,
    symmetric_exponential_base,
)

base = symmetric_exponential_base()
print("Base means m =", np.round(base.m, 6), " alpha1 =", base.alpha1)

print("\nScaling the family toward critical load:")
print(f"{'r':>6} {'rho1':>8} {'rho2':>8} {'rho_v':>8} {'beta1':>8} {'beta4':>8}")
for r in (0.5, 0.3, 0.1, 0.05, 0.01):
    inst = scale(base, r)
    rep = check_stability(inst)
    print(
        f"{r:>6} {inst.rho1:>8.4f} {inst.rho2:>8.4f} {rep.rho_v:>8.4f} "
        f"{inst.beta[0]:>8.4f} {inst.beta[3]:>8.4f}"
    )
print("Note 1-rho1 = r and 1-rho2 = r^2 exactly: two scales of heavy traffic.")

print("\nThe virtual-station condition rho_v = alpha1(m2+m5) < 1 is an extra")
print("stability requirement of this priority policy, beyond rho1, rho2 < 1:")
bad = BaseParams(
    alpha1=1.0,
    m=(0.05, 0.9, 0.05, 0.1, 0.9),
    dist_e=exponential(),
    dist_s=tuple(exponential() for _ in range(5)),
    heavy_traffic=False,
)
rep = stability_report(bad, 0.3)
print(f"  m2+m5 = {bad.m[1] + bad.m[4]}: rho_v(r=0.3) = {rep.rho_v:.3f} -> stable={rep.stable}")

print("\nLimit constants for several distribution mixes (same means):")
mixes = [
    ("all exponential", exponential(), [exponential()] * 5),
    ("Erlang-2 services", exponential(), [erlang(2)] * 5),
    ("deterministic everything", None, None),
    ("bursty class-2 service (SCV 4)", exponential(),
     [exponential(), hyperexp2(4.0), exponential(), exponential(), exponential()]),
]
from reline import deterministic  # noqa: E402

for name, de, ds in mixes:
    if de is None:
        de, ds = deterministic(), [deterministic()] * 5
    b = BaseParams(alpha1=1.0, m=base.m, dist_e=de, dist_s=tuple(ds))
    law = limit_constants(b)
    print(f"  {name:<32} d1 = {law.d1:.6f}   d4 = {law.d4:.6f}")

law = limit_constants(base)
print("\nLimit MGF of (Z1*, Z4*) factorizes into exponential marginals:")
for eta in ((-1.0, -1.0), (-1.0, 0.0), (0.0, -2.0)):
    print(f"  eta = {eta}:  MGF = {limit_mgf(law, *eta):.6f}")
print("At eta = (-1, -1):", 1.0 / ((1 + law.d1) * (1 + law.d4)))
