"""Transform calculus and the asymptotic balance residual.

Exponential test functions exp(<theta, z>) turn stationarity into an exact
identity coupling the MGF phi and its five idle-event conditionals.  Its
coefficients gamma1, zeta_k solve small transcendental equations; to second
order they are polynomials in theta weighted by the SCVs.

Two strategic directions cancel the station-internal coefficients:
  a = station-1 direction (solves three cancellation equations, a1=1, a4=0)
  b = (1/m4, 1/m4, 1, 1, 0)
Scaled exponents theta = r*eta1*a + r^2*eta4*b ("step 1") or r^2*eta4*b
("step 3") isolate the few surviving terms; assembling them with estimated
MGFs gives a residual that must vanish faster than r^2.  Watching
|LHS|/r^2 fall with r is a direct numerical check of the mechanism that
produces the product-form limit.

Runtime: about a minute.
"""

import numpy as np

from reline import (
    asymptotic_bar_lhs,
    build_theta,
    direction_station1,
    direction_station2,
    empirical_mgf,
    scale,
    solve_gamma,
    solve_zeta,
    symmetric_exponential_base,
    taylor_star,
)
from reline.distributions import erlang, exponential, uniform
from reline.simulator import run

base = symmetric_exponential_base()

print("Implicit transform roots vs second-order expansions (theta1 = -0.2):")
for spec in (exponential(), erlang(2), uniform()):
    g = solve_gamma(spec, -0.2)
    star = -0.2 + 0.5 * spec.scv * 0.04
    print(f"  {spec.family:<12} gamma = {g:+.8f}   gamma* = {star:+.8f}   |rem| = {abs(g-star):.2e}")

print("\nStrategic directions on the symmetric instance:")
print("  a =", direction_station1(base), "  b =", direction_station2(base))

print("\nStep-1 exponent at r = 0.2, eta = (-1, -1):")
theta = build_theta(1, -1.0, -1.0, 0.2, base)
print("  theta =", np.array2string(theta.theta, precision=4))
tv = taylor_star(theta.theta, 1.0, np.ones(5))
print("  zeta_bar =", np.array2string(tv.zeta_bar, precision=4))

print("\nAsymptotic balance residual |LHS|/r^2 along the sweep")
print("(simulated MGFs with residual-augmented test functions):")
print(f"{'r':>5} {'step 1':>10} {'step 3':>10}")
for i, r in enumerate((0.4, 0.3, 0.2)):
    inst = scale(base, r)
    th1 = build_theta(1, -1.0, -1.0, r, base)
    th3 = build_theta(3, -1.0, -1.0, r, base)
    traj = run(inst, 60_000_000, seed=(505, i), thetas=[th1, th3])
    m1, m3 = empirical_mgf(traj, inst)
    v1 = abs(asymptotic_bar_lhs(inst, th1, m1)) / r**2
    v3 = abs(asymptotic_bar_lhs(inst, th3, m3)) / r**2
    print(f"{r:>5} {v1:>10.4f} {v3:>10.5f}")
print("Both columns fall steadily: the surviving terms cancel at the rate")
print("the product-form limit requires.")
