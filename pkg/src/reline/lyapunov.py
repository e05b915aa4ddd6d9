"""Polynomial potential (Lyapunov) machinery for the moment bounds.

Two potentials drive the scaled-moment bounds.  The station-1 potential
weights the queue vector by w = (1, (m3-m5*m2/m4)/D, m3/D, 0, m5/D) with
D = m1+m3-m5*m2/m4; applying the generator produces a leading drift factor
(the "bracket") that is at most -r/(1-r) away from the station-1 idle
event.  The station-2 potential uses v = ((m2+m4)/m4, (m2+m4)/m4, 1, 1, 0)
and its leading factor collapses exactly to
(1/m4) * (-r^2/(1-r^2) + 1{z2=z4=0}/(1-r^2)).

Both identities are checked pointwise here (exponential case, heavy-traffic
normalization); the empirical side is a simulation sweep of the scaled
moments across decreasing r, flagged when a statistically significant
growth trend contradicts uniform boundedness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BaseParams, NetworkInstance, check_stability, structural_denominator
from .simulator import run
from .estimators import summarize

__all__ = [
    "DriftReport",
    "station1_weights",
    "station2_weights",
    "f1_value",
    "f2_value",
    "drift_bracket_station1",
    "drift_bracket_station2",
    "drift_report",
    "station1_bracket_box",
    "station2_identity_box",
    "MomentRow",
    "MomentSweep",
    "moment_sweep",
]

TOL = 1e-12


def station1_weights(base: BaseParams) -> np.ndarray:
    """Weights of the station-1 potential; D = m1+m3-m5*m2/m4 must be > 0."""
    m1, m2, m3, m4, m5 = base.m
    D = structural_denominator(base)
    if D <= 0.0:
        raise ValueError(f"station-1 potential requires m1+m3-m5*m2/m4 > 0, got {D!r}")
    return np.array([1.0, (m3 - m5 * m2 / m4) / D, m3 / D, 0.0, m5 / D])


def station2_weights(base: BaseParams) -> np.ndarray:
    m = base.m
    w = (m[1] + m[3]) / m[3]
    return np.array([w, w, 1.0, 1.0, 0.0])


def f1_value(z, r: float, n: int, base: BaseParams) -> float:
    """Station-1 potential (1/(n+1)) r^{n-1} (w . z)^{n+1}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    w = station1_weights(base)
    s = float(np.dot(w, np.asarray(z, dtype=float)))
    return r ** (n - 1) * s ** (n + 1) / (n + 1)


def f2_value(z, r: float, n: int, base: BaseParams) -> float:
    """Station-2 potential (1/(n+1)) r^{2(n-1)} (v . z)^{n+1}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    v = station2_weights(base)
    s = float(np.dot(v, np.asarray(z, dtype=float)))
    return r ** (2 * (n - 1)) * s ** (n + 1) / (n + 1)


@dataclass(frozen=True)
class DriftReport:
    """Pointwise drift-factor check at one state.

    ``bracket1`` is the station-1 leading drift factor and ``bound1`` its
    idle-event bound; satisfied1 means bracket1 <= bound1 + 1e-12.
    ``bracket2`` is the station-2 leading factor computed from rates and
    indicators and ``closed2`` its closed form; they must agree to 1e-12.
    """

    z: tuple
    bracket1: float
    bound1: float
    satisfied1: bool
    bracket2: float
    closed2: float
    satisfied2: bool


def _require_drift_instance(inst: NetworkInstance):
    if not inst.base.all_exponential():
        raise ValueError("drift evaluation is defined for the exponential case only")
    if not inst.base.heavy_traffic:
        raise ValueError("drift bounds use the heavy-traffic normalization")
    if not check_stability(inst).stable:
        raise ValueError("drift evaluation requires a stable instance")


def drift_bracket_station1(z, inst: NetworkInstance):
    """(bracket, bound, satisfied) for the station-1 drift factor at z.

    bracket = alpha1
              - (1/D)[mu1 m1 1{z1>0,z3=z5=0} + mu3 m3 1{z3>0,z5=0} + mu5 m5 1{z5>0}]
              + (m5/m4)(1/D)[mu2 m2 1{z2>0} + mu4 m4 1{z4>0,z2=0}]
    with base means m and scaled rates mu, so mu_k m_k = 1/(1-r) at station
    1 and 1/(1-r^2) at station 2.  The bound is
    -r/(1-r) + (1/D)(1/(1-r)) 1{z1=z3=z5=0}.
    """
    _require_drift_instance(inst)
    base = inst.base
    m1, m2, m3, m4, m5 = base.m
    D = structural_denominator(base)
    if D <= 0.0:
        raise ValueError("station-1 drift requires m1+m3-m5*m2/m4 > 0")
    mu = inst.mu_r
    z = np.asarray(z, dtype=np.int64)
    r = inst.r
    i1 = z[0] > 0 and z[2] == 0 and z[4] == 0
    i3 = z[2] > 0 and z[4] == 0
    i5 = z[4] > 0
    i2 = z[1] > 0
    i4 = z[3] > 0 and z[1] == 0
    bracket = (
        base.alpha1
        - (1.0 / D) * (mu[0] * m1 * i1 + mu[2] * m3 * i3 + mu[4] * m5 * i5)
        + (m5 / m4) * (1.0 / D) * (mu[1] * m2 * i2 + mu[3] * m4 * i4)
    )
    idle = z[0] == 0 and z[2] == 0 and z[4] == 0
    bound = -r / (1.0 - r) + (1.0 / D) * (1.0 / (1.0 - r)) * idle
    return float(bracket), float(bound), bool(bracket <= bound + TOL)


def drift_bracket_station2(z, inst: NetworkInstance):
    """(leading factor, closed form, satisfied) for station 2 at z.

    leading = alpha1 (m2+m4)/m4 - mu2 (m2/m4) 1{z2>0} - mu4 1{z4>0,z2=0}
    closed  = (1/m4) (-r^2/(1-r^2) + 1{z2=z4=0}/(1-r^2))

    The two agree exactly (the idle-event term carries the 1/(1-r^2)
    factor; off the idle event the factor is -r^2/((1-r^2) m4)).
    """
    _require_drift_instance(inst)
    base = inst.base
    m2, m4 = base.m[1], base.m[3]
    mu = inst.mu_r
    z = np.asarray(z, dtype=np.int64)
    r = inst.r
    lead = (
        base.alpha1 * (m2 + m4) / m4
        - mu[1] * (m2 / m4) * (z[1] > 0)
        - mu[3] * (z[3] > 0 and z[1] == 0)
    )
    r2 = r * r
    idle = z[1] == 0 and z[3] == 0
    closed = (1.0 / m4) * (-r2 / (1.0 - r2) + idle / (1.0 - r2))
    return float(lead), float(closed), bool(abs(lead - closed) <= TOL)


def drift_report(z, inst: NetworkInstance) -> DriftReport:
    b1, bd1, s1 = drift_bracket_station1(z, inst)
    b2, c2, s2 = drift_bracket_station2(z, inst)
    return DriftReport(
        z=tuple(int(v) for v in np.asarray(z)),
        bracket1=b1,
        bound1=bd1,
        satisfied1=s1,
        bracket2=b2,
        closed2=c2,
        satisfied2=s2,
    )


def _box_coords(box: int):
    grids = np.meshgrid(*[np.arange(box + 1)] * 5, indexing="ij")
    return [g.ravel() for g in grids]


def station1_bracket_box(inst: NetworkInstance, box: int):
    """Vectorized station-1 drift check over all states in [0..box]^5.

    Returns (all satisfied, worst margin bound - bracket); the margin is
    >= -1e-12 exactly when the inequality holds everywhere.
    """
    _require_drift_instance(inst)
    base = inst.base
    m1, m2, m3, m4, m5 = base.m
    D = structural_denominator(base)
    if D <= 0.0:
        raise ValueError("station-1 drift requires m1+m3-m5*m2/m4 > 0")
    mu = inst.mu_r
    r = inst.r
    z1, z2, z3, z4, z5 = _box_coords(box)
    i1 = (z1 > 0) & (z3 == 0) & (z5 == 0)
    i3 = (z3 > 0) & (z5 == 0)
    i5 = z5 > 0
    i2 = z2 > 0
    i4 = (z4 > 0) & (z2 == 0)
    bracket = (
        base.alpha1
        - (1.0 / D) * (mu[0] * m1 * i1 + mu[2] * m3 * i3 + mu[4] * m5 * i5)
        + (m5 / m4) * (1.0 / D) * (mu[1] * m2 * i2 + mu[3] * m4 * i4)
    )
    idle = (z1 == 0) & (z3 == 0) & (z5 == 0)
    bound = -r / (1.0 - r) + (1.0 / D) * (1.0 / (1.0 - r)) * idle
    margin = bound - bracket
    worst = float(margin.min())
    return worst >= -TOL, worst


def station2_identity_box(inst: NetworkInstance, box: int):
    """Vectorized station-2 leading-coefficient identity over [0..box]^5.

    Returns (holds everywhere to 1e-12, max abs deviation).
    """
    _require_drift_instance(inst)
    base = inst.base
    m2, m4 = base.m[1], base.m[3]
    mu = inst.mu_r
    r2 = inst.r**2
    z1, z2, z3, z4, z5 = _box_coords(box)
    lead = (
        base.alpha1 * (m2 + m4) / m4
        - mu[1] * (m2 / m4) * (z2 > 0)
        - mu[3] * ((z4 > 0) & (z2 == 0))
    )
    idle = (z2 == 0) & (z4 == 0)
    closed = (1.0 / m4) * (-r2 / (1.0 - r2) + idle / (1.0 - r2))
    dev = float(np.abs(lead - closed).max())
    return dev <= TOL, dev


@dataclass(frozen=True)
class MomentRow:
    r: float
    order: int
    z1_moment: float       # estimate of E[(r Z1)^order]
    z1_ci: float
    z4_moment: float       # estimate of E[(r^2 Z4)^order]
    z4_ci: float
    high_priority_sq: float
    high_priority_sq_ci: float


@dataclass
class MomentSweep:
    rows: list
    z1_increasing_trend: dict      # order -> bool (significant growth as r -> 0)
    z4_increasing_trend: dict
    high_priority_increasing: bool


def _growth_flag(r_values, estimates, cis):
    """True when the quantity grows significantly as r decreases.

    Weighted least-squares slope against r; a slope below -2.576 standard
    errors (99%) means the estimates rise along the sweep direction.
    """
    r_values = np.asarray(r_values, dtype=float)
    y = np.asarray(estimates, dtype=float)
    w = 1.0 / np.maximum(np.asarray(cis, dtype=float), 1e-12) ** 2
    W = w.sum()
    rbar = (w * r_values).sum() / W
    ybar = (w * y).sum() / W
    sxx = (w * (r_values - rbar) ** 2).sum()
    if sxx <= 0:
        return False
    slope = (w * (r_values - rbar) * (y - ybar)).sum() / sxx
    se = np.sqrt(1.0 / sxx)
    return bool(slope < -2.576 * se)


def moment_sweep(
    base: BaseParams,
    r_list,
    orders=(1, 2, 3),
    horizon: int = 20_000_000,
    seed=0,
    warmup: int | None = None,
) -> MomentSweep:
    """Simulated scaled moments E[(r Z1)^p], E[(r^2 Z4)^p] across the sweep.

    ``r_list`` must be strictly decreasing; each r gets an independent
    seeded run.  Uniform boundedness predicts no growth as r shrinks, so a
    statistically significant increasing trend is flagged.
    """
    from .model import scale  # local import to keep module load light

    r_list = list(r_list)
    if any(b >= a for a, b in zip(r_list, r_list[1:])):
        raise ValueError("r_list must be strictly decreasing")
    orders = sorted(set(int(p) for p in orders))
    if any(p not in (1, 2, 3) for p in orders):
        raise ValueError("orders must be within {1,2,3}")
    rows = []
    per_r = {}
    for i, r in enumerate(r_list):
        inst = scale(base, r)
        traj = run(inst, horizon, warmup=warmup, seed=(seed, i))
        est = summarize(traj)
        per_r[r] = est
        for p in orders:
            rows.append(
                MomentRow(
                    r=r,
                    order=p,
                    z1_moment=float(est.z1_moments[p - 1]),
                    z1_ci=float(est.z1_moments_ci[p - 1]),
                    z4_moment=float(est.z4_moments[p - 1]),
                    z4_ci=float(est.z4_moments_ci[p - 1]),
                    high_priority_sq=est.high_priority_sq,
                    high_priority_sq_ci=est.high_priority_sq_ci,
                )
            )
    z1_trend = {}
    z4_trend = {}
    for p in orders:
        sel = [row for row in rows if row.order == p]
        z1_trend[p] = _growth_flag(
            [row.r for row in sel], [row.z1_moment for row in sel], [row.z1_ci for row in sel]
        )
        z4_trend[p] = _growth_flag(
            [row.r for row in sel], [row.z4_moment for row in sel], [row.z4_ci for row in sel]
        )
    hp_rows = [per_r[r] for r in r_list]
    hp_flag = _growth_flag(
        r_list,
        [e.high_priority_sq for e in hp_rows],
        [e.high_priority_sq_ci for e in hp_rows],
    )
    return MomentSweep(
        rows=rows,
        z1_increasing_trend=z1_trend,
        z4_increasing_trend=z4_trend,
        high_priority_increasing=hp_flag,
    )
