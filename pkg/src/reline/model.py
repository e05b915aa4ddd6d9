"""Network parameters, multi-scale scaling, stability, and limit constants.

The network is a two-station reentrant line: every job follows the route
1 -> 2 -> 3 -> 4 -> 5 and leaves.  Classes 1, 3, 5 are served at station 1,
classes 2, 4 at station 2, under the preemptive-resume static buffer
priority ranking {(5,3,1),(2,4)} (class 5 highest at station 1, class 2
highest at station 2).

A family of networks indexed by r in (0,1) is built by shrinking the base
mean service times: station-1 classes by (1-r), station-2 classes by
(1-r^2).  With the normalization m1+m3+m5 = m2+m4 = 1 and alpha1 = 1 the
loads satisfy 1-rho1 = r and 1-rho2 = r^2 exactly, so the two stations
approach critical load at different rates.

As r -> 0 the scaled queue lengths (r*Z1, r*Z2, r*Z3, r^2*Z4, r*Z5)
converge to (Z1*, 0, 0, Z4*, 0) with Z1*, Z4* independent exponentials of
means d1, d4 computed here from base means and SCVs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DistributionSpec, exponential, spec_from_config

__all__ = [
    "BaseParams",
    "NetworkInstance",
    "LimitLaw",
    "StabilityReport",
    "UnstableError",
    "scale",
    "check_stability",
    "stability_report",
    "limit_constants",
    "limit_mgf",
    "symmetric_exponential_base",
]

ATOL = 1e-12  # normalization / identity tolerance for closed-form checks


class UnstableError(ValueError):
    """Raised when an operation requires a stable instance."""

    def __init__(self, report: "StabilityReport"):
        self.report = report
        super().__init__(
            "unstable instance: rho1=%.6g rho2=%.6g rho_v=%.6g"
            % (report.rho1, report.rho2, report.rho_v)
        )


@dataclass(frozen=True)
class BaseParams:
    """Base (r-independent) network parameters.

    ``m`` holds the five base mean service times; ``dist_e`` and ``dist_s``
    are the unit-mean interarrival and per-class service distributions
    (actual times are ``T_e/alpha1`` and ``m_k * T_k``).  When
    ``heavy_traffic`` is set the normalization m1+m3+m5 = m2+m4 = 1 and the
    virtual-station margin m2+m5 < 1 are enforced; otherwise any positive
    parameters are accepted (useful for validating the simulator against
    the exact chain at moderate loads).
    """

    alpha1: float
    m: tuple[float, float, float, float, float]
    dist_e: DistributionSpec
    dist_s: tuple[DistributionSpec, ...]
    heavy_traffic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(float(v) for v in self.m))
        object.__setattr__(self, "dist_s", tuple(self.dist_s))
        if len(self.m) != 5:
            raise ValueError("m must have 5 entries")
        if len(self.dist_s) != 5:
            raise ValueError("dist_s must have 5 entries")
        if self.alpha1 <= 0:
            raise ValueError("alpha1 must be positive")
        if any(mk <= 0 for mk in self.m):
            raise ValueError("all mean service times must be positive")
        if self.heavy_traffic:
            m1, m2, m3, m4, m5 = self.m
            if abs(m1 + m3 + m5 - 1.0) > ATOL or abs(m2 + m4 - 1.0) > ATOL:
                raise ValueError(
                    "heavy-traffic mode requires m1+m3+m5 = 1 and m2+m4 = 1 "
                    f"(got {m1 + m3 + m5!r} and {m2 + m4!r})"
                )
            if m2 + m5 >= 1.0:
                # Virtual-station violation: the policy is unstable on the
                # whole family, so flag it as such (CLI exit code 2).
                raise UnstableError(
                    StabilityReport(
                        rho1=self.alpha1 * (m1 + m3 + m5),
                        rho2=self.alpha1 * (m2 + m4),
                        rho_v=self.alpha1 * (m2 + m5),
                        stable=False,
                    )
                )

    @property
    def scv_e(self) -> float:
        return self.dist_e.scv

    @property
    def scv_s(self) -> np.ndarray:
        return np.array([d.scv for d in self.dist_s])

    def all_exponential(self) -> bool:
        return self.dist_e.family == "exponential" and all(
            d.family == "exponential" for d in self.dist_s
        )

    @classmethod
    def from_config(cls, cfg: dict) -> "BaseParams":
        dist_e = spec_from_config(cfg.get("dist_e", {"family": "exponential"}))
        dist_s_cfg = cfg.get("dist_s")
        if dist_s_cfg is None:
            dist_s = tuple(exponential() for _ in range(5))
        elif isinstance(dist_s_cfg, dict):
            dist_s = tuple(spec_from_config(dist_s_cfg) for _ in range(5))
        else:
            dist_s = tuple(spec_from_config(c) for c in dist_s_cfg)
        return cls(
            alpha1=float(cfg.get("alpha1", 1.0)),
            m=tuple(cfg["m"]),
            dist_e=dist_e,
            dist_s=dist_s,
            heavy_traffic=bool(cfg.get("heavy_traffic", True)),
        )


@dataclass(frozen=True)
class StabilityReport:
    rho1: float
    rho2: float
    rho_v: float
    stable: bool


@dataclass(frozen=True)
class NetworkInstance:
    """A concrete network at heavy-traffic index r.

    ``m_r`` are the scaled mean service times, ``mu_r`` the corresponding
    rates.  ``beta`` holds the five excess capacities: beta_k is the
    stationary probability that the station owning class k is idle of all
    work at priority level k and higher, e.g. beta1 = P(Z1=Z3=Z5=0) = 1-rho1
    and beta4 = P(Z2=Z4=0) = 1-rho2.
    """

    base: BaseParams
    r: float
    m_r: tuple[float, ...]
    mu_r: tuple[float, ...]
    rho1: float
    rho2: float
    rho_v: float
    beta: tuple[float, ...]

    @property
    def alpha1(self) -> float:
        return self.base.alpha1

    def m_r_array(self) -> np.ndarray:
        return np.array(self.m_r)

    def mu_r_array(self) -> np.ndarray:
        return np.array(self.mu_r)

    def beta_array(self) -> np.ndarray:
        return np.array(self.beta)


def scale(base: BaseParams, r: float) -> NetworkInstance:
    """Build the network at index r: m_k -> (1-r) m_k at station 1 and
    (1-r^2) m_k at station 2.

    Raises ``ValueError`` for r outside (0,1) and ``UnstableError`` if the
    resulting loads are not all below 1 (possible only outside heavy-traffic
    mode, where normalization is not enforced).
    """
    if not (0.0 < r < 1.0):
        raise ValueError(f"r must lie in (0,1), got {r}")
    m1, m2, m3, m4, m5 = base.m
    m_r = (
        (1.0 - r) * m1,
        (1.0 - r * r) * m2,
        (1.0 - r) * m3,
        (1.0 - r * r) * m4,
        (1.0 - r) * m5,
    )
    report = _stability_from_scaled(base.alpha1, m_r)
    if not report.stable:
        raise UnstableError(report)
    a = base.alpha1
    beta = (
        1.0 - a * (m_r[0] + m_r[2] + m_r[4]),  # beta1 = 1 - rho1
        1.0 - a * m_r[1],                      # beta2
        1.0 - a * (m_r[2] + m_r[4]),           # beta3
        1.0 - a * (m_r[1] + m_r[3]),           # beta4 = 1 - rho2
        1.0 - a * m_r[4],                      # beta5
    )
    return NetworkInstance(
        base=base,
        r=float(r),
        m_r=m_r,
        mu_r=tuple(1.0 / mk for mk in m_r),
        rho1=report.rho1,
        rho2=report.rho2,
        rho_v=report.rho_v,
        beta=beta,
    )


def _stability_from_scaled(alpha1: float, m_r) -> StabilityReport:
    rho1 = alpha1 * (m_r[0] + m_r[2] + m_r[4])
    rho2 = alpha1 * (m_r[1] + m_r[3])
    rho_v = alpha1 * (m_r[1] + m_r[4])
    return StabilityReport(rho1, rho2, rho_v, rho1 < 1.0 and rho2 < 1.0 and rho_v < 1.0)


def check_stability(inst: NetworkInstance) -> StabilityReport:
    """Stability report for an instance: stable iff rho1, rho2 and the
    virtual-station intensity rho_v = alpha1(m2+m5) are all below 1."""
    return StabilityReport(
        inst.rho1, inst.rho2, inst.rho_v,
        inst.rho1 < 1.0 and inst.rho2 < 1.0 and inst.rho_v < 1.0,
    )


def stability_report(base: BaseParams, r: float = 0.0) -> StabilityReport:
    """Stability report at index r without constructing the instance.

    ``r=0`` reports on the unscaled base itself (the critical-load end of
    the family), which is how configurations are screened before any
    simulation is attempted.
    """
    if not (0.0 <= r < 1.0):
        raise ValueError(f"r must lie in [0,1), got {r}")
    m1, m2, m3, m4, m5 = base.m
    m_r = (
        (1.0 - r) * m1,
        (1.0 - r * r) * m2,
        (1.0 - r) * m3,
        (1.0 - r * r) * m4,
        (1.0 - r) * m5,
    )
    return _stability_from_scaled(base.alpha1, m_r)


@dataclass(frozen=True)
class LimitLaw:
    """Means of the limiting exponential marginals.

    r*Z1 converges in distribution to an exponential of mean ``d1`` and
    r^2*Z4 to an exponential of mean ``d4``; the two coordinates are
    independent in the limit.  ``denom`` is m1 + m3 - m5*m2/m4, the
    structural constant that must be positive for the d1 formula.
    """

    d1: float
    d4: float
    denom: float


def structural_denominator(base: BaseParams) -> float:
    m1, m2, m3, m4, m5 = base.m
    return m1 + m3 - m5 * m2 / m4


def limit_constants(base: BaseParams) -> LimitLaw:
    """Exact limit means d1, d4 from base means and SCVs.

    d4 depends only on the station-2 data; d1 mixes all five classes and the
    interarrival SCV through the structural denominator D = m1+m3-m5*m2/m4.
    Instances with D <= 0 are refused: the closed form is only validated for
    D > 0.
    """
    m1, m2, m3, m4, m5 = base.m
    D = structural_denominator(base)
    if D <= 0.0:
        raise ValueError(
            "limit formula outside validated regime: m1+m3-m5*m2/m4 = "
            f"{D!r} <= 0"
        )
    ce2 = base.dist_e.scv
    c2 = [d.scv for d in base.dist_s]
    a = base.alpha1
    d1 = (a / (2.0 * D)) * (
        D * D * ce2
        + m1 * m1 * c2[0]
        + m3 * m3 * c2[2]
        + m5 * m5 * c2[4]
        + (m5 / m4) ** 2 * (m2 * m2 * c2[1] + m4 * m4 * c2[3])
    )
    d4 = (a / (2.0 * m4)) * ((m2 + m4) ** 2 * ce2 + m2 * m2 * c2[1] + m4 * m4 * c2[3])
    return LimitLaw(d1=d1, d4=d4, denom=D)


def limit_mgf(law: LimitLaw, eta1: float, eta4: float) -> float:
    """MGF of the limit vector at (eta1, eta4) <= 0:
    1 / ((1 - d1*eta1) * (1 - d4*eta4))."""
    if eta1 > 0 or eta4 > 0:
        raise ValueError("eta1 and eta4 must be nonpositive")
    return 1.0 / ((1.0 - law.d1 * eta1) * (1.0 - law.d4 * eta4))


def symmetric_exponential_base(alpha1: float = 1.0) -> BaseParams:
    """The canonical test instance: m = (1/3, 1/2, 1/3, 1/2, 1/3), all
    distributions exponential."""
    third = 1.0 / 3.0
    return BaseParams(
        alpha1=alpha1,
        m=(third, 0.5, third, 0.5, third),
        dist_e=exponential(),
        dist_s=tuple(exponential() for _ in range(5)),
        heavy_traffic=True,
    )
