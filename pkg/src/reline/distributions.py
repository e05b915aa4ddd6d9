"""Unit-mean positive distribution families.

Every family here has mean exactly 1, a known squared coefficient of
variation (SCV), closed-form raw moments up to order 4, and a closed-form
Laplace transform ``E[exp(-s*T)]``.  Interarrival and service times in the
network are built by rescaling these unitized variables, so the families
double as the inputs to the transform calculus (root-solving needs the
Laplace transform and its derivative).

Samplers consume exactly one uniform/standard variate position per draw so
that drawing ``n`` values in one call or in ``n`` calls yields the same
sequence from a given generator.  Reproducibility of simulations depends on
this property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DistributionSpec",
    "exponential",
    "erlang",
    "hyperexp2",
    "deterministic",
    "uniform",
    "spec_from_config",
    "make_streams",
]

_SUPPORTED = ("exponential", "erlang", "hyperexp2", "deterministic", "uniform")


@dataclass(frozen=True)
class DistributionSpec:
    """A unit-mean positive distribution with exact transform data.

    Attributes
    ----------
    family:
        One of ``exponential``, ``erlang``, ``hyperexp2``, ``deterministic``,
        ``uniform``.
    scv:
        Squared coefficient of variation, Var(T)/E[T]^2 = Var(T) here.
    params:
        Family-specific parameters (Erlang shape, hyperexponential branch
        probabilities/rates).  Empty for parameter-free families.
    """

    family: str
    scv: float
    params: tuple = field(default=())

    def __post_init__(self):
        if self.family not in _SUPPORTED:
            raise ValueError(f"unsupported family {self.family!r}")
        if self.scv < 0:
            raise ValueError("scv must be nonnegative")

    # -- moments -----------------------------------------------------------

    @property
    def mean(self) -> float:
        return 1.0

    def raw_moment(self, order: int) -> float:
        """Closed-form raw moment E[T^order] for order in 1..4."""
        if order not in (1, 2, 3, 4):
            raise ValueError(f"order must be in 1..4, got {order}")
        n = order
        if self.family == "deterministic":
            return 1.0
        if self.family == "exponential":
            return float(math.factorial(n))
        if self.family == "erlang":
            k = self.params[0]
            # E[T^n] = Gamma(k+n) / (Gamma(k) * k^n) for Gamma(k, 1/k).
            num = 1.0
            for i in range(n):
                num *= (k + i)
            return num / k**n
        if self.family == "uniform":
            # Uniform on (0, 2).
            return 2.0**n / (n + 1)
        if self.family == "hyperexp2":
            p1, p2, lam1, lam2 = self.params
            return math.factorial(n) * (p1 / lam1**n + p2 / lam2**n)
        raise AssertionError(self.family)

    # -- Laplace transform -------------------------------------------------

    @property
    def laplace_bound(self) -> float:
        """The transform E[exp(-s*T)] is finite for s > -laplace_bound."""
        if self.family == "exponential":
            return 1.0
        if self.family == "erlang":
            return float(self.params[0])
        if self.family == "hyperexp2":
            return min(self.params[2], self.params[3])
        return math.inf  # bounded support: entire real line

    def laplace(self, s: float) -> float:
        """E[exp(-s*T)] in closed form.  Raises outside the domain."""
        if s <= -self.laplace_bound:
            raise ValueError(
                f"s={s} outside transform domain (requires s > {-self.laplace_bound})"
            )
        if self.family == "deterministic":
            return math.exp(-s)
        if self.family == "exponential":
            return 1.0 / (1.0 + s)
        if self.family == "erlang":
            k = self.params[0]
            return (k / (k + s)) ** k
        if self.family == "uniform":
            if s == 0.0:
                return 1.0
            # (1 - exp(-2s)) / (2s), stable via expm1.
            return -math.expm1(-2.0 * s) / (2.0 * s)
        if self.family == "hyperexp2":
            p1, p2, lam1, lam2 = self.params
            return p1 * lam1 / (lam1 + s) + p2 * lam2 / (lam2 + s)
        raise AssertionError(self.family)

    def laplace_deriv(self, s: float) -> float:
        """d/ds E[exp(-s*T)] = -E[T exp(-s*T)], closed form."""
        if s <= -self.laplace_bound:
            raise ValueError("s outside transform domain")
        if self.family == "deterministic":
            return -math.exp(-s)
        if self.family == "exponential":
            return -1.0 / (1.0 + s) ** 2
        if self.family == "erlang":
            k = self.params[0]
            return -((k / (k + s)) ** (k + 1))
        if self.family == "uniform":
            if abs(s) < 1e-6:
                # -E[T e^{-sT}] = -(1 - (4/3)s + s^2 - (8/15)s^3 + ...)
                return -1.0 + (4.0 / 3.0) * s - s * s + (8.0 / 15.0) * s**3
            e = math.expm1(-2.0 * s)
            # d/ds [-e/(2s)] with e = expm1(-2s)
            return (2.0 * s * math.exp(-2.0 * s) + e) / (2.0 * s * s)
        if self.family == "hyperexp2":
            p1, p2, lam1, lam2 = self.params
            return -(p1 * lam1 / (lam1 + s) ** 2 + p2 * lam2 / (lam2 + s) ** 2)
        raise AssertionError(self.family)

    # -- sampling ----------------------------------------------------------

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw i.i.d. unit-mean variates.

        One variate position is consumed per draw regardless of batching,
        so chunked and scalar consumption see the same stream.
        """
        n = 1 if size is None else int(size)
        if self.family == "deterministic":
            out = np.ones(n)
        elif self.family == "exponential":
            out = rng.standard_exponential(n)
        elif self.family == "erlang":
            k = self.params[0]
            out = rng.standard_gamma(k, n) / k
        elif self.family == "uniform":
            out = 2.0 * rng.random(n)
        elif self.family == "hyperexp2":
            p1, p2, lam1, lam2 = self.params
            # Single-uniform mixture draw: conditionally on u < p1 the ratio
            # u/p1 is again uniform, so one variate feeds both the branch
            # choice and the exponential inversion.
            u = rng.random(n)
            lo = u < p1
            out = np.empty(n)
            out[lo] = -np.log(u[lo] / p1) / lam1
            out[~lo] = -np.log((u[~lo] - p1) / p2) / lam2
        else:
            raise AssertionError(self.family)
        if size is None:
            return float(out[0])
        return out

    def to_config(self) -> dict:
        cfg = {"family": self.family}
        if self.family == "erlang":
            cfg["k"] = int(self.params[0])
        elif self.family == "hyperexp2":
            cfg["scv"] = self.scv
        return cfg


def exponential() -> DistributionSpec:
    """Unit-mean exponential (SCV 1)."""
    return DistributionSpec("exponential", 1.0)


def erlang(k: int) -> DistributionSpec:
    """Erlang with k phases, mean 1 (SCV 1/k)."""
    if k < 1 or int(k) != k:
        raise ValueError("erlang shape k must be a positive integer")
    return DistributionSpec("erlang", 1.0 / k, (int(k),))


def deterministic() -> DistributionSpec:
    """Point mass at 1 (SCV 0)."""
    return DistributionSpec("deterministic", 0.0)


def uniform() -> DistributionSpec:
    """Uniform on (0, 2), mean 1 (SCV 1/3)."""
    return DistributionSpec("uniform", 1.0 / 3.0)


def hyperexp2(scv: float) -> DistributionSpec:
    """Balanced-means two-phase hyperexponential with the given SCV > 1.

    Branch probabilities p_i = (1 ± delta)/2 with delta chosen to hit the
    target SCV, and rates lambda_i = 2 p_i so each branch contributes mean
    1/2 (balanced means).
    """
    if scv <= 1.0:
        raise ValueError("hyperexp2 requires scv > 1")
    delta = math.sqrt((scv - 1.0) / (scv + 1.0))
    p1 = 0.5 * (1.0 + delta)
    p2 = 1.0 - p1
    lam1 = 2.0 * p1
    lam2 = 2.0 * p2
    return DistributionSpec("hyperexp2", scv, (p1, p2, lam1, lam2))


def spec_from_config(cfg: dict) -> DistributionSpec:
    """Build a spec from a config block like {"family": "erlang", "k": 2}."""
    family = cfg.get("family")
    if family == "exponential":
        return exponential()
    if family == "erlang":
        return erlang(cfg["k"])
    if family == "deterministic":
        return deterministic()
    if family == "uniform":
        return uniform()
    if family == "hyperexp2":
        return hyperexp2(cfg["scv"])
    raise ValueError(f"unknown distribution family {family!r}")


# Stream labels: the arrival sequence and the five service sequences are
# mutually independent, each with its own generator derived from the master
# seed by a fixed label (spawn key), so runs are reproducible and streams
# never interleave.
STREAM_ARRIVAL = 0


def make_streams(seed) -> list[np.random.Generator]:
    """Six independent generators: index 0 arrivals, 1..5 per-class service."""
    if isinstance(seed, np.random.SeedSequence):
        base_entropy, base_key = seed.entropy, tuple(seed.spawn_key)
    else:
        base_entropy, base_key = seed, ()
    return [
        np.random.default_rng(
            np.random.SeedSequence(entropy=base_entropy, spawn_key=base_key + (label,))
        )
        for label in range(6)
    ]
