"""Stationary estimation from trajectories: time averages with batch-means
confidence intervals, empirical (conditional) MGFs, and distribution-fit
statistics for the scaled coordinates.

All point estimates are ratios of post-warmup time integrals.  Confidence
intervals come from the method of batch means: the event horizon is split
into equal-count batches, each batch yields one ratio estimate, and a
Student-t interval (99% by default) is formed from their spread.
Conditional MGFs are occupation-time weighted: the estimate of
E[g(Z) | A] is the integral of g over the time spent in A divided by that
occupation time, matching the stationary-expectation semantics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import LimitLaw, NetworkInstance
from .simulator import Trajectory

__all__ = [
    "StationaryEstimate",
    "MgfEstimate",
    "FitReport",
    "summarize",
    "empirical_mgf",
    "fit_exponential",
    "scaled_samples",
]

CONFIDENCE = 0.99
MIN_BATCHES = 8


def _t_quantile(n: int) -> float:
    return float(stats.t.ppf(0.5 + CONFIDENCE / 2.0, n - 1))


def _batch_ci(batch_values: np.ndarray) -> float:
    """99% half-width from batch means (rows may be multidimensional)."""
    n = batch_values.shape[0]
    if n < 2:
        return np.inf
    sd = batch_values.std(axis=0, ddof=1)
    return _t_quantile(n) * sd / np.sqrt(n)


@dataclass
class StationaryEstimate:
    """Time-average stationary estimates with 99% batch-means half-widths.

    ``scaled_mean`` applies the multi-scale weights (r, r, r, r^2, r);
    ``z1_moments[p-1]`` is the estimate of E[(r Z1)^p] for p = 1..3 and
    ``z4_moments`` the same for r^2 Z4.  ``beta_hat`` holds the occupation
    fractions of the five idle events in the order beta1..beta5.
    """

    r: float
    mean_z: np.ndarray
    mean_z_ci: np.ndarray
    scaled_mean: np.ndarray
    scaled_mean_ci: np.ndarray
    z1_moments: np.ndarray
    z1_moments_ci: np.ndarray
    z4_moments: np.ndarray
    z4_moments_ci: np.ndarray
    beta_hat: np.ndarray
    beta_hat_ci: np.ndarray
    utilization: np.ndarray
    utilization_ci: np.ndarray
    throughput: np.ndarray
    throughput_ci: np.ndarray
    high_priority_sq: float
    high_priority_sq_ci: float
    total_time: float
    n_batches_used: int


def summarize(traj: Trajectory, inst: NetworkInstance | None = None) -> StationaryEstimate:
    """Reduce a trajectory to stationary point estimates with CIs.

    Raises ``ValueError`` when fewer than 8 nonempty batches are available
    (the horizon was too short for a meaningful interval).
    """
    inst = inst or traj.inst
    keep = traj.acc_time > 0.0
    n_used = int(keep.sum())
    if n_used < MIN_BATCHES:
        raise ValueError(
            f"horizon too short: only {n_used} nonempty batches (need >= {MIN_BATCHES})"
        )
    t = traj.acc_time[keep]
    T = t.sum()
    r = inst.r
    scalevec = np.array([r, r, r, r * r, r])

    bz = traj.acc_z[keep] / t[:, None]
    mean_z = traj.acc_z[keep].sum(axis=0) / T
    mean_ci = _batch_ci(bz)

    p_weights_1 = np.array([r, r**2, r**3])
    p_weights_4 = np.array([r**2, r**4, r**6])
    b1 = traj.acc_zpow[keep, 0, :] / t[:, None] * p_weights_1
    b4 = traj.acc_zpow[keep, 1, :] / t[:, None] * p_weights_4
    z1_m = traj.acc_zpow[keep, 0, :].sum(axis=0) / T * p_weights_1
    z4_m = traj.acc_zpow[keep, 1, :].sum(axis=0) / T * p_weights_4

    bocc = traj.acc_occ[keep] / t[:, None]
    beta_hat = traj.acc_occ[keep].sum(axis=0) / T

    bbusy = traj.acc_busy[keep] / t[:, None]
    util = traj.acc_busy[keep].sum(axis=0) / T

    bthr = traj.acc_counts[keep, 1:] / t[:, None]
    thr = traj.acc_counts[keep, 1:].sum(axis=0) / T

    bhp = traj.acc_hp2[keep] / t
    hp2 = traj.acc_hp2[keep].sum() / T

    return StationaryEstimate(
        r=r,
        mean_z=mean_z,
        mean_z_ci=mean_ci,
        scaled_mean=scalevec * mean_z,
        scaled_mean_ci=scalevec * mean_ci,
        z1_moments=z1_m,
        z1_moments_ci=_batch_ci(b1),
        z4_moments=z4_m,
        z4_moments_ci=_batch_ci(b4),
        beta_hat=beta_hat,
        beta_hat_ci=_batch_ci(bocc),
        utilization=util,
        utilization_ci=_batch_ci(bbusy),
        throughput=thr,
        throughput_ci=_batch_ci(bthr),
        high_priority_sq=float(hp2),
        high_priority_sq_ci=float(_batch_ci(bhp)),
        total_time=float(T),
        n_batches_used=n_used,
    )


@dataclass
class MgfEstimate:
    """(Conditional) MGF values at one theta.

    ``phi`` is the time average of exp(<theta, z>) and ``phi_k[k-1]`` the
    conditional version on the k-th idle event; ``psi`` variants use the
    residual-augmented test function (present only when the trajectory
    tracked it).  Exact chain evaluations carry zero CIs and
    ``source='ctmc'``.  Absent conditionals (conditioning event never
    observed, or below the occupation floor) are NaN with
    ``phi_k_present`` false.
    """

    theta: np.ndarray
    phi: float
    phi_ci: float
    phi_k: np.ndarray
    phi_k_ci: np.ndarray
    phi_k_present: np.ndarray
    occupation_time: np.ndarray
    psi: float | None = None
    psi_ci: float | None = None
    psi_k: np.ndarray | None = None
    psi_k_ci: np.ndarray | None = None
    source: str = "simulation"

    def bar_values(self):
        """(value, five conditional values, label) for residual assembly.

        Prefers the residual-augmented estimates when available; exact
        chain MGFs flow through the same interface.
        """
        if self.psi is not None:
            return self.psi, self.psi_k, "psi"
        return self.phi, self.phi_k, "phi"


def _ratio_ci(num_batches, den_batches):
    ok = den_batches > 0
    if ok.sum() < 2:
        return np.inf
    vals = num_batches[ok] / den_batches[ok]
    return _batch_ci(vals)


def empirical_mgf(
    traj: Trajectory,
    inst: NetworkInstance | None = None,
    thetas=None,
    occupation_floor: float = 0.0,
) -> list[MgfEstimate]:
    """Occupation-weighted MGF estimates at the trajectory's theta list.

    ``thetas`` may re-request a subset (matched exactly against the
    trajectory's accumulators); passing vectors the run did not track is an
    error, as is a trajectory run without theta accumulation.  A
    conditional estimate is reported absent when its conditioning event's
    occupation time is below ``occupation_floor`` (honest-uncertainty
    guard: the station-2 idle event has probability r^2 and can be very
    rare at small r).
    """
    inst = inst or traj.inst
    if traj.thetas is None:
        raise ValueError("trajectory carries no MGF accumulators; rerun with thetas=")
    if thetas is None:
        rows = list(range(traj.thetas.shape[0]))
    else:
        rows = []
        for th in thetas:
            arr = np.asarray(getattr(th, "theta", th), dtype=float)
            match = np.where(
                np.all(np.abs(traj.thetas - arr[None, :]) <= 1e-14, axis=1)
            )[0]
            if match.size == 0:
                raise ValueError(f"theta {arr} was not accumulated in this trajectory")
            rows.append(int(match[0]))

    keep = traj.acc_time > 0.0
    t = traj.acc_time[keep]
    T = t.sum()
    occ_total = traj.acc_occ[keep].sum(axis=0)

    out = []
    for j in rows:
        phi = traj.acc_g[keep, j].sum() / T
        phi_ci = float(_batch_ci(traj.acc_g[keep, j] / t))
        phi_k = np.full(5, np.nan)
        phi_k_ci = np.full(5, np.inf)
        present = np.zeros(5, dtype=bool)
        for k in range(5):
            if occ_total[k] > max(occupation_floor, 0.0):
                phi_k[k] = traj.acc_gc[keep, j, k].sum() / occ_total[k]
                phi_k_ci[k] = float(
                    _ratio_ci(traj.acc_gc[keep, j, k], traj.acc_occ[keep, k])
                )
                present[k] = True
        est = MgfEstimate(
            theta=traj.thetas[j].copy(),
            phi=float(phi),
            phi_ci=phi_ci,
            phi_k=phi_k,
            phi_k_ci=phi_k_ci,
            phi_k_present=present,
            occupation_time=occ_total.copy(),
        )
        if traj.psi_included:
            est.psi = float(traj.acc_f[keep, j].sum() / T)
            est.psi_ci = float(_batch_ci(traj.acc_f[keep, j] / t))
            psi_k = np.full(5, np.nan)
            psi_k_ci = np.full(5, np.inf)
            for k in range(5):
                if present[k]:
                    psi_k[k] = traj.acc_fc[keep, j, k].sum() / occ_total[k]
                    psi_k_ci[k] = float(
                        _ratio_ci(traj.acc_fc[keep, j, k], traj.acc_occ[keep, k])
                    )
            est.psi_k = psi_k
            est.psi_k_ci = psi_k_ci
        out.append(est)
    return out


@dataclass(frozen=True)
class FitReport:
    ks1: float
    ks4: float
    corr: float
    n: int


def scaled_samples(traj: Trajectory, inst: NetworkInstance | None = None, thin: int = 1):
    """(r*Z1, r^2*Z4) sample pairs from the trajectory's time-spaced
    snapshots, optionally thinned further."""
    inst = inst or traj.inst
    if traj.snapshots is None or traj.snapshots.shape[0] == 0:
        raise ValueError("trajectory has no snapshots; rerun with snapshot_spacing > 0")
    snaps = traj.snapshots[:: max(int(thin), 1)]
    r = inst.r
    return r * snaps[:, 0].astype(float), r * r * snaps[:, 3].astype(float)


def fit_exponential(
    z1_scaled, z4_scaled, law: LimitLaw, min_samples: int = 10_000
) -> FitReport:
    """Kolmogorov-Smirnov distances of the scaled coordinates against their
    limiting exponentials, plus their Pearson correlation.

    Samples should be effectively spaced (snapshots at a spacing comparable
    to the slow station's relaxation time ~ 1/r^2); the test statistics are
    still consistent under dependence, but the ``min_samples`` floor guards
    against vacuous fits.
    """
    z1 = np.asarray(z1_scaled, dtype=float)
    z4 = np.asarray(z4_scaled, dtype=float)
    if z1.shape != z4.shape:
        raise ValueError("sample arrays must have matching shape")
    n = z1.shape[0]
    if n < min_samples:
        raise ValueError(f"too few samples: {n} < {min_samples}")
    ks1 = stats.kstest(z1, "expon", args=(0.0, law.d1)).statistic
    ks4 = stats.kstest(z4, "expon", args=(0.0, law.d4)).statistic
    corr = float(np.corrcoef(z1, z4)[0, 1])
    return FitReport(ks1=float(ks1), ks4=float(ks4), corr=corr, n=n)
