"""Discrete-event simulation of the reentrant line under preemptive-resume
static buffer priority {(5,3,1),(2,4)}.

State is the queue-length vector plus residual times: the remaining
interarrival time and, per class, the remaining service requirement of the
job at the head of that class (at full service rate).  When a class is
empty its residual holds the full requirement of the next job to enter
service there, so every class always carries a valid residual and a
class-k completion consumes exactly one fresh draw from service stream k.

Two execution paths share one draw-consumption contract: a pure-Python
:func:`step` used by tests, and the compiled bulk loop behind :func:`run`.
Given the same seed they walk the same trajectory.

Simultaneous events (possible with deterministic distributions) are
processed in the fixed order: station-1 completion, station-2 completion,
arrival.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .distributions import make_streams
from .model import NetworkInstance, check_stability
from .mgf_calculus import ThetaVector, solve_gamma, solve_zeta

__all__ = [
    "SimState",
    "SimStreams",
    "EventRecord",
    "Trajectory",
    "initial_state",
    "step",
    "run",
]

CHUNK = 1 << 16

# Conditioning events tracked per interval, in storage order 0..4:
#   0: z1=z3=z5=0   (station 1 fully idle)        <-> beta1
#   1: z2=0                                         <-> beta2
#   2: z3=z5=0                                      <-> beta3
#   3: z2=z4=0      (station 2 fully idle)          <-> beta4
#   4: z5=0                                         <-> beta5
OCC_LABELS = ("z1=z3=z5=0", "z2=0", "z3=z5=0", "z2=z4=0", "z5=0")


class _ChunkedStream:
    """Sequential scalar access to a vector-sampled stream."""

    def __init__(self, spec, rng, scale: float):
        self.spec = spec
        self.rng = rng
        self.scale = scale
        self._buf = np.empty(0)
        self._pos = 0

    def next(self) -> float:
        if self._pos >= self._buf.shape[0]:
            self._buf = self.spec.sample(self.rng, CHUNK) * self.scale
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return float(v)

    def chunk(self) -> np.ndarray:
        return self.spec.sample(self.rng, CHUNK) * self.scale


@dataclass
class SimStreams:
    """One independent stream per primitive sequence (arrival + 5 services)."""

    arrival: _ChunkedStream
    service: list

    @classmethod
    def create(cls, inst: NetworkInstance, seed) -> "SimStreams":
        rngs = make_streams(seed)
        arrival = _ChunkedStream(inst.base.dist_e, rngs[0], 1.0 / inst.base.alpha1)
        service = [
            _ChunkedStream(inst.base.dist_s[k], rngs[k + 1], inst.m_r[k])
            for k in range(5)
        ]
        return cls(arrival=arrival, service=service)


@dataclass
class SimState:
    """Queue lengths, residual times, and the clock."""

    z: np.ndarray          # (5,) int64
    r_e1: float            # remaining interarrival time
    r_s: np.ndarray        # (5,) remaining service requirement per class
    clock: float = 0.0

    def serving(self) -> tuple[int, int]:
        """(station-1 class, station-2 class) in service; 0 means idle."""
        z = self.z
        k1 = 5 if z[4] > 0 else 3 if z[2] > 0 else 1 if z[0] > 0 else 0
        k2 = 2 if z[1] > 0 else 4 if z[3] > 0 else 0
        return k1, k2

    def copy(self) -> "SimState":
        return SimState(self.z.copy(), self.r_e1, self.r_s.copy(), self.clock)


@dataclass(frozen=True)
class EventRecord:
    kind: str            # "arrival" | "completion"
    klass: int           # class index 1..5 (1 for arrivals)
    time: float          # event epoch
    dt: float            # time since the previous event


def initial_state(inst: NetworkInstance, streams: SimStreams) -> SimState:
    """Empty system; residuals pre-drawn per the next-job convention."""
    r_s = np.array([streams.service[k].next() for k in range(5)])
    return SimState(
        z=np.zeros(5, dtype=np.int64),
        r_e1=streams.arrival.next(),
        r_s=r_s,
        clock=0.0,
    )


def step(state: SimState, inst: NetworkInstance, streams: SimStreams):
    """Advance to the next event.  Returns (new state, event record).

    Exactly one event fires: an arrival to class 1 or a completion at the
    class currently served at one of the stations.  A completed class-k job
    moves to class k+1 (departs for k = 5); the served classes' residuals
    decrease by the elapsed time while all others stay frozen.
    """
    s = state.copy()
    k1, k2 = s.serving()
    dt1 = s.r_s[k1 - 1] if k1 else np.inf
    dt2 = s.r_s[k2 - 1] if k2 else np.inf
    dta = s.r_e1
    if dt1 <= dt2 and dt1 <= dta:
        ev, kc, dt = "completion", k1, dt1
    elif dt2 <= dta:
        ev, kc, dt = "completion", k2, dt2
    else:
        ev, kc, dt = "arrival", 1, dta

    s.clock += dt
    s.r_e1 -= dt
    if k1:
        s.r_s[k1 - 1] -= dt
    if k2:
        s.r_s[k2 - 1] -= dt

    if ev == "arrival":
        s.z[0] += 1
        s.r_e1 = streams.arrival.next()
    else:
        s.z[kc - 1] -= 1
        if kc < 5:
            s.z[kc] += 1
        s.r_s[kc - 1] = streams.service[kc - 1].next()
    return s, EventRecord(kind=ev, klass=kc, time=s.clock, dt=dt)


@dataclass
class Trajectory:
    """Post-warmup time-integral accumulators of one simulation run.

    All ``acc_*`` arrays are indexed by batch (events split into
    ``n_batches`` equal-count batches after warmup).  Conditioning-event
    order follows :data:`OCC_LABELS`.  ``acc_g``/``acc_f`` hold integrals of
    exp(<theta, z>) and of the residual-augmented test function for each
    requested theta; the ``*_cond`` variants are restricted to the
    conditioning events.
    """

    inst: NetworkInstance
    horizon: int
    warmup: int
    seed: object
    n_batches: int
    acc_time: np.ndarray
    acc_z: np.ndarray
    acc_zpow: np.ndarray
    acc_hp2: np.ndarray
    acc_occ: np.ndarray
    acc_busy: np.ndarray
    acc_counts: np.ndarray
    thetas: np.ndarray | None = None
    gamma1s: np.ndarray | None = None
    zetas: np.ndarray | None = None
    acc_g: np.ndarray | None = None
    acc_gc: np.ndarray | None = None
    acc_f: np.ndarray | None = None
    acc_fc: np.ndarray | None = None
    psi_included: bool = False
    snapshot_spacing: float = 0.0
    snapshots: np.ndarray | None = None
    snapshot_residuals: np.ndarray | None = None  # (n, 6): interarrival + 5 service
    final_z: np.ndarray | None = None
    total_events: int = 0
    elapsed: float = 0.0

    @property
    def total_time(self) -> float:
        return float(self.acc_time.sum())


def _theta_matrix(thetas) -> np.ndarray:
    rows = []
    for th in thetas:
        arr = th.theta if isinstance(th, ThetaVector) else np.asarray(th, dtype=float)
        if arr.shape != (5,):
            raise ValueError("each theta must be a 5-vector")
        if np.any(arr > 0):
            raise ValueError("theta must be componentwise nonpositive")
        rows.append(arr)
    return np.array(rows).reshape(-1, 5)


def run(
    inst: NetworkInstance,
    horizon: int,
    warmup: int | None = None,
    seed=0,
    thetas=None,
    include_psi: bool = True,
    snapshot_spacing: float = 0.0,
    n_batches: int = 32,
) -> Trajectory:
    """Simulate ``horizon`` events and accumulate post-warmup statistics.

    Deterministic given (inst, horizon, warmup, seed): the same inputs
    yield bit-identical trajectories.  ``warmup`` defaults to 10% of the
    horizon.  ``thetas`` requests MGF accumulation at those exponents;
    ``include_psi`` adds the residual-augmented test function (needs the
    transform roots, solved here once per theta).
    """
    report = check_stability(inst)
    if not report.stable:
        raise ValueError(f"unstable instance: {report}")
    horizon = int(horizon)
    warmup = horizon // 10 if warmup is None else int(warmup)
    if not 0 <= warmup < horizon:
        raise ValueError("need 0 <= warmup < horizon")
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")

    streams = SimStreams.create(inst, seed)
    state = initial_state(inst, streams)

    B = int(n_batches)
    acc_time = np.zeros(B)
    acc_z = np.zeros((B, 5))
    acc_zpow = np.zeros((B, 2, 3))
    acc_hp2 = np.zeros(B)
    acc_occ = np.zeros((B, 5))
    acc_busy = np.zeros((B, 2))
    acc_counts = np.zeros((B, 6), dtype=np.int64)

    if thetas is not None:
        theta_mat = _theta_matrix(thetas)
    else:
        theta_mat = np.empty((0, 5))
    J = theta_mat.shape[0]
    gamma1s = np.zeros(J)
    zetas = np.zeros((J, 5))
    exp_mult = np.ones((J, 6))
    if J:
        base = inst.base
        for j in range(J):
            th = theta_mat[j]
            gamma1s[j] = solve_gamma(base.dist_e, th[0])
            for k in range(1, 6):
                zetas[j, k - 1] = solve_zeta(base.dist_s[k - 1], th, k)
            exp_mult[j, 0] = np.exp(th[0])
            for k in range(1, 5):
                exp_mult[j, k] = np.exp(th[k] - th[k - 1])
            exp_mult[j, 5] = np.exp(-th[4])
    acc_g = np.zeros((B, J))
    acc_gc = np.zeros((B, J, 5))
    use_psi = 1 if (J and include_psi) else 0
    acc_f = np.zeros((B, J if use_psi else 0))
    acc_fc = np.zeros((B, J if use_psi else 0, 5))
    gvals = np.ones(J)

    if snapshot_spacing < 0:
        raise ValueError("snapshot_spacing must be >= 0")
    if snapshot_spacing > 0:
        est_time = horizon / (5.0 * inst.base.alpha1)
        cap = int(est_time / snapshot_spacing) + 64
    else:
        cap = 1
    snap_buf = np.zeros((cap, 5), dtype=np.int32)
    snap_resid = np.zeros((cap, 6))
    snapbox = np.array([-1.0])

    z = state.z
    resid = np.empty(6)
    resid[0] = state.r_e1
    resid[1:] = state.r_s
    clockbox = np.array([0.0])
    counters = np.zeros(3, dtype=np.int64)
    cursors = np.zeros(6, dtype=np.int64)

    # Continue from the streams' current buffers so the compiled loop
    # consumes draws in exactly the order the reference stepper would.
    arr_chunk = streams.arrival._buf
    cursors[0] = streams.arrival._pos
    svc_chunks = np.empty((5, CHUNK))
    for k in range(5):
        svc_chunks[k] = streams.service[k]._buf
        cursors[k + 1] = streams.service[k]._pos

    mu_r = inst.mu_r_array()
    while True:
        rc = _kernels.sim_loop(
            inst.base.alpha1, mu_r, horizon, warmup, B,
            z, resid, clockbox, counters,
            arr_chunk, svc_chunks, cursors,
            acc_time, acc_z, acc_zpow, acc_hp2, acc_occ, acc_busy, acc_counts,
            theta_mat, exp_mult, gvals, gamma1s, zetas,
            acc_g, acc_gc, acc_f, acc_fc, use_psi,
            float(snapshot_spacing), snapbox, snap_buf, snap_resid,
        )
        if rc == _kernels.DONE:
            break
        if rc == _kernels.NEED_ARRIVAL:
            arr_chunk = streams.arrival.chunk()
            cursors[0] = 0
        elif rc == _kernels.SNAP_FULL:
            grown = np.zeros((snap_buf.shape[0] * 2, 5), dtype=np.int32)
            grown[: snap_buf.shape[0]] = snap_buf
            snap_buf = grown
            grown_r = np.zeros((snap_resid.shape[0] * 2, 6))
            grown_r[: snap_resid.shape[0]] = snap_resid
            snap_resid = grown_r
        else:
            k = rc - 1  # service class 1..5
            svc_chunks[k - 1] = streams.service[k - 1].chunk()
            cursors[k] = 0

    nsnap = int(counters[1])
    return Trajectory(
        inst=inst,
        horizon=horizon,
        warmup=warmup,
        seed=seed,
        n_batches=B,
        acc_time=acc_time,
        acc_z=acc_z,
        acc_zpow=acc_zpow,
        acc_hp2=acc_hp2,
        acc_occ=acc_occ,
        acc_busy=acc_busy,
        acc_counts=acc_counts,
        thetas=theta_mat if J else None,
        gamma1s=gamma1s if J else None,
        zetas=zetas if J else None,
        acc_g=acc_g if J else None,
        acc_gc=acc_gc if J else None,
        acc_f=acc_f if use_psi else None,
        acc_fc=acc_fc if use_psi else None,
        psi_included=bool(use_psi),
        snapshot_spacing=float(snapshot_spacing),
        snapshots=snap_buf[:nsnap].copy() if snapshot_spacing > 0 else None,
        snapshot_residuals=snap_resid[:nsnap].copy() if snapshot_spacing > 0 else None,
        final_z=z.copy(),
        total_events=int(counters[0]),
        elapsed=float(clockbox[0]),
    )
