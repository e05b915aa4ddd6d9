"""Exact stationary analysis of the exponential case on a truncated box.

With exponential interarrival and service times the queue-length vector is
a CTMC whose generator applies, at state z:

  * arrival at rate alpha1 (z -> z + e1),
  * mu1 on {z1>0, z3=z5=0} (z -> z - e1 + e2),
  * mu2 on {z2>0}          (z -> z - e2 + e3),
  * mu3 on {z3>0, z5=0}    (z -> z - e3 + e4),
  * mu4 on {z4>0, z2=0}    (z -> z - e4 + e5),
  * mu5 on {z5>0}          (z -> z - e5).

The chain is truncated to the box prod [0..cap_k].  Arrivals are
suppressed at the z1 cap; a completion whose destination buffer is at its
cap completes with the job departing instead of moving on.  (Literal
suppression of such completions would create absorbing corner states --
e.g. z1=cap1, z3=cap3, z4=cap4, z2>0, z5=0 has no active transition at all
-- leaving the stationary vector ill-defined; the depart-on-full rule
keeps the box irreducible.)  Both boundary adjustments are priced into the
reported boundary flux so every comparison against the untruncated model
carries an explicit error budget, alongside the per-coordinate boundary
occupancy report.

The stationary vector is found by uniformization and power iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .estimators import MgfEstimate
from .model import NetworkInstance, check_stability

__all__ = [
    "TruncatedChain",
    "BarResidualReport",
    "build",
    "solve",
    "exact_mgf",
    "bar_residual",
    "generator_matrix",
]

DEFAULT_MAX_STATES = 40_000_000
ROWSUM_TOL = 1e-12
RESIDUAL_TOL = 1e-10


@dataclass
class TruncatedChain:
    """Truncated-box chain with (optionally) its stationary vector.

    ``pi`` is the flat stationary vector in mixed-radix order (z1 slowest,
    z5 fastest); ``tail_report[k]`` is the stationary mass on the face
    z_{k+1} = cap_{k+1}, the per-coordinate truncation budget.
    """

    inst: NetworkInstance
    caps: tuple[int, ...]
    dims: tuple[int, ...]
    n_states: int
    lam: float
    out_rate: np.ndarray
    pi: np.ndarray | None = None
    tail_report: np.ndarray | None = None
    iterations: int = 0
    residual_linf: float = float("nan")
    rel_change: float = float("nan")

    def pi_tensor(self) -> np.ndarray:
        if self.pi is None:
            raise ValueError("chain is not solved yet")
        return self.pi.reshape(self.dims)

    # -- exact stationary functionals ------------------------------------

    def mean_z(self) -> np.ndarray:
        P = self.pi_tensor()
        return np.array(
            [
                float(_contract(P, _axis_weights(self.dims, k, np.arange(self.dims[k]))))
                for k in range(5)
            ]
        )

    def occupancy(self) -> np.ndarray:
        """Exact masses of the five idle events (the beta identities)."""
        P = self.pi_tensor()
        return np.array(
            [
                float(P[0, :, 0, :, 0].sum()),
                float(P[:, 0, :, :, :].sum()),
                float(P[:, :, 0, :, 0].sum()),
                float(P[:, 0, :, 0, :].sum()),
                float(P[:, :, :, :, 0].sum()),
            ]
        )


def _axis_weights(dims, axis, w):
    out = [np.ones(d) for d in dims]
    out[axis] = np.asarray(w, dtype=float)
    return out


def _contract(P: np.ndarray, weights) -> float:
    out = P
    for w in reversed(weights):
        out = out @ w
    return float(out)


def _coord_arrays(dims):
    """Broadcastable coordinate arrays z1..z5 for the box."""
    return [
        np.arange(d, dtype=np.int64).reshape(
            tuple(d if i == k else 1 for i in range(5))
        )
        for k, d in enumerate(dims)
    ]


def build(inst: NetworkInstance, caps, max_states: int = DEFAULT_MAX_STATES) -> TruncatedChain:
    """Construct the truncated chain (unsolved).

    Requires exponential interarrival and service distributions and a
    stable instance; refuses boxes above ``max_states``.
    """
    if not inst.base.all_exponential():
        raise ValueError("exact chain analysis requires exponential distributions")
    if not check_stability(inst).stable:
        raise ValueError("exact chain analysis requires a stable instance")
    caps = tuple(int(c) for c in caps)
    if len(caps) != 5 or any(c < 1 for c in caps):
        raise ValueError("caps must be five integers >= 1")
    dims = tuple(c + 1 for c in caps)
    n_states = int(np.prod(dims))
    if n_states > max_states:
        raise MemoryError(
            f"truncated box has {n_states} states, over the budget of {max_states}"
        )
    z1, z2, z3, z4, z5 = _coord_arrays(dims)
    c1 = caps[0]
    mu = inst.mu_r
    a = inst.base.alpha1
    out = (
        a * (z1 < c1)
        + mu[0] * ((z1 > 0) & (z3 == 0) & (z5 == 0))
        + mu[1] * (z2 > 0)
        + mu[2] * ((z3 > 0) & (z5 == 0))
        + mu[3] * ((z4 > 0) & (z2 == 0))
        + mu[4] * (z5 > 0)
    )
    out = np.ascontiguousarray(np.broadcast_to(out, dims), dtype=float).ravel()
    return TruncatedChain(
        inst=inst,
        caps=caps,
        dims=dims,
        n_states=n_states,
        lam=float(out.max()),
        out_rate=out,
    )


def _warm_start(chain: TruncatedChain) -> np.ndarray:
    """Independent truncated-geometric product as the starting vector."""
    inst = chain.inst
    a = inst.base.alpha1
    m = inst.m_r
    loads = [
        min(0.95, a * (m[0] + m[2] + m[4]) * m[0] / (m[0] + m[2] + m[4])),
        min(0.95, a * m[1]),
        min(0.95, a * (m[2] + m[4]) * 0.7),
        min(0.95, a * (m[1] + m[3])),
        min(0.95, a * m[4] * 0.7),
    ]
    pi = np.ones(1)
    for d, q in zip(chain.dims, loads):
        marg = q ** np.arange(d)
        marg /= marg.sum()
        pi = np.multiply.outer(pi, marg)
    pi = pi.ravel()
    return pi / pi.sum()


def solve(
    chain: TruncatedChain,
    rel_change_tol: float = 1e-12,
    residual_tol: float = RESIDUAL_TOL,
    max_iters: int = 2_000_000,
    check_mass_every: int = 1000,
    warm_start: np.ndarray | None = None,
) -> TruncatedChain:
    """Stationary vector by uniformization + power iteration (in place).

    Iterates pi <- pi(I + Q/lam) until the relative L1 change per step is
    below ``rel_change_tol`` and the stationarity residual
    ||pi Q||_inf = lam * ||Delta pi||_inf is below ``residual_tol``.
    Deterministic for a given chain and starting vector.
    """
    if warm_start is not None:
        pi = np.asarray(warm_start, dtype=float).copy()
        if pi.shape != (chain.n_states,):
            raise ValueError("warm_start has wrong shape")
        pi /= pi.sum()
    else:
        pi = _warm_start(chain)
    y = np.empty_like(pi)
    caps_arr = np.asarray(chain.caps, dtype=np.int64)
    mu = chain.inst.mu_r_array()
    alpha1 = chain.inst.base.alpha1
    lam = chain.lam
    it = 0
    while it < max_iters:
        l1, mx, mass = _kernels.ctmc_sweep(pi, chain.out_rate, lam, alpha1, mu, caps_arr, y)
        pi, y = y, pi
        it += 1
        if it % check_mass_every == 0:
            pi /= pi.sum()
        if l1 <= rel_change_tol and lam * mx <= residual_tol:
            break
    else:
        raise RuntimeError(
            f"power iteration did not converge in {max_iters} iterations "
            f"(rel change {l1:.3e}, residual {lam * mx:.3e})"
        )
    pi /= pi.sum()
    chain.pi = pi
    chain.iterations = it
    chain.rel_change = float(l1)
    chain.residual_linf = float(lam * mx)
    P = chain.pi_tensor()
    chain.tail_report = np.array(
        [
            float(P[-1, :, :, :, :].sum()),
            float(P[:, -1, :, :, :].sum()),
            float(P[:, :, -1, :, :].sum()),
            float(P[:, :, :, -1, :].sum()),
            float(P[:, :, :, :, -1].sum()),
        ]
    )
    return chain


def exact_mgf(chain: TruncatedChain, theta) -> MgfEstimate:
    """phi and the five conditional MGFs as exact sums over pi.

    Conditional values renormalize over the conditioning set; a set with
    zero stationary mass yields an absent (NaN) entry.
    """
    theta = np.asarray(getattr(theta, "theta", theta), dtype=float)
    if theta.shape != (5,) or np.any(theta > 0):
        raise ValueError("theta must be a nonpositive 5-vector")
    P = chain.pi_tensor()
    dims = chain.dims
    w = [np.exp(theta[k] * np.arange(dims[k])) for k in range(5)]

    phi = _contract(P, w)

    def cond(view, weights):
        den = float(view.sum())
        if den <= 0.0:
            return np.nan, 0.0
        num = view
        for wv in reversed(weights):
            num = num @ wv
        return float(num) / den, den

    vals = np.empty(5)
    occ = np.empty(5)
    vals[0], occ[0] = cond(P[0, :, 0, :, 0], [w[1], w[3]])
    vals[1], occ[1] = cond(P[:, 0, :, :, :], [w[0], w[2], w[3], w[4]])
    vals[2], occ[2] = cond(P[:, :, 0, :, 0], [w[0], w[1], w[3]])
    vals[3], occ[3] = cond(P[:, 0, :, 0, :], [w[0], w[2], w[4]])
    vals[4], occ[4] = cond(P[:, :, :, :, 0], [w[0], w[1], w[2], w[3]])

    return MgfEstimate(
        theta=theta.copy(),
        phi=float(phi),
        phi_ci=0.0,
        phi_k=vals,
        phi_k_ci=np.zeros(5),
        phi_k_present=np.isfinite(vals),
        occupation_time=occ,
        source="ctmc",
    )


@dataclass(frozen=True)
class BarResidualReport:
    """E_pi[G f] under the truncated generator, plus the boundary-flux
    correction quantifying the gap to the untruncated model.

    ``residual`` is ~0 (solver tolerance) for any bounded f because pi is
    stationary for the truncated chain.  ``boundary_flux`` is the signed
    sum of the boundary adjustments (suppressed arrivals and redirected
    full-destination completions), so residual + boundary_flux =
    E_pi[G_untruncated f]; ``boundary_bound`` is the corresponding
    absolute-value budget.
    """

    residual: float
    boundary_flux: float
    boundary_bound: float

    @property
    def untruncated_residual(self) -> float:
        return self.residual + self.boundary_flux


# transitions: (name, source decrement e_k, destination increment e_{k+1},
# index of the coordinate whose cap redirects/suppresses the move)
_MOVES = (
    ("arrival", None, 0, 0),
    ("mu1", 0, 1, 1),
    ("mu2", 1, 2, 2),
    ("mu3", 2, 3, 3),
    ("mu4", 3, 4, 4),
    ("mu5", 4, None, None),
)


def bar_residual(chain: TruncatedChain, f, chunk: int = 1 << 19) -> BarResidualReport:
    """Sum_z pi(z) (G f)(z) for a bounded vectorized f on states.

    ``f`` maps an (N, 5) integer array of states to (N,) values; it is also
    evaluated just outside the box to price the boundary flux against the
    untruncated generator.
    """
    if chain.pi is None:
        raise ValueError("chain is not solved yet")
    dims = chain.dims
    caps = chain.caps
    mu = chain.inst.mu_r
    alpha1 = chain.inst.base.alpha1
    rates = {
        "arrival": alpha1,
        "mu1": mu[0],
        "mu2": mu[1],
        "mu3": mu[2],
        "mu4": mu[3],
        "mu5": mu[4],
    }
    strides = np.array(
        [int(np.prod(dims[k + 1 :])) for k in range(5)], dtype=np.int64
    )
    residual = 0.0
    flux = 0.0
    bound = 0.0
    n = chain.n_states
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n), dtype=np.int64)
        z = (idx[:, None] // strides[None, :]) % np.array(dims, dtype=np.int64)[None, :]
        pz = chain.pi[idx]
        fz = np.asarray(f(z), dtype=float)
        for name, dec, inc, capped in _MOVES:
            if name == "arrival":
                active = np.ones(len(idx), dtype=bool)
            elif name == "mu1":
                active = (z[:, 0] > 0) & (z[:, 2] == 0) & (z[:, 4] == 0)
            elif name == "mu2":
                active = z[:, 1] > 0
            elif name == "mu3":
                active = (z[:, 2] > 0) & (z[:, 4] == 0)
            elif name == "mu4":
                active = (z[:, 3] > 0) & (z[:, 1] == 0)
            else:
                active = z[:, 4] > 0
            if not active.any():
                continue
            rate = rates[name]
            za = z[active]
            pa = pz[active]
            fa = fz[active]
            dest_full = za.copy()
            if dec is not None:
                dest_full[:, dec] -= 1
            if inc is not None:
                dest_full[:, inc] += 1
            f_full = np.asarray(f(dest_full), dtype=float)
            if capped is None:
                residual += (pa * rate * (f_full - fa)).sum()
                continue
            at_cap = za[:, capped] == caps[capped]
            free = ~at_cap
            residual += (pa[free] * rate * (f_full[free] - fa[free])).sum()
            if not at_cap.any():
                continue
            if name == "arrival":
                # Suppressed entirely: truncated term is zero; the gap to
                # the untruncated generator is the full jump term.
                gap = pa[at_cap] * rate * (f_full[at_cap] - fa[at_cap])
            else:
                # Redirected to complete-and-depart: truncated term uses
                # the decrement-only destination.
                dest_trunc = za[at_cap].copy()
                dest_trunc[:, dec] -= 1
                f_trunc = np.asarray(f(dest_trunc), dtype=float)
                residual += (pa[at_cap] * rate * (f_trunc - fa[at_cap])).sum()
                gap = pa[at_cap] * rate * (f_full[at_cap] - f_trunc)
            flux += gap.sum()
            bound += np.abs(gap).sum()
    return BarResidualReport(
        residual=float(residual), boundary_flux=float(flux), boundary_bound=float(bound)
    )


def save_solution(chain: TruncatedChain, path) -> None:
    """Persist a solved chain's stationary vector with its identity data."""
    if chain.pi is None:
        raise ValueError("chain is not solved yet")
    np.savez_compressed(
        path,
        pi=chain.pi,
        caps=np.asarray(chain.caps, dtype=np.int64),
        m_r=np.asarray(chain.inst.m_r),
        alpha1=np.asarray([chain.inst.base.alpha1]),
        iterations=np.asarray([chain.iterations]),
        residual_linf=np.asarray([chain.residual_linf]),
    )


def load_solution(
    inst: NetworkInstance, caps, path, residual_tol: float = RESIDUAL_TOL
) -> TruncatedChain:
    """Rebuild a chain and adopt a saved stationary vector after verifying
    its certificate: identity match, nonnegativity, unit mass, and a fresh
    one-sweep evaluation of ||pi Q||_inf against ``residual_tol``.
    """
    chain = build(inst, caps)
    data = np.load(path)
    if tuple(int(c) for c in data["caps"]) != chain.caps:
        raise ValueError("cached solution was computed for different caps")
    if not np.allclose(data["m_r"], np.asarray(inst.m_r), rtol=0, atol=1e-15) or not np.isclose(
        float(data["alpha1"][0]), inst.base.alpha1, rtol=0, atol=1e-15
    ):
        raise ValueError("cached solution was computed for a different instance")
    pi = np.asarray(data["pi"], dtype=float)
    if pi.shape != (chain.n_states,) or np.any(pi < 0):
        raise ValueError("cached solution vector is invalid")
    pi = pi / pi.sum()
    y = np.empty_like(pi)
    _l1, mx, _mass = _kernels.ctmc_sweep(
        pi, chain.out_rate, chain.lam, inst.base.alpha1,
        inst.mu_r_array(), np.asarray(chain.caps, dtype=np.int64), y,
    )
    residual = chain.lam * mx
    if residual > residual_tol:
        raise ValueError(
            f"cached solution fails the stationarity certificate: "
            f"||pi Q||_inf = {residual:.3e} > {residual_tol:.1e}"
        )
    chain.pi = pi
    chain.iterations = int(data["iterations"][0])
    chain.residual_linf = float(residual)
    P = chain.pi_tensor()
    chain.tail_report = np.array(
        [
            float(P[-1, :, :, :, :].sum()),
            float(P[:, -1, :, :, :].sum()),
            float(P[:, :, -1, :, :].sum()),
            float(P[:, :, :, -1, :].sum()),
            float(P[:, :, :, :, -1].sum()),
        ]
    )
    return chain


def generator_matrix(chain: TruncatedChain, max_states: int = 2_000_000):
    """The truncated generator as a scipy CSR matrix (small boxes only).

    Used for reference solves and row-sum checks in tests; the power
    iteration itself is matrix-free.
    """
    from scipy import sparse

    if chain.n_states > max_states:
        raise MemoryError("explicit generator requested for too large a box")
    dims = chain.dims
    caps = chain.caps
    mu = chain.inst.mu_r
    alpha1 = chain.inst.base.alpha1
    strides = np.array([int(np.prod(dims[k + 1 :])) for k in range(5)], dtype=np.int64)
    idx = np.arange(chain.n_states, dtype=np.int64)
    z = (idx[:, None] // strides[None, :]) % np.array(dims, dtype=np.int64)[None, :]

    rows, cols, vals = [], [], []

    def add(mask, rate, move):
        src = idx[mask]
        dst = src + int(move @ strides)
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(src.shape, rate))

    e = np.eye(5, dtype=np.int64)
    add(z[:, 0] < caps[0], alpha1, e[0])
    act = [
        (z[:, 0] > 0) & (z[:, 2] == 0) & (z[:, 4] == 0),
        z[:, 1] > 0,
        (z[:, 2] > 0) & (z[:, 4] == 0),
        (z[:, 3] > 0) & (z[:, 1] == 0),
        z[:, 4] > 0,
    ]
    for k in range(4):
        dest_free = z[:, k + 1] < caps[k + 1]
        add(act[k] & dest_free, mu[k], -e[k] + e[k + 1])
        add(act[k] & ~dest_free, mu[k], -e[k])  # depart-on-full redirection
    add(act[4], mu[4], -e[4])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    Q = sparse.coo_matrix((vals, (rows, cols)), shape=(chain.n_states, chain.n_states))
    Q = Q.tocsr()
    Q = Q - sparse.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q
