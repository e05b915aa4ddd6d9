"""Numba kernels: the event loop and the truncated-chain power iteration.

Both kernels are resumable and operate purely on preallocated arrays so
that results are bit-reproducible for a given variate stream, independent
of chunking or scheduling.  No randomness lives here: the event loop
consumes pre-drawn variate chunks and returns a refill code when a stream
runs dry.
"""

import numpy as np
from numba import njit

INF = np.inf

# Return codes from the event-loop kernel.
DONE = 0
NEED_ARRIVAL = 1  # codes 2..6: need service chunk for class (code-1)
SNAP_FULL = 9

_G_REFRESH_MASK = (1 << 20) - 1  # recompute running g values periodically


@njit(cache=True, nogil=True)
def _expm1_over(x):
    if x > 1e-8 or x < -1e-8:
        return np.expm1(x) / x
    return 1.0 + 0.5 * x + x * x / 6.0


@njit(cache=True, nogil=True)
def sim_loop(
    alpha1,
    mu_r,            # (5,) scaled service rates
    horizon,
    warmup,
    n_batches,
    z,               # (5,) int64 queue lengths
    resid,           # (6,) float64: [0] interarrival, [1..5] service residuals
    clockbox,        # (1,) float64 simulation time
    counters,        # (3,) int64: events done, snapshots taken, g refresh countdown
    arr_chunk,       # (na,) pre-scaled interarrival draws
    svc_chunks,      # (5, ns) pre-scaled service draws
    cursors,         # (6,) int64 positions into the chunks
    acc_time,        # (B,)
    acc_z,           # (B, 5) integrated queue lengths
    acc_zpow,        # (B, 2, 3) integrated z1^p / z4^p for p = 1..3
    acc_hp2,         # (B,) integrated (z2+z3+z5)^2
    acc_occ,         # (B, 5) occupation of the five idle events
    acc_busy,        # (B, 2) station busy time
    acc_counts,      # (B, 6) arrivals + completions per class
    thetas,          # (J, 5)
    exp_mult,        # (J, 6) per-event-type multipliers for the running g
    gvals,           # (J,) running exp(<theta, z>)
    gamma1s,         # (J,)
    zetas,           # (J, 5)
    acc_g,           # (B, J)
    acc_gc,          # (B, J, 5)
    acc_f,           # (B, J)
    acc_fc,          # (B, J, 5)
    use_psi,         # int: accumulate residual-augmented values
    snap_spacing,    # float; 0 disables snapshots
    snapbox,         # (1,) float64: next snapshot time (-1 = not started)
    snap_buf,        # (cap, 5) int32
    snap_resid,      # (cap, 6) float64: residuals at the snapshot instant
):
    events = counters[0]
    nsnap = counters[1]
    clock = clockbox[0]
    snap_next = snapbox[0]
    J = thetas.shape[0]
    na = arr_chunk.shape[0]
    ns = svc_chunks.shape[1]
    span = horizon - warmup

    while events < horizon:
        # Serving classes under the priority ranking {(5,3,1),(2,4)}.
        if z[4] > 0:
            k1 = 5
        elif z[2] > 0:
            k1 = 3
        elif z[0] > 0:
            k1 = 1
        else:
            k1 = 0
        if z[1] > 0:
            k2 = 2
        elif z[3] > 0:
            k2 = 4
        else:
            k2 = 0

        dt1 = resid[k1] if k1 > 0 else INF
        dt2 = resid[k2] if k2 > 0 else INF
        dta = resid[0]
        # Tie order: station-1 completion, station-2 completion, arrival.
        if dt1 <= dt2 and dt1 <= dta:
            ev = 1
            kc = k1
            dt = dt1
        elif dt2 <= dta:
            ev = 2
            kc = k2
            dt = dt2
        else:
            ev = 0
            kc = 0
            dt = dta

        # Refill check before any mutation so the kernel can resume cleanly.
        if ev == 0:
            if cursors[0] >= na:
                counters[0] = events
                counters[1] = nsnap
                clockbox[0] = clock
                snapbox[0] = snap_next
                return NEED_ARRIVAL
        else:
            if cursors[kc] >= ns:
                counters[0] = events
                counters[1] = nsnap
                clockbox[0] = clock
                snapbox[0] = snap_next
                return kc + 1

        if events >= warmup:
            b = (events - warmup) * n_batches // span
            acc_time[b] += dt
            z1 = z[0]
            z4 = z[3]
            acc_z[b, 0] += z1 * dt
            acc_z[b, 1] += z[1] * dt
            acc_z[b, 2] += z[2] * dt
            acc_z[b, 3] += z4 * dt
            acc_z[b, 4] += z[4] * dt
            f1 = z1 * dt
            acc_zpow[b, 0, 0] += f1
            acc_zpow[b, 0, 1] += f1 * z1
            acc_zpow[b, 0, 2] += f1 * z1 * z1
            f4 = z4 * dt
            acc_zpow[b, 1, 0] += f4
            acc_zpow[b, 1, 1] += f4 * z4
            acc_zpow[b, 1, 2] += f4 * z4 * z4
            hp = z[1] + z[2] + z[4]
            acc_hp2[b] += hp * hp * dt

            s1_idle = z[0] == 0 and z[2] == 0 and z[4] == 0
            c2 = z[1] == 0
            c3 = z[2] == 0 and z[4] == 0
            c4 = z[1] == 0 and z[3] == 0
            c5 = z[4] == 0
            if s1_idle:
                acc_occ[b, 0] += dt
            else:
                acc_busy[b, 0] += dt
            if c2:
                acc_occ[b, 1] += dt
            if c3:
                acc_occ[b, 2] += dt
            if c4:
                acc_occ[b, 3] += dt
            else:
                acc_busy[b, 1] += dt
            if c5:
                acc_occ[b, 4] += dt

            if ev == 0:
                acc_counts[b, 0] += 1
            else:
                acc_counts[b, kc] += 1

            for j in range(J):
                g = gvals[j]
                gdt = g * dt
                acc_g[b, j] += gdt
                if s1_idle:
                    acc_gc[b, j, 0] += gdt
                if c2:
                    acc_gc[b, j, 1] += gdt
                if c3:
                    acc_gc[b, j, 2] += gdt
                if c4:
                    acc_gc[b, j, 3] += gdt
                if c5:
                    acc_gc[b, j, 4] += gdt
                if use_psi != 0:
                    e0 = -gamma1s[j] * alpha1 * resid[0]
                    for k in range(5):
                        e0 += zetas[j, k] * mu_r[k] * resid[k + 1]
                    slope = gamma1s[j] * alpha1
                    if k1 > 0:
                        slope -= zetas[j, k1 - 1] * mu_r[k1 - 1]
                    if k2 > 0:
                        slope -= zetas[j, k2 - 1] * mu_r[k2 - 1]
                    fint = g * np.exp(e0) * dt * _expm1_over(slope * dt)
                    acc_f[b, j] += fint
                    if s1_idle:
                        acc_fc[b, j, 0] += fint
                    if c2:
                        acc_fc[b, j, 1] += fint
                    if c3:
                        acc_fc[b, j, 2] += fint
                    if c4:
                        acc_fc[b, j, 3] += fint
                    if c5:
                        acc_fc[b, j, 4] += fint

            if snap_spacing > 0.0:
                if snap_next < 0.0:
                    snap_next = clock + snap_spacing
                while snap_next <= clock + dt:
                    if nsnap >= snap_buf.shape[0]:
                        counters[0] = events
                        counters[1] = nsnap
                        clockbox[0] = clock
                        snapbox[0] = snap_next
                        return SNAP_FULL
                    for i in range(5):
                        snap_buf[nsnap, i] = np.int32(z[i])
                    # residuals at the snapshot instant: the arrival clock
                    # and the two served classes have run for delta time
                    delta = snap_next - clock
                    snap_resid[nsnap, 0] = resid[0] - delta
                    for i in range(1, 6):
                        snap_resid[nsnap, i] = resid[i]
                    if k1 > 0:
                        snap_resid[nsnap, k1] -= delta
                    if k2 > 0:
                        snap_resid[nsnap, k2] -= delta
                    nsnap += 1
                    snap_next += snap_spacing

        # Advance time: only running residuals decrease (preempted and
        # empty-class residuals stay frozen).
        clock += dt
        resid[0] -= dt
        if k1 > 0:
            resid[k1] -= dt
        if k2 > 0:
            resid[k2] -= dt

        # Apply the event and consume one draw.
        if ev == 0:
            z[0] += 1
            resid[0] = arr_chunk[cursors[0]]
            cursors[0] += 1
            for j in range(J):
                gvals[j] *= exp_mult[j, 0]
        else:
            z[kc - 1] -= 1
            if kc < 5:
                z[kc] += 1
            resid[kc] = svc_chunks[kc - 1, cursors[kc]]
            cursors[kc] += 1
            for j in range(J):
                gvals[j] *= exp_mult[j, kc]

        events += 1
        if J > 0 and (events & _G_REFRESH_MASK) == 0:
            for j in range(J):
                s = 0.0
                for i in range(5):
                    s += thetas[j, i] * z[i]
                gvals[j] = np.exp(s)

    counters[0] = events
    counters[1] = nsnap
    clockbox[0] = clock
    snapbox[0] = snap_next
    return DONE


@njit(cache=True, nogil=True)
def ctmc_sweep(pi, out_rate, lam, alpha1, mu, caps, y):
    """One uniformized step y = pi * P with P = I + Q/lam, fused gather.

    Truncation semantics: arrivals are suppressed at the z1 cap; a service
    completion whose destination buffer sits at its cap completes with the
    job departing instead (keeps every state draining, so the truncated
    chain stays irreducible).  ``out_rate`` holds the per-state total
    active rate.  Returns (l1 change, max abs change, total mass of y).
    """
    c1, c2, c3, c4, c5 = caps[0], caps[1], caps[2], caps[3], caps[4]
    d5 = c5 + 1
    s4 = d5
    s3 = (c4 + 1) * s4
    s2 = (c3 + 1) * s3
    s1 = (c2 + 1) * s2
    mu1, mu2, mu3, mu4, mu5 = mu[0], mu[1], mu[2], mu[3], mu[4]
    inv = 1.0 / lam

    l1 = 0.0
    mx = 0.0
    mass = 0.0
    for z1 in range(c1 + 1):
        base1 = z1 * s1
        for z2 in range(c2 + 1):
            base2 = base1 + z2 * s2
            for z3 in range(c3 + 1):
                base3 = base2 + z3 * s3
                # Class-1 completion feeds class 2; the source
                # (z1+1, z2-1, z3, z4, z5) serves class 1 only when classes
                # 3 and 5 are empty there.  The z2 == c2 variant is the
                # depart-on-full redirection from source (z1+1, c2, ...).
                in1_ok = z2 >= 1 and z1 < c1 and z3 == 0
                in1_full = z2 == c2 and z1 < c1 and z3 == 0
                in2_ok = z3 >= 1 and z2 < c2
                in2_full = z3 == c3 and z2 < c2
                for z4 in range(c4 + 1):
                    base4 = base3 + z4 * s4
                    in3_ok = z4 >= 1 and z3 < c3
                    in3_full = z4 == c4 and z3 < c3
                    for z5 in range(d5):
                        i = base4 + z5
                        acc = 0.0
                        if z1 >= 1:
                            acc += alpha1 * pi[i - s1]
                        if z5 == 0:
                            if in1_ok:
                                acc += mu1 * pi[i + s1 - s2]
                            if in1_full:
                                acc += mu1 * pi[i + s1]
                            if in3_ok:
                                acc += mu3 * pi[i + s3 - s4]
                            if in3_full:
                                acc += mu3 * pi[i + s3]
                        if in2_ok:
                            acc += mu2 * pi[i + s2 - s3]
                        if in2_full:
                            acc += mu2 * pi[i + s2]
                        if z2 == 0:
                            if z5 >= 1 and z4 < c4:
                                acc += mu4 * pi[i + s4 - 1]
                            if z5 == c5 and z4 < c4:
                                acc += mu4 * pi[i + s4]
                        if z5 < c5:
                            acc += mu5 * pi[i + 1]
                        v = pi[i] + (acc - out_rate[i] * pi[i]) * inv
                        y[i] = v
                        diff = v - pi[i]
                        if diff < 0.0:
                            diff = -diff
                        l1 += diff
                        if diff > mx:
                            mx = diff
                        mass += v
    return l1, mx, mass
