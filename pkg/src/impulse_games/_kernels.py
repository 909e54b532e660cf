"""Compiled path kernel for the controlled N-player system.

Players 0..n_real-1 are the game; any further rows are "shadow" copies that
reuse the Brownian increments of a base player, follow their own band, and
never influence anyone else.  Shadows give common-random-number comparisons
of unilateral deviations.

Per-player output columns (see OUT_*):
running, own, opponent discounted costs, intervention count, counted
interventions after burn-in, upper-threshold interventions after burn-in,
sum of post-jump offsets after burn-in, undiscounted time integral of the
centered state, terminal state.
"""

import math

import numpy as np
from numba import njit

OUT_RUN, OUT_OWN, OUT_OPP, OUT_NINT, OUT_NCNT, OUT_NUP, OUT_JSUM, OUT_TINT, OUT_XT = range(9)
N_OUT = 9

ERR_OK = 0
ERR_CASCADE = 1

MAX_CASCADE = 64
CHUNK = 4096


@njit(cache=True)
def zero_drift(x):
    return 0.0


@njit(cache=True)
def const_vol(x, sigma):
    return sigma


@njit(nogil=True, cache=True)
def _reference(i, x, base, ref_mode, center, n_real, sum_real):
    if ref_mode[i] == 0:
        return center[i]
    b = base[i]
    return center[i] + (sum_real - x[b]) / (n_real - 1)


@njit(nogil=True, cache=True)
def _run_cost(i, x, base, n_real, sum_real, cost_mode, cost_center, h, p):
    if cost_mode == 0:
        b = base[i]
        y = x[i] - (sum_real - x[b] + x[i]) / n_real
    else:
        y = x[i] - cost_center
    return max(h * y, -p * y)


@njit(nogil=True, cache=True)
def _side(i, y, pol, act_lo, act_hi):
    """+1 upper action, -1 lower action, 0 none."""
    s = 0
    if act_hi[i]:
        if y >= pol[i, 3]:
            s = 1
    if s == 0 and act_lo[i]:
        if y <= pol[i, 0]:
            s = -1
    return s


@njit(nogil=True, cache=True)
def _impulse_cost(xi, Kp, Km, kp, km):
    if xi > 0:
        return Kp + kp * xi
    return Km - km * xi


@njit(nogil=True, cache=True)
def _intervene(t, disc, x, base, ref_mode, center, n_real, pol, act_lo, act_hi,
               Kp, Km, kp, km, c, out, burn_in, log, log_n, log_path):
    """Resolve all interventions at one instant.  Returns an error code."""
    n_tot = x.shape[0]
    sum_real = 0.0
    for j in range(n_real):
        sum_real += x[j]
    count = 0
    while True:
        best = -1
        best_abs = -1.0
        best_dir = 0
        for i in range(n_real):
            y = x[i] - _reference(i, x, base, ref_mode, center, n_real, sum_real)
            w = _side(i, y, pol, act_lo, act_hi)
            if w != 0 and abs(y) > best_abs:
                best = i
                best_abs = abs(y)
                best_dir = w
        if best < 0:
            break
        count += 1
        if count > MAX_CASCADE:
            return ERR_CASCADE
        i = best
        ref = _reference(i, x, base, ref_mode, center, n_real, sum_real)
        tgt = ref + (pol[i, 2] if best_dir > 0 else pol[i, 1])
        xi = tgt - x[i]
        if log_n[0] < log.shape[0]:
            k = log_n[0]
            log[k, 0] = log_path
            log[k, 1] = t
            log[k, 2] = i
            log[k, 3] = x[i]
            log[k, 4] = xi
            log_n[0] += 1
        sum_real += xi
        x[i] = tgt
        out[i, OUT_OWN] += disc * _impulse_cost(xi, Kp, Km, kp, km)
        out[i, OUT_NINT] += 1.0
        if out[i, OUT_NINT] > burn_in:
            out[i, OUT_NCNT] += 1.0
            out[i, OUT_JSUM] += tgt - ref
            if best_dir > 0:
                out[i, OUT_NUP] += 1.0
        for j in range(n_tot):
            if base[j] != i:
                out[j, OUT_OPP] += disc * c
    # shadows see the settled real players
    for i in range(n_real, n_tot):
        scount = 0
        while True:
            y = x[i] - _reference(i, x, base, ref_mode, center, n_real, sum_real)
            w = _side(i, y, pol, act_lo, act_hi)
            if w == 0:
                break
            scount += 1
            if scount > MAX_CASCADE:
                return ERR_CASCADE
            ref = _reference(i, x, base, ref_mode, center, n_real, sum_real)
            tgt = ref + (pol[i, 2] if w > 0 else pol[i, 1])
            xi = tgt - x[i]
            x[i] = tgt
            out[i, OUT_OWN] += disc * _impulse_cost(xi, Kp, Km, kp, km)
            out[i, OUT_NINT] += 1.0
            if out[i, OUT_NINT] > burn_in:
                out[i, OUT_NCNT] += 1.0
                out[i, OUT_JSUM] += tgt - ref
                if w > 0:
                    out[i, OUT_NUP] += 1.0
    return ERR_OK


@njit(nogil=True, cache=False)
def run_path(rngs, x, base, ref_mode, pol, act_lo, act_hi, n_real,
             h, p, Kp, Km, kp, km, c, r, sigma, dt, n_steps,
             cost_mode, cost_center, burn_in, drift, vol, out, log, log_n, log_path):
    """Simulate one path in place.  ``x`` holds X_{0-}; ``out`` is zeroed by the caller.

    The hot loop only tests whether anyone sits in an action region; the
    cascade itself is resolved in ``_intervene``.
    """
    n_tot = x.shape[0]
    center = pol[:, 4].copy()
    d_thr = pol[:, 0].copy()
    u_thr = pol[:, 3].copy()
    disc = 1.0
    step_disc = math.exp(-r * dt)
    weight = 0.5 * (1.0 - step_disc) / r  # trapezoid half-weight of int e^{-r s} ds over one step
    sqdt = math.sqrt(dt)
    chunk = min(CHUNK, max(n_steps, 1))
    zbuf = np.empty((n_real, chunk))
    f0 = np.empty(n_tot)
    run = np.zeros(n_tot)
    tint = np.zeros(n_tot)
    inv = 1.0 / n_real
    inv_o = 1.0 / (n_real - 1) if n_real > 1 else 0.0
    err = _intervene(0.0, 1.0, x, base, ref_mode, center, n_real, pol, act_lo, act_hi,
                     Kp, Km, kp, km, c, out, burn_in, log, log_n, log_path)
    if err != ERR_OK:
        return err
    sum_real = 0.0
    for j in range(n_real):
        sum_real += x[j]
    for i in range(n_tot):
        if cost_mode == 0:
            y = x[i] - (sum_real - x[base[i]] + x[i]) * inv
        else:
            y = x[i] - cost_center
        f0[i] = max(h * y, -p * y)
    for k in range(n_steps):
        kk = k % chunk
        if kk == 0:
            m = min(chunk, n_steps - k)
            for j in range(n_real):
                zbuf[j, :m] = rngs[j].standard_normal(m)
        for i in range(n_tot):
            xo = x[i]
            xn = xo + drift(xo) * dt + vol(xo, sigma) * sqdt * zbuf[base[i], kk]
            x[i] = xn
            tint[i] += 0.5 * dt * (xo + xn - 2.0 * center[i])
        sum_real = 0.0
        for j in range(n_real):
            sum_real += x[j]
        hit = False
        for i in range(n_tot):
            xi = x[i]
            b = base[i]
            if cost_mode == 0:
                y = xi - (sum_real - x[b] + xi) * inv
            else:
                y = xi - cost_center
            f1 = max(h * y, -p * y)
            run[i] += disc * weight * (f0[i] + f1)
            f0[i] = f1
            if ref_mode[i] == 0:
                yy = xi - center[i]
            else:
                yy = xi - center[i] - (sum_real - x[b]) * inv_o
            if (act_hi[i] and yy >= u_thr[i]) or (act_lo[i] and yy <= d_thr[i]):
                hit = True
        disc *= step_disc
        if hit:
            err = _intervene((k + 1) * dt, disc, x, base, ref_mode, center, n_real, pol, act_lo, act_hi,
                             Kp, Km, kp, km, c, out, burn_in, log, log_n, log_path)
            if err != ERR_OK:
                return err
            sum_real = 0.0
            for j in range(n_real):
                sum_real += x[j]
            for i in range(n_tot):
                if cost_mode == 0:
                    y = x[i] - (sum_real - x[base[i]] + x[i]) * inv
                else:
                    y = x[i] - cost_center
                f0[i] = max(h * y, -p * y)
    for i in range(n_tot):
        out[i, OUT_RUN] = run[i]
        out[i, OUT_TINT] = tint[i]
        out[i, OUT_XT] = x[i]
    return ERR_OK
