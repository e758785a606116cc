"""Compiled inner loop of the explicit conservative scheme.

All routines take plain arrays so that numba can compile them once; the
Python wrappers in :mod:`pmnl.solver` own the bookkeeping.
"""

from __future__ import annotations

import numba as nb
import numpy as np

REACHED = 0
BUFFER_FULL = 1
THRESHOLD = 2
DT_FLOOR = 3
SOURCE_EXHAUSTED = 4


@nb.njit(cache=True, inline="always")
def fpow(x, p):
    # exact fast paths for the exponents that dominate test and sweep runs
    if p == 1.0:
        return x
    if p == 2.0:
        return x * x
    if p == 3.0:
        return x * x * x
    if p == 4.0:
        y = x * x
        return y * y
    if p == 0.5:
        return np.sqrt(x)
    return x**p


@nb.njit(cache=True)
def rates_into(out, u, f, weights, links, bcell, barea, mu, nu, a, src, fb):
    """Right-hand side of the semi-discrete regularized equation.

    ``f`` must already hold ``u**mu``.
    """
    n = u.shape[0]
    for i in range(n):
        out[i] = src - a * fpow(u[i], nu)
    for i in range(n - 1):
        q = links[i] * (f[i + 1] - f[i])
        out[i] += q / weights[i]
        out[i + 1] -= q / weights[i + 1]
    for k in range(bcell.shape[0]):
        c = bcell[k]
        out[c] += barea[k] * mu * fpow(u[c], mu - 1.0) * fb[k] / weights[c]


@nb.njit(cache=True)
def rates(u, weights, links, bcell, barea, mu, nu, a, src, fb):
    f = np.empty_like(u)
    for i in range(u.shape[0]):
        f[i] = fpow(u[i], mu)
    out = np.empty_like(u)
    rates_into(out, u, f, weights, links, bcell, barea, mu, nu, a, src, fb)
    return out


@nb.njit(cache=True)
def stable_dt(u, mu, nu, a, stab, cfl):
    """Explicit stability limit from the diffusion and absorption Lipschitz bounds."""
    umax = u.max()
    umin = u.min()
    diff = stab * mu * fpow(umax, mu - 1.0)
    if nu >= 1.0:
        absorb = a * nu * fpow(umax, nu - 1.0)
    elif umin > 0:
        absorb = a * nu * umin ** (nu - 1.0)
    else:
        absorb = np.inf
    return cfl / (diff + absorb)


@nb.njit(cache=True)
def own_flux(u, wk, l):
    nbf, n = wk.shape
    out = np.zeros(nbf)
    for i in range(n):
        ul = fpow(u[i], l)
        for k in range(nbf):
            out[k] += wk[k, i] * ul
    return out


@nb.njit(cache=True)
def pow_into(dst, u, p):
    """``dst[:] = u**p`` with the exponent branch hoisted out of the loop."""
    n = u.shape[0]
    if p == 1.0:
        for i in range(n):
            dst[i] = u[i]
    elif p == 2.0:
        for i in range(n):
            dst[i] = u[i] * u[i]
    elif p == 3.0:
        for i in range(n):
            dst[i] = u[i] * u[i] * u[i]
    elif p == 4.0:
        for i in range(n):
            y = u[i] * u[i]
            dst[i] = y * y
    elif p == 0.5:
        for i in range(n):
            dst[i] = np.sqrt(u[i])
    else:
        for i in range(n):
            dst[i] = u[i] ** p


@nb.njit(cache=True)
def advance(u, t, t_target, weights, links, bcell, barea, mu, nu, a, src, floor,
            wk, l, prev_t, prev_f, has_prev, stab, cfl, growth_cap, dt_min, u_max,
            buf_t, buf_sup, buf_l1, buf_in, buf_f):
    """March ``u`` in place from ``t`` towards ``t_target``.

    The boundary integrand is taken from the previous iterate (``prev_t``,
    ``prev_f``, linear in time) when ``has_prev``; otherwise it is zero.
    Each accepted step appends one record to the buffers.  Returns
    ``(n_written, t, status)``.
    """
    n = u.shape[0]
    nbf = bcell.shape[0]
    cap = buf_t.shape[0]
    kprev = prev_t.shape[0]
    idx = 0
    fb = np.zeros(nbf)
    f = np.empty(n)
    g = np.empty(n)
    r = np.empty(n)
    q = np.zeros(n + 1)  # face fluxes of u^mu; the two end faces stay zero
    iw = 1.0 / weights
    written = 0
    while t < t_target:
        if written >= cap:
            return written, t, BUFFER_FULL
        if has_prev:
            if t > prev_t[kprev - 1]:
                return written, t, SOURCE_EXHAUSTED
            while idx + 1 < kprev and prev_t[idx + 1] <= t:
                idx += 1
            if idx + 1 < kprev:
                t0 = prev_t[idx]
                t1 = prev_t[idx + 1]
                w = (t - t0) / (t1 - t0) if t1 > t0 else 1.0
                for k in range(nbf):
                    fb[k] = (1.0 - w) * prev_f[idx, k] + w * prev_f[idx + 1, k]
            else:
                for k in range(nbf):
                    fb[k] = prev_f[kprev - 1, k]
        pow_into(f, u, mu)
        pow_into(g, u, nu)
        for i in range(n - 1):
            q[i + 1] = links[i] * (f[i + 1] - f[i])
        for i in range(n):
            r[i] = src - a * g[i] + (q[i + 1] - q[i]) * iw[i]
        umax = u[0]
        umin = u[0]
        for i in range(1, n):
            v = u[i]
            if v > umax:
                umax = v
            if v < umin:
                umin = v
        diff = stab * mu * fpow(umax, mu - 1.0)
        if nu >= 1.0:
            absorb = a * nu * fpow(umax, nu - 1.0)
        elif umin > 0:
            absorb = a * nu * umin ** (nu - 1.0)
        else:
            absorb = np.inf
        dt = cfl / (diff + absorb)
        influx = 0.0
        for k in range(nbf):
            c = bcell[k]
            gain = barea[k] * mu * fpow(u[c], mu - 1.0) * fb[k]
            influx += gain
            r[c] += gain * iw[c]
        for k in range(nbf):
            c = bcell[k]
            # resolve boundary-driven growth: cap the relative change per step
            if r[c] > 0.0:
                dt = min(dt, growth_cap * u[c] / r[c])
        if dt < dt_min or t + dt <= t:
            return written, t, DT_FLOOR
        last = False
        if t + dt >= t_target:
            dt = t_target - t
            last = True
        umax = 0.0
        mass = 0.0
        for i in range(n):
            v = u[i] + dt * r[i]
            if v < floor:
                v = floor
            u[i] = v
            if v > umax:
                umax = v
            mass += weights[i] * v
        t = t_target if last else t + dt
        buf_t[written] = t
        buf_sup[written] = umax
        buf_l1[written] = mass
        buf_in[written] = influx
        pow_into(g, u, l)
        for k in range(nbf):
            acc = 0.0
            for i in range(n):
                acc += wk[k, i] * g[i]
            buf_f[written, k] = acc
        written += 1
        if umax > u_max:
            return written, t, THRESHOLD
    return written, t, REACHED
