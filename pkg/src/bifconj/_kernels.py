"""Compiled inner loops for normal forms with catalog tails.

A normal form at a fixed step h is packed by :func:`pack` as
``[degree, s, tail_code, t]``.  Tail codes: 0 zero, 1 coef*h**p (t holds
the value), 2 coef*sin(x) (t holds coef), 3 constant (t holds it).
"""
from __future__ import annotations

import math

import numba
import numpy as np

NJIT = dict(cache=True, nogil=True)


def pack(nf, h) -> np.ndarray:
    """[degree, s, tail_code, tail constant at this h (or sin coefficient)]."""
    code = nf.tail.code
    if code == 1:
        t = nf.tail.coef * h ** nf.tail.p
    elif code == 0:
        t = 0.0
    else:
        t = nf.tail.coef
    return np.array([nf.degree, nf.s, code, t], dtype=np.float64)


@numba.njit(inline="always", **NJIT)
def nf_eval(pr, h, x, a):
    if pr[2] == 2.0:
        t = pr[3] * math.sin(x)
    else:
        t = pr[3]
    xd = x * x if pr[0] == 2.0 else x * x * x
    return (1.0 + h * a) * x + h * xd * (pr[1] + x * t)


@numba.njit(inline="always", **NJIT)
def nf_eval_deriv(pr, h, x, a):
    if pr[2] == 2.0:
        t = pr[3] * math.sin(x)
        tx = pr[3] * math.cos(x)
    else:
        t = pr[3]
        tx = 0.0
    x2 = x * x
    if pr[0] == 2.0:
        v = (1.0 + h * a) * x + h * x2 * (pr[1] + x * t)
        dv = 1.0 + h * a + h * x * (2.0 * pr[1] + x * (3.0 * t + x * tx))
    else:
        x3 = x2 * x
        v = (1.0 + h * a) * x + h * x3 * (pr[1] + x * t)
        dv = 1.0 + h * a + h * x2 * (3.0 * pr[1] + x * (4.0 * t + x * tx))
    return v, dv


@numba.njit(**NJIT)
def nf_deriv(pr, h, x, a):
    return nf_eval_deriv(pr, h, x, a)[1]


@numba.njit(**NJIT)
def nf_inverse(pr, h, a, y):
    """Solve nf(u) = y.

    The predictor u = 2y - nf(y) is already accurate to second order in
    the (small) displacement of the map, so one Newton step normally lands
    on machine precision; bisection guards the rare failure.
    """
    if y == 0.0:
        return 0.0
    return nf_inverse_pred(pr, h, a, y, nf_eval(pr, h, y, a))


@numba.njit(**NJIT)
def nf_inverse_pred(pr, h, a, y, fy):
    """nf^{-1}(y) given fy = nf(y) (free along an orbit: the previous point)."""
    if y == 0.0:
        return 0.0
    # first Newton step unrolled: it is the only one needed in practice
    u = 2.0 * y - fy
    v, dv = nf_eval_deriv(pr, h, u, a)
    if dv > 0.0:
        step = (v - y) / dv
        u -= step
        # quadratic convergence: the next correction would be ~step**2/|u|,
        # below one ulp once |step| < 3e-8 |u| on the box (|u| < 1/2)
        if abs(step) <= 3e-8 * abs(u):
            return u
    for _ in range(40):
        v, dv = nf_eval_deriv(pr, h, u, a)
        fu = v - y
        if fu == 0.0:
            return u
        if dv <= 0.0:
            break
        step = fu / dv
        u -= step
        if abs(step) <= 3e-8 * abs(u):
            return u
    # safeguard: bisection on a widening bracket around y
    w = abs(y) * 0.5 + 1e-300
    lo = y - w
    hi = y + w
    while nf_eval(pr, h, lo, a) > y:
        lo -= w
        w *= 2.0
    while nf_eval(pr, h, hi, a) < y:
        hi += w
        w *= 2.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if nf_eval(pr, h, mid, a) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@numba.njit(**NJIT)
def conj_eval_serial(xs, pF, pG, h, a, anc, Fanc, Janc, GJanc, d,
              e_att, g_att, e_rep, g_rep, n_max, out, snapped, depth):
    """Evaluate J at every x in xs.

    F is the source map, G the target.  The anchor domain is the segment
    between ``anc`` and ``Fanc = F(anc)``; orbits of F move in direction
    ``d`` (+1/-1) toward the fixed point ``e_att`` (NaN if none).  The
    fixed point on the other side is ``e_rep`` (NaN if the interval is
    bounded by a non-fixed endpoint there).
    """
    lo_d = min(anc, Fanc)
    hi_d = max(anc, Fanc)
    slope = (GJanc - Janc) / (Fanc - anc)
    for i in range(xs.shape[0]):
        x = xs[i]
        snapped[i] = False
        if x == e_att:
            out[i] = g_att
            depth[i] = 0
            continue
        if x == e_rep:
            out[i] = g_rep
            depth[i] = 0
            continue
        u = x
        k = 0
        snap = False
        if (u - Fanc) * d > 0.0 and not (lo_d <= u <= hi_d):
            # beyond F(anc): pull back with F^{-1}
            fu = nf_eval(pF, h, u, a)
            while (u - hi_d if d > 0 else lo_d - u) > 0.0:
                un = nf_inverse_pred(pF, h, a, u, fu)
                fu = u
                u = un
                k += 1
                if k > n_max:
                    snap = True
                    break
        elif not (lo_d <= u <= hi_d):
            while (lo_d - u if d > 0 else u - hi_d) > 0.0:
                u = nf_eval(pF, h, u, a)
                k -= 1
                if -k > n_max:
                    snap = True
                    break
        if snap:
            snapped[i] = True
            depth[i] = k
            out[i] = g_att if k > 0 else g_rep
            continue
        if u < lo_d:
            u = lo_d
        elif u > hi_d:
            u = hi_d
        if u == anc:
            v = Janc
        elif u == Fanc:
            v = GJanc
        else:
            v = Janc + (u - anc) * slope
        if k > 0:
            for _ in range(k):
                v = nf_eval(pG, h, v, a)
        elif k < 0:
            gv = nf_eval(pG, h, v, a)
            for _ in range(-k):
                vn = nf_inverse_pred(pG, h, a, v, gv)
                gv = v
                v = vn
        out[i] = v
        depth[i] = k


_START, _PULL, _PUSH, _GFWD, _GINV, _FREE = 0, 1, 2, 3, 4, 5


@numba.njit(**NJIT)
def conj_eval(xs, pF, pG, h, a, anc, Fanc, Janc, GJanc, d,
              e_att, g_att, e_rep, g_rep, n_max, out, snapped, depth):
    """Same contract as :func:`conj_eval_serial`, interleaving 8 points.

    Each point's evaluation is a long chain of dependent map/inverse
    steps, so a single chain is latency bound; advancing several
    independent chains per pass lets the CPU overlap them.
    """
    L = 8
    n = xs.shape[0]
    lo_d = min(anc, Fanc)
    hi_d = max(anc, Fanc)
    slope = (GJanc - Janc) / (Fanc - anc)
    idx = np.full(L, -1, np.int64)
    ph = np.full(L, _FREE, np.int64)
    u = np.zeros(L)
    fu = np.zeros(L)
    v = np.zeros(L)
    gv = np.zeros(L)
    k = np.zeros(L, np.int64)
    rem = np.zeros(L, np.int64)
    nxt = 0
    busy = 0
    while True:
        for l in range(L):
            if ph[l] == _FREE:
                if nxt >= n:
                    continue
                idx[l] = nxt
                nxt += 1
                busy += 1
                ph[l] = _START
            i = idx[l]
            p = ph[l]
            if p == _START:
                x = xs[i]
                snapped[i] = False
                depth[i] = 0
                if x == e_att:
                    out[i] = g_att
                    ph[l] = _FREE
                    busy -= 1
                    continue
                if x == e_rep:
                    out[i] = g_rep
                    ph[l] = _FREE
                    busy -= 1
                    continue
                u[l] = x
                k[l] = 0
                if lo_d <= x <= hi_d:
                    p = _GFWD
                elif (x - Fanc) * d > 0.0:
                    fu[l] = nf_eval(pF, h, x, a)
                    ph[l] = _PULL
                    continue
                else:
                    ph[l] = _PUSH
                    continue
            elif p == _PULL:
                un = nf_inverse_pred(pF, h, a, u[l], fu[l])
                fu[l] = u[l]
                u[l] = un
                k[l] += 1
                if k[l] > n_max:
                    snapped[i] = True
                    depth[i] = k[l]
                    out[i] = g_att
                    ph[l] = _FREE
                    busy -= 1
                    continue
                if (un - hi_d if d > 0 else lo_d - un) > 0.0:
                    continue
                p = _GFWD
            elif p == _PUSH:
                un = nf_eval(pF, h, u[l], a)
                u[l] = un
                k[l] -= 1
                if -k[l] > n_max:
                    snapped[i] = True
                    depth[i] = k[l]
                    out[i] = g_rep
                    ph[l] = _FREE
                    busy -= 1
                    continue
                if (lo_d - un if d > 0 else un - hi_d) > 0.0:
                    continue
                p = _GFWD
            elif p == _GFWD:
                v[l] = nf_eval(pG, h, v[l], a)
                rem[l] -= 1
                if rem[l] == 0:
                    out[i] = v[l]
                    ph[l] = _FREE
                    busy -= 1
                continue
            elif p == _GINV:
                vn = nf_inverse_pred(pG, h, a, v[l], gv[l])
                gv[l] = v[l]
                v[l] = vn
                rem[l] -= 1
                if rem[l] == 0:
                    out[i] = vn
                    ph[l] = _FREE
                    busy -= 1
                continue
            # reached the anchor domain: interpolate, then unwind with G
            uu = u[l]
            if uu < lo_d:
                uu = lo_d
            elif uu > hi_d:
                uu = hi_d
            if uu == anc:
                vv = Janc
            elif uu == Fanc:
                vv = GJanc
            else:
                vv = Janc + (uu - anc) * slope
            depth[i] = k[l]
            v[l] = vv
            if k[l] == 0:
                out[i] = vv
                ph[l] = _FREE
                busy -= 1
            elif k[l] > 0:
                rem[l] = k[l]
                ph[l] = _GFWD
            else:
                rem[l] = -k[l]
                gv[l] = nf_eval(pG, h, vv, a)
                ph[l] = _GINV
        if busy == 0 and nxt >= n:
            break


@numba.njit(**NJIT)
def map_many(pr, h, a, xs):
    out = np.empty_like(xs)
    for i in range(xs.shape[0]):
        out[i] = nf_eval(pr, h, xs[i], a)
    return out


@numba.njit(**NJIT)
def orbit(pr, h, a, x0, n):
    out = np.empty(n + 1)
    out[0] = x0
    x = x0
    for i in range(n):
        x = nf_eval(pr, h, x, a)
        out[i + 1] = x
    return out


@numba.njit(**NJIT)
def gronwall(pG, h, a, seq, omega):
    """S_n = m_n (S_{n-1} + h |x_n|^omega), with m_n the multiplier at x_n."""
    out = np.empty(seq.shape[0])
    s = 0.0
    for n in range(seq.shape[0]):
        m = nf_deriv(pG, h, seq[n], a)
        s = m * (s + h * abs(seq[n]) ** omega)
        out[n] = s
    return out


@numba.njit(**NJIT)
def sandwich_inner(pFs, pGs, hs, als, wF, wG, tc, n_max, tol, res):
    """Envelope-a checks along x_n (source) and J(x_n) = G^n(x0) (target).

    Iteration stops once both orbits are within ``tol`` of their limits
    ``wF``/``wG`` or after ``n_max`` steps.  res[i] = [violations, last n,
    worst max(x_n, J(x_n)) - a_n, split-index violations, first failing n].
    """
    for i in range(hs.shape[0]):
        h = hs[i]
        a = als[i]
        if tc:
            x0 = -a / 3.0
        else:
            x0 = -math.sqrt(a / 8.0)
        xf = x0
        xg = x0
        lf = 1.0 + h * a
        viol = 0
        split_viol = 0
        first = -1
        worst = -1e300
        n_split = math.ceil(6.0 / (h * a))
        r = 1.0
        n = 0
        while True:
            if tc:
                an = -0.75 * a * lf / (1.0 + 2.0 / r)
                split = -2.0 * a / 3.0
            else:
                an = -0.8 * math.sqrt(a) * r / math.sqrt(5.0 + r * r)
                split = -math.sqrt(0.6 * a)
            m = max(xf, xg)
            if not (m < an):
                viol += 1
                if first < 0:
                    first = n
            if m - an > worst:
                worst = m - an
            if n > n_split and not (m < split):
                split_viol += 1
                if first < 0:
                    first = n
            if n >= n_max or (abs(xf - wF[i]) < tol and abs(xg - wG[i]) < tol):
                break
            xf = nf_eval(pFs[i], h, xf, a)
            xg = nf_eval(pGs[i], h, xg, a)
            r *= lf
            n += 1
        res[i, 0] = viol
        res[i, 1] = n
        res[i, 2] = worst
        res[i, 3] = split_viol
        res[i, 4] = first


@numba.njit(**NJIT)
def sandwich_outer(pFs, pGs, hs, als, z0s, wF, wG, tc, n_max, tol, res):
    """Envelope-b checks: b_n <= min(z_n, J(z_n)) with J(z_n) = G^n(z0)."""
    for i in range(hs.shape[0]):
        h = hs[i]
        a = als[i]
        zf = z0s[i]
        zg = z0s[i]
        lf = 1.0 + h * a
        r = 1.0
        viol = 0
        first = -1
        worst = -1e300
        n = 0
        while True:
            if tc:
                bn = -2.0 * a * lf / (1.0 + (a - 1.0) / r)
            else:
                bn = -2.0 * math.sqrt(a) / math.sqrt(1.0 + (a - 1.0) / (r * r))
            m = min(zf, zg)
            if not (bn <= m):
                viol += 1
                if first < 0:
                    first = n
            if bn - m > worst:
                worst = bn - m
            if n >= n_max or (abs(zf - wF[i]) < tol and abs(zg - wG[i]) < tol):
                break
            zf = nf_eval(pFs[i], h, zf, a)
            zg = nf_eval(pGs[i], h, zg, a)
            r *= lf
            n += 1
        res[i, 0] = viol
        res[i, 1] = n
        res[i, 2] = worst
        res[i, 3] = 0
        res[i, 4] = first


@numba.njit(**NJIT)
def orbit_until(pr, h, a, x0, limit, tol, n_max, forward):
    """Forward (or backward) orbit of x0 until within tol of limit or n_max steps."""
    buf = np.empty(min(n_max, 1 << 16) + 1)
    buf[0] = x0
    x = x0
    n = 0
    while n < n_max and abs(x - limit) >= tol:
        if forward:
            x = nf_eval(pr, h, x, a)
        else:
            x = nf_inverse(pr, h, a, x)
        n += 1
        if n >= buf.shape[0]:
            nb = np.empty(min(2 * buf.shape[0], n_max + 1))
            nb[:buf.shape[0]] = buf
            buf = nb
        buf[n] = x
    return buf[:n + 1].copy()
