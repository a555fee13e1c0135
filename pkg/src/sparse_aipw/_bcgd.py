"""Inner group sweep of the block coordinate descent, compiled and reference.

Both functions update ``eta`` (linear index) and ``b1`` in place and return
``(nll, stalled)``.  ``zt`` is the standardized design transposed so that a
column of the design is a contiguous row.
"""
import math

import numpy as np
from numba import njit
from scipy.special import expit


@njit(cache=True)
def _nll(eta, delta):
    s = 0.0
    for i in range(eta.size):
        e = eta[i]
        s += _softplus(e) - delta[i] * e
    return s


@njit(cache=True)
def _softplus(e):
    return max(e, 0.0) + math.log1p(math.exp(-abs(e)))


@njit(cache=True)
def _nll_change(eta, zd, a, delta):
    # sum of softplus(eta + s) - softplus(eta) - delta * s, termwise so that
    # tiny steps are not swamped by cancellation between two large sums
    s = 0.0
    for i in range(eta.size):
        t = a * zd[i]
        e = eta[i]
        if abs(t) < 30.0:
            sig = 1.0 / (1.0 + math.exp(-e)) if e >= 0 else math.exp(e) / (1.0 + math.exp(e))
            s += math.log1p(math.expm1(t) * sig) - delta[i] * t
        else:
            s += _softplus(e + t) - _softplus(e) - delta[i] * t
    return s


def nll_change(eta, shift, delta):
    """Vectorized ``nll(eta + shift) - nll(eta)`` with the same termwise form."""
    eta = np.asarray(eta, dtype=float)
    shift = np.broadcast_to(np.asarray(shift, dtype=float), eta.shape)
    with np.errstate(over="ignore"):
        small = np.log1p(np.expm1(shift) * expit(eta))
    big = np.logaddexp(0.0, eta + shift) - np.logaddexp(0.0, eta)
    return float(np.sum(np.where(np.abs(shift) < 30.0, small, big) - delta * shift))


@njit(cache=True)
def sweep_compiled(zt, delta, eta, b1, ptr, cols, working, weights,
                   alpha0, backtrack, armijo, h_floor, h_cap, max_bt):
    n = eta.size
    nll = _nll(eta, delta)
    stalled = False
    resid = np.empty(n)
    wvec = np.empty(n)
    zd = np.empty(n)
    for k in working:
        lo, hi = ptr[k], ptr[k + 1]
        df = hi - lo
        for i in range(n):
            pr = 1.0 / (1.0 + math.exp(-eta[i]))
            resid[i] = pr - delta[i]
            wvec[i] = pr * (1.0 - pr)
        grad = np.empty(df)
        bg = np.empty(df)
        curv = 0.0
        for t in range(df):
            c = cols[lo + t]
            gsum = 0.0
            csum = 0.0
            for i in range(n):
                zv = zt[c, i]
                gsum += zv * resid[i]
                csum += wvec[i] * zv * zv
            grad[t] = gsum
            curv += csum
            bg[t] = b1[c]
        h = min(max(curv / df, h_floor), h_cap)
        w = weights[k]
        unorm = 0.0
        for t in range(df):
            u = grad[t] - h * bg[t]
            unorm += u * u
        unorm = math.sqrt(unorm)
        d = np.empty(df)
        if unorm <= w:
            for t in range(df):
                d[t] = -bg[t]
        else:
            for t in range(df):
                d[t] = -(grad[t] - w * (grad[t] - h * bg[t]) / unorm) / h
        dnz = False
        for t in range(df):
            if d[t] != 0.0:
                dnz = True
        if not dnz:
            continue
        nb = 0.0
        nbd = 0.0
        dg = 0.0
        for t in range(df):
            nb += bg[t] * bg[t]
            nbd += (bg[t] + d[t]) ** 2
            dg += d[t] * grad[t]
        nb = math.sqrt(nb)
        dm = dg + w * (math.sqrt(nbd) - nb)
        if not dm < 0.0:
            continue
        for i in range(n):
            s = 0.0
            for t in range(df):
                s += zt[cols[lo + t], i] * d[t]
            zd[i] = s
        a = alpha0
        found = False
        change = 0.0
        for _ in range(max_bt + 1):
            change = _nll_change(eta, zd, a, delta)
            pn = 0.0
            for t in range(df):
                pn += (bg[t] + a * d[t]) ** 2
            phi = change + w * (math.sqrt(pn) - nb)
            if phi <= a * armijo * dm:
                found = True
                break
            a *= backtrack
        if not found:
            stalled = True
            continue
        for t in range(df):
            b1[cols[lo + t]] = bg[t] + a * d[t]
        for i in range(n):
            eta[i] += a * zd[i]
        nll += change
    return nll, stalled


def sweep_reference(zt, delta, eta, b1, ptr, cols, working, weights,
                    alpha0, backtrack, armijo, h_floor, h_cap, max_bt):
    from .propensity import bcgd_direction

    def nll_of(e):
        return float(np.sum(np.logaddexp(0.0, e) - delta * e))

    nll = nll_of(eta)
    stalled = False
    for k in working:
        g = cols[ptr[k]:ptr[k + 1]]
        zg = zt[g]
        prob = 1.0 / (1.0 + np.exp(-eta))
        grad = zg @ (prob - delta)
        h = min(max(np.mean(np.einsum("ji,ji,i->j", zg, zg, prob * (1 - prob))), h_floor), h_cap)
        bg = b1[g].copy()
        d = bcgd_direction(bg, grad, h, weights[k] / np.sqrt(g.size), g.size)
        if not np.any(d != 0):
            continue
        nb = np.linalg.norm(bg)
        dm = float(d @ grad) + weights[k] * (np.linalg.norm(bg + d) - nb)
        if not dm < 0:
            continue
        zd = d @ zg
        a = alpha0
        for _ in range(max_bt + 1):
            change = nll_change(eta, a * zd, delta)
            if change + weights[k] * (np.linalg.norm(bg + a * d) - nb) <= a * armijo * dm:
                break
            a *= backtrack
        else:
            stalled = True
            continue
        b1[g] = bg + a * d
        eta += a * zd
        nll += change
    return nll, stalled
