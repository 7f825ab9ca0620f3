"""Numba-JIT implementations of the hot loops.

Mirrors ``_impl_numpy`` function for function; see that module for the
closed-form element matrices.  All loops are sequential so results are
reproducible run to run.
"""
import numpy as np
from numba import njit

USING_NUMBA = True


@njit(cache=True)
def csr_matvec(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    y = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        y[i] = acc
    return y


@njit(cache=True)
def mass_fill(areas, wtri, emap, out):
    for e in range(areas.shape[0]):
        a = areas[e]
        ws = wtri[e, 0] + wtri[e, 1] + wtri[e, 2]
        for i in range(3):
            for j in range(3):
                if i == j:
                    coef = 4.0 * wtri[e, i] + 2.0 * ws
                else:
                    coef = wtri[e, i] + wtri[e, j] + ws
                out[emap[e, i, j]] += a * coef / 60.0


@njit(cache=True)
def stiffness_fill(areas, grads, wtri, emap, out):
    for e in range(areas.shape[0]):
        a = areas[e]
        wbar = (wtri[e, 0] + wtri[e, 1] + wtri[e, 2]) / 3.0
        gwx = 0.0
        gwy = 0.0
        for k in range(3):
            gwx += wtri[e, k] * grads[e, k, 0]
            gwy += wtri[e, k] * grads[e, k, 1]
        for i in range(3):
            for j in range(3):
                gij = grads[e, i, 0] * grads[e, j, 0] \
                    + grads[e, i, 1] * grads[e, j, 1]
                gw = grads[e, j, 0] * gwx + grads[e, j, 1] * gwy
                out[emap[e, i, j]] += a * wbar * gij + a / 3.0 * gw


@njit(cache=True)
def convection_fill(areas, grads, vel, emap, out):
    for e in range(areas.shape[0]):
        a3 = areas[e] / 3.0
        for i in range(3):
            vg = vel[e, 0] * grads[e, i, 0] + vel[e, 1] * grads[e, i, 1]
            for j in range(3):
                out[emap[e, i, j]] += a3 * vg


@njit(cache=True)
def history_comb(hist, w):
    m, n = hist.shape
    out = np.zeros(n)
    for k in range(m):
        wk = w[k]
        for i in range(n):
            out[i] += wk * hist[k, i]
    return out


@njit(cache=True)
def volterra_mode(qlam, blam, tau, nsteps, beta, gamma, alpha, z0, powers,
                  farr, a0, at0, att0, damping):
    a = np.empty(nsteps + 1)
    at = np.empty(nsteps + 1)
    att = np.empty(nsteps + 1)
    a[0], at[0], att[0] = a0, at0, att0
    taualph = tau ** (1.0 - alpha) if damping else 0.0
    denom = 1.0 + beta * tau * tau * qlam
    if damping:
        denom += gamma * tau * taualph * z0 * blam
    for n in range(nsteps):
        pa = a[n] + tau * at[n] + (0.5 - beta) * tau * tau * att[n]
        va = at[n] + (1.0 - gamma) * tau * att[n]
        num = farr[n + 1] - qlam * pa
        if damping:
            ups = (powers[n + 1] - powers[n]) * z0 * at[0]
            for j in range(1, n + 1):
                ups += (powers[j + 1] - powers[j - 1]) * z0 * at[n + 1 - j]
            num -= taualph * blam * (z0 * va + ups)
        x = num / denom
        a[n + 1] = pa + beta * tau * tau * x
        at[n + 1] = va + gamma * tau * x
        att[n + 1] = x
    return a, at, att
