"""Pure-NumPy implementations of the hot loops.

Reference versions of everything in ``_impl_numba``; selected through
``hifusim.backend``.  Scatter accumulation uses the same element ordering as
the JIT loops so both backends produce identical rounding per run.
"""
import numpy as np

USING_NUMBA = False


def csr_matvec(indptr, indices, data, x):
    y = np.zeros(indptr.shape[0] - 1)
    prod = data * x[indices]
    nonempty = indptr[:-1] < indptr[1:]
    if prod.shape[0]:
        y[nonempty] = np.add.reduceat(prod, indptr[:-1][nonempty])
    return y


def mass_fill(areas, wtri, emap, out):
    """Accumulate element matrices of (w phi_i, phi_j), w piecewise linear.

    Closed form: for weight values (w1, w2, w3) on a triangle of area A,
        diag:     A (4 w_i + 2 sum(w)) / 60
        off-diag: A (w_i + w_j + sum(w)) / 60
    exact for the cubic integrand.
    """
    ws = wtri.sum(axis=1)
    vals = np.empty((areas.shape[0], 3, 3))
    for i in range(3):
        for j in range(3):
            if i == j:
                coef = 4.0 * wtri[:, i] + 2.0 * ws
            else:
                coef = wtri[:, i] + wtri[:, j] + ws
            vals[:, i, j] = areas * coef / 60.0
    out += np.bincount(emap.ravel(), weights=vals.ravel(),
                       minlength=out.shape[0])


def stiffness_fill(areas, grads, wtri, emap, out):
    """Accumulate element matrices of (grad phi_j, grad(w phi_i)).

    Row index i is the test function.  With constant gradients g_i and a
    piecewise-linear weight,
        K[i, j] = A wbar (g_i . g_j) + (A/3) (g_j . grad w).
    The second term is independent of i, which makes the matrix
    nonsymmetric for non-constant w.
    """
    wbar = wtri.mean(axis=1)
    gram = np.einsum('eik,ejk->eij', grads, grads)
    gradw = np.einsum('ei,eik->ek', wtri, grads)
    gw = np.einsum('ejk,ek->ej', grads, gradw)
    vals = (areas * wbar)[:, None, None] * gram \
        + (areas / 3.0)[:, None, None] * gw[:, None, :]
    out += np.bincount(emap.ravel(), weights=vals.ravel(),
                       minlength=out.shape[0])


def convection_fill(areas, grads, vel, emap, out):
    """Accumulate element matrices of ((v . grad phi_i), phi_j).

    v is constant per element; C[i, j] = (v . g_i) A / 3 for every j.
    """
    vg = np.einsum('eik,ek->ei', grads, vel)
    vals = np.repeat(((areas / 3.0)[:, None] * vg)[:, :, None], 3, axis=2)
    out += np.bincount(emap.ravel(), weights=vals.ravel(),
                       minlength=out.shape[0])


def history_comb(hist, w):
    """Weighted combination of history rows: sum_m w[m] * hist[m, :]."""
    return w @ hist


def volterra_mode(qlam, blam, tau, nsteps, beta, gamma, alpha, z0, powers,
                  farr, a0, at0, att0, damping):
    """Scalar mode recursion: a'' + q lam a + b lam D_t^alpha a = f.

    Same predictor-corrector and L1 quadrature as the PDE stepper, reduced
    to one degree of freedom.  Returns (a, a_t, a_tt) trajectories of
    length nsteps + 1.
    """
    a = np.empty(nsteps + 1)
    at = np.empty(nsteps + 1)
    att = np.empty(nsteps + 1)
    a[0], at[0], att[0] = a0, at0, att0
    taualph = tau ** (1.0 - alpha) if damping else 0.0
    denom = 1.0 + beta * tau * tau * qlam
    if damping:
        denom += gamma * tau * taualph * z0 * blam
        zi = (powers[2:] - powers[:-2]) * z0
    for n in range(nsteps):
        pa = a[n] + tau * at[n] + (0.5 - beta) * tau * tau * att[n]
        va = at[n] + (1.0 - gamma) * tau * att[n]
        num = farr[n + 1] - qlam * pa
        if damping:
            ups = (powers[n + 1] - powers[n]) * z0 * at[0]
            if n >= 1:
                ups += np.dot(zi[:n], at[1:n + 1][::-1])
            num -= taualph * blam * (z0 * va + ups)
        x = num / denom
        a[n + 1] = pa + beta * tau * tau * x
        at[n + 1] = va + gamma * tau * x
        att[n + 1] = x
    return a, at, att
