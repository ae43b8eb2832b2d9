"""Compiled scalar kernels shared by the coefficient, regularizer and ODE code.

Everything here is a function of the distance ``d = |t - t0|`` to the
singular time; callers supply the sign of ``t - t0`` when they need a time
derivative.  Parameter vectors are plain float arrays so the kernels can be
called from numba without object overhead.

Layout of ``par`` (model parameters)::

    0 lambda0   1 c   2 gamma   3 m   4 phi   5 theta   6 omega

Layout of ``reg`` (regularization parameters)::

    0 regime (1..4)   1 eps   2 z   3 r   4 rs_sum   5 pq_sum   6 scale
"""

import math

import numpy as np
from numba import njit

CONSTANT = 0
POWER_BLOWUP = 1
OSCILLATORY = 2
LOG_GROWTH = 3


@njit(cache=True, nogil=True)
def profile(d, fam, par):
    """Return ``(A(d), dA/dd)`` for the coefficient family ``fam``."""
    lam0 = par[0]
    c = par[1]
    if fam == CONSTANT:
        return lam0 + c, 0.0
    if fam == POWER_BLOWUP:
        g = par[2]
        p = c * d ** (-g)
        return lam0 + p, -g * p / d
    if fam == OSCILLATORY:
        m = par[3]
        om = par[6]
        ph = om * d ** (-m) + par[4]
        val = lam0 + c * (1.0 + 0.5 * math.sin(ph))
        der = 0.5 * c * math.cos(ph) * (-m * om * d ** (-m - 1.0))
        return val, der
    # LOG_GROWTH
    th = par[5]
    lg = math.log(d)
    alg = abs(lg)
    val = lam0 + c * (1.0 + alg ** th)
    if lg == 0.0:
        # kink of |log d| at d = 1; the derivative blows up there for th < 1
        return val, (math.inf if th < 1.0 else 0.0)
    sgn = 1.0 if lg > 0.0 else -1.0
    der = c * th * alg ** (th - 1.0) * sgn / d
    return val, der


@njit(cache=True, nogil=True)
def profile_array(ds, fam, par):
    n = ds.shape[0]
    a = np.empty(n)
    da = np.empty(n)
    for i in range(n):
        a[i], da[i] = profile(ds[i], fam, par)
    return a, da


@njit(cache=True, nogil=True)
def regularized(d, fam, par, reg):
    """Return ``(a_eps, da_eps/dd, a_scaled)`` at distance ``d`` from t0.

    ``a_scaled`` is the (rescaled) original coefficient, so callers can form
    ``a_eps - a`` without a second evaluation.  Branch membership is
    half-open: ``d >= eps`` belongs to the outer branch.
    """
    regime = int(reg[0])
    eps = reg[1]
    scale = reg[6]
    a, da = profile(d, fam, par)
    a /= scale
    da /= scale
    if regime == 1:
        z = reg[2]
        r = reg[3]
        rs = reg[4]
        if d >= eps:
            k = eps ** (2.0 - rs)
            return a + k / (d * d), da - 2.0 * k / (d * d * d), a
        zr = z + r
        w = (d / eps) ** zr
        ae = a * w + eps ** (-rs)
        dae = da * w + a * zr * w / d
        return ae, dae, a
    if regime == 2 or regime == 3:
        pq = reg[5]
        if d >= eps:
            k = eps ** (3.0 - pq)
            return a + k / (d * d), da - 2.0 * k / (d * d * d), a
        ae_edge, _ = profile(eps, fam, par)
        return ae_edge / scale + eps ** (1.0 - pq), 0.0, a
    # regime 4: frozen tail
    if d >= eps:
        return a, da, a
    ae_edge, _ = profile(eps, fam, par)
    return ae_edge / scale, 0.0, a


@njit(cache=True, nogil=True)
def regularized_array(ds, fam, par, reg):
    n = ds.shape[0]
    ae = np.empty(n)
    dae = np.empty(n)
    a = np.empty(n)
    for i in range(n):
        ae[i], dae[i], a[i] = regularized(ds[i], fam, par, reg)
    return ae, dae, a


@njit(cache=True, nogil=True)
def i1_integrand(ds, fam, par, reg):
    n = ds.shape[0]
    out = np.empty(n)
    for i in range(n):
        ae, dae, _ = regularized(ds[i], fam, par, reg)
        out[i] = abs(dae) / ae
    return out


@njit(cache=True, nogil=True)
def i2_integrand(ds, fam, par, reg):
    n = ds.shape[0]
    out = np.empty(n)
    for i in range(n):
        ae, _, a = regularized(ds[i], fam, par, reg)
        out[i] = abs(ae - a) / math.sqrt(ae)
    return out


# --------------------------------------------------------------------------
# Dormand-Prince 5(4) with the standard quartic continuous extension.

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176,
                           -5103 / 18656)
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (-71 / 57600, 71 / 16695, -71 / 1920, 17253 / 339200,
                          -22 / 525, 1 / 40)

DENSE_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_MAXSTEPS = 3


@njit(cache=True, nogil=True)
def _coef_at(t, t0, fam, par):
    a, _ = profile(abs(t - t0), fam, par)
    return a


@njit(cache=True, nogil=True)
def _rhs(t, y, xi, t0, fam, par, out):
    a = _coef_at(t, t0, fam, par)
    out[0] = xi * y[1]
    out[1] = -a * xi * y[0]
    out[2] = xi * y[3]
    out[3] = -a * xi * y[2]
    return a


@njit(cache=True, nogil=True)
def dopri5(y0, t_start, t_end, xi, t0, fam, par, tol, floor, dense_t,
           near, max_record, max_steps, h_min_rel):
    """Integrate the scaled mode system on ``[t_start, t_end]``.

    The state is ``(Re v, Re v'/xi, Im v, Im v'/xi)``.  ``dense_t`` must be
    monotone in the direction of integration.  Accepted steps with
    ``|t - t0| < near`` are recorded, decimated by two whenever the buffer of
    ``max_record`` entries fills, so the record stays evenly thinned.

    The local error is measured in the energy-weighted norm
    ``sqrt(a)|dv| + |dw|`` against ``tol * (sqrt(a)|v| + |w| + floor)``.
    """
    direction = 1.0 if t_end >= t_start else -1.0
    span = abs(t_end - t_start)
    nd = dense_t.shape[0]
    yd = np.empty((nd, 4))
    rec_t = np.empty(max_record)
    rec_y = np.empty((max_record, 4))
    n_rec = 0
    stride = 1
    since = 0

    y = y0.copy()
    t = t_start
    k = np.empty((7, 4))
    ytmp = np.empty(4)
    ynew = np.empty(4)
    a = _rhs(t, y, xi, t0, fam, par, k[0])

    # first step guess from the local frequency
    h = span * 1e-3
    wloc = xi * math.sqrt(max(a, 1e-300))
    if wloc > 0:
        h = min(h, 0.05 / wloc)
    h = max(h, span * 1e-12)
    id_ = 0
    while id_ < nd and (dense_t[id_] - t) * direction <= 0.0:
        for j in range(4):
            yd[id_, j] = y[j]
        id_ += 1

    n_steps = 0
    n_rej = 0
    status = STATUS_OK
    h_min = h_min_rel * max(abs(t_end), abs(t_start), span)
    while (t_end - t) * direction > 0.0:
        if n_steps + n_rej >= max_steps:
            status = STATUS_MAXSTEPS
            break
        if h < h_min:
            status = STATUS_UNDERFLOW
            break
        last = False
        if h >= abs(t_end - t):
            h = abs(t_end - t)
            last = True
        hs = h * direction
        for j in range(4):
            ytmp[j] = y[j] + hs * A21 * k[0, j]
        _rhs(t + C2 * hs, ytmp, xi, t0, fam, par, k[1])
        for j in range(4):
            ytmp[j] = y[j] + hs * (A31 * k[0, j] + A32 * k[1, j])
        _rhs(t + C3 * hs, ytmp, xi, t0, fam, par, k[2])
        for j in range(4):
            ytmp[j] = y[j] + hs * (A41 * k[0, j] + A42 * k[1, j]
                                   + A43 * k[2, j])
        _rhs(t + C4 * hs, ytmp, xi, t0, fam, par, k[3])
        for j in range(4):
            ytmp[j] = y[j] + hs * (A51 * k[0, j] + A52 * k[1, j]
                                   + A53 * k[2, j] + A54 * k[3, j])
        _rhs(t + C5 * hs, ytmp, xi, t0, fam, par, k[4])
        for j in range(4):
            ytmp[j] = y[j] + hs * (A61 * k[0, j] + A62 * k[1, j]
                                   + A63 * k[2, j] + A64 * k[3, j]
                                   + A65 * k[4, j])
        _rhs(t + hs, ytmp, xi, t0, fam, par, k[5])
        for j in range(4):
            ynew[j] = y[j] + hs * (B1 * k[0, j] + B3 * k[2, j] + B4 * k[3, j]
                                   + B5 * k[4, j] + B6 * k[5, j])
        t_new = t + hs if not last else t_end
        a_new = _rhs(t_new, ynew, xi, t0, fam, par, k[6])

        sa = math.sqrt(max(a_new, 0.0))
        num = 0.0
        den = 0.0
        for j in (0, 2):
            ev = hs * (E1 * k[0, j] + E3 * k[2, j] + E4 * k[3, j]
                       + E5 * k[4, j] + E6 * k[5, j] + E7 * k[6, j])
            ew = hs * (E1 * k[0, j + 1] + E3 * k[2, j + 1]
                       + E4 * k[3, j + 1] + E5 * k[4, j + 1]
                       + E6 * k[5, j + 1] + E7 * k[6, j + 1])
            num += sa * abs(ev) + abs(ew)
            den += (sa * max(abs(y[j]), abs(ynew[j]))
                    + max(abs(y[j + 1]), abs(ynew[j + 1])))
        err = num / (tol * (den + floor))
        if not math.isfinite(err):
            status = STATUS_NONFINITE
            break

        if err <= 1.0:
            # dense output for sample times inside (t, t_new]
            while id_ < nd and (dense_t[id_] - t_new) * direction <= 0.0:
                th = (dense_t[id_] - t) / hs
                for j in range(4):
                    acc = 0.0
                    for s in range(7):
                        q = th * (DENSE_P[s, 0] + th * (DENSE_P[s, 1]
                                  + th * (DENSE_P[s, 2] + th * DENSE_P[s, 3])))
                        acc += k[s, j] * q
                    yd[id_, j] = y[j] + hs * acc
                id_ += 1
            t = t_new
            for j in range(4):
                y[j] = ynew[j]
                k[0, j] = k[6, j]
            n_steps += 1
            if abs(t - t0) < near:
                since += 1
                if since >= stride:
                    since = 0
                    if n_rec == max_record:
                        half = max_record // 2
                        for i in range(half):
                            rec_t[i] = rec_t[2 * i + 1]
                            for j in range(4):
                                rec_y[i, j] = rec_y[2 * i + 1, j]
                        n_rec = half
                        stride *= 2
                    rec_t[n_rec] = t
                    for j in range(4):
                        rec_y[n_rec, j] = y[j]
                    n_rec += 1
            fac = 0.9 * err ** (-0.2) if err > 0.0 else 5.0
            h = h * min(5.0, max(0.2, fac))
        else:
            n_rej += 1
            h = h * max(0.1, 0.9 * err ** (-0.2))
    return (t, y, yd[:id_], rec_t[:n_rec], rec_y[:n_rec], n_steps, n_rej,
            status)
