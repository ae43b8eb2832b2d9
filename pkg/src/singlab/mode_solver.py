"""Fourier-mode integration of ``v'' + a(t) |xi|^2 v = 0`` and energy checks.

The integrator is an embedded Dormand-Prince 5(4) pair with quartic dense
output.  It advances the scaled state ``(v, v'/|xi|)`` so both components
have comparable size, and controls the local error in the energy norm
``sqrt(a)|dv| + |dw|``.  Near the singular time the step size collapses;
integration stops at distance ``delta_cut`` from ``t0``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .coeff_models import Regime
from .errors import CertificateViolation, IntegrationError
from .regularizer import build_a_eps, integral_I1, integral_I2

DEFAULT_CUT = 1e-8
N_SAMPLES = 200
MAX_RECORD = 4096
MAX_STEPS = 200_000_000
ENERGY_FLOOR = 1e-300
# per-step target relative to the user tolerance, so that the error
# accumulated over thousands of steps stays at the level of ``tol``
LOCAL_SAFETY = 1e-2


@dataclass(frozen=True)
class ModeTrajectory:
    """Solution samples of one Fourier mode.

    ``t`` is strictly increasing; ``v`` and ``dv`` are complex arrays of
    ``v(t)`` and ``v'(t)``; ``dist`` holds ``|t - t0|`` at full precision.
    """

    xi_mag: float
    t: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    n_steps: int
    n_rejected: int
    tol: float
    delta_cut: float
    v0: complex = 0j
    v1: complex = 0j
    t_start: float = 0.0
    dist: np.ndarray = None

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.v.tolist(), self.dv.tolist()))

    @property
    def terminal(self):
        return self.t[-1], self.v[-1], self.dv[-1]


def _pack(v, w):
    return np.array([v.real, w.real, v.imag, w.imag])


def _unpack(y, xi):
    y = np.atleast_2d(y)
    return y[:, 0] + 1j * y[:, 2], xi * (y[:, 1] + 1j * y[:, 3])


def _leg(model, xi, y0, s_a, s_b, tol, n_samples, near):
    """Integrate in the distance variable ``s = |t - t0|`` from ``s_a`` to
    ``s_b``.  The ODE has no first-order term, so it reads the same in ``s``;
    working in ``s`` keeps full relative precision near the singular time."""
    dense = np.linspace(s_a, s_b, n_samples)
    s, y, yd, rs, ry, ns, nr, status = K.dopri5(
        y0, s_a, s_b, float(xi), 0.0, model.code, model.par,
        tol * LOCAL_SAFETY, ENERGY_FLOOR, dense, near, MAX_RECORD, MAX_STEPS,
        1e-15)
    if status == K.STATUS_UNDERFLOW:
        raise IntegrationError(
            f"step size underflow at distance {s:.3e} from t0; increase "
            "delta_cut", t_reached=s)
    if status == K.STATUS_NONFINITE:
        raise IntegrationError(f"non-finite state at distance {s:.3e}",
                               t_reached=s)
    if status == K.STATUS_MAXSTEPS:
        raise IntegrationError(f"step budget exhausted at distance {s:.3e}",
                               t_reached=s)
    ss = np.concatenate([dense, rs])
    ys = np.concatenate([yd, ry])
    direction = 1.0 if s_b >= s_a else -1.0
    order = np.argsort(direction * ss, kind="stable")
    ss, ys = ss[order], ys[order]
    keep = np.concatenate([[True], np.diff(direction * ss) > 0])
    return ss[keep], ys[keep], y, ns, nr


def _flip(y):
    """Change the sign of the derivative components (``d/ds = -d/dt``)."""
    y = np.array(y, dtype=float)
    y[..., 1] *= -1.0
    y[..., 3] *= -1.0
    return y


def _legs(model, delta_cut):
    """``(sign, s_start, s_end)`` per leg, with ``t = t0 + sign * s``."""
    T, t0 = model.T, model.t0
    if model.side == "right":
        return [(-1.0, t0, delta_cut)]
    if model.side == "left":
        return [(1.0, delta_cut, T - t0)]
    return [(-1.0, t0, delta_cut), (1.0, delta_cut, T - t0)]


def solve_mode(model, xi_mag, v0=1.0, v1=0.0, tol=1e-10, delta_cut=None,
               n_samples=N_SAMPLES, near=None):
    """Integrate one mode from ``t = 0`` (or ``delta_cut`` when ``t0 = 0``).

    Parameters
    ----------
    model : CoefficientModel
    xi_mag : float
        Frequency magnitude, at least 1.
    v0, v1 : complex
        Initial ``v`` and ``v'``.
    tol : float
        Relative local error per step in the energy norm.
    delta_cut : float, optional
        Distance from ``t0`` at which integration stops; defaults to
        ``1e-8 * T``.  For an interior ``t0`` the state is frozen across
        ``[t0 - delta_cut, t0 + delta_cut]``.
    n_samples : int
        Uniform dense-output samples per integrated leg (at least 200).
    near : float, optional
        Accepted steps closer than this to ``t0`` are kept as extra samples.

    Returns
    -------
    ModeTrajectory
    """
    if not xi_mag >= 1.0:
        raise ValueError("xi_mag must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    T = model.T
    if delta_cut is None:
        delta_cut = DEFAULT_CUT * T
    if not delta_cut >= 1e-12 * T:
        raise ValueError("delta_cut must be >= 1e-12 T")
    n_samples = max(int(n_samples), N_SAMPLES)
    near = 1e-2 * T if near is None else near
    xi = float(xi_mag)
    legs = _legs(model, delta_cut)
    if any(abs(b - a) == 0 or max(a, b) <= delta_cut for _, a, b in legs):
        raise ValueError("delta_cut leaves nothing to integrate")

    ts, ds, ys = [], [], []
    n_steps = n_rej = 0
    y = _pack(complex(v0), complex(v1) / xi)
    for sign, a, b in legs:
        y_s = y if sign > 0 else _flip(y)
        s_leg, y_leg, y_end, ns, nr = _leg(model, xi, y_s, a, b, tol,
                                           n_samples, near)
        if sign < 0:
            y_leg, y_end = _flip(y_leg), _flip(y_end)
        # the state is frozen across the cut around an interior t0
        y = y_end
        ts.append(model.t0 + sign * s_leg)
        ds.append(s_leg)
        ys.append(y_leg)
        n_steps += ns
        n_rej += nr
    v, dv = _unpack(np.concatenate(ys), xi)
    t = np.concatenate(ts)
    return ModeTrajectory(xi_mag=xi, t=t, v=v, dv=dv, n_steps=n_steps,
                          n_rejected=n_rej, tol=tol, delta_cut=delta_cut,
                          v0=complex(v0), v1=complex(v1), t_start=float(t[0]),
                          dist=np.concatenate(ds))


def integrate_back(model, traj):
    """Integrate from the terminal state back to the start of ``traj``.

    Only meaningful when there is a single integrated leg (``t0`` at an
    endpoint).  Returns ``(v, v')`` at ``traj.t_start``.
    """
    if model.side == "interior":
        raise ValueError("time reversal needs t0 at an endpoint")
    xi = traj.xi_mag
    (sign, s_a, s_b), = _legs(model, traj.delta_cut)
    y0 = _pack(complex(traj.v[-1]), complex(traj.dv[-1]) / xi)
    if sign < 0:
        y0 = _flip(y0)
    s, y, *_rest, status = K.dopri5(
        y0, s_b, s_a, xi, 0.0, model.code, model.par,
        traj.tol * LOCAL_SAFETY, ENERGY_FLOOR, np.array([s_a]), 0.0, 1,
        MAX_STEPS, 1e-15)
    if status != K.STATUS_OK:
        raise IntegrationError("backward integration failed", t_reached=s)
    if sign < 0:
        y = _flip(y)
    v, dv = _unpack(y, xi)
    return complex(v[0]), complex(dv[0])


def wronskian(model, xi_mag, tol=1e-10, delta_cut=None):
    """``v1 v2' - v2 v1'`` along the canonical solutions with data (1,0), (0,1)."""
    s1 = solve_mode(model, xi_mag, 1.0, 0.0, tol, delta_cut)
    s2 = solve_mode(model, xi_mag, 0.0, 1.0, tol, delta_cut)
    # the recorded near-t0 steps differ between the two solves
    t = np.intersect1d(s1.t, s2.t)
    i1 = np.searchsorted(s1.t, t)
    i2 = np.searchsorted(s2.t, t)
    w = s1.v[i1] * s2.dv[i2] - s2.v[i2] * s1.dv[i1]
    return t, w


def energy(model, traj):
    """Exact energy ``a |xi|^2 |v|^2 + |v'|^2`` along the samples."""
    a, _ = K.profile_array(traj.dist, model.code, model.par)
    return a * traj.xi_mag ** 2 * np.abs(traj.v) ** 2 + np.abs(traj.dv) ** 2


# --------------------------------------------------------------------------
# Gronwall certificate

@dataclass(frozen=True)
class EnergyCertificate:
    xi_mag: float
    eps: float
    t: np.ndarray
    e_eps: np.ndarray
    e0: float
    i1: float
    i2: float
    i1_err: float
    i2_err: float
    gronwall_rhs: float
    margin: float
    slack: float
    t_worst: float
    degenerate: bool

    @property
    def ok(self):
        return self.margin <= 1.0 + self.slack


def scaled_xi(plan, xi_mag):
    """Frequency after the plan's rescaling ``a -> a / scale``."""
    return math.sqrt(plan.scale) * xi_mag


def energy_certificate(traj, model, plan, eps, tol=1e-8, integrals=None):
    """Check ``E_eps(t) <= E_eps(0) exp(I1 + |xi| I2)`` along ``traj``.

    ``integrals`` may carry precomputed ``((I1, err1), (I2, err2))`` for
    this ``eps``.  Raises :class:`CertificateViolation` when the ratio
    exceeds ``1 + slack`` with ``slack = 100 tol + err1 + |xi| err2``.
    """
    coef = build_a_eps(model, plan, eps)
    xi = scaled_xi(plan, traj.xi_mag)
    if integrals is None:
        i1, e1, _ = integral_I1(model, plan, eps, tol, full_output=True)
        i2, e2, _ = integral_I2(model, plan, eps, tol, full_output=True)
    else:
        (i1, e1), (i2, e2) = integrals
    ae = coef.at_distance(traj.dist)
    e_eps = ae * xi ** 2 * np.abs(traj.v) ** 2 + np.abs(traj.dv) ** 2
    e0 = float(e_eps[0])
    slack = 100.0 * traj.tol + e1 + xi * e2
    if e0 == 0.0:
        return EnergyCertificate(traj.xi_mag, eps, traj.t, e_eps, 0.0, i1, i2,
                                 e1, e2, 0.0, 0.0, slack, float(traj.t[0]),
                                 True)
    # in logarithms: I1 + |xi| I2 easily exceeds the float range
    log_rhs = math.log(e0) + i1 + xi * i2
    with np.errstate(divide="ignore"):
        log_ratio = np.log(e_eps) - log_rhs
    k = int(np.argmax(log_ratio))
    margin = float(np.exp(log_ratio[k]))
    cert = EnergyCertificate(traj.xi_mag, eps, traj.t, e_eps, e0, i1, i2, e1,
                             e2, _exp(log_rhs), margin, slack,
                             float(traj.t[k]), False)
    if not cert.ok:
        raise CertificateViolation(
            f"E_eps/bound = {cert.margin:.6g} at t = {cert.t_worst:.6g} "
            f"(xi = {traj.xi_mag}, eps = {eps})", cert.t_worst, cert.margin)
    return cert


def _exp(x):
    return math.exp(x) if x < 709.0 else math.inf


@dataclass(frozen=True)
class TerminalCheck:
    xi_mag: float
    eps: float
    lower_weight: float
    lhs: float
    rhs: float
    log_ratio: float
    ok: bool


def bound_exponent(plan, eps, xi):
    """The exponent ``B(eps, xi)`` multiplying the fitted constant."""
    from .regularizer import theoretical_slopes
    s1, s2 = theoretical_slopes(plan)
    le = abs(math.log(eps))
    if plan.regime is Regime.THM4:
        return le ** s1 * (1.0 + xi * eps)
    return (1.0 + le) * (eps ** s1 + xi * eps ** s2)


def lower_weight(plan, eps, T):
    """Lower bound of ``a_eps`` used to pass from ``E_eps`` to the energy."""
    if plan.regime is Regime.THM1:
        return eps ** (2.0 - plan.rs_sum) * T ** -2
    if plan.regime is Regime.THM2:
        return eps ** (3.0 - plan.pq_sum) * T ** -2
    return 1.0


def terminal_bound_check(traj, model, plan, c_tilde):
    """Final a priori inequality of the energy method at ``eps = eps(|xi|)``.

    Compares ``w |xi|^2 |v|^2 + |v'|^2`` at the last sample, with ``w`` the
    lower bound of ``a_eps``, against ``E_eps(0) exp(C B(eps, xi))`` where
    ``C = c_tilde`` comes from a :class:`~singlab.regularizer.ScalingFit`.
    """
    xi = scaled_xi(plan, traj.xi_mag)
    eps = plan.eps_for(xi, model.T)
    coef = build_a_eps(model, plan, eps)
    e0 = (coef.at_distance(traj.dist[:1])[0] * xi ** 2 * abs(traj.v[0]) ** 2
          + abs(traj.dv[0]) ** 2)
    w = lower_weight(plan, eps, model.T)
    lhs = w * xi ** 2 * abs(traj.v[-1]) ** 2 + abs(traj.dv[-1]) ** 2
    expo = c_tilde * bound_exponent(plan, eps, xi)
    log_rhs = math.log(e0) + expo if e0 > 0 else -math.inf
    log_lhs = math.log(lhs) if lhs > 0 else -math.inf
    log_ratio = log_lhs - log_rhs if e0 > 0 else 0.0
    return TerminalCheck(traj.xi_mag, eps, w, lhs, _exp(log_rhs),
                         log_ratio, log_ratio <= 0.0)
