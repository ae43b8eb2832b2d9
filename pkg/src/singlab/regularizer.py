"""Regularized coefficients ``a_eps`` and their controlling integrals.

For each regime the singular coefficient is replaced near ``t0`` by a
smoothed version built at scale ``eps``; the quality of the approximation is
measured by

    I1(eps) = int |a_eps'| / a_eps dt,
    I2(eps) = int |a_eps - a| / sqrt(a_eps) dt,

whose growth as ``eps -> 0`` drives the energy bound.  Integrals are taken in
the distance variable ``d = |t - t0|`` so nodes near the singular time keep
full relative precision.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from .coeff_models import INF, Regime, conjugate
from .errors import DegenerateExponentError, RegimeMismatchError
from .quadrature import GradedMesh, integrate

_REGIME_CODE = {Regime.THM1: 1, Regime.THM2: 2, Regime.THM3: 3,
                Regime.THM4: 4}
INTEGRAL_BUDGET = 20_000_000


@dataclass(frozen=True)
class RegularizationPlan:
    regime: Regime
    side: str
    z: float
    eps_rule: float
    pq_sum: float
    rs_sum: float
    r: float
    q: float
    lambda0: float
    scale: float

    def eps_for(self, xi_mag, T):
        """Smoothing scale ``eps = |xi|**-e``, capped at ``T``."""
        return min(float(xi_mag) ** (-self.eps_rule), T)

    @property
    def q_conj(self):
        return conjugate(self.q)

    def to_dict(self):
        out = asdict(self)
        out["regime"] = self.regime.value
        return out


def eps_exponent(regime, pq_sum, rs_sum):
    """Exponent ``e`` of the rule ``eps(|xi|) = |xi|**-e``."""
    if regime is Regime.THM1:
        den = pq_sum - 1.5 * rs_sum
        if den <= 0:
            raise DegenerateExponentError(
                f"p+1/q - 3/2 (r+1/s) = {den} <= 0")
        return 1.0 / den
    if regime is Regime.THM2:
        den = 3.0 - pq_sum
        if den <= 0:
            raise DegenerateExponentError(f"3 - (p+1/q) = {den} <= 0")
        return (2.0 / 3.0) / den
    if regime is Regime.THM3:
        den = pq_sum * (3.0 - pq_sum)
        if den <= 0:
            raise DegenerateExponentError(f"(p+1/q)(3-(p+1/q)) = {den} <= 0")
        return 2.0 / den
    if regime is Regime.THM4:
        return 1.0
    raise DegenerateExponentError(f"no epsilon rule for regime {regime}")


def make_plan(report, z_margin=0.5, side="right", q=INF):
    """Regularization plan for a classified model.

    ``q`` is only used by the fourth regime, whose logarithmic bounds carry
    the conjugate exponent.
    """
    if report.regime is Regime.INADMISSIBLE:
        raise RegimeMismatchError("model is inadmissible")
    if z_margin <= 0:
        raise ValueError("z_margin must be positive")
    if side not in ("right", "left", "interior"):
        raise ValueError(f"unknown side {side!r}")
    pq, rs = report.pq_sum, report.rs_sum
    e = eps_exponent(report.regime, pq, rs)
    z = float("nan")
    if report.regime is Regime.THM1:
        inv_s = rs - report.r
        z = max(inv_s, pq - report.r - 1.0) + z_margin
    strict = report.regime in (Regime.THM3, Regime.THM4)
    if strict and report.lambda0 <= 0:
        raise RegimeMismatchError("strictly hyperbolic regime needs lambda0 > 0")
    return RegularizationPlan(
        regime=report.regime, side=side, z=z, eps_rule=e, pq_sum=pq,
        rs_sum=rs, r=report.r, q=q, lambda0=report.lambda0,
        scale=report.lambda0 if strict else 1.0)


class RegularizedCoefficient:
    """Evaluatable ``a_eps`` (after the plan's rescaling by ``scale``)."""

    def __init__(self, model, plan, eps):
        self.model = model
        self.plan = plan
        self.eps = float(eps)
        z = plan.z if plan.regime is Regime.THM1 else 0.0
        self.reg = np.array([_REGIME_CODE[plan.regime], self.eps, z, plan.r,
                             plan.rs_sum, plan.pq_sum, plan.scale])

    def _eval(self, t):
        t = np.asarray(t, dtype=float)
        d = self.model.distance(t)
        ae, dae, a = K.regularized_array(np.atleast_1d(d).ravel(),
                                         self.model.code, self.model.par,
                                         self.reg)
        sgn = np.sign(np.atleast_1d(t).ravel() - self.model.t0)
        shape = np.shape(t)
        return (ae.reshape(shape), (dae * sgn).reshape(shape), a.reshape(shape))

    def at_distance(self, d):
        """``a_eps`` as a function of ``d = |t - t0|`` (array in, array out)."""
        ae, _, _ = K.regularized_array(np.ascontiguousarray(d, dtype=float),
                                       self.model.code, self.model.par,
                                       self.reg)
        return ae

    def a_eps(self, t):
        out = self._eval(t)[0]
        return float(out) if np.ndim(t) == 0 else out

    def da_eps(self, t):
        out = self._eval(t)[1]
        return float(out) if np.ndim(t) == 0 else out

    def a_scaled(self, t):
        """The original coefficient divided by the plan's ``scale``."""
        out = self._eval(t)[2]
        return float(out) if np.ndim(t) == 0 else out

    def lower_bound(self):
        """Positive lower bound of ``a_eps`` on ``[0, T]``."""
        plan, eps = self.plan, self.eps
        T = self.model.T
        if plan.regime is Regime.THM1:
            return eps ** (2.0 - plan.rs_sum) * T ** -2
        if plan.regime is Regime.THM2:
            return eps ** (3.0 - plan.pq_sum) * T ** -2
        return self.model.lambda0 / plan.scale


def build_a_eps(model, plan, eps):
    if plan.side != model.side:
        raise RegimeMismatchError(
            f"plan side {plan.side!r} but model has t0 on the {model.side}")
    if not 0.0 < eps <= model.T:
        raise ValueError("eps must lie in (0, T]")
    return RegularizedCoefficient(model, plan, eps)


def _pieces(model):
    out = []
    if model.t0 > 0:
        out.append(model.t0)
    if model.t0 < model.T:
        out.append(model.T - model.t0)
    return out


def _integral(kernel, model, plan, eps, tol, split=None):
    coef = build_a_eps(model, plan, eps)
    code, par, reg = model.code, model.par, coef.reg

    def g(d):
        return kernel(np.ascontiguousarray(d), code, par, reg)

    total = 0.0
    err = 0.0
    resolved = True
    for length in _pieces(model):
        cuts = sorted({0.0, min(eps, length), length}
                      | ({min(split, length)} if split else set()))
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi <= lo:
                continue
            # graded toward the singular time or toward the branch seam
            mesh = GradedMesh(lo, hi, "left")
            v, info = integrate(g, mesh, tol=tol, full_output=True,
                                max_evals=INTEGRAL_BUDGET)
            total += v
            err += info.error
            resolved &= info.resolved
    return total, err, resolved


def integral_I1(model, plan, eps, tol=1e-8, full_output=False):
    """``int_0^T |a_eps'| / a_eps dt``."""
    v, e, ok = _integral(K.i1_integrand, model, plan, eps, tol)
    return (v, e, ok) if full_output else v


def integral_I2(model, plan, eps, tol=1e-8, full_output=False):
    """``int_0^T |a_eps - a| / sqrt(a_eps) dt``."""
    v, e, ok = _integral(K.i2_integrand, model, plan, eps, tol)
    return (v, e, ok) if full_output else v


def i1_decomposition(model, plan, eps, tol=1e-8):
    """Split of I1 at distance ``eps**((3 - (p+1/q))/2)`` from t0.

    Returns ``(far, near)``: the part where the strict lower bound of the
    coefficient dominates and the part where the regularizing term does.
    """
    cut = eps ** (0.5 * (3.0 - plan.pq_sum))
    coef = build_a_eps(model, plan, eps)
    code, par, reg = model.code, model.par, coef.reg

    def g(d):
        return K.i1_integrand(np.ascontiguousarray(d), code, par, reg)

    far = near = 0.0
    for length in _pieces(model):
        c = min(cut, length)
        cuts = sorted({0.0, min(eps, c), c})
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi > lo:
                near += integrate(g, GradedMesh(lo, hi, "left"), tol=tol,
                                  max_evals=INTEGRAL_BUDGET)
        if length > c:
            lo = c
            cuts = sorted({lo, max(lo, min(eps, length)), length})
            for a, b in zip(cuts[:-1], cuts[1:]):
                if b > a:
                    far += integrate(g, GradedMesh(a, b, "left"), tol=tol,
                                     max_evals=INTEGRAL_BUDGET)
    return far, near


# --------------------------------------------------------------------------
# scaling regression

def theoretical_slopes(plan):
    """Exponents of the I1 and I2 bounds; for the fourth regime the I1 entry
    is the exponent of ``|log eps|``."""
    P, R = plan.pq_sum, plan.rs_sum
    if plan.regime is Regime.THM1:
        return -P + R + 1.0, -0.5 * R + 1.0
    if plan.regime is Regime.THM2:
        return P - 3.0, -0.5 * P + 1.5
    if plan.regime is Regime.THM3:
        return 0.5 * (P - 1.0) * (P - 3.0), -0.5 * P + 1.5
    return 1.0 / plan.q_conj, 1.0


def _bound_shapes(plan, eps):
    """The eps-dependence of the two bounds, used to extract constants."""
    s1, s2 = theoretical_slopes(plan)
    le = np.abs(np.log(eps))
    if plan.regime is Regime.THM4:
        return le ** s1, eps * le ** s1
    return (1.0 + le) * eps ** s1, (1.0 + le) * eps ** s2


@dataclass
class ScalingFit:
    regime: str
    eps: list
    i1: list
    i2: list
    i1_err: list
    i2_err: list
    resolved: bool
    slope1: float
    intercept1: float
    resid1: float
    slope2: float
    intercept2: float
    resid2: float
    theory1: float
    theory2: float
    c1: float
    c2: float
    degenerate1: bool
    degenerate2: bool
    i1_abscissa: str

    @property
    def c_tilde(self):
        """Combined constant of the energy bound (NaN entries ignored)."""
        vals = [c for c in (self.c1, self.c2) if not math.isnan(c)]
        return max(vals) if vals else math.nan

    def to_dict(self):
        return asdict(self)


def _lsq(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    sol, res, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < 2:
        raise np.linalg.LinAlgError("rank-deficient scaling regression")
    resid = float(np.linalg.norm(A @ sol - y))
    return float(sol[0]), float(sol[1]), resid


def check_eps_grid(eps_grid, T):
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size < 12:
        raise ValueError("eps grid needs at least 12 points")
    if np.any(eps <= 0) or np.any(eps > T / 2):
        raise ValueError("eps grid must lie in (0, T/2]")
    if np.log10(eps.max() / eps.min()) < 3.0 - 1e-9:
        raise ValueError("eps grid must span at least 3 decades")
    return eps


def fit_scaling(model, plan, eps_grid, tol=1e-6, workers=1, which="both"):
    """Measure I1, I2 over ``eps_grid`` and regress their log-log slopes.

    ``which`` selects ``"i1"``, ``"i2"`` or ``"both"``; a skipped integral
    is reported as NaN.  Grid points run concurrently on ``workers``
    threads and are gathered in grid order.
    """
    if which not in ("i1", "i2", "both"):
        raise ValueError(f"which must be i1, i2 or both, not {which!r}")
    eps = check_eps_grid(eps_grid, model.T)
    skipped = (math.nan, math.nan, True)

    def job(e):
        r1 = (integral_I1(model, plan, e, tol, full_output=True)
              if which != "i2" else skipped)
        r2 = (integral_I2(model, plan, e, tol, full_output=True)
              if which != "i1" else skipped)
        return r1, r2

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(job, eps))
    else:
        res = [job(e) for e in eps]
    i1 = np.array([r[0][0] for r in res])
    i2 = np.array([r[1][0] for r in res])
    resolved = all(r[0][2] and r[1][2] for r in res)
    s1, s2 = theoretical_slopes(plan)
    x = np.log(eps)
    x1 = np.log(np.abs(x)) if plan.regime is Regime.THM4 else x

    def fit(x, y):
        if np.all(np.isnan(y)):
            return math.nan, math.nan, math.nan, False
        if np.all(y <= 1e-300):
            return math.nan, math.nan, 0.0, True
        return (*_lsq(x, np.log(np.maximum(y, 1e-300))), False)

    sl1, ic1, r1, deg1 = fit(x1, i1)
    sl2, ic2, r2, deg2 = fit(x, i2)
    shape1, shape2 = _bound_shapes(plan, eps)
    return ScalingFit(
        regime=plan.regime.value, eps=eps.tolist(), i1=i1.tolist(),
        i2=i2.tolist(), i1_err=[r[0][1] for r in res],
        i2_err=[r[1][1] for r in res], resolved=resolved,
        slope1=sl1, intercept1=ic1, resid1=r1, slope2=sl2, intercept2=ic2,
        resid2=r2, theory1=s1, theory2=s2,
        c1=float(np.max(i1 / shape1)), c2=float(np.max(i2 / shape2)),
        degenerate1=deg1, degenerate2=deg2,
        i1_abscissa="log|log eps|" if plan.regime is Regime.THM4 else "log eps")
