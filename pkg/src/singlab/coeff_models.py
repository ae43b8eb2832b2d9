"""Parametric singular coefficient families and hypothesis classification.

A model is the direction-reduced symbol ``a(t)`` of the operator
``u_tt - sum a_ij(t) u_{x_i x_j}``, i.e. ``sum a_ij(t) w_i w_j`` for one fixed
unit direction ``w``.  Every family is a function of ``d(t) = |t0 - t|``:

=====================  ==================================================
``constant``           ``lambda0 + c``
``power_blowup``       ``lambda0 + c d**-gamma``
``oscillatory``        ``lambda0 + c (1 + sin(omega d**-m + phi) / 2)``
``log_growth``         ``lambda0 + c (1 + |log d|**theta)``
=====================  ==================================================

Exponents ``(p, q)`` declare ``d**p a'`` in ``L^q`` and ``(r, s)`` declare
``d**r a`` in ``L^s``; ``q`` and ``s`` may be ``math.inf``.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import _kernels as K
from .errors import DomainError, InconsistencyError, NonConvergenceError, \
    SingularPointError
from .quadrature import GradedMesh, lq_norm, shell_contraction

INF = math.inf
SINGULAR_GUARD = 1e-14
SHELL_RATIO_MAX = 0.99


class Family(str, Enum):
    CONSTANT = "constant"
    POWER_BLOWUP = "power_blowup"
    OSCILLATORY = "oscillatory"
    LOG_GROWTH = "log_growth"


_FAMILY_CODE = {
    Family.CONSTANT: K.CONSTANT,
    Family.POWER_BLOWUP: K.POWER_BLOWUP,
    Family.OSCILLATORY: K.OSCILLATORY,
    Family.LOG_GROWTH: K.LOG_GROWTH,
}


class Regime(str, Enum):
    THM1 = "Thm1"
    THM2 = "Thm2"
    THM3 = "Thm3"
    THM4 = "Thm4"
    INADMISSIBLE = "Inadmissible"


def inv(x):
    """``1/x`` with ``1/inf = 0``."""
    return 0.0 if x == INF else 1.0 / x


def conjugate(q):
    """Conjugate exponent ``q' = q/(q-1)``; ``inf`` for ``q = 1``."""
    if q == INF:
        return 1.0
    if q == 1:
        return INF
    return q / (q - 1.0)


@dataclass(frozen=True)
class CoefficientModel:
    family: Family
    T: float = 1.0
    t0: float = 1.0
    lambda0: float = 0.0
    c: float = 1.0
    gamma: float = 0.0
    m: float = 0.0
    phi: float = 0.0
    theta: float = 1.0
    omega: float = 1.0
    p: float = 0.0
    q: float = INF
    r: float | None = None
    s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0.0 <= self.t0 <= self.T:
            raise ValueError("t0 must lie in [0, T]")
        if self.lambda0 < 0 or self.c <= 0:
            raise ValueError("need lambda0 >= 0 and c > 0")
        if self.gamma < 0 or self.m < 0 or self.omega <= 0:
            raise ValueError("need gamma >= 0, m >= 0, omega > 0")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.p < 0 or self.q < 1:
            raise ValueError("need p >= 0 and q in [1, inf]")
        if (self.r is None) != (self.s is None):
            raise ValueError("declare r and s together")
        if self.r is not None and (self.r < 0 or self.s < 1):
            raise ValueError("need r >= 0 and s in [1, inf]")

    # ---- compiled parameter vector -------------------------------------
    @property
    def code(self):
        return _FAMILY_CODE[self.family]

    @property
    def par(self):
        return np.array([self.lambda0, self.c, self.gamma, self.m, self.phi,
                         self.theta, self.omega])

    @property
    def pq_sum(self):
        return self.p + inv(self.q)

    @property
    def side(self):
        if self.t0 == self.T:
            return "right"
        if self.t0 == 0.0:
            return "left"
        return "interior"

    def with_(self, **kw):
        return replace(self, **kw)

    def distance(self, t):
        t = np.asarray(t, dtype=float)
        if np.any((t < 0.0) | (t > self.T)):
            raise DomainError(f"time outside [0, {self.T}]")
        d = np.abs(self.t0 - t)
        if np.any(d < SINGULAR_GUARD * self.T):
            raise SingularPointError(f"evaluation at the singular time {self.t0}")
        return d

    # ---- closed-form admissibility -------------------------------------
    def h2_predicate(self):
        """Closed-form test of ``d**p a' in L^q``."""
        p, q = self.p, self.q
        fam = self.family
        if fam is Family.CONSTANT:
            return True
        if fam is Family.POWER_BLOWUP:
            if self.gamma == 0:
                return True
            k = self.gamma + 1.0 - p
            return k <= 0 if q == INF else k < inv(q)
        if fam is Family.OSCILLATORY:
            if self.m == 0:
                return True
            k = self.m + 1.0 - p
            return k <= 0 if q == INF else k < inv(q)
        # log growth: d**p * d**-1 |log d|**(theta-1)
        k = 1.0 - p
        if q == INF:
            return k < 0 or (k == 0 and self.theta <= 1.0)
        if k < inv(q):
            return True
        return k == inv(q) and (self.theta - 1.0) * q < -1.0

    def h2_critical(self):
        """True on the log-growth boundary ``1 - p = 1/q`` (finite q).

        There ``|beta|**q`` behaves like ``1 / (d |log d|**((1-theta) q))``
        and a divergent norm grows only like ``log log``, which no
        quadrature can tell apart from a finite one.
        """
        return (self.family is Family.LOG_GROWTH and self.q != INF
                and 1.0 - self.p == inv(self.q))

    def alpha_predicate(self, r, s):
        """Closed-form test of ``d**r a in L^s``."""
        fam = self.family
        if fam in (Family.CONSTANT, Family.OSCILLATORY):
            return True
        if fam is Family.POWER_BLOWUP:
            k = self.gamma - r
            if self.gamma == 0:
                return True
            return k <= 0 if s == INF else k < inv(s)
        return r > 0 if s == INF else True

    def l1_predicate(self):
        """The standing assumption ``a in L^1(0, T)``."""
        return self.alpha_predicate(0.0, 1.0)



def eval_a(model, t):
    """Coefficient value ``a(t)``; scalar in, scalar out."""
    d = model.distance(t)
    a, _ = K.profile_array(np.atleast_1d(d).astype(float), model.code, model.par)
    return float(a[0]) if np.ndim(t) == 0 else a.reshape(np.shape(t))


def _sign(model, t):
    return np.sign(np.asarray(t, dtype=float) - model.t0)


def eval_da(model, t):
    """Time derivative ``a'(t)`` from the differentiated closed form."""
    d = model.distance(t)
    _, da = K.profile_array(np.atleast_1d(d).astype(float), model.code, model.par)
    da = da * np.atleast_1d(_sign(model, t))
    return float(da[0]) if np.ndim(t) == 0 else da.reshape(np.shape(t))


def beta_alpha(model, t):
    """``(beta, alpha) = (d**p a', d**r a)``; ``r`` defaults to 0."""
    d = model.distance(t)
    r = model.r if model.r is not None else 0.0
    return d ** model.p * eval_da(model, t), d ** r * eval_a(model, t)


@dataclass(frozen=True)
class HypothesisReport:
    h1_ok: bool
    h2_ok: bool
    beta_lq_norm: float
    suppl_ok: bool
    alpha_ls_norm: float
    pq_sum: float
    rs_sum: float
    r: float
    s: float
    a_l1_ok: bool
    lambda0: float
    regime: Regime

    def to_dict(self):
        out = dict(self.__dict__)
        out["regime"] = self.regime.value
        return out


def _pieces(model):
    """Distance intervals covering ``[0, T]`` (one per side of t0)."""
    out = []
    if model.t0 > 0:
        out.append(model.t0)
    if model.t0 < model.T:
        out.append(model.T - model.t0)
    return out


NORM_BUDGET = 4_000_000


def _norm(model, weight_power, use_derivative, q, tol):
    """``L^q`` norm over ``[0, T]`` of ``d**k a'`` or ``d**k a``.

    Returns ``(norm, finite)`` where ``finite`` comes from the quadrature
    alone: shell contraction for finite ``q``, bounded shell maxima for
    ``q = inf``.
    """
    code, par = model.code, model.par

    def f(d):
        a, da = K.profile_array(d, code, par)
        return d ** weight_power * (da if use_derivative else a)

    def fq(d):
        return np.abs(f(d)) ** q

    parts = []
    finite = True
    for length in _pieces(model):
        mesh = GradedMesh(0.0, length, "left")
        try:
            if q != INF and shell_contraction(fq, mesh) >= SHELL_RATIO_MAX:
                raise NonConvergenceError("shells do not contract")
            parts.append(lq_norm(f, q, mesh, tol=tol, max_evals=NORM_BUDGET))
        except NonConvergenceError:
            finite = False
            parts.append(INF)
    if q == INF:
        norm = max(parts)
    else:
        norm = float(np.sum(np.asarray(parts) ** q) ** (1.0 / q))
    return norm, finite and norm < 1.0 / tol


def assign_regime(lambda0, pq_sum, admissible):
    """Regime from the hyperbolicity floor and ``p + 1/q``."""
    if not admissible:
        return Regime.INADMISSIBLE
    if pq_sum >= 3:
        return Regime.THM1
    if lambda0 > 0:
        return Regime.THM4 if pq_sum <= 1 else Regime.THM3
    return Regime.THM2


def classify(model, tol=1e-8):
    """Check the hypotheses numerically and assign the regime.

    The closed-form predicates decide; quadrature norms must agree with
    them or :class:`InconsistencyError` is raised.  The one exception is the
    critical log-growth case (see :meth:`CoefficientModel.h2_critical`),
    where only the predicate is used.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    h2_pred = model.h2_predicate()
    beta_norm, beta_fin = _norm(model, model.p, True, model.q, tol)
    if h2_pred != beta_fin and not model.h2_critical():
        raise InconsistencyError(
            f"H2 predicate {h2_pred} but ||beta||_Lq = {beta_norm}")

    l1_pred = model.l1_predicate()
    l1_norm, l1_fin = _norm(model, 0.0, False, 1.0, tol)
    if l1_pred != l1_fin:
        raise InconsistencyError(f"L1 predicate {l1_pred} but ||a||_L1 = {l1_norm}")

    declared = model.r is not None
    r, s = (model.r, model.s) if declared else (0.0, 1.0)
    rs_sum = r + inv(s)
    suppl_pred = model.alpha_predicate(r, s) and rs_sum <= 1.0
    alpha_norm, alpha_fin = _norm(model, r, False, s, tol)
    if model.alpha_predicate(r, s) != alpha_fin:
        raise InconsistencyError(
            f"alpha predicate disagrees with ||alpha||_Ls = {alpha_norm}")
    suppl_ok = suppl_pred
    if not suppl_ok:
        # fall back to (r, s) = (0, 1), which holds whenever a is integrable
        r, s, rs_sum, alpha_norm = 0.0, 1.0, 1.0, l1_norm

    regime = assign_regime(model.lambda0, model.pq_sum, h2_pred and l1_pred)
    return HypothesisReport(
        h1_ok=True, h2_ok=h2_pred, beta_lq_norm=beta_norm, suppl_ok=suppl_ok,
        alpha_ls_norm=alpha_norm, pq_sum=model.pq_sum, rs_sum=rs_sum, r=r, s=s,
        a_l1_ok=l1_pred, lambda0=model.lambda0, regime=regime)
