"""Gevrey data, well-posedness thresholds and decay-rate fitting.

Initial data are given on the Fourier side by their decay law,

    |v(0, xi)| = M exp(-delta |xi|**(1/sigma))      (Gevrey index sigma)
    |v(0, xi)| = M |xi|**(-zeta/2)                 (finite smoothness)

and the effective index of a solution is read back from the decay of its
terminal magnitudes.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import least_squares

from .coeff_models import Regime

UNDERFLOW = 1e-290
_LOG_UNDERFLOW = math.log(UNDERFLOW)
CINF = "Cinf"


class DecayWarning(UserWarning):
    """Terminal magnitudes do not decay monotonically on the fitted grid."""


# --------------------------------------------------------------------------
# thresholds

def _exact(x):
    """Rational value of an exponent sum, recovering simple fractions."""
    return Fraction(x).limit_denominator(10 ** 6)


@dataclass(frozen=True)
class ThresholdReport:
    regime: Regime
    sigma_star: float
    exact: Fraction | None
    formula: str

    @property
    def cinf(self):
        return self.regime is Regime.THM4

    def to_dict(self):
        return {"regime": self.regime.value,
                "sigma_star": CINF if self.cinf else float(self.sigma_star),
                "exact": None if self.exact is None else str(self.exact),
                "formula": self.formula}


def threshold(report):
    """Supremal Gevrey index for which the Cauchy problem is well posed."""
    regime = report.regime
    P = _exact(report.pq_sum)
    R = _exact(report.rs_sum)
    if regime is Regime.THM1:
        value = (P - Fraction(3, 2) * R) / (P - R - 1)
        if R == 1:
            # the (r, s) = (0, 1) statement of the threshold
            assert value == (P - Fraction(3, 2)) / (P - 2)
        return ThresholdReport(regime, float(value), value,
                               "((p+1/q) - 3/2 (r+1/s)) / ((p+1/q) - (r+1/s) - 1)")
    if regime is Regime.THM2:
        value = Fraction(3, 2)
        return ThresholdReport(regime, float(value), value, "3/2")
    if regime is Regime.THM3:
        value = P / (P - 1)
        return ThresholdReport(regime, float(value), value,
                               "(p+1/q) / ((p+1/q) - 1)")
    if regime is Regime.THM4:
        return ThresholdReport(regime, math.inf, None, CINF)
    raise ValueError("no threshold for an inadmissible model")


# --------------------------------------------------------------------------
# data

@dataclass(frozen=True)
class GevreyProfile:
    sigma: float = 1.0
    delta: float = 1.0
    M: float = 1.0
    kind: str = "gevrey"
    zeta: float | None = None
    scaled_v1: bool = False

    def __post_init__(self):
        if self.kind not in ("gevrey", "polynomial"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "gevrey" and not (self.sigma >= 1 and self.delta > 0):
            raise ValueError("need sigma >= 1 and delta > 0")
        if self.kind == "polynomial" and not (self.zeta and self.zeta > 0):
            raise ValueError("polynomial profile needs zeta > 0")
        if not self.M > 0:
            raise ValueError("M must be positive")

    def log_magnitude(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.kind == "gevrey":
            return math.log(self.M) - self.delta * xi ** (1.0 / self.sigma)
        return math.log(self.M) - 0.5 * self.zeta * np.log(xi)


@dataclass(frozen=True)
class InitialData:
    xi: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    dropped: np.ndarray


def make_data(profile, xi_grid):
    """Per-mode initial pairs ``(v0, v1)``.

    ``v1`` is zero unless ``profile.scaled_v1``, in which case
    ``|v1| = |xi| |v0|``.  Frequencies whose magnitude would fall below
    ``1e-290`` are dropped and listed in ``dropped``.
    """
    xi = np.asarray(xi_grid, dtype=float)
    if xi.ndim != 1 or xi.size == 0:
        raise ValueError("xi_grid must be a non-empty 1-D array")
    if np.any(xi < 1) or np.any(~np.isfinite(xi)):
        raise ValueError("xi_grid must lie in [1, inf)")
    if np.any(np.diff(xi) < 0):
        raise ValueError("xi_grid must be sorted")
    logm = profile.log_magnitude(xi)
    extra = np.log(xi) if profile.scaled_v1 else 0.0
    ok = (logm > _LOG_UNDERFLOW) & (logm + extra > _LOG_UNDERFLOW)
    v0 = np.exp(logm[ok])
    v1 = xi[ok] * v0 if profile.scaled_v1 else np.zeros_like(v0)
    return InitialData(xi=xi[ok], v0=v0, v1=v1, dropped=xi[~ok])


# --------------------------------------------------------------------------
# decay fitting

@dataclass
class GevreyFit:
    kind: str
    xi: list
    mags: list
    sigma_eff: float = math.nan
    delta_eff: float = math.nan
    m_eff: float = math.nan
    residual: float = math.nan
    dl_slope: float = math.nan
    dl_intercept: float = math.nan
    m_hat: float = math.nan
    poly_order: float = math.nan
    monotone: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def inv_sigma(self):
        return 1.0 / self.sigma_eff

    def to_dict(self):
        return asdict(self)


def dyad_maxima(xi, mags):
    """Largest magnitude within each dyad ``[2**k, 2**(k+1))``."""
    xi = np.asarray(xi, dtype=float)
    mags = np.asarray(mags, dtype=float)
    k = np.floor(np.log2(xi) + 1e-12).astype(int)
    out_x, out_m = [], []
    for key in np.unique(k):
        sel = np.flatnonzero(k == key)
        j = sel[np.argmax(mags[sel])]
        out_x.append(xi[j])
        out_m.append(mags[j])
    return np.array(out_x), np.array(out_m)


def _check_grid(xi, mags):
    if xi.size < 8:
        raise ValueError("decay fit needs at least 8 frequencies")
    if xi.max() / xi.min() < 100.0:
        raise ValueError("decay fit needs at least two decades of frequency")
    if np.any(mags <= 0) or np.any(~np.isfinite(mags)):
        raise ValueError("magnitudes must be positive and finite")


def fit_decay(xi, mags, kind="gevrey", use_dyads=True):
    """Fit the decay law of terminal magnitudes.

    Gevrey case: the double-log transform
    ``log(-log(mag / M_hat)) = log(delta) + log(xi) / sigma`` with
    ``M_hat = e * max(mag)`` gives a starting point, refined by nonlinear
    least squares on ``log mag = log M - delta xi**(1/sigma)``; ``M_hat`` is
    only a normalization and biases the transform when it differs from
    ``M``.  Polynomial case: the slope of ``log mag`` against ``log xi``.
    """
    xi = np.asarray(xi, dtype=float)
    mags = np.asarray(mags, dtype=float)
    if xi.shape != mags.shape:
        raise ValueError("xi and mags must have the same shape")
    order = np.argsort(xi)
    xi, mags = xi[order], mags[order]
    if use_dyads:
        xi, mags = dyad_maxima(xi, mags)
    _check_grid(xi, mags)
    monotone = bool(np.all(np.diff(mags) <= 0))
    if not monotone:
        warnings.warn("terminal magnitudes are not monotone in |xi|",
                      DecayWarning, stacklevel=2)
    fit = GevreyFit(kind=kind, xi=xi.tolist(), mags=mags.tolist(),
                    monotone=monotone)
    lx = np.log(xi)
    lm = np.log(mags)

    if kind == "polynomial":
        slope, icpt = np.polyfit(lx, lm, 1)
        res = lm - (slope * lx + icpt)
        fit.poly_order = float(-slope)
        fit.m_eff = float(math.exp(icpt))
        fit.residual = float(np.linalg.norm(res))
        return fit
    if kind != "gevrey":
        raise ValueError(f"unknown decay kind {kind!r}")

    m_hat = math.e * float(mags.max())
    y = np.log(-np.log(mags / m_hat))
    slope, icpt = np.polyfit(lx, y, 1)
    fit.m_hat, fit.dl_slope, fit.dl_intercept = m_hat, float(slope), float(icpt)

    def resid(p):
        log_m, log_d, b = p
        return log_m - np.exp(log_d + b * lx) - lm

    b0 = min(max(slope, 1e-3), 1.0)
    x0 = np.array([math.log(m_hat), icpt, b0])
    sol = least_squares(resid, x0, method="lm", xtol=1e-14, ftol=1e-14)
    log_m, log_d, b = sol.x
    fit.sigma_eff = float(1.0 / b) if b > 0 else math.inf
    fit.delta_eff = float(math.exp(log_d))
    fit.m_eff = float(math.exp(log_m))
    fit.residual = float(np.linalg.norm(sol.fun))
    fit.diagnostics = {"dl_sigma": float(1.0 / slope) if slope > 0 else math.inf,
                       "nfev": int(sol.nfev)}
    return fit


def terminal_magnitude(v, dv, xi):
    """Mode magnitude ``sqrt(|v|^2 + |v'/xi|^2)`` (phase-independent)."""
    # hypot avoids squaring magnitudes near the underflow threshold
    return np.hypot(np.abs(v), np.abs(np.asarray(dv) / xi))
