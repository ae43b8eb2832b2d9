"""Adaptive Gauss-Legendre quadrature for endpoint and interior singularities.

The integration interval is cut into a mesh graded geometrically toward the
singular point, every panel is integrated with an 8-point Gauss-Legendre rule
and compared against the two half panels, and panels are bisected until the
summed error estimate drops below ``tol`` relative to the integral.  The panel
that touches the singular point is never integrated directly: bisecting it
produces a sequence of *shells* ``[h, 2h]`` whose contributions are
extrapolated geometrically to account for ``[0, h]``.  Shells that fail to
contract signal a non-integrable singularity.

Integrands must accept and return 1-D float arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError

GL_ORDER = 8
_X, _W = np.polynomial.legendre.leggauss(GL_ORDER)
_NODES = 0.5 * (_X + 1.0)
_WEIGHTS = 0.5 * _W

PANEL_FLOOR = 1e-13
MAX_EVALS = 40_000_000
_CHUNK = 1 << 19


@dataclass(frozen=True)
class GradedMesh:
    """Initial partition of ``[lo, hi]`` graded toward a singular point.

    Parameters
    ----------
    lo, hi : float
        Interval endpoints.
    singular : {'left', 'right', 'interior', 'none'}
        Location of the singular point.
    point : float, optional
        Singular point for ``singular='interior'``.
    grading : float
        Breakpoint ``k`` of ``N`` sits at distance ``L (k/N)**grading`` from
        the singular point.
    panels : int
        Number of panels ``N`` per one-sided piece.
    """

    lo: float
    hi: float
    singular: str = "none"
    point: float | None = None
    grading: float = 3.0
    panels: int = 16

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")
        if self.singular not in ("left", "right", "interior", "none"):
            raise ValueError(f"unknown singular location {self.singular!r}")
        if self.singular == "interior":
            if self.point is None or not self.lo < self.point < self.hi:
                raise ValueError("interior singular point must lie in (lo, hi)")
        if self.grading < 1.0 or self.panels < 1:
            raise ValueError("grading must be >= 1 and panels >= 1")

    def pieces(self):
        """One-sided pieces as ``(anchor, length, direction, singular)``.

        Points of a piece are ``anchor + direction * x`` for ``x`` in
        ``[0, length]``; when ``singular`` is true the singularity is at
        ``x = 0``.
        """
        if self.singular == "left":
            return [(self.lo, self.hi - self.lo, 1.0, True)]
        if self.singular == "right":
            return [(self.hi, self.hi - self.lo, -1.0, True)]
        if self.singular == "interior":
            return [(self.point, self.point - self.lo, -1.0, True),
                    (self.point, self.hi - self.point, 1.0, True)]
        return [(self.lo, self.hi - self.lo, 1.0, False)]

    @property
    def breakpoints(self):
        pts = []
        for anchor, length, direction, singular in self.pieces():
            k = np.arange(self.panels + 1) / self.panels
            x = length * (k ** self.grading if singular else k)
            pts.append(anchor + direction * x)
        return np.unique(np.concatenate(pts))


@dataclass
class QuadInfo:
    """Diagnostics returned with ``full_output=True``."""

    error: float = 0.0
    n_evals: int = 0
    n_panels: int = 0
    tail: float = 0.0
    resolved: bool = True
    node_max: float = 0.0
    shells: list = field(default_factory=list)


def _gl(g, a, b):
    """GL8 on panels ``[a_i, b_i]`` plus the two half-panel sums."""
    n = a.shape[0]
    q = np.empty(n)
    ql = np.empty(n)
    qr = np.empty(n)
    fmax = 0.0
    for s in range(0, n, _CHUNK):
        aa = a[s:s + _CHUNK]
        bb = b[s:s + _CHUNK]
        w = bb - aa
        mid = aa + 0.5 * w
        x = np.concatenate([
            (aa[:, None] + w[:, None] * _NODES).ravel(),
            (aa[:, None] + 0.5 * w[:, None] * _NODES).ravel(),
            (mid[:, None] + 0.5 * w[:, None] * _NODES).ravel(),
        ])
        y = np.asarray(g(x), dtype=float)
        m = aa.shape[0] * GL_ORDER
        if y.size:
            fmax = max(fmax, float(np.max(np.abs(y))))
        q[s:s + _CHUNK] = w * (y[:m].reshape(-1, GL_ORDER) @ _WEIGHTS)
        ql[s:s + _CHUNK] = 0.5 * w * (y[m:2 * m].reshape(-1, GL_ORDER) @ _WEIGHTS)
        qr[s:s + _CHUNK] = 0.5 * w * (y[2 * m:].reshape(-1, GL_ORDER) @ _WEIGHTS)
    return q, ql, qr, fmax, 3 * n * GL_ORDER


def _shell_ratio(shells):
    """Smoothed two-step contraction ratio of the last shells."""
    s = np.abs(np.asarray(shells[-4:]))
    if s.size < 4 or s[0] + s[1] == 0.0:
        return None
    return float(np.sqrt((s[2] + s[3]) / (s[0] + s[1])))


def _tail(shells):
    """Geometric extrapolation of the shells beyond the last one."""
    if len(shells) < 3:
        return None, np.inf
    s1, s2, s3 = shells[-3], shells[-2], shells[-1]
    if s2 == 0.0 or s3 == 0.0:
        return 0.0, abs(s3)
    rho = s3 / s2
    rho_prev = s2 / s1 if s1 != 0.0 else np.inf
    if not 0.0 < rho < 1.0:
        return None, np.inf
    tail = s3 * rho / (1.0 - rho)
    spread = min(1.0, abs(rho - rho_prev) / (1.0 - rho))
    err = abs(tail) * spread
    # drifting ratios (log factors) bias the geometric tail; the disagreement
    # with the previous ratio's extrapolation bounds that bias
    if 0.0 < rho_prev < 1.0:
        err += abs(s3 * rho_prev / (1.0 - rho_prev) - tail)
    return tail, min(err, abs(tail) + abs(s3))


def _one_sided(g, length, singular, tol, grading, panels, floor_abs,
               max_evals):
    k = np.arange(panels + 1) / panels
    bp = length * (k ** grading if singular else k)
    a = bp[:-1].copy()
    b = bp[1:].copy()
    if singular:
        s_b = b[0]
        a, b = a[1:], b[1:]
        sq, sql, sqr, fm0, ne0 = _gl(g, np.array([0.0]), np.array([s_b]))
        s_q, s_ql, s_qr = sq[0], sql[0], sqr[0]
    else:
        fm0, ne0 = 0.0, 0
    q, ql, qr, fmax, n_evals = _gl(g, a, b)
    n_evals += ne0
    fmax = max(fmax, fm0)
    val = ql + qr
    err = np.abs(val - q)
    shells = []
    resolved = True

    while True:
        tail, tail_err = (0.0, 0.0)
        if singular:
            tail, tail_err = _tail(shells)
            g_est = s_ql + s_qr
            if tail is None:
                tail = g_est
                tail_err = abs(g_est) + abs(s_q - g_est)
        total = float(np.sum(val)) + tail
        total_err = float(np.sum(err)) + tail_err
        scale = max(abs(total), float(np.sum(np.abs(val))) * 1e-3, 1e-300)
        target = tol * scale
        if total_err <= target:
            break
        splittable = (b - a) > floor_abs
        thresh = 0.5 * target / max(err.size + 1, 1)
        sel = splittable & (err > thresh)
        split_sing = singular and tail_err > thresh and s_b > floor_abs
        if not sel.any() and not split_sing:
            break
        if n_evals >= max_evals:
            resolved = False
            break
        new_a, new_b, new_q = [], [], []
        if sel.any():
            sa, sb = a[sel], b[sel]
            mid = 0.5 * (sa + sb)
            new_a += [sa, mid]
            new_b += [mid, sb]
            new_q += [ql[sel], qr[sel]]
        if split_sing:
            mid = 0.5 * s_b
            new_a.append(np.array([mid]))
            new_b.append(np.array([s_b]))
            new_q.append(np.array([s_qr]))
            keep_q = s_ql
            s_b = mid
            sq2, sql2, sqr2, fm1, ne1 = _gl(g, np.array([0.0]), np.array([s_b]))
            s_q, s_ql, s_qr = keep_q, sql2[0], sqr2[0]
            n_evals += ne1
            fmax = max(fmax, fm1)
        keep = ~sel
        a_n = np.concatenate(new_a)
        b_n = np.concatenate(new_b)
        q_n = np.concatenate(new_q)
        _, ql_n, qr_n, fm, ne = _gl(g, a_n, b_n)
        n_evals += ne
        fmax = max(fmax, fm)
        if split_sing:
            # the shell is the last new panel; record its refined estimate
            shells.append(float(ql_n[-1] + qr_n[-1]))
            if len(shells) >= 12:
                rho = _shell_ratio(shells)
                if rho is not None and rho >= 1.0 and s_b <= floor_abs * 2:
                    raise NonConvergenceError(
                        f"shell contributions do not contract (ratio {rho:.4f})")
        a = np.concatenate([a[keep], a_n])
        b = np.concatenate([b[keep], b_n])
        q = np.concatenate([q[keep], q_n])
        ql = np.concatenate([ql[keep], ql_n])
        qr = np.concatenate([qr[keep], qr_n])
        val = ql + qr
        err = np.abs(val - q)

    if singular and s_b <= floor_abs * 2:
        rho = _shell_ratio(shells)
        if rho is None or rho >= 1.0:
            raise NonConvergenceError(
                "shell contributions do not contract near the singular point")
    order = np.argsort(a, kind="stable")
    total = float(np.sum(val[order])) + tail
    total_err = float(np.sum(err)) + tail_err
    info = QuadInfo(error=total_err, n_evals=n_evals, n_panels=a.size + singular,
                    tail=tail, resolved=resolved, node_max=fmax, shells=shells)
    return total, info, (a[order], b[order])


def integrate(f, mesh, tol=1e-10, full_output=False, max_evals=MAX_EVALS):
    """Integrate ``f`` over ``mesh`` to relative tolerance ``tol``.

    Returns the integral, or ``(integral, QuadInfo)`` with ``full_output``.
    The reported error bound includes the extrapolated remainder of the
    shells closest to the singular point.

    Raises
    ------
    NonConvergenceError
        If the shell sequence near the singular point does not contract.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    span = mesh.hi - mesh.lo
    floor_abs = PANEL_FLOOR * span
    total = 0.0
    info = QuadInfo()
    for anchor, length, direction, singular in mesh.pieces():
        def g(x, anchor=anchor, direction=direction):
            return f(anchor + direction * x)

        v, inf, _ = _one_sided(g, length, singular, tol, mesh.grading,
                               mesh.panels, floor_abs, max_evals)
        total += v
        info.error += inf.error
        info.n_evals += inf.n_evals
        info.n_panels += inf.n_panels
        info.tail += inf.tail
        info.resolved &= inf.resolved
        info.node_max = max(info.node_max, inf.node_max)
        info.shells.extend(inf.shells)
    if full_output:
        return total, info
    return total


def _sup(f, mesh, tol, max_evals):
    """Supremum of |f| over the nodes of the refined mesh.

    Unboundedness is detected from the maxima over successive shells
    ``[h/2, h]`` down to the panel floor: a sustained increase means the
    essential supremum is infinite.
    """
    _, info = integrate(lambda x: np.abs(f(x)), mesh, tol=tol,
                        full_output=True, max_evals=max_evals)
    sup = info.node_max
    if mesh.singular == "none":
        return sup
    span = mesh.hi - mesh.lo
    for anchor, length, direction, _ in mesh.pieces():
        h = length
        maxima = []
        while h > PANEL_FLOOR * span:
            x = 0.5 * h + 0.5 * h * _NODES
            maxima.append(float(np.max(np.abs(f(anchor + direction * x)))))
            h *= 0.5
        sup = max(sup, max(maxima))
        last = np.asarray(maxima[-9:])
        if last.size == 9 and np.all(np.diff(last) > 0):
            if (last[-1] - last[0]) > 1e-3 * last[-1]:
                raise NonConvergenceError("|f| grows without bound near the "
                                          "singular point")
    return sup


def lq_norm(f, q, mesh, tol=1e-10, max_evals=MAX_EVALS):
    """``L^q`` norm of ``f`` over the mesh interval; ``q`` may be ``inf``."""
    if q == np.inf:
        return _sup(f, mesh, tol, max_evals)
    if q < 1:
        raise ValueError("q must be >= 1")
    val = integrate(lambda x: np.abs(f(x)) ** q, mesh, tol=tol,
                    max_evals=max_evals)
    return val ** (1.0 / q)


def shell_contraction(f, mesh, subpanels=32, n_fit=24):
    """Fitted per-halving ratio of ``int |f|`` over shells ``[h/2, h]``.

    Shells run from the mesh scale down to the panel floor; each is integrated
    with a composite GL8 rule on ``subpanels`` pieces, which averages out
    unresolved oscillation.  A ratio below 1 means the shells contract and the
    singularity is integrable.  Returns the worst ratio over the pieces.
    """
    span = mesh.hi - mesh.lo
    worst = 0.0
    u = (np.arange(subpanels)[:, None] + _NODES) / subpanels
    for anchor, length, direction, singular in mesh.pieces():
        if not singular:
            continue
        h = length
        logs = []
        while h > PANEL_FLOOR * span:
            x = 0.5 * h + 0.5 * h * u.ravel()
            y = np.abs(f(anchor + direction * x))
            val = 0.5 * h / subpanels * float(np.sum(y.reshape(-1, GL_ORDER)
                                                     @ _WEIGHTS))
            logs.append(np.log(max(val, 1e-300)))
            h *= 0.5
        y = np.asarray(logs[-n_fit:])
        if np.all(y <= np.log(1e-300)):
            # f vanishes near the singular point
            continue
        slope = np.polyfit(np.arange(y.size), y, 1)[0]
        worst = max(worst, float(np.exp(slope)))
    return worst
