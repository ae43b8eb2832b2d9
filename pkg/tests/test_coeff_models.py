import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from singlab.coeff_models import (INF, CoefficientModel, Regime, assign_regime,
                                  beta_alpha, classify, conjugate, eval_a,
                                  eval_da)
from singlab.errors import DomainError, SingularPointError


def model(family, **kw):
    return CoefficientModel(family, **kw)


def test_eval_a_closed_forms():
    assert eval_a(model("constant", c=1.0), 0.3) == 1.0
    assert eval_a(model("power_blowup", gamma=0.5), 0.75) == pytest.approx(2.0)
    lg = model("log_growth", lambda0=1.0, theta=1.0)
    assert eval_a(lg, 1 - math.exp(-2)) == pytest.approx(4.0, rel=1e-12)


def test_eval_a_not_below_floor():
    t = np.linspace(0.0, 0.999, 50)
    for m in (model("oscillatory", lambda0=0.3, m=0.8, phi=1.0),
              model("log_growth", lambda0=0.3, theta=0.5),
              model("power_blowup", lambda0=0.3, gamma=0.7)):
        assert np.all(eval_a(m, t) >= 0.3)


def test_eval_da_closed_forms():
    assert eval_da(model("constant"), 0.4) == 0.0
    assert eval_da(model("power_blowup", gamma=0.5), 0.75) == pytest.approx(4.0)
    # phase d**-m + phi = pi at t
    m_, phi = 0.8, 0.5
    d = (math.pi - phi) ** (-1 / m_)
    osc = model("oscillatory", m=m_, phi=phi)
    expected = 0.5 * m_ * d ** (-m_ - 1) * math.cos(math.pi)
    assert eval_da(osc, 1 - d) == pytest.approx(expected, rel=1e-10)


def test_eval_da_matches_finite_difference():
    for m in (model("oscillatory", m=0.8, phi=0.3),
              model("log_growth", theta=0.5),
              model("power_blowup", gamma=0.4, t0=0.0)):
        for t in (0.2, 0.55, 0.9):
            h = 1e-6
            fd = (eval_a(m, t + h) - eval_a(m, t - h)) / (2 * h)
            assert eval_da(m, t) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_beta_alpha():
    assert beta_alpha(model("constant", lambda0=0.5, c=1.0), 0.2) == (0.0, 1.5)
    beta, _ = beta_alpha(model("power_blowup", gamma=0.5, p=1.5), 0.75)
    assert beta == pytest.approx(0.5)
    _, alpha = beta_alpha(model("power_blowup", gamma=0.5, r=0.5, s=INF), 0.75)
    assert alpha == pytest.approx(1.0)


def test_singular_point_and_domain():
    m = model("power_blowup", gamma=0.5)
    with pytest.raises(SingularPointError):
        eval_a(m, 1.0)
    with pytest.raises(DomainError):
        eval_a(m, 1.5)


def test_parameter_validation():
    with pytest.raises(ValueError):
        model("constant", c=0.0)
    with pytest.raises(ValueError):
        model("constant", q=0.5)
    with pytest.raises(ValueError):
        model("constant", r=1.0)
    with pytest.raises(ValueError):
        model("log_growth", theta=1.5)


def test_classify_examples():
    rep = classify(model("constant", lambda0=1.0, p=0.0, q=1.0))
    assert rep.regime is Regime.THM4 and rep.pq_sum == 1.0

    rep = classify(model("oscillatory", lambda0=1.0, m=0.8, p=1.8))
    assert rep.h2_ok and rep.regime is Regime.THM3
    assert rep.pq_sum == pytest.approx(1.8)


def test_classify_supplementary_fallback():
    # d**1.5 a is bounded but (r, s) = (1.5, inf) has r + 1/s > 1
    rep = classify(model("power_blowup", gamma=0.5, p=3.0, r=1.5, s=INF))
    assert not rep.suppl_ok
    assert (rep.r, rep.s, rep.rs_sum) == (0.0, 1.0, 1.0)
    assert rep.regime is Regime.THM1

    rep = classify(model("power_blowup", gamma=0.5, p=3.0, r=1.0, s=INF))
    assert rep.suppl_ok and rep.rs_sum == 1.0


def test_classify_rejects_non_integrable():
    rep = classify(model("power_blowup", gamma=1.5, p=3.0))
    assert not rep.a_l1_ok
    assert rep.regime is Regime.INADMISSIBLE


def test_classify_h2_failure():
    rep = classify(model("power_blowup", gamma=0.5, p=1.0))
    assert not rep.h2_ok
    assert math.isinf(rep.beta_lq_norm)
    assert rep.regime is Regime.INADMISSIBLE


def test_critical_log_growth():
    m = model("log_growth", p=0.5, q=2.0, theta=0.5)
    assert m.h2_critical()
    rep = classify(m)
    assert not rep.h2_ok and rep.regime is Regime.INADMISSIBLE


def test_left_and_interior_sides():
    left = model("power_blowup", gamma=0.5, t0=0.0, p=2.0)
    assert left.side == "left"
    assert classify(left).regime is Regime.THM2
    mid = model("power_blowup", gamma=0.5, t0=0.5, p=2.0)
    assert mid.side == "interior"
    rep = classify(mid)
    assert rep.regime is Regime.THM2
    # two pieces of length 1/2 each
    assert rep.alpha_ls_norm == pytest.approx(2 * 2 * math.sqrt(0.5), rel=1e-7)


def test_assign_regime_table():
    assert assign_regime(0.0, 3.0, True) is Regime.THM1
    assert assign_regime(1.0, 3.5, True) is Regime.THM1
    assert assign_regime(0.0, 2.0, True) is Regime.THM2
    assert assign_regime(1.0, 2.0, True) is Regime.THM3
    assert assign_regime(1.0, 1.0, True) is Regime.THM4
    assert assign_regime(1.0, 1.0, False) is Regime.INADMISSIBLE


def test_conjugate():
    assert conjugate(INF) == 1.0
    assert conjugate(1.0) == INF
    assert conjugate(2.0) == 2.0


@settings(max_examples=20, deadline=None)
@given(gamma=st.floats(0.05, 0.9), p=st.floats(0.0, 4.0),
       q=st.sampled_from([1.0, 2.0, 4.0, INF]))
def test_power_blowup_predicate_agrees_with_quadrature(gamma, p, q):
    # classify raises InconsistencyError on disagreement; keep clear of the
    # exact boundary where neither side is decidable numerically
    k = gamma + 1.0 - p
    edge = 0.0 if q == INF else 1.0 / q
    if abs(k - edge) < 0.05:
        return
    rep = classify(model("power_blowup", gamma=gamma, p=p, q=q))
    assert rep.h2_ok == (k <= edge if q == INF else k < edge)
