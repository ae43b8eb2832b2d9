import math

import numpy as np
import pytest

from singlab.coeff_models import CoefficientModel, classify
from singlab.errors import CertificateViolation
from singlab.mode_solver import (energy, energy_certificate, integrate_back,
                                 scaled_xi, solve_mode, terminal_bound_check,
                                 wronskian)
from singlab.regularizer import fit_scaling, make_plan


def plan_of(model):
    return make_plan(classify(model), side=model.side)


def test_cosine_oracle():
    T = math.pi / 2
    model = CoefficientModel("constant", c=1.0, T=T, t0=T)
    tr = solve_mode(model, 1.0, 1.0, 0.0, tol=1e-10)
    t = T - tr.dist
    assert np.max(np.abs(tr.v - np.cos(t))) <= 1e-9
    assert np.max(np.abs(tr.dv + np.sin(t))) <= 1e-9
    assert abs(tr.v[-1]) <= 1e-10 + tr.delta_cut


@pytest.mark.parametrize("xi", [1.0, 16.0, 256.0])
def test_energy_conservation(xi):
    model = CoefficientModel("constant", c=1.0)
    tr = solve_mode(model, xi, 1.0, 0.5, tol=1e-10)
    e = energy(model, tr)
    assert np.max(np.abs(e / e[0] - 1.0)) <= 1e-8


def test_euler_oracle():
    # c xi^2 = 2/9 gives v = (T - t)**(1/3)
    model = CoefficientModel("power_blowup", gamma=2.0, c=2.0 / 9.0)
    tol = 1e-10
    tr = solve_mode(model, 1.0, 1.0, -1.0 / 3.0, tol=tol)
    exact = tr.dist ** (1.0 / 3.0)
    assert np.max(np.abs(tr.v / exact - 1.0)) <= 10 * tol


def test_samples_and_statistics():
    model = CoefficientModel("power_blowup", gamma=0.5)
    tr = solve_mode(model, 16.0)
    assert len(tr.t) >= 200
    assert np.all(np.diff(tr.t) > 0)
    assert tr.t[0] == 0.0
    assert tr.t[-1] == pytest.approx(1.0 - tr.delta_cut, abs=1e-15)
    assert tr.n_steps > 0 and tr.n_rejected >= 0
    t, v, dv = tr.terminal
    assert (t, v, dv) == (tr.t[-1], tr.v[-1], tr.dv[-1])


def test_left_side_starts_at_cut():
    model = CoefficientModel("power_blowup", gamma=0.5, t0=0.0)
    tr = solve_mode(model, 8.0, delta_cut=1e-6)
    assert tr.t[0] == pytest.approx(1e-6)
    assert tr.t[-1] == pytest.approx(1.0)


def test_interior_glue_freezes_state():
    model = CoefficientModel("constant", c=1.0, t0=0.5)
    cut = 1e-3
    tr = solve_mode(model, 1.0, delta_cut=cut)
    t = tr.t
    ref = np.where(t < 0.5, np.cos(t), np.cos(t - 2 * cut))
    assert np.max(np.abs(tr.v - ref)) <= 1e-9


def test_input_validation():
    model = CoefficientModel("constant")
    with pytest.raises(ValueError):
        solve_mode(model, 0.5)
    with pytest.raises(ValueError):
        solve_mode(model, 2.0, tol=0.0)
    with pytest.raises(ValueError):
        solve_mode(model, 2.0, delta_cut=1e-14)


def test_time_reversal():
    model = CoefficientModel("oscillatory", m=0.8, p=1.8)
    tr = solve_mode(model, 64.0, 1.0, 0.0, tol=1e-10, delta_cut=1e-4)
    v, dv = integrate_back(model, tr)
    assert abs(v - 1.0) <= 1e-8
    assert abs(dv) / 64.0 <= 1e-8


def test_self_convergence_oscillatory():
    model = CoefficientModel("oscillatory", m=0.8, p=1.8)
    ref = solve_mode(model, 64.0, tol=1e-10, delta_cut=1e-4)
    run = solve_mode(model, 64.0, tol=1e-8, delta_cut=1e-4)
    assert abs(run.v[-1] - ref.v[-1]) <= 1e-7 * abs(ref.v[-1])
    assert abs(run.dv[-1] - ref.dv[-1]) <= 1e-7 * abs(ref.dv[-1])


def test_delta_cut_convergence():
    # for integrable a the terminal value converges as the cut shrinks
    model = CoefficientModel("power_blowup", gamma=0.5)
    vals = [solve_mode(model, 16.0, delta_cut=c).v[-1]
            for c in (1e-4, 1e-6, 1e-8)]
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    assert d2 <= 0.1 * d1


def test_wronskian_constant():
    model = CoefficientModel("power_blowup", gamma=0.5)
    _, w = wronskian(model, 16.0, tol=1e-10, delta_cut=1e-6)
    assert np.max(np.abs(w - 1.0)) <= 1e-9


def test_wronskian_oscillatory():
    model = CoefficientModel("oscillatory", m=0.8, p=1.8)
    _, w = wronskian(model, 16.0, tol=1e-10, delta_cut=1e-6)
    assert np.max(np.abs(w - 1.0)) <= 1e-8


# --------------------------------------------------------------------------
# certificates

def test_conserved_energy_margin_one():
    model = CoefficientModel("constant", lambda0=0.5, c=0.5, p=0.0)
    plan = plan_of(model)
    xi = 32.0
    tr = solve_mode(model, xi, tol=1e-10)
    eps = plan.eps_for(scaled_xi(plan, xi), model.T)
    cert = energy_certificate(tr, model, plan, eps)
    assert cert.i1 == 0.0 and cert.i2 == 0.0
    assert abs(cert.margin - 1.0) <= cert.slack


def test_thm1_constant_margin_below_one():
    model = CoefficientModel("constant", c=1.0, p=3.0, r=0.0, s=1.0)
    plan = plan_of(model)
    tr = solve_mode(model, 16.0, tol=1e-10)
    eps = plan.eps_for(16.0, model.T)
    cert = energy_certificate(tr, model, plan, eps)
    assert cert.ok and cert.margin < 1.0
    assert not cert.degenerate


def test_zero_data_is_degenerate():
    model = CoefficientModel("power_blowup", gamma=0.5, p=2.0)
    plan = plan_of(model)
    tr = solve_mode(model, 16.0, 0.0, 0.0)
    cert = energy_certificate(tr, model, plan, 0.1)
    assert cert.degenerate and cert.ok and cert.margin == 0.0
    assert np.all(tr.v == 0)


def test_violation_is_raised():
    # with the integrals forced to zero the bound cannot hold
    model = CoefficientModel("power_blowup", gamma=0.5, p=2.0)
    plan = plan_of(model)
    tr = solve_mode(model, 16.0)
    with pytest.raises(CertificateViolation) as info:
        energy_certificate(tr, model, plan, 0.05,
                           integrals=((0.0, 0.0), (0.0, 0.0)))
    assert info.value.ratio > 1.0


def test_large_exponent_does_not_overflow():
    model = CoefficientModel("power_blowup", gamma=0.5, p=2.0)
    plan = plan_of(model)
    tr = solve_mode(model, 4096.0, tol=1e-8)
    cert = energy_certificate(tr, model, plan, plan.eps_for(4096.0, 1.0),
                              tol=1e-6)
    assert cert.ok and cert.margin < 1.0


def test_terminal_bound():
    model = CoefficientModel("power_blowup", gamma=0.5, p=2.0)
    plan = plan_of(model)
    fit = fit_scaling(model, plan, np.geomspace(1e-4, 1e-1, 12))
    for k in range(4, 9):
        tr = solve_mode(model, 2.0 ** k)
        chk = terminal_bound_check(tr, model, plan, fit.c_tilde)
        assert chk.ok and chk.log_ratio <= 0.0
