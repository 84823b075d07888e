import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoadjust.dynamics import SystemKind
from geoadjust.energy import energy_functionals, y_weights
from geoadjust.errors import ParameterError, UsageError
from geoadjust.fields import Params, State, initial_state, random_compatible_state, state_from_modes
from geoadjust.integrate import StepperConfig, run
from geoadjust.monitor import (
    BLOWUP_SUSPECTED,
    NO_BLOWUP,
    alpha_convergence,
    anisotropic_lemma_check,
    blowup_probe,
    budget_residual,
    cancellation_audit,
    energy_budget_residual,
    fit_limit,
    fit_rate,
    fit_small_data_constant,
    growth_constant,
    lemma_ratios,
    scale_to_Y,
    worker_count,
)
from geoadjust.spectral import EVEN, SpectralField, antiderivative_z, differentiate

import oracles

PI = np.pi
SQRT2 = np.sqrt(2.0)
HD = SystemKind.HYDROSTATIC_DAMPED


def params(m=8, **kw):
    base = dict(nu=0.1, kappa=0.1, eps1=0.05, eps2=1.0, f0=0.0, alpha=0.0, m=m)
    base.update(kw)
    return Params(**base)


# ------------------------------------------------------------ functionals


def test_zero_state_functionals_vanish():
    rep = energy_functionals(State.zeros(6))
    assert rep.Y == rep.F == rep.G == rep.K == 0.0
    assert energy_functionals(State.zeros(6), offset=True).Y == 1.0


def test_separable_mode_functionals():
    # sin(2 pi x) cos(2 pi z): modes (+-1, 1) with coefficient -+ i / (2 sqrt 2)
    s = state_from_modes(4, {"u": {(1, 1): -0.5j / SQRT2}})
    rep = energy_functionals(s)
    expected = 0.25 + 2 * PI**2 + 8 * PI**4
    assert rep.Y == pytest.approx(expected, rel=1e-14)
    # independent check of each term on a 512^2 grid
    X, Z = oracles.grid(512)
    u = np.sin(2 * PI * X) * np.cos(2 * PI * Z)
    ux = 2 * PI * np.cos(2 * PI * X) * np.cos(2 * PI * Z)
    uz = -2 * PI * np.sin(2 * PI * X) * np.sin(2 * PI * Z)
    uxx, uxz = -4 * PI**2 * u, -4 * PI**2 * np.cos(2 * PI * X) * np.sin(2 * PI * Z)
    quad = np.mean(u**2 + ux**2 + uz**2 + uxx**2 + uxz**2)
    assert rep.Y == pytest.approx(quad, rel=1e-12)
    assert rep.with_offset(True).Y == pytest.approx(expected + 1.0, rel=1e-15)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_functionals_are_quadratic(seed):
    s = random_compatible_state(6, np.random.default_rng(seed))
    a, b = energy_functionals(s), energy_functionals(s.scaled(2.0))
    for name in ("Y", "F", "G", "K"):
        assert getattr(b, name) == pytest.approx(4 * getattr(a, name), rel=1e-13)
    assert all(v >= 0 for v in a.norms.values())


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_norms_match_oversampled_quadrature(seed):
    m = 5
    s = random_compatible_state(m, np.random.default_rng(seed))
    rep = energy_functionals(s)
    X, Z = oracles.grid(4 * (2 * m + 1))

    def q(f):
        return float(np.mean(oracles.evaluate(f, X, Z).real ** 2))

    w = antiderivative_z(-differentiate(s.u, "x"))
    checks = {
        "u": q(s.u), "uz": q(differentiate(s.u, "z")), "ux": q(differentiate(s.u, "x")),
        "T": q(s.T), "w": q(w), "wx": q(differentiate(w, "x")),
        "lap_T": q(differentiate(differentiate(s.T, "x"), "x")
                   + differentiate(differentiate(s.T, "z"), "z")),
    }
    for name, val in checks.items():
        assert rep.norms[name] == pytest.approx(val, rel=1e-9, abs=1e-300)


def test_y_weights_reproduce_Y():
    s = random_compatible_state(6, np.random.default_rng(11))
    x = s.stack()
    assert float(np.sum(y_weights(6) * np.abs(x) ** 2)) == pytest.approx(
        energy_functionals(s).Y, rel=1e-13)


# ------------------------------------------------------------ budgets


def test_budget_requires_hydrostatic_damped_run():
    tr = run(State.zeros(4), params(m=4), SystemKind.PRIMITIVE, StepperConfig(0.1, 0.2))
    with pytest.raises(UsageError):
        budget_residual(tr)
    assert not np.any(energy_budget_residual(tr))


def test_budget_zero_and_zonal():
    tr = run(State.zeros(4), params(m=4), HD, StepperConfig(0.1, 0.5))
    assert not np.any(budget_residual(tr))
    # single mode cos(2 pi z); the budget quadrature is Simpson-like, so keep 2 lam dt small
    for alpha in (0.0, 0.1):
        s = initial_state("zonal", 8)
        tr = run(s, params(alpha=alpha), HD, StepperConfig(1e-3, 1.0, sample_every=50))
        assert np.abs(budget_residual(tr)).max() <= 1e-10 * s.u.norm() ** 2


def test_budget_converges_at_fourth_order():
    s = initial_state("random-band", 12, amplitude=1.0, bandwidth=6, seed=1)
    worst = []
    for dt in (4e-3, 2e-3):
        tr = run(s, params(m=12), HD, StepperConfig(dt, 0.5, sample_every=25))
        worst.append(np.abs(budget_residual(tr)).max() / s.u.norm() ** 2)
    assert math.log2(worst[0] / worst[1]) >= 3.5


def test_cancellation_audit_is_small():
    p = params(f0=1.2)
    s = random_compatible_state(8, np.random.default_rng(5))
    audit = cancellation_audit(s, p)
    Y = audit.pop("Y")
    assert max(audit.values()) <= 1e-12 * Y


def test_growth_constant_zero_for_decaying_run():
    s = initial_state("zonal", 6)
    tr = run(s, params(m=6), HD, StepperConfig(0.05, 0.5))
    assert growth_constant(tr) == 0.0


def test_growth_constant_stable_under_refinement():
    vals = []
    for m, dt in ((8, 2e-3), (16, 2e-3), (16, 1e-3)):
        p = Params(nu=0.01, kappa=0.01, eps1=0.01, eps2=0.1, f0=1.0, m=m)
        ic = initial_state("taylor-like", m, amplitude=1.0, v_amplitude=1.0, T_amplitude=1.0)
        tr = run(ic, p, SystemKind.PRIMITIVE, StepperConfig(dt, 0.5, sample_every=5, keep_states=False))
        vals.append(growth_constant(tr))
    assert vals[0] > 0
    assert all(abs(v / vals[0] - 1) <= 0.2 for v in vals)


# ------------------------------------------------------------ alpha sweeps


def test_alpha_validation():
    u0 = initial_state("zonal", 4).u
    with pytest.raises(ParameterError):
        alpha_convergence(u0, params(m=4, nu=0.0), [0.1, 0.05], 0.1)
    with pytest.raises(ParameterError):
        alpha_convergence(u0, params(m=4), [0.05, 0.1], 0.1)
    with pytest.raises(ParameterError):
        blowup_probe(u0, params(m=4), [0.1, 0.05], 0.1)
    with pytest.raises(ParameterError):
        blowup_probe(u0, params(m=4), [0.1, -0.05, -0.1], 0.1)


def test_convergence_zero_data():
    res = alpha_convergence(SpectralField.zeros(4, EVEN), params(m=4), [0.1, 0.05], 0.2, dt=0.01)
    assert res.errors == (0.0, 0.0) and not res.rate_defined and math.isnan(res.fitted_rate)


def test_convergence_zonal_closed_form():
    p = params(m=8)
    u0 = initial_state("zonal", 8).u  # single mode cos(2 pi z)
    alphas = [0.02, 0.01, 0.005]
    res = alpha_convergence(u0, p, alphas, 1.0, dt=0.01)
    lam = 4 * PI**2 * p.nu + p.eps1
    t = np.asarray(res.times)
    for a, err in zip(alphas, res.errors):
        exact = u0.norm() * np.max(np.abs(np.exp(-lam * t / (1 + 4 * PI**2 * a * a))
                                          - np.exp(-lam * t)))
        assert err == pytest.approx(exact, rel=1e-8)
    assert res.fitted_rate == pytest.approx(2.0, abs=0.1)
    assert res.monotone


def test_fit_rate_examples():
    a = [0.1, 0.05, 0.025]
    assert fit_rate(a, [3 * x**2 for x in a]) == pytest.approx(2.0, abs=1e-12)
    assert math.isnan(fit_rate(a, [1.0, 0.0, 1.0]))


def test_fit_limit_recovers_model():
    a = np.array([0.2, 0.1, 0.05, 0.025])
    b0, se, q, b1 = fit_limit(a, 0.3 + 2.0 * a**1.5)
    assert b0 == pytest.approx(0.3, abs=1e-8) and q == pytest.approx(1.5, abs=1e-5)
    assert b1 == pytest.approx(2.0, rel=1e-5)
    assert fit_limit(a, np.zeros(4)) == (0.0, 0.0, 2.0, 0.0)
    assert math.isinf(fit_limit(a[:3], 1.0 + a[:3] ** 2)[1])


def test_blowup_probe_zonal_and_zero():
    p = params(m=8)
    u0 = initial_state("zonal", 8, bandwidth=2).u
    alphas = [0.1, 0.05, 0.025, 0.0125]
    res = blowup_probe(u0, p, alphas, 0.5, dt=0.01)
    uz2 = differentiate(u0, "z").norm() ** 2
    for a, b in zip(alphas, res.B):
        assert b == pytest.approx(a * a * uz2, rel=1e-8)
    assert abs(res.extrapolated_limit) <= 1e-10
    assert res.verdict == NO_BLOWUP and res.bound_holds and not res.resolution_failure

    res = blowup_probe(SpectralField.zeros(4, EVEN), params(m=4), [0.1, 0.05, 0.025], 0.2, dt=0.05)
    assert res.B == (0.0, 0.0, 0.0) and res.verdict == NO_BLOWUP


def test_blowup_verdict_from_floor():
    # a forced positive intercept trips the verdict when above the floor
    a = np.array([0.2, 0.1, 0.05, 0.025])
    b0, se, _, _ = fit_limit(a, 0.5 + a**2 + 1e-9 * np.array([1, -1, 1, -1]))
    assert b0 > 3 * se and b0 > 1e-6
    assert BLOWUP_SUSPECTED != NO_BLOWUP


def test_parallel_sweep_matches_serial(monkeypatch):
    u0 = initial_state("random-band", 6, amplitude=0.5, bandwidth=3, seed=2).u
    p = params(m=6)
    serial = alpha_convergence(u0, p, [0.1, 0.05], 0.1, dt=0.01, workers=1)
    parallel = alpha_convergence(u0, p, [0.1, 0.05], 0.1, dt=0.01, workers=2)
    assert serial.errors == parallel.errors
    monkeypatch.setenv("GEOADJUST_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("GEOADJUST_THREADS", "many")
    with pytest.raises(UsageError):
        worker_count()


# ------------------------------------------------------------ product inequalities


def test_lemma_ratios_constants():
    one_e = SpectralField.from_modes(3, EVEN, {(0, 0): 1.0})
    r1, r2 = lemma_ratios(one_e, one_e, one_e, 28)
    assert r1 == pytest.approx(1.0, rel=1e-14) and r2 == pytest.approx(1.0, rel=1e-14)


def test_lemma_check_finite_and_stabilizing():
    small = anisotropic_lemma_check(100, 8, seed=1)
    big = anisotropic_lemma_check(200, 8, seed=1)
    assert np.all(np.isfinite(big.ratio1_history)) and np.all(np.isfinite(big.ratio2_history))
    assert big.ratio1_history[:100] == small.ratio1_history
    assert big.ratio1_max <= 1.25 * small.ratio1_max
    assert big.ratio2_max <= 1.25 * small.ratio2_max
    with pytest.raises(ParameterError):
        anisotropic_lemma_check(0, 4)


# ------------------------------------------------------------ small data


def test_small_data_constant_is_scale_invariant():
    p = params(m=6, f0=1.0)
    fit = fit_small_data_constant(p, samples=16, seed=3)
    assert fit.constant > 0 and fit.samples == 16
    s = initial_state("random-band", 6, amplitude=1.0, v_amplitude=1.0, T_amplitude=1.0,
                      bandwidth=3, seed=1)
    a = fit_small_data_constant(p, samples=0, extra=[s]).constant
    b = fit_small_data_constant(p, samples=0, extra=[s.scaled(7.0)]).constant
    # cubic over cubic: the ratio does not depend on amplitude
    assert b == pytest.approx(a, rel=1e-10)


def test_scale_to_Y():
    s = initial_state("taylor-like", 6, amplitude=0.3)
    assert energy_functionals(scale_to_Y(s, 2.5)).Y == pytest.approx(2.5, rel=1e-13)
    with pytest.raises(ParameterError):
        scale_to_Y(State.zeros(4), 1.0)
