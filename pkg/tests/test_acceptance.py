"""The ten acceptance criteria, each reported as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines appear in
the terminal summary (and on stdout when run with ``-s``).
"""

import math
import time

import numpy as np
import pytest

from geoadjust.checkpoint import decode, encode
from geoadjust.cli import main
from geoadjust.dynamics import SystemKind
from geoadjust.fields import Params, State, initial_state, random_compatible_state
from geoadjust.integrate import Scheme, StepperConfig, run
from geoadjust.monitor import (
    NO_BLOWUP,
    alpha_convergence,
    blowup_probe,
    budget_residual,
    cancellation_audit,
    fit_small_data_constant,
    scale_to_Y,
)
from geoadjust.spectral import differentiate

import acceptance_log
from manufactured import Manufactured

PI = np.pi
HD = SystemKind.HYDROSTATIC_DAMPED

# every trajectory produced here; criterion 5 inspects all of their samples
RUNS = []


def tracked(traj):
    RUNS.append(traj)
    return traj


def report(number, title, ok, detail, t0):
    acceptance_log.record(number, title, ok, detail, time.perf_counter() - t0)
    assert ok, detail


def budget_params(alpha=0.0, m=32):
    return Params(nu=0.1, kappa=0.1, eps1=0.05, eps2=1.0, alpha=alpha, m=m)


def small_data_params():
    return Params(nu=0.1, kappa=0.1, eps1=0.05, eps2=1.0, f0=1.0, m=16)


@pytest.fixture(scope="module")
def ensemble():
    """100 seeded random compatible states at m = 16."""
    return [random_compatible_state(16, np.random.default_rng(seed)) for seed in range(100)]


# ---------------------------------------------------------------- 1 and 2


def test_criterion_01_exact_cancellations(ensemble):
    t0 = time.perf_counter()
    p = Params(nu=0.1, kappa=0.1, eps1=0.05, eps2=1.0, f0=1.3, m=16)
    worst = 0.0
    keys = ("adv_u", "adv_v", "adv_T", "pressure_work", "coriolis")
    for s in ensemble:
        a = cancellation_audit(s, p)
        worst = max(worst, max(a[k] for k in keys) / a["Y"])
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10.0
    report(1, "exact cancellations", ok,
           f"max pairing / Y = {worst:.2e} (tol 1e-12), runtime {elapsed:.2f} s (limit 10 s)", t0)


def test_criterion_02_structural_identities(ensemble):
    t0 = time.perf_counter()
    p = Params(nu=0.1, kappa=0.1, eps1=0.05, eps2=1.0, f0=1.3, m=16)
    worst = {"hydrostatic": 0.0, "incompressibility": 0.0, "curl_free": 0.0}
    for s in ensemble:
        a = cancellation_audit(s, p)
        for k in worst:
            worst[k] = max(worst[k], a[k])
    ok = max(worst.values()) <= 1e-12
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(2, "structural identities (max modewise |defect|)", ok, f"{detail} (tol 1e-12)", t0)


# ---------------------------------------------------------------- 3 and 4


def _budget_study(alpha):
    p = budget_params(alpha)
    # zonal single mode: every term of the identity is closed-form
    z = initial_state("zonal", 32)
    tr = tracked(run(z, p, HD, StepperConfig(1e-3, 1.0, sample_every=50)))
    zonal = np.abs(budget_residual(tr)).max() / z.u.norm() ** 2
    lam = (4 * PI**2 * p.nu + p.eps1) / (1 + 4 * PI**2 * alpha**2)
    closed = max(abs(x.state.u.norm() - math.exp(-lam * x.t) * z.u.norm()) for x in tr.samples)

    s = initial_state("random-band", 32, amplitude=1.0, bandwidth=8, seed=1)
    u0 = s.u.norm() ** 2
    worst = {}
    for dt in (4e-3, 2e-3, 1e-3):
        tr = tracked(run(s, p, HD, StepperConfig(dt, 1.0, sample_every=max(1, int(0.01 / dt)))))
        worst[dt] = np.abs(budget_residual(tr)).max() / u0
    orders = [math.log2(worst[4e-3] / worst[2e-3]), math.log2(worst[2e-3] / worst[1e-3])]
    return zonal, closed, worst, orders


def _budget_verdict(number, title, alpha):
    t0 = time.perf_counter()
    zonal, closed, worst, orders = _budget_study(alpha)
    elapsed = time.perf_counter() - t0
    ok = (zonal <= 1e-10 and closed <= 1e-10 and worst[1e-3] <= 1e-7 and min(orders) >= 3.5
          and elapsed < 60.0)
    detail = (f"zonal residual {zonal:.1e} (solution vs closed form {closed:.1e}); random IC "
              f"residual/|u0|^2 at dt 4e-3, 2e-3, 1e-3 = {worst[4e-3]:.1e}, {worst[2e-3]:.1e}, "
              f"{worst[1e-3]:.1e} (tol 1e-7), orders {orders[0]:.2f}, {orders[1]:.2f} (min 3.5)")
    report(number, title, ok, detail, t0)


def test_criterion_03_energy_budget():
    _budget_verdict(3, "energy budget alpha = 0", 0.0)


def test_criterion_04_voigt_budget():
    _budget_verdict(4, "energy budget alpha = 0.1", 0.1)


# ---------------------------------------------------------------- 6


def test_criterion_06_alpha_convergence():
    t0 = time.perf_counter()
    p = Params(nu=0.1, kappa=0.1, eps1=0.05, eps2=1.0, m=16)
    u0 = initial_state("zonal", 16).u
    alphas = [0.02, 0.01, 0.005]
    zon = alpha_convergence(u0, p, alphas, 1.0, dt=1e-2)
    RUNS.extend(zon.trajectories)
    lam = 4 * PI**2 * p.nu + p.eps1
    t = np.asarray(zon.times)
    rel = max(
        abs(err - u0.norm() * np.max(np.abs(np.exp(-lam * t / (1 + 4 * PI**2 * a * a))
                                            - np.exp(-lam * t)))) / err
        for a, err in zip(alphas, zon.errors))

    g0 = initial_state("random-band", 16, amplitude=1.0, bandwidth=6, seed=1).u
    gen = alpha_convergence(g0, p, [0.1, 0.05, 0.025], 1.0, dt=2e-3)
    RUNS.extend(gen.trajectories)
    elapsed = time.perf_counter() - t0
    ok = (rel <= 1e-8 and abs(zon.fitted_rate - 2.0) <= 0.1 and gen.fitted_rate >= 1.0
          and zon.monotone and gen.monotone and elapsed < 180.0)
    detail = (f"zonal errors vs closed form rel {rel:.1e} (tol 1e-8), rate {zon.fitted_rate:.3f} "
              f"(2 +- 0.1); generic rate {gen.fitted_rate:.3f} (min 1.0), "
              f"errors {', '.join(f'{e:.2e}' for e in gen.errors)}")
    report(6, "alpha convergence", ok, detail, t0)


# ---------------------------------------------------------------- 7 and 8


@pytest.fixture(scope="module")
def small_data():
    p = small_data_params()
    ic = initial_state("random-band", 16, amplitude=1.0, v_amplitude=1.0, T_amplitude=1.0,
                       bandwidth=4, slope=2.0, seed=3)
    fit = fit_small_data_constant(p, samples=64, seed=0, extra=[ic])
    return p, fit, scale_to_Y(ic, 1e-4 * fit.threshold)


def test_criterion_07_blowup_probe(small_data):
    t0 = time.perf_counter()
    p, fit, s0 = small_data
    alphas = [0.1, 0.05, 0.025, 0.0125]
    u0 = initial_state("zonal", 16).u
    zon = blowup_probe(u0, p, alphas, 1.0, dt=1e-2)
    RUNS.extend(zon.trajectories)
    uz2 = differentiate(u0, "z").norm() ** 2
    rel = max(abs(b / (a * a * uz2) - 1) for a, b in zip(alphas, zon.B))
    small = blowup_probe(s0.u, p, alphas, 1.0, dt=2e-3)
    RUNS.extend(small.trajectories)
    elapsed = time.perf_counter() - t0
    ok = (rel <= 1e-8 and abs(zon.extrapolated_limit) <= 1e-10 and zon.verdict == NO_BLOWUP
          and small.verdict == NO_BLOWUP and zon.bound_holds and small.bound_holds
          and elapsed < 180.0)
    detail = (f"zonal B/(alpha^2 |u0_z|^2) - 1 <= {rel:.1e} (tol 1e-8), limit "
              f"{zon.extrapolated_limit:.1e} (tol 1e-10); small data (C^ = {fit.constant:.3e}, "
              f"threshold {fit.threshold:.4g}) limit {small.extrapolated_limit:.1e} "
              f"+- {small.limit_stderr:.1e}, verdict {small.verdict}")
    report(7, "blow-up probe sanity", ok, detail, t0)


def test_criterion_08_small_data_monotone(small_data):
    t0 = time.perf_counter()
    p, fit, s0 = small_data
    tr = tracked(run(s0, p, SystemKind.PRIMITIVE, StepperConfig(5e-3, 5.0, sample_every=5)))
    Y = np.array([x.report.Y_offset_free for x in tr.samples])
    steps = np.diff(Y)
    ok = bool(np.all(steps <= 0)) and not tr.diverged
    detail = (f"Y(0) = {Y[0]:.4g} = 1e-4 x threshold, {len(Y)} samples over T = 5, "
              f"largest increment {steps.max():.2e}, Y(5)/Y(0) = {Y[-1] / Y[0]:.3f}")
    report(8, "small-data monotone Y", ok, detail, t0)


# ---------------------------------------------------------------- 9


def test_criterion_09_spectral_exactness():
    t0 = time.perf_counter()
    p = Params(nu=0.1, kappa=0.1, eps1=0.05, eps2=1.0, f0=1.0, alpha=0.1, m=3)
    errs = {}
    for kind in (SystemKind.PRIMITIVE, SystemKind.VOIGT, HD):
        mf = Manufactured(p, kind, band=3)
        for m in (2, 4, 6):
            s0 = State.from_stack(mf.exact(0.0, m))
            tr = tracked(run(s0, p.replace(m=m), kind, StepperConfig(2.5e-4, 0.25, sample_every=100),
                             forcing=mf.source(m)))
            errs[kind, m] = np.abs(tr.final.state.stack() - mf.exact(0.25, m)).max()
    resolved = max(v for (k, m), v in errs.items() if m > 3)
    under = min(v for (k, m), v in errs.items() if m == 2)

    mf = Manufactured(p, band=3)
    dts = np.array([1e-2, 5e-3, 2.5e-3])
    orders = {}
    for scheme in Scheme:
        e = []
        for dt in dts:
            tr = tracked(run(State.from_stack(mf.exact(0.0, 3)), p, SystemKind.PRIMITIVE,
                             StepperConfig(float(dt), 1.0, scheme=scheme, sample_every=20),
                             forcing=mf.source(3)))
            e.append(np.abs(tr.final.state.stack() - mf.exact(1.0, 3)).max())
        orders[scheme] = float(np.polyfit(np.log(dts), np.log(e), 1)[0])
    ok = resolved <= 1e-10 and min(orders.values()) >= 3.8
    detail = (f"max error with m > bandwidth 3: {resolved:.1e} (tol 1e-10; m = 2 gives "
              f"{under:.1e}); temporal order "
              + ", ".join(f"{s.value} {o:.2f}" for s, o in orders.items()) + " (min 3.8)")
    report(9, "spectral exactness", ok, detail, t0)


# ---------------------------------------------------------------- 10


def test_criterion_10_determinism_and_serialization(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    monkeypatch.setenv("GEOADJUST_THREADS", "1")
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "system: primitive\n"
        "params: {m: 12, f0: 1.0}\n"
        "stepper: {dt: 0.005, t_end: 0.25, sample_every: 5}\n"
        "initial_condition: {preset: random-band, bandwidth: 6, v_amplitude: 0.5, "
        "T_amplitude: 0.5, seed: 4}\n"
        "output: {checkpoint_every: 3}\n")
    dirs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["run", "--config", str(cfg), "--output", str(d)]) for d in dirs]
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    same = all((dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files)
    exact = 0
    for seed in range(20):
        s = random_compatible_state(16, np.random.default_rng(seed)).at(seed * 0.1)
        back = decode(encode(s))[0]
        exact += back.stack().tobytes() == s.stack().tobytes() and back.t == s.t
    ok = codes == [0, 0] and same and len(files) >= 5 and exact == 20
    detail = (f"{len(files)} output files byte-identical across two runs: {same}; "
              f"checkpoint round trips bit-exact {exact}/20")
    report(10, "determinism and serialization", ok, detail, t0)


# ---------------------------------------------------------------- 5 (after all runs)


def test_criterion_05_energy_inequalities():
    t0 = time.perf_counter()
    # extra runs so every system is represented with all three fields active
    p = Params(nu=0.05, kappa=0.05, eps1=0.05, eps2=0.5, f0=1.0, alpha=0.05, m=12)
    for kind in SystemKind:
        for seed in range(3):
            s = initial_state("random-band", 12, amplitude=2.0, bandwidth=8, seed=seed,
                              v_amplitude=0.0 if kind is HD else 1.0,
                              T_amplitude=0.0 if kind is HD else 1.0)
            tracked(run(s, p, kind, StepperConfig(5e-3, 0.5, sample_every=2)))
    checked = 0
    worst = -math.inf
    r1 = r2 = 0.0
    for tr in RUNS:
        for x in tr.samples:
            n = x.report.norms
            ux, uxx = math.sqrt(n["ux"]), math.sqrt(n["uxx"])
            gap1 = math.sqrt(n["w"]) - ux
            gap2 = math.sqrt(n["wx"]) - uxx
            worst = max(worst, gap1 - 1e-13 * max(1.0, ux), gap2 - 1e-13 * max(1.0, uxx))
            if ux > 0:
                r1 = max(r1, math.sqrt(n["w"]) / ux)
                r2 = max(r2, math.sqrt(n["wx"]) / uxx)
            checked += 1
    ok = worst <= 0 and checked > 0
    detail = (f"{checked} sampled states from {len(RUNS)} runs; largest |w|/|u_x| = {r1:.3f}, "
              f"|w_x|/|u_xx| = {r2:.3f}; no violation beyond 1e-13 slack: {worst <= 0}")
    report(5, "|w| <= |u_x| and |w_x| <= |u_xx|", ok, detail, t0)
