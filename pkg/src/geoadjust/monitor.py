"""Studies built on top of the integrator.

Energy budgets, the alpha -> 0 convergence sweep, the blow-up probe on the
regularized system, Monte-Carlo checks of two anisotropic product inequalities,
and an empirical constant for the small-data threshold.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.optimize

from .dynamics import SplitOperator, SystemKind
from .energy import EnergyReport, energy_functionals, y_weights
from .errors import ParameterError, UsageError
from .fields import (
    Params,
    State,
    _require_compatible,
    compute_px,
    compute_pz,
    compute_w,
    enforce_compatibility,
)
from .integrate import StepperConfig, Trajectory, run
from .spectral import (
    EVEN,
    ODD,
    SpectralField,
    differentiate,
    galerkin_product,
    random_field,
    sobolev_seminorms,
    synthesize_stack,
)

NO_BLOWUP = "NoBlowupEvidence"
BLOWUP_SUSPECTED = "BlowupSuspected"
THREADS_ENV = "GEOADJUST_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _map(fn, jobs: list, workers: Optional[int] = None) -> list:
    """Ordered map; fans out to processes when more than one worker is allowed."""
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# budgets


def energy_budget_residual(traj: Trajectory) -> np.ndarray:
    """``E(t) + 2 int_0^t D - E(0)`` for any system, per sample.

    ``E`` and ``D`` are the generalized energy and dissipation rate of the
    run's system (see :class:`geoadjust.dynamics.SplitOperator`).
    """
    if not traj.samples:
        return np.zeros(0)
    e0 = traj.samples[0].energy
    return np.array([s.energy + 2.0 * s.dissipated - e0 for s in traj.samples])


def budget_residual(traj: Trajectory) -> np.ndarray:
    """Residual of the velocity energy identity of the hydrostatic-damped system.

    With ``alpha = 0`` this is ``|u|^2 + 2 int (nu|u_z|^2 + eps1|u|^2 + eps2|w|^2) - |u0|^2``;
    with ``alpha > 0`` both energies gain ``alpha^2 |u_z|^2``.
    """
    if traj.kind is not SystemKind.HYDROSTATIC_DAMPED:
        raise UsageError(
            f"budget_residual applies to hydrostatic-damped runs, not {traj.kind.value}; "
            "use energy_budget_residual for the general identity"
        )
    return energy_budget_residual(traj)


def cancellation_audit(state: State, p: Params) -> dict[str, float]:
    """Pairings that vanish identically, plus the pointwise structural identities.

    Returned magnitudes are absolute; ``Y`` is included for scaling.
    """
    u = _require_compatible(state.u)
    v, T = state.v, state.T
    w = compute_w(u)
    px = compute_px(state, p)
    pz = compute_pz(u, T, p)

    def adv(q, out):
        return (galerkin_product(u, differentiate(q, "x"), out)
                + galerkin_product(w, differentiate(q, "z"), out))

    def sup(f):
        return float(np.abs(f.coeffs).max())

    return {
        "adv_u": abs(adv(u, EVEN).inner(u)),
        "adv_v": abs(adv(v, EVEN).inner(v)),
        "adv_T": abs(adv(T, ODD).inner(T)),
        "pressure_work": abs(px.inner(u) + pz.inner(w)),
        "coriolis": abs((v * p.f0).inner(u) + (u * -p.f0).inner(v)),
        "hydrostatic": sup(w * p.eps2 + pz + T),
        "incompressibility": sup(differentiate(u, "x") + differentiate(w, "z")),
        "curl_free": sup(differentiate(px, "z") - differentiate(pz, "x")),
        "Y": energy_functionals(state).Y_offset_free,
    }


def growth_constant(traj: Trajectory) -> float:
    """Largest observed ``(dY/dt) / Y^3`` between consecutive samples (Y with offset)."""
    best = 0.0
    samples = traj.samples
    for a, b in zip(samples, samples[1:]):
        ya = a.report.Y_offset_free + 1.0
        yb = b.report.Y_offset_free + 1.0
        rate = (yb - ya) / (b.t - a.t)
        best = max(best, rate / ya**3)
    return best


# ---------------------------------------------------------------------------
# alpha sweeps


def _check_alphas(alphas: Sequence[float]) -> list[float]:
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ParameterError("at least one alpha is required")
    if any(not (a > 0 and math.isfinite(a)) for a in alphas):
        raise ParameterError(f"alphas must be positive and finite, got {alphas}")
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ParameterError(f"alphas must be strictly decreasing, got {alphas}")
    return alphas


def _hd_state(u0: SpectralField) -> State:
    u0 = _require_compatible(u0)
    return State(u0, SpectralField.zeros(u0.m, EVEN), SpectralField.zeros(u0.m, ODD))


def _sweep_config(T: float, dt: float, min_samples: int) -> StepperConfig:
    steps = max(1, int(math.ceil(T / dt - 1e-9)))
    every = max(1, steps // max(1, min_samples))
    return StepperConfig(dt=dt, t_end=T, sample_every=every)


def _run_job(job):
    state, p, cfg = job
    return run(state, p, SystemKind.HYDROSTATIC_DAMPED, cfg)


@dataclass(frozen=True)
class ConvergenceResult:
    alphas: tuple
    errors: tuple
    fitted_rate: float
    rate_defined: bool
    times: tuple = field(repr=False, default=())
    diverged: tuple = ()
    # reference run first, then one per alpha
    trajectories: tuple = field(repr=False, compare=False, default=())

    @property
    def monotone(self) -> bool:
        """Errors shrink with alpha, allowing 5% for sampling effects."""
        return all(b <= 1.05 * a for a, b in zip(self.errors, self.errors[1:]))


def fit_rate(alphas: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(alpha); NaN if any error is 0."""
    e = np.asarray(errors, dtype=float)
    if len(e) < 2 or np.any(e <= 0) or not np.all(np.isfinite(e)):
        return float("nan")
    return float(np.polyfit(np.log(alphas), np.log(e), 1)[0])


def alpha_convergence(
    u0: SpectralField,
    p: Params,
    alphas: Sequence[float],
    T: float,
    *,
    dt: float = 2e-3,
    min_samples: int = 200,
    workers: Optional[int] = None,
) -> ConvergenceResult:
    """``sup_t |u^alpha(t) - u(t)|`` for the hydrostatic-damped system with equal data."""
    if p.nu <= 0:
        raise ParameterError("alpha convergence needs nu > 0 in the limit system")
    alphas = _check_alphas(alphas)
    state = _hd_state(u0)
    cfg = _sweep_config(T, dt, min_samples)
    jobs = [(state, p.replace(alpha=0.0), cfg)] + [(state, p.replace(alpha=a), cfg) for a in alphas]
    ref, *runs = _map(_run_job, jobs, workers)
    errors = []
    for tr in runs:
        n = min(len(tr.samples), len(ref.samples))
        errors.append(max(
            (tr.samples[i].state.u - ref.samples[i].state.u).norm() for i in range(n)
        ))
    rate = fit_rate(alphas, errors)
    return ConvergenceResult(
        tuple(alphas), tuple(errors), rate, math.isfinite(rate),
        tuple(ref.times), tuple(tr.diverged for tr in [ref, *runs]), (ref, *runs),
    )


@dataclass(frozen=True)
class BlowupProbeResult:
    alphas: tuple
    B: tuple
    extrapolated_limit: float
    limit_stderr: float
    exponent: float
    slope_coefficient: float
    floor: float
    verdict: str
    energy_bounds: tuple = ()
    bound_holds: bool = True
    failed_alphas: tuple = ()
    trajectories: tuple = field(repr=False, compare=False, default=())

    @property
    def resolution_failure(self) -> bool:
        return bool(self.failed_alphas)


def fit_limit(alphas: Sequence[float], B: Sequence[float], q_range=(1.0, 2.0)):
    """Fit ``B = b0 + b1 alpha^q`` with ``q`` in ``q_range``.

    Returns ``(b0, stderr(b0), q, b1)``.  The exponent is chosen by bounded
    minimization of the residual sum of squares; ``b0, b1`` by linear least
    squares for that exponent.
    """
    a = np.asarray(alphas, dtype=float)
    y = np.asarray(B, dtype=float)
    if np.all(y == 0):
        return 0.0, 0.0, float(q_range[1]), 0.0

    def lsq(q):
        A = np.column_stack([np.ones_like(a), a**q])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = y - A @ coef
        return coef, float(r @ r), A

    res = scipy.optimize.minimize_scalar(lambda q: lsq(q)[1], bounds=q_range, method="bounded",
                                         options={"xatol": 1e-10})
    q = float(res.x)
    # compare against the interval ends: the bounded search can stall near them
    for edge in q_range:
        if lsq(edge)[1] <= lsq(q)[1]:
            q = float(edge)
    coef, rss, A = lsq(q)
    dof = len(y) - 3
    if dof > 0:
        sigma2 = rss / dof
        cov = sigma2 * np.linalg.inv(A.T @ A)
        se = float(math.sqrt(max(cov[0, 0], 0.0)))
    else:
        se = float("inf")
    return float(coef[0]), se, q, float(coef[1])


def blowup_probe(
    u0: SpectralField,
    p: Params,
    alphas: Sequence[float],
    Tstar: float,
    *,
    dt: float = 2e-3,
    min_samples: int = 200,
    floor: Optional[float] = None,
    workers: Optional[int] = None,
) -> BlowupProbeResult:
    """``B(alpha) = alpha^2 sup_t |u_z^alpha|^2`` over a sweep, extrapolated to alpha = 0."""
    alphas = _check_alphas(alphas)
    if len(alphas) < 3:
        raise ParameterError("the extrapolation needs at least three alphas")
    state = _hd_state(u0)
    cfg = _sweep_config(Tstar, dt, min_samples)
    runs = _map(_run_job, [(state, p.replace(alpha=a), cfg) for a in alphas], workers)

    u_norm2 = state.u.norm() ** 2
    uz_norm2 = sobolev_seminorms(state.u, [(0, 1)])[(0, 1)] ** 2
    B, bounds, failed = [], [], []
    for a, tr in zip(alphas, runs):
        sup_uz = max(s.report.norms["uz"] for s in tr.samples)
        B.append(a * a * sup_uz)
        bounds.append(u_norm2 + a * a * uz_norm2)
        if tr.diverged:
            failed.append(a)
    bound_holds = all(b <= (1 + 1e-12) * c + 1e-300 for b, c in zip(B, bounds))

    b0, se, q, b1 = fit_limit(alphas, B)
    if floor is None:
        floor = max(1e-6 * u_norm2, 1e-14)
    verdict = BLOWUP_SUSPECTED if (b0 > 3.0 * se and b0 > floor) else NO_BLOWUP
    return BlowupProbeResult(tuple(alphas), tuple(B), b0, se, q, b1, floor, verdict,
                             tuple(bounds), bound_holds, tuple(failed), tuple(runs))


# ---------------------------------------------------------------------------
# product inequalities


def _grid_values(fields: Sequence[SpectralField], n: int) -> np.ndarray:
    return synthesize_stack(np.stack([f.coeffs for f in fields]), [f.parity for f in fields], n, n)


def lemma_ratios(f: SpectralField, g: SpectralField, h: SpectralField, n: int) -> tuple[float, float]:
    """Ratios of the triple-product and sup-norm bounds, integrals on an ``n x n`` grid."""
    vals = _grid_values([f, g, h], n)
    triple = float(np.mean(np.abs(vals[0] * vals[1] * vals[2])))
    nf = f.norm()
    ng = g.norm()
    nh = h.norm()
    ngz = differentiate(g, "z").norm()
    nhx = differentiate(h, "x").norm()
    denom = nf * math.sqrt(ng) * (math.sqrt(ng) + math.sqrt(ngz)) * math.sqrt(nh) * (
        math.sqrt(nh) + math.sqrt(nhx))
    r1 = triple / denom if denom > 0 else float("nan")

    s = sobolev_seminorms(f, [(0, 0), (1, 0), (0, 1), (1, 1)])
    h1 = s[(0, 0)] ** 2 + s[(1, 0)] ** 2 + s[(0, 1)] ** 2
    denom2 = math.sqrt(h1 + s[(1, 1)] ** 2)
    r2 = float(np.abs(vals[0]).max()) / denom2 if denom2 > 0 else float("nan")
    return r1, r2


@dataclass(frozen=True)
class LemmaCheckResult:
    trials: int
    m: int
    ratio1_max: float
    ratio2_max: float
    ratio1_history: tuple = field(repr=False, default=())
    ratio2_history: tuple = field(repr=False, default=())


def anisotropic_lemma_check(trials: int, m: int, seed: int = 0, *, oversample: int = 4
                            ) -> LemmaCheckResult:
    """Largest observed ratios over random band-limited fields (empirical lower bounds)."""
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    n = oversample * (2 * m + 1)
    r1max = r2max = 0.0
    h1, h2 = [], []
    for _ in range(trials):
        fs = []
        for _ in range(3):
            parity = EVEN if rng.random() < 0.5 else ODD
            slope = rng.uniform(0.5, 2.5)
            band = int(rng.integers(1, m + 1))
            fs.append(random_field(m, parity, rng, slope=slope, bandwidth=band))
        r1, r2 = lemma_ratios(*fs, n)
        r1max, r2max = max(r1max, r1), max(r2max, r2)
        h1.append(r1max)
        h2.append(r2max)
    return LemmaCheckResult(trials, m, r1max, r2max, tuple(h1), tuple(h2))


# ---------------------------------------------------------------------------
# small-data threshold


@dataclass(frozen=True)
class SmallDataFit:
    constant: float
    threshold: float
    samples: int


def quadratic_part(op: SplitOperator, s: np.ndarray) -> np.ndarray:
    """The homogeneous-quadratic part of the tendency, via ``Q(s) = (f(2s) - 2 f(s)) / 2``."""
    return 0.5 * (op.full(2.0 * s) - 2.0 * op.full(s))


def small_data_ratio(op: SplitOperator, state: State) -> float:
    s = state.stack()
    W = y_weights(state.m)
    num = abs(float(np.vdot(W * s, quadratic_part(op, s)).real))
    rep = energy_functionals(state)
    denom = math.sqrt(rep.Y_offset_free) * (rep.F + rep.K_velocity + rep.G + rep.H_temperature)
    return num / denom if denom > 0 else 0.0


def small_data_threshold(p: Params, constant: float) -> float:
    return min(p.nu**2, p.eps1**2, p.eps2**2 / 4.0, p.kappa**2 / 4.0) / constant**2


def fit_small_data_constant(
    p: Params, *, samples: int = 64, seed: int = 0, extra: Sequence[State] = ()
) -> SmallDataFit:
    """Empirical constant ``C`` in ``|nonlinear part of dY/dt| / 2 <= C Y^1/2 (F + K + G + H)``.

    ``C`` is the largest ratio over seeded random states (with varied spectral
    slopes) and any ``extra`` states supplied.
    """
    op = SplitOperator(p, SystemKind.PRIMITIVE)
    rng = np.random.default_rng(seed)
    best = 0.0
    for i in range(samples):
        slope = 0.75 + 2.0 * (i % 8) / 7.0
        band = 1 + int(rng.integers(0, p.m))
        u = enforce_compatibility(random_field(p.m, EVEN, rng, slope=slope, bandwidth=band))[0]
        st = State(u, random_field(p.m, EVEN, rng, slope=slope, bandwidth=band),
                   random_field(p.m, ODD, rng, slope=slope, bandwidth=band))
        best = max(best, small_data_ratio(op, st))
    for st in extra:
        best = max(best, small_data_ratio(op, st))
    return SmallDataFit(best, small_data_threshold(p, best), samples + len(extra))


def scale_to_Y(state: State, target: float) -> State:
    """Rescale so that the offset-free Y equals ``target``."""
    y = energy_functionals(state).Y_offset_free
    if y == 0:
        raise ParameterError("cannot rescale the zero state")
    return state.scaled(math.sqrt(target / y))


__all__ = [
    "BLOWUP_SUSPECTED",
    "BlowupProbeResult",
    "ConvergenceResult",
    "EnergyReport",
    "LemmaCheckResult",
    "NO_BLOWUP",
    "SmallDataFit",
    "alpha_convergence",
    "anisotropic_lemma_check",
    "blowup_probe",
    "budget_residual",
    "cancellation_audit",
    "energy_budget_residual",
    "energy_functionals",
    "fit_limit",
    "fit_rate",
    "fit_small_data_constant",
    "growth_constant",
    "lemma_ratios",
    "scale_to_Y",
    "small_data_ratio",
    "small_data_threshold",
]
