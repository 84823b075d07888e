"""Time stepping with exact propagation of the diagonal linear part.

The default scheme is the Lawson (integrating-factor) form of classical RK4:
with ``E = exp(-dt lam)`` and ``E2 = exp(-dt lam / 2)``,

    k1 = N(s)
    k2 = N(E2 (s + dt/2 k1))
    k3 = N(E2 s + dt/2 k2)
    k4 = N(E s + dt E2 k3)
    s' = E s + dt/6 (E k1 + 2 E2 (k2 + k3) + k4).

Alongside the state the stepper integrates the dissipation rate ``D`` over the
step with the same stage values, which keeps the discrete energy budget at the
order of the scheme.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import SplitOperator, SystemKind
from .energy import EnergyReport, energy_functionals
from .errors import DivergenceError, ParameterError, ShapeError
from .fields import Params, State, _check_state
from .spectral import EVEN, ODD, antiderivative_z_coeffs, ddx, synthesize_stack


class Scheme(enum.Enum):
    EXPLICIT_RK4 = "ExplicitRK4"
    INTEGRATING_FACTOR_RK4 = "IntegratingFactorRK4"


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_end: float
    scheme: Scheme = Scheme.INTEGRATING_FACTOR_RK4
    sample_every: int = 1
    cfl_limit: Optional[float] = None
    keep_states: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ParameterError(f"t_end must be >= 0, got {self.t_end}")
        if not isinstance(self.scheme, Scheme):
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ParameterError(f"sample_every must be a positive integer, got {self.sample_every}")
        if self.cfl_limit is not None and not (self.cfl_limit > 0):
            raise ParameterError(f"cfl_limit must be > 0 when set, got {self.cfl_limit}")


@dataclass(frozen=True)
class Sample:
    t: float
    state: Optional[State]
    report: EnergyReport
    energy: float
    dissipated: float  # integral of D from 0 to t


@dataclass
class Trajectory:
    samples: list
    params: Params
    kind: SystemKind
    config: Optional[StepperConfig] = None
    diverged: bool = False
    failure: Optional[str] = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def states(self) -> list:
        return [s.state for s in self.samples]

    @property
    def final(self) -> Sample:
        return self.samples[-1]


# ---------------------------------------------------------------------------


class Stepper:
    """Reusable stepping machinery for one ``(params, kind, scheme)`` triple."""

    def __init__(
        self,
        p: Params,
        kind: SystemKind,
        scheme: Scheme = Scheme.INTEGRATING_FACTOR_RK4,
        forcing: Optional[Callable[[float], np.ndarray]] = None,
    ):
        self.p = p
        self.kind = kind
        self.scheme = Scheme(scheme)
        self.op = SplitOperator(p, kind)
        # optional additive source term g(t) on stacked coefficients
        self.forcing = forcing
        self._factors: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        m = p.m
        self._compat = np.zeros((2 * m + 1, m + 1), dtype=bool)
        self._compat[:, 0] = True
        self._compat[m, 0] = False

    def _exp(self, dt: float):
        f = self._factors.get(dt)
        if f is None:
            f = (np.exp(-dt * self.op.lam), np.exp(-0.5 * dt * self.op.lam))
            if len(self._factors) > 8:
                self._factors.clear()
            self._factors[dt] = f
        return f

    def _rate(self, fn, x: np.ndarray, t: float) -> np.ndarray:
        out = fn(x)
        if self.forcing is not None:
            out = out + self.forcing(t)
        return out

    def advance(self, s: np.ndarray, dt: float, t: float = 0.0) -> tuple[np.ndarray, float]:
        """One step of size ``dt`` from time ``t``; returns the new coefficients and the integral of D."""
        op = self.op
        half = t + 0.5 * dt
        if self.scheme is Scheme.INTEGRATING_FACTOR_RK4:
            E, E2 = self._exp(dt)
            N = op.explicit
            k1 = self._rate(N, s, t)
            s2 = E2 * (s + 0.5 * dt * k1)
            k2 = self._rate(N, s2, half)
            s3 = E2 * s + 0.5 * dt * k2
            k3 = self._rate(N, s3, half)
            s4 = E * s + dt * (E2 * k3)
            k4 = self._rate(N, s4, t + dt)
            out = E * s + (dt / 6.0) * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)
        else:
            f = op.full
            k1 = self._rate(f, s, t)
            s2 = s + 0.5 * dt * k1
            k2 = self._rate(f, s2, half)
            s3 = s + 0.5 * dt * k2
            k3 = self._rate(f, s3, half)
            s4 = s + dt * k3
            k4 = self._rate(f, s4, t + dt)
            out = s + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        D = op.dissipation
        dissipated = (dt / 6.0) * (D(s) + 2.0 * (D(s2) + D(s3)) + D(s4))
        out[0][self._compat] = 0.0
        return out, dissipated

    def cfl_dt(self, s: np.ndarray, cfl_limit: float, dt_max: float) -> float:
        m = self.p.m
        n = 2 * m + 1
        w = -antiderivative_z_coeffs(ddx(s[0]), EVEN)
        vals = synthesize_stack(np.stack([s[0], w]), [EVEN, ODD], n, n)
        h = 1.0 / n
        umax, wmax = np.abs(vals[0]).max(), np.abs(vals[1]).max()
        limit = math.inf
        if umax > 0:
            limit = min(limit, h / umax)
        if wmax > 0:
            limit = min(limit, h / wmax)
        return min(dt_max, cfl_limit * limit)


def _validated(state: State, p: Params, kind: SystemKind) -> State:
    if state.m != p.m:
        raise ShapeError(f"state truncation m={state.m} does not match params m={p.m}")
    state = _check_state(state, p)
    if kind is SystemKind.HYDROSTATIC_DAMPED and (state.v.norm() > 0 or state.T.norm() > 0):
        raise ParameterError("the hydrostatic-damped system carries u only; v and T must be zero")
    return state


def step(state: State, p: Params, kind: SystemKind, cfg: StepperConfig) -> State:
    """Advance ``state`` by one ``cfg.dt``.  Raises :class:`DivergenceError` on non-finite output."""
    state = _validated(state, p, kind)
    stepper = Stepper(p, kind, cfg.scheme)
    with np.errstate(over="ignore", invalid="ignore"):
        out, _ = stepper.advance(state.stack(), cfg.dt, state.t)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite coefficient after step from t={state.t}",
                              state=state, t=state.t)
    return State.from_stack(out, state.t + cfg.dt)


def _schedule(cfg: StepperConfig) -> tuple[int, float]:
    """Number of full steps and the size of a trailing partial step (0 if none)."""
    n = int(math.floor(cfg.t_end / cfg.dt * (1 + 1e-12)))
    rest = cfg.t_end - n * cfg.dt
    if rest <= 1e-12 * max(cfg.t_end, cfg.dt):
        rest = 0.0
    return n, rest


def run(
    state0: State,
    p: Params,
    kind: SystemKind,
    cfg: StepperConfig,
    *,
    callback: Optional[Callable[[Sample], None]] = None,
    forcing: Optional[Callable[[float], np.ndarray]] = None,
) -> Trajectory:
    """Integrate to ``cfg.t_end`` and sample every ``cfg.sample_every`` steps plus the end.

    A non-finite step ends the run early; the trajectory is then flagged
    ``diverged`` and ends with the last finite state.  ``forcing(t)`` adds a
    source term to every tendency; with a source the recorded dissipation
    integral no longer closes the energy budget.
    """
    state0 = _validated(state0, p, kind).at(0.0)
    stepper = Stepper(p, kind, cfg.scheme, forcing)
    op = stepper.op
    traj = Trajectory([], p, kind, cfg)

    def record(s: np.ndarray, t: float, dissipated: float):
        st = State.from_stack(s, t)
        sample = Sample(t, st if cfg.keep_states else None, energy_functionals(st),
                        op.energy(s), dissipated)
        traj.samples.append(sample)
        if callback is not None:
            callback(sample)

    s = state0.stack()
    integral = 0.0
    record(s, 0.0, 0.0)
    if cfg.t_end == 0:
        return traj

    n_full, rest = _schedule(cfg)
    adaptive = cfg.cfl_limit is not None
    t = 0.0
    k = 0
    while True:
        if adaptive:
            remaining = cfg.t_end - t
            if remaining <= 1e-12 * cfg.t_end:
                break
            h = min(stepper.cfl_dt(s, cfg.cfl_limit, cfg.dt), remaining)
            t_next = t + h if remaining - h > 1e-12 * cfg.t_end else cfg.t_end
        else:
            if k < n_full:
                h = cfg.dt
                t_next = (k + 1) * cfg.dt if (k + 1 < n_full or rest > 0) else cfg.t_end
            elif k == n_full and rest > 0:
                h = rest
                t_next = cfg.t_end
            else:
                break
        with np.errstate(over="ignore", invalid="ignore"):
            new, dd = stepper.advance(s, h, t)
        if not (np.all(np.isfinite(new)) and math.isfinite(dd)):
            traj.diverged = True
            traj.failure = f"non-finite coefficient in the step starting at t={t:.17g}"
            if traj.samples[-1].t != t:
                record(s, t, integral)
            break
        s, integral, t, k = new, integral + dd, t_next, k + 1
        final = t >= cfg.t_end
        if final or k % cfg.sample_every == 0:
            record(s, t, integral)
        if final:
            break
    return traj


def run_or_raise(state0: State, p: Params, kind: SystemKind, cfg: StepperConfig) -> Trajectory:
    """Like :func:`run` but turns a flagged divergence into :class:`DivergenceError`."""
    traj = run(state0, p, kind, cfg)
    if traj.diverged:
        last = traj.final
        raise DivergenceError(traj.failure or "run diverged", state=last.state, t=last.t)
    return traj
