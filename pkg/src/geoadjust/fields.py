"""Prognostic state, physical parameters and the diagnostic fields w, p_x, p_z.

The vertical velocity and both pressure-gradient components are not evolved;
they are rebuilt from ``(u, v, T)`` whenever they are needed.  The barotropic
mean ``c`` of ``u`` is simply its (0, 0) coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import CompatibilityError, InputError, ParameterError, ShapeError
from .spectral import (
    EVEN,
    ODD,
    SpectralField,
    antiderivative_z,
    differentiate,
    galerkin_product,
    random_field,
    zmean,
)

# Defects of the compatibility row below this (relative to the field size) are
# treated as roundoff and projected away silently.
COMPATIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class Params:
    nu: float
    kappa: float
    eps1: float
    eps2: float
    f0: float = 0.0
    alpha: float = 0.0
    m: int = 16
    # Keep vertical viscosity in the Voigt system (off by default).
    voigt_viscous: bool = False

    def __post_init__(self):
        for name in ("nu", "kappa", "eps1", "eps2", "f0", "alpha"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ParameterError(f"{name} must be a finite real number, got {value!r}")
        if self.nu < 0:
            raise ParameterError(f"nu must be >= 0, got {self.nu}")
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be > 0, got {self.kappa}")
        if self.eps1 <= 0:
            raise ParameterError(f"eps1 must be > 0, got {self.eps1}")
        if self.eps2 <= 0:
            raise ParameterError(f"eps2 must be > 0 (hydrostatic damping), got {self.eps2}")
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if not isinstance(self.m, (int, np.integer)) or isinstance(self.m, bool) or self.m < 1:
            raise ParameterError(f"m must be an integer >= 1, got {self.m!r}")

    def replace(self, **changes) -> "Params":
        return replace(self, **changes)


@dataclass(frozen=True)
class State:
    u: SpectralField
    v: SpectralField
    T: SpectralField
    t: float = 0.0

    def __post_init__(self):
        if self.u.parity is not EVEN or self.v.parity is not EVEN:
            raise ShapeError("u and v must be even in z")
        if self.T.parity is not ODD:
            raise ShapeError("T must be odd in z")
        if not (self.u.m == self.v.m == self.T.m):
            raise ShapeError(
                f"fields have different truncations: {self.u.m}, {self.v.m}, {self.T.m}"
            )

    @property
    def m(self) -> int:
        return self.u.m

    @classmethod
    def zeros(cls, m: int, t: float = 0.0) -> "State":
        return cls(SpectralField.zeros(m, EVEN), SpectralField.zeros(m, EVEN),
                   SpectralField.zeros(m, ODD), t)

    def stack(self) -> np.ndarray:
        """Coefficients as one array of shape ``(3, 2m+1, m+1)``."""
        return np.stack([self.u.coeffs, self.v.coeffs, self.T.coeffs])

    @classmethod
    def from_stack(cls, coeffs: np.ndarray, t: float = 0.0) -> "State":
        return cls(SpectralField(coeffs[0], EVEN), SpectralField(coeffs[1], EVEN),
                   SpectralField(coeffs[2], ODD), float(t))

    def scaled(self, factor: float) -> "State":
        return State(self.u * factor, self.v * factor, self.T * factor, self.t)

    def at(self, t: float) -> "State":
        return replace(self, t=float(t))

    def symmetry_defect(self) -> float:
        return max(self.u.symmetry_defect(), self.v.symmetry_defect(), self.T.symmetry_defect())

    def compatibility_defect(self) -> float:
        return compatibility_defect(self.u)


@dataclass(frozen=True)
class Diagnostics:
    w: SpectralField
    px: SpectralField
    pz: SpectralField
    c: float
    d: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------


def _violating_row(coeffs: np.ndarray) -> np.ndarray:
    m = coeffs.shape[0] // 2
    row = coeffs[:, 0].copy()
    row[m] = 0.0
    return row


def compatibility_defect(u: SpectralField) -> float:
    """L2 norm of the (k1 != 0, k2 = 0) content of ``u``."""
    return float(np.linalg.norm(_violating_row(u.coeffs)))


def enforce_compatibility(u: SpectralField) -> tuple[SpectralField, float]:
    """Zero the (k1 != 0, k2 = 0) modes and return the removed L2 norm."""
    if u.parity is not EVEN:
        raise ShapeError("compatibility applies to the even horizontal velocity")
    residual = compatibility_defect(u)
    if residual == 0.0:
        return u, 0.0
    c = u.coeffs.copy()
    c[: u.m, 0] = 0.0
    c[u.m + 1 :, 0] = 0.0
    return SpectralField(c, EVEN), residual


def _require_compatible(u: SpectralField) -> SpectralField:
    """Project roundoff-level defects; reject genuine violations."""
    defect = compatibility_defect(u)
    if defect == 0.0:
        return u
    scale = max(1.0, float(np.abs(u.coeffs).max()))
    if defect > COMPATIBILITY_TOL * scale:
        raise CompatibilityError(
            f"u violates the compatibility condition (z-mean of u_x has norm {defect:.3e})"
        )
    return enforce_compatibility(u)[0]


def compute_w(u: SpectralField) -> SpectralField:
    """Vertical velocity ``w = -int_0^z u_x ds`` (odd in z)."""
    u = _require_compatible(u)
    return -antiderivative_z(differentiate(u, "x"))


def compute_pz(u: SpectralField, T: SpectralField, p: Params) -> SpectralField:
    return -T - compute_w(u) * p.eps2


def _check_state(state: State, p: Params | None = None) -> State:
    if p is not None and state.m != p.m:
        raise ShapeError(f"state truncation m={state.m} does not match params m={p.m}")
    u = _require_compatible(state.u)
    return state if u is state.u else replace(state, u=u)


def compute_px(state: State, p: Params) -> SpectralField:
    """Horizontal pressure gradient assembled from the vertical primitives.

    The x-dependent z-mean row is fixed by the depth-averaged momentum balance
    and the global mean removes the Coriolis forcing of the barotropic mode.
    """
    state = _check_state(state, p)
    u, v, T = state.u, state.v, state.T
    ux = differentiate(u, "x")
    uxx = differentiate(ux, "x")
    A = antiderivative_z(antiderivative_z(uxx)) * p.eps2 - antiderivative_z(differentiate(T, "x"))
    advective = galerkin_product(u * 2.0, ux, EVEN)
    out = A - zmean(A) + zmean(v * p.f0 - advective)
    c = out.coeffs.copy()
    c[state.m, 0] -= p.f0 * v.coeffs[state.m, 0].real
    return SpectralField(c, EVEN)


def barotropic_ode_rhs(state: State, p: Params) -> float:
    """Tendency of the barotropic mean: ``-eps1 c + f0 <v>``."""
    m = state.m
    return float(-p.eps1 * state.u.coeffs[m, 0].real + p.f0 * state.v.coeffs[m, 0].real)


def diagnostics(state: State, p: Params) -> Diagnostics:
    state = _check_state(state, p)
    m = state.m
    return Diagnostics(
        w=compute_w(state.u),
        px=compute_px(state, p),
        pz=compute_pz(state.u, state.T, p),
        c=float(state.u.coeffs[m, 0].real),
        d=state.v.coeffs[:, 0].copy(),
    )


# ---------------------------------------------------------------------------
# initial conditions


PRESETS = ("zero", "zonal", "taylor-like", "random-band")


def state_from_modes(m: int, modes: Mapping[str, Mapping[tuple[int, int], complex]]) -> State:
    """Build a state from explicit ``{field: {(k1, k2): coeff}}`` tables."""
    unknown = set(modes) - {"u", "v", "T"}
    if unknown:
        raise InputError(f"unknown field name(s): {sorted(unknown)}")
    u = SpectralField.from_modes(m, EVEN, modes.get("u", {}))
    v = SpectralField.from_modes(m, EVEN, modes.get("v", {}))
    T = SpectralField.from_modes(m, ODD, modes.get("T", {}))
    u = _require_compatible(u)
    return State(u, v, T)


def _normalized(f: SpectralField, target: float) -> SpectralField:
    n = f.norm()
    return f * (target / n) if n > 0 else f


def initial_state(
    preset: str,
    m: int,
    *,
    amplitude: float = 1.0,
    v_amplitude: float = 0.0,
    T_amplitude: float = 0.0,
    bandwidth: int = 1,
    slope: float = 1.5,
    seed: int = 0,
) -> State:
    """Named initial data.

    ``zonal``: ``u(z) = amplitude * sum_{k<=bandwidth} cos(2 pi k z) / k^2``; ``v`` has
    the same profile scaled by ``v_amplitude`` and ``T`` the sine profile scaled by
    ``T_amplitude``.
    ``taylor-like``: ``u = amplitude sin(2 pi x) cos(2 pi z)``, with
    ``v = v_amplitude cos(2 pi x) cos(2 pi z)`` and ``T = T_amplitude sin(2 pi x) sin(2 pi z)``.
    ``random-band``: seeded spectra decaying like ``(1+|k|^2)^-slope`` up to
    ``bandwidth``, each field rescaled to its requested L2 norm.
    """
    if preset == "zero":
        return State.zeros(m)
    if preset == "zonal":
        band = min(bandwidth, m)
        def profile(a):
            return {(0, k): a / (math.sqrt(2.0) * k * k) for k in range(1, band + 1)}

        return state_from_modes(m, {"u": profile(amplitude), "v": profile(v_amplitude),
                                    "T": profile(T_amplitude)})
    if preset == "taylor-like":
        s = 2.0 * math.sqrt(2.0)
        return state_from_modes(m, {
            "u": {(1, 1): -1j * amplitude / s},
            "v": {(1, 1): v_amplitude / s},
            "T": {(1, 1): -1j * T_amplitude / s},
        })
    if preset == "random-band":
        rng = np.random.default_rng(seed)
        kw = dict(slope=slope, bandwidth=bandwidth)
        u = enforce_compatibility(random_field(m, EVEN, rng, **kw))[0]
        v = random_field(m, EVEN, rng, **kw)
        T = random_field(m, ODD, rng, **kw)
        return State(_normalized(u, amplitude), _normalized(v, v_amplitude),
                     _normalized(T, T_amplitude))
    raise InputError(f"unknown initial-condition preset {preset!r}; choose from {PRESETS}")


def random_compatible_state(m: int, rng: np.random.Generator, *, slope: float = 1.5) -> State:
    """Random state used by property checks: all three fields populated."""
    u = enforce_compatibility(random_field(m, EVEN, rng, slope=slope))[0]
    return State(u, random_field(m, EVEN, rng, slope=slope), random_field(m, ODD, rng, slope=slope))


__all__ = [
    "COMPATIBILITY_TOL",
    "Diagnostics",
    "Params",
    "PRESETS",
    "State",
    "barotropic_ode_rhs",
    "compatibility_defect",
    "compute_px",
    "compute_pz",
    "compute_w",
    "diagnostics",
    "enforce_compatibility",
    "initial_state",
    "random_compatible_state",
    "state_from_modes",
]
