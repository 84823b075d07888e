"""Right-hand sides of the damped primitive system and its Voigt variants.

Two forms are provided.  The ``rhs_*`` functions assemble the tendencies term
by term from the diagnostic reconstruction in :mod:`geoadjust.fields`; they are
the readable reference.  :class:`SplitOperator` evaluates the same tendencies
in batched form, split into a diagonal linear part (handled exactly by the
integrator) and an explicit remainder.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ParameterError, ShapeError
from .fields import (
    Params,
    State,
    _check_state,
    compute_px,
    compute_w,
)
from .spectral import (
    EVEN,
    ODD,
    SpectralField,
    analyze_stack,
    antiderivative_z_coeffs,
    ddx,
    ddz,
    differentiate,
    galerkin_product,
    padded_size,
    synthesize_stack,
    wavenumbers,
)


class SystemKind(enum.Enum):
    PRIMITIVE = "primitive"
    VOIGT = "voigt"
    HYDROSTATIC_DAMPED = "hydrostatic-damped"


@dataclass(frozen=True)
class Tendency:
    du: SpectralField
    dv: SpectralField
    dT: SpectralField

    def stack(self) -> np.ndarray:
        return np.stack([self.du.coeffs, self.dv.coeffs, self.dT.coeffs])


# ---------------------------------------------------------------------------
# Helmholtz operator I - alpha^2 d_zz


@functools.lru_cache(maxsize=None)
def _helmholtz_symbol(m: int, alpha: float) -> np.ndarray:
    _, kz = wavenumbers(m)
    h = 1.0 + alpha * alpha * kz * kz
    h.flags.writeable = False
    return h


def helmholtz_apply(f: SpectralField, alpha: float) -> SpectralField:
    return SpectralField(f.coeffs * _helmholtz_symbol(f.m, float(alpha)), f.parity)


def helmholtz_invert(f: SpectralField, alpha: float) -> SpectralField:
    """Solve ``(I - alpha^2 d_zz) g = f`` mode by mode."""
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0:
        return f
    return SpectralField(f.coeffs / _helmholtz_symbol(f.m, float(alpha)), f.parity)


# ---------------------------------------------------------------------------
# reference assembly


def _zero_compat_row(f: SpectralField) -> SpectralField:
    c = f.coeffs.copy()
    m = f.m
    c[:m, 0] = 0.0
    c[m + 1 :, 0] = 0.0
    return SpectralField(c, EVEN)


def _forces(state: State, p: Params, nu: float, project: bool):
    """Momentum forces F_u, F_v (before any Helmholtz inversion) and dT."""
    state = _check_state(state, p)
    u, v, T = state.u, state.v, state.T
    w = compute_w(u)
    px = compute_px(state, p)

    def advect(q: SpectralField, out) -> SpectralField:
        return (galerkin_product(u, differentiate(q, "x"), out)
                + galerkin_product(w, differentiate(q, "z"), out))

    Fu = (differentiate(differentiate(u, "z"), "z") * nu - advect(u, EVEN) - u * p.eps1
          + v * p.f0 - px)
    Fv = differentiate(differentiate(v, "z"), "z") * nu - advect(v, EVEN) - v * p.eps1 - u * p.f0
    TxTx = differentiate(differentiate(T, "x"), "x")
    TzTz = differentiate(differentiate(T, "z"), "z")
    dT = (TxTx + TzTz) * p.kappa - advect(T, ODD)
    if project:
        Fu = _zero_compat_row(Fu)
    return Fu, Fv, dT


def rhs_primitive(state: State, p: Params, *, project: bool = True) -> Tendency:
    return Tendency(*_forces(state, p, p.nu, project))


def rhs_voigt(state: State, p: Params, *, project: bool = True) -> Tendency:
    """Voigt-regularized momentum; temperature is left unregularized.

    Vertical viscosity is dropped unless ``p.voigt_viscous`` is set.
    """
    if p.alpha <= 0:
        raise ParameterError(f"the Voigt system needs alpha > 0, got {p.alpha}")
    nu = p.nu if p.voigt_viscous else 0.0
    Fu, Fv, dT = _forces(state, p, nu, project)
    return Tendency(helmholtz_invert(Fu, p.alpha), helmholtz_invert(Fv, p.alpha), dT)


def rhs_hydrostatic_damped(
    u: SpectralField, p: Params, alpha: float, *, project: bool = True
) -> SpectralField:
    """Tendency of u for the reduced system with ``f0 = 0`` and ``v = T = 0``."""
    if alpha < 0:
        raise ParameterError(f"alpha must be >= 0, got {alpha}")
    zero = State(u, SpectralField.zeros(u.m, EVEN), SpectralField.zeros(u.m, ODD))
    Fu, _, _ = _forces(zero, p.replace(f0=0.0), p.nu, project)
    return helmholtz_invert(Fu, alpha)


def rhs(state: State, p: Params, kind: SystemKind) -> Tendency:
    if kind is SystemKind.PRIMITIVE:
        return rhs_primitive(state, p)
    if kind is SystemKind.VOIGT:
        return rhs_voigt(state, p)
    if kind is SystemKind.HYDROSTATIC_DAMPED:
        du = rhs_hydrostatic_damped(state.u, p, p.alpha)
        return Tendency(du, SpectralField.zeros(state.m, EVEN), SpectralField.zeros(state.m, ODD))
    raise TypeError(f"unknown system kind {kind!r}")


# ---------------------------------------------------------------------------
# batched split form


def effective_coefficients(p: Params, kind: SystemKind) -> tuple[float, float, float]:
    """``(nu, alpha, f0)`` actually used by ``kind``."""
    if kind is SystemKind.PRIMITIVE:
        return p.nu, 0.0, p.f0
    if kind is SystemKind.VOIGT:
        if p.alpha <= 0:
            raise ParameterError(f"the Voigt system needs alpha > 0, got {p.alpha}")
        return (p.nu if p.voigt_viscous else 0.0), p.alpha, p.f0
    if kind is SystemKind.HYDROSTATIC_DAMPED:
        return p.nu, p.alpha, 0.0
    raise TypeError(f"unknown system kind {kind!r}")


_EVEN_ODD = {
    "full": [EVEN, EVEN, ODD, ODD, EVEN, ODD, ODD, EVEN],
    "momentum": [EVEN, EVEN, ODD, ODD],
}


class SplitOperator:
    """Tendency ``ds/dt = -lam * s + N(s)`` on stacked coefficients ``(3, 2m+1, m+1)``.

    ``lam`` collects viscosity, Rayleigh damping, the part of the hydrostatic
    damping that acts diagonally through p_x, and diffusion, all divided by the
    Helmholtz symbol for regularized momentum.  Everything else sits in ``N``.
    """

    def __init__(self, p: Params, kind: SystemKind):
        self.p = p
        self.kind = kind
        self.m = m = p.m
        self.nu, self.alpha, self.f0 = effective_coefficients(p, kind)
        self.momentum_only = kind is SystemKind.HYDROSTATIC_DAMPED
        kx, kz = wavenumbers(m)
        self.kx, self.kz = kx, kz
        self.h = _helmholtz_symbol(m, float(self.alpha))

        ratio2 = np.zeros((2 * m + 1, m + 1))
        ratio2[:, 1:] = (kx / kz[:, 1:]) ** 2
        self._ratio2 = ratio2
        lam = np.empty((3, 2 * m + 1, m + 1))
        lam[0] = (self.nu * kz**2 + p.eps1 + p.eps2 * ratio2) / self.h
        lam[1] = (self.nu * kz**2 + p.eps1) / self.h
        lam[2] = p.kappa * (kx**2 + kz**2)
        if self.momentum_only:
            lam[1:] = 0.0
        self.lam = lam

        self.n = padded_size(m)
        self._k1 = np.arange(-m, m + 1) % self.n
        self._compat = np.ones((2 * m + 1, m + 1), dtype=bool)
        self._compat[:, 0] = False
        self._compat[m, 0] = True

    # -- explicit part ---------------------------------------------------------

    def explicit(self, s: np.ndarray) -> np.ndarray:
        p, m, n = self.p, self.m, self.n
        u, v, T = s[0], s[1], s[2]
        ux = ddx(u)
        uz = ddz(u, EVEN)
        w = -antiderivative_z_coeffs(ux, EVEN)
        if self.momentum_only:
            phys = synthesize_stack(np.stack([u, ux, uz, w]), _EVEN_ODD["momentum"], n, n)
        else:
            vx, vz = ddx(v), ddz(v, EVEN)
            Tx, Tz = ddx(T), ddz(T, ODD)
            phys = synthesize_stack(
                np.stack([u, ux, uz, w, vx, vz, Tx, Tz]), _EVEN_ODD["full"], n, n
            )
        U, UX, UZ, W = phys[0], phys[1], phys[2], phys[3]
        uux = U * UX
        # z-mean row of P[2 u u_x]: average over z, then Fourier in x
        uux_row = scipy.fft.fft(uux.mean(axis=1), norm="forward")[self._k1]

        out = np.zeros_like(s)
        if self.momentum_only:
            adv = analyze_stack((uux + W * UZ)[None], [EVEN], m)
            Fu = -adv[0]
            Fu[:, 0] += 2.0 * uux_row
        else:
            VX, VZ, TX, TZ = phys[4], phys[5], phys[6], phys[7]
            adv = analyze_stack(
                np.stack([uux + W * UZ, U * VX + W * VZ, U * TX + W * TZ]), [EVEN, EVEN, ODD], m
            )
            # T-part of p_x without its z-mean, then the prescribed z-mean row
            px = -antiderivative_z_coeffs(Tx, ODD)
            px[:, 0] = p.f0 * v[:, 0] - 2.0 * uux_row
            px[m, 0] -= p.f0 * v[m, 0]
            Fu = -adv[0] + p.f0 * v - px
            out[1] = (-adv[1] - p.f0 * u) / self.h
            out[2] = -adv[2]
        Fu[~self._compat] = 0.0
        out[0] = Fu / self.h
        return out

    def full(self, s: np.ndarray) -> np.ndarray:
        return -self.lam * s + self.explicit(s)

    # -- quadratic functionals --------------------------------------------------

    @staticmethod
    def _sq(a: np.ndarray) -> float:
        return float(np.vdot(a, a).real)

    def energy(self, s: np.ndarray) -> float:
        """``|u|^2 + |v|^2 + |T|^2 + alpha^2 (|u_z|^2 + |v_z|^2)``."""
        weight = self.h
        return float(np.sum(weight * (np.abs(s[0]) ** 2 + np.abs(s[1]) ** 2))
                     + np.sum(np.abs(s[2]) ** 2))

    def dissipation(self, s: np.ndarray) -> float:
        """Rate D with ``dE/dt = -2 D`` for the energy above."""
        p = self.p
        u, v, T = s[0], s[1], s[2]
        kx2, kz2 = self.kx**2, self.kz**2
        w = -antiderivative_z_coeffs(ddx(u), EVEN)
        d = self.nu * float(np.sum(kz2 * (np.abs(u) ** 2 + np.abs(v) ** 2)))
        d += p.eps1 * (self._sq(u) + self._sq(v))
        d += p.eps2 * self._sq(w)
        d += p.kappa * float(np.sum((kx2 + kz2) * np.abs(T) ** 2))
        d += float(np.vdot(w, T).real)
        return d


def split_operator(p: Params, kind: SystemKind) -> SplitOperator:
    return SplitOperator(p, kind)


def check_state_for(state: State, p: Params) -> None:
    if state.m != p.m:
        raise ShapeError(f"state truncation m={state.m} does not match params m={p.m}")
