"""Sobolev-type energy functionals of a state, evaluated by Parseval."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .fields import State, compute_w
from .spectral import wavenumbers


@dataclass(frozen=True)
class EnergyReport:
    """Y, F, G, K and the squared norms they are built from.

    ``Y`` includes the ``+1`` offset when ``offset`` is true.  ``K`` is the
    temperature dissipation sum; the small-data analysis reuses the letters
    differently, which :attr:`K_velocity` and :attr:`H_temperature` expose.
    """

    Y: float
    F: float
    G: float
    K: float
    offset: bool = False
    norms: Mapping[str, float] = field(default_factory=dict, repr=False)

    @property
    def Y_offset_free(self) -> float:
        return self.Y - 1.0 if self.offset else self.Y

    def with_offset(self, offset: bool) -> "EnergyReport":
        return replace(self, Y=self.Y_offset_free + (1.0 if offset else 0.0), offset=offset)

    @property
    def K_velocity(self) -> float:
        n = self.norms
        return (n["u"] + n["grad_u"] + n["v"] + n["grad_v"] + n["grad_ux"] + n["grad_vx"])

    @property
    def H_temperature(self) -> float:
        return self.K

    def normL2(self, name: str) -> float:
        return float(np.sqrt(self.norms[name]))


def _weighted(coeffs: np.ndarray, weight: np.ndarray) -> float:
    return float(np.sum(weight * (coeffs.real**2 + coeffs.imag**2)))


def energy_functionals(state: State, *, offset: bool = False) -> EnergyReport:
    kx, kz = wavenumbers(state.m)
    X, Z = kx**2, kz**2
    L = X + Z  # symbol of -Laplacian
    w = compute_w(state.u).coeffs
    n = {}
    for name, c in (("u", state.u.coeffs), ("v", state.v.coeffs)):
        n[name] = _weighted(c, np.ones_like(L))
        n[f"grad_{name}"] = _weighted(c, L)
        n[f"grad_{name}x"] = _weighted(c, X * L)
        n[f"{name}x"] = _weighted(c, X)
        n[f"{name}xx"] = _weighted(c, X * X)
        n[f"{name}z"] = _weighted(c, Z)
        n[f"grad_{name}z"] = _weighted(c, Z * L)
        n[f"grad_{name}xz"] = _weighted(c, X * Z * L)
    T = state.T.coeffs
    n["T"] = _weighted(T, np.ones_like(L))
    n["grad_T"] = _weighted(T, L)
    n["grad_Tx"] = _weighted(T, X * L)
    n["lap_T"] = _weighted(T, L * L)
    n["lap_Tx"] = _weighted(T, X * L * L)
    n["w"] = _weighted(w, np.ones_like(L))
    n["wx"] = _weighted(w, X)
    n["grad_w"] = _weighted(w, L)
    n["grad_wx"] = _weighted(w, X * L)

    Y = (n["u"] + n["grad_u"] + n["v"] + n["grad_v"] + n["grad_ux"] + n["grad_vx"]
         + n["T"] + n["grad_T"] + n["grad_Tx"])
    F = (n["uz"] + n["vz"] + n["grad_uz"] + n["grad_vz"] + n["grad_uxz"] + n["grad_vxz"])
    G = n["w"] + n["grad_w"] + n["grad_wx"]
    K = n["grad_T"] + n["lap_T"] + n["lap_Tx"]
    return EnergyReport(Y + (1.0 if offset else 0.0), F, G, K, offset, n)


def y_weights(m: int) -> np.ndarray:
    """Per-mode weights ``W`` with ``Y(offset-free) = sum W |s|^2`` on stacked coefficients."""
    kx, kz = wavenumbers(m)
    L = kx**2 + kz**2
    one = 1.0 + L + kx**2 * L
    return np.stack([one, one, one])
