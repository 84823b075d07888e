"""Truncated Fourier representation on the unit torus with z-symmetric bases.

A field of even parity expands in

    phi_k = sqrt(2) exp(2 pi i k1 x) cos(2 pi k2 z),   phi_{k1,0} = exp(2 pi i k1 x)

and a field of odd parity in

    psi_k = sqrt(2) exp(2 pi i k1 x) sin(2 pi k2 z),   k2 >= 1.

Both families are orthonormal in L2(T^2), so the coefficient vector is an
isometric image of the field.  Coefficients are stored on the half-plane
``k2 >= 0`` as an array of shape ``(2m+1, m+1)`` indexed ``[k1 + m, k2]``;
real-valuedness is the conjugate symmetry ``a[-k1, k2] = conj(a[k1, k2])``.

Quadratic products are projected exactly: both factors are synthesized on a
grid with at least ``3m+1`` points per direction, multiplied pointwise and
analyzed back.  On such a grid no product mode of degree ``<= 2m`` aliases onto
a retained mode, so the result is the exact L2-orthogonal projection.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.fft

from .errors import InputError, NonPeriodicPrimitiveError, ResolutionError, ShapeError

TWO_PI = 2.0 * np.pi
_SQRT2 = np.sqrt(2.0)


class Parity(enum.Enum):
    EVEN = "even"
    ODD = "odd"

    def flipped(self) -> "Parity":
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN


EVEN = Parity.EVEN
ODD = Parity.ODD


@dataclass(frozen=True)
class WaveIndex:
    k1: int
    k2: int

    def valid_for(self, m: int, parity: Parity) -> bool:
        lower = 1 if parity is Parity.ODD else 0
        return abs(self.k1) <= m and lower <= self.k2 <= m


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable coefficient array of a real field on E_m or O_m."""

    coeffs: np.ndarray
    parity: Parity

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.ndim != 2 or c.shape[0] != 2 * c.shape[1] - 1 or c.shape[1] < 1:
            raise ShapeError(f"coefficient array must have shape (2m+1, m+1), got {c.shape}")
        if not isinstance(self.parity, Parity):
            raise ShapeError(f"parity must be a Parity, got {self.parity!r}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def m(self) -> int:
        return self.coeffs.shape[1] - 1

    @classmethod
    def zeros(cls, m: int, parity: Parity) -> "SpectralField":
        return cls(np.zeros((2 * m + 1, m + 1), dtype=np.complex128), parity)

    @classmethod
    def from_modes(
        cls, m: int, parity: Parity, modes: Mapping[tuple[int, int], complex]
    ) -> "SpectralField":
        """Build a field from ``{(k1, k2): a}``; the mirror mode ``-k1`` is filled in."""
        c = np.zeros((2 * m + 1, m + 1), dtype=np.complex128)
        for (k1, k2), value in modes.items():
            if not WaveIndex(k1, k2).valid_for(m, parity):
                raise ShapeError(f"mode ({k1}, {k2}) outside truncation m={m} for {parity.value}")
            if k1 == 0 and np.imag(value) != 0:
                raise InputError(f"mode (0, {k2}) of a real field must be real")
            c[k1 + m, k2] = value
            c[-k1 + m, k2] = np.conj(value)
        return cls(c, parity)

    def coeff(self, k1: int, k2: int) -> complex:
        return complex(self.coeffs[k1 + self.m, k2])

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(coeffs, self.parity)

    def _check_compatible(self, other: "SpectralField") -> None:
        if other.m != self.m:
            raise ShapeError(f"truncation mismatch: {self.m} vs {other.m}")
        if other.parity is not self.parity:
            raise ShapeError(f"parity mismatch: {self.parity.value} vs {other.parity.value}")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.coeffs + other.coeffs, self.parity)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.coeffs - other.coeffs, self.parity)

    def __neg__(self) -> "SpectralField":
        return SpectralField(-self.coeffs, self.parity)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.coeffs * scalar, self.parity)

    __rmul__ = __mul__

    def inner(self, other: "SpectralField") -> float:
        """L2 inner product; fields of opposite parity are orthogonal."""
        if other.m != self.m:
            raise ShapeError(f"truncation mismatch: {self.m} vs {other.m}")
        if other.parity is not self.parity:
            return 0.0
        return float(np.vdot(other.coeffs, self.coeffs).real)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def symmetry_defect(self) -> float:
        """Largest violation of conjugate symmetry (and of the empty odd k2=0 row)."""
        return symmetry_defect(self.coeffs, self.parity)


def symmetry_defect(coeffs: np.ndarray, parity: Parity) -> float:
    d = np.abs(coeffs - np.conj(coeffs[::-1, :]))
    defect = float(d.max()) if d.size else 0.0
    if parity is Parity.ODD:
        defect = max(defect, float(np.abs(coeffs[:, 0]).max()))
    return defect


def symmetrize(coeffs: np.ndarray, parity: Parity) -> np.ndarray:
    """Nearest conjugate-symmetric coefficient array."""
    c = 0.5 * (coeffs + np.conj(coeffs[::-1, :]))
    if parity is Parity.ODD:
        c[:, 0] = 0.0
    return c


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def padded_size(m: int) -> int:
    """Smallest FFT-friendly grid size giving exact quadratic projection."""
    return scipy.fft.next_fast_len(3 * m + 1)


def grid_coordinates(nx: int, nz: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform grid on [0,1)^2, ``X[i, j] = i/nx`` and ``Z[i, j] = j/nz``."""
    x = np.arange(nx) / nx
    z = np.arange(nz) / nz
    return np.meshgrid(x, z, indexing="ij")


@functools.lru_cache(maxsize=None)
def _k1_index(m: int, n: int) -> np.ndarray:
    return np.arange(-m, m + 1) % n


@functools.lru_cache(maxsize=None)
def _synthesis_weights(m: int) -> np.ndarray:
    w = np.empty((2, m + 1), dtype=np.complex128)
    w[0, 0] = 1.0
    w[0, 1:] = 1.0 / _SQRT2
    w[1, 0] = 0.0
    w[1, 1:] = -1j / _SQRT2
    return w


def _parity_rows(parities: Sequence[Parity]) -> np.ndarray:
    return np.array([0 if p is Parity.EVEN else 1 for p in parities])


def synthesize_stack(
    coeffs: np.ndarray, parities: Sequence[Parity], nx: int, nz: int
) -> np.ndarray:
    """Point values of a stack of fields, shape ``(nf, nx, nz)``."""
    nf, rows, cols = coeffs.shape
    m = cols - 1
    if nx < 2 * m + 1 or nz < 2 * m + 1:
        raise ResolutionError(f"grid {nx}x{nz} cannot represent truncation m={m}")
    spec = np.zeros((nf, nx, nz // 2 + 1), dtype=np.complex128)
    weights = _synthesis_weights(m)[_parity_rows(parities)]
    spec[:, _k1_index(m, nx), : m + 1] = coeffs * weights[:, None, :]
    return scipy.fft.irfft2(spec, s=(nx, nz), norm="forward", axes=(-2, -1))


def analyze_stack(values: np.ndarray, parities: Sequence[Parity], m: int) -> np.ndarray:
    """Projection of a stack of sampled fields onto E_m / O_m, shape ``(nf, 2m+1, m+1)``."""
    nf, nx, nz = values.shape
    if nx < 2 * m + 1 or nz < 2 * m + 1:
        raise ResolutionError(f"grid {nx}x{nz} cannot resolve truncation m={m}")
    spec = scipy.fft.rfft2(values, norm="forward", axes=(-2, -1))
    fp = spec[:, _k1_index(m, nx), : m + 1]
    fr = np.conj(fp[:, ::-1, :])
    out = np.empty_like(fp)
    rows = _parity_rows(parities)
    even = rows == 0
    if even.any():
        s = fp[even] + fr[even]
        s[:, :, 0] *= 0.5
        s[:, :, 1:] /= _SQRT2
        out[even] = s
    if (~even).any():
        d = 1j * (fp[~even] - fr[~even]) / _SQRT2
        d[:, :, 0] = 0.0
        out[~even] = d
    return out


def analyze(samples: np.ndarray, parity: Parity, m: int) -> SpectralField:
    """L2-orthogonal projection of grid samples onto E_m (even) or O_m (odd)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise InputError("samples must be a 2-D array indexed [x, z]")
    if not np.all(np.isfinite(samples)):
        raise InputError("non-finite sample value")
    return SpectralField(analyze_stack(samples[None], [parity], m)[0], parity)


def synthesize(field: SpectralField, nx: int, nz: int) -> np.ndarray:
    """Real point values of ``field`` on the uniform ``nx`` by ``nz`` grid."""
    if not np.all(np.isfinite(field.coeffs)):
        raise InputError("non-finite coefficient")
    return synthesize_stack(field.coeffs[None], [field.parity], nx, nz)[0]


# ---------------------------------------------------------------------------
# calculus
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def wavenumbers(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Angular wavenumbers ``(2 pi k1, 2 pi k2)`` broadcastable to the coefficient shape."""
    kx = TWO_PI * np.arange(-m, m + 1, dtype=np.float64)[:, None]
    kz = TWO_PI * np.arange(0, m + 1, dtype=np.float64)[None, :]
    kx.flags.writeable = False
    kz.flags.writeable = False
    return kx, kz


def ddx(coeffs: np.ndarray) -> np.ndarray:
    kx, _ = wavenumbers(coeffs.shape[-1] - 1)
    return 1j * kx * coeffs


def ddz(coeffs: np.ndarray, parity: Parity) -> np.ndarray:
    """z-derivative on raw coefficients; the output has the flipped parity."""
    _, kz = wavenumbers(coeffs.shape[-1] - 1)
    sign = -1.0 if parity is Parity.EVEN else 1.0
    out = sign * kz * coeffs
    out[..., 0] = 0.0
    return out


def zmean_defect(coeffs: np.ndarray) -> float:
    return float(np.abs(coeffs[..., 0]).max())


def antiderivative_z_coeffs(coeffs: np.ndarray, parity: Parity) -> np.ndarray:
    """Raw-coefficient form of :func:`antiderivative_z` (no periodicity check)."""
    _, kz = wavenumbers(coeffs.shape[-1] - 1)
    out = np.zeros_like(coeffs)
    inv = 1.0 / kz[..., 1:]
    if parity is Parity.EVEN:
        out[..., 1:] = coeffs[..., 1:] * inv
    else:
        out[..., 1:] = -coeffs[..., 1:] * inv
        out[..., 0] = _SQRT2 * np.sum(coeffs[..., 1:] * inv, axis=-1)
    return out


def differentiate(field: SpectralField, axis: str) -> SpectralField:
    if axis == "x":
        return SpectralField(ddx(field.coeffs), field.parity)
    if axis == "z":
        return SpectralField(ddz(field.coeffs, field.parity), field.parity.flipped())
    raise ValueError(f"axis must be 'x' or 'z', got {axis!r}")


def antiderivative_z(field: SpectralField, tol: float = 1e-12) -> SpectralField:
    """``F(x, z) = int_0^z f(x, s) ds`` as a field of the opposite parity.

    An even field must have a vanishing k2=0 row, otherwise the primitive
    grows linearly in z and is not periodic.
    """
    if field.parity is Parity.EVEN:
        scale = max(1.0, float(np.abs(field.coeffs).max()))
        if zmean_defect(field.coeffs) > tol * scale:
            raise NonPeriodicPrimitiveError(
                "even field has a nonzero z-mean; its vertical primitive is not periodic"
            )
    return SpectralField(
        antiderivative_z_coeffs(field.coeffs, field.parity), field.parity.flipped()
    )


def zmean(field: SpectralField) -> SpectralField:
    """Vertical average as an even field (only the k2=0 row survives)."""
    c = np.zeros_like(field.coeffs)
    if field.parity is Parity.EVEN:
        c[:, 0] = field.coeffs[:, 0]
    return SpectralField(c, Parity.EVEN)


def galerkin_product(f: SpectralField, g: SpectralField, out_parity: Parity) -> SpectralField:
    """Exact projection of the pointwise product ``f*g`` onto E_m or O_m."""
    if f.m != g.m:
        raise ShapeError(f"truncation mismatch: {f.m} vs {g.m}")
    n = padded_size(f.m)
    vals = synthesize_stack(np.stack([f.coeffs, g.coeffs]), [f.parity, g.parity], n, n)
    prod = (vals[0] * vals[1])[None]
    return SpectralField(analyze_stack(prod, [out_parity], f.m)[0], out_parity)


def sobolev_seminorms(
    field: SpectralField, orders: Iterable[tuple[int, int]]
) -> dict[tuple[int, int], float]:
    """``{(a, b): ||d_x^a d_z^b f||_L2}`` by Parseval."""
    kx, kz = wavenumbers(field.m)
    power = np.abs(field.coeffs) ** 2
    out = {}
    for a, b in orders:
        weight = kx ** (2 * a) * kz ** (2 * b)
        out[(a, b)] = float(np.sqrt(np.sum(power * weight)))
    return out


def random_field(
    m: int,
    parity: Parity,
    rng: np.random.Generator,
    *,
    slope: float = 1.5,
    bandwidth: int | None = None,
) -> SpectralField:
    """Seeded random real field with algebraic spectral decay ``(1+|k|^2)^-slope``."""
    band = m if bandwidth is None else min(bandwidth, m)
    c = rng.standard_normal((2 * m + 1, m + 1)) + 1j * rng.standard_normal((2 * m + 1, m + 1))
    k1 = np.arange(-m, m + 1)[:, None]
    k2 = np.arange(0, m + 1)[None, :]
    c *= (1.0 + k1**2 + k2**2) ** (-slope)
    c[(np.abs(k1) > band) | (k2 > band)] = 0.0
    return SpectralField(symmetrize(c, parity), parity)
