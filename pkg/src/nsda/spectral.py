"""Fourier-space fields on the periodic square [0, L)^2.

Coefficients are amplitudes of exp(i k.x): a physical mode ``a cos(k.x)``
analyses to ``a/2`` at both ``k`` and ``-k``. Arrays use the standard DFT
index order, axis 0 along x1 and axis 1 along x2. Scalars have shape
``(n, n)``, velocities ``(2, n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    """Raised when a field does not match its grid."""


@dataclass(frozen=True)
class Grid:
    """Uniform n x n collocation grid on a periodic box of side L."""

    n: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise GridError(f"n must be an even integer >= 4, got {self.n}")
        if not self.L > 0:
            raise GridError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def lambda1(self) -> float:
        """Smallest Stokes eigenvalue (2 pi / L)^2."""
        return (2 * np.pi / self.L) ** 2

    @property
    def dx(self) -> float:
        return self.L / self.n

    @cached_property
    def index(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer lattice indices (n1, n2) of every DFT slot."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.meshgrid(m, m, indexing="ij")

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = self.index
        scale = 2 * np.pi / self.L
        return scale * n1, scale * n2

    @cached_property
    def k2(self) -> np.ndarray:
        k1, k2 = self.k
        return k1 * k1 + k2 * k2

    @cached_property
    def k2_safe(self) -> np.ndarray:
        """|k|^2 with the zero mode replaced by 1, for division."""
        out = self.k2.copy()
        out[0, 0] = 1.0
        return out

    @cached_property
    def nyquist(self) -> np.ndarray:
        """Mask of slots on the Nyquist row or column."""
        n1, n2 = self.index
        h = self.n // 2
        return (np.abs(n1) == h) | (np.abs(n2) == h)

    @cached_property
    def resolved(self) -> np.ndarray:
        """Mask of representable modes: not Nyquist and not the mean."""
        mask = ~self.nyquist
        mask[0, 0] = False
        return mask

    @cached_property
    def dealias(self) -> np.ndarray:
        """2/3-rule mask: keep |n_i| < n/3 on both axes."""
        n1, n2 = self.index
        cut = self.n / 3.0
        return (np.abs(n1) < cut) & (np.abs(n2) < cut) & self.resolved

    @property
    def band_max(self) -> float:
        """Largest |k|^2 guaranteed to lie fully inside the resolved square."""
        return (2 * np.pi / self.L * (self.n // 2 - 1)) ** 2

    @property
    def dealias_band(self) -> float:
        """Largest |k|^2 whose full disc fits inside the 2/3-rule square."""
        cut = int(np.ceil(self.n / 3.0)) - 1
        return (2 * np.pi / self.L * cut) ** 2

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, indexing="ij")


@dataclass(frozen=True, eq=False)
class _Spectral:
    grid: Grid
    coeffs: np.ndarray

    ncomp = 1

    def __post_init__(self):
        shape = _shape(self.grid, self.ncomp)
        if self.coeffs.shape != shape:
            raise GridError(f"expected coefficient shape {shape}, got {self.coeffs.shape}")

    def _new(self, coeffs):
        return type(self)(self.grid, coeffs)

    def __add__(self, other):
        _check_same(self, other)
        return self._new(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return self._new(self.coeffs - other.coeffs)

    def __neg__(self):
        return self._new(-self.coeffs)

    def __mul__(self, a):
        return self._new(a * self.coeffs)

    __rmul__ = __mul__

    def copy(self):
        return self._new(self.coeffs.copy())

    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid, np.zeros(_shape(grid, cls.ncomp), dtype=complex))


class SpectralScalar(_Spectral):
    """Mean-zero scalar field (vorticity) as DFT-ordered coefficients."""

    ncomp = 1


class SpectralVelocity(_Spectral):
    """Divergence-free, mean-zero velocity as DFT-ordered coefficients."""

    ncomp = 2


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real grid samples, shape (n, n) for scalars or (2, n, n) for vectors."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        n = self.grid.n
        if v.shape not in ((n, n), (2, n, n)):
            raise GridError(f"expected ({n}, {n}) or (2, {n}, {n}) samples, got {v.shape}")

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 3


def _shape(grid, ncomp):
    return (grid.n, grid.n) if ncomp == 1 else (ncomp, grid.n, grid.n)


def _check_same(a, b):
    if type(a) is not type(b) or a.grid != b.grid:
        raise GridError("fields live on different grids or have different kinds")


def transform_forward(field: PhysicalField, kind=None):
    """Analyse grid samples into Fourier coefficients.

    Vector samples become a ``SpectralVelocity`` unless ``kind`` says
    otherwise. No projection is applied: a non-solenoidal vector field keeps
    its gradient part and the mean slot keeps the spatial mean.
    """
    n = field.grid.n
    coeffs = np.fft.fft2(field.values, axes=(-2, -1)) / (n * n)
    if kind is None:
        kind = SpectralVelocity if field.is_vector else SpectralScalar
    return kind(field.grid, coeffs)


def transform_backward(field) -> PhysicalField:
    """Synthesize real grid samples from coefficients."""
    n = field.grid.n
    values = np.fft.ifft2(field.coeffs, axes=(-2, -1)) * (n * n)
    return PhysicalField(field.grid, values.real.copy())


def imag_residue(field) -> float:
    """Largest imaginary part of the synthesized samples (reality check)."""
    n = field.grid.n
    return float(np.max(np.abs(np.fft.ifft2(field.coeffs, axes=(-2, -1)).imag)) * n * n)


def hermitian_part(coeffs: np.ndarray) -> np.ndarray:
    """Symmetrize so that c[-k] = conj(c[k])."""
    flipped = np.roll(np.flip(coeffs, axis=(-2, -1)), 1, axis=(-2, -1))
    return 0.5 * (coeffs + np.conj(flipped))


def leray_project(field) -> SpectralVelocity:
    """Remove the gradient part of a 2-vector field, mode by mode.

    Uses U_k <- U_k - (k.U_k) k / |k|^2 and zeroes the mean and Nyquist
    slots.
    """
    g = field.grid
    k1, k2 = g.k
    u = field.coeffs
    div = (k1 * u[0] + k2 * u[1]) / g.k2_safe
    out = np.empty_like(u)
    out[0] = u[0] - div * k1
    out[1] = u[1] - div * k2
    out[:, ~g.resolved] = 0.0
    return SpectralVelocity(g, out)


def divergence_defect(u: SpectralVelocity) -> float:
    """max_k |k.U_k| / |k| over resolved modes."""
    g = u.grid
    k1, k2 = g.k
    d = np.abs(k1 * u.coeffs[0] + k2 * u.coeffs[1]) / np.sqrt(g.k2_safe)
    return float(d.max())


def _mode_power(field) -> np.ndarray:
    c = field.coeffs
    p = np.abs(c) ** 2
    return p.sum(axis=0) if c.ndim == 3 else p


def norm_alpha(field, alpha: float) -> float:
    """||U||_alpha with ||U||_alpha^2 = L^2 sum_{k != 0} |k|^(2 alpha) |U_k|^2.

    alpha = 0, 1, 2 give |U|, ||U|| and |AU|.
    """
    g = field.grid
    p = _mode_power(field)
    w = p if alpha == 0 else g.k2_safe ** alpha * p
    w[0, 0] = 0.0
    return float(g.L * np.sqrt(w.sum()))


def inner(a, b) -> float:
    """L^2 pairing of two real fields via their coefficients."""
    _check_same(a, b)
    s = np.vdot(b.coeffs, a.coeffs).real
    return float(a.grid.L ** 2 * s)


def project_low(field, lam: float):
    """P_lambda: keep modes with |k|^2 <= lambda (inclusive)."""
    keep = field.grid.k2 <= lam
    return field._new(np.where(keep, field.coeffs, 0.0))


def project_high(field, lam: float):
    """Q_lambda = I - P_lambda."""
    keep = field.grid.k2 > lam
    return field._new(np.where(keep, field.coeffs, 0.0))


def curl(u: SpectralVelocity) -> SpectralScalar:
    """Scalar curl d u2/dx1 - d u1/dx2 in Fourier space."""
    k1, k2 = u.grid.k
    return SpectralScalar(u.grid, 1j * (k1 * u.coeffs[1] - k2 * u.coeffs[0]))


def curl_inv(xi: SpectralScalar) -> SpectralVelocity:
    """Mean-zero divergence-free velocity whose curl is xi."""
    g = xi.grid
    k1, k2 = g.k
    c = 1j * xi.coeffs / g.k2_safe
    out = np.stack([k2 * c, -k1 * c])
    out[:, 0, 0] = 0.0
    return SpectralVelocity(g, out)


def streamfunction_velocity(psi: SpectralScalar) -> SpectralVelocity:
    """Velocity (d psi/dx2, -d psi/dx1); curl of it is -Laplacian psi."""
    k1, k2 = psi.grid.k
    return SpectralVelocity(psi.grid, np.stack([1j * k2 * psi.coeffs, -1j * k1 * psi.coeffs]))


def random_field(grid: Grid, spectrum_slope: float, cutoff: float, seed: int,
                 amplitude: float = 1.0, low: float = 0.0) -> SpectralVelocity:
    """Seeded random solenoidal field with |U_k| proportional to |k|^slope.

    Modes with ``low < |k|^2 <= cutoff`` are populated. Phases come from
    numpy's PCG64 bit generator drawn as uniform doubles, which is a stable
    cross-platform stream. The field is scaled so that |U| = ``amplitude``.
    """
    if cutoff > grid.band_max + 1e-12:
        raise GridError(f"cutoff {cutoff} exceeds resolved band {grid.band_max}")
    rng = np.random.Generator(np.random.PCG64(int(seed) & (2**64 - 1)))
    phase = rng.random((grid.n, grid.n))
    z = np.exp(2j * np.pi * phase)
    z = hermitian_part(z)
    mag = np.abs(z)
    z = np.divide(z, mag, out=np.zeros_like(z), where=mag > 1e-300)
    k2 = grid.k2
    band = (k2 <= cutoff) & (k2 > low) & grid.resolved
    s = np.where(band, grid.k2_safe ** (0.5 * spectrum_slope) * z, 0.0)
    k1, kk2 = grid.k
    root = np.sqrt(grid.k2_safe)
    u = np.stack([1j * kk2 / root * s, -1j * k1 / root * s])
    field = SpectralVelocity(grid, u)
    nrm = norm_alpha(field, 0)
    if nrm == 0.0:
        return field
    return field * (amplitude / nrm)


def random_scalar(grid: Grid, spectrum_slope: float, cutoff: float, seed: int,
                  amplitude: float = 1.0) -> SpectralScalar:
    """Curl of a random velocity, rescaled so |xi| = amplitude."""
    xi = curl(random_field(grid, spectrum_slope + 1.0, cutoff, seed))
    nrm = norm_alpha(xi, 0)
    return xi * (amplitude / nrm) if nrm else xi


def agmon_ratio(field) -> float:
    """max |U(x)| / (|U|^1/2 |AU|^1/2) on the grid samples.

    The maximum over many fields is an empirical lower bound on the best
    constant in the Agmon inequality; it is not a value for that constant.
    """
    vals = transform_backward(field).values
    mag = np.sqrt((vals * vals).sum(axis=0)) if vals.ndim == 3 else np.abs(vals)
    denom = np.sqrt(norm_alpha(field, 0) * norm_alpha(field, 2))
    return float(mag.max() / denom) if denom > 0 else 0.0
