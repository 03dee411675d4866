"""Vorticity-form integrator for the forced 2D Navier-Stokes equations.

    dW/dt - nu Lap W + (U.grad) W = g,    U = curl^-1 W

Diffusion is treated by Crank-Nicolson and advection explicitly with a Heun
predictor-corrector, so each step is second order and self-starting. A
self-starting step keeps the solution operator an exact semigroup over step
boundaries, which the assimilation loop relies on when it restarts after an
insertion.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .spectral import (
    Grid,
    SpectralScalar,
    SpectralVelocity,
    curl,
    curl_inv,
    norm_alpha,
)

log = logging.getLogger(__name__)


class BlowUpError(RuntimeError):
    """Non-finite coefficients appeared during time stepping."""

    def __init__(self, t):
        super().__init__(f"non-finite vorticity coefficients at t = {t:.17g}")
        self.t = t


@dataclass(frozen=True)
class ForcingSpec:
    """Vorticity forcing g = curl f as a list of lattice modes.

    ``modes`` holds ``(n1, n2, amplitude, omega)`` tuples: ``amplitude`` is
    the complex coefficient of exp(i k.x) at k = (2 pi / L)(n1, n2) and the
    mode is multiplied by cos(omega t). Conjugate partners are added when
    missing; a partner that is present must match.
    """

    modes: tuple = ()

    def __post_init__(self):
        table = {}
        for m in self.modes:
            n1, n2, amp = int(m[0]), int(m[1]), complex(m[2])
            omega = float(m[3]) if len(m) > 3 else 0.0
            if (n1, n2) == (0, 0):
                raise ValueError("forcing cannot act on the mean mode")
            table[(n1, n2)] = (amp, omega)
        for (n1, n2), (amp, omega) in list(table.items()):
            partner = table.get((-n1, -n2))
            if partner is None:
                table[(-n1, -n2)] = (amp.conjugate(), omega)
            elif abs(partner[0] - amp.conjugate()) > 1e-14 * max(1.0, abs(amp)) or partner[1] != omega:
                raise ValueError(f"forcing mode ({n1}, {n2}) lacks a Hermitian partner")
        closed = tuple(sorted((k[0], k[1], a, w) for k, (a, w) in table.items()))
        object.__setattr__(self, "modes", closed)

    @property
    def is_constant(self) -> bool:
        return all(m[3] == 0.0 for m in self.modes)

    def vorticity(self, grid: Grid, t: float = 0.0) -> SpectralScalar:
        out = np.zeros((grid.n, grid.n), dtype=complex)
        for n1, n2, amp, omega in self.modes:
            if max(abs(n1), abs(n2)) >= grid.n // 2:
                raise ValueError(f"forcing mode ({n1}, {n2}) not resolved on n = {grid.n}")
            out[n1 % grid.n, n2 % grid.n] += amp * (np.cos(omega * t) if omega else 1.0)
        return SpectralScalar(grid, out)

    def velocity(self, grid: Grid, t: float = 0.0) -> SpectralVelocity:
        """The body force f = curl^-1 g."""
        return curl_inv(self.vorticity(grid, t))

    def F(self, grid: Grid) -> float:
        """ess sup_t |f(t)|^2; every cosine factor equals 1 at t = 0."""
        return norm_alpha(self.velocity(grid, 0.0), 0) ** 2

    def G(self, grid: Grid) -> float:
        """ess sup_t ||f(t)||^2, equal to |g(0)|^2."""
        return norm_alpha(self.vorticity(grid, 0.0), 0) ** 2

    def F_star(self, grid: Grid) -> float:
        """Upper bound on ess sup_t ||df/dt||_{-1}^2 (sharp for one frequency)."""
        total = 0.0
        for n1, n2, amp, omega in self.modes:
            k2 = grid.lambda1 * (n1 * n1 + n2 * n2)
            total += omega ** 2 * abs(amp) ** 2 / k2 ** 2
        return grid.L ** 2 * total


def default_forcing(amplitude: float = 1.0) -> ForcingSpec:
    """Steady low-mode forcing on the shells |k|^2 = lambda1 and 2 lambda1.

    The vorticity forcing is ``amplitude * (cos x2 + sin(x1 + x2))`` in
    lattice units, so both shells carry comparable weight and the force is
    not a single Laplacian eigenfunction.
    """
    a = 0.5 * amplitude
    return ForcingSpec(((0, 1, a, 0.0), (1, 1, -0.5j * amplitude, 0.0)))


@dataclass(frozen=True)
class SolverParams:
    nu: float
    grid: Grid
    dt: float
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    dealias: str = "2/3"

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.dealias not in ("2/3", "none"):
            raise ValueError(f"unknown dealias rule {self.dealias!r}")
        top = self.grid.dealias_band if self.dealias == "2/3" else float(self.grid.k2.max())
        stiff = self.dt * self.nu * top
        if stiff > 2.0:
            warnings.warn(f"dt*nu*|k|^2 over the evolved band = {stiff:.3g} exceeds 2; high modes under-resolved in time",
                          stacklevel=2)


@dataclass(frozen=True, eq=False)
class State:
    t: float
    omega: SpectralScalar


class _Operators:
    """Per-(grid, nu, dt) arrays on the half spectrum used by rfft2."""

    _cache: dict = {}

    def __init__(self, grid, nu, dt, dealias):
        g = grid
        n = g.n
        h = n // 2 + 1
        self.n = n
        self.h = h
        half = 0.5 * dt * nu * g.k2[:, :h]
        self.explicit = 1.0 - half
        self.implicit_inv = 1.0 / (1.0 + half)
        mask = g.dealias if dealias == "2/3" else g.resolved
        self.mask = mask[:, :h]
        self.resolved = g.resolved[:, :h]
        k1, k2 = g.k
        self.ik1 = 1j * k1[:, :h]
        self.ik2 = 1j * k2[:, :h]
        inv = 1.0 / g.k2_safe[:, :h]
        inv[0, 0] = 0.0
        self.inv_k2 = inv
        self.neg_rows = (-np.arange(n)) % n

    @classmethod
    def get(cls, grid, nu, dt, dealias="2/3"):
        key = (grid, nu, dt, dealias)
        ops = cls._cache.get(key)
        if ops is None:
            if len(cls._cache) > 32:
                cls._cache.clear()
            ops = cls._cache[key] = cls(*key)
        return ops

    def expand(self, half: np.ndarray) -> np.ndarray:
        """Rebuild the full Hermitian DFT array from its rfft2 half."""
        n, h = self.n, self.h
        full = np.empty((n, n), dtype=complex)
        col0 = half[:, 0]
        full[:, 0] = 0.5 * (col0 + np.conj(col0[self.neg_rows]))
        full[:, 1:h] = half[:, 1:h]
        full[:, h:] = np.conj(half[self.neg_rows, 1:h - 1][:, ::-1])
        return full


def _nonlinear(wh: np.ndarray, ops: _Operators) -> np.ndarray:
    # each irfft2 operand is short by n^2, rfft2 of the product by 1/n^2
    n = ops.n
    psi = wh * ops.inv_k2
    stack = np.stack([ops.ik2 * psi, -ops.ik1 * psi, ops.ik1 * wh, ops.ik2 * wh])
    phys = np.fft.irfft2(stack, s=(n, n), axes=(-2, -1))
    prod = phys[0] * phys[2] + phys[1] * phys[3]
    return np.fft.rfft2(prod) * float(n * n) * ops.mask


def nonlinear_term(omega: SpectralScalar, dealias: str = "2/3") -> SpectralScalar:
    """Dealiased coefficients of (U.grad)W with U = curl^-1 W."""
    ops = _Operators.get(omega.grid, 0.0, 0.0, dealias)
    return SpectralScalar(omega.grid, ops.expand(_nonlinear(omega.coeffs[:, :ops.h], ops)))


def step(state: State, params: SolverParams) -> State:
    """Advance one CN/Heun step of length params.dt."""
    g = params.grid
    ops = _Operators.get(g, params.nu, params.dt, params.dealias)
    dt = params.dt
    w = state.omega.coeffs[:, :ops.h]
    t0 = state.t
    t1 = t0 + dt
    forcing = params.forcing
    if forcing.modes:
        f0 = forcing.vorticity(g, t0).coeffs[:, :ops.h]
        f1 = f0 if forcing.is_constant else forcing.vorticity(g, t1).coeffs[:, :ops.h]
    else:
        f0 = f1 = 0.0
    lin = ops.explicit * w
    with np.errstate(over="ignore", invalid="ignore"):
        n0 = _nonlinear(w, ops)
        pred = (lin + dt * (f0 - n0)) * ops.implicit_inv
        n1 = _nonlinear(pred, ops)
        new = (lin + dt * (0.5 * (f0 + f1) - 0.5 * (n0 + n1))) * ops.implicit_inv
    new[~ops.resolved] = 0.0
    if not np.isfinite(new).all():
        raise BlowUpError(t1)
    return State(t1, SpectralScalar(g, ops.expand(new)))


def step_count(t0: float, t1: float, dt: float) -> int:
    """Number of steps spanning [t0, t1]; the span must be a step multiple."""
    if t1 < t0:
        raise ValueError(f"t1 = {t1} precedes t0 = {t0}")
    ratio = (t1 - t0) / dt
    m = int(round(ratio))
    if abs(ratio - m) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(f"(t1 - t0)/dt = {ratio!r} is not an integer")
    return m


def integrate(state: State, nsteps: int, params: SolverParams, callback=None) -> State:
    """Take ``nsteps`` steps; ``callback(state)`` sees every new state."""
    for _ in range(nsteps):
        state = step(state, params)
        if callback is not None:
            callback(state)
    return state


def semi_process(u0: SpectralVelocity, t0: float, t1: float, params: SolverParams) -> SpectralVelocity:
    """S(t1, t0; u0) through the vorticity integrator."""
    m = step_count(t0, t1, params.dt)
    if m == 0:
        return u0
    state = State(t0, curl(u0))
    state = integrate(state, m, params)
    return curl_inv(state.omega)


def semi_process_vorticity(omega0: SpectralScalar, t0: float, t1: float, params: SolverParams) -> SpectralScalar:
    m = step_count(t0, t1, params.dt)
    return integrate(State(t0, omega0), m, params).omega


def energy(omega: SpectralScalar) -> float:
    """|U|^2 / 2 for U = curl^-1 omega."""
    return 0.5 * norm_alpha(curl_inv(omega), 0) ** 2


def enstrophy(omega: SpectralScalar) -> float:
    """|omega|^2 / 2, which equals ||U||^2 / 2."""
    return 0.5 * norm_alpha(omega, 0) ** 2


def with_dt(params: SolverParams, dt: float) -> SolverParams:
    return replace(params, dt=dt)
