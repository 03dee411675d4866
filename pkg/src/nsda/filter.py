"""Spectral filter J = P_lam P_sigma I_h, its complement E, and the
discrete-in-time insertion loop built on them.

At each observation time t_n = t0 + n delta the forecast u is replaced by

    u_{n+1} = E S(t_{n+1}, t_n; u_n) + J U(t_{n+1}),

evaluated as ``S + J(U - S)`` so that an exact forecast is left bitwise
untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from . import __version__
from .diagnostics import ErrorSeries, fit_decay_rate
from .observables import (
    ModalProjection,
    apply_interpolant,
    ensemble,
    estimate_c1,
)
from .solver import SolverParams, State, step, step_count, enstrophy, energy
from .spectral import (
    Grid,
    SpectralScalar,
    SpectralVelocity,
    curl,
    curl_inv,
    leray_project,
    norm_alpha,
    project_low,
    random_scalar,
    transform_forward,
)

log = logging.getLogger(__name__)


class AuditFailure(RuntimeError):
    """The filter audit failed and no override was given."""


@dataclass(frozen=True)
class FilterSpec:
    lam: float
    interpolant: object

    def validate(self, grid: Grid):
        if self.lam < grid.lambda1 * (1 - 1e-12):
            raise ValueError(f"lambda = {self.lam} is below lambda1 = {grid.lambda1}")
        if self.lam > grid.dealias_band * (1 + 1e-12):
            raise ValueError(f"lambda = {self.lam} exceeds the dealiased band {grid.dealias_band}")


def apply_J(filt: FilterSpec, U: SpectralVelocity) -> SpectralVelocity:
    """P_lam P_sigma I_h U; supported on |k|^2 <= lam."""
    obs = transform_forward(apply_interpolant(filt.interpolant, U))
    return project_low(leray_project(obs), filt.lam)


def apply_E(filt: FilterSpec, U: SpectralVelocity) -> SpectralVelocity:
    return U - apply_J(filt, U)


def epsilon_type1(c1: float, lam: float, h: float) -> float:
    return c1 * lam * h * h


def epsilon_type2(c1: float, lam: float, h: float, lambda1: float) -> float:
    return c1 / lambda1 * lam * lam * h * h * (1.0 + lambda1 * h * h)


def epsilon(filt: FilterSpec, c1: float, grid: Grid) -> float:
    h = filt.interpolant.h
    if filt.interpolant.type == "I":
        return epsilon_type1(c1, filt.lam, h)
    return epsilon_type2(c1, filt.lam, h, grid.lambda1)


# name -> (norm index of EU, norm index of U, coefficient of (1 + eps) as a function of (lam, lambda1))
BOUNDS = {
    "I": {
        "|EU|^2 <= (1+eps)||U||^2/lam": (0, 1, lambda lam, l1: 1.0 / lam),
        "||EU||^2 <= (1+eps)||U||^2": (1, 1, lambda lam, l1: 1.0),
    },
    "II": {
        "|EU|^2 <= (1+eps)|AU|^2/(lam lambda1)": (0, 2, lambda lam, l1: 1.0 / (lam * l1)),
        "||EU||^2 <= (1+eps)|AU|^2/lambda1": (1, 2, lambda lam, l1: 1.0 / l1),
        "|AEU|^2 <= (1+eps)|AU|^2": (2, 2, lambda lam, l1: 1.0),
    },
}


@dataclass
class AuditReport:
    type: str
    c1: float
    eps: float
    lam: float
    h: float
    worst: dict
    ensemble_size: int

    @property
    def passed(self) -> bool:
        return all(r <= 1.0 + self.eps for r in self.worst.values())

    def lines(self):
        yield (f"type-{self.type}  lam={self.lam:.6g}  h={self.h:.6g}  c1={self.c1:.6g}  "
               f"eps={self.eps:.6g}  members={self.ensemble_size}")
        for name, r in self.worst.items():
            mark = "pass" if r <= 1.0 + self.eps else "FAIL"
            yield f"  {mark}  {name}: worst ratio {r:.6g} vs 1+eps = {1 + self.eps:.6g}"


def audit_E(filt: FilterSpec, ensemble_size: int, seed: int, grid: Grid,
            c1: float | None = None, c1_ensemble: int = 64) -> AuditReport:
    """Evaluate every E-bound of the interpolant's type over a random ensemble.

    The ratio reported for each bound is ``lhs / (coef * rhs)``; the bound
    holds when it is at most 1 + eps. When ``c1`` is not given it is
    estimated first with an independent seed stream.
    """
    spec = filt.interpolant
    if c1 is None:
        c1 = estimate_c1(spec, c1_ensemble, seed + 7919, grid).c1
    eps = epsilon(filt, c1, grid)
    bounds = BOUNDS[spec.type]
    worst = dict.fromkeys(bounds, 0.0)
    for U in ensemble(grid, ensemble_size, seed):
        EU = apply_E(filt, U)
        e = [norm_alpha(EU, a) ** 2 for a in range(3)]
        u = [norm_alpha(U, a) ** 2 for a in range(3)]
        for name, (ie, iu, coef) in bounds.items():
            rhs = coef(filt.lam, grid.lambda1) * u[iu]
            if rhs > 0:
                worst[name] = max(worst[name], e[ie] / rhs)
    return AuditReport(spec.type, float(c1), eps, filt.lam, spec.h, worst, ensemble_size)


def assimilation_step(filt: FilterSpec, u_n: SpectralVelocity, truth_next: SpectralVelocity,
                      solver: SolverParams, t_n: float, t_next: float) -> SpectralVelocity:
    """E S(t_next, t_n; u_n) + J U(t_next) in velocity form."""
    m = step_count(t_n, t_next, solver.dt)
    st = State(t_n, curl(u_n))
    for _ in range(m):
        st = step(st, solver)
    forecast = curl_inv(st.omega)
    return forecast + apply_J(filt, truth_next - forecast)


def insert(filt: FilterSpec, forecast: SpectralScalar, truth: SpectralScalar) -> SpectralScalar:
    """Vorticity form of the insertion: w + curl J curl^-1 (W - w)."""
    xi = truth - forecast
    return forecast + curl(apply_J(filt, curl_inv(xi)))


@dataclass(frozen=True)
class AssimilationConfig:
    solver: SolverParams
    filter: FilterSpec
    delta: float
    horizon: float
    spinup: float = 0.0
    t0: float = 0.0
    seed: int = 0
    init_slope: float = -1.0
    init_cutoff: float = 25.0
    init_amplitude: float = 10.0
    exact_start: bool = False
    override_audit: bool = False
    audit_ensemble: int = 64
    c1: float | None = None
    echo: dict = field(default_factory=dict, compare=False)

    def validate(self):
        g = self.solver.grid
        self.filter.validate(g)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        per = step_count(0.0, self.delta, self.solver.dt)
        if per < 1:
            raise ValueError("delta must span at least one solver step")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        step_count(0.0, self.horizon, self.delta)
        if self.spinup < 0:
            raise ValueError("spinup must be non-negative")
        step_count(0.0, self.spinup, self.solver.dt)


@dataclass
class InsertionRecord:
    t: float
    pre: tuple
    post: tuple

    @property
    def contracted(self) -> bool:
        return self.post[0] < self.pre[0] or self.pre[0] == 0.0


def spin_up(cfg: AssimilationConfig) -> State:
    """Truth state at t0 after integrating a seeded random start for ``spinup``."""
    g = cfg.solver.grid
    w = random_scalar(g, cfg.init_slope, min(cfg.init_cutoff, g.dealias_band), cfg.seed,
                      amplitude=cfg.init_amplitude)
    st = State(cfg.t0 - cfg.spinup, w)
    for _ in range(step_count(0.0, cfg.spinup, cfg.solver.dt)):
        st = step(st, cfg.solver)
    return State(cfg.t0, st.omega)


def _norms(xi: SpectralScalar):
    return (norm_alpha(curl_inv(xi), 0), norm_alpha(xi, 0), norm_alpha(xi, 1))


def run_assimilation(cfg: AssimilationConfig, audit: AuditReport | None = None,
                     truth0: State | None = None) -> ErrorSeries:
    """Spin up the truth, then run truth and assimilated trajectories in lockstep.

    Errors are recorded after every solver step; at insertion times the row
    holds the post-insertion state and ``series.insertions`` keeps both
    sides.
    """
    cfg.validate()
    g = cfg.solver.grid
    if audit is None and not cfg.override_audit:
        audit = audit_E(cfg.filter, cfg.audit_ensemble, cfg.seed, g, c1=cfg.c1)
    if audit is not None and not audit.passed and not cfg.override_audit:
        raise AuditFailure("\n".join(audit.lines()))

    truth = spin_up(cfg) if truth0 is None else truth0
    W = truth.omega
    w = W.copy() if cfg.exact_start else curl(apply_J(cfg.filter, curl_inv(W)))
    per = step_count(0.0, cfg.delta, cfg.solver.dt)
    total = step_count(0.0, cfg.horizon, cfg.solver.dt)

    rows = []
    insertions = []

    def record(t, W, w):
        xi = W - w
        rows.append((t, *_norms(xi), energy(W), enstrophy(W)))

    t = cfg.t0
    record(t, W, w)
    ts = State(t, W)
    us = State(t, w)
    for i in range(1, total + 1):
        ts = step(ts, cfg.solver)
        us = step(us, cfg.solver)
        t = cfg.t0 + i * cfg.solver.dt
        if i % per == 0:
            pre = _norms(ts.omega - us.omega)
            new = insert(cfg.filter, us.omega, ts.omega)
            us = State(us.t, new)
            post = _norms(ts.omega - new)
            insertions.append(InsertionRecord(t, pre, post))
        record(t, ts.omega, us.omega)

    meta = dict(cfg.echo)
    meta.update(code_version=__version__, seed=cfg.seed, lambda1=g.lambda1,
                interpolant=cfg.filter.interpolant.describe(), h=cfg.filter.interpolant.h)
    if audit is not None:
        meta.update(audit_c1=audit.c1, audit_eps=audit.eps, audit_passed=audit.passed)
    series = ErrorSeries.from_rows(rows, meta)
    series.insertions = insertions
    series.final_truth = ts.omega
    series.final_approx = us.omega
    return series


def orthogonal_filter(lam: float) -> FilterSpec:
    """I_h = P_lam, the orthogonal-projection special case."""
    return FilterSpec(lam, ModalProjection(lam))


@dataclass
class SweepResult:
    delta: float
    alpha: float
    r_squared: float
    cycle_factor: float
    initial: float
    final: float

    @property
    def contracting(self) -> bool:
        return self.cycle_factor < 1.0

    def line(self) -> str:
        verdict = "contraction" if self.contracting else "NO contraction"
        return (f"delta={self.delta:<8.4g} |v| {self.initial:.3e} -> {self.final:.3e}  "
                f"cycle factor {self.cycle_factor:.4f}  alpha {self.alpha:+.4f} (r2 {self.r_squared:.3f})  "
                f"{verdict}")


def summarize_run(delta: float, series: ErrorSeries) -> SweepResult:
    """Per-cycle geometric-mean error factor and fitted rate for one run."""
    e = series.column("err_L2")
    cycles = max(len(series.insertions), 1)
    first, last = e[0], e[-1]
    if first == 0.0:
        factor = 0.0
    else:
        factor = (max(last, 1e-300) / first) ** (1.0 / cycles)
    try:
        alpha, r2 = fit_decay_rate(series, "err_L2", series.t[0])
    except ValueError:
        alpha, r2 = float("nan"), float("nan")
    return SweepResult(delta, alpha, r2, factor, first, last)


def delta_sweep(base: AssimilationConfig, deltas, truth0: State | None = None):
    """Run the same truth and filter at several insertion intervals."""
    if truth0 is None:
        truth0 = spin_up(base)
    out = []
    for d in deltas:
        cfg = replace(base, delta=float(d))
        out.append(summarize_run(float(d), run_assimilation(cfg, truth0=truth0)))
    return out
