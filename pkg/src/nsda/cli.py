"""Command-line entry point.

Configuration files are flat ``key = value`` lines; ``#`` starts a comment.
Every key is listed in ``KEYS`` with its type and default. Exit codes: 0
success, 1 configuration error, 2 solver blow-up, 3 audit-gate failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    fit_decay_rate,
    read_series,
    rho_bounds,
    write_series,
    write_snapshot,
)
from .filter import (
    AssimilationConfig,
    AuditFailure,
    FilterSpec,
    audit_E,
    run_assimilation,
    spin_up,
    summarize_run,
)
from .observables import (
    ModalProjection,
    VolumeElements,
    estimate_c1,
    read_nodes,
    regular_lattice,
)
from .solver import (
    BlowUpError,
    ForcingSpec,
    SolverParams,
    State,
    default_forcing,
    enstrophy,
    step,
    step_count,
)
from .spectral import Grid, SpectralScalar, curl_inv, norm_alpha, random_scalar

log = logging.getLogger("nsda")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_AUDIT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


# key -> (parser, default, documentation)
KEYS = {
    "n": (int, 128, "grid points per axis (even, >= 4)"),
    "L": (float, 2 * np.pi, "domain period [length]"),
    "nu": (float, 0.025, "kinematic viscosity [length^2/time]"),
    "dt": (float, 0.01, "solver time step [time]"),
    "dealias": (str, "2/3", "dealias rule: 2/3 or none"),
    "forcing": (str, "kolmogorov", "none | lowmode | kolmogorov | modes"),
    "forcing_amplitude": (float, 1.0, "lowmode: vorticity amplitude; kolmogorov: velocity amplitude [length/time^2]"),
    "forcing_wavenumber": (int, 4, "kolmogorov: lattice wavenumber of sin(k x2)"),
    "forcing_modes": (str, "", "modes: 'n1 n2 re im omega; ...' vorticity coefficients"),
    "interpolant": (str, "modal", "modal | volume | voronoi"),
    "lambda_obs": (float, 0.0, "modal: observed band |k|^2 <= lambda_obs [1/length^2]; 0 means lambda"),
    "cells": (int, 16, "volume: cells per axis"),
    "nodes_per_axis": (int, 16, "voronoi: regular lattice size when nodes_file is empty"),
    "node_offset": (float, 0.0, "voronoi: lattice offset in units of the node spacing"),
    "nodes_file": (str, "", "voronoi: CSV of x,y node coordinates in [0,L)^2"),
    "lambda": (float, 36.0, "spectral filter cutoff |k|^2 <= lambda [1/length^2]"),
    "delta": (float, 0.5, "insertion interval [time]"),
    "horizon": (float, 12.0, "assimilation or truth run length [time]"),
    "spinup": (float, 50.0, "truth spin-up before t0 [time]"),
    "t0": (float, 0.0, "time label of the first observation [time]"),
    "seed": (int, 1, "seed for initial data and ensembles (u64)"),
    "init": (str, "random", "random | mode"),
    "init_slope": (float, -1.0, "random start: vorticity spectrum slope"),
    "init_cutoff": (float, 25.0, "random start: populated band |k|^2 <= cutoff"),
    "init_amplitude": (float, 10.0, "random start: |W|; mode start: coefficient modulus"),
    "init_mode": (_floats, (1.0, 1.0), "mode start: lattice wavenumber n1 n2"),
    "exact_start": (_bool, False, "start the assimilated run from the truth (fixed-point check)"),
    "audit_ensemble": (int, 64, "fields in the filter audit"),
    "c1_ensemble": (int, 64, "fields in the c1 estimate"),
    "snapshot_every": (float, 0.0, "truth: snapshot cadence [time]; 0 writes first and last only"),
    "sweep_deltas": (_floats, (1.0, 4.0, 16.0, 32.0), "sweep: insertion intervals [time]"),
    "fit_column": (str, "err_H1", "column reported by assimilate"),
    "fit_t_start": (float, 0.0, "fit window start [time]"),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    @property
    def grid(self) -> Grid:
        return Grid(self["n"], self["L"])

    def forcing(self) -> ForcingSpec:
        kind = self["forcing"]
        amp = self["forcing_amplitude"]
        if kind == "none":
            return ForcingSpec()
        if kind == "lowmode":
            return default_forcing(amp)
        if kind == "kolmogorov":
            # f = amp sin(k x2) e1, g = curl f = -amp k cos(k x2)
            k = self["forcing_wavenumber"]
            return ForcingSpec(((0, k, -0.5 * amp * k * (2 * np.pi / self["L"]), 0.0),))
        if kind == "modes":
            modes = []
            for chunk in self["forcing_modes"].split(";"):
                if chunk.strip():
                    n1, n2, re, im, *rest = chunk.split()
                    modes.append((int(n1), int(n2), complex(float(re), float(im)),
                                  float(rest[0]) if rest else 0.0))
            return ForcingSpec(tuple(modes))
        raise ConfigError(f"unknown forcing {kind!r}")

    def solver(self) -> SolverParams:
        return SolverParams(self["nu"], self.grid, self["dt"], self.forcing(), self["dealias"])

    def interpolant(self):
        kind = self["interpolant"]
        if kind == "modal":
            return ModalProjection(self["lambda_obs"] or self["lambda"])
        if kind == "volume":
            return VolumeElements(self["cells"], self["L"])
        if kind == "voronoi":
            if self["nodes_file"]:
                path = Path(self["nodes_file"])
                if not path.is_absolute() and self.source != "<defaults>":
                    path = Path(self.source).parent / path
                return read_nodes(path, self["L"])
            return regular_lattice(self["nodes_per_axis"], self["L"], self["node_offset"])
        raise ConfigError(f"unknown interpolant {kind!r}")

    def filter(self) -> FilterSpec:
        return FilterSpec(self["lambda"], self.interpolant())

    def assimilation(self, override_audit=False) -> AssimilationConfig:
        return AssimilationConfig(
            solver=self.solver(), filter=self.filter(), delta=self["delta"],
            horizon=self["horizon"], spinup=self["spinup"], t0=self["t0"], seed=self["seed"],
            init_slope=self["init_slope"], init_cutoff=self["init_cutoff"],
            init_amplitude=self["init_amplitude"], exact_start=self["exact_start"],
            override_audit=override_audit, audit_ensemble=self["audit_ensemble"],
            echo=self.echo())

    def echo(self) -> dict:
        return {k: _render(v) for k, v in self.values.items()}

    def with_seed(self, seed):
        if seed is None:
            return self
        return replace(self, values={**self.values, "seed": seed})

    def validate(self):
        """Cross-field checks from every module that consumes the config."""
        v = self.values
        try:
            grid = self.grid
            self.solver()
            self.filter().validate(grid)
            if v["interpolant"] == "volume" and grid.n % v["cells"]:
                raise ConfigError(f"n = {grid.n} not divisible by cells = {v['cells']}")
            if v["horizon"] < 0 or v["spinup"] < 0:
                raise ConfigError("horizon and spinup must be non-negative")
            step_count(0.0, v["delta"], v["dt"])
            step_count(0.0, v["horizon"], v["dt"])
            step_count(0.0, v["spinup"], v["dt"])
            if v["delta"] <= 0:
                raise ConfigError("delta must be positive")
            step_count(0.0, v["horizon"], v["delta"])
            for d in v["sweep_deltas"]:
                step_count(0.0, d, v["dt"])
            if v["snapshot_every"]:
                step_count(0.0, v["snapshot_every"], v["dt"])
            if v["init"] not in ("random", "mode"):
                raise ConfigError(f"unknown init {v['init']!r}")
            if v["seed"] < 0 or v["seed"] >= 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


def _render(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, tuple):
        return " ".join(_render(x) for x in value)
    return str(value)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    values = {k: d for k, (_, d, _) in KEYS.items()}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = KEYS[key][0](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return RunConfig(values, source).validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, str(path))


def initial_vorticity(cfg: RunConfig) -> SpectralScalar:
    g = cfg.grid
    if cfg["init"] == "mode":
        n1, n2 = (int(x) for x in cfg["init_mode"])
        c = np.zeros((g.n, g.n), dtype=complex)
        c[n1 % g.n, n2 % g.n] = cfg["init_amplitude"]
        c[-n1 % g.n, -n2 % g.n] = cfg["init_amplitude"]
        return SpectralScalar(g, c)
    return random_scalar(g, cfg["init_slope"], min(cfg["init_cutoff"], g.dealias_band),
                         cfg["seed"], amplitude=cfg["init_amplitude"])


TRUTH_COLUMNS = "t,norm_H,norm_V,norm_A,enstrophy"


def run_truth(cfg: RunConfig, out: Path | None = None):
    """Spin up, then integrate over the horizon recording |U|, ||U||, |AU|.

    Returns the recorded rows (after spin-up) and the final state.
    """
    params = cfg.solver()
    state = State(cfg["t0"] - cfg["spinup"], initial_vorticity(cfg))
    for _ in range(step_count(0.0, cfg["spinup"], params.dt)):
        state = step(state, params)
    state = State(cfg["t0"], state.omega)
    total = step_count(0.0, cfg["horizon"], params.dt)
    every = step_count(0.0, cfg["snapshot_every"], params.dt) if cfg["snapshot_every"] else 0

    def snap(i, st):
        if out is not None:
            write_snapshot(out / f"truth_{i:08d}.nsda", st.omega, st.t)

    def row(t, w):
        return (t, norm_alpha(curl_inv(w), 0), norm_alpha(w, 0), norm_alpha(w, 1), enstrophy(w))

    rows = [row(cfg["t0"], state.omega)]
    snap(0, state)
    for i in range(1, total + 1):
        state = step(state, params)
        t = cfg["t0"] + i * params.dt
        rows.append(row(t, state.omega))
        if (every and i % every == 0) or i == total:
            snap(i, state)
    return np.array(rows), state


def _write_truth_rows(path: Path, rows, cfg: RunConfig):
    with open(path, "w") as fh:
        for k, v in cfg.echo().items():
            fh.write(f"# {k} = {v}\n")
        fh.write(f"# code_version = {__version__}\n")
        fh.write(TRUTH_COLUMNS + "\n")
        for r in rows:
            fh.write(",".join(f"{x:.17g}" for x in r) + "\n")


def cmd_truth(cfg: RunConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    rows, state = run_truth(cfg, out)
    _write_truth_rows(out / "truth.csv", rows, cfg)
    print(f"t = {state.t:.6g}  enstrophy = {rows[-1][4]:.17g}  |U| = {rows[-1][1]:.6g}")
    return EXIT_OK


def _write_insertions(path: Path, series):
    with open(path, "w") as fh:
        fh.write("t,pre_L2,pre_H1,pre_H2,post_L2,post_H1,post_H2\n")
        for rec in series.insertions:
            fh.write(",".join(f"{x:.17g}" for x in (rec.t, *rec.pre, *rec.post)) + "\n")


def cmd_assimilate(cfg: RunConfig, out: Path, override_audit=False):
    out.mkdir(parents=True, exist_ok=True)
    acfg = cfg.assimilation(override_audit)
    audit = None
    if not override_audit:
        audit = audit_E(acfg.filter, acfg.audit_ensemble, acfg.seed, acfg.solver.grid,
                        c1_ensemble=cfg["c1_ensemble"])
        for line in audit.lines():
            print(line)
        if not audit.passed:
            print("audit failed; rerun with --override-audit to assimilate anyway", file=sys.stderr)
            return EXIT_AUDIT
    series = run_assimilation(acfg, audit=audit)
    write_series(series, out / "errors.csv")
    _write_insertions(out / "insertions.csv", series)
    write_snapshot(out / "final_truth.nsda", series.final_truth, series.t[-1])
    write_snapshot(out / "final_approx.nsda", series.final_approx, series.t[-1])
    e = series.column(cfg["fit_column"])
    print(f"{cfg['fit_column']}: initial {e[0]:.6e}  final {e[-1]:.6e}")
    if np.any(e > 0):
        alpha, r2 = fit_decay_rate(series, cfg["fit_column"], cfg["fit_t_start"])
        print(f"alpha = {alpha:.6g}  r2 = {r2:.6g}")
    return EXIT_OK


def cmd_verify_interpolant(cfg: RunConfig):
    spec = cfg.interpolant()
    est = estimate_c1(spec, cfg["c1_ensemble"], cfg["seed"], cfg.grid)
    print(f"{spec.describe()}  type {spec.type}  h = {spec.h:.17g}")
    print(f"c1_est = {est.c1:.17g}  ({len(est.ratios)} fields)")
    print(est.verdict)
    return EXIT_OK


def cmd_audit_filter(cfg: RunConfig):
    filt = cfg.filter()
    rep = audit_E(filt, cfg["audit_ensemble"], cfg["seed"], cfg.grid, c1_ensemble=cfg["c1_ensemble"])
    for line in rep.lines():
        print(line)
    print("verdict:", "pass" if rep.passed else "FAIL")
    return EXIT_OK


def cmd_rho(cfg: RunConfig, delta=None):
    g = cfg.grid
    f = cfg.forcing()
    F = f.F(g)
    d = cfg["delta"] if delta is None else delta
    b = rho_bounds(F, cfg["nu"], g.lambda1, d)
    print(f"F = {F:.17g}")
    print(f"G = {f.G(g):.17g}  (informational)")
    print(f"F_star <= {f.F_star(g):.17g}  (informational)")
    print(f"rho_H = {b.rho_H:.17g}")
    print(f"rho_V = {b.rho_V:.17g}")
    print(f"int_t^(t+{d:g}) |AU|^2 <= {b.integral_AU_bound:.17g}")
    return EXIT_OK


def cmd_fit(path, column, t_start):
    series = read_series(path)
    alpha, r2 = fit_decay_rate(series, column, t_start)
    print(f"alpha = {alpha:.17g}")
    print(f"r2 = {r2:.17g}")
    return EXIT_OK


def _sweep_one(args):
    cfg, delta, out = args
    acfg = replace(cfg.assimilation(override_audit=True), delta=delta)
    truth0 = spin_up(acfg)
    series = run_assimilation(acfg, truth0=truth0)
    sub = out / f"delta_{delta:g}"
    sub.mkdir(parents=True, exist_ok=True)
    write_series(series, sub / "errors.csv")
    return summarize_run(delta, series)


def cmd_sweep(cfg: RunConfig, out: Path, jobs=1):
    out.mkdir(parents=True, exist_ok=True)
    deltas = cfg["sweep_deltas"]
    horizon = cfg["horizon"]
    for d in deltas:
        step_count(0.0, horizon, d)
    tasks = [(cfg, d, out) for d in deltas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    with open(out / "sweep.txt", "w") as fh:
        for r in results:
            print(r.line())
            fh.write(r.line() + "\n")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="nsda", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, out=False):
        sp.add_argument("--config", required=True, help="flat key = value config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
        if out:
            sp.add_argument("--out", required=True, help="output directory")

    common(sub.add_parser("truth", help="spin up and run a truth trajectory"), out=True)
    a = sub.add_parser("assimilate", help="run the filtered insertion scheme")
    common(a, out=True)
    a.add_argument("--override-audit", action="store_true")
    common(sub.add_parser("verify-interpolant", help="estimate c1 for the interpolant"))
    common(sub.add_parser("audit-filter", help="check the E-bounds over an ensemble"))
    r = sub.add_parser("rho", help="absorbing-ball radii from the forcing")
    common(r)
    r.add_argument("--delta", type=float, default=None)
    f = sub.add_parser("fit", help="fit an exponential rate to an error series")
    f.add_argument("series")
    f.add_argument("--column", default="err_H1")
    f.add_argument("--t-start", type=float, default=0.0)
    s = sub.add_parser("sweep", help="insertion-interval sweep")
    common(s, out=True)
    s.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.cmd == "fit":
            return cmd_fit(args.series, args.column, args.t_start)
        cfg = load_config(args.config).with_seed(args.seed).validate()
        if args.cmd == "truth":
            return cmd_truth(cfg, Path(args.out))
        if args.cmd == "assimilate":
            return cmd_assimilate(cfg, Path(args.out), args.override_audit)
        if args.cmd == "verify-interpolant":
            return cmd_verify_interpolant(cfg)
        if args.cmd == "audit-filter":
            return cmd_audit_filter(cfg)
        if args.cmd == "rho":
            return cmd_rho(cfg, args.delta)
        if args.cmd == "sweep":
            return cmd_sweep(cfg, Path(args.out), args.jobs)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except AuditFailure as exc:
        print(f"audit failed:\n{exc}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
