"""Interpolant observables I_h and empirical estimates of their constant c1.

Three families are provided:

* ``ModalProjection``: the low Fourier modes |k|^2 <= lambda_obs (type I,
  h = lambda_obs^-1/2).
* ``VolumeElements``: averages over an m x m array of square cells
  (type I, h = cell diagonal).
* ``NodalVoronoi``: point values spread over periodic Voronoi cells with the
  cell-mean correction (type II, h = covering radius of the nodes).

Observation images are returned as grid samples (``PhysicalField``). The
nodal image is discontinuous, so its grid sampling aliases; the spectral
filter downstream removes the spill-over.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .spectral import (
    Grid,
    PhysicalField,
    SpectralVelocity,
    norm_alpha,
    project_low,
    random_field,
    transform_backward,
)


class ObservableError(ValueError):
    pass


@dataclass(frozen=True)
class ModalProjection:
    lam_obs: float

    type = "I"

    def __post_init__(self):
        if not self.lam_obs > 0:
            raise ObservableError("lam_obs must be positive")

    @property
    def h(self) -> float:
        return self.lam_obs ** -0.5

    def describe(self) -> str:
        return f"modal(lam_obs={self.lam_obs:.17g})"


@dataclass(frozen=True)
class VolumeElements:
    m: int
    L: float = 2 * np.pi

    type = "I"

    def __post_init__(self):
        if self.m < 1:
            raise ObservableError("need at least one cell per axis")

    @property
    def h(self) -> float:
        return self.L * np.sqrt(2.0) / self.m

    def describe(self) -> str:
        return f"volume(m={self.m})"


@dataclass(frozen=True, eq=False)
class NodalVoronoi:
    """Point observations at ``points`` (shape (d, 2)) in [0, L)^2."""

    points: np.ndarray
    L: float = 2 * np.pi
    _labels: dict = field(default_factory=dict, repr=False, compare=False)

    type = "II"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise ObservableError("empty node set")
        if np.any(pts < 0) or np.any(pts >= self.L):
            raise ObservableError(f"nodes must lie in [0, {self.L})^2")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @cached_property
    def h(self) -> float:
        return covering_radius(self.points, self.L)

    def labels(self, grid: Grid) -> np.ndarray:
        lab = self._labels.get(grid)
        if lab is None:
            if abs(grid.L - self.L) > 1e-12 * self.L:
                raise ObservableError("node set and grid disagree on L")
            lab = self._labels[grid] = voronoi_partition(self.points, grid)
        return lab

    def describe(self) -> str:
        return f"voronoi(d={len(self.points)})"


def regular_lattice(m: int, L: float = 2 * np.pi, offset: float = 0.0) -> NodalVoronoi:
    """m x m nodes at ((i + offset) L/m, (j + offset) L/m)."""
    s = (np.arange(m) + offset) * (L / m)
    X, Y = np.meshgrid(s, s, indexing="ij")
    return NodalVoronoi(np.column_stack([X.ravel(), Y.ravel()]), L)


def read_nodes(path, L: float = 2 * np.pi) -> NodalVoronoi:
    """Nodes from a CSV of ``x, y`` rows; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                x, y = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ObservableError(f"{path}: malformed node row {i + 1}: {row!r}")
            rows.append((x, y))
    return NodalVoronoi(np.array(rows), L)


def _periodic_sq_dist(a: np.ndarray, b: np.ndarray, L: float) -> np.ndarray:
    d = np.abs(a[:, None, :] - b[None, :, :])
    d = np.minimum(d, L - d)
    return (d * d).sum(axis=-1)


def voronoi_partition(points, grid: Grid) -> np.ndarray:
    """Label each grid sample by its nearest node in the periodic metric.

    Ties go to the lowest node index (argmin keeps the first minimum).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ObservableError("empty node set")
    X, Y = grid.coords
    samples = np.column_stack([X.ravel(), Y.ravel()])
    labels = np.empty(len(samples), dtype=np.int64)
    chunk = max(1, 2_000_000 // len(pts))
    for s in range(0, len(samples), chunk):
        d2 = _periodic_sq_dist(samples[s:s + chunk], pts, grid.L)
        labels[s:s + chunk] = np.argmin(d2, axis=1)
    return labels.reshape(grid.n, grid.n)


def covering_radius(points, L: float) -> float:
    """sup over the torus of the distance to the nearest node.

    The supremum sits at a vertex of the periodic Voronoi diagram, found from
    the diagram of the 3 x 3 periodic tiling of the nodes.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    shifts = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)], dtype=float) * L
    tiled = (pts[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
    candidates = [pts]
    if len(tiled) >= 4:
        try:
            vor = Voronoi(tiled, qhull_options="Qbb Qc Qz")
            candidates.append(vor.vertices)
        except Exception:  # qhull rejects fully degenerate inputs
            pass
    cand = np.vstack(candidates)
    cand = cand[np.all((cand >= 0) & (cand <= L), axis=1)]
    tree = cKDTree(np.mod(pts, L), boxsize=L)
    dist, _ = tree.query(np.mod(cand, L))
    r = float(dist.max()) if len(dist) else 0.0
    if len(pts) == 1:
        # single node: farthest point is the antipode
        r = max(r, L * np.sqrt(0.5))
    return r


def point_values(U: SpectralVelocity, points) -> np.ndarray:
    """U at arbitrary points, shape (d, 2).

    Nodes on grid points are read from the synthesized samples; other nodes
    use direct Fourier summation.
    """
    g = U.grid
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    idx = pts / g.dx
    ridx = np.rint(idx)
    on_grid = np.all(np.abs(idx - ridx) < 1e-9, axis=1)
    out = np.empty((len(pts), 2))
    if on_grid.any():
        vals = transform_backward(U).values
        ii = ridx[on_grid].astype(int) % g.n
        out[on_grid] = vals[:, ii[:, 0], ii[:, 1]].T
    off = ~on_grid
    if off.any():
        k = 2 * np.pi / g.L * np.fft.fftfreq(g.n, d=1.0 / g.n)
        e1 = np.exp(1j * np.outer(pts[off, 0], k))
        e2 = np.exp(1j * np.outer(pts[off, 1], k))
        for c in range(2):
            out[off, c] = np.einsum("ja,ab,jb->j", e1, U.coeffs[c], e2).real
    return out


def apply_interpolant(spec, U: SpectralVelocity) -> PhysicalField:
    """Grid samples of I_h U; every image has zero spatial mean."""
    g = U.grid
    if isinstance(spec, ModalProjection):
        return transform_backward(project_low(U, spec.lam_obs))
    if isinstance(spec, VolumeElements):
        m = spec.m
        if g.n % m:
            raise ObservableError(f"n = {g.n} is not divisible by m = {m}")
        b = g.n // m
        vals = transform_backward(U).values
        cells = vals.reshape(2, m, b, m, b).mean(axis=(2, 4))
        cells -= cells.mean(axis=(1, 2), keepdims=True)
        return PhysicalField(g, np.repeat(np.repeat(cells, b, axis=1), b, axis=2))
    if isinstance(spec, NodalVoronoi):
        labels = spec.labels(g)
        nodal = point_values(U, spec.points)
        weights = np.bincount(labels.ravel(), minlength=len(nodal)) / labels.size
        out = nodal[labels].transpose(2, 0, 1) - (weights @ nodal)[:, None, None]
        return PhysicalField(g, out)
    raise ObservableError(f"unknown interpolant {spec!r}")


def interpolation_error_sq(spec, U: SpectralVelocity) -> float:
    """||U - I_h U||_{L^2}^2 from grid samples."""
    diff = transform_backward(U).values - apply_interpolant(spec, U).values
    return float(U.grid.L ** 2 * np.mean((diff * diff).sum(axis=0)))


def type_ratio(spec, U: SpectralVelocity, err_sq: float | None = None) -> float:
    """||U - I_h U||^2 divided by h^2 ||U||^2 (type I) or h^2(||U||^2 + h^2|AU|^2)."""
    if err_sq is None:
        err_sq = interpolation_error_sq(spec, U)
    h = spec.h
    denom = h * h * norm_alpha(U, 1) ** 2
    if spec.type == "II":
        denom += h ** 4 * norm_alpha(U, 2) ** 2
    return err_sq / denom if denom > 0 else 0.0


ENSEMBLE_SLOPES = (-0.5, -1.0, -2.0, -3.0)


def ensemble(grid: Grid, size: int, seed: int, cutoff: float | None = None):
    """Deterministic random fields covering every resolved scale.

    Member i uses seed ``seed + i``. Members cycle through spectrum slopes
    and through dyadic wavenumber bands, alternating band-pass shells with
    full low-pass discs, so that the scale where an interpolant is least
    accurate is always represented.
    """
    top = grid.band_max if cutoff is None else cutoff
    kmax = np.sqrt(top)
    k1 = np.sqrt(grid.lambda1)
    edges = []
    kc = kmax
    while kc > 1.5 * k1:
        edges.append(kc)
        kc /= 2.0
    bands = [(0.0, kc * kc) for kc in edges] + [((kc / 2) ** 2, kc * kc) for kc in edges]
    for i in range(size):
        slope = ENSEMBLE_SLOPES[i % len(ENSEMBLE_SLOPES)]
        low, high = bands[(i // len(ENSEMBLE_SLOPES) + i) % len(bands)]
        yield random_field(grid, slope, high, seed + i, low=low)


@dataclass
class C1Estimate:
    c1: float
    type: str
    holds: bool
    ratios: np.ndarray

    @property
    def verdict(self) -> str:
        return f"type-{self.type} bound holds with c1 = {self.c1:.6g}" if self.holds else "bound failed"


def estimate_c1(spec, ensemble_size: int, seed: int, grid: Grid) -> C1Estimate:
    """Largest observed ratio over a random ensemble: a lower bound on the best c1."""
    if ensemble_size < 32:
        raise ObservableError("ensemble_size must be at least 32")
    ratios = np.array([type_ratio(spec, U) for U in ensemble(grid, ensemble_size, seed)])
    c1 = float(ratios.max())
    holds = bool(np.isfinite(c1) and np.all(ratios <= c1 * (1 + 1e-12) + 1e-300))
    return C1Estimate(c1, spec.type, holds, ratios)
