"""Error time series, absorbing-ball bounds, decay-rate fits and file formats."""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .spectral import Grid, SpectralScalar, SpectralVelocity

COLUMNS = ("t", "err_L2", "err_H1", "err_H2", "energy_truth", "enstrophy_truth")

SNAPSHOT_MAGIC = b"NSDA"
SNAPSHOT_VERSION = 1
TAG_SCALAR = 1
TAG_VELOCITY = 2
# magic, version, n, L, t, payload tag
_HEADER = struct.Struct("<4sIIddI")

LOG_FLOOR = 1e-14


class FormatError(ValueError):
    pass


@dataclass
class ErrorSeries:
    """Rows of (t, |v|, ||v||, |Av|, truth energy, truth enstrophy)."""

    data: np.ndarray
    metadata: dict = field(default_factory=dict)
    insertions: list = field(default_factory=list)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(COLUMNS))

    @classmethod
    def from_rows(cls, rows, metadata=None):
        return cls(np.array(rows, dtype=float).reshape(-1, len(COLUMNS)), dict(metadata or {}))

    def __len__(self):
        return len(self.data)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, COLUMNS.index(name)]
        except ValueError:
            raise KeyError(f"unknown column {name!r}; expected one of {COLUMNS}") from None

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    def check(self, lambda1: float, rtol: float = 1e-12) -> list[str]:
        """Violations of monotone time, non-negativity and the Poincare chain."""
        problems = []
        t = self.t
        if np.any(np.diff(t) <= 0):
            problems.append("t is not strictly increasing")
        if np.any(self.data[:, 1:] < 0):
            problems.append("negative norm")
        l2, h1, h2 = self.data[:, 1], self.data[:, 2], self.data[:, 3]
        s = math.sqrt(lambda1)
        bad1 = np.nonzero(h2 < s * h1 * (1 - rtol))[0]
        bad2 = np.nonzero(s * h1 < lambda1 * l2 * (1 - rtol))[0]
        for i in bad1[:5]:
            problems.append(f"row {i}: err_H2 < sqrt(lambda1) err_H1")
        for i in bad2[:5]:
            problems.append(f"row {i}: sqrt(lambda1) err_H1 < lambda1 err_L2")
        return problems


@dataclass(frozen=True)
class RhoBounds:
    rho_H: float
    rho_V: float
    integral_AU_bound: float


def rho_bounds(F: float, nu: float, lambda1: float, delta: float) -> RhoBounds:
    """Absorbing radii rho_H^2 = 2F/(lambda1^2 nu^2), rho_V^2 = 2F/(lambda1 nu^2)
    and the window bound (1/nu + delta lambda1/2) rho_V^2 on int |AU|^2."""
    if nu <= 0 or lambda1 <= 0 or delta <= 0 or F < 0:
        raise ValueError("nu, lambda1 and delta must be positive and F non-negative")
    rho_H = math.sqrt(2.0 * F) / (lambda1 * nu)
    rho_V = math.sqrt(2.0 * F / lambda1) / nu
    return RhoBounds(rho_H, rho_V, (1.0 / nu + 0.5 * delta * lambda1) * rho_V ** 2)


def fit_decay_rate(series: ErrorSeries, column: str = "err_H1", t_start: float = 0.0):
    """Least-squares fit of log(error) = c - alpha t over t >= t_start.

    Returns ``(alpha, r_squared)``. Values below 1e-14 are clipped to it.
    """
    t = series.t
    y = series.column(column)
    sel = t >= t_start
    t, y = t[sel], y[sel]
    if len(t) < 10:
        raise ValueError(f"need at least 10 rows past t = {t_start}, have {len(t)}")
    if not np.any(y > 0):
        raise ValueError(f"column {column} is identically zero past t = {t_start}")
    logy = np.log(np.maximum(y, LOG_FLOOR))
    tc = t - t.mean()
    sxx = float(tc @ tc)
    slope = float(tc @ (logy - logy.mean())) / sxx
    resid = logy - logy.mean() - slope * tc
    ss_res = float(resid @ resid)
    dev = logy - logy.mean()
    ss_tot = float(dev @ dev)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return -slope, r2


def format_series(series: ErrorSeries) -> str:
    out = io.StringIO()
    for key, value in series.metadata.items():
        out.write(f"# {key} = {value}\n")
    out.write(",".join(COLUMNS) + "\n")
    for row in series.data:
        out.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return out.getvalue()


def write_series(series: ErrorSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_series(series))


def read_series(path) -> ErrorSeries:
    meta = {}
    rows = []
    header_seen = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if tuple(c.strip() for c in line.split(",")) != COLUMNS:
                    raise FormatError(f"{path}:{lineno}: expected header {','.join(COLUMNS)}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != len(COLUMNS):
                raise FormatError(f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not header_seen:
        raise FormatError(f"{path}: missing header line")
    return ErrorSeries(np.array(rows, dtype=float).reshape(-1, len(COLUMNS)), meta)


def write_snapshot(path, field_, t: float) -> None:
    """Binary snapshot: little-endian header then (re, im) float64 pairs."""
    g = field_.grid
    tag = TAG_VELOCITY if isinstance(field_, SpectralVelocity) else TAG_SCALAR
    payload = np.ascontiguousarray(field_.coeffs, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.n, g.L, float(t), tag))
        fh.write(payload.tobytes(order="C"))


def read_snapshot(path):
    """Returns ``(field, t)``; raises FormatError naming the offending offset."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header: file ends at byte offset {len(raw)}, "
                          f"header needs {_HEADER.size} bytes")
    magic, version, n, L, t, tag = _HEADER.unpack_from(raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte offset 0")
    if version != SNAPSHOT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at byte offset 4")
    if tag not in (TAG_SCALAR, TAG_VELOCITY):
        raise FormatError(f"{path}: unknown payload tag {tag} at byte offset 28")
    ncomp = 2 if tag == TAG_VELOCITY else 1
    expected = _HEADER.size + ncomp * n * n * 16
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "oversized"
        raise FormatError(f"{path}: {kind} payload: file ends at byte offset {len(raw)}, "
                          f"expected {expected}")
    grid = Grid(n, L)
    coeffs = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).astype(complex)
    if tag == TAG_VELOCITY:
        return SpectralVelocity(grid, coeffs.reshape(2, n, n)), t
    return SpectralScalar(grid, coeffs.reshape(n, n)), t
