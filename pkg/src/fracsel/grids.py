"""Uniform time grids, sampled paths, and their on-disk formats."""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

BINARY_MAGIC = b"FSEL"
BINARY_VERSION = 1
# magic, format version, step count n, dt, t0; values follow as (n+1) little-endian f64
_HEADER = struct.Struct("<4sIQdd")


class GridError(DomainError):
    """Grid construction or lookup failed."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0, t0+dt, ..., t0+n*dt with n steps (n+1 nodes)."""

    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.t0):
            raise GridError(f"t0 must be finite, got {self.t0}")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise GridError(f"dt must be a finite positive float, got {self.dt}")
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise GridError(f"n must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "n", int(self.n))

    @property
    def n_nodes(self) -> int:
        return self.n + 1

    @property
    def t_end(self) -> float:
        return self.t0 + self.n * self.dt

    @property
    def span(self) -> float:
        return self.n * self.dt

    def nodes(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n + 1)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Index of the node equal to t, within tol*dt relative slack."""
        k = (t - self.t0) / self.dt
        j = int(round(k))
        if j < 0 or j > self.n or abs(k - j) > tol * max(1.0, abs(j)):
            raise GridError(f"t={t} is not a node of grid (t0={self.t0}, dt={self.dt}, n={self.n})")
        return j

    def restrict(self, i0: int, i1: int) -> "TimeGrid":
        """Subgrid from node i0 to node i1 inclusive."""
        if not (0 <= i0 < i1 <= self.n):
            raise GridError(f"invalid restriction [{i0}, {i1}] of grid with n={self.n}")
        return TimeGrid(self.t0 + i0 * self.dt, self.dt, i1 - i0)


@dataclass(frozen=True)
class Path:
    """A scalar path sampled on a TimeGrid. values[k] is the state at node k."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.grid.n_nodes,):
            raise GridError(
                f"values shape {vals.shape} does not match grid with {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise GridError("path values must be finite")
        object.__setattr__(self, "values", vals)

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def value_at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])

    # -- serialization ------------------------------------------------------

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.grid.nodes(), self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue().encode("ascii")

    def save_csv(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(self.to_csv_bytes())

    @classmethod
    def load_csv(cls, path: str) -> "Path":
        with open(path, "r", encoding="ascii") as f:
            rows = list(csv.reader(f))
        if not rows or rows[0] != ["t", "value"]:
            raise GridError(f"{path}: missing 't,value' header")
        t = np.array([float(r[0]) for r in rows[1:]])
        v = np.array([float(r[1]) for r in rows[1:]])
        if len(t) < 2:
            raise GridError(f"{path}: need at least two samples")
        dt = (t[-1] - t[0]) / (len(t) - 1)
        grid = TimeGrid(float(t[0]), float(dt), len(t) - 1)
        if not np.allclose(t, grid.nodes(), rtol=0, atol=1e-9 * max(1.0, abs(t[-1]))):
            raise GridError(f"{path}: time column is not a uniform grid")
        return cls(grid, v)

    def to_binary_bytes(self) -> bytes:
        head = _HEADER.pack(BINARY_MAGIC, BINARY_VERSION, self.grid.n, self.grid.dt, self.grid.t0)
        body = np.ascontiguousarray(self.values, dtype="<f8").tobytes()
        return head + body

    def save_binary(self, path: str) -> None:
        with open(path, "wb") as f:
            f.write(self.to_binary_bytes())

    @classmethod
    def load_binary(cls, path: str) -> "Path":
        with open(path, "rb") as f:
            raw = f.read()
        if len(raw) < _HEADER.size:
            raise GridError(f"{path}: truncated header")
        magic, version, n, dt, t0 = _HEADER.unpack_from(raw)
        if magic != BINARY_MAGIC:
            raise GridError(f"{path}: bad magic {magic!r}")
        if version != BINARY_VERSION:
            raise GridError(f"{path}: unsupported format version {version}")
        need = _HEADER.size + 8 * (n + 1)
        if len(raw) != need:
            raise GridError(f"{path}: expected {need} bytes, got {len(raw)}")
        vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).copy()
        return cls(TimeGrid(t0, dt, int(n)), vals)
