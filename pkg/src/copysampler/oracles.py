"""Hard-label membership-query oracles.

The oracle is the only view of the model being copied: it maps a point to a
class index and exposes nothing else (no confidences, no gradients).  This
module provides closed-form toy classifiers whose true decision boundary is
known to tests, a 1-nearest-neighbour table oracle for copying arbitrary
exported models, and a client/server pair for a newline-delimited wire
protocol so models in other processes (or languages) can be queried.
"""

from __future__ import annotations

import math
import subprocess
import sys
from typing import IO, Sequence

import numpy as np

from .core import CopySamplerError, Point


class UnsupportedOracleError(CopySamplerError):
    """The requested operation needs an analytic oracle."""


class ProtocolError(CopySamplerError):
    """A wire-protocol message was malformed."""


class QueryTransportError(CopySamplerError):
    """The transport to an external oracle failed; callers must abort."""


class Oracle:
    """Black-box classifier surface: hard labels only, one query counter.

    `query` must be deterministic (same point, same label).  The counter is
    the cost model for sampling budgets, so every label obtained from the
    underlying model passes through `query`/`query_many`.
    """

    def __init__(self, d: int, k: int):
        if d < 1:
            raise ValueError(f"d must be >= 1, got {d}")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.d = int(d)
        self.k = int(k)
        self._queries = 0

    @property
    def query_count(self) -> int:
        return self._queries

    def query(self, z: Point) -> int:
        self._queries += 1
        return int(self._label_one(np.asarray(z, dtype=np.float64)))

    def query_many(self, X: np.ndarray) -> np.ndarray:
        """Labels for each row of X; counts one query per row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self._queries += X.shape[0]
        return self._label_many(X).astype(np.int64)

    def _label_one(self, z: np.ndarray) -> int:
        raise NotImplementedError

    def _label_many(self, X: np.ndarray) -> np.ndarray:
        return np.array([self._label_one(row) for row in X], dtype=np.int64)


class AnalyticOracle(Oracle):
    """Closed-form classifier whose true boundary is available to tests."""

    def boundary_distance(self, z: Point) -> float:
        raise NotImplementedError

    def boundary_curves(self, n: int = 512) -> list[np.ndarray]:
        """Polylines tracing the decision boundary (2-D variants only)."""
        raise UnsupportedOracleError(
            f"{type(self).__name__} has no 2-D boundary curve"
        )


def query(oracle: Oracle, z: Point) -> int:
    return oracle.query(z)


def boundary_distance(oracle: Oracle, z: Point) -> float:
    """Euclidean distance from z to the oracle's true decision boundary."""
    if not isinstance(oracle, AnalyticOracle):
        raise UnsupportedOracleError(
            f"boundary_distance needs an analytic oracle, got {type(oracle).__name__}"
        )
    return oracle.boundary_distance(np.asarray(z, dtype=np.float64))


class HalfspaceOracle(AnalyticOracle):
    """Linear binary classifier: label 1 iff w . z >= c."""

    def __init__(self, w: Sequence[float], c: float):
        w = np.asarray(w, dtype=np.float64)
        super().__init__(d=w.size, k=2)
        self.w = w
        self.c = float(c)
        self._norm = float(np.linalg.norm(w))
        if self._norm == 0.0:
            raise ValueError("weight vector must be nonzero")

    def _label_one(self, z):
        return int(float(self.w @ z) >= self.c)

    def _label_many(self, X):
        return (X @ self.w >= self.c).astype(np.int64)

    def boundary_distance(self, z):
        return abs(float(self.w @ np.asarray(z, dtype=np.float64)) - self.c) / self._norm

    def boundary_curves(self, n: int = 512):
        if self.d != 2:
            return super().boundary_curves(n)
        pts = []
        a, b = self.w
        for x in (0.0, 1.0):
            if b != 0.0:
                y = (self.c - a * x) / b
                if -1e-9 <= y <= 1 + 1e-9:
                    pts.append((x, min(max(y, 0.0), 1.0)))
        for y in (0.0, 1.0):
            if a != 0.0:
                x = (self.c - b * y) / a
                if -1e-9 <= x <= 1 + 1e-9:
                    pts.append((min(max(x, 0.0), 1.0), y))
        uniq = sorted(set(pts))
        if len(uniq) < 2:
            return []
        return [np.array([uniq[0], uniq[-1]])]


class ConcentricCirclesOracle(AnalyticOracle):
    """Concentric rings around a center; label = number of radii crossed."""

    def __init__(self, center: Sequence[float], radii: Sequence[float]):
        center = np.asarray(center, dtype=np.float64)
        radii = np.asarray(radii, dtype=np.float64)
        if radii.size == 0 or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
            raise ValueError("radii must be ascending positive values")
        super().__init__(d=center.size, k=radii.size + 1)
        self.center = center
        self.radii = radii

    def _label_one(self, z):
        r = float(np.linalg.norm(z - self.center))
        return int(np.searchsorted(self.radii, r, side="right"))

    def _label_many(self, X):
        r = np.linalg.norm(X - self.center, axis=1)
        return np.searchsorted(self.radii, r, side="right").astype(np.int64)

    def boundary_distance(self, z):
        r = float(np.linalg.norm(np.asarray(z, dtype=np.float64) - self.center))
        return float(np.min(np.abs(r - self.radii)))

    def boundary_curves(self, n: int = 512):
        if self.d != 2:
            return super().boundary_curves(n)
        theta = np.linspace(0.0, 2 * math.pi, n + 1)
        return [
            np.column_stack([
                self.center[0] + r * np.cos(theta),
                self.center[1] + r * np.sin(theta),
            ])
            for r in self.radii
        ]


class CheckerboardOracle(AnalyticOracle):
    """Axis-aligned checkerboard: label = parity of the cell index sum."""

    def __init__(self, cells_per_dim: int, d: int = 2):
        if cells_per_dim < 1:
            raise ValueError("cells_per_dim must be >= 1")
        super().__init__(d=d, k=2)
        self.cells = int(cells_per_dim)

    def _cell_indices(self, X):
        idx = np.floor(X * self.cells).astype(np.int64)
        return np.minimum(idx, self.cells - 1)

    def _label_one(self, z):
        return int(self._cell_indices(z[None, :]).sum() % 2)

    def _label_many(self, X):
        return (self._cell_indices(X).sum(axis=1) % 2).astype(np.int64)

    def boundary_distance(self, z):
        if self.cells == 1:
            return math.inf
        z = np.asarray(z, dtype=np.float64)
        lines = np.clip(np.round(z * self.cells), 1, self.cells - 1) / self.cells
        return float(np.min(np.abs(z - lines)))

    def boundary_curves(self, n: int = 512):
        if self.d != 2:
            return super().boundary_curves(n)
        curves = []
        for j in range(1, self.cells):
            t = j / self.cells
            curves.append(np.array([[t, 0.0], [t, 1.0]]))
            curves.append(np.array([[0.0, t], [1.0, t]]))
        return curves


class Spiral2DOracle(AnalyticOracle):
    """Two interleaved spiral arms around the center (2-D, binary).

    The boundary consists of two Archimedean arms whose angle grows
    linearly with the radius; `turns` is the number of full rotations a
    boundary arm makes between the center and radius 0.5.
    """

    _R_REF = 0.5
    _R_MAX = math.sqrt(2.0) / 2.0  # center-to-corner radius

    def __init__(self, turns: float, center: Sequence[float] = (0.5, 0.5)):
        center = np.asarray(center, dtype=np.float64)
        if center.size != 2:
            raise ValueError("spiral oracle is 2-D only")
        if turns <= 0:
            raise ValueError("turns must be positive")
        super().__init__(d=2, k=2)
        self.turns = float(turns)
        self.center = center

    def _arm_angle(self, r):
        return 2 * math.pi * self.turns * r / self._R_REF

    def _label_many(self, X):
        dz = X - self.center
        r = np.linalg.norm(dz, axis=1)
        phi = np.arctan2(dz[:, 1], dz[:, 0])
        delta = np.mod(phi - self._arm_angle(r), 2 * math.pi)
        return (delta >= math.pi).astype(np.int64)

    def _label_one(self, z):
        return int(self._label_many(z[None, :])[0])

    def _arm_points(self, t, phase):
        ang = self._arm_angle(t) + phase
        return np.column_stack([
            self.center[0] + t * np.cos(ang),
            self.center[1] + t * np.sin(ang),
        ])

    def boundary_distance(self, z):
        # No closed form exists for distance to an Archimedean arm; project
        # onto a dense parametrization and refine by golden section.
        z = np.asarray(z, dtype=np.float64)
        best = math.inf
        grid = np.linspace(0.0, self._R_MAX, 2048)
        for phase in (0.0, math.pi):
            pts = self._arm_points(grid, phase)
            d2 = ((pts - z) ** 2).sum(axis=1)
            i = int(np.argmin(d2))
            lo = grid[max(i - 1, 0)]
            hi = grid[min(i + 1, grid.size - 1)]
            best = min(best, self._refine(z, phase, lo, hi))
        return best

    def _refine(self, z, phase, lo, hi):
        inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - inv_phi * (b - a)
        d = a + inv_phi * (b - a)
        fc = self._dist_at(z, phase, c)
        fd = self._dist_at(z, phase, d)
        for _ in range(80):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - inv_phi * (b - a)
                fc = self._dist_at(z, phase, c)
            else:
                a, c, fc = c, d, fd
                d = a + inv_phi * (b - a)
                fd = self._dist_at(z, phase, d)
        t = (a + b) / 2
        return self._dist_at(z, phase, t)

    def _dist_at(self, z, phase, t):
        p = self._arm_points(np.array([t]), phase)[0]
        return float(np.linalg.norm(p - z))

    def boundary_curves(self, n: int = 512):
        t = np.linspace(0.0, self._R_MAX, n)
        return [self._arm_points(t, 0.0), self._arm_points(t, math.pi)]


class TableOracle(Oracle):
    """1-nearest-neighbour rule over an exported labelled reference table.

    Distance ties are broken by the lowest row index, which makes the rule
    deterministic for any input.
    """

    def __init__(self, X_ref: np.ndarray, y_ref: np.ndarray, k: int | None = None):
        X_ref = np.atleast_2d(np.asarray(X_ref, dtype=np.float64))
        y_ref = np.asarray(y_ref, dtype=np.int64).reshape(-1)
        if X_ref.shape[0] == 0 or X_ref.shape[0] != y_ref.shape[0]:
            raise ValueError("reference table must be non-empty and consistent")
        super().__init__(d=X_ref.shape[1], k=int(y_ref.max()) + 1 if k is None else k)
        self.X_ref = X_ref
        self.y_ref = y_ref

    def _label_one(self, z):
        d2 = ((self.X_ref - z) ** 2).sum(axis=1)
        return int(self.y_ref[int(np.argmin(d2))])

    def _label_many(self, X):
        out = np.empty(X.shape[0], dtype=np.int64)
        step = 256
        for start in range(0, X.shape[0], step):
            chunk = X[start:start + step]
            d2 = ((chunk[:, None, :] - self.X_ref[None, :, :]) ** 2).sum(axis=2)
            out[start:start + step] = self.y_ref[np.argmin(d2, axis=1)]
        return out


# -- newline-delimited wire protocol ----------------------------------------
#
# Server greeting:   HELLO <d> <k>\n
# Client request:    <d space-separated decimal floats>\n
# Server response:   <integer label in [0, k-1]>\n
# Client shutdown:   BYE\n
#
# Strict lockstep: every request receives exactly one response before the
# next request is sent.

def parse_handshake(line: str) -> tuple[int, int]:
    """Parse the `HELLO <d> <k>` greeting; raise ProtocolError otherwise."""
    stripped = line.strip()
    parts = stripped.split()
    if len(parts) != 3 or parts[0] != "HELLO":
        raise ProtocolError(f"malformed handshake line: {line!r}")
    try:
        d, k = int(parts[1]), int(parts[2])
    except ValueError:
        raise ProtocolError(f"non-integer handshake fields: {line!r}") from None
    if d < 1 or k < 1:
        raise ProtocolError(f"handshake out of range (d >= 1, k >= 1): {line!r}")
    return d, k


def external_handshake(reader: IO[str]) -> tuple[int, int]:
    """Read and validate the greeting from an open transport."""
    line = reader.readline()
    if not line:
        raise ProtocolError("transport closed before handshake")
    return parse_handshake(line)


class ExternalOracle(Oracle):
    """Client for a model served over the wire protocol.

    Strictly serial: one request in flight at a time.  Transport failures
    raise QueryTransportError so samplers abort instead of fabricating
    labels.
    """

    def __init__(self, reader: IO[str], writer: IO[str], on_close=None):
        d, k = external_handshake(reader)
        super().__init__(d=d, k=k)
        self._reader = reader
        self._writer = writer
        self._on_close = on_close
        self._proc: subprocess.Popen | None = None

    @classmethod
    def spawn(cls, command: Sequence[str]) -> "ExternalOracle":
        """Start `command` as a child process and attach over its pipes."""
        proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        oracle = cls(proc.stdout, proc.stdin)
        oracle._proc = proc
        return oracle

    def _label_one(self, z):
        if z.shape[0] != self.d:
            raise ValueError(f"point has {z.shape[0]} coordinates, oracle wants {self.d}")
        request = " ".join(f"{v:.17g}" for v in z)
        try:
            self._writer.write(request + "\n")
            self._writer.flush()
            line = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise QueryTransportError(f"transport failed mid-query: {exc}") from exc
        if not line:
            raise QueryTransportError("transport closed while awaiting a label")
        try:
            label = int(line.strip())
        except ValueError:
            raise ProtocolError(f"malformed label line: {line!r}") from None
        if not 0 <= label < self.k:
            raise ProtocolError(f"label {label} outside [0, {self.k - 1}]")
        return label

    def close(self):
        try:
            self._writer.write("BYE\n")
            self._writer.flush()
        except (OSError, ValueError):
            pass
        for stream in (self._writer, self._reader):
            try:
                stream.close()
            except OSError:
                pass
        if self._proc is not None:
            self._proc.wait(timeout=10)
        if self._on_close is not None:
            self._on_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def serve_oracle(oracle: Oracle, reader: IO[str], writer: IO[str]) -> int:
    """Serve `oracle` over the wire protocol until BYE or EOF.

    Returns the number of queries answered.  Malformed requests raise
    ProtocolError; the connection is then abandoned.
    """
    writer.write(f"HELLO {oracle.d} {oracle.k}\n")
    writer.flush()
    answered = 0
    while True:
        line = reader.readline()
        if not line or line.strip() == "BYE":
            return answered
        fields = line.split()
        if len(fields) != oracle.d:
            raise ProtocolError(
                f"expected {oracle.d} coordinates, got {len(fields)}: {line!r}"
            )
        try:
            z = np.array([float(v) for v in fields])
        except ValueError:
            raise ProtocolError(f"non-numeric coordinate in request: {line!r}") from None
        writer.write(f"{oracle.query(z)}\n")
        writer.flush()
        answered += 1


def serve_stdio(oracle: Oracle) -> int:
    """Serve on stdin/stdout; convenience for child-process oracles."""
    return serve_oracle(oracle, sys.stdin, sys.stdout)
