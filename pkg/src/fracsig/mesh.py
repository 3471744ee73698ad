"""Tensor meshes for the weighted half-slab.

The computational domain is the slab [-X, X] x [0, Y] carrying the degenerate
volume weight y^gamma, gamma in (-1, 1). All weighted geometry is computed in
closed form:

    int_cell y^gamma dy dx = dx * (y_top^(1+gamma) - y_bot^(1+gamma)) / (1+gamma)

so the total weighted measure 2X * Y^(1+gamma)/(1+gamma) is reproduced exactly
by summation, for either sign of gamma. The optional grading places nodes
uniformly in xi = y^(1+gamma), which equidistributes weighted cell mass in y.

The companion coordinate zeta = y^(1-gamma)/(1-gamma) rectifies the weighted
normal derivative (d/dzeta = y^gamma d/dy); node values of zeta are stored on
the grid because one-sided differences in zeta are how boundary flux is read.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

GRADINGS = ("uniform", "xi_graded")

_MAGIC_GRID = "fracsig-grid"
_MAGIC_FIELD = "fracsig-field"


class SerializationError(ValueError):
    """Raised when a binary blob fails structural validation."""


@dataclass(frozen=True)
class GridSpec:
    """Mesh request: extents, interval counts, weight exponent, grading.

    nx and ny count intervals; the node counts are nx+1 and ny+1. The bottom
    row of nodes lies on y = 0 where the Signorini condition acts.
    """

    x_extent: float
    y_extent: float
    nx: int
    ny: int
    gamma: float = 0.0
    grading: str = "xi_graded"

    def __post_init__(self) -> None:
        if not (self.x_extent > 0 and self.y_extent > 0):
            raise ValueError(
                f"extents must be positive, got ({self.x_extent}, {self.y_extent})"
            )
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need nx, ny >= 3, got ({self.nx}, {self.ny})")
        if not -1.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (-1, 1), got {self.gamma}")
        if self.grading not in GRADINGS:
            raise ValueError(f"unknown grading {self.grading!r}, expected {GRADINGS}")

    @property
    def s(self) -> float:
        """Fractional order s = (1 - gamma)/2 in (0, 1)."""
        return 0.5 * (1.0 - self.gamma)


def _band_integrals(y: np.ndarray, gamma: float) -> np.ndarray:
    """Exact int y^gamma dy over each band [y_j, y_(j+1)]."""
    p = 1.0 + gamma
    return (y[1:] ** p - y[:-1] ** p) / p


class Grid:
    """Immutable tensor mesh with exact weighted geometry.

    Attributes
    ----------
    spec : GridSpec
    x_nodes : (nx+1,) ascending, symmetric about 0
    y_nodes : (ny+1,) ascending, y_nodes[0] == 0
    zeta_nodes : (ny+1,) zeta(y_j) = y_j^(1-gamma)/(1-gamma)
    cell_measures : (nx, ny) exact weighted cell volumes
    x_face_weights : (ny,) exact band integrals of y^gamma, the weight a
        vertical (x-normal) face carries per unit horizontal width
    y_face_weights : (ny+1,) pointwise y^gamma at horizontal (y-normal) face
        levels; the y = 0 entry is 0 for gamma >= 0 and the exact first-band
        average for gamma < 0, so no infinity is ever stored
    """

    def __init__(self, spec: GridSpec, x_nodes: np.ndarray, y_nodes: np.ndarray):
        x_nodes = np.asarray(x_nodes, dtype=float)
        y_nodes = np.asarray(y_nodes, dtype=float)
        if x_nodes.shape != (spec.nx + 1,) or y_nodes.shape != (spec.ny + 1,):
            raise ValueError("node array lengths do not match the grid spec")
        if y_nodes[0] != 0.0:
            raise ValueError(f"y nodes must start at 0, got {y_nodes[0]}")
        if np.any(np.diff(x_nodes) <= 0) or np.any(np.diff(y_nodes) <= 0):
            raise ValueError("node arrays must be strictly increasing")

        g = spec.gamma
        self.spec = spec
        self.x_nodes = x_nodes
        self.y_nodes = y_nodes
        self.zeta_nodes = y_nodes ** (1.0 - g) / (1.0 - g)
        bands = _band_integrals(y_nodes, g)
        self.x_face_weights = bands
        self.cell_measures = np.diff(x_nodes)[:, None] * bands[None, :]

        yw = np.empty(spec.ny + 1)
        with np.errstate(divide="ignore"):
            yw[1:] = y_nodes[1:] ** g
        if g >= 0:
            yw[0] = 0.0 if g > 0 else 1.0
        else:
            # average of y^gamma over [0, y_1/2]: finite although y^gamma is not
            half = 0.5 * y_nodes[1]
            yw[0] = half**g / (1.0 + g)
        self.y_face_weights = yw

        for arr in (
            self.x_nodes,
            self.y_nodes,
            self.zeta_nodes,
            self.x_face_weights,
            self.cell_measures,
            self.y_face_weights,
        ):
            arr.setflags(write=False)
        self._cache: dict = {}

    @property
    def gamma(self) -> float:
        return self.spec.gamma

    @property
    def shape(self) -> tuple[int, int]:
        """Node-array shape (nx+1, ny+1)."""
        return (self.spec.nx + 1, self.spec.ny + 1)

    def total_weighted_measure(self) -> float:
        return float(self.cell_measures.sum())

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays broadcast to shape (nx+1, ny+1)."""
        return np.meshgrid(self.x_nodes, self.y_nodes, indexing="ij")

    def band_integrals(self, exponent: float) -> np.ndarray:
        """Exact int y^e dy over each primal y-band, for |e| < 1."""
        return _band_integrals(self.y_nodes, exponent)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.spec == other.spec
            and np.array_equal(self.x_nodes, other.x_nodes)
            and np.array_equal(self.y_nodes, other.y_nodes)
        )

    def __repr__(self) -> str:
        s = self.spec
        return (
            f"Grid({s.nx}x{s.ny}, X={s.x_extent}, Y={s.y_extent}, "
            f"gamma={s.gamma}, {s.grading})"
        )


def build_grid(spec: GridSpec) -> Grid:
    """Construct the tensor mesh for a spec.

    x nodes are uniform on [-X, X]. y nodes are uniform in y or, with
    xi_graded, uniform in xi = y^(1+gamma):

        y_j = ((j/ny) * Y^(1+gamma))^(1/(1+gamma))

    which clusters nodes at the degenerate boundary exactly when gamma < 0
    would make point values of the weight blow up there.
    """
    x = np.linspace(-spec.x_extent, spec.x_extent, spec.nx + 1)
    frac = np.arange(spec.ny + 1) / spec.ny
    if spec.grading == "xi_graded":
        y = spec.y_extent * frac ** (1.0 / (1.0 + spec.gamma))
    else:
        y = spec.y_extent * frac
    return Grid(spec, x, y)


def weighted_cell_measures(grid: Grid) -> np.ndarray:
    """Exact weighted measures of the primal cells, shape (nx, ny)."""
    return grid.cell_measures


@dataclass
class Field:
    """Node values of a scalar field at one time."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_callable(cls, grid: Grid, fn, time: float = 0.0) -> "Field":
        """Sample fn(x, y, t) on the nodes; fn must broadcast over arrays."""
        xx, yy = grid.meshgrid()
        vals = np.broadcast_to(fn(xx, yy, time), grid.shape).astype(float)
        return cls(grid, vals.copy(), time)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy(), self.time)


# ---------------------------------------------------------------------------
# binary serialization: [uint64 LE header length][UTF-8 JSON][float64 LE data]
# ---------------------------------------------------------------------------


def _pack(header: dict, payload: np.ndarray) -> bytes:
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = np.ascontiguousarray(payload, dtype="<f8").tobytes()
    return struct.pack("<Q", len(raw)) + raw + body


def _unpack(blob: bytes, expected_format: str) -> tuple[dict, np.ndarray]:
    if len(blob) < 8:
        raise SerializationError("blob shorter than the 8-byte header length")
    (hlen,) = struct.unpack_from("<Q", blob, 0)
    if 8 + hlen > len(blob):
        raise SerializationError(
            f"declared header length {hlen} exceeds blob size {len(blob)}"
        )
    try:
        header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SerializationError(f"malformed JSON header: {exc}") from exc
    if header.get("format") != expected_format:
        raise SerializationError(
            f"expected format {expected_format!r}, got {header.get('format')!r}"
        )
    body = blob[8 + hlen :]
    if len(body) % 8:
        raise SerializationError(f"payload length {len(body)} is not float64-aligned")
    data = np.frombuffer(body, dtype="<f8")
    want = int(header.get("payload_len", -1))
    if want != data.size:
        raise SerializationError(
            f"header promises {want} floats, payload holds {data.size}"
        )
    return header, data


def _grid_header(grid: Grid) -> dict:
    s = grid.spec
    return {
        "format": _MAGIC_GRID,
        "version": 1,
        "gamma": s.gamma,
        "x_extent": s.x_extent,
        "y_extent": s.y_extent,
        "nx": s.nx,
        "ny": s.ny,
        "grading": s.grading,
        "payload_len": (s.nx + 1) + (s.ny + 1),
    }


def grid_to_bytes(grid: Grid) -> bytes:
    payload = np.concatenate([grid.x_nodes, grid.y_nodes])
    return _pack(_grid_header(grid), payload)


def grid_from_bytes(blob: bytes) -> Grid:
    header, data = _unpack(blob, _MAGIC_GRID)
    spec = GridSpec(
        x_extent=header["x_extent"],
        y_extent=header["y_extent"],
        nx=int(header["nx"]),
        ny=int(header["ny"]),
        gamma=header["gamma"],
        grading=header["grading"],
    )
    x = data[: spec.nx + 1]
    y = data[spec.nx + 1 :]
    return Grid(spec, x.copy(), y.copy())


def field_to_bytes(field: Field) -> bytes:
    grid = field.grid
    header = _grid_header(grid)
    header["format"] = _MAGIC_FIELD
    header["time"] = field.time
    header["payload_len"] += field.values.size
    payload = np.concatenate(
        [grid.x_nodes, grid.y_nodes, field.values.ravel(order="C")]
    )
    return _pack(header, payload)


def field_from_bytes(blob: bytes) -> Field:
    header, data = _unpack(blob, _MAGIC_FIELD)
    nx, ny = int(header["nx"]), int(header["ny"])
    spec = GridSpec(
        x_extent=header["x_extent"],
        y_extent=header["y_extent"],
        nx=nx,
        ny=ny,
        gamma=header["gamma"],
        grading=header["grading"],
    )
    x = data[: nx + 1]
    y = data[nx + 1 : nx + ny + 2]
    grid = Grid(spec, x.copy(), y.copy())
    vals = data[nx + ny + 2 :].reshape(nx + 1, ny + 1).copy()
    return Field(grid, vals, time=float(header["time"]))


def write_grid(grid: Grid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(grid_to_bytes(grid))


def read_grid(path) -> Grid:
    with open(path, "rb") as fh:
        return grid_from_bytes(fh.read())


def write_field(field: Field, path) -> None:
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(field))


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())
