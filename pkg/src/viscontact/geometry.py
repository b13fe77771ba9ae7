"""Periodic strip geometry: bed profile, cavity roof and the triangulated domain.

The domain is one bed wavelength wide (``L = 1`` after scaling) and runs from
the cavity roof up to a flat top boundary at ``y = H``.  Lower-boundary node
``i`` sits at ``x_i = i / n_e``; edge ``e_i`` joins node ``i - 1`` to node
``i`` (indices mod ``n_e``), so ``e_0`` is the edge spanning ``[1 - h, 1]``.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, GeometryError

PERIOD = 1.0


@dataclass(frozen=True)
class BedProfile:
    """Sinusoidal bed ``b(x) = r sin(pi/2 + 2 pi x)`` with crest at ``x = 0``."""

    r: float = 0.01

    def __call__(self, x):
        return self.r * np.sin(0.5 * np.pi + 2.0 * np.pi * np.asarray(x, dtype=float))


@dataclass
class CavityRoof:
    """Heights ``theta`` of the ice lower boundary at the nodes ``x``."""

    x: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.x.shape != self.theta.shape or self.x.ndim != 1:
            raise ConfigError("roof x and theta must be 1-D arrays of equal length")
        if self.x[0] != 0.0 or np.any(np.diff(self.x) <= 0) or self.x[-1] >= PERIOD:
            raise ConfigError("roof nodes must start at 0 and increase strictly within one period")

    @classmethod
    def attached(cls, bed, n_e):
        x = np.arange(n_e) / n_e
        return cls(x, bed(x))

    @property
    def n_e(self):
        return self.x.size

    def edge_dx(self):
        """Horizontal length of every edge ``e_i`` (``x_i - x_{i-1}``, wrapped)."""
        return np.diff(self.x, prepend=self.x[-1] - PERIOD)

    def edge_slope(self):
        return (self.theta - np.roll(self.theta, 1)) / self.edge_dx()

    def copy(self):
        return CavityRoof(self.x.copy(), self.theta.copy())


def classify_edges(roof, bed):
    """Boolean mask, True where edge ``e_i`` is attached.

    An edge is detached iff its downstream node lies strictly above the bed.
    The comparison is exact on purpose: clipping writes ``b(x_i)`` verbatim.
    """
    return ~(roof.theta > bed(roof.x))


@dataclass(frozen=True)
class PeriodicMesh:
    """Structured triangulation of the periodic strip.

    ``points`` holds ``(n_layers + 1) * (n_e + 1)`` vertices, including a copy of
    the ``x = 0`` column at ``x = 1`` so that every triangle has plain
    coordinates; ``periodic`` maps each vertex to its representative id.
    """

    points: np.ndarray
    triangles: np.ndarray
    periodic: np.ndarray
    n_e: int
    n_layers: int
    H: float
    y_ref: np.ndarray = field(repr=False)
    bottom_edges: np.ndarray = field(repr=False)
    top_edges: np.ndarray = field(repr=False)

    @property
    def n_cells(self):
        return self.triangles.shape[0]

    def vertex(self, col, row):
        return row * (self.n_e + 1) + col

    def cell_areas(self):
        p = self.points[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def lower_nodes(self):
        """Coordinates of the lower-boundary vertices ``i = 0..n_e-1``."""
        return self.points[: self.n_e]

    def lower_edge_geometry(self):
        """Endpoints, lengths and outward unit normals of the lower edges."""
        a = self.points[self.bottom_edges[:, 0]]
        b = self.points[self.bottom_edges[:, 1]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        return a, b, length, normal


def _row_heights(n_layers, H, grading):
    ratios = grading ** np.arange(n_layers)
    return H * ratios / ratios.sum()


def build_reference_mesh(n_e, n_layers, H=1.0, grading=1.0):
    """Flat-bottomed structured mesh of ``[0, 1] x [0, H]`` with ``2 n_e n_layers`` cells.

    Rows are graded toward the bed: row ``k`` is ``grading`` times taller than
    row ``k - 1``.
    """
    if int(n_e) != n_e or n_e < 4 or n_e % 2:
        raise ConfigError(f"n_e must be an even integer >= 4, got {n_e}")
    if int(n_layers) != n_layers or n_layers < 1:
        raise ConfigError(f"n_layers must be a positive integer, got {n_layers}")
    if not H > 0:
        raise ConfigError(f"H must be positive, got {H}")
    if not grading >= 1:
        raise ConfigError(f"grading must be >= 1, got {grading}")
    n_e, n_layers = int(n_e), int(n_layers)

    xs = np.arange(n_e + 1) / n_e
    ys = np.concatenate([[0.0], np.cumsum(_row_heights(n_layers, H, grading))])
    ys[-1] = H
    X, Y = np.meshgrid(xs, ys)
    points = np.column_stack([X.ravel(), Y.ravel()])

    ncol = n_e + 1
    j, k = np.meshgrid(np.arange(n_e), np.arange(n_layers))
    j, k = j.ravel(), k.ravel()
    v00 = k * ncol + j
    v10 = v00 + 1
    v01 = v00 + ncol
    v11 = v01 + 1
    triangles = np.empty((2 * v00.size, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])

    cols = np.tile(np.arange(ncol), n_layers + 1)
    rows = np.repeat(np.arange(n_layers + 1), ncol)
    periodic = rows * ncol + np.where(cols == n_e, 0, cols)

    i = np.arange(n_e)
    left = np.where(i == 0, n_e - 1, i - 1)
    right = np.where(i == 0, n_e, i)
    bottom_edges = np.column_stack([left, right])
    top = n_layers * ncol
    top_edges = np.column_stack([top + np.arange(n_e), top + np.arange(1, n_e + 1)])

    return PeriodicMesh(points, triangles, periodic, n_e, n_layers, float(H),
                        y_ref=points[:, 1].copy(), bottom_edges=bottom_edges,
                        top_edges=top_edges)


def deform_mesh(reference, roof, H=None):
    """Stretch the reference mesh vertically so its bottom follows ``roof``.

    Always maps from the flat reference mesh, never from a previous deformation.
    """
    H = reference.H if H is None else float(H)
    if roof.n_e != reference.n_e:
        raise GeometryError("roof and mesh have different node counts")
    if np.any(roof.theta >= H):
        raise GeometryError(f"cavity roof reaches the top boundary (max theta={roof.theta.max():g})")
    col = np.rint(reference.points[:, 0] * reference.n_e).astype(np.int64) % reference.n_e
    th = roof.theta[col]
    y = th + (reference.y_ref / reference.H) * (H - th)
    points = np.column_stack([reference.points[:, 0], y])
    mesh = replace(reference, points=points, H=H)
    areas = mesh.cell_areas()
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise GeometryError(f"deformed cell {bad} has nonpositive area {areas[bad]:g}")
    return mesh


def dump_mesh(mesh, path):
    """Write vertices then triangles, one record per line."""
    with open(path, "w") as fh:
        fh.write(f"# vertices {mesh.points.shape[0]}\n")
        for x, y in mesh.points:
            fh.write(f"v {x:.15g} {y:.15g}\n")
        fh.write(f"# triangles {mesh.n_cells}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"t {a} {b} {c}\n")
