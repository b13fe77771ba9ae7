"""Cavity-roof evolution by edge-upwinded advection, bed clipping and diagnostics."""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import PERIOD, CavityRoof, classify_edges

log = logging.getLogger(__name__)


def advect_roof(roof, bed, un_edges, dt):
    """One explicit step of the roof kinematic equation.

    Node ``i`` takes its normal velocity from edge ``e_i`` (the edge just
    upstream for flow in +x), scaled by the edge's arc-length factor. With
    outward normals, ``un <= 0`` lifts the roof.
    """
    if not dt > 0:
        raise ConfigError(f"time step must be positive, got {dt}")
    un = np.asarray(un_edges, dtype=float)
    if un.shape != roof.theta.shape:
        raise ValueError("need one normal velocity per lower edge")
    metric = np.sqrt(roof.edge_slope() ** 2 + 1.0)
    theta = roof.theta - dt * metric * un
    # exact no-op where the edge velocity vanishes
    theta = np.where(un == 0.0, roof.theta, theta)
    return CavityRoof(roof.x, theta)


def clip_to_bed(roof, bed):
    """Lift any node below the bed onto it, writing the bed value exactly."""
    b = bed(roof.x)
    theta = np.where(roof.theta < b, b, roof.theta)
    return CavityRoof(roof.x, theta)


def cavity_volume(roof, bed):
    """Trapezoidal area between roof and bed over one period."""
    gap = roof.theta - bed(roof.x)
    dx = roof.edge_dx()
    return float(np.sum(0.5 * (gap + np.roll(gap, 1)) * dx))


@dataclass(frozen=True)
class CavityEndpoints:
    x_detach: float
    x_reattach: float
    n_cavities: int


def _detached_runs(detached):
    """Maximal cyclic runs of detached edges as ``(start, length)``."""
    n = detached.size
    if detached.all():
        return [(0, n)]
    start0 = int(np.argmin(detached))  # an attached edge to anchor the scan
    runs = []
    k = 0
    while k < n:
        i = (start0 + k) % n
        if detached[i]:
            s = i
            length = 0
            while k < n and detached[(start0 + k) % n]:
                length += 1
                k += 1
            runs.append((s, length))
        else:
            k += 1
    return runs


def cavity_endpoints(roof, bed):
    """Detachment and reattachment x-coordinates of the largest cavity, or None.

    Detachment is the last attached node before the detached run, reattachment
    the first attached node after it. Coordinates are reported on the half-open
    period ``(0, 1]`` so the bed crest at ``x = 0`` reads as ``1.0``.
    """
    detached = ~classify_edges(roof, bed)
    if not detached.any():
        return None
    runs = _detached_runs(detached)
    start, length = max(runs, key=lambda r: r[1])
    n = roof.n_e
    x_left = roof.x[(start - 1) % n]
    x_right = roof.x[(start + length) % n]
    fold = lambda x: PERIOD if x == 0.0 else float(x)  # noqa: E731
    if len(runs) > 1:
        log.info("roof has %d disjoint cavities; reporting the longest", len(runs))
    return CavityEndpoints(fold(x_left), fold(x_right), len(runs))


def cfl_number(roof, un_edges, dt):
    """``max|un| dt / min(dx)``; the driver warns above 0.5."""
    return float(np.max(np.abs(un_edges)) * dt / np.min(roof.edge_dx()))


def check_cfl(roof, un_edges, dt, limit=0.5):
    cfl = cfl_number(roof, un_edges, dt)
    if cfl > limit:
        log.warning("CFL monitor: max|u_n| dt / dx = %.3g exceeds %.2g", cfl, limit)
        return False
    return True
