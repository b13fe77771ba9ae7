"""Time loop for the coupled contact-Stokes / roof-advection problem and the
experiment drivers built on it: steady cavities, sliding-law sweeps with a
``c0`` fit, and oscillating effective pressure runs.
"""
import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import discretization as fe
from .contact_solver import SolverParams, solve_contact_stokes
from .errors import ConfigError, NonconvergenceError, ViscontactError
from .geometry import BedProfile, CavityRoof, build_reference_mesh, classify_edges, deform_mesh
from .rheology import GlenRheology
from .surface import advect_roof, cavity_endpoints, cavity_volume, check_cfl, clip_to_bed

log = logging.getLogger(__name__)

L = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Nondimensional run parameters (lengths scaled by the bed wavelength)."""

    r: float = 0.01
    n: float = 1.0
    A: float = 0.5
    delta_reg: float = 1e-10
    H: float = 1.0
    n_e: int = 64
    n_layers: int = 8
    grading: float = 1.2
    N: float = 0.3
    mode: str = "dirichlet"
    u_i: float = 1.0
    tau_b: float = 0.0
    dt: float = 0.01
    t_end: float = 50.0
    t_spinup: float = 50.0
    steady_threshold: float = 1e-4
    solver: SolverParams = field(default_factory=SolverParams)
    output_every: int = 1
    N_list: tuple = ()
    N0: float = 0.0
    amplitude: float = 0.1
    frequency: float = 0.4

    def __post_init__(self):
        if self.mode not in ("dirichlet", "neumann"):
            raise ConfigError(f"bc mode must be 'dirichlet' or 'neumann', got {self.mode!r}")
        for name in ("A", "H", "dt", "t_end", "t_spinup", "steady_threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.r < 0 or self.N < 0:
            raise ConfigError("bed amplitude and effective pressure must be nonnegative")
        if self.r >= self.H:
            raise ConfigError("bed amplitude must be below the domain height")

    @property
    def rheology(self):
        return GlenRheology(self.A, self.n, self.delta_reg)

    @property
    def bed(self):
        return BedProfile(self.r)

    def bc(self):
        return {"u_i": self.u_i} if self.mode == "dirichlet" else {"tau_b": self.tau_b}


@dataclass
class StepRecord:
    t: float
    N: float
    tau_b: float
    u_b: float
    V: float
    x_detach: float
    x_reattach: float
    newton_iters: int


@dataclass
class TimeSeries:
    records: list = field(default_factory=list)

    def append(self, rec):
        if self.records and not rec.t > self.records[-1].t:
            raise ValueError("time series must be strictly increasing in t")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self, path):
        cols = ["t", "N", "tau_b", "u_b", "V", "x_detach", "x_reattach"]
        write_csv(path, cols, [[getattr(r, c) for c in cols] for r in self.records])


def write_csv(path, header, rows):
    def fmt(v):
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        v = float(v)
        return "nan" if math.isnan(v) else f"{v:.15g}"

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def basal_quantities(solution, mesh, spaces):
    """Basal shear stress from the multipliers and arc-length-mean sliding speed."""
    _, _, length, normal = mesh.lower_edge_geometry()
    att = solution.attached
    tau_b = -float(np.sum(solution.lam * normal[att, 0] * length[att])) / L
    t, w = fe._GAUSS3
    phi = fe.edge_p2_values(t)
    ux = solution.u[0::2][spaces.lower_nodes]
    u_b = float(np.sum((ux @ phi.T) @ w * length)) / L
    return tau_b, u_b


def multiplier_profile(solution, mesh):
    """Edge midpoints and multiplier values on attached edges."""
    a, b, _, _ = mesh.lower_edge_geometry()
    mid = 0.5 * (a[:, 0] + b[:, 0])
    att = solution.attached
    return mid[att], solution.lam


def advection_velocities(solution):
    """Edge normal velocities for the roof update.

    Active contact edges carry ``gamma_n u = 0`` by construction; the solver
    only reproduces that to roundoff, so the exact zero is written back.
    """
    un = solution.gamma.copy()
    un[solution.active_edges] = 0.0
    return un


class CavitySimulation:
    """Mutable state of one run: roof, deformed mesh, last solution, time."""

    def __init__(self, config, roof=None, solution=None, t=0.0):
        self.config = config
        self.bed = config.bed
        self.rheo = config.rheology
        self.reference = build_reference_mesh(config.n_e, config.n_layers, config.H, config.grading)
        self.spaces = fe.build_spaces(self.reference)
        self.roof = roof.copy() if roof is not None else CavityRoof.attached(self.bed, config.n_e)
        self.roof = clip_to_bed(self.roof, self.bed)
        self.mesh = deform_mesh(self.reference, self.roof, config.H)
        self.solution = solution
        self.t = float(t)
        self.last_rate = math.inf
        self.steps = 0

    def effective_pressure(self, t):
        return self.config.N

    def solve(self, N=None, **bc):
        bc = bc or self.config.bc()
        N = self.effective_pressure(self.t) if N is None else N
        attached = classify_edges(self.roof, self.bed)
        self.solution = solve_contact_stokes(self.mesh, self.spaces, attached, self.rheo, N,
                                             params=self.config.solver, initial=self.solution, **bc)
        return self.solution

    def record(self, N):
        tau_b, u_b = basal_quantities(self.solution, self.mesh, self.spaces)
        ends = cavity_endpoints(self.roof, self.bed)
        xd, xr = (ends.x_detach, ends.x_reattach) if ends else (math.nan, math.nan)
        return StepRecord(self.t, N, tau_b, u_b, cavity_volume(self.roof, self.bed), xd, xr,
                          self.solution.iterations)

    def step(self, **bc):
        """Classify edges, solve, advect, clip and deform; return the record at the old time."""
        dt = self.config.dt
        N = self.effective_pressure(self.t)
        self.solve(N, **bc)
        rec = self.record(N)
        un = advection_velocities(self.solution)
        check_cfl(self.roof, un, dt)
        new_roof = clip_to_bed(advect_roof(self.roof, self.bed, un, dt), self.bed)
        self.last_rate = float(np.max(np.abs(new_roof.theta - self.roof.theta))) / dt
        self.roof = new_roof
        self.mesh = deform_mesh(self.reference, self.roof, self.config.H)
        self.t += dt
        self.steps += 1
        return rec


def step(sim, **bc):
    return sim.step(**bc)


@dataclass
class SteadyResult:
    solution: object
    roof: CavityRoof
    mesh: object
    spaces: object
    tau_b: float
    u_b: float
    V: float
    endpoints: object
    steps: int
    converged: bool
    series: TimeSeries


def run_steady(config, roof=None, solution=None, raise_on_failure=True):
    """Iterate the time loop until ``max|d theta/dt|`` drops below the threshold.

    The returned solution, roof and mesh all belong to the last solved state.
    """
    sim = CavitySimulation(config, roof=roof, solution=solution)
    series = TimeSeries()
    converged = False
    rec = None
    try:
        while sim.t < config.t_end - 1e-12:
            roof_k, mesh_k = sim.roof, sim.mesh
            rec = sim.step()
            if sim.steps % config.output_every == 0:
                series.append(rec)
            if sim.last_rate < config.steady_threshold:
                converged = True
                break
    except ViscontactError as exc:
        exc.result = _partial_steady(sim, series)
        raise
    result = SteadyResult(sim.solution, roof_k, mesh_k, sim.spaces, rec.tau_b, rec.u_b, rec.V,
                          cavity_endpoints(roof_k, sim.bed), sim.steps, converged, series)
    if not converged:
        log.warning("steady state not reached by t=%g (rate %.3g)", sim.t, sim.last_rate)
        if raise_on_failure:
            err = NonconvergenceError(
                f"no steady state by t_end={config.t_end} (last rate {sim.last_rate:.3g})", [])
            err.result = result
            raise err
    return result


def _partial_steady(sim, series):
    last = series.records[-1] if series.records else None
    nan = math.nan
    return SteadyResult(sim.solution, sim.roof, sim.mesh, sim.spaces,
                        last.tau_b if last else nan, last.u_b if last else nan,
                        last.V if last else nan, cavity_endpoints(sim.roof, sim.bed),
                        sim.steps, False, series)


@dataclass
class SweepPoint:
    N: float
    u_b: float
    tau_b: float
    u_b_scaled: float
    tau_scaled: float
    V: float
    x_detach: float
    x_reattach: float
    converged: bool


def sweep_sliding_law(config, N_list=None):
    """Steady states for each effective pressure, warm-started in descending N."""
    if config.mode != "dirichlet":
        raise ConfigError("sliding-law sweeps use the Dirichlet top condition")
    N_list = sorted(N_list if N_list is not None else config.N_list, reverse=True)
    if not N_list:
        raise ConfigError("empty list of effective pressures")
    points = []
    roof = solution = None
    for N in N_list:
        cfg = replace(config, N=float(N))
        try:
            res = run_steady(cfg, roof=roof, solution=solution, raise_on_failure=False)
        except ViscontactError as exc:
            log.warning("sweep point N=%g failed: %s", N, exc)
            points.append(SweepPoint(N, *([math.nan] * 7), False))
            continue
        roof, solution = res.roof, res.solution
        xd, xr = (res.endpoints.x_detach, res.endpoints.x_reattach) if res.endpoints else (math.nan, math.nan)
        points.append(SweepPoint(N, res.u_b, res.tau_b,
                                 res.u_b / (config.A * L * N ** config.n),
                                 res.tau_b / (config.r * N), res.V, xd, xr, res.converged))
    return points


def fit_c0(points, n, r, A):
    """Least-squares slope through the origin on uncavitated points, mapped to ``c0``."""
    pts = [p for p in points if p.converged and p.V == 0.0]
    if len(pts) < 2:
        raise ConfigError("need at least two uncavitated, converged points to fit c0")
    x = np.array([r / (A * L) * p.u_b / p.N ** n for p in pts])
    y = np.array([(p.tau_b / (r * p.N)) ** n for p in pts])
    alpha = float(x @ y / (x @ x))
    return (2 * np.pi) ** (n + 2) / (2 * alpha)


class _OscillatingSimulation(CavitySimulation):
    def __init__(self, config, N0, amplitude, frequency, **kw):
        super().__init__(config, **kw)
        self.N0, self.amplitude, self.frequency = N0, amplitude, frequency

    def effective_pressure(self, t):
        return self.N0 * (1.0 + self.amplitude * math.sin(2 * math.pi * self.frequency * t))


@dataclass
class UnsteadyResult:
    series: TimeSeries
    tau_b0: float
    initial: SteadyResult
    roof_snapshots: list


def run_unsteady(config, N0=None, amplitude=None, frequency=None, t_end=None,
                 initial=None, snapshot_every=0):
    """Oscillate ``N(t) = N0 (1 + a sin(2 pi f t))`` with the top shear held fixed.

    ``initial`` is a steady Dirichlet state at ``N0``; when not supplied it is
    computed with ``config.t_spinup`` as the time limit. Its own basal shear
    stress becomes the applied top shear.
    """
    N0 = config.N0 if N0 is None else N0
    amplitude = config.amplitude if amplitude is None else amplitude
    frequency = config.frequency if frequency is None else frequency
    t_end = config.t_end if t_end is None else t_end
    if not N0 > 0:
        raise ConfigError("unsteady runs need N0 > 0")
    if initial is None:
        initial = run_steady(replace(config, N=N0, mode="dirichlet", t_end=config.t_spinup))
    tau_b0 = initial.tau_b
    cfg = replace(config, mode="neumann", tau_b=tau_b0, N=N0)
    sim = _OscillatingSimulation(cfg, N0, amplitude, frequency, roof=initial.roof,
                                 solution=initial.solution)
    series = TimeSeries()
    snaps = []
    n_steps = int(round(t_end / cfg.dt))
    try:
        for k in range(n_steps + 1):
            if snapshot_every and k % snapshot_every == 0:
                snaps.append((sim.t, sim.roof.x.copy(), sim.roof.theta.copy()))
            rec = sim.step()
            if k % cfg.output_every == 0:
                series.append(rec)
    except ViscontactError as exc:
        exc.result = UnsteadyResult(series, tau_b0, initial, snaps)
        raise
    return UnsteadyResult(series, tau_b0, initial, snaps)


def sweep_rows(points):
    return [[p.N, p.u_b, p.tau_b, p.u_b_scaled, p.tau_scaled, p.V] for p in points]


def config_dict(config):
    d = asdict(config)
    d["N_list"] = list(config.N_list)
    return d
