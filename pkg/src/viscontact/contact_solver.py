"""Semi-smooth Newton (primal-dual active set) solver for the contact Stokes system.

Unknowns are the velocity ``u``, cell pressures ``p`` and one multiplier per
attached lower edge ``lam`` (normal stress plus water pressure). Contact is
encoded by the nonsmooth equation ``lam + max(0, -lam + c * gamma_n(u)) = 0``.
"""
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import discretization as fe
from .errors import ConfigError, NonconvergenceError, NullSpaceError
from .linalg import factorize
from .rheology import GlenRheology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverParams:
    c: float = 1.0
    newton_tol: float = 1e-10
    max_iter: int = 50
    continuation: bool = True
    max_halvings: int = 8
    abs_floor: float = 1e-12
    stall_tol: float = 1e-8

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"complementarity scaling c must be positive, got {self.c}")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")


@dataclass
class MixedSolution:
    """Converged fields. Edge-indexed arrays cover every lower edge."""

    u: np.ndarray
    p: np.ndarray
    lam: np.ndarray          # on attached edges, length N_mu
    attached: np.ndarray     # bool, per lower edge
    active: np.ndarray       # bool, per attached edge
    gamma: np.ndarray        # average normal velocity, per lower edge
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    N: float = math.nan      # effective pressure the solution belongs to

    @property
    def lam_edges(self):
        out = np.zeros(self.attached.size)
        out[self.attached] = self.lam
        return out

    @property
    def active_edges(self):
        out = np.zeros(self.attached.size, dtype=bool)
        out[self.attached] = self.active
        return out


def complementarity_residual(lam, un, c=1.0):
    """``lam + max(0, -lam + c un)``, zero exactly where the discrete contact conditions hold."""
    lam = np.asarray(lam, dtype=float)
    un = np.asarray(un, dtype=float)
    if lam.shape != un.shape:
        raise ValueError("lam and un must have equal length")
    return lam + np.maximum(0.0, -lam + c * un)


def _active_from(lam, un, c):
    return (-lam + c * un) > 0.0


class _System:
    """Operators that stay fixed during one contact solve."""

    def __init__(self, mesh, spaces, attached, N, u_i, tau_b, p_w):
        self.mesh, self.spaces = mesh, spaces
        self.attached = np.asarray(attached, dtype=bool)
        self.att_idx = np.nonzero(self.attached)[0]
        self.B = fe.assemble_divergence(mesh, spaces)
        self.D_all = fe.lower_edge_integrals(mesh, spaces)
        _, _, self.length, self.normal = mesh.lower_edge_geometry()
        self.D = self.D_all.tocsc()[:, self.att_idx].tocsr()
        self.f = fe.assemble_load(mesh, spaces, N, tau_b=tau_b, p_w=p_w)
        nv = spaces.N_v
        self.fixed = np.zeros(nv, dtype=bool)
        if u_i is not None:
            ops = fe.apply_dirichlet(fe.DiscreteOperators(self.B, self.D, self.f, {}), spaces, u_i)
            self.f = ops.f
            self.fixed[list(ops.constraints)] = True
        self.free = np.nonzero(~self.fixed)[0]
        self.DT_free = self.D.T.tocsr()

    def gamma_all(self, u):
        return (self.D_all.T @ u) / self.length

    def gamma(self, u):
        return (self.D.T @ u) / self.length[self.att_idx]

    def residuals(self, rheo, u, p, lam, c):
        ra = fe.assemble_residual_A(self.mesh, self.spaces, rheo, u) - self.B @ p - self.D @ lam - self.f
        ra = ra[self.free]
        rb = self.B.T @ u
        rc = complementarity_residual(lam, self.gamma(u), c)
        return ra, rb, rc


def _check_rigid_modes(sysm, neumann):
    if sysm.att_idx.size == 0:
        raise NullSpaceError("no attached edges: rigid vertical translation is unconstrained")
    if neumann:
        nx = sysm.normal[sysm.att_idx, 0]
        if np.ptp(nx) <= 1e-14:
            raise NullSpaceError("attached edges share one normal: horizontal translation is unconstrained")


def solve_contact_stokes(mesh, spaces, attached, rheo, N, *, u_i=None, tau_b=None,
                         params=SolverParams(), initial=None, p_w=None, logfile=None):
    """Solve the discrete contact Stokes problem on a fixed geometry.

    Exactly one of ``u_i`` (Dirichlet top speed) or ``tau_b`` (Neumann top
    shear) must be given. ``initial`` may be a previous :class:`MixedSolution`
    on the same topology; its multipliers are remapped to the current
    attached set. ``logfile``, if given, receives one JSON record per iteration.

    If a warm start from a different effective pressure fails, the gap in
    ``N`` is bisected and crossed in smaller warm-started steps.
    """
    kw = dict(u_i=u_i, tau_b=tau_b, params=params, p_w=p_w, logfile=logfile)
    return _solve_bridged(mesh, spaces, attached, rheo, N, initial, kw, _MAX_BISECTIONS)


_MAX_BISECTIONS = 4


def _solve_bridged(mesh, spaces, attached, rheo, N, initial, kw, depth):
    try:
        return _solve(mesh, spaces, attached, rheo, N, initial=initial, **kw)
    except NonconvergenceError:
        N0 = math.nan if initial is None else initial.N
        if depth == 0 or not math.isfinite(N0) or N0 == N:
            raise
    mid = 0.5 * (N0 + N)
    log.info("bridging effective pressure %g -> %g through %g", N0, N, mid)
    half = _solve_bridged(mesh, spaces, attached, rheo, mid, initial, kw, depth - 1)
    return _solve_bridged(mesh, spaces, attached, rheo, N, half, kw, depth - 1)


def _solve(mesh, spaces, attached, rheo, N, *, u_i=None, tau_b=None,
           params=SolverParams(), initial=None, p_w=None, logfile=None):
    if (u_i is None) == (tau_b is None):
        raise ConfigError("give exactly one of u_i (Dirichlet) or tau_b (Neumann)")
    sysm = _System(mesh, spaces, attached, N, u_i, tau_b, p_w)
    _check_rigid_modes(sysm, neumann=tau_b is not None)

    if initial is None and params.continuation and rheo.n != 1:
        linear = GlenRheology(rheo.A, 1.0, rheo.delta_reg)
        initial = _solve(mesh, spaces, attached, linear, N, u_i=u_i, tau_b=tau_b,
                         params=params, p_w=p_w, logfile=logfile)

    nv, nq, nm = spaces.N_v, spaces.N_q, sysm.att_idx.size
    if initial is not None:
        u = initial.u.copy()
        p = initial.p.copy()
        lam = initial.lam_edges[sysm.att_idx]
        prev_att = initial.attached[sysm.att_idx]
        active = np.where(prev_att, initial.active_edges[sysm.att_idx], True)
    else:
        u = np.zeros(nv)
        p = np.zeros(nq)
        lam = np.zeros(nm)
        active = np.ones(nm, dtype=bool)
    if u_i is not None:
        u[sysm.fixed] = u_i

    f_norm = np.linalg.norm(sysm.f)
    c = params.c
    history = []

    def merit(state, active):
        # the contact rows are linear once the active set is frozen, so
        # backtracking only reacts to the viscous nonlinearity
        ra, rb, _ = sysm.residuals(rheo, *state, c)
        un = sysm.gamma(state[0])
        rc = np.where(active, un, state[2])
        return np.sqrt(ra @ ra + rb @ rb + rc @ rc)

    for it in range(1, params.max_iter + 1):
        J = fe.assemble_jacobian_A(mesh, spaces, rheo, u)
        Au = fe.assemble_residual_A(mesh, spaces, rheo, u)
        act_idx = np.nonzero(active)[0]
        DS = sysm.D[:, act_idx]
        free = sysm.free
        Jff = J[free][:, free]
        Bf = sysm.B[free]
        DSf = DS[free]
        K = sp.bmat([[Jff, -Bf, -DSf],
                     [-Bf.T, None, None],
                     [-DSf.T, None, None]], format="csc")
        rhs = np.concatenate([(sysm.f - Au)[free], sysm.B.T @ u, DS.T @ u])
        sol = factorize(K, step=f"newton iteration {it}").solve(rhs)
        du = np.zeros(nv)
        du[free] = sol[:free.size]
        p_new = sol[free.size:free.size + nq]
        lam_new = np.zeros(nm)
        lam_new[act_idx] = sol[free.size + nq:]

        step = 1.0
        trial = (u + du, p_new, lam_new)
        if rheo.n != 1:
            m0 = merit((u, p, lam), active)
            best = (merit(trial, active), step, trial)
            for _ in range(params.max_halvings):
                if best[0] <= m0:
                    break
                step *= 0.5
                cand = (u + step * du, p + step * (p_new - p), lam + step * (lam_new - lam))
                m = merit(cand, active)
                if m < best[0]:
                    best = (m, step, cand)
            _, step, trial = best
        res = sysm.residuals(rheo, *trial, c)
        u, p, lam = trial
        new_active = _active_from(lam, sysm.gamma(u), c)
        changed = int(np.count_nonzero(new_active != active))
        norms = {"a": float(np.linalg.norm(res[0])), "b": float(np.linalg.norm(res[1])),
                 "c": float(np.linalg.norm(res[2]))}
        record = {"iter": it, "step": step, "active": int(new_active.sum()),
                  "changed": changed, **{f"res_{k}": v for k, v in norms.items()}}
        # relative to the largest term in the momentum balance
        scale = max(f_norm, np.linalg.norm(sysm.B @ p), np.linalg.norm(sysm.D @ lam))
        tol = max(params.newton_tol * scale, params.abs_floor)
        record["tol"] = float(tol)
        history.append(record)
        worst = max(norms.values())
        # roundoff floor: fixed active set, small residual, no progress for three iterations
        stalled = (changed == 0 and len(history) > 3 and worst <= params.stall_tol * scale
                   and worst > 0.5 * max(max(h["res_a"], h["res_b"], h["res_c"]) for h in history[-4:-1]))
        record["stalled"] = bool(stalled and worst > tol)
        if logfile is not None:
            logfile.write(json.dumps(record) + "\n")
        log.debug("newton %s", record)
        if changed == 0 and (worst <= tol or stalled):
            return MixedSolution(u, p, lam, sysm.attached.copy(), new_active,
                                 sysm.gamma_all(u), it, norms, history, float(N))
        active = new_active
    raise NonconvergenceError(
        f"contact solve did not converge in {params.max_iter} iterations "
        f"(last residuals {history[-1]})", history)

