import json

import numpy as np
import pytest

from viscontact import discretization as fe
from viscontact.contact_solver import (SolverParams, complementarity_residual, solve_contact_stokes)
from viscontact.errors import ConfigError, NonconvergenceError, NullSpaceError
from viscontact.geometry import CavityRoof, build_reference_mesh, classify_edges, deform_mesh
from viscontact.rheology import GlenRheology
from viscontact.scenarios import basal_quantities

from conftest import make_mesh

NEWTON = GlenRheology(0.5, 1.0)


def contact_violation(sol):
    un = sol.gamma[sol.attached]
    return max(np.max(sol.lam), np.max(un), np.max(np.abs(sol.lam * un)))


def test_complementarity_examples():
    assert complementarity_residual([-1.0], [0.0])[0] == 0.0
    assert complementarity_residual([0.0], [-0.5])[0] == 0.0
    assert complementarity_residual([0.0], [0.5])[0] == 0.5
    assert complementarity_residual([-1.0], [0.2], c=10.0)[0] == 2.0
    with pytest.raises(ValueError):
        complementarity_residual([0.0, 1.0], [0.0])


def test_params_validation():
    with pytest.raises(ConfigError):
        SolverParams(c=0.0)
    with pytest.raises(ConfigError):
        SolverParams(max_iter=0)


def test_flat_bed_rigid_translation():
    mesh, spaces, bed, roof = make_mesh(8, 2, r=0.0)
    sol = solve_contact_stokes(mesh, spaces, classify_edges(roof, bed), NEWTON, 0.3, u_i=1.0)
    np.testing.assert_allclose(sol.u[0::2], 1.0, atol=1e-12)
    np.testing.assert_allclose(sol.u[1::2], 0.0, atol=1e-12)
    np.testing.assert_allclose(sol.lam, -0.3, atol=1e-12)
    tau_b, u_b = basal_quantities(sol, mesh, spaces)
    assert tau_b == pytest.approx(0.0, abs=1e-12)
    assert u_b == pytest.approx(1.0, abs=1e-12)
    # Dirichlet values hold exactly
    assert np.all(sol.u[spaces.dirichlet_dofs] == 1.0)


@pytest.mark.parametrize("n", [1.0, 3.0])
def test_contact_conditions_and_mass(n):
    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    sol = solve_contact_stokes(mesh, spaces, classify_edges(roof, bed), GlenRheology(0.5, n), 0.3, u_i=1.0)
    assert contact_violation(sol) <= 1e-8
    B = fe.assemble_divergence(mesh, spaces)
    assert np.max(np.abs(B.T @ sol.u)) <= 1e-9
    # part of the bed wants to separate at this low effective pressure
    assert not sol.active.all()


def test_high_pressure_keeps_full_contact():
    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    sol = solve_contact_stokes(mesh, spaces, classify_edges(roof, bed), NEWTON, 5.0, u_i=1.0)
    assert sol.active.all()
    assert np.all(sol.lam < 0)


def test_neumann_force_balance():
    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    sol = solve_contact_stokes(mesh, spaces, classify_edges(roof, bed), NEWTON, 2.0, tau_b=0.02)
    tau_b, _ = basal_quantities(sol, mesh, spaces)
    assert abs(tau_b - 0.02) <= 1e-8


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_solution_independent_of_c(c):
    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    att = classify_edges(roof, bed)
    ref = solve_contact_stokes(mesh, spaces, att, NEWTON, 0.3, u_i=1.0)
    other = solve_contact_stokes(mesh, spaces, att, NEWTON, 0.3, u_i=1.0, params=SolverParams(c=c))
    assert np.max(np.abs(other.u - ref.u)) <= 1e-8
    assert np.max(np.abs(other.lam - ref.lam)) <= 1e-8


def test_water_pressure_form_shifts_pressure_only():
    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    att = classify_edges(roof, bed)
    a = solve_contact_stokes(mesh, spaces, att, NEWTON, 0.3, u_i=1.0)
    b = solve_contact_stokes(mesh, spaces, att, NEWTON, 0.3, u_i=1.0, p_w=1.0)
    np.testing.assert_allclose(b.u, a.u, atol=1e-10)
    np.testing.assert_allclose(b.lam, a.lam, atol=1e-10)
    np.testing.assert_allclose(b.p - a.p, 1.0, atol=1e-9)


def test_detached_edges_carry_no_multiplier():
    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    theta = roof.theta.copy()
    theta[3:7] += 0.002
    roof2 = CavityRoof(roof.x, theta)
    mesh2 = deform_mesh(build_reference_mesh(16, 3, 1.0, 1.5), roof2)
    att = classify_edges(roof2, bed)
    sol = solve_contact_stokes(mesh2, spaces, att, NEWTON, 0.3, u_i=1.0)
    assert sol.lam.size == att.sum() == 12
    assert np.all(sol.lam_edges[~att] == 0.0)
    assert not sol.active_edges[~att].any()


def test_warm_start_converges_immediately():
    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    att = classify_edges(roof, bed)
    rheo = GlenRheology(0.5, 3.0)
    first = solve_contact_stokes(mesh, spaces, att, rheo, 0.5, u_i=1.0)
    again = solve_contact_stokes(mesh, spaces, att, rheo, 0.5, u_i=1.0, initial=first)
    assert again.iterations <= 2
    np.testing.assert_allclose(again.u, first.u, atol=1e-9)


def test_bc_mode_exclusive():
    mesh, spaces, bed, roof = make_mesh(8, 2)
    att = classify_edges(roof, bed)
    with pytest.raises(ConfigError):
        solve_contact_stokes(mesh, spaces, att, NEWTON, 0.3)
    with pytest.raises(ConfigError):
        solve_contact_stokes(mesh, spaces, att, NEWTON, 0.3, u_i=1.0, tau_b=0.1)


def test_null_space_detection():
    mesh, spaces, bed, roof = make_mesh(8, 2, r=0.0)
    with pytest.raises(NullSpaceError):
        solve_contact_stokes(mesh, spaces, np.zeros(8, dtype=bool), NEWTON, 0.3, u_i=1.0)
    with pytest.raises(NullSpaceError):
        solve_contact_stokes(mesh, spaces, np.ones(8, dtype=bool), NEWTON, 0.3, tau_b=0.1)


def test_iteration_log_and_nonconvergence(tmp_path):
    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    att = classify_edges(roof, bed)
    log_path = tmp_path / "newton.jsonl"
    with open(log_path, "w") as fh:
        sol = solve_contact_stokes(mesh, spaces, att, NEWTON, 0.3, u_i=1.0, logfile=fh)
    records = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert len(records) == sol.iterations
    assert records[-1]["changed"] == 0
    with pytest.raises(NonconvergenceError) as info:
        solve_contact_stokes(mesh, spaces, att, GlenRheology(0.5, 3.0), 0.3, u_i=1.0,
                             params=SolverParams(max_iter=1, continuation=False))
    assert len(info.value.history) == 1


def test_large_pressure_jump_is_bridged(monkeypatch):
    import viscontact.contact_solver as cs

    real = cs._solve
    calls = []

    def picky(mesh, spaces, attached, rheo, N, *, initial=None, **kw):
        calls.append(N)
        if initial is not None and not abs(initial.N - N) <= 0.3:
            raise NonconvergenceError("jump too large", [])
        return real(mesh, spaces, attached, rheo, N, initial=initial, **kw)

    mesh, spaces, bed, roof = make_mesh(16, 3, r=0.01)
    att = classify_edges(roof, bed)
    start = solve_contact_stokes(mesh, spaces, att, NEWTON, 1.9, u_i=1.0)
    assert start.N == 1.9
    monkeypatch.setattr(cs, "_solve", picky)
    sol = solve_contact_stokes(mesh, spaces, att, NEWTON, 1.1, u_i=1.0, initial=start)
    assert sol.N == 1.1
    assert calls[0] == 1.1 and 1.5 in calls
    direct = real(mesh, spaces, att, NEWTON, 1.1, u_i=1.0)
    assert np.max(np.abs(sol.u - direct.u)) <= 1e-8
    # without a recorded pressure there is nothing to bridge from
    start.N = float("nan")
    with pytest.raises(NonconvergenceError):
        solve_contact_stokes(mesh, spaces, att, NEWTON, 1.1, u_i=1.0, initial=start)
