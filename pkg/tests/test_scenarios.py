import math
from dataclasses import replace

import numpy as np
import pytest

from viscontact import scenarios as sc
from viscontact.errors import ConfigError, NonconvergenceError, NumericError
from viscontact.scenarios import ScenarioConfig, StepRecord, SweepPoint, TimeSeries

CAVITY_16 = ScenarioConfig(r=0.01, n=1, A=0.5, N=0.3, u_i=1.0, n_e=16, n_layers=3, grading=2.0, dt=0.01)


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(mode="both")
    with pytest.raises(ConfigError):
        ScenarioConfig(dt=0.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(r=1.5)
    assert ScenarioConfig().bc() == {"u_i": 1.0}
    assert ScenarioConfig(mode="neumann", tau_b=0.2).bc() == {"tau_b": 0.2}


def test_time_series_strictly_increasing(tmp_path):
    ts = TimeSeries()
    ts.append(StepRecord(0.0, 0.3, 0.01, 1.0, 0.0, math.nan, math.nan, 2))
    with pytest.raises(ValueError):
        ts.append(StepRecord(0.0, 0.3, 0.01, 1.0, 0.0, math.nan, math.nan, 2))
    ts.append(StepRecord(0.1, 0.3, 0.01, 1.0, 0.0, 0.5, 0.7, 2))
    path = tmp_path / "s.csv"
    ts.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,N,tau_b,u_b,V,x_detach,x_reattach"
    assert lines[1].endswith("nan,nan") and len(lines) == 3


def test_flat_bed_is_fixed_point():
    cfg = replace(CAVITY_16, r=0.0)
    sim = sc.CavitySimulation(cfg)
    theta0 = sim.roof.theta.copy()
    rec = sim.step()
    assert np.array_equal(sim.roof.theta, theta0)
    assert rec.tau_b == pytest.approx(0.0, abs=1e-12)
    assert rec.u_b == pytest.approx(1.0, abs=1e-12)
    res = sc.run_steady(cfg)
    assert res.steps == 1 and res.converged and res.V == 0.0 and res.endpoints is None


def test_cavity_opens_downstream_of_crest():
    sim = sc.CavitySimulation(CAVITY_16)
    for _ in range(5):
        sim.step()
    detached = ~sc.classify_edges(sim.roof, sim.bed)
    assert detached.any()
    # the cavity starts just behind the crest at x = 0 and never reaches the stoss face
    x = sim.roof.x[detached]
    assert x.min() <= 1 / 16 and x.max() < 0.75
    assert sc.cavity_volume(sim.roof, sim.bed) > 0


def test_steady_records_are_consistent():
    res = sc.run_steady(CAVITY_16)
    assert res.converged
    V = res.series.column("V")
    assert np.all(V >= 0)
    assert np.all(np.diff(res.series.column("t")) > 0)
    assert res.series.records[-1].tau_b == res.tau_b


def test_nonconvergent_steady_reports_partial_series():
    cfg = replace(CAVITY_16, t_end=0.05)
    with pytest.raises(NonconvergenceError) as info:
        sc.run_steady(cfg)
    assert len(info.value.result.series) == 5
    res = sc.run_steady(cfg, raise_on_failure=False)
    assert not res.converged


def test_solver_failure_keeps_partial_series(monkeypatch):
    calls = {"n": 0}
    real = sc.solve_contact_stokes

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 4:
            raise NumericError("injected")
        return real(*args, **kwargs)

    monkeypatch.setattr(sc, "solve_contact_stokes", flaky)
    with pytest.raises(NumericError) as info:
        sc.run_steady(CAVITY_16)
    assert len(info.value.result.series) == 3


def test_fit_c0_recovers_known_slope():
    n, r, A = 3.0, 0.01, 0.5
    c0 = 0.35
    alpha = (2 * np.pi) ** (n + 2) / (2 * c0)
    pts = []
    for N in (2.0, 3.0, 4.0):
        u_b = 0.9
        x = r / A * u_b / N ** n
        tau_b = r * N * (alpha * x) ** (1 / n)
        pts.append(SweepPoint(N, u_b, tau_b, 0, 0, 0.0, math.nan, math.nan, True))
    assert sc.fit_c0(pts, n, r, A) == pytest.approx(c0, rel=1e-12)
    cavitated = [replace(p, V=1e-3) for p in pts]
    with pytest.raises(ConfigError):
        sc.fit_c0(cavitated + pts[:1], n, r, A)


def test_sweep_descends_and_flags_failures(monkeypatch):
    real = sc.run_steady
    seen = []

    def wrapped(cfg, **kwargs):
        seen.append(cfg.N)
        if cfg.N == 2.0:
            raise NumericError("injected")
        return real(cfg, **kwargs)

    monkeypatch.setattr(sc, "run_steady", wrapped)
    pts = sc.sweep_sliding_law(replace(CAVITY_16, n_e=8, n_layers=2), [2.0, 5.0, 3.0])
    assert seen == [5.0, 3.0, 2.0]
    assert [p.converged for p in pts] == [True, True, False]
    assert pts[0].tau_scaled == pytest.approx(pts[0].tau_b / (0.01 * 5.0))
    with pytest.raises(ConfigError):
        sc.sweep_sliding_law(replace(CAVITY_16, mode="neumann"), [1.0])
    with pytest.raises(ConfigError):
        sc.sweep_sliding_law(CAVITY_16, [])


def test_unsteady_without_forcing_preserves_steady_state():
    cfg = replace(CAVITY_16, N=0.5, steady_threshold=1e-7, t_end=40.0)
    init = sc.run_steady(cfg)
    res = sc.run_unsteady(cfg, N0=0.5, amplitude=0.0, t_end=5.0, initial=init)
    u_b, V = res.series.column("u_b"), res.series.column("V")
    assert res.tau_b0 == init.tau_b
    assert np.ptp(u_b) <= 1e-3 * abs(u_b[0])
    assert np.ptp(V) <= 1e-3 * V[0]
    np.testing.assert_allclose(res.series.column("tau_b"), init.tau_b, atol=1e-8)


def test_oscillating_pressure_schedule():
    sim = sc._OscillatingSimulation(CAVITY_16, 2.0, 0.1, 0.4)
    assert sim.effective_pressure(0.0) == 2.0
    assert sim.effective_pressure(0.625) == pytest.approx(2.2)
    assert sim.effective_pressure(1.875) == pytest.approx(1.8)
    with pytest.raises(ConfigError):
        sc.run_unsteady(CAVITY_16, N0=0.0)
