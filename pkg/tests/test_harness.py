"""Experiment harness: configs, registry, runners, reports."""

import json

import numpy as np
import pytest

from fracsig.harness import (
    ExperimentConfig,
    Report,
    build_problem,
    convergence_study,
    format_float,
    rows_to_csv,
    run,
    run_many,
)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(family="exotic")
    with pytest.raises(ValueError):
        ExperimentConfig(family="random_smooth", obstacle="spiky")
    with pytest.raises(ValueError):
        ExperimentConfig(family="stationary_profile", s=1.5)


def test_config_roundtrip_and_digest():
    c = ExperimentConfig(family="stationary_profile", nx=64, ny=32)
    again = ExperimentConfig.from_json(c.to_json())
    assert again == c
    assert again.digest() == c.digest()
    other = ExperimentConfig(family="stationary_profile", nx=64, ny=32, seed=1)
    assert other.digest() != c.digest()
    assert c.gamma == 0.0
    with pytest.raises(ValueError):
        ExperimentConfig.from_json("[1, 2]")


def test_refined_scales_mesh_and_step():
    c = ExperimentConfig(family="caloric_quadratic", nx=32, ny=16, nsteps=8, dt=0.25)
    f = c.refined()
    assert (f.nx, f.ny, f.nsteps) == (64, 32, 16)
    assert f.dt == 0.125


def test_stationary_run_metrics():
    c = ExperimentConfig(family="stationary_profile", nx=64, ny=32, nsteps=10)
    res = run(c)
    m = res.metrics
    assert m["error_sup"] < 5e-4
    assert m["complementarity"]["gap"] <= 1e-12
    assert m["complementarity"]["product"] <= 1e-8
    assert m["total_sweeps"] > 0
    assert res.digest == c.digest()


def test_flux_calibrator_trace_metric():
    c = ExperimentConfig(family="flux_calibrator", s=0.25, nx=48, ny=24, nsteps=1)
    res = run(c)
    assert res.metrics["error_sup"] is None
    assert res.metrics["flux_trace_error"] < 1e-11


def test_uncompensated_traveling_has_no_reference():
    c = ExperimentConfig(
        family="traveling_profile", compensated=False, nx=48, ny=24, nsteps=3
    )
    res = run(c)
    assert res.metrics["error_sup"] is None


def test_random_smooth_seeding():
    base = ExperimentConfig(family="random_smooth", nx=48, ny=24, nsteps=4)
    a = run(base)
    b = run(base)
    assert np.array_equal(a.trajectory.values, b.trajectory.values)
    c = run(ExperimentConfig(family="random_smooth", nx=48, ny=24, nsteps=4, seed=5))
    assert not np.array_equal(a.trajectory.values, c.trajectory.values)


def test_decaying_paraboloid_obstacle_builds():
    c = ExperimentConfig(
        family="random_smooth", obstacle="decaying_paraboloid",
        obstacle_level=0.3, nx=48, ny=24, nsteps=4,
    )
    res = run(c)
    psi0 = 0.3 * (1.0 - res.trajectory.grid.x_nodes**2)
    gap = psi0 - res.trajectory.values[0, :, 0]
    assert gap.max() <= 1e-12  # seed was projected onto the obstacle


def test_run_many_matches_serial_and_orders_results():
    configs = [
        ExperimentConfig(family="random_smooth", nx=32, ny=16, nsteps=3, seed=k)
        for k in range(3)
    ]
    threaded = run_many(configs, workers=3)
    serial = run_many(configs, workers=1)
    for a, b in zip(threaded, serial):
        assert a.config == b.config
        assert np.array_equal(a.trajectory.values, b.trajectory.values)
    with pytest.raises(ValueError):
        run_many(configs, workers=0)


def test_convergence_study_caloric():
    base = ExperimentConfig(
        family="caloric_quadratic", s=0.75, nx=32, ny=16,
        nsteps=8, dt=0.03125, tol=1e-11,
    )
    study = convergence_study(base, levels=2)
    assert study.errors[0] > study.errors[1]
    assert study.min_order() > 1.7
    with pytest.raises(ValueError):
        convergence_study(base, levels=1)
    with pytest.raises(ValueError):
        convergence_study(
            ExperimentConfig(family="random_smooth", nx=32, ny=16, nsteps=2),
            levels=2,
        )


def test_build_problem_exact_references():
    _, _, exact = build_problem(
        ExperimentConfig(family="caloric_quadratic", s=0.75, nx=16, ny=8)
    )
    assert exact(2.0, 0.0, 0.0) == 4.0
    _, _, none = build_problem(
        ExperimentConfig(family="random_smooth", nx=16, ny=8)
    )
    assert none is None


def test_report_blocking_and_rendering():
    rep = Report()
    rep.add("C1", "identity", True, 1e-13, "<= 1e-12")
    rep.add("C9", "advisory", False, 0.3, "recorded", blocking=False)
    assert rep.all_pass
    text = rep.render()
    assert "PASS C1" in text and "WARN C9" in text and "ACCEPT" in text
    rep.add("C2", "exactness", False, 1.0, "<= 1e-11")
    assert not rep.all_pass
    assert "REJECT" in rep.render()
    payload = json.loads(rep.to_json())
    assert payload["all_pass"] is False
    assert len(payload["lines"]) == 3


def test_deterministic_csv_and_floats():
    assert format_float(0.1) == "0.1"
    text = rows_to_csv([["row", 1.0 / 3.0, 7]], ["name", "value", "count"])
    assert text == "name,value,count\nrow,0.3333333333333333,7\n"
