import math

import numpy as np
import pytest

from dyngibbs.continuous import Trajectory
from dyngibbs.discrete import run_events
from dyngibbs.errors import ConfigError, FitError
from dyngibbs.harness import (
    CSV_HEADER,
    ErrorCurve,
    ExperimentConfig,
    coverage_and_period,
    loglog_slope,
    record_points,
    run_experiment,
    start_points,
)
from dyngibbs.targets import TableTarget, load_dataset, write_pgm


def cfg(tmp_path, name="run.csv", **kw):
    return ExperimentConfig(out=str(tmp_path / name), **kw)


# --- config -----------------------------------------------------------------------


def test_config_parsing_and_overrides():
    text = """
    # a comment
    kind = ising
    side = 6   # trailing comment
    events = 500
    sampler = gibbs
    shape = 3x5
    """
    c = ExperimentConfig.from_text(text, seed=9, sampler=None)
    assert (c.kind, c.side, c.budget, c.sampler, c.seed, c.shape) == ("ising", 6, 500, "gibbs", 9, (3, 5))
    again = ExperimentConfig.from_text(c.to_text())
    assert again == c


@pytest.mark.parametrize(
    "text",
    [
        "kind = nope",
        "sampler = hmc",
        "budget = 0",
        "replicates = 0",
        "budget = ten",
        "colour = red",
        "just a line",
        "flip_rate = 2",
        "reference = guess",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(tmp_path / "absent.cfg")


def test_record_points():
    pts = record_points(10_000)
    assert pts[0] == 1 and pts[-1] == 10_000 and np.all(np.diff(pts) > 0)
    np.testing.assert_array_equal(record_points(10, 4), [4, 8, 10])
    np.testing.assert_array_equal(record_points(1), [1])


def test_start_points_inside_grid_and_distinct():
    pts = np.array([start_points((4, 4), r) for r in range(50)])
    assert np.all(pts >= 0) and np.all(pts < 4)
    assert len({tuple(p) for p in pts.tolist()}) == 50


# --- slope and coverage -------------------------------------------------------------


def test_loglog_slope_examples():
    k = np.arange(1, 1001, dtype=float)
    assert loglog_slope((k, 1 / k)) == pytest.approx(-1.0, abs=1e-12)
    assert loglog_slope((k, 1 / np.sqrt(k))) == pytest.approx(-0.5, abs=1e-12)
    assert loglog_slope((k, np.full_like(k, 3.0))) == pytest.approx(0.0, abs=1e-12)
    assert loglog_slope((k, 1 / k), window=(10, 100)) == pytest.approx(-1.0, abs=1e-12)
    curve = ErrorCurve(k.astype(np.int64), np.stack([1 / k, 2 / k]))
    assert loglog_slope(curve) == pytest.approx(-1.0, abs=1e-12)


def test_loglog_slope_errors():
    k = np.arange(1, 10, dtype=float)
    with pytest.raises(FitError):
        loglog_slope((k, np.zeros_like(k)))
    with pytest.raises(FitError):
        loglog_slope((k, 1 / k), window=(5, 5))


def test_coverage_rational_coefficients_periodic():
    t = TableTarget(np.ones((2, 2)))
    tr = run_events(t, [1.0, 1.0], n_events=1000)
    cov, period = coverage_and_period(tr)
    assert period is not None and period < 10
    assert cov < 1.0


def test_coverage_irrational_coefficients_dense():
    t = TableTarget(np.ones((2, 2)))
    tr = run_events(t, [math.sqrt(2), math.sqrt(3)], n_events=100_000)
    cov, period = coverage_and_period(tr)
    assert cov == 1.0 and period is None


def test_coverage_single_event():
    tr = run_events(TableTarget(np.ones((2, 2))), [math.sqrt(2), math.sqrt(3)], n_events=1)
    assert coverage_and_period(tr) == (0.25, None)


def test_coverage_other_inputs():
    assert coverage_and_period([0, 1, 2] * 5, resolution=4) == (0.75, 3)
    tr = Trajectory(np.arange(4.0), np.array([[0.1, 0.1], [0.9, 0.1], [0.1, 0.9], [0.9, 0.9]]))
    cov, _ = coverage_and_period(tr, resolution=2, bounds=(0.0, 1.0))
    assert cov == 1.0
    with pytest.raises(ValueError):
        coverage_and_period([], resolution=3)


# --- experiments ---------------------------------------------------------------------


def test_validate_dgibbs_converges(tmp_path):
    res = run_experiment(cfg(tmp_path, kind="validate", budget=1_000_000))
    assert res.metrics["final_mean_error"] < 1e-3
    text = res.outputs["curve"].read_text()
    assert text.startswith(CSV_HEADER + "\n")
    assert text.splitlines()[-1].startswith("1000000,")
    assert res.metrics["median_histogram_l1"] < 1e-3


def test_image_independent_rate(tmp_path):
    c = cfg(tmp_path, kind="image", synthetic="uniform", size=8, sampler="independent", budget=10_000, replicates=100)
    res = run_experiment(c)
    assert -0.65 <= loglog_slope(res.curve, (10, 10_000)) <= -0.35


def test_image_from_pgm_file(tmp_path):
    img = np.arange(1, 13).reshape(3, 4)
    write_pgm(tmp_path / "img.pgm", img)
    res = run_experiment(cfg(tmp_path, kind="image", image=str(tmp_path / "img.pgm"), budget=50_000))
    assert res.metrics["final_mean_error"] < 1e-2


def test_quantile_band_ordered(tmp_path):
    res = run_experiment(cfg(tmp_path, kind="validate", sampler="gibbs", budget=2000, replicates=7))
    assert np.all(res.curve.q10 <= res.curve.q90)
    assert res.curve.errors.shape == (7, len(res.curve.iterations))


def test_logreg_gibbs_5000n(tmp_path):
    # the error is measured against exact enumeration over the 32 states
    n = load_dataset("iris").n_axes
    res = run_experiment(cfg(tmp_path, kind="logreg", sampler="gibbs", budget=5000 * n))
    assert res.metrics["final_mean_error"] < 0.01


def test_longrun_reference_written_and_reused(tmp_path):
    c = cfg(tmp_path, kind="logreg", reference="longrun", budget=1000, reference_budget_factor=200)
    res = run_experiment(c)
    ref = res.outputs["reference"]
    first = ref.read_text()
    assert first.startswith("#")
    run_experiment(c)
    assert ref.read_text() == first


def test_deterministic_csv_and_threads(tmp_path):
    a = run_experiment(cfg(tmp_path, "a.csv", kind="validate", budget=20_000, replicates=4))
    b = run_experiment(cfg(tmp_path, "b.csv", kind="validate", budget=20_000, replicates=4, threads=4))
    assert a.outputs["curve"].read_bytes() == b.outputs["curve"].read_bytes()
    g1 = run_experiment(cfg(tmp_path, "g1.csv", kind="validate", sampler="gibbs", budget=5000, replicates=3, seed=4))
    g2 = run_experiment(cfg(tmp_path, "g2.csv", kind="validate", sampler="gibbs", budget=5000, replicates=3, seed=4))
    assert g1.outputs["curve"].read_bytes() == g2.outputs["curve"].read_bytes()
    assert "wall_seconds" in a.outputs["timing"].read_text()


def test_ising_and_denoise_sidecars(tmp_path):
    res = run_experiment(cfg(tmp_path, "i.csv", kind="ising", side=4, budget=3000, replicates=2))
    assert res.outputs["hitting"].read_text().startswith("replicate,hitting_iteration")
    assert res.outputs["energy"].exists()
    res = run_experiment(cfg(tmp_path, "d.csv", kind="denoise", size=16, budget=16 * 16 * 5, replicates=2))
    assert 0.0 <= res.metrics["median_estimate_disagreement"] <= 1.0
    assert res.outputs["denoise"].exists()


def test_runtime_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment(cfg(tmp_path, kind="ising", side=4, sampler="independent"))
    with pytest.raises((ConfigError, FileNotFoundError)):
        run_experiment(cfg(tmp_path, kind="image", image=str(tmp_path / "missing.pgm")))
