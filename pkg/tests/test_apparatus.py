import math

import numpy as np
import pytest

from conftest import random_density
from entangler.apparatus import (
    NORMAL_APPROX_CUTOFF,
    CountRecord,
    DetectorModel,
    accidental_rate,
    expected_counts,
    expected_rate,
    load_records,
    poisson_sample,
    records_from_csv,
    records_from_json,
    records_to_csv,
    records_to_json,
    run_bell_experiment,
    simulate_counts,
)
from entangler.chsh import OPTIMAL_ANGLES, chsh_S
from entangler.core import ValidationError
from entangler.settings import AnalyzerSetting, ProjectorSetting
from entangler.states import singlet_density, werner
from entangler.tomography import standard_settings

IDEAL = DetectorModel.ideal()
SINGLET = singlet_density()


def test_detector_defaults():
    m = DetectorModel()
    assert (m.dqe, m.dark_rate, m.pair_rate, m.coincidence_window) == (0.65, 50.0, 4000.0, 3e-9)
    with pytest.raises(ValidationError):
        DetectorModel(dqe=1.2)
    with pytest.raises(ValidationError):
        DetectorModel(dark_rate=-1)


def test_expected_rate_examples():
    assert expected_rate(SINGLET, AnalyzerSetting(0.3, 0.3), IDEAL) == pytest.approx(0, abs=1e-12)
    for s in (AnalyzerSetting(0.1, 1.2), ProjectorSetting("R", "D")):
        assert expected_rate(np.eye(4) / 4, s, IDEAL) == pytest.approx(1000)


def test_expected_rate_default_model_fringe_maximum():
    model = DetectorModel()
    s = AnalyzerSetting(math.radians(135), math.radians(45))
    singles = 4000 * 0.65 * 0.5 + 50
    plug_in = 0.65**2 * 4000 * 0.5 + singles**2 * 3e-9
    assert accidental_rate(SINGLET, s, model) == pytest.approx(singles**2 * 3e-9)
    assert expected_rate(SINGLET, s, model) == pytest.approx(plug_in, rel=1e-12)
    counts = [simulate_counts(SINGLET, [s], 1.0, model, seed)[0].coincidences for seed in range(2000)]
    se = math.sqrt(plug_in / len(counts))
    assert abs(np.mean(counts) - plug_in) < 4 * se


def test_simulate_zero_rate_gives_zero():
    recs = simulate_counts(SINGLET, [AnalyzerSetting(0, 0)] * 3, 1e4, IDEAL, seed=5)
    assert all(r.coincidences == 0 for r in recs)


def test_simulate_mean_720k():
    # 4000 cps over 180 s, all pairs passing: expected 720000 per draw
    s = ProjectorSetting("H", "H")
    rho = np.diag([1.0, 0, 0, 0])
    draws = [simulate_counts(rho, [s], 180, IDEAL, seed)[0].coincidences for seed in range(100)]
    assert abs(np.mean(draws) - 720000) <= 3 * math.sqrt(720000) / math.sqrt(100)


def test_simulate_is_deterministic_and_seed_sensitive():
    settings = standard_settings()
    a = simulate_counts(werner(0.42), settings, 180, seed=11)
    b = simulate_counts(werner(0.42), settings, 180, seed=11)
    c = simulate_counts(werner(0.42), settings, 180, seed=12)
    assert a == b
    assert a != c
    prefix = simulate_counts(werner(0.42), settings[:5], 180, seed=11)
    assert prefix == a[:5]


def test_simulate_validation():
    with pytest.raises(ValidationError):
        simulate_counts(SINGLET, [], 1.0)
    with pytest.raises(ValidationError):
        simulate_counts(SINGLET, [AnalyzerSetting(0, 0)], 0.0)
    with pytest.raises(ValidationError):
        simulate_counts(SINGLET, [AnalyzerSetting(0, 0)], 1.0, seed=-1)
    assert simulate_counts(SINGLET, [AnalyzerSetting(0, 1)], 1.0, seed=2**64 - 1)


def test_poisson_sample_normal_branch(rng):
    mean = 4 * NORMAL_APPROX_CUTOFF
    draws = np.array([poisson_sample(rng, mean) for _ in range(4000)])
    assert draws.dtype.kind == "i"
    assert abs(draws.mean() - mean) < 4 * math.sqrt(mean / draws.size)
    assert draws.var() == pytest.approx(mean, rel=0.1)
    assert poisson_sample(rng, 0.0) == 0


def test_monte_carlo_mean_matches_expected_rate(rng):
    model = DetectorModel()
    for _ in range(10):
        rho = random_density(rng)
        s = AnalyzerSetting(*rng.uniform(0, np.pi, 2))
        duration = 0.05
        mean = expected_rate(rho, s, model) * duration
        draws = np.array([simulate_counts(rho, [s], duration, model, seed)[0].coincidences for seed in range(1000)])
        se = math.sqrt(mean / draws.size)
        assert abs(draws.mean() - mean) < 4 * se


def test_bell_run_singlet_ideal():
    est = run_bell_experiment(SINGLET, OPTIMAL_ANGLES, 180, IDEAL, seed=3)
    assert abs(est.S - 2 * math.sqrt(2)) < 3 * est.sigma_S
    assert est.significance > 100


def test_bell_run_werner_no_violation():
    est = run_bell_experiment(werner(0.42), OPTIMAL_ANGLES, 180, DetectorModel(), seed=3)
    assert est.S < 2
    assert est.significance < 0


def test_sigma_scales_with_inverse_sqrt_duration():
    short = [run_bell_experiment(SINGLET, OPTIMAL_ANGLES, 18, IDEAL, seed=s).sigma_S for s in range(5)]
    long = [run_bell_experiment(SINGLET, OPTIMAL_ANGLES, 180, IDEAL, seed=s).sigma_S for s in range(5)]
    assert np.mean(short) / np.mean(long) == pytest.approx(math.sqrt(10), rel=0.1)


def test_long_runs_converge_to_ideal_chsh(rng):
    for _ in range(5):
        rho = random_density(rng)
        # 1e7 expected counts per setting on average (probability ~1/4 each)
        est = run_bell_experiment(rho, OPTIMAL_ANGLES, 1.0, DetectorModel.ideal(pair_rate=4e7), seed=1)
        assert abs(est.S - chsh_S(rho)) < 0.01


def test_expected_counts_are_exact():
    recs = expected_counts(np.eye(4) / 4, standard_settings(), 2.0, IDEAL)
    assert all(r.coincidences == pytest.approx(2000) for r in recs)


def test_count_record_validation():
    with pytest.raises(ValidationError):
        CountRecord(AnalyzerSetting(0, 0), 0.0, 1)
    with pytest.raises(ValidationError):
        CountRecord(AnalyzerSetting(0, 0), 1.0, -1)


def test_csv_and_json_round_trip(tmp_path):
    recs = simulate_counts(werner(0.42), standard_settings(), 180, seed=1)
    recs += simulate_counts(werner(0.42), OPTIMAL_ANGLES.unique_settings(), 180, seed=2)
    text = records_to_csv(recs)
    assert text.splitlines()[0] == "setting_id,theta1,theta2,label1,label2,duration_s,counts,accidentals"
    assert records_from_csv(text) == recs
    assert records_from_json(records_to_json(recs)) == recs
    (tmp_path / "c.csv").write_text(text)
    (tmp_path / "c.json").write_text(records_to_json(recs))
    assert load_records(tmp_path / "c.csv") == recs
    assert load_records(tmp_path / "c.json") == recs


def test_csv_rejects_missing_columns():
    with pytest.raises(ValidationError):
        records_from_csv("setting_id,counts\n0,5\n")
