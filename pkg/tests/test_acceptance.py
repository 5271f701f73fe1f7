"""Acceptance suite: one test per primary criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` (or ``python tests/test_acceptance.py``);
the lines are also repeated in the pytest terminal summary.
"""
import math
import time
from functools import lru_cache

import numpy as np
import pytest

from conftest import random_density, random_local_unitary, random_qubit_density
from entangler.apparatus import DetectorModel, expected_counts, expected_rate, run_bell_experiment, simulate_counts
from entangler.chsh import OPTIMAL_ANGLES, ChshAngles, chsh_S, estimate_S_from_counts
from entangler.measures import (
    chsh_max,
    concurrence,
    linear_entropy,
    ppt_min_eigenvalue,
    tangle,
    werner_tangle_of_entropy,
)
from entangler.settings import AnalyzerSetting
from entangler.states import mems, singlet_density, werner
from entangler.core import DensityMatrix, fidelity
from entangler.tomography import (
    MaximumLikelihoodTomography,
    linear_inversion,
    log_likelihood,
    log_likelihood_grad,
    standard_settings,
)

RESULTS: list[str] = []
SETTINGS = standard_settings()
SEEDS = range(50)


def _report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_1_werner_curve_identity():
    start = time.perf_counter()
    worst = 0.0
    for p in np.round(np.arange(0, 1.0001, 0.01), 10):
        rho = werner(p)
        s_l = linear_entropy(rho)
        closed = 0.25 * (1 - 3 * math.sqrt(1 - s_l)) ** 2 if p > 1 / 3 else 0.0
        worst = max(worst, abs(tangle(rho) - closed), abs(werner_tangle_of_entropy(s_l) - closed))
    elapsed = time.perf_counter() - start
    _report(1, "Werner tangle vs linear entropy", worst < 1e-10 and elapsed < 1.0,
            f"max abs error {worst:.2e} (< 1e-10), runtime {elapsed:.3f} s (< 1 s)")


def test_criterion_2_boundaries():
    eps = 1e-9
    ppt_below, ppt_above = ppt_min_eigenvalue(werner(1 / 3 - eps)), ppt_min_eigenvalue(werner(1 / 3 + eps))
    p_bell = 1 / math.sqrt(2)
    bell_below, bell_above = chsh_max(werner(p_bell - eps)), chsh_max(werner(p_bell + eps))
    s_l_ppt, s_l_bell = linear_entropy(werner(1 / 3)), linear_entropy(werner(p_bell))
    ok = (ppt_below > 0 > ppt_above and bell_below < 2 < bell_above
          and abs(s_l_ppt - 8 / 9) < 1e-12 and abs(s_l_bell - 0.5) < 1e-12)
    _report(2, "separability and Bell boundaries", ok,
            f"ppt_min {ppt_below:+.1e}/{ppt_above:+.1e} at p=1/3-+1e-9, "
            f"chsh_max-2 {bell_below - 2:+.1e}/{bell_above - 2:+.1e} at p=1/sqrt2-+1e-9, "
            f"S_L {s_l_ppt:.12f} and {s_l_bell:.12f}")


def test_criterion_3_pure_state_bell_test():
    model = DetectorModel.ideal(pair_rate=4000)
    start = time.perf_counter()
    pure = run_bell_experiment(singlet_density(), OPTIMAL_ANGLES, 180, model, seed=1)
    t_pure = time.perf_counter() - start
    start = time.perf_counter()
    vis = run_bell_experiment(werner(0.904), OPTIMAL_ANGLES, 180, model, seed=1)
    t_vis = time.perf_counter() - start
    ok = (abs(pure.S - 2 * math.sqrt(2)) <= 3 * pure.sigma_S and pure.significance > 100
          and abs(vis.S - 2.5564) <= 3 * vis.sigma_S and max(t_pure, t_vis) < 10)
    _report(3, "desk-scale Bell test", ok,
            f"singlet S={pure.S:.4f}+-{pure.sigma_S:.4f} ({pure.significance:.0f} sd); "
            f"V=0.904 S={vis.S:.4f}+-{vis.sigma_S:.4f} vs 2.5564 "
            f"({abs(vis.S - 2.5564) / vis.sigma_S:.2f} sd); runtime {max(t_pure, t_vis):.2f} s")


def test_criterion_4_werner_non_violation():
    values = [run_bell_experiment(werner(0.42), OPTIMAL_ANGLES, 180, DetectorModel(), seed=s).S for s in range(100)]
    below = sum(s < 2 for s in values)
    exact = expected_counts(werner(0.42), OPTIMAL_ANGLES.unique_settings(), 180, DetectorModel.ideal())
    s_ideal = estimate_S_from_counts(exact).S
    target = 2 * math.sqrt(2) * 0.42
    ok = below >= 99 and abs(s_ideal - target) <= 0.02
    _report(4, "Werner p=0.42 does not violate", ok,
            f"{below}/100 runs with S<2 (max {max(values):.3f}); noiseless S={s_ideal:.4f} vs {target:.4f}+-0.02")


@lru_cache(maxsize=None)
def _reconstructions(name: str):
    rho = {"werner": werner(0.42), "mems": mems(0.56)}[name]
    out, slowest = [], 0.0
    for seed in SEEDS:
        recs = simulate_counts(rho, SETTINGS, 180, DetectorModel(), seed=seed)
        start = time.perf_counter()
        est = MaximumLikelihoodTomography().fit(recs)
        slowest = max(slowest, time.perf_counter() - start)
        out.append(est.rho_)
    return rho, out, slowest


def test_criterion_5_tomography_fidelity():
    parts, ok = [], True
    for name in ("werner", "mems"):
        rho, fits, slowest = _reconstructions(name)
        med = float(np.median([fidelity(r, rho) for r in fits]))
        exact = expected_counts(rho, SETTINGS, 180, DetectorModel.ideal())
        noiseless = fidelity(MaximumLikelihoodTomography().fit(exact).rho_, rho)
        ok &= med >= 0.99 and noiseless >= 1 - 1e-6 and slowest < 5
        parts.append(f"{name} median F={med:.5f}, noiseless 1-F={1 - noiseless:.1e}, slowest {slowest:.3f} s")
    _report(5, "MLE tomography fidelity", ok, "; ".join(parts))


def test_criterion_6_mems_structure():
    _, fits, _ = _reconstructions("mems")
    d = float(np.median([abs(r.entries[3, 3].real) for r in fits]))
    c = float(np.median([r.entries[1, 2].real for r in fits]))
    g = float(np.median([0.5 * (r.entries[1, 1].real + r.entries[2, 2].real) for r in fits]))
    ok = d <= 0.02 and abs(c + 0.28) <= 0.03 and abs(g - 1 / 3) <= 0.03
    _report(6, "MEMS p=0.56 structure", ok, f"median |D|={d:.4f}, C={c:.4f}, g={g:.4f}")


def test_criterion_7_property_suites():
    rng = np.random.default_rng(7)
    checks = {}

    ops = np.array([s.operator() for s in SETTINGS])
    worst = 0.0
    for _ in range(20):
        x = rng.normal(size=16)
        counts = rng.poisson(200, size=16).astype(float)
        weights = rng.uniform(5, 50, size=16)
        g = log_likelihood_grad(x, ops, counts, weights)
        fd = np.array([(log_likelihood(x + 1e-6 * e, ops, counts, weights)
                        - log_likelihood(x - 1e-6 * e, ops, counts, weights)) / 2e-6 for e in np.eye(16)])
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    checks["gradient"] = (worst <= 1e-6, f"grad rel err {worst:.1e}")

    model = DetectorModel()
    rho = random_density(rng)
    s = AnalyzerSetting(*rng.uniform(0, np.pi, 2))
    mean = expected_rate(rho, s, model) * 0.1
    draws = [simulate_counts(rho, [s], 0.1, model, seed)[0].coincidences for seed in range(1000)]
    z = abs(np.mean(draws) - mean) / math.sqrt(mean / 1000)
    checks["poisson"] = (z < 4, f"simulator mean {z:.2f} se")

    rho = random_density(rng, rank=2)
    c0 = concurrence(rho)
    drift = max(abs(concurrence(u @ rho.entries @ u.conj().T) - c0)
                for u in (random_local_unitary(rng) for _ in range(100)))
    checks["unitary"] = (drift <= 1e-9, f"concurrence drift {drift:.1e}")

    excess = -np.inf
    for _ in range(1000):
        prod = np.kron(random_qubit_density(rng), random_qubit_density(rng))
        angles = ChshAngles(*rng.uniform(0, np.pi, 4))
        excess = max(excess, chsh_S(prod, angles) - 2, chsh_max(prod) - 2)
    checks["separable"] = (excess <= 1e-9, f"product-state CHSH excess {excess:+.1e}")

    named = [singlet_density(), werner(0.42), mems(0.56), DensityMatrix.maximally_mixed()]
    err = max(np.max(np.abs(linear_inversion(expected_counts(r, SETTINGS, 180, DetectorModel.ideal())) - r.entries))
              for r in named)
    checks["inversion"] = (err <= 1e-10, f"inversion err {err:.1e}")

    _report(7, "property suites", all(ok for ok, _ in checks.values()),
            ", ".join(text for _, text in checks.values()))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
