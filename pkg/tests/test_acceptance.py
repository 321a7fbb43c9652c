"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from oiltune import cli, detection, ga, harness, keyrate, plant

import oracles

CFG = plant.PlantConfig()


@pytest.fixture(scope="module")
def coherence_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("coherence")
    start = time.perf_counter()
    result = harness.run_campaign(harness.resolve_config("tune-coherence", {"output_dir": str(out)}))
    return result, out, time.perf_counter() - start


@pytest.fixture(scope="module")
def qber_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("qber")
    start = time.perf_counter()
    result = harness.run_campaign(harness.resolve_config("tune-qber", {"output_dir": str(out)}))
    return result, out, time.perf_counter() - start


def test_criterion_1_coherence_campaign(coherence_run, criterion):
    result, _, elapsed = coherence_run
    assert result.config.ga.population_schedule == ((0, 35), (3, 25)) and result.config.trials == 5
    finals = [t.final.report for t in result.trials]
    hits = sum(r.v_coherent >= 0.96 and r.v_random <= 0.03 for r in finals)
    ok = hits >= 4 and elapsed <= 120
    detail = ", ".join(f"({r.v_coherent:.4f}, {r.v_random:.4f})" for r in finals)
    criterion(1, ok, f"{hits}/5 trials with V_coh >= 0.96 and V_rand <= 0.03 [{detail}] in {elapsed:.1f} s")
    assert ok


def test_criterion_2_qber_campaign(qber_run, fixture_doc, criterion):
    result, _, elapsed = qber_run
    assert result.config.ga.population_schedule == ((0, 60),) and result.config.trials == 5
    assert abs(fixture_doc["qber"] - 0.025) <= 0.003
    finals = [t.final.report for t in result.trials]
    hits = sum(r.qber <= 0.0275 and r.l_pr <= 0.05 for r in finals)
    ok = hits >= 4 and elapsed <= 600
    detail = ", ".join(f"({r.qber:.4f}, {r.l_pr:.5f})" for r in finals)
    criterion(2, ok, f"{hits}/5 trials with QBER <= 2.75% and L_PR <= 0.05 [{detail}] in {elapsed:.1f} s")
    assert ok


def _synthetic_oracle(kind, rng):
    centre = rng.uniform(-1, 1, 4)
    if kind == 0:
        return lambda g, r: float(np.exp(-np.sum((np.asarray(g) - centre) ** 2)))
    if kind == 1:
        return lambda g, r: float(1 + np.sin(7 * np.sum(g)) + 0.5 * r.random())
    return lambda g, r: float(np.prod(np.abs(g)) * (r.random() < 0.8))


def test_criterion_3_elitism(criterion):
    rng = np.random.default_rng(2024)
    violations = 0
    for run in range(100):
        cfg = ga.GaConfig(
            population_schedule=((0, int(rng.integers(4, 30))), (int(rng.integers(1, 4)), int(rng.integers(2, 20)))),
            generations=int(rng.integers(2, 12)), rng_seed=run,
            crossover_rate=float(rng.random()), mutation_rate=float(rng.random()),
            elite_bias_rate=float(rng.random()),
        )
        best = [r.best.fitness for r in ga.evolve(_synthetic_oracle(run % 3, rng), [(-1, 1)] * 4, cfg)]
        violations += sum(b < a for a, b in zip(best, best[1:]))
    ok = violations == 0
    criterion(3, ok, f"{violations} decreases of best-so-far fitness over 100 randomised runs")
    assert ok


def test_criterion_4_ga_vs_grid(fixture_doc, criterion):
    channel = detection.ChannelConfig()
    base = harness.fixture_params()
    names = ("slave_temp", "temporal_delay")
    t = np.linspace(*plant.DEFAULT_RANGES["slave_temp"], 200)
    d = np.linspace(*plant.DEFAULT_RANGES["temporal_delay"], 200)
    tt, dd = np.meshgrid(t, d, indexing="ij")
    grid_best = float(np.max(harness.noiseless_qber_fitness(base.replace(slave_temp=tt, temporal_delay=dd),
                                                            CFG, channel)))
    oracle = harness.PlantOracle("qber", names, CFG, channel, base, noiseless=True)
    specs = [ga.GeneSpec(n, *plant.DEFAULT_RANGES[n]) for n in names]
    ratios = []
    for seed in range(10):
        cfg = ga.GaConfig(population_schedule=((0, 60),), generations=10, rng_seed=seed)
        ratios.append(ga.evolve(oracle, specs, cfg)[-1].best.fitness / grid_best)
    hits = sum(r >= 0.95 for r in ratios)
    ok = hits >= 8
    criterion(4, ok, f"{hits}/10 seeds reach 95% of the grid best {grid_best:.2f} (min ratio {min(ratios):.4f})")
    assert ok


def test_criterion_5_phase_randomisation(tmp_path, optimum, criterion):
    cfg = harness.resolve_config("histogram", {"output_dir": str(tmp_path)})
    hist = harness.run_histogram(cfg)
    counts = detection.acquire_counts(optimum, CFG, detection.ChannelConfig(), random_state=0,
                                      method="cycles", cycles=10**6)
    ratio = counts.c_side / counts.c_signal
    ks_ok = hist.ks_statistic < 0.02
    ratio_ok = abs(ratio - 0.5) <= 0.005
    ok = ks_ok and ratio_ok
    criterion(5, ok, f"KS {hist.ks_statistic:.4f} (< 0.02: {ks_ok}); C_side/C_signal {ratio:.4f} "
                     f"from {counts.c_side:.0f}/{counts.c_signal:.0f} (0.500 +/- 0.005: {ratio_ok})")
    assert ks_ok
    assert ratio_ok


def test_criterion_6_fringes(tmp_path, criterion):
    result = harness.run_sweep(harness.resolve_config("sweep", {"output_dir": str(tmp_path)}))
    minima = result.fringe_minima()
    corners = result.corner_qber()
    ok = len(minima) >= 2 and min(corners) >= 0.45
    criterion(6, ok, f"{len(minima)} minima in the cone at {np.round(minima, 2).tolist()} GHz; "
                     f"corner QBER min {min(corners):.4f}")
    assert ok


def test_criterion_7_key_rate(optimum, criterion):
    grid_ok = True
    for eta in (0.001, 0.01, 0.1, 0.5):
        gains, errors, y1, e1 = oracles.synthetic_channel(eta, 0.4, 0.1, 0.001)
        for correction in (False, True):
            r = keyrate.key_rate(keyrate.DecoyInputs(*gains, *errors, e_vac=0.0, vacuum_correction=correction))
            grid_ok &= r.y1_lower <= y1 * (1 + 1e-12) and r.e1_upper >= e1
    channel = detection.ChannelConfig()
    counts = detection.acquire_counts(optimum, CFG, channel, random_state=0)
    d = keyrate.DecoyInputs.from_counts(counts, channel)
    rate = keyrate.key_rate(d).rate
    lp_rate, _, _ = oracles.lp_key_rate(d.mu, d.nu, 0.0, d.q_mu, d.q_nu, d.q_vac, d.e_mu, d.e_nu, d.q_sift, d.f_ec)
    lp_ok = rate > 0 and abs(rate / lp_rate - 1) <= 0.05
    half = keyrate.key_rate(keyrate.DecoyInputs(d.q_mu, d.q_nu, d.q_vac, 0.5, 0.5)).rate
    ok = grid_ok and lp_ok and half == 0.0
    criterion(7, ok, f"bounds valid on grid: {grid_ok}; rate {rate:.4e} vs LP {lp_rate:.4e}; E=0.5 rate {half}")
    assert ok


def _rerun(command, first_dir, embedded, tmp_path):
    second = tmp_path / f"{command}-rerun"
    code = cli.main([command, "--config", str(first_dir / embedded), "--out", str(second), "-q"])
    return code, second


def test_criterion_8_determinism(coherence_run, qber_run, tmp_path, criterion):
    checks = {}
    for name, (result, out, _) in (("tune-coherence", coherence_run), ("tune-qber", qber_run)):
        code, second = _rerun(name, out, "result.json", tmp_path)
        checks[name] = code == 0 and all(
            (out / f"trial_{k}.csv").read_bytes() == (second / f"trial_{k}.csv").read_bytes() for k in range(5))
    for name, embedded, files in (("sweep", "sweep_summary.json", ("sweep.csv", "sweep_zoom.csv")),
                                  ("histogram", "histogram_summary.json", ("histogram.csv",))):
        first = tmp_path / name
        assert cli.main([name, "--out", str(first), "--seed", "9", "-q"]) == 0
        code, second = _rerun(name, first, embedded, tmp_path)
        checks[name] = code == 0 and all((first / f).read_bytes() == (second / f).read_bytes() for f in files)
    first = tmp_path / "keyrate"
    assert cli.main(["keyrate", "--out", str(first), "-q"]) == 0
    code, second = _rerun("keyrate", first, "keyrate.json", tmp_path)
    a, b = (json.loads((p / "keyrate.json").read_text()) for p in (first, second))
    checks["keyrate"] = code == 0 and a["result"] == b["result"]
    ok = all(checks.values())
    criterion(8, ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERENT'}" for k, v in checks.items()))
    assert ok


def test_criterion_9_mutation_statistics(criterion):
    from scipy import integrate, stats

    rng = np.random.default_rng(99)
    cfg = ga.GaConfig(mutation_rate=1.0, elite_bias_rate=1.0)
    x = np.array([ga.mutate([0.0], [0.5], [(0.0, 1.0)], cfg, rng)[0] for _ in range(10_000)])
    sigma = 0.05  # 5% of the unit range
    # moments of the clamped normal (clamping only touches > 10 sigma tails here)
    mean = integrate.quad(lambda v: v * stats.norm.pdf(v, 0.5, sigma), 0, 1)[0]
    gauss_ok = abs(x.mean() - mean) <= 0.002 and abs(x.std(ddof=1) / sigma - 1) <= 0.05
    cfg = ga.GaConfig(mutation_rate=1.0, elite_bias_rate=0.0)
    u = np.array([ga.mutate([0.0], [10.0], [(0.0, 10.0)], cfg, rng)[0] for _ in range(10_000)])
    uniform_ok = abs(u.mean() - 5.0) <= 0.1 and abs(u.std(ddof=1) - 10 / math.sqrt(12)) <= 0.1
    ok = gauss_ok and uniform_ok
    criterion(9, ok, f"elite Gaussian mean {x.mean():.4f} sd {x.std(ddof=1):.4f} (target {mean:.4f}, {sigma}); "
                     f"uniform mean {u.mean():.3f} sd {u.std(ddof=1):.3f}")
    assert ok
