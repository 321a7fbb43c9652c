import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oiltune import detection, plant
from oiltune._validation import ConfigurationError, MeasurementError

CFG = plant.PlantConfig()
SHORT = detection.ChannelConfig(acquisition_cycles=10**6)


def _state(v, phi):
    return plant.OpticalState(1.0, 1.0, phi, 0.0, v)


# --- interfere -------------------------------------------------------------------------


@pytest.mark.parametrize("v,phi,expected", [(1.0, 0.0, (1.0, 0.0)), (1.0, math.pi / 2, (0.5, 0.5))])
def test_interfere_examples(v, phi, expected):
    assert np.allclose(detection.interfere(_state(v, phi)), expected, atol=1e-15)


@given(st.floats(0, 2 * math.pi), st.floats(-10, 10))
def test_interfere_incoherent(phi, arm):
    assert detection.interfere(_state(0.0, phi), arm) == (0.5, 0.5)


@given(st.floats(0, 1), st.floats(-10, 10), st.floats(-10, 10))
def test_ports_sum_to_one(v, phi, arm):
    p0, p1 = detection.interfere(_state(v, phi), arm)
    assert p0 + p1 == 1.0
    assert 0.0 <= p0 <= 1.0


# --- visibility ----------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(3))
def test_visibility_at_optimum(optimum, seed):
    assert detection.measure_visibility(optimum, CFG, SHORT, "coherent", seed) >= 0.96
    assert detection.measure_visibility(optimum, CFG, SHORT, "random", seed) <= 0.02


def test_visibility_methods_agree(optimum):
    cycles = detection.measure_visibility(optimum, CFG, SHORT, "coherent", 0, method="cycles")
    exact = detection.measure_visibility(optimum, CFG, SHORT, "coherent", noiseless=True)
    assert cycles == pytest.approx(exact, abs=2e-3)


def test_dead_plant_visibility(optimum):
    # a short master pulse cannot seed the second slave pulse
    dead = optimum.replace(master_bias=20.0)
    assert plant.effective_visibility(dead, CFG) == 0.0
    for mode in ("coherent", "random"):
        assert detection.measure_visibility(dead, CFG, SHORT, mode, 1) <= 0.01


def test_zero_intensity_raises():
    state = plant.OpticalState(np.zeros(4), np.zeros(4), np.zeros(4), np.zeros(4), np.ones(4))
    with pytest.raises(MeasurementError):
        detection.visibility_from_states(state)


def test_visibility_argument_checks(optimum):
    with pytest.raises(ValueError):
        detection.measure_visibility(optimum, CFG, SHORT, "encoded")
    with pytest.raises(ValueError):
        detection.measure_visibility(optimum, CFG, SHORT, arm_steps=16)


# --- counts -------------------------------------------------------------------------------------


def test_qber_at_optimum(optimum):
    # one 1e6-cycle acquisition has a QBER shot-noise sd near 0.55 %, so average 20
    q = [detection.acquire_counts(optimum, CFG, SHORT, seed).qber for seed in range(20)]
    assert abs(np.mean(q) - 0.025) <= 0.003


def test_expected_qber_matches_fixture(optimum, fixture_doc):
    assert detection.qber_expected(optimum, CFG) == pytest.approx(fixture_doc["qber"], rel=1e-6)


def test_side_is_half_of_signal_slot_in_expectation(optimum):
    counts = detection.expected_counts(optimum, CFG, SHORT)
    assert counts.c_side == pytest.approx(0.5 * counts.c_signal_total, rel=1e-12)


def test_side_is_half_of_signal_slot_sampled(optimum):
    counts = detection.acquire_counts(optimum, CFG, SHORT, 0, method="cycles")
    ratio = counts.c_side / counts.c_signal_total
    # Poisson error of a ratio of counts
    sd = ratio * math.sqrt(1 / counts.c_side + 1 / counts.c_signal_total)
    assert abs(ratio - 0.5) < 4 * sd


def test_dark_counts_only():
    channel = detection.ChannelConfig(intensities=(0.0, 0.0, 0.0))
    counts = detection.acquire_counts(plant.ControlParams(), CFG, channel, 0)
    assert counts.sifted_total > 1e4
    assert counts.qber == pytest.approx(0.5, abs=0.01)


def test_no_sifted_events_raises():
    channel = detection.ChannelConfig(intensities=(0.0, 0.0, 0.0), dark_count_prob=0.0,
                                      acquisition_cycles=1000)
    with pytest.raises(MeasurementError):
        detection.acquire_counts(plant.ControlParams(), CFG, channel, 0)


def test_variance_halves_when_cycles_double(optimum):
    # 2000 repetitions per size: the variance ratio then has sd near 0.045 x 2
    reps = 2000
    rng = np.random.default_rng(0)
    var = []
    for n in (10**6, 2 * 10**6):
        q = [detection.acquire_counts(optimum, CFG, SHORT, rng, method="aggregate", cycles=n).qber
             for _ in range(reps)]
        var.append(np.var(q, ddof=1))
    assert var[0] / var[1] == pytest.approx(2.0, rel=0.2)


def test_cycles_and_aggregate_agree(optimum):
    rng = np.random.default_rng(1)
    by = {}
    for method in ("cycles", "aggregate"):
        runs = [detection.acquire_counts(optimum, CFG, SHORT, rng, method=method) for _ in range(8)]
        by[method] = runs
    expected = detection.expected_counts(optimum, CFG, SHORT)
    for method, runs in by.items():
        for attr in ("sifted_total", "errors", "c_signal", "c_side"):
            values = np.array([getattr(r, attr) for r in runs])
            target = getattr(expected, attr)
            # Poisson-like spread of the mean of 8 runs, with slack for the Bernoulli dark counts
            assert abs(values.mean() - target) < 5 * math.sqrt(target / 8) + 1, (method, attr)


def test_loss_monotone_gains(optimum):
    gains = [detection.expected_counts(optimum, CFG, SHORT.replace(channel_loss=loss)).gains
             for loss in np.linspace(0, 40, 21)]
    for label in detection.INTENSITY_LABELS:
        g = [x[label] for x in gains]
        assert all(b < a for a, b in zip(g, g[1:])), label


def test_counts_invariants(optimum):
    counts = detection.acquire_counts(optimum.replace(slave_temp=27.0), CFG, SHORT, 4)
    assert 0 <= counts.errors <= counts.sifted_total
    assert all(0 <= v <= 1 for v in counts.gains.values())
    assert all(0 <= v <= 1 for v in counts.error_rates.values())
    assert set(counts.to_dict()) >= {"c_signal", "c_side", "errors", "sifted_total", "gains"}


def test_noiseless_is_expected(optimum):
    a = detection.acquire_counts(optimum, CFG, SHORT, noiseless=True)
    assert a.to_dict() == detection.expected_counts(optimum, CFG, SHORT).to_dict()


def test_channel_validation():
    with pytest.raises(ConfigurationError) as err:
        detection.ChannelConfig(channel_loss=-1, detector_efficiency=2, acquisition_cycles=10)
    assert set(err.value.fields) == {"channel_loss", "detector_efficiency", "acquisition_cycles"}
    with pytest.raises(ConfigurationError):
        detection.ChannelConfig(intensity_probs=(0.5, 0.5, 0.5))
    ch = detection.ChannelConfig(channel_loss=10)
    assert detection.ChannelConfig.from_dict(ch.to_dict()) == ch


# --- histogram ------------------------------------------------------------------------------


def test_histogram_arcsine_at_unit_visibility(optimum):
    h = detection.intensity_histogram(optimum, CFG, 100_000, 0, visibility=1.0)
    assert h.ks_statistic() < 0.02
    assert h.counts.sum() == 100_000


def test_histogram_incoherent_spike(optimum):
    h = detection.intensity_histogram(optimum, CFG, 10_000, 0, visibility=0.0)
    centre = np.searchsorted(h.edges, 0.5, side="right") - 1
    assert h.counts[centre] + h.counts[centre - 1] == 10_000


@pytest.mark.parametrize("v", [0.0, 0.5, 1.0])
def test_histogram_mean(optimum, v):
    h = detection.intensity_histogram(optimum, CFG, 100_000, 1, visibility=v, i0=2.0)
    assert h.samples.mean() == pytest.approx(1.0, rel=0.01)


def test_histogram_density_normalised(optimum):
    h = detection.intensity_histogram(optimum, CFG, 10_000, 2)
    assert np.sum(h.density * np.diff(h.edges)) == pytest.approx(1.0)


def test_arcsine_cdf_formula():
    x = np.linspace(0, 1, 11)
    assert np.allclose(detection.arcsine_cdf(x), 2 / np.pi * np.arcsin(np.sqrt(x)))
