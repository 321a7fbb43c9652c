"""Receiver model: interferometer, attenuation, photon clicks and measurements.

Two acquisition paths produce ``DetectionCounts``:

* ``method="cycles"`` simulates every clock cycle from a ``CycleStream``.
* ``method="aggregate"`` draws the category counts and click outcomes
  directly from their exact per-cycle marginals (phase noise integrated by
  Gauss-Hermite quadrature). Cost is independent of the cycle count, so
  acquisitions of 10^9 cycles are cheap.

``noiseless=True`` returns the expectations themselves.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import plant
from ._validation import ConfigurationError, MeasurementError, check_probability, check_rng

_GH_X, _GH_W = np.polynomial.hermite.hermgauss(40)
_GH_W = _GH_W / math.sqrt(math.pi)

INTENSITY_LABELS = ("signal", "decoy", "vacuum")
CYCLES_METHOD_LIMIT = 1 << 22


@dataclass(frozen=True)
class ChannelConfig:
    """Channel and detector settings.

    ``intensities`` are mean photon numbers per qubit at the transmitter for
    the signal, decoy and vacuum states.
    """

    channel_loss: float = 16.0
    detector_efficiency: float = 0.2
    dark_count_prob: float = 1e-6
    intensities: tuple = (0.4, 0.1, 0.001)
    intensity_probs: tuple = (14 / 16, 1 / 16, 1 / 16)
    basis_prob_x: float = 15 / 16
    acquisition_cycles: int = 10**10

    def __post_init__(self):
        bad = []
        if not (math.isfinite(self.channel_loss) and self.channel_loss >= 0):
            bad.append("channel_loss")
        for name in ("detector_efficiency", "dark_count_prob", "basis_prob_x"):
            try:
                check_probability(getattr(self, name), name)
            except ConfigurationError:
                bad.append(name)
        if len(self.intensities) != 3 or any(m < 0 or not math.isfinite(m) for m in self.intensities):
            bad.append("intensities")
        probs = self.intensity_probs
        if len(probs) != 3 or any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            bad.append("intensity_probs")
        if isinstance(self.acquisition_cycles, bool) or int(self.acquisition_cycles) < 1000:
            bad.append("acquisition_cycles")
        if bad:
            raise ConfigurationError(f"invalid channel settings: {bad}", bad)
        object.__setattr__(self, "intensities", tuple(float(m) for m in self.intensities))
        object.__setattr__(self, "intensity_probs", tuple(float(p) for p in self.intensity_probs))
        object.__setattr__(self, "acquisition_cycles", int(self.acquisition_cycles))

    @property
    def mean_photon_number_at_source(self):
        return self.intensities[0]

    @property
    def transmission(self):
        """Channel transmittance times detector efficiency."""
        return 10.0 ** (-self.channel_loss / 10.0) * self.detector_efficiency

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown channel settings {sorted(unknown)}", sorted(unknown))
        data = dict(data)
        for key in ("intensities", "intensity_probs"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["intensities"] = list(self.intensities)
        d["intensity_probs"] = list(self.intensity_probs)
        return d

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class DetectionCounts:
    """Click statistics of one acquisition.

    Over matched-basis cycles, ``c_signal`` counts photons at the detector
    where the sent bit interferes constructively (intra-qubit slot) and
    ``c_side`` counts photons at detector 0 in the inter-qubit slot, so both
    have the same exposure. ``c_signal_total`` sums both detectors of the
    intra-qubit slot.
    """

    c_signal: float
    c_side: float
    c_signal_total: float
    errors: float
    sifted_total: float
    cycles: int
    gains: dict = field(default_factory=dict)
    error_rates: dict = field(default_factory=dict)

    @property
    def qber(self):
        if self.sifted_total <= 0:
            raise MeasurementError("no sifted detection events")
        return self.errors / self.sifted_total

    def to_dict(self):
        return {
            "c_signal": float(self.c_signal),
            "c_side": float(self.c_side),
            "c_signal_total": float(self.c_signal_total),
            "errors": float(self.errors),
            "sifted_total": float(self.sifted_total),
            "cycles": int(self.cycles),
            "gains": {k: float(v) for k, v in self.gains.items()},
            "error_rates": {k: float(v) for k, v in self.error_rates.items()},
        }


def interfere(state, arm_phase=0.0):
    """Port probabilities of the interferometer for one optical state."""
    c = state.visibility * np.cos(state.phi_rel + arm_phase)
    p0 = 0.5 * (1.0 + c)
    return p0, 1.0 - p0


def _phasor_spread(c):
    # variances of cos and sin of a zero-mean phase with mean resultant c
    c4 = c**4
    return 0.5 * (1.0 + c4) - c**2, 0.5 * (1.0 - c4)


def visibility_from_states(state, arm_steps=64):
    """Fringe visibility of the cycle-averaged intensity at one port.

    The arm phase is scanned over ``arm_steps`` points in [0, 2 pi) and the
    extreme averaged intensities give ``(I_max - I_min) / (I_max + I_min)``.
    """
    a_e = np.asarray(state.early_amplitude, dtype=float)
    a_l = np.asarray(state.late_amplitude, dtype=float)
    background = np.mean(a_e**2 + a_l**2)
    if background <= 0:
        raise MeasurementError("zero optical intensity at the receiver")
    phasor = np.mean(2.0 * a_e * a_l * np.asarray(state.visibility) * np.exp(1j * np.asarray(state.phi_rel)))
    return _scan(background, phasor, arm_steps)


def _scan(background, phasor, arm_steps):
    arms = np.linspace(0.0, 2.0 * np.pi, arm_steps, endpoint=False)
    intensity = 0.25 * (background + np.real(phasor * np.exp(1j * arms)))
    hi, lo = intensity.max(), intensity.min()
    return float((hi - lo) / (hi + lo))


def measure_visibility(params, cfg, channel=None, mode="coherent", random_state=None,
                       noiseless=False, arm_steps=64, method="auto"):
    """Classical-intensity visibility of phase-coherent or phase-random pairs.

    ``mode="coherent"`` interferes the two pulses of one qubit;
    ``mode="random"`` interferes pulses seeded by consecutive master pulses.
    The result includes the receiver's residual visibility floor
    (``plant.residual_visibility``), added in quadrature.
    """
    if mode not in ("coherent", "random"):
        raise ValueError(f"mode must be 'coherent' or 'random', got {mode!r}")
    if arm_steps < 32:
        raise ValueError("arm_steps must be at least 32")
    channel = channel or ChannelConfig()
    n = channel.acquisition_cycles
    model = plant.phase_model(params, cfg)
    v_eff = float(model.visibility)
    if method == "auto":
        method = "cycles" if n <= CYCLES_METHOD_LIMIT and not noiseless else "moments"
    if method == "cycles":
        states = plant.CycleStream(params, cfg, random_state).emit(n, "coherent")
        if mode == "random":
            states = dataclasses.replace(states, phi_rel=states.side_phase)
        fringe = visibility_from_states(states, arm_steps)
    elif method == "moments":
        if mode == "coherent":
            c = math.exp(-0.5 * float(model.phase_variance))
            offset = float(model.phase_offset)
        else:
            c, offset = float(model.correlation), 0.0
        phasor = c * np.exp(1j * offset)
        if not noiseless:
            var_c, var_s = _phasor_spread(c)
            rng = check_rng(random_state)
            noise = rng.normal(0.0, math.sqrt(var_c / n)) + 1j * rng.normal(0.0, math.sqrt(var_s / n))
            phasor = phasor + noise * np.exp(1j * offset)
        fringe = _scan(2.0, 2.0 * v_eff * phasor, arm_steps)
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(math.hypot(fringe, float(plant.residual_visibility(v_eff, cfg))))


# --- click statistics -----------------------------------------------------


def _categories(channel):
    """Probability table of (intensity, Alice basis, bit, Bob basis)."""
    px = channel.basis_prob_x
    rows = []
    for i, (mu, pi) in enumerate(zip(channel.intensities, channel.intensity_probs)):
        for a, pa in ((0, px), (1, 1 - px)):
            for b in (0, 1):
                for beta, pb in ((0, px), (1, 1 - px)):
                    rows.append((i, mu, a, b, beta, pi * pa * 0.5 * pb))
    return rows


def _outcome_probs(v, mean_phase, variance, mu_slot, dark):
    """P(no click), P(D0 only), P(D1 only), P(both) for the intra-qubit slot.

    Arrays broadcast; the Gaussian phase is integrated by quadrature.
    """
    v = np.asarray(v, dtype=float)[..., None]
    phase = np.asarray(mean_phase, dtype=float)[..., None] + np.sqrt(2.0 * np.asarray(variance))[..., None] * _GH_X
    p0 = 0.5 * (1.0 + v * np.cos(phase))
    q0 = (1.0 - dark) * np.exp(-mu_slot * p0)
    q1 = (1.0 - dark) * np.exp(-mu_slot * (1.0 - p0))
    none = (q0 * q1) @ _GH_W
    only0 = ((1.0 - q0) * q1) @ _GH_W
    only1 = (q0 * (1.0 - q1)) @ _GH_W
    both = ((1.0 - q0) * (1.0 - q1)) @ _GH_W
    return none, only0, only1, both


def _matched_probs(channel):
    px = channel.basis_prob_x
    return px * px, (1.0 - px) ** 2


def _side_mean(model, channel):
    """Expected photon count per cycle at detector 0 in the inter-qubit slot,
    counted over matched-basis cycles only."""
    t = channel.transmission
    probs = np.asarray(channel.intensity_probs)
    mus = np.asarray(channel.intensities)
    mean_mu = probs @ mus
    mean_sqrt = probs @ np.sqrt(mus)
    m_x, m_z = _matched_probs(channel)
    arm_cos = m_x * 1.0 + m_z * math.cos(math.pi / 2)
    fringe = np.asarray(model.visibility) * np.asarray(model.correlation) * arm_cos
    return (m_x + m_z) * (t * mean_mu / 4.0 + channel.dark_count_prob) + t * mean_sqrt**2 / 4.0 * fringe


def _category_table(model, channel):
    """Per-category probability, outcome probabilities and metadata."""
    t = channel.transmission
    d = channel.dark_count_prob
    table = []
    for i, mu, a, b, beta, w in _categories(channel):
        phase = model.phase_offset + model.encoding_phase * (b + 0.5 * a) - beta * math.pi / 2
        var = model.phase_variance + model.encoding_variance
        outcome = _outcome_probs(model.visibility, phase, var, 0.5 * mu * t, d)
        # mean photon numbers at the constructive port of the sent bit and at both ports
        p_right = 0.5 * (1.0 + (1 - 2 * b) * model.visibility * np.exp(-0.5 * var) * np.cos(phase))
        photons = (0.5 * mu * t * p_right + d, mu * 0.5 * t + 2.0 * d)
        table.append((i, a, b, beta, w, outcome, photons))
    return table


def _signal_means(table):
    """Per-cycle expected constructive-port and total signal-slot photons (matched cycles)."""
    right = total = 0.0
    for _i, a, _b, beta, w, _outcome, (p_right, p_total) in table:
        if a == beta:
            right = right + w * p_right
            total = total + w * p_total
    return right, total


def qber_expected(params, cfg, channel=None):
    """Expected QBER over matched-basis cycles; vectorised over parameter arrays."""
    channel = channel or ChannelConfig()
    model = plant.phase_model(params, cfg)
    errors = 0.0
    sifted = 0.0
    for _i, a, b, beta, w, (none, only0, only1, both), _ in _category_table(model, channel):
        if a != beta:
            continue
        wrong = only1 if b == 0 else only0
        errors = errors + w * (wrong + 0.5 * both)
        sifted = sifted + w * (1.0 - none)
    return errors / sifted


def _summarise(cycles, c_signal, c_side, c_total, per_class):
    gains, error_rates = {}, {}
    errors = sifted = 0.0
    for label, (sent, clicked, err, sift) in zip(INTENSITY_LABELS, per_class):
        gains[label] = clicked / sent if sent > 0 else 0.0
        error_rates[label] = err / sift if sift > 0 else 0.5
        errors += err
        sifted += sift
    return DetectionCounts(c_signal=c_signal, c_side=c_side, c_signal_total=c_total,
                           errors=errors, sifted_total=sifted,
                           cycles=cycles, gains=gains, error_rates=error_rates)


def expected_peak_rates(params, cfg, channel=None):
    """Expected per-cycle signal-peak and side-peak photon counts; vectorised."""
    channel = channel or ChannelConfig()
    model = plant.phase_model(params, cfg)
    right, _total = _signal_means(_category_table(model, channel))
    return right, _side_mean(model, channel)


def expected_counts(params, cfg, channel=None, cycles=None):
    """Expected ``DetectionCounts`` (real-valued) for ``cycles`` cycles."""
    channel = channel or ChannelConfig()
    n = int(cycles or channel.acquisition_cycles)
    model = plant.phase_model(params, cfg)
    table = _category_table(model, channel)
    per_class = np.zeros((3, 4))
    for i, a, b, beta, w, (none, only0, only1, both), _ in table:
        per_class[i, 0] += n * w
        per_class[i, 1] += n * w * (1.0 - none)
        if a == beta:
            wrong = only1 if b == 0 else only0
            per_class[i, 2] += n * w * (wrong + 0.5 * both)
            per_class[i, 3] += n * w * (1.0 - none)
    right, total = _signal_means(table)
    return _summarise(n, n * float(right), n * float(_side_mean(model, channel)), n * float(total), per_class)


def _acquire_aggregate(params, cfg, channel, rng, n):
    model = plant.phase_model(params, cfg)
    table = _category_table(model, channel)
    weights = np.array([row[4] for row in table])
    sent = rng.multinomial(n, weights / weights.sum())
    per_class = np.zeros((3, 4))
    for (i, a, b, beta, _w, outcome, _), n_cat in zip(table, sent):
        probs = np.clip(np.array([float(p) for p in outcome]), 0.0, None)
        none, only0, only1, both = rng.multinomial(n_cat, probs / probs.sum())
        per_class[i, 0] += n_cat
        per_class[i, 1] += n_cat - none
        if a == beta:
            wrong = only1 if b == 0 else only0
            per_class[i, 2] += wrong + rng.binomial(both, 0.5)
            per_class[i, 3] += n_cat - none
    right, total = _signal_means(table)
    c_signal = rng.poisson(n * float(right))
    c_other = rng.poisson(n * float(total - right))
    c_side = rng.poisson(n * float(_side_mean(model, channel)))
    return _summarise(n, float(c_signal), float(c_side), float(c_signal + c_other), per_class)


def _acquire_cycles(params, cfg, channel, rng, n):
    px = channel.basis_prob_x
    t = channel.transmission
    d = channel.dark_count_prob
    mus = np.asarray(channel.intensities)
    cls = rng.choice(3, size=n + 1, p=channel.intensity_probs)
    mu = mus[cls]
    alice = (rng.random(n) >= px).astype(int)
    bob = (rng.random(n) >= px).astype(int)
    bits = rng.integers(0, 2, n)
    states = plant.CycleStream(params, cfg, rng).emit(n, "encoded", bits=bits, bases=alice)
    arm = -bob * (np.pi / 2)

    p0, p1 = interfere(states, arm)
    slot = 0.5 * mu[:n] * t
    n0 = rng.poisson(slot * p0) + (rng.random(n) < d)
    n1 = rng.poisson(slot * p1) + (rng.random(n) < d)
    click0, click1 = n0 > 0, n1 > 0

    mu_next = mu[1:]
    side_total = 0.25 * t * (mu[:n] + mu_next)
    with np.errstate(invalid="ignore", divide="ignore"):
        balance = np.where(side_total > 0, 2.0 * np.sqrt(mu[:n] * mu_next) / (mu[:n] + mu_next), 0.0)
    side_p0 = 0.5 * (1.0 + states.visibility * balance * np.cos(states.side_phase + arm))
    n_side = rng.poisson(side_total * side_p0) + (rng.random(n) < d)

    any_click = click0 | click1
    both = click0 & click1
    matched = alice == bob
    outcome = np.where(both, rng.integers(0, 2, n), np.where(click1, 1, 0))
    wrong = any_click & matched & (outcome != bits)
    per_class = np.zeros((3, 4))
    c = cls[:n]
    for i in range(3):
        sel = c == i
        per_class[i] = (sel.sum(), (any_click & sel).sum(), (wrong & sel).sum(), (any_click & matched & sel).sum())
    n_right = np.where(bits == 0, n0, n1)
    return _summarise(n, float(n_right[matched].sum()), float(n_side[matched].sum()),
                      float((n0 + n1)[matched].sum()), per_class)


def acquire_counts(params, cfg, channel=None, random_state=None, method="auto", noiseless=False, cycles=None):
    """Run one encoded BB84 acquisition and tally the detection statistics.

    Raises ``MeasurementError`` if no sifted events were recorded.
    """
    channel = channel or ChannelConfig()
    n = int(cycles or channel.acquisition_cycles)
    if noiseless:
        counts = expected_counts(params, cfg, channel, n)
    else:
        rng = check_rng(random_state)
        if method == "auto":
            method = "cycles" if n <= CYCLES_METHOD_LIMIT else "aggregate"
        if method == "cycles":
            counts = _acquire_cycles(params, cfg, channel, rng, n)
        elif method == "aggregate":
            counts = _acquire_aggregate(params, cfg, channel, rng, n)
        else:
            raise ValueError(f"unknown method {method!r}")
    if counts.sifted_total <= 0:
        raise MeasurementError("acquisition recorded no sifted events")
    return counts


# --- phase-randomisation histogram -----------------------------------------


@dataclass(frozen=True)
class IntensityHistogram:
    edges: np.ndarray
    counts: np.ndarray
    samples: np.ndarray
    visibility: float
    i0: float

    @property
    def density(self):
        widths = np.diff(self.edges)
        return self.counts / (self.counts.sum() * widths)

    def ks_statistic(self, visibility=None):
        """KS distance of the raw samples to the arcsine law of the given visibility."""
        v = self.visibility if visibility is None else visibility
        return float(stats.kstest(self.samples, lambda x: arcsine_cdf(x, self.i0, v)).statistic)


def arcsine_cdf(intensity, i0=1.0, visibility=1.0):
    """CDF of ``(i0/2)(1 + V cos(theta))`` for uniform theta.

    For ``V = 1`` this is ``(2/pi) arcsin(sqrt(I/i0))``.
    """
    lo = 0.5 * i0 * (1.0 - visibility)
    width = i0 * visibility
    if width <= 0:
        return np.where(np.asarray(intensity) >= lo, 1.0, 0.0)
    u = np.clip((np.asarray(intensity, dtype=float) - lo) / width, 0.0, 1.0)
    return 2.0 / np.pi * np.arcsin(np.sqrt(u))


def intensity_histogram(params, cfg, samples=100_000, random_state=None, bins=50, i0=1.0, visibility=None):
    """Intensity at one port for interference of pulses from different master pulses.

    Channel attenuation is removed, so intensities are classical. ``i0`` is
    the fully constructive intensity; ``visibility`` overrides the plant's
    effective visibility.
    """
    if samples < 1000:
        raise ValueError("samples must be at least 1000")
    stream = plant.CycleStream(params, cfg, random_state)
    states = stream.emit(samples, "random")
    v = float(states.visibility[0]) if visibility is None else float(visibility)
    x = 0.5 * i0 * (1.0 + v * np.cos(states.side_phase))
    edges = np.linspace(0.0, i0, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    return IntensityHistogram(edges=edges, counts=counts, samples=x, visibility=v, i0=i0)
