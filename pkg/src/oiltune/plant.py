"""Phenomenological surrogate of the injection-locked transmitter.

A gain-switched master laser seeds pairs of pulses from a gain-switched slave
laser. The surrogate maps the six control settings to the optical state of
each clock cycle: the relative phase between the early and late pulse (the
qubit), the global phase of the cycle, and the effective interference
visibility. There are no rate equations here; the landscape is built from a
handful of smooth closed forms whose constants all live in ``PlantConfig``.

Every function accepts numpy arrays in place of scalars, so grids can be
evaluated without Python loops.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

import numpy as np

from ._validation import ConfigurationError, check_rng

CONTROL_NAMES = (
    "slave_temp",
    "master_bias",
    "slave_bias",
    "injection_atten",
    "temporal_delay",
    "mod_amplitude",
)

# Safe operating ranges (low, high) in the native unit of each control.
DEFAULT_RANGES = {
    "slave_temp": (20.0, 30.0),
    "master_bias": (20.0, 60.0),
    "slave_bias": (5.0, 25.0),
    "injection_atten": (0.0, 20.0),
    "temporal_delay": (0.0, 1000.0),
    "mod_amplitude": (0.0, 500.0),
}

MODES = ("coherent", "random", "encoded")


@dataclass(frozen=True)
class ControlParams:
    """The six transmitter controls.

    Units: degC, mA, mA, dB, ps, mV. Fields may hold numpy arrays of a common
    shape for vectorised evaluation.
    """

    slave_temp: float = 25.0
    master_bias: float = 40.0
    slave_bias: float = 15.0
    injection_atten: float = 8.0
    temporal_delay: float = 400.0
    mod_amplitude: float = 300.0

    @classmethod
    def from_genes(cls, genes, names=CONTROL_NAMES, base=None):
        """Build from a gene vector; controls not named keep the ``base`` values."""
        base = base if base is not None else cls()
        values = dict(zip(names, (float(g) for g in genes)))
        unknown = set(values) - set(CONTROL_NAMES)
        if unknown:
            raise ConfigurationError(f"unknown control names {sorted(unknown)}", sorted(unknown))
        return dataclasses.replace(base, **values)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - set(CONTROL_NAMES)
        if unknown:
            raise ConfigurationError(f"unknown control names {sorted(unknown)}", sorted(unknown))
        return cls(**{k: float(v) for k, v in data.items()})

    def to_dict(self):
        return {name: float(getattr(self, name)) for name in CONTROL_NAMES}

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def in_range(self, ranges=None):
        ranges = ranges or DEFAULT_RANGES
        return all(
            lo <= getattr(self, name) <= hi for name, (lo, hi) in ranges.items() if name in CONTROL_NAMES
        )


@dataclass(frozen=True)
class PlantConfig:
    """Constants of the surrogate transmitter.

    The defaults are tuning constants, chosen so the best operating point
    gives a coherent visibility near 0.97, a random-pair visibility below
    0.02 and a QBER near 2.5 % over a 16 dB channel.
    """

    # detuning = g_T (T - T*) + g_m (I_m - I_m*) + g_s (I_s - I_s*), GHz
    g_temp: float = -12.0
    g_master: float = 0.5
    g_slave: float = -1.0
    ref_temp: float = 25.0
    ref_master_bias: float = 40.0
    ref_slave_bias: float = 15.0

    # injection ratio = R_ref + c_m (I_m - I_m*) - c_s (I_s - I_s*) - atten, dB
    ref_injection_db: float = 0.0
    injection_master_slope: float = 0.2
    injection_slave_slope: float = 0.3

    # locking cone: f_lock = kappa 10^(R/20); stable for -a_neg f_lock <= df <= f_lock
    kappa: float = 40.0
    a_neg: float = 1.5
    optimal_injection_db: float = -8.0
    injection_width_db: float = 8.0
    lock_width: float = 0.8  # bump width as a fraction of the cone half-width
    lock_order: float = 6.0  # super-Gaussian order of the bump (2 = Gaussian)
    outside_decay: float = 0.5  # e-folding length outside the cone, in cone half-widths

    # systematic phase error phi_A sin(2 pi df / Lambda) (1 - q), rad
    fringe_period: float = 4.0
    fringe_amplitude: float = 2.2

    # phase noise variance sigma0^2 / q, capped
    phase_noise: float = 0.12
    phase_noise_cap: float = math.pi
    encoding_jitter: float = 0.231

    # phase randomisation: r = min(1, w (I_m - I_crit)) above I_crit
    critical_master_bias: float = 42.0
    coherence_slope: float = 0.05

    # timing, ps. Master pulse duration T_m = t0 + s (I_m - I_ref), capped at the master period.
    master_duration_offset: float = 400.0
    master_duration_slope: float = 20.0
    master_duration_ref_bias: float = 20.0
    optimal_delay: float = 400.0
    slave_period: float = 500.0
    master_period: float = 1000.0
    slave_pulse_width: float = 70.0

    encoding_efficiency: float = math.pi / 300.0  # rad / mV
    max_visibility: float = 0.985
    # residual fringe contrast of the receiver; the jitter part grows as the
    # slave loses its seed: floor = f0 + f1 (1 - V_eff / V_max)
    visibility_floor: float = 0.004
    jitter_floor: float = 0.006

    def __post_init__(self):
        bad = [f.name for f in fields(self) if not math.isfinite(getattr(self, f.name))]
        if not 0.9 < self.max_visibility <= 1.0:
            bad.append("max_visibility")
        for name in ("fringe_period", "kappa", "lock_width", "lock_order", "injection_width_db",
                     "outside_decay", "master_period", "slave_period", "slave_pulse_width",
                     "encoding_efficiency"):
            if getattr(self, name) <= 0:
                bad.append(name)
        for name in ("a_neg", "phase_noise", "encoding_jitter", "coherence_slope", "visibility_floor",
                     "jitter_floor"):
            if getattr(self, name) < 0:
                bad.append(name)
        if bad:
            raise ConfigurationError(f"invalid plant constants: {sorted(set(bad))}", sorted(set(bad)))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown plant constants {sorted(unknown)}", sorted(unknown))
        return cls(**{k: float(v) for k, v in data.items()})

    def to_dict(self):
        return dataclasses.asdict(self)


def detuning(params, cfg):
    """Master minus free-running slave frequency, GHz."""
    return (
        cfg.g_temp * (params.slave_temp - cfg.ref_temp)
        + cfg.g_master * (params.master_bias - cfg.ref_master_bias)
        + cfg.g_slave * (params.slave_bias - cfg.ref_slave_bias)
    )


def injection_ratio_db(params, cfg):
    """Injected master power over free-running slave power, dB."""
    return (
        cfg.ref_injection_db
        + cfg.injection_master_slope * (params.master_bias - cfg.ref_master_bias)
        - cfg.injection_slave_slope * (params.slave_bias - cfg.ref_slave_bias)
        - params.injection_atten
    )


def locking_range(ratio_db, cfg):
    return cfg.kappa * 10.0 ** (np.asarray(ratio_db, dtype=float) / 20.0)


def optimal_detuning(ratio_db, cfg):
    """Centre of the asymmetric locking cone, GHz."""
    return 0.5 * (1.0 - cfg.a_neg) * locking_range(ratio_db, cfg)


def locking_quality(df, ratio_db, cfg):
    """Locking quality in [0, 1].

    A flat-topped bump centred in the cone ``[-a_neg f_lock, f_lock]``,
    multiplied by an injection-strength factor that rolls off on both sides
    of ``optimal_injection_db``. Outside the cone the quality continues to
    decay exponentially from its edge value.
    """
    df = np.asarray(df, dtype=float)
    ratio_db = np.asarray(ratio_db, dtype=float)
    f_lock = locking_range(ratio_db, cfg)
    half = 0.5 * (1.0 + cfg.a_neg) * f_lock
    x = np.abs(df - optimal_detuning(ratio_db, cfg))
    width = cfg.lock_width * half
    inside = np.minimum(x, half)
    bump = np.exp(-0.5 * (inside / width) ** cfg.lock_order)
    bump = bump * np.exp(-np.maximum(x - half, 0.0) / (cfg.outside_decay * half))
    strength = np.exp(-0.5 * np.abs((ratio_db - cfg.optimal_injection_db) / cfg.injection_width_db) ** 4)
    out = bump * strength
    return float(out) if out.ndim == 0 else out


def master_pulse_duration(master_bias, cfg):
    """Master pulse duration in ps; longer at higher DC bias."""
    t = cfg.master_duration_offset + cfg.master_duration_slope * (
        np.asarray(master_bias, dtype=float) - cfg.master_duration_ref_bias
    )
    return np.clip(t, 0.0, cfg.master_period)


def temporal_overlap(temporal_delay, master_bias, cfg):
    """Fraction of the slave pulse pair seeded by one master pulse.

    Trapezoid in the misalignment: flat at its peak while both slave pulses
    sit inside the master pulse, falling linearly to zero at half a master
    period. The peak is below one when the master pulse is too short to
    cover the second slave pulse.
    """
    t_master = master_pulse_duration(master_bias, cfg)
    half_period = 0.5 * cfg.master_period
    span = cfg.slave_period + cfg.slave_pulse_width
    m = np.asarray(temporal_delay, dtype=float) - cfg.optimal_delay
    m = np.abs((m + half_period) % cfg.master_period - half_period)
    peak = np.clip((t_master - cfg.slave_period) / cfg.slave_pulse_width, 0.0, 1.0)
    plateau = np.clip(0.5 * (t_master - span), 0.0, 0.999 * half_period)
    ramp = np.clip((half_period - m) / (half_period - plateau), 0.0, 1.0)
    out = peak * np.where(m <= plateau, 1.0, ramp)
    return float(out) if out.ndim == 0 else out


def phase_correlation(master_bias, cfg):
    """Circular correlation of the global phase between consecutive cycles.

    Zero while the master drops below threshold between pulses; grows
    linearly with the DC bias above ``critical_master_bias``.
    """
    excess = np.asarray(master_bias, dtype=float) - cfg.critical_master_bias
    out = np.clip(cfg.coherence_slope * excess, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PhaseModel:
    """Statistics of the optical state that detection needs.

    ``visibility`` is V_eff; the intra-qubit phase is Gaussian with mean
    ``phase_offset`` and variance ``phase_variance`` (``encoding_variance``
    is added in encoded mode); the inter-qubit phase has mean resultant
    length ``correlation``.
    """

    visibility: object
    phase_offset: object
    phase_variance: object
    encoding_variance: float
    encoding_phase: object
    correlation: object


def phase_model(params, cfg):
    df = detuning(params, cfg)
    ratio = injection_ratio_db(params, cfg)
    q = np.asarray(locking_quality(df, ratio, cfg), dtype=float)
    overlap = temporal_overlap(params.temporal_delay, params.master_bias, cfg)
    offset = cfg.fringe_amplitude * np.sin(2.0 * np.pi * df / cfg.fringe_period) * (1.0 - q)
    with np.errstate(divide="ignore"):
        variance = np.minimum(cfg.phase_noise**2 / q, cfg.phase_noise_cap**2)
    return PhaseModel(
        visibility=cfg.max_visibility * q * overlap,
        phase_offset=offset,
        phase_variance=variance,
        encoding_variance=cfg.encoding_jitter**2,
        encoding_phase=cfg.encoding_efficiency * np.asarray(params.mod_amplitude, dtype=float),
        correlation=phase_correlation(params.master_bias, cfg),
    )


def effective_visibility(params, cfg):
    return phase_model(params, cfg).visibility


def residual_visibility(v_eff, cfg):
    """Fringe contrast the receiver reports even for fully random phases."""
    seeding = 1.0 - np.clip(np.asarray(v_eff, dtype=float) / cfg.max_visibility, 0.0, 1.0)
    return cfg.visibility_floor + cfg.jitter_floor * seeding


@dataclass(frozen=True)
class OpticalState:
    """Optical state of one clock cycle (or arrays over many cycles).

    ``side_phase`` is the phase between this cycle's late pulse and the next
    cycle's early pulse, which is what the inter-qubit slot of the
    interferometer sees.
    """

    early_amplitude: object
    late_amplitude: object
    phi_rel: object
    theta: object
    visibility: object
    side_phase: object = 0.0


def _wrapped_normal_std(correlation):
    # mean resultant length of a wrapped normal is exp(-s^2 / 2)
    return math.sqrt(-2.0 * math.log(correlation))


class CycleStream:
    """Sequential generator of clock cycles for fixed control settings.

    The global phase follows a first-order chain on the circle: the next
    cycle inherits the previous phase plus the intra-qubit phase and a
    diffusion step whose mean resultant length is the correlation ``r``.
    ``r = 0`` gives an independent uniform phase for every cycle.
    """

    def __init__(self, params, cfg, random_state=None):
        self.params = params
        self.cfg = cfg
        self.model = phase_model(params, cfg)
        self.rng = check_rng(random_state)
        self._theta = float(self.rng.uniform(0.0, 2.0 * np.pi))

    def _steps(self, n):
        r = float(self.model.correlation)
        if r <= 0.0:
            return self.rng.uniform(0.0, 2.0 * np.pi, n)
        if r >= 1.0:
            return np.zeros(n)
        return self.rng.normal(0.0, _wrapped_normal_std(r), n)

    def emit(self, n, mode="coherent", bits=None, bases=None):
        """Emit ``n`` cycles and return an ``OpticalState`` of arrays."""
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        m = self.model
        phi = m.phase_offset + self.rng.normal(0.0, math.sqrt(float(m.phase_variance)), n)
        if mode == "encoded":
            if bits is None or bases is None:
                raise ValueError("encoded mode needs bits and bases")
            symbol = np.asarray(bits, dtype=float) + 0.5 * np.asarray(bases, dtype=float)
            phi = phi + float(m.encoding_phase) * symbol
            phi = phi + self.rng.normal(0.0, math.sqrt(m.encoding_variance), n)
        xi = self._steps(n)
        increments = phi + xi
        theta = self._theta + np.concatenate(([0.0], np.cumsum(increments[:-1])))
        self._theta = float((theta[-1] + increments[-1]) % (2.0 * np.pi))
        ones = np.ones(n)
        return OpticalState(
            early_amplitude=ones,
            late_amplitude=ones,
            phi_rel=np.mod(phi, 2.0 * np.pi),
            theta=np.mod(theta, 2.0 * np.pi),
            visibility=float(m.visibility) * ones,
            side_phase=np.mod(xi, 2.0 * np.pi),
        )


def emit_cycle(params, cfg, mode="coherent", random_state=None, bit=0, basis=0, stream=None):
    """Emit a single clock cycle.

    Pass a ``CycleStream`` as ``stream`` to continue a phase chain; otherwise a
    fresh chain is started from ``random_state``.
    """
    stream = stream if stream is not None else CycleStream(params, cfg, random_state)
    s = stream.emit(1, mode, bits=[bit], bases=[basis])
    return OpticalState(
        early_amplitude=float(s.early_amplitude[0]),
        late_amplitude=float(s.late_amplitude[0]),
        phi_rel=float(s.phi_rel[0]),
        theta=float(s.theta[0]),
        visibility=float(s.visibility[0]),
        side_phase=float(s.side_phase[0]),
    )


def phase_serial_correlation(theta, phi=None):
    """Lag-1 circular correlation of a global-phase sequence.

    ``phi`` (the intra-qubit phases) is removed from each increment when
    given, so encoded streams can be tested too.
    """
    theta = np.asarray(theta, dtype=float)
    steps = np.diff(theta)
    if phi is not None:
        steps = steps - np.asarray(phi, dtype=float)[:-1]
    return float(np.abs(np.mean(np.exp(1j * steps))))
