"""Asymptotic decoy-state BB84 key rate from measured gains and error rates.

Lower-bounds the single-photon yield and upper-bounds the single-photon
error rate from a signal state, one weak decoy and a (near-)vacuum decoy,
then applies the GLLP-type rate formula.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from ._validation import ConfigurationError

VACUUM_ERROR = 0.5


def binary_entropy(p):
    """Binary Shannon entropy in bits; ``H2(0) = H2(1) = 0``."""
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"binary entropy needs p in [0, 1], got {p!r}")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True)
class DecoyInputs:
    """Measured gains ``Q`` and error rates ``E`` of the three intensities.

    ``e0`` is the error rate assumed for vacuum counts when the ``vac``
    intensity is read as vacuum. ``e_vac`` is the measured error rate of the
    ``vac`` state, needed only with ``vacuum_correction=True``, which uses
    the general bounds for two weak decoys ``nu > vac >= 0``.
    """

    q_mu: float
    q_nu: float
    q_vac: float
    e_mu: float
    e_nu: float
    mu: float = 0.4
    nu: float = 0.1
    vac: float = 0.001
    q_sift: float = (15 / 16) ** 2
    f_ec: float = 1.16
    e0: float = VACUUM_ERROR
    e_vac: float = None
    vacuum_correction: bool = False

    def __post_init__(self):
        bad = [f.name for f in fields(self) if f.name not in ("vacuum_correction", "e_vac")
               and not math.isfinite(getattr(self, f.name))]
        if self.e_vac is not None and not 0.0 <= self.e_vac <= 1.0:
            bad.append("e_vac")
        if self.vacuum_correction and self.e_vac is None:
            bad.append("e_vac")
        if not 0.0 < self.nu < self.mu:
            bad.append("nu")
        if not 0.0 <= self.vac < self.nu:
            bad.append("vac")
        for name in ("q_mu", "q_nu", "q_vac", "e_mu", "e_nu", "q_sift", "e0"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                bad.append(name)
        if self.f_ec < 1.0:
            bad.append("f_ec")
        if bad:
            raise ConfigurationError(f"invalid decoy inputs: {sorted(set(bad))}", sorted(set(bad)))

    @classmethod
    def from_counts(cls, counts, channel, **overrides):
        """Build from ``DetectionCounts`` and the ``ChannelConfig`` that produced them."""
        mu, nu, vac = channel.intensities
        values = dict(
            q_mu=counts.gains["signal"], q_nu=counts.gains["decoy"], q_vac=counts.gains["vacuum"],
            e_mu=counts.error_rates["signal"], e_nu=counts.error_rates["decoy"],
            e_vac=counts.error_rates["vacuum"],
            mu=mu, nu=nu, vac=vac, q_sift=channel.basis_prob_x**2,
        )
        values = {k: float(v) for k, v in values.items()}
        values.update(overrides)
        return cls(**values)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown decoy inputs {sorted(unknown)}", sorted(unknown))
        missing = {"q_mu", "q_nu", "q_vac", "e_mu", "e_nu"} - set(data)
        if missing:
            raise ConfigurationError(f"missing decoy inputs {sorted(missing)}", sorted(missing))
        return cls(**data)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class KeyRateResult:
    y0: float
    y1_lower: float
    e1_upper: float
    q1_lower: float
    rate: float
    collapsed: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _clip01(x):
    return min(max(x, 0.0), 1.0)


def _vacuum_bounds(d):
    # 0.001 read as vacuum: the vacuum gain is the background yield
    y0 = d.q_vac
    y1 = d.mu / (d.mu * d.nu - d.nu**2) * (
        d.q_nu * math.exp(d.nu)
        - d.q_mu * math.exp(d.mu) * d.nu**2 / d.mu**2
        - (d.mu**2 - d.nu**2) / d.mu**2 * y0
    )
    numerator = d.e_nu * d.q_nu * math.exp(d.nu) - d.e0 * y0
    return y0, y1, numerator, d.nu


def _two_weak_bounds(d):
    # general form with two weak decoys nu1 > nu2 >= 0, nu2 = vac
    nu1, nu2, mu = d.nu, d.vac, d.mu
    g1, g2, gm = d.q_nu * math.exp(nu1), d.q_vac * math.exp(nu2), d.q_mu * math.exp(mu)
    y0 = max((nu1 * g2 - nu2 * g1) / (nu1 - nu2), 0.0)
    y1 = mu / (mu * nu1 - mu * nu2 - nu1**2 + nu2**2) * (
        g1 - g2 - (nu1**2 - nu2**2) / mu**2 * (gm - y0)
    )
    numerator = d.e_nu * g1 - d.e_vac * g2
    return y0, y1, numerator, nu1 - nu2


def key_rate(inputs):
    """Secure key bits per clock cycle and the decoy-state bounds behind it.

    A non-positive single-photon yield bound gives ``rate = 0`` with
    ``collapsed = True``. Error rates above 1/2 are scored as 1/2, so the
    rate is nonincreasing in both error rates over [0, 1].
    """
    d = inputs
    y0, y1, numerator, span = (_two_weak_bounds if d.vacuum_correction else _vacuum_bounds)(d)
    raw = {"y0": y0, "y1_lower": y1}
    y0 = _clip01(y0)
    if not y1 > 0.0:
        return KeyRateResult(y0=y0, y1_lower=0.0, e1_upper=1.0, q1_lower=0.0, rate=0.0,
                             collapsed=True, diagnostics=raw)
    y1 = _clip01(y1)
    e1 = _clip01(numerator / (span * y1))
    q1 = _clip01(y1 * d.mu * math.exp(-d.mu))
    rate = d.q_sift * (-d.q_mu * d.f_ec * binary_entropy(min(d.e_mu, 0.5))
                       + q1 * (1.0 - binary_entropy(min(e1, 0.5))))
    raw["e1_upper"] = numerator / (span * y1)
    return KeyRateResult(y0=y0, y1_lower=y1, e1_upper=e1, q1_lower=q1, rate=max(0.0, rate),
                         collapsed=False, diagnostics=raw)


def key_rate_from_counts(counts, channel, **overrides):
    return key_rate(DecoyInputs.from_counts(counts, channel, **overrides))
