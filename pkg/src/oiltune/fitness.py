"""Scalar objectives built from the detection measurements."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import detection
from ._validation import MeasurementError

VISIBILITY_EPS = 1e-3
QBER_EPS = 1e-3
LPR_EPS = 1e-3
DEFAULT_ALPHA = 0.1


@dataclass
class FitnessReport:
    """Measured terms and the scalar fitness ``psi``.

    Converts to ``float`` as ``psi`` so the GA can use it directly.
    """

    psi: float
    v_coherent: float = None
    v_random: float = None
    qber: float = None
    l_pr: float = None
    alpha: float = DEFAULT_ALPHA
    diagnostics: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.psi)

    def to_dict(self):
        return {
            "psi": self.psi,
            "v_coherent": self.v_coherent,
            "v_random": self.v_random,
            "qber": self.qber,
            "l_pr": self.l_pr,
            "alpha": self.alpha,
            "diagnostics": dict(self.diagnostics),
        }


def coherence_score(v_coherent, v_random, eps=VISIBILITY_EPS):
    """``V_coherent + 1 / V_random`` with the denominator clamped at ``eps``."""
    clamped = v_random < eps
    psi = v_coherent + 1.0 / max(v_random, eps)
    return FitnessReport(psi=psi, v_coherent=v_coherent, v_random=v_random,
                         diagnostics={"clamped": clamped})


def phase_randomisation_cost(c_signal, c_side, alpha=DEFAULT_ALPHA):
    """``alpha |C_signal - 2 C_side| / C_signal``."""
    if c_signal <= 0:
        raise MeasurementError("no signal-peak counts")
    return alpha * abs(c_signal - 2.0 * c_side) / c_signal


def qber_score(qber, l_pr, alpha=DEFAULT_ALPHA, qber_eps=QBER_EPS, lpr_eps=LPR_EPS):
    """``1 / QBER + 1 / L_PR`` with both denominators clamped."""
    psi = 1.0 / max(qber, qber_eps) + 1.0 / max(l_pr, lpr_eps)
    return FitnessReport(
        psi=psi, qber=qber, l_pr=l_pr, alpha=alpha,
        diagnostics={"qber_clamped": qber < qber_eps, "l_pr_clamped": l_pr < lpr_eps},
    )


def coherence_fitness(params, plant_cfg, channel=None, random_state=None, noiseless=False):
    """Visibility-based fitness; a dead plant scores 0 instead of raising."""
    try:
        v_coh = detection.measure_visibility(params, plant_cfg, channel, "coherent", random_state, noiseless)
        v_rand = detection.measure_visibility(params, plant_cfg, channel, "random", random_state, noiseless)
    except MeasurementError as exc:
        return FitnessReport(psi=0.0, diagnostics={"error": str(exc)})
    return coherence_score(v_coh, v_rand)


def qber_fitness(params, plant_cfg, channel=None, random_state=None, noiseless=False, alpha=DEFAULT_ALPHA):
    """QBER and phase-randomisation fitness from one encoded acquisition."""
    try:
        counts = detection.acquire_counts(params, plant_cfg, channel, random_state, noiseless=noiseless)
        l_pr = phase_randomisation_cost(counts.c_signal, counts.c_side, alpha)
    except MeasurementError as exc:
        return FitnessReport(psi=0.0, alpha=alpha, diagnostics={"error": str(exc)})
    report = qber_score(counts.qber, l_pr, alpha)
    report.diagnostics["counts"] = counts.to_dict()
    return report
