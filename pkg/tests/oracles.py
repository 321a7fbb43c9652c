"""Independent reference implementations used as test oracles.

Nothing here imports the package's key-rate code.
"""

import math

import numpy as np
from scipy import optimize, stats


def h2(p):
    """Binary entropy via scipy's Shannon entropy, base 2."""
    return float(stats.entropy([p, 1.0 - p], base=2))


def _poisson_rows(intensities, n_max):
    n = np.arange(n_max + 1)
    rows = np.array([stats.poisson.pmf(n, k) for k in intensities])
    tails = 1.0 - rows.sum(axis=1)
    return rows, np.maximum(tails, 0.0)


def lp_decoy_bounds(mu, nu, vac, q_mu, q_nu, q_vac, e_mu, e_nu, e0=0.5, e_vac=None, n_max=25):
    """Tightest Y1 lower bound and e1 upper bound by linear programming.

    Unknowns are the photon-number yields Y_n in [0, 1] (n <= n_max) and the
    error-weighted yields W_n = e_n Y_n in [0, Y_n]. Each measured gain
    constrains sum_n P(n|k) Y_n to [Q_k - tail_k, Q_k], where tail_k bounds
    the contribution of n > n_max; measured error gains constrain W the same
    way. Without ``e_vac`` the vacuum component is tied to W_0 = e0 Y_0;
    with it, the vac state's error gain is a constraint like the others and
    W_0 is free. Every constraint row is divided by its measured value so
    that tiny gains keep their precision.
    """
    rows, tails = _poisson_rows([mu, nu, vac], n_max)
    gains = np.array([q_mu, q_nu, q_vac])
    m = n_max + 1

    a_ub, b_ub = [], []
    for row, q, tail in zip(rows, gains, tails):
        a_ub.append(np.concatenate([row, np.zeros(m)]) / q)
        b_ub.append(1.0)
        a_ub.append(-np.concatenate([row, np.zeros(m)]) / q)
        b_ub.append(-(q - tail) / q)
    measured = (e_mu, e_nu) if e_vac is None else (e_mu, e_nu, e_vac)
    for row, q, e, tail in zip(rows, gains, measured, tails):
        target = e * q
        scale = max(target, 1e-300)
        a_ub.append(np.concatenate([np.zeros(m), row]) / scale)
        b_ub.append(target / scale)
        a_ub.append(-np.concatenate([np.zeros(m), row]) / scale)
        b_ub.append(-(target - tail) / scale)
    for i in range(m):  # W_n <= Y_n
        r = np.zeros(2 * m)
        r[m + i], r[i] = 1.0, -1.0
        a_ub.append(r)
        b_ub.append(0.0)
    a_eq = np.zeros((1, 2 * m))
    if e_vac is None:
        a_eq[0, m], a_eq[0, 0] = 1.0, -e0  # W_0 = e0 Y_0
    bounds = [(0.0, 1.0)] * (2 * m)
    a_ub, b_ub = np.array(a_ub), np.array(b_ub)

    c = np.zeros(2 * m)
    c[1] = 1.0
    low = optimize.linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[0.0], bounds=bounds, method="highs")
    c = np.zeros(2 * m)
    c[m + 1] = -1.0
    high = optimize.linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[0.0], bounds=bounds, method="highs")
    if not (low.success and high.success):
        raise RuntimeError(f"LP failed: {low.message} / {high.message}")
    y1 = low.x[1]
    e1 = min(-high.fun / y1, 1.0) if y1 > 0 else 1.0
    return y1, e1


def lp_key_rate(mu, nu, vac, q_mu, q_nu, q_vac, e_mu, e_nu, q_sift, f_ec=1.16, e0=0.5, e_vac=None):
    y1, e1 = lp_decoy_bounds(mu, nu, vac, q_mu, q_nu, q_vac, e_mu, e_nu, e0, e_vac)
    q1 = y1 * mu * math.exp(-mu)
    rate = q_sift * (-q_mu * f_ec * h2(e_mu) + q1 * (1.0 - h2(min(e1, 0.5))))
    return max(rate, 0.0), y1, e1


def synthetic_channel(eta, mu, nu, vac, e_det=0.0, y0=0.0, e0=0.5):
    """Gains and error rates of a channel with yields Y_n = y0 + (1 - y0)(1 - (1 - eta)^n).

    Returns (gains, errors, true Y1, true e1) with e_n = (e0 y0 + e_det (Y_n - y0)) / Y_n.
    """
    def gain(k):
        return y0 + (1.0 - y0) * (1.0 - math.exp(-eta * k))

    def err(k):
        return (e0 * y0 + e_det * (gain(k) - y0)) / gain(k)

    y1 = y0 + (1.0 - y0) * eta
    e1 = (e0 * y0 + e_det * (y1 - y0)) / y1
    return (gain(mu), gain(nu), gain(vac)), (err(mu), err(nu)), y1, e1
