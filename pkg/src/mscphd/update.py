"""Scalar and mixture ingredients of the multisensor CPHD update.

Measurement subsets are tuples of ``(sensor, index)`` pairs sorted by
sensor (0-based); a partition is a tuple of nonempty subsets, the clutter
set being implicit.  Quantities that can span many orders of magnitude
(d_W, kappa_P, products over partitions) are carried as logarithms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .cardinality import (
    CardinalityDistribution,
    ClutterModel,
    log_clutter_pgf_derivative_at_zero,
    log_pgf_derivatives,
)
from .gaussian import (
    BearingObservationModel,
    GaussianMixture,
    Innovation,
    LinearObservationModel,
)

LOG_FLOOR = -745.0


def floor_log(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < LOG_FLOOR, -np.inf, x)


def safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True, eq=False)
class SensorModel:
    detection_prob: float
    observation: LinearObservationModel | BearingObservationModel
    clutter: ClutterModel

    def __post_init__(self):
        if callable(self.detection_prob):
            raise TypeError("state-dependent detection probability is not supported; give a constant")
        if not 0.0 <= self.detection_prob <= 1.0:
            raise ValueError("detection probability must lie in [0, 1]")

    @property
    def log_pd(self):
        return float(safe_log(self.detection_prob))

    @property
    def log_qd(self):
        return float(safe_log(1.0 - self.detection_prob))


def as_frame(frame, sensors):
    """Coerce per-sensor measurement collections to ``(m_j, d_j)`` arrays."""
    if len(frame) != len(sensors):
        raise ValueError(f"frame has {len(frame)} sensors, model has {len(sensors)}")
    out = []
    for Z, sensor in zip(frame, sensors):
        d = sensor.observation.dim
        out.append(np.asarray(Z, dtype=float).reshape(-1, d))
    return out


def compute_gamma(sensors):
    """Probability that a target is missed by every sensor (constant p_d)."""
    return float(np.prod([1.0 - s.detection_prob for s in sensors]))


@dataclass(frozen=True, eq=False)
class SubsetStatistics:
    """Per-subset, per-component scores and chained posteriors.

    ``log_beta[k, i]`` is the score of subset ``k`` under component ``i``
    (component normalized to unit weight); ``log_dW[k]`` mixes these with
    the normalized mixture weights.
    """

    subsets: list
    log_beta: np.ndarray
    log_dW: np.ndarray
    means: np.ndarray | None
    covs: np.ndarray | None
    log_weights: np.ndarray

    def posterior(self, k):
        """Normalized Gaussian mixture of ``r * rho_W`` for subset ``k``."""
        if not np.isfinite(self.log_dW[k]):
            raise ValueError("degenerate subset posterior: every component weight underflows")
        w = np.exp(self.log_weights + self.log_beta[k] - self.log_dW[k])
        return GaussianMixture(w / w.sum(), self.means[k], self.covs[k])


def subset_statistics(r, subsets, frame, sensors, posteriors=True):
    """Chain measurement updates for every (subset, component) pair at once.

    ``r`` is the normalized predicted PHD.  Chaining runs over sensors in
    ascending index order.
    """
    frame = as_frame(frame, sensors)
    subsets = list(subsets)
    J, n = len(r), r.dim
    K = len(subsets)
    means = np.broadcast_to(r.means, (K, J, n)).reshape(K * J, n).copy()
    covs = np.broadcast_to(r.covs, (K, J, n, n)).reshape(K * J, n, n).copy()
    loglik = np.zeros(K * J)
    const = np.zeros(K)
    lookup = [dict(W) for W in subsets]
    cols = np.arange(J)
    for j, sensor in enumerate(sensors):
        ks = np.array([k for k in range(K) if j in lookup[k]], dtype=int)
        det = np.zeros(K, dtype=bool)
        det[ks] = True
        const[~det] += sensor.log_qd
        if ks.size == 0:
            continue
        const[det] += sensor.log_pd - sensor.clutter.log_density
        ls = np.array([lookup[k][j] for k in ks], dtype=int)
        rows = (ks[:, None] * J + cols).ravel()
        z = np.repeat(frame[j][ls], J, axis=0)
        inn = Innovation(sensor.observation, means[rows], covs[rows])
        m_new, P_new, ll = inn.row_update(z)
        if posteriors:
            means[rows] = m_new
            covs[rows] = P_new
        loglik[rows] += ll
    log_beta = floor_log(const[:, None] + loglik.reshape(K, J))
    with np.errstate(divide="ignore"):
        log_w = np.log(r.weights)
    log_dW = floor_log(logsumexp(log_w + log_beta, axis=1)) if J else np.full(K, -np.inf)
    return SubsetStatistics(
        subsets,
        log_beta,
        np.atleast_1d(log_dW),
        means.reshape(K, J, n) if posteriors else None,
        covs.reshape(K, J, n, n) if posteriors else None,
        log_w,
    )


def compute_log_dW(r, subset, frame, sensors):
    """log d_W for one measurement subset under the normalized predicted PHD ``r``."""
    return float(subset_statistics(r, [tuple(subset)], frame, sensors, posteriors=False).log_dW[0])


def posterior_gm_for_subset(r, subset, frame, sensors):
    """Normalized mixture proportional to ``r(x) rho_W(x)``."""
    return subset_statistics(r, [tuple(subset)], frame, sensors).posterior(0)


def sensor_counts(partition, num_sensors):
    counts = np.zeros(num_sensors, dtype=int)
    for W in partition:
        for j, _ in W:
            counts[j] += 1
    return counts


def compute_log_kappa(partition, sensors, sizes):
    """log of prod_j C_j^(m_j - |P|_j)(0)."""
    counts = sensor_counts(partition, len(sensors))
    total = 0.0
    for sensor, m, c in zip(sensors, sizes, counts):
        if c > m:
            raise ValueError("invalid partition for frame")
        total += log_clutter_pgf_derivative_at_zero(sensor.clutter, int(m - c))
    return total


@dataclass(frozen=True, eq=False)
class Alphas:
    alpha0: float
    log_alpha: np.ndarray
    log_normalizer: float


def compute_alphas(num_subsets, log_kappa, log_dP, cardinality, gamma):
    """Miss weight alpha_0 and per-partition log alpha_P.

    ``num_subsets[p]`` is the number of nonempty subsets of partition ``p``
    (``|P| - 1``); the all-clutter partition (0 subsets) must be present.
    """
    v = np.asarray(num_subsets, dtype=int)
    if not np.any(v == 0):
        raise ValueError("the all-clutter partition must be included")
    log_kappa = np.asarray(log_kappa, dtype=float)
    log_dP = np.asarray(log_dP, dtype=float)
    logM = log_pgf_derivatives(cardinality.probs, int(v.max()) + 1, gamma)
    den = log_kappa + logM[v] + log_dP
    S = logsumexp(den)
    if not np.isfinite(S):
        raise ValueError("no feasible explanation of measurements")
    alpha0 = float(np.exp(logsumexp(log_kappa + logM[v + 1] + log_dP) - S))
    return Alphas(alpha0, den - S, float(S))


def cardinality_update_terms(num_subsets, log_kappa, log_dP, gamma, n):
    """log of sum_{|P| <= n+1} kappa_P n!/(n-|P|+1)! gamma^(n-|P|+1) d_P."""
    v = np.asarray(num_subsets, dtype=int)
    ok = v <= n
    if not ok.any():
        return -np.inf
    v = v[ok]
    k = n - v
    log_gamma_pow = xlogy(k, gamma)
    terms = (
        np.asarray(log_kappa)[ok]
        + gammaln(n + 1)
        - gammaln(k + 1)
        + log_gamma_pow
        + np.asarray(log_dP)[ok]
    )
    return float(logsumexp(terms))


def update_cardinality(predicted, num_subsets, log_kappa, log_dP, gamma):
    """Posterior cardinality vector (normalized) from the partition terms."""
    logs = np.array(
        [cardinality_update_terms(num_subsets, log_kappa, log_dP, gamma, n) for n in range(predicted.n_max + 1)]
    )
    logp = safe_log(predicted.probs) + logs
    top = np.max(logp)
    if not np.isfinite(top):
        raise ValueError("no feasible explanation of measurements")
    p = np.exp(logp - top)
    return CardinalityDistribution(p / p.sum())


@dataclass(frozen=True, eq=False)
class UpdateIntermediates:
    gamma: float
    log_kappa: np.ndarray
    log_dW: np.ndarray
    subset_posteriors: list
    alpha0: float
    log_alphaP: np.ndarray
