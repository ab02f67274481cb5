"""Multisensor G-CPHD / G-PHD filters and iterated-corrector baselines.

All filters share the Gaussian-mixture prediction.  The general (G-)
filters score partitions of the whole multisensor frame, either from the
two-step greedy trellis or, in exact mode, from full enumeration.  The
iterated-corrector (IC-) filters apply an exact single-sensor update once
per sensor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .cardinality import (
    DEFAULT_N_MAX,
    CardinalityDistribution,
    log_clutter_pgf_derivative_at_zero,
    log_pgf_derivatives,
    predict_cardinality,
)
from .gaussian import (
    GaussianMixture,
    Innovation,
    MotionModel,
    ReductionParams,
    predict_mixture,
    prune_merge_cap,
)
from .partitioning import (
    GreedyParams,
    ScoredSubset,
    enumerate_partitions,
    enumerate_subsets,
    greedy_partitions,
    greedy_subsets,
)
from .update import (
    UpdateIntermediates,
    as_frame,
    compute_alphas,
    compute_gamma,
    safe_log,
    subset_statistics,
    update_cardinality,
)

log = logging.getLogger(__name__)

MODES = ("gcphd", "gphd", "iccphd", "icphd")
CPHD_MODES = ("gcphd", "iccphd")
EXACT_MAX_SUBSETS = 10**4
EXACT_MAX_PARTITIONS = 10**5


@dataclass(frozen=True, eq=False)
class FilterState:
    phd: GaussianMixture
    cardinality: CardinalityDistribution | None = None


@dataclass(frozen=True, eq=False)
class BirthModel:
    phd: GaussianMixture
    cardinality: CardinalityDistribution

    def __post_init__(self):
        if abs(self.phd.total_weight - self.cardinality.mean()) > 1e-6:
            raise ValueError("birth PHD weight and birth cardinality mean disagree")

    @classmethod
    def poisson(cls, means, cov, weight, n_max=DEFAULT_N_MAX):
        """Equal-weight Gaussian birth terms with a truncated Poisson cardinality.

        The PHD weights are rescaled to the truncated cardinality mean so the
        two stay consistent.
        """
        means = np.atleast_2d(np.asarray(means, dtype=float))
        J = means.shape[0]
        card = CardinalityDistribution.poisson(weight * J, n_max)
        covs = np.broadcast_to(np.asarray(cov, dtype=float), (J,) + (means.shape[1],) * 2)
        w = np.full(J, card.mean() / J)
        return cls(GaussianMixture(w, means, covs.copy()), card)


@dataclass(frozen=True, eq=False)
class FilterConfig:
    motion: MotionModel
    sensors: tuple
    p_sv: float = 0.99
    greedy: GreedyParams = field(default_factory=GreedyParams)
    reduction: ReductionParams | None = field(default_factory=ReductionParams)
    n_max: int = DEFAULT_N_MAX
    mode: str = "gcphd"
    exact_update: bool = False
    cap_factor: int | None = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown filter mode {self.mode!r}")
        if not 0.0 <= self.p_sv <= 1.0:
            raise ValueError("p_sv must lie in [0, 1]")
        object.__setattr__(self, "sensors", tuple(self.sensors))

    @property
    def is_cphd(self):
        return self.mode in CPHD_MODES


def initial_state(config, dim):
    card = CardinalityDistribution.delta(0, config.n_max) if config.is_cphd else None
    return FilterState(GaussianMixture.empty(dim), card)


def predict(state, config, birth):
    """Survival/motion prediction plus birth; CPHD modes also predict the cardinality."""
    phd = GaussianMixture.concatenate(
        [predict_mixture(state.phd, config.motion, config.p_sv), birth.phd], birth.phd.dim
    )
    card = None
    if state.cardinality is not None:
        card = predict_cardinality(state.cardinality, config.p_sv, birth.cardinality)
    return FilterState(phd, card)


def normalized_prediction(state):
    """``(r, mu)``: the normalized predicted PHD and the predicted mean count."""
    mu = state.cardinality.mean() if state.cardinality is not None else state.phd.total_weight
    return state.phd.normalized(), mu


def extract_estimates(state, mode):
    """Number of targets and the means of the heaviest components."""
    if mode in CPHD_MODES:
        n_hat = state.cardinality.map()
    else:
        n_hat = int(np.floor(state.phd.total_weight + 0.5))
    order = np.argsort(-state.phd.weights, kind="stable")[:n_hat]
    return n_hat, state.phd.means[order]


def cap_components(gm, k):
    if len(gm) <= k:
        return gm
    total = gm.total_weight
    kept = gm.take(np.argsort(-gm.weights, kind="stable")[:k])
    return kept.scaled(total / kept.total_weight) if kept.total_weight > 0 else kept


def _reduce(state, config, cap=True):
    phd = state.phd
    if config.reduction is not None:
        phd = prune_merge_cap(phd, config.reduction)
    state = FilterState(phd, state.cardinality)
    if cap and config.cap_factor is not None:
        n_hat, _ = extract_estimates(state, config.mode)
        state = FilterState(cap_components(phd, config.cap_factor * max(n_hat, 1)), state.cardinality)
    return state


# --- partition hypotheses -------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hypotheses:
    stats: object
    partitions: list  # tuples of indices into stats.subsets
    sizes: list
    exact: bool

    @property
    def num_subsets(self):
        return np.array([len(P) for P in self.partitions], dtype=int)

    def log_dP(self, log_d):
        return np.array([float(np.sum(log_d[list(P)])) if P else 0.0 for P in self.partitions])

    def log_kappa(self, sensors):
        tables = [
            np.array([log_clutter_pgf_derivative_at_zero(s.clutter, v) for v in range(m + 1)])
            for s, m in zip(sensors, self.sizes)
        ]
        per_subset = np.zeros((len(self.stats.subsets), len(sensors)), dtype=int)
        for k, W in enumerate(self.stats.subsets):
            for j, _ in W:
                per_subset[k, j] += 1
        out = np.empty(len(self.partitions))
        for p, P in enumerate(self.partitions):
            counts = per_subset[list(P)].sum(axis=0) if P else np.zeros(len(sensors), dtype=int)
            out[p] = sum(t[m - c] for t, m, c in zip(tables, self.sizes, counts))
        return out

    def subset_weights(self, partition_weights):
        """Sum of partition weights over the partitions containing each subset."""
        acc = np.zeros(len(self.stats.subsets))
        for w, P in zip(partition_weights, self.partitions):
            for k in P:
                acc[k] += w
        return acc


def _exact_hypotheses(r, frame, sensors):
    sizes = [len(Z) for Z in frame]
    if np.prod([m + 1 for m in sizes], dtype=float) > EXACT_MAX_SUBSETS:
        return None
    try:
        partitions = enumerate_partitions(frame, limit=EXACT_MAX_PARTITIONS)
    except ValueError:
        return None
    subsets = [W for W in enumerate_subsets(frame) if W]
    index = {W: k for k, W in enumerate(subsets)}
    stats = subset_statistics(r, subsets, frame, sensors)
    parts = [tuple(index[W] for W in P) for P in partitions]
    return Hypotheses(stats, parts, sizes, True)


def _greedy_hypotheses(r, frame, sensors, params, rng, rank_offset):
    """Two-step greedy construction; ``rank_offset(subset)`` adjusts log d_W for ranking."""
    sizes = [len(Z) for Z in frame]
    order = params.resolve_order(len(sensors), rng)
    per_comp = greedy_subsets(r, frame, sensors, params, order=order)
    index = {}
    for lst in per_comp:
        for s in lst:
            if s.subset and s.subset not in index:
                index[s.subset] = len(index)
    subsets = list(index)
    stats = subset_statistics(r, subsets, frame, sensors)
    rank = np.array([stats.log_dW[k] + rank_offset(W) for k, W in enumerate(subsets)])
    comp_order = np.argsort(-r.weights, kind="stable")
    columns = [
        [ScoredSubset(s.subset, rank[index[s.subset]] if s.subset else 0.0) for s in per_comp[i]]
        for i in comp_order
    ]
    found = greedy_partitions(columns, params)
    parts = [tuple(sorted(index[W] for W in P)) for P, _ in found]
    if () not in parts:
        parts.append(())
    return Hypotheses(stats, parts, sizes, False)


def build_hypotheses(r, frame, config, rng=None, rank_offset=None):
    frame = as_frame(frame, config.sensors)
    if config.exact_update:
        hyp = _exact_hypotheses(r, frame, config.sensors)
        if hyp is not None:
            return hyp
        log.info("frame too large for exact enumeration; using the greedy approximation")
    rank_offset = rank_offset or (lambda W: 0.0)
    return _greedy_hypotheses(r, frame, config.sensors, config.greedy, rng, rank_offset)


def _assemble_phd(r, miss_weight, hyp, subset_weight):
    parts = [r.scaled(miss_weight)]
    subsets = hyp.stats.subsets
    for k in sorted(range(len(subsets)), key=lambda k: subsets[k]):
        if subset_weight[k] > 0 and np.isfinite(hyp.stats.log_dW[k]):
            parts.append(hyp.stats.posterior(k).scaled(subset_weight[k]))
    return GaussianMixture.concatenate(parts, r.dim)


# --- general multisensor filters --------------------------------------------


def gcphd_update(predicted, frame, config, rng=None, return_intermediates=False):
    """General multisensor CPHD update of a predicted :class:`FilterState`."""
    r, _ = normalized_prediction(predicted)
    sensors = config.sensors
    gamma = compute_gamma(sensors)
    hyp = build_hypotheses(r, frame, config, rng)
    log_d = hyp.stats.log_dW
    log_dP = hyp.log_dP(log_d)
    log_kappa = hyp.log_kappa(sensors)
    num = hyp.num_subsets
    alphas = compute_alphas(num, log_kappa, log_dP, predicted.cardinality, gamma)
    a_W = hyp.subset_weights(np.exp(alphas.log_alpha))
    card = update_cardinality(predicted.cardinality, num, log_kappa, log_dP, gamma)
    phd = _assemble_phd(r, alphas.alpha0 * gamma, hyp, a_W)

    mean_n = card.mean()
    total = phd.total_weight
    if abs(total - mean_n) > 1e-6 * max(1.0, mean_n):
        log.warning("posterior PHD mass %.9g disagrees with cardinality mean %.9g", total, mean_n)
    if total > 0:
        phd = phd.scaled(mean_n / total)
    state = _reduce(FilterState(phd, card), config)
    if return_intermediates:
        posts = [hyp.stats.posterior(k) if np.isfinite(log_d[k]) else None for k in range(len(log_d))]
        inter = UpdateIntermediates(gamma, log_kappa, log_d, posts, alphas.alpha0, alphas.log_alpha)
        return state, inter
    return state


def _require_poisson(sensors):
    for s in sensors:
        if s.clutter.kind != "poisson":
            raise ValueError("PHD filters require Poisson clutter")
        if s.clutter.rate <= 0:
            raise ValueError("PHD filters require a positive clutter rate")


def gphd_update(predicted, frame, config, rng=None):
    """General multisensor PHD update (Poisson prediction and clutter)."""
    sensors = config.sensors
    _require_poisson(sensors)
    r, mu = normalized_prediction(predicted)
    log_mu = np.log(mu)
    log_rate = [np.log(s.clutter.rate) for s in sensors]

    def tilde_offset(W):
        return log_mu - sum(log_rate[j] for j, _ in W)

    hyp = build_hypotheses(r, frame, config, rng, rank_offset=tilde_offset)
    log_dt = np.array([d + tilde_offset(W) for d, W in zip(hyp.stats.log_dW, hyp.stats.subsets)])
    log_w = hyp.log_dP(log_dt)
    w_P = np.exp(log_w - logsumexp(log_w))
    a_W = hyp.subset_weights(w_P)
    phd = _assemble_phd(r, mu * compute_gamma(sensors), hyp, a_W)
    return _reduce(FilterState(phd, None), config)


# --- single-sensor updates and iterated correctors --------------------------


def elementary_symmetric(values):
    """``e_0..e_n`` of ``values`` via the standard one-pass recurrence."""
    values = np.asarray(values, dtype=float).reshape(-1)
    e = np.zeros(values.size + 1)
    e[0] = 1.0
    for i, v in enumerate(values):
        e[1 : i + 2] = e[1 : i + 2] + v * e[: i + 1]
    return e


def log_elementary_symmetric(log_values):
    """``log e_k`` computed on rescaled values to avoid overflow."""
    log_values = np.asarray(log_values, dtype=float).reshape(-1)
    finite = log_values[np.isfinite(log_values)]
    scale = finite.max() if finite.size else 0.0
    e = elementary_symmetric(np.exp(log_values - scale))
    k = np.arange(e.size)
    return safe_log(e) + k * scale


def _single_sensor_terms(r, Z, sensor):
    """Per-measurement log d_z and the chained posteriors for one sensor."""
    Z = np.asarray(Z, dtype=float).reshape(-1, sensor.observation.dim)
    m = len(Z)
    if m == 0 or len(r) == 0:
        return Z, np.zeros(0), None, None, np.zeros((0, len(r)))
    inn = Innovation(sensor.observation, r.means, r.covs)
    ll = inn.log_likelihood(Z).T  # (m, J)
    log_beta = sensor.log_pd - sensor.clutter.log_density + ll
    log_d = logsumexp(safe_log(r.weights) + log_beta, axis=1)
    return Z, log_d, inn.posterior_means(Z), inn.post_covs, log_beta


def _posterior_blocks(r, log_d, means, covs, log_beta, scale):
    """Mixture pieces ``scale[l] * r rho_z_l`` for every measurement ``l``."""
    blocks = []
    log_w = safe_log(r.weights)
    for l in range(len(log_d)):
        if scale[l] <= 0 or not np.isfinite(log_d[l]):
            continue
        w = np.exp(log_w + log_beta[l] - log_d[l])
        blocks.append(GaussianMixture(scale[l] * w / w.sum(), means[:, l, :], covs))
    return blocks


def single_sensor_cphd_update(predicted, Z, sensor):
    """Exact single-sensor CPHD update using elementary symmetric functions."""
    r, _ = normalized_prediction(predicted)
    card = predicted.cardinality
    Z, log_d, means, covs, log_beta = _single_sensor_terms(r, Z, sensor)
    m = len(Z)
    gamma = 1.0 - sensor.detection_prob
    logC = np.array([log_clutter_pgf_derivative_at_zero(sensor.clutter, m - k) for k in range(m + 1)])
    logM = log_pgf_derivatives(card.probs, m + 1, gamma)
    log_e = log_elementary_symmetric(log_d)
    k = np.arange(m + 1)
    den = logC + logM[k] + log_e
    S = logsumexp(den)
    if not np.isfinite(S):
        raise ValueError("no feasible explanation of measurements")
    alpha0 = float(np.exp(logsumexp(logC + logM[k + 1] + log_e) - S))

    scale = np.zeros(m)
    for l in range(m):
        log_e_rest = log_elementary_symmetric(np.delete(log_d, l))  # length m
        terms = logC[1:] + logM[1 : m + 1] + log_e_rest
        scale[l] = float(np.exp(logsumexp(terms) + log_d[l] - S))

    n = np.arange(card.n_max + 1)
    log_num = np.full(n.size, -np.inf)
    for nn in n:
        kk = np.arange(min(nn, m) + 1)
        pw = xlogy(nn - kk, gamma)
        log_num[nn] = logsumexp(logC[kk] + gammaln(nn + 1) - gammaln(nn - kk + 1) + pw + log_e[kk])
    logp = safe_log(card.probs) + log_num
    p = np.exp(logp - np.max(logp))
    post_card = CardinalityDistribution(p / p.sum())

    blocks = _posterior_blocks(r, log_d, means, covs, log_beta, scale)
    phd = GaussianMixture.concatenate([r.scaled(alpha0 * gamma)] + blocks, r.dim)
    return FilterState(phd, post_card)


def single_sensor_phd_update(predicted, Z, sensor):
    """Classic single-sensor GM-PHD update."""
    _require_poisson([sensor])
    D = predicted.phd
    Z = np.asarray(Z, dtype=float).reshape(-1, sensor.observation.dim)
    q_d = 1.0 - sensor.detection_prob
    pieces = [D.scaled(q_d)]
    if len(Z) and len(D):
        inn = Innovation(sensor.observation, D.means, D.covs)
        lik = np.exp(inn.log_likelihood(Z))  # (J, m)
        post = inn.posterior_means(Z)
        clutter = sensor.clutter.rate * sensor.clutter.density
        for l in range(len(Z)):
            num = sensor.detection_prob * D.weights * lik[:, l]
            w = num / (clutter + num.sum())
            pieces.append(GaussianMixture(w, post[:, l, :], inn.post_covs))
    return FilterState(GaussianMixture.concatenate(pieces, D.dim), None)


def ic_cphd_update(predicted, frame, config, rng=None):
    """Iterated-corrector CPHD: one single-sensor update per sensor, in order."""
    frame = as_frame(frame, config.sensors)
    state = predicted
    for j in config.greedy.resolve_order(len(config.sensors), rng):
        state = single_sensor_cphd_update(state, frame[j], config.sensors[j])
        state = _reduce(state, config, cap=False)
    return _reduce(state, config)


def ic_phd_update(predicted, frame, config, rng=None):
    """Iterated-corrector PHD."""
    frame = as_frame(frame, config.sensors)
    state = predicted
    for j in config.greedy.resolve_order(len(config.sensors), rng):
        state = single_sensor_phd_update(state, frame[j], config.sensors[j])
        state = _reduce(state, config, cap=False)
    return _reduce(state, config)


UPDATES = {
    "gcphd": gcphd_update,
    "gphd": gphd_update,
    "iccphd": ic_cphd_update,
    "icphd": ic_phd_update,
}


def update(predicted, frame, config, rng=None):
    return UPDATES[config.mode](predicted, frame, config, rng)


def filter_step(state, frame, config, birth, rng=None):
    """Predict, update and reduce; returns the new posterior state."""
    return update(predict(state, config, birth), frame, config, rng)


def with_mode(config, mode):
    return replace(config, mode=mode)
