"""Cardinality distributions, PGF derivatives and CPHD cardinality prediction."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

log = logging.getLogger(__name__)

DEFAULT_N_MAX = 20


@dataclass(frozen=True, eq=False)
class CardinalityDistribution:
    """Probability vector over target counts ``0..n_max``.

    ``truncated_mass`` records probability that fell above ``n_max`` and was
    renormalized away when this distribution was produced.
    """

    probs: np.ndarray
    truncated_mass: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size == 0:
            raise ValueError("cardinality distribution needs at least one entry")
        if np.any(p < 0):
            raise ValueError("cardinality probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"cardinality probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def delta(cls, n, n_max=DEFAULT_N_MAX):
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)

    @classmethod
    def poisson(cls, mean, n_max=DEFAULT_N_MAX):
        """Poisson(mean) truncated to ``0..n_max`` and renormalized."""
        n = np.arange(n_max + 1)
        logp = xlogy(n, mean) - mean - gammaln(n + 1)
        p = np.exp(logp - logsumexp(logp))
        return cls(p / p.sum())

    @classmethod
    def from_unnormalized(cls, weights):
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    @property
    def n_max(self):
        return self.probs.size - 1

    def mean(self):
        return mean_cardinality(self)

    def map(self):
        return map_cardinality(self)


def mean_cardinality(dist):
    return float(np.arange(dist.probs.size) @ dist.probs)


def map_cardinality(dist):
    # np.argmax picks the first maximum, i.e. the smaller n on ties
    return int(np.argmax(dist.probs))


def log_pgf_derivatives(probs, max_order, t):
    """``log M^(v)(t)`` for ``v = 0..max_order`` of the PGF with coefficients ``probs``.

    ``M^(v)(t) = sum_{n>=v} n!/(n-v)! t^(n-v) p(n)``; orders beyond the
    support give ``-inf``.
    """
    probs = np.asarray(probs, dtype=float)
    n = np.arange(probs.size)
    out = np.full(max_order + 1, -np.inf)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
        logt = np.log(t) if t > 0 else -np.inf
    for v in range(min(max_order, probs.size - 1) + 1):
        k = n[v:] - v
        terms = logp[v:] + gammaln(n[v:] + 1) - gammaln(k + 1)
        if t > 0:
            terms = terms + k * logt
        else:
            terms = np.where(k == 0, terms, -np.inf)
        out[v] = logsumexp(terms)
    return out


def log_pgf_derivative(dist, order, point):
    if order < 0:
        raise ValueError("order must be nonnegative")
    probs = dist.probs if isinstance(dist, CardinalityDistribution) else dist
    return float(log_pgf_derivatives(probs, order, point)[order])


def pgf_derivative(dist, order, point):
    """v-th derivative of the PGF of ``dist`` evaluated at ``point`` in [0, 1]."""
    if not 0.0 <= point <= 1.0:
        raise ValueError("point must lie in [0, 1]")
    return float(np.exp(log_pgf_derivative(dist, order, point)))


@dataclass(frozen=True, eq=False)
class ClutterModel:
    """IIDC clutter: Poisson(``rate``) or finite ``probs`` cardinality, uniform spatial density.

    ``area`` is the measure of the measurement space (m^2 for a rectangle,
    360 for bearings in degrees); the spatial density is ``1 / area``.
    """

    area: float
    rate: float | None = None
    probs: CardinalityDistribution | None = None

    def __post_init__(self):
        if (self.rate is None) == (self.probs is None):
            raise ValueError("give exactly one of rate (Poisson) or probs (finite)")
        if self.rate is not None and self.rate < 0:
            raise ValueError("clutter rate must be nonnegative")
        if self.area <= 0:
            raise ValueError("clutter support must have positive measure")

    @classmethod
    def poisson(cls, rate, area):
        return cls(area=area, rate=float(rate))

    @classmethod
    def finite(cls, probs, area):
        if not isinstance(probs, CardinalityDistribution):
            probs = CardinalityDistribution(probs)
        return cls(area=area, probs=probs)

    @property
    def kind(self):
        return "poisson" if self.rate is not None else "finite"

    @property
    def density(self):
        return 1.0 / self.area

    @property
    def log_density(self):
        return -np.log(self.area)


def log_clutter_pgf_derivative_at_zero(model, order):
    if order < 0:
        raise ValueError("order must be nonnegative")
    if model.kind == "poisson":
        lam = model.rate
        if lam == 0.0:
            return 0.0 if order == 0 else -np.inf
        return order * np.log(lam) - lam
    p = model.probs.probs
    if order >= p.size or p[order] == 0.0:
        return -np.inf
    return float(gammaln(order + 1) + np.log(p[order]))


def clutter_pgf_derivative_at_zero(model, order):
    """``C^(v)(0)``: ``lambda^v e^-lambda`` for Poisson clutter, ``v! p_c(v)`` otherwise."""
    return float(np.exp(log_clutter_pgf_derivative_at_zero(model, order)))


def predict_cardinality(posterior, survival_fraction, birth):
    """Binomial thinning of ``posterior`` by ``survival_fraction`` convolved with ``birth``.

    The result lives on ``0..posterior.n_max``; mass above is dropped,
    recorded in ``truncated_mass`` and the rest renormalized.
    """
    phi = float(survival_fraction)
    if not 0.0 <= phi <= 1.0:
        raise ValueError("survival fraction must lie in [0, 1]")
    n_max = posterior.n_max
    p = posterior.probs
    l = np.arange(p.size)[None, :]
    j = np.arange(p.size)[:, None]
    with np.errstate(invalid="ignore"):
        log_binom = gammaln(l + 1) - gammaln(j + 1) - gammaln(np.maximum(l - j, 0) + 1)
        log_terms = log_binom + xlogy(j, phi) + xlogy(l - j, 1.0 - phi)
    thin = np.where(l >= j, np.exp(log_terms), 0.0)
    survived = thin @ p
    full = np.convolve(survived, birth.probs)
    kept = full[: n_max + 1]
    dropped = float(full[n_max + 1 :].sum())
    if dropped > 0:
        log.debug("cardinality prediction truncated %.3g probability mass", dropped)
    return CardinalityDistribution(kept / kept.sum(), truncated_mass=dropped)
