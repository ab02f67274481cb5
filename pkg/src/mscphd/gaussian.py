"""Gaussian component arithmetic for Gaussian-mixture PHD/CPHD filters.

Mixtures are stored as stacked arrays (``weights`` of shape ``(J,)``,
``means`` of shape ``(J, n)`` and ``covs`` of shape ``(J, n, n)``) so that
measurement updates can be applied to many components at once.  The
single-component functions (:func:`kalman_component_update`,
:func:`ut_component_update`, ...) are thin wrappers over the batched
machinery in :class:`Innovation`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


def symmetrize(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def wrap_degrees(angle):
    """Wrap angles (degrees) to ``[-180, 180)``."""
    return (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, dtype=float)))
        if self.weight < 0:
            raise ValueError("component weight must be nonnegative")
        if self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape does not match mean")


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of Gaussian densities (possibly unnormalized)."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        m = np.asarray(self.means, dtype=float)
        if m.ndim == 1:
            m = m.reshape(w.size, -1)
        P = np.asarray(self.covs, dtype=float)
        if P.ndim == 2 and w.size:
            P = P.reshape(w.size, m.shape[1], m.shape[1])
        if m.shape[0] != w.size or P.shape[:1] != (w.size,):
            raise ValueError("weights, means and covs disagree on component count")
        if np.any(w < -1e-12):
            raise ValueError("mixture weights must be nonnegative")
        object.__setattr__(self, "weights", np.maximum(w, 0.0))
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", P)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros(0), np.zeros((0, dim)), np.zeros((0, dim, dim)))

    @classmethod
    def from_components(cls, components, dim=None):
        components = list(components)
        if not components:
            if dim is None:
                raise ValueError("dim required for an empty mixture")
            return cls.empty(dim)
        return cls(
            np.array([c.weight for c in components]),
            np.stack([c.mean for c in components]),
            np.stack([c.cov for c in components]),
        )

    @property
    def components(self):
        return [GaussianComponent(w, m, P) for w, m, P in zip(self.weights, self.means, self.covs)]

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def __len__(self):
        return self.weights.size

    def with_weights(self, weights):
        return GaussianMixture(weights, self.means, self.covs)

    def scaled(self, factor):
        return self.with_weights(self.weights * factor)

    def normalized(self):
        total = self.total_weight
        if total <= 0:
            raise ValueError("cannot normalize a mixture with zero total weight")
        return self.scaled(1.0 / total)

    def take(self, idx):
        idx = np.asarray(idx, dtype=int)
        return GaussianMixture(self.weights[idx], self.means[idx], self.covs[idx])

    @staticmethod
    def concatenate(mixtures, dim):
        mixtures = [m for m in mixtures if len(m)]
        if not mixtures:
            return GaussianMixture.empty(dim)
        return GaussianMixture(
            np.concatenate([m.weights for m in mixtures]),
            np.concatenate([m.means for m in mixtures]),
            np.concatenate([m.covs for m in mixtures]),
        )

    def pdf(self, x):
        """Evaluate the mixture at points ``x`` of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for w, m, P in zip(self.weights, self.means, self.covs):
            out += w * eval_gaussian(x, m, P)
        return out


def eval_gaussian(x, mean, cov):
    """Multivariate normal density N(x; mean, cov).

    ``x`` may carry leading batch dimensions; the last axis is the state.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != mean.size:
        x = x[..., None]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("singular covariance") from None
    diff = (x - mean).reshape(-1, mean.size).T
    y = np.linalg.solve(chol, diff)
    maha = np.sum(y * y, axis=0)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    dens = np.exp(-0.5 * (maha + logdet + mean.size * LOG_2PI))
    dens = dens.reshape(x.shape[:-1])
    return float(dens) if dens.ndim == 0 else dens


@dataclass(frozen=True, eq=False)
class MotionModel:
    transition_matrix: np.ndarray
    process_noise_cov: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.transition_matrix, dtype=float))
        Q = np.atleast_2d(np.asarray(self.process_noise_cov, dtype=float))
        if not np.allclose(Q, Q.T):
            raise ValueError("process noise covariance must be symmetric")
        object.__setattr__(self, "transition_matrix", F)
        object.__setattr__(self, "process_noise_cov", Q)

    @classmethod
    def ncv(cls, T=1.0, sigma=0.25):
        """Planar nearly-constant-velocity model, state ``[x, y, vx, vy]``."""
        F = np.eye(4)
        F[0, 2] = F[1, 3] = T
        q = np.array([[T**3 / 3, T**2 / 2], [T**2 / 2, T]]) * sigma**2
        Q = np.zeros((4, 4))
        Q[np.ix_([0, 2], [0, 2])] = q
        Q[np.ix_([1, 3], [1, 3])] = q
        return cls(F, Q)

    @classmethod
    def random_walk(cls, sigma, dim=2):
        return cls(np.eye(dim), sigma**2 * np.eye(dim))

    @property
    def dim(self):
        return self.transition_matrix.shape[0]


def component_predict(comp, model, p_sv):
    F, Q = model.transition_matrix, model.process_noise_cov
    return GaussianComponent(p_sv * comp.weight, F @ comp.mean, symmetrize(F @ comp.cov @ F.T + Q))


def predict_mixture(gm, model, p_sv):
    """Apply :func:`component_predict` to every component of ``gm``."""
    F, Q = model.transition_matrix, model.process_noise_cov
    if not len(gm):
        return gm
    covs = symmetrize(np.einsum("ij,bjk,lk->bil", F, gm.covs, F) + Q)
    return GaussianMixture(p_sv * gm.weights, gm.means @ F.T, covs)


@dataclass(frozen=True)
class UnscentedParams:
    alpha: float = 1e-1
    beta: float = 2.0
    kappa: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    def weights(self, n):
        lam = self.alpha**2 * (n + self.kappa) - n
        spread = n + lam
        if spread <= 0:
            raise ValueError("unscented spread n + lambda must be positive")
        wm = np.full(2 * n + 1, 0.5 / spread)
        wc = wm.copy()
        wm[0] = lam / spread
        wc[0] = lam / spread + 1.0 - self.alpha**2 + self.beta
        return spread, wm, wc


def sigma_points(means, covs, params):
    """Batched sigma points, shape ``(B, 2n+1, n)``, plus mean/cov weights."""
    n = means.shape[-1]
    spread, wm, wc = params.weights(n)
    try:
        L = np.linalg.cholesky(spread * covs)
    except np.linalg.LinAlgError:
        raise ValueError("singular covariance") from None
    offsets = np.swapaxes(L, -1, -2)  # rows are the columns of L
    pts = np.concatenate(
        [means[:, None, :], means[:, None, :] + offsets, means[:, None, :] - offsets], axis=1
    )
    return pts, wm, wc


def unscented_moments(means, covs, func, noise_cov, params, angular=False):
    """Predicted measurement mean, innovation covariance and cross covariance.

    ``func`` maps sigma points of shape ``(B, K, n)`` to ``(B, K, d)``.  With
    ``angular=True`` the outputs are bearings in degrees and are unwrapped
    around the central sigma point before averaging.
    """
    pts, wm, wc = sigma_points(means, covs, params)
    Y = func(pts)
    if angular:
        Y = Y[:, :1] + wrap_degrees(Y - Y[:, :1])
    zhat = np.einsum("k,bkd->bd", wm, Y)
    dY = Y - zhat[:, None, :]
    dX = pts - means[:, None, :]
    S = np.einsum("k,bki,bkj->bij", wc, dY, dY) + noise_cov
    C = np.einsum("k,bki,bkj->bij", wc, dX, dY)
    if angular:
        zhat = zhat % 360.0
    return zhat, symmetrize(S), C


@dataclass(frozen=True, eq=False)
class LinearObservationModel:
    obs_matrix: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.obs_matrix, dtype=float))
        R = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if R.shape != (H.shape[0], H.shape[0]):
            raise ValueError("noise covariance shape does not match observation matrix")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("noise covariance must be positive definite") from None
        object.__setattr__(self, "obs_matrix", H)
        object.__setattr__(self, "noise_cov", R)

    @classmethod
    def position(cls, sigma, state_dim=4):
        """Observe the planar position ``(x, y)`` with isotropic noise ``sigma``."""
        H = np.zeros((2, state_dim))
        H[0, 0] = H[1, 1] = 1.0
        return cls(H, sigma**2 * np.eye(2))

    @property
    def dim(self):
        return self.obs_matrix.shape[0]

    def moments(self, means, covs):
        H = self.obs_matrix
        C = covs @ H.T
        S = symmetrize(H @ C + self.noise_cov)
        return means @ H.T, S, C

    def residual(self, z, zhat):
        return z - zhat


@dataclass(frozen=True, eq=False)
class BearingObservationModel:
    """Bearing (degrees, ``[0, 360)``) from a known sensor position."""

    sensor_position: np.ndarray
    noise_std: float
    ut: UnscentedParams = field(default_factory=UnscentedParams)
    position_indices: tuple = (0, 1)

    def __post_init__(self):
        object.__setattr__(self, "sensor_position", np.asarray(self.sensor_position, dtype=float))
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")

    dim = 1

    @property
    def noise_cov(self):
        return np.array([[self.noise_std**2]])

    def bearing(self, states):
        states = np.asarray(states, dtype=float)
        i, j = self.position_indices
        dx = states[..., i] - self.sensor_position[0]
        dy = states[..., j] - self.sensor_position[1]
        return np.degrees(np.arctan2(dy, dx)) % 360.0

    def moments(self, means, covs):
        i, j = self.position_indices
        offset = means[:, [i, j]] - self.sensor_position
        if np.any(np.all(offset == 0.0, axis=1)):
            raise ValueError("bearing undefined: target mean coincides with sensor position")
        return unscented_moments(
            means, covs, lambda x: self.bearing(x)[..., None], self.noise_cov, self.ut, angular=True
        )

    def residual(self, z, zhat):
        return wrap_degrees(z - zhat)


class Innovation:
    """Measurement-update quantities for a batch of Gaussian states.

    Built once per (batch, sensor); likelihoods and posterior means can then
    be evaluated for any number of measurements.
    """

    def __init__(self, model, means, covs):
        self.model = model
        self.means = means
        zhat, S, C = model.moments(means, covs)
        try:
            chol = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise ValueError("singular innovation covariance") from None
        self.zhat = zhat
        self.S = S
        self.S_inv = np.linalg.inv(S)
        self.logdet = 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
        self.gain = C @ self.S_inv
        self.post_covs = symmetrize(covs - self.gain @ S @ np.swapaxes(self.gain, -1, -2))

    def log_likelihood(self, Z):
        """Log marginal likelihoods, shape ``(B, m)``, for measurements ``Z`` ``(m, d)``."""
        Z = np.asarray(Z, dtype=float).reshape(-1, self.zhat.shape[-1])
        r = self.model.residual(Z[None, :, :], self.zhat[:, None, :])
        maha = np.einsum("bmi,bij,bmj->bm", r, self.S_inv, r)
        d = self.zhat.shape[-1]
        return -0.5 * (maha + self.logdet[:, None] + d * LOG_2PI)

    def posterior_means(self, Z):
        """Posterior means, shape ``(B, m, n)``."""
        Z = np.asarray(Z, dtype=float).reshape(-1, self.zhat.shape[-1])
        r = self.model.residual(Z[None, :, :], self.zhat[:, None, :])
        return self.means[:, None, :] + np.einsum("bnd,bmd->bmn", self.gain, r)

    def row_update(self, Z):
        """Update row ``b`` with its own measurement ``Z[b]``.

        Returns ``(posterior_means, posterior_covs, log_likelihoods)``.
        """
        Z = np.asarray(Z, dtype=float).reshape(self.zhat.shape)
        r = self.model.residual(Z, self.zhat)
        maha = np.einsum("bi,bij,bj->b", r, self.S_inv, r)
        d = self.zhat.shape[-1]
        loglik = -0.5 * (maha + self.logdet + d * LOG_2PI)
        means = self.means + np.einsum("bnd,bd->bn", self.gain, r)
        return means, self.post_covs, loglik


def _single_update(comp, model, z):
    inn = Innovation(model, comp.mean[None, :], comp.cov[None, :, :])
    means, covs, loglik = inn.row_update(np.atleast_1d(np.asarray(z, dtype=float))[None, :])
    return GaussianComponent(comp.weight, means[0], covs[0]), float(np.exp(loglik[0]))


def kalman_component_update(comp, model, z):
    """Conjugate update of one component by a linear-Gaussian measurement.

    Returns the posterior component (weight untouched) and the marginal
    likelihood ``N(z; H m, H P H' + R)``.
    """
    return _single_update(comp, model, z)


def ut_component_update(comp, model, z, params=None):
    """Unscented update of one component by a bearing measurement (degrees)."""
    if params is not None and params != model.ut:
        model = BearingObservationModel(model.sensor_position, model.noise_std, params, model.position_indices)
    return _single_update(comp, model, z)


@dataclass(frozen=True)
class ReductionParams:
    prune_threshold: float = 1e-5
    merge_threshold: float = 4.0
    max_components: int = 100

    def __post_init__(self):
        if not all(np.isfinite([self.prune_threshold, self.merge_threshold])):
            raise ValueError("reduction thresholds must be finite")
        if self.prune_threshold < 0 or self.merge_threshold < 0:
            raise ValueError("reduction thresholds must be nonnegative")
        if self.max_components < 1:
            raise ValueError("max_components must be positive")


def prune_merge_cap(gm, params):
    """Prune low weights, merge close components, cap the count.

    The output total weight is rescaled to the input total weight.
    """
    total_in = gm.total_weight
    keep = np.flatnonzero((gm.weights >= params.prune_threshold) & (gm.weights > 0))
    if keep.size == 0:
        return GaussianMixture.empty(gm.dim)
    w, m, P = gm.weights[keep], gm.means[keep], gm.covs[keep]

    remaining = np.ones(w.size, dtype=bool)
    out_w, out_m, out_P = [], [], []
    while remaining.any():
        cand = np.flatnonzero(remaining)
        j = cand[np.argmax(w[cand])]  # argmax returns the first index on ties
        diff = m[cand] - m[j]
        maha = np.einsum("bi,ij,bj->b", diff, np.linalg.inv(P[j]), diff)
        group = cand[maha <= params.merge_threshold]
        wg = w[group]
        wsum = wg.sum()
        mean = wg @ m[group] / wsum
        d = m[group] - mean
        cov = (np.einsum("b,bij->ij", wg, P[group]) + np.einsum("b,bi,bj->ij", wg, d, d)) / wsum
        out_w.append(wsum)
        out_m.append(mean)
        out_P.append(symmetrize(cov))
        remaining[group] = False

    out_w = np.array(out_w)
    order = np.argsort(-out_w, kind="stable")[: params.max_components]
    reduced = GaussianMixture(out_w[order], np.stack(out_m)[order], np.stack(out_P)[order])
    return reduced.scaled(total_in / reduced.total_weight)
