"""Measurement subsets, partitions, exact enumeration and greedy trellis search.

A subset ``W`` is a tuple of ``(sensor, index)`` pairs (0-based, sorted by
sensor, at most one pair per sensor).  A partition is a sorted tuple of
disjoint nonempty subsets; measurements not covered are clutter.
"""

from __future__ import annotations

import itertools
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianMixture, Innovation
from .update import as_frame, floor_log

MAX_ENUMERATION = 10**7

ScoredSubset = namedtuple("ScoredSubset", ["subset", "log_score"])


def frame_sizes(frame):
    return [len(Z) for Z in frame]


def canonical_partition(subsets):
    return tuple(sorted(tuple(sorted(W)) for W in subsets if W))


def is_valid_subset(subset, sizes):
    sensors = [j for j, _ in subset]
    if len(set(sensors)) != len(sensors):
        return False
    return all(0 <= j < len(sizes) and 0 <= l < sizes[j] for j, l in subset)


def is_valid_partition(partition, sizes):
    seen = set()
    for W in partition:
        if not W or not is_valid_subset(W, sizes):
            return False
        for pair in W:
            if pair in seen:
                return False
            seen.add(pair)
    return True


def partition_size(partition):
    """``|P|``: the number of target subsets plus one for the clutter set."""
    return len(partition) + 1


def enumerate_subsets(frame):
    """Every subset with at most one measurement per sensor, empty subset first."""
    sizes = frame_sizes(frame)
    total = int(np.prod([m + 1 for m in sizes], dtype=float))
    if total > MAX_ENUMERATION:
        raise ValueError("enumeration too large")
    choices = [range(-1, m) for m in sizes]
    out = []
    for pick in itertools.product(*choices):
        out.append(tuple((j, l) for j, l in enumerate(pick) if l >= 0))
    out.sort(key=lambda W: (len(W), W))
    return out


def _extend(subsets, sensor, m, out):
    """Append every way of distributing sensor ``sensor``'s measurements.

    Each measurement is clutter, a new singleton, or joins one existing
    subset (each existing subset receives at most one measurement).
    """
    base = len(subsets)

    def rec(l, current, used):
        if l == m:
            out.append(current)
            return
        rec(l + 1, current, used)
        rec(l + 1, current + (((sensor, l),),), used)
        for b in range(base):
            if b not in used:
                extended = current[:b] + (current[b] + ((sensor, l),),) + current[b + 1 :]
                rec(l + 1, extended, used | {b})

    rec(0, subsets, frozenset())


def enumerate_partitions(frame, limit=MAX_ENUMERATION):
    """All valid partitions, built sensor by sensor.

    Raises ``ValueError("enumeration too large")`` once more than ``limit``
    partitions would be held.
    """
    sizes = frame_sizes(frame)
    if np.prod([m + 1 for m in sizes], dtype=float) > MAX_ENUMERATION:
        raise ValueError("enumeration too large")
    partitions = [()]
    for j, m in enumerate(sizes):
        nxt = []
        for P in partitions:
            _extend(P, j, m, nxt)
            if len(nxt) > limit:
                raise ValueError("enumeration too large")
        partitions = nxt
    return [canonical_partition(P) for P in partitions]


@dataclass(frozen=True)
class GreedyParams:
    """Beam widths for the subset and partition trellises.

    ``sensor_order`` is ``None`` (ascending), an explicit permutation, or
    ``"random"`` (a fresh permutation per call, drawn from the supplied
    generator or from ``seed``).
    """

    w_max: int = 6
    p_max: int = 6
    sensor_order: tuple | str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.w_max < 1 or self.p_max < 1:
            raise ValueError("w_max and p_max must be at least 1")
        if isinstance(self.sensor_order, (list, np.ndarray)):
            object.__setattr__(self, "sensor_order", tuple(int(j) for j in self.sensor_order))

    def resolve_order(self, num_sensors, rng=None):
        if self.sensor_order is None:
            return list(range(num_sensors))
        if isinstance(self.sensor_order, str):
            if self.sensor_order != "random":
                raise ValueError(f"unknown sensor order {self.sensor_order!r}")
            rng = rng if rng is not None else np.random.default_rng(self.seed)
            return [int(j) for j in rng.permutation(num_sensors)]
        order = list(self.sensor_order)
        if sorted(order) != list(range(num_sensors)):
            raise ValueError("sensor_order must be a permutation of the sensor indices")
        return order


def subset_score_beta(component, subset, frame, sensors, restrict_to_first=None, order=None):
    """log beta for one unit-weight component and one subset.

    Only the first ``restrict_to_first`` sensors of ``order`` (default: all
    sensors, ascending) contribute miss factors.  Measurements are
    conditioned on one after another, in ascending sensor order.
    """
    frame = as_frame(frame, sensors)
    order = list(range(len(sensors))) if order is None else list(order)
    considered = order if restrict_to_first is None else order[:restrict_to_first]
    picked = dict(subset)
    mean, cov = component.mean[None, :], component.cov[None, :, :]
    score = 0.0
    for j in sorted(picked):
        sensor = sensors[j]
        z = frame[j][picked[j]]
        inn = Innovation(sensor.observation, mean, cov)
        mean, cov, ll = inn.row_update(z[None, :])
        score += sensor.log_pd + float(ll[0]) - sensor.clutter.log_density
    for j in considered:
        if j not in picked:
            score += sensors[j].log_qd
    return float(floor_log(score))


def greedy_subsets(mixture, frame, sensors, params, rng=None, order=None):
    """Subset trellis for every component of ``mixture`` at once.

    Returns one list of :class:`ScoredSubset` per component (log beta
    scores, descending), each holding at most ``w_max`` subsets plus the
    empty subset.
    """
    frame = as_frame(frame, sensors)
    if order is None:
        order = params.resolve_order(len(sensors), rng)
    J, n = len(mixture), mixture.dim
    owner = np.arange(J)
    score = np.zeros(J)
    means = mixture.means.copy()
    covs = mixture.covs.copy()
    subsets = [()] * J
    for j in order:
        sensor = sensors[j]
        Z = frame[j]
        m = len(Z)
        B = owner.size
        cand = np.empty((B, m + 1))
        cand[:, 0] = score + sensor.log_qd
        if m:
            inn = Innovation(sensor.observation, means, covs)
            ll = inn.log_likelihood(Z)
            post_means = inn.posterior_means(Z)
            cand[:, 1:] = score[:, None] + sensor.log_pd - sensor.clutter.log_density + ll
        cand = floor_log(cand)
        flat = cand.ravel()
        row = np.repeat(np.arange(B), m + 1)
        col = np.tile(np.arange(m + 1), B)
        ok = np.isfinite(flat)
        flat, row, col = flat[ok], row[ok], col[ok]
        idx = np.arange(flat.size)
        srt = np.lexsort((idx, -flat, owner[row]))
        own_sorted = owner[row[srt]]
        first = np.searchsorted(own_sorted, own_sorted, side="left")
        keep = srt[(np.arange(srt.size) - first) < params.w_max]
        b, c = row[keep], col[keep]
        new_means = means[b].copy()
        new_covs = covs[b].copy()
        hit = c > 0
        if hit.any():
            new_means[hit] = post_means[b[hit], c[hit] - 1]
            new_covs[hit] = inn.post_covs[b[hit]]
        subsets = [subsets[bb] + ((j, int(cc) - 1),) if cc else subsets[bb] for bb, cc in zip(b, c)]
        owner, score, means, covs = owner[b], flat[keep], new_means, new_covs

    log_gamma = sum(s.log_qd for s in sensors)
    out = [[] for _ in range(J)]
    for i, W, sc in zip(owner, subsets, score):
        out[i].append(ScoredSubset(tuple(sorted(W)), float(sc)))
    for lst in out:
        lst.sort(key=lambda s: -s.log_score)
        if not any(not s.subset for s in lst):
            lst.append(ScoredSubset((), float(floor_log(log_gamma))))
    return out


def greedy_subsets_per_component(component, frame, sensors, params, rng=None):
    gm = GaussianMixture(np.ones(1), component.mean[None, :], component.cov[None, :, :])
    return greedy_subsets(gm, frame, sensors, params, rng)[0]


def greedy_partitions(per_component_subsets, params):
    """Partition trellis over component columns.

    ``per_component_subsets`` lists, per component (heaviest first), the
    offered subsets scored by log d_W.  The empty subset always extends a
    partial partition with factor 1 regardless of any score attached to
    it.  Returns up to ``p_max`` ``(partition, log d_P)`` pairs, best first.
    """
    beam = [((), frozenset(), 0.0)]
    for column in per_component_subsets:
        options = [(tuple(s.subset), float(s.log_score)) for s in column if s.subset]
        options = [(W, sc) for W, sc in options if np.isfinite(sc)]
        seen = set()
        cands = []
        for P, used, sc in beam:
            if P not in seen:
                seen.add(P)
                cands.append((P, used, sc))
            for W, w_sc in options:
                if used.intersection(W):
                    continue
                Q = canonical_partition(P + (W,))
                if Q in seen:
                    continue
                seen.add(Q)
                cands.append((Q, used.union(W), sc + w_sc))
        order = sorted(range(len(cands)), key=lambda i: -cands[i][2])
        beam = [cands[i] for i in order[: params.p_max]]
    return [(P, sc) for P, _, sc in beam]
