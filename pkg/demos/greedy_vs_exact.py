"""
Greedy partition search versus full enumeration
===============================================

A multisensor update sums over partitions of the measurements into
subsets, each subset holding at most one measurement per sensor.  The
count explodes quickly, so the filter builds a small set of good
partitions greedily.  Here the two are compared on a small frame.
"""

import numpy as np

from mscphd.cardinality import CardinalityDistribution, ClutterModel
from mscphd.filters import FilterConfig, FilterState, gcphd_update
from mscphd.gaussian import GaussianMixture, LinearObservationModel, MotionModel
from mscphd.partitioning import GreedyParams, enumerate_partitions
from mscphd.update import SensorModel

rng = np.random.default_rng(1)
sensors = [
    SensorModel(0.8, LinearObservationModel.position(10.0), ClutterModel.poisson(1.0, 2000.0**2)),
    SensorModel(0.6, LinearObservationModel.position(10.0), ClutterModel.poisson(1.0, 2000.0**2)),
]
targets = np.array([[0.0, 0.0], [300.0, -200.0]])
frame = [targets + rng.normal(0, 10, targets.shape) for _ in sensors]

means = np.zeros((2, 4))
means[:, :2] = targets + 20.0
card = CardinalityDistribution.from_unnormalized([0.1, 0.3, 0.4, 0.2])
gm = GaussianMixture(np.full(2, card.mean() / 2), means, np.stack([np.diag([400.0, 400.0, 25.0, 25.0])] * 2))
pred = FilterState(gm, card)

print("partitions of this frame:", len(enumerate_partitions(frame)))

config = FilterConfig(MotionModel.ncv(), sensors, reduction=None, cap_factor=None, n_max=3)
exact = gcphd_update(pred, frame, FilterConfig(**{**config.__dict__, "exact_update": True}))
greedy = gcphd_update(pred, frame, config)
wide = gcphd_update(pred, frame, FilterConfig(**{**config.__dict__, "greedy": GreedyParams(100, 100)}))

for name, post in (("exact", exact), ("greedy 6/6", greedy), ("greedy wide", wide)):
    print(f"{name:12s} cardinality {np.round(post.cardinality.probs, 4)}  components {len(post.phd)}")

# one subset per component column: with two components the trellis never
# proposes partitions of three or more detection subsets
