"""
Gaussian mixtures: prediction, Kalman update, pruning and merging
=================================================================

"""

import numpy as np

from mscphd.gaussian import (
    GaussianComponent,
    GaussianMixture,
    LinearObservationModel,
    MotionModel,
    ReductionParams,
    kalman_component_update,
    predict_mixture,
    prune_merge_cap,
)

# a nearly constant velocity model with unit sampling time
motion = MotionModel.ncv(T=1.0, sigma=0.25)
gm = GaussianMixture(
    np.array([0.6, 0.3, 1e-6]),
    np.array([[0.0, 0.0, 5.0, 0.0], [2.0, 1.0, 5.0, 0.0], [500.0, 500.0, 0.0, 0.0]]),
    np.stack([np.diag([100.0, 100.0, 25.0, 25.0])] * 3),
)

# survival probability thins the weights, F moves the means
pred = predict_mixture(gm, motion, p_sv=0.99)
print("predicted weights", pred.weights)
print("predicted means\n", pred.means)

# a position sensor with 10 m noise
sensor = LinearObservationModel.position(10.0)
comp, q = kalman_component_update(pred.components[0], sensor, np.array([6.0, -1.0]))
print("updated mean", comp.mean, "marginal likelihood", q)

# tiny weights are pruned, nearby components merge
reduced = prune_merge_cap(pred, ReductionParams())
print(len(pred), "->", len(reduced), "components; mass", reduced.total_weight)
