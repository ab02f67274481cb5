"""
Single-sensor CPHD with elementary symmetric functions
======================================================

"""

import numpy as np

from mscphd.cardinality import CardinalityDistribution, ClutterModel
from mscphd.filters import FilterState, elementary_symmetric, single_sensor_cphd_update
from mscphd.gaussian import GaussianMixture, LinearObservationModel
from mscphd.update import SensorModel

# e_0..e_3 of {1, 2, 3}
print(elementary_symmetric([1.0, 2.0, 3.0]))

sensor = SensorModel(0.9, LinearObservationModel.position(5.0), ClutterModel.poisson(3.0, 1000.0**2))
card = CardinalityDistribution.poisson(1.5, 20)
gm = GaussianMixture(np.array([0.75, 0.75]), np.array([[0, 0, 0, 0], [100, 0, 0, 0.0]]),
                     np.stack([np.diag([200.0, 200.0, 10.0, 10.0])] * 2))
Z = np.array([[2.0, -3.0], [98.0, 4.0], [-400.0, 250.0]])

post = single_sensor_cphd_update(FilterState(gm, card), Z, sensor)
print("posterior cardinality mode", post.cardinality.map(), "mean", round(post.cardinality.mean(), 3))
print("heaviest components", np.round(np.sort(post.phd.weights)[::-1][:3], 3))
