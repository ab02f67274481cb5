"""Gaussian-mixture multisensor PHD and CPHD filters.

The general multisensor update scores partitions of the joint measurement
frame into target-originated subsets; a two-step greedy search keeps the
number of scored partitions small.  Iterated-corrector baselines, a
seeded simulator, the OSPA metric and a Monte-Carlo driver are included.
"""

from .cardinality import CardinalityDistribution, ClutterModel
from .filters import (
    BirthModel,
    FilterConfig,
    FilterState,
    extract_estimates,
    filter_step,
    gcphd_update,
    gphd_update,
    ic_cphd_update,
    ic_phd_update,
    initial_state,
    predict,
    single_sensor_cphd_update,
    single_sensor_phd_update,
)
from .gaussian import (
    BearingObservationModel,
    GaussianComponent,
    GaussianMixture,
    LinearObservationModel,
    MotionModel,
    ReductionParams,
    UnscentedParams,
)
from .metrics import OspaParams, ospa
from .partitioning import GreedyParams, enumerate_partitions, enumerate_subsets
from .simulator import Scenario, load_scenario, simulate_tracks
from .update import SensorModel

__all__ = [
    "BearingObservationModel",
    "BirthModel",
    "CardinalityDistribution",
    "ClutterModel",
    "FilterConfig",
    "FilterState",
    "GaussianComponent",
    "GaussianMixture",
    "GreedyParams",
    "LinearObservationModel",
    "MotionModel",
    "OspaParams",
    "ReductionParams",
    "Scenario",
    "SensorModel",
    "UnscentedParams",
    "enumerate_partitions",
    "enumerate_subsets",
    "extract_estimates",
    "filter_step",
    "gcphd_update",
    "gphd_update",
    "ic_cphd_update",
    "ic_phd_update",
    "initial_state",
    "load_scenario",
    "ospa",
    "predict",
    "simulate_tracks",
    "single_sensor_cphd_update",
    "single_sensor_phd_update",
]
