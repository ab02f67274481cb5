"""
Tracking eight targets with six position sensors
================================================

Targets appear in pairs every twenty steps and the last pair leaves at
step 80.  One filter run is printed every ten steps.
"""

import numpy as np

from mscphd.cli import ExperimentConfig, build_setup
from mscphd.filters import extract_estimates, filter_step, initial_state
from mscphd.metrics import ospa
from mscphd.simulator import STREAM_FILTER, generate_measurements, load_scenario, simulate_tracks, substream

scn = load_scenario("linear_8target")
tracks = simulate_tracks(scn)
frames = generate_measurements(scn, tracks, run=0)
setup = build_setup(scn, "gcphd", ExperimentConfig("linear_8target"))

state = initial_state(setup.config, 4)
rng = substream(scn.seed, STREAM_FILTER)
errors = []
for k, frame in enumerate(frames, start=1):
    state = filter_step(state, frame, setup.config, setup.birth, rng)
    n_hat, est = extract_estimates(state, "gcphd")
    err = ospa(tracks.positions_at(k), est[:, :2], scn.ospa)
    errors.append(err)
    if k % 10 == 0:
        print(f"step {k:3d}  true {len(tracks.at(k))}  estimated {n_hat}  OSPA {err:6.2f}")

print("mean OSPA", round(float(np.mean(errors)), 3))
