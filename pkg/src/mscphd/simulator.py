"""Seeded ground truth and measurement generation, scenario files and CSV logs.

Time steps are 1-based throughout; a target with ``birth=b, death=d`` is
present for every step ``k`` with ``b <= k <= d``.

Randomness derives from one root seed.  Each purpose gets its own
substream via ``SeedSequence(seed, spawn_key=(purpose, run, sensor))``, so
adding a sensor never perturbs target motion or other sensors' noise.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .cardinality import ClutterModel
from .gaussian import BearingObservationModel, LinearObservationModel, MotionModel, ReductionParams
from .metrics import OspaParams
from .update import SensorModel

log = logging.getLogger(__name__)

STREAM_TRACKS = 0
STREAM_MEASUREMENTS = 1
STREAM_FILTER = 2

# One list per sensor with an ``(m_j, d_j)`` array per step
MeasurementFrame = list


class ScenarioError(ValueError):
    """Invalid scenario file or field."""


def substream(seed, purpose, run=0, sensor=0):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, run, sensor)))


def wrap_360(angle):
    a = np.mod(np.asarray(angle, dtype=float), 360.0)
    # fmod of tiny negatives rounds up to exactly 360
    return np.where(a >= 360.0, 0.0, a)


@dataclass(frozen=True)
class TargetSpec:
    birth: int
    death: int
    state: np.ndarray


@dataclass(frozen=True)
class BirthSpec:
    means: np.ndarray
    cov: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    duration: int
    region: np.ndarray  # [[xmin, xmax], [ymin, ymax]]
    targets: list
    motion: MotionModel
    sensors: list
    seed: int = 0
    truth_motion: MotionModel | None = None
    birth: BirthSpec | None = None
    p_sv: float = 0.99
    n_max: int = 20
    w_max: int = 6
    p_max: int = 6
    ospa: OspaParams = field(default_factory=OspaParams)
    sensor_order: tuple | None = None
    variable_sensor: int = 0
    reduction: ReductionParams = field(default_factory=ReductionParams)
    position_indices: tuple = (0, 1)

    def __post_init__(self):
        if self.duration < 1:
            raise ScenarioError("duration must be at least 1")
        for t, tgt in enumerate(self.targets):
            if not 1 <= tgt.birth < tgt.death <= self.duration:
                raise ScenarioError(f"targets[{t}]: need 1 <= birth < death <= duration")
            x, y = tgt.state[list(self.position_indices)]
            (x0, x1), (y0, y1) = self.region
            if not (x0 <= x <= x1 and y0 <= y <= y1):
                raise ScenarioError(f"targets[{t}]: initial position outside region")
        if self.sensor_order is not None and sorted(self.sensor_order) != list(range(len(self.sensors))):
            raise ScenarioError("sensor_order must be a permutation of the sensor indices")

    @property
    def num_sensors(self):
        return len(self.sensors)

    @property
    def truth_model(self):
        return self.truth_motion if self.truth_motion is not None else self.motion

    def with_sensors(self, sensors, sensor_order=None):
        return replace(self, sensors=list(sensors), sensor_order=sensor_order)

    def with_detection_prob(self, index, p_d):
        sensors = list(self.sensors)
        sensors[index] = replace(sensors[index], detection_prob=float(p_d))
        return replace(self, sensors=sensors)

    def with_clutter_rate(self, rate):
        sensors = [
            replace(s, clutter=ClutterModel.poisson(rate, s.clutter.area)) for s in self.sensors
        ]
        return replace(self, sensors=sensors)

    def with_num_sensors(self, s):
        """First ``s`` sensors, cycling through the configured list if needed."""
        sensors = [self.sensors[j % len(self.sensors)] for j in range(s)]
        return replace(self, sensors=sensors, sensor_order=None)


# --- scenario files -----------------------------------------------------------


def _motion_from(d, where):
    kind = d.get("type")
    if kind == "ncv":
        return MotionModel.ncv(float(d.get("T", 1.0)), float(d["sigma"]))
    if kind == "random_walk":
        return MotionModel.random_walk(float(d["sigma"]), int(d.get("dim", 2)))
    raise ScenarioError(f"{where}.type: expected 'ncv' or 'random_walk', got {kind!r}")


def _sensor_from(d, state_dim, region, where):
    try:
        p_d = float(d["p_d"])
        kind = d["type"]
        if kind == "linear":
            obs = LinearObservationModel.position(float(d["sigma"]), state_dim)
            (x0, x1), (y0, y1) = region
            area = float(d.get("clutter_area", (x1 - x0) * (y1 - y0)))
        elif kind == "bearing":
            obs = BearingObservationModel(np.asarray(d["position"], dtype=float), float(d["sigma_deg"]))
            area = float(d.get("clutter_area", 360.0))
        else:
            raise ScenarioError(f"{where}.type: expected 'linear' or 'bearing', got {kind!r}")
        clutter = ClutterModel.poisson(float(d["clutter_rate"]), area)
        return SensorModel(p_d, obs, clutter)
    except KeyError as exc:
        raise ScenarioError(f"{where}: missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{where}: {exc}") from None


def scenario_from_dict(d):
    try:
        motion = _motion_from(d["motion"], "motion")
        truth = _motion_from(d["truth_motion"], "truth_motion") if "truth_motion" in d else None
        region = np.asarray(d["region"], dtype=float)
        if region.shape != (2, 2):
            raise ScenarioError("region: expected [[xmin, xmax], [ymin, ymax]]")
        state_dim = (truth or motion).dim
        if truth is not None and truth.dim != motion.dim:
            raise ScenarioError("truth_motion and motion must share the state dimension")
        targets = []
        for t, td in enumerate(d["targets"]):
            state = np.asarray(td["state"], dtype=float)
            if state.shape != (state_dim,):
                raise ScenarioError(f"targets[{t}].state: expected {state_dim} entries")
            targets.append(TargetSpec(int(td["birth"]), int(td["death"]), state))
        sensors = [_sensor_from(sd, state_dim, region, f"sensors[{j}]") for j, sd in enumerate(d["sensors"])]
        birth = None
        if "birth" in d:
            bd = d["birth"]
            means = np.atleast_2d(np.asarray(bd["means"], dtype=float))
            if means.shape[1] != state_dim:
                raise ScenarioError(f"birth.means: expected {state_dim} entries per row")
            birth = BirthSpec(means, np.diag(np.asarray(bd["cov_diag"], dtype=float)), float(bd["weight"]))
        kwargs = {}
        for key in ("p_sv", "w_max", "p_max", "n_max", "seed", "variable_sensor"):
            if key in d:
                kwargs[key] = type(getattr(Scenario, key))(d[key])
        if "ospa" in d:
            kwargs["ospa"] = OspaParams(float(d["ospa"]["c"]), float(d["ospa"].get("p", 1.0)))
        if "reduction" in d:
            kwargs["reduction"] = ReductionParams(**d["reduction"])
        if d.get("sensor_order") is not None:
            kwargs["sensor_order"] = tuple(int(j) for j in d["sensor_order"])
        return Scenario(
            name=str(d.get("name", "scenario")),
            duration=int(d["duration"]),
            region=region,
            targets=targets,
            motion=motion,
            sensors=sensors,
            truth_motion=truth,
            birth=birth,
            **kwargs,
        )
    except KeyError as exc:
        raise ScenarioError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None


def bundled_scenarios():
    return sorted(p.name[:-5] for p in resources.files("mscphd.scenarios").iterdir() if p.name.endswith(".json"))


def load_scenario(path_or_name):
    """Load a scenario from a JSON file path or the name of a bundled scenario."""
    path = Path(path_or_name)
    if path.suffix != ".json" and str(path_or_name) in bundled_scenarios():
        text = resources.files("mscphd.scenarios").joinpath(f"{path_or_name}.json").read_text()
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path_or_name}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path_or_name}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(data)


# --- ground truth --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectories:
    """``states[k-1, t]`` is target ``t`` at step ``k`` (NaN when absent)."""

    states: np.ndarray
    alive: np.ndarray
    position_indices: tuple = (0, 1)

    @property
    def duration(self):
        return self.states.shape[0]

    def cardinality(self):
        return self.alive.sum(axis=1)

    def at(self, k):
        return self.states[k - 1][self.alive[k - 1]]

    def positions_at(self, k):
        return self.at(k)[:, list(self.position_indices)]


def _clamp(x, region, position_indices):
    for axis, i in enumerate(position_indices):
        lo, hi = region[axis]
        if x[i] < lo or x[i] > hi:
            x[i] = min(max(x[i], lo), hi)
            vel = i + len(position_indices)
            if vel < x.size:
                x[vel] = 0.0
    return x


def simulate_tracks(scenario):
    """Propagate every target through its lifetime; the same tracks serve every run."""
    model = scenario.truth_model
    F, Q = model.transition_matrix, model.process_noise_cov
    rng = substream(scenario.seed, STREAM_TRACKS)
    n = F.shape[0]
    T = scenario.duration
    states = np.full((T, len(scenario.targets), n), np.nan)
    alive = np.zeros((T, len(scenario.targets)), dtype=bool)
    chol = np.linalg.cholesky(Q) if np.any(Q) else np.zeros_like(Q)
    for t, tgt in enumerate(scenario.targets):
        x = tgt.state.astype(float).copy()
        for k in range(tgt.birth, tgt.death + 1):
            if k > tgt.birth:
                x = F @ x + chol @ rng.standard_normal(n)
                x = _clamp(x, scenario.region, scenario.position_indices)
            states[k - 1, t] = x
            alive[k - 1, t] = True
    return Trajectories(states, alive, scenario.position_indices)


# --- measurements ---------------------------------------------------------------


def _linear_sensor_frames(tracks, sensor, rng, region):
    H = sensor.observation.obs_matrix
    chol = np.linalg.cholesky(sensor.observation.noise_cov)
    (x0, x1), (y0, y1) = region
    out = []
    for k in range(1, tracks.duration + 1):
        X = tracks.at(k)
        hit = rng.random(len(X)) < sensor.detection_prob
        det = X[hit] @ H.T + rng.standard_normal((hit.sum(), H.shape[0])) @ chol.T
        nc = rng.poisson(sensor.clutter.rate)
        clutter = np.column_stack([rng.uniform(x0, x1, nc), rng.uniform(y0, y1, nc)])
        out.append(np.vstack([det, clutter]))
    return out


def _bearing_sensor_frames(tracks, sensor, rng):
    obs = sensor.observation
    out = []
    for k in range(1, tracks.duration + 1):
        X = tracks.at(k)
        hit = rng.random(len(X)) < sensor.detection_prob
        Xd = X[hit]
        offset = Xd[:, list(obs.position_indices)] - obs.sensor_position
        at_sensor = np.all(offset == 0.0, axis=1)
        if at_sensor.any():
            log.warning("target at sensor position at step %d; using bearing 0", k)
        angle = np.where(at_sensor, 0.0, obs.bearing(Xd)) if len(Xd) else np.zeros(0)
        angle = wrap_360(angle + obs.noise_std * rng.standard_normal(len(Xd)))
        nc = rng.poisson(sensor.clutter.rate)
        clutter = wrap_360(rng.uniform(0.0, 360.0, nc))
        out.append(np.concatenate([angle, clutter])[:, None])
    return out


def _assemble(per_sensor):
    return [[frames[k] for frames in per_sensor] for k in range(len(per_sensor[0]))] if per_sensor else []


def generate_linear_measurements(trajectories, sensors, seed, region, run=0):
    """Per-step frames for position sensors: detections (Bernoulli p_d) then uniform clutter."""
    region = np.asarray(region, dtype=float)
    per_sensor = [
        _linear_sensor_frames(trajectories, s, substream(seed, STREAM_MEASUREMENTS, run, j), region)
        for j, s in enumerate(sensors)
    ]
    return _assemble(per_sensor)


def generate_bearing_measurements(trajectories, sensors, seed, run=0):
    """Per-step frames of bearings in degrees, ``[0, 360)``, with uniform clutter."""
    per_sensor = [
        _bearing_sensor_frames(trajectories, s, substream(seed, STREAM_MEASUREMENTS, run, j))
        for j, s in enumerate(sensors)
    ]
    return _assemble(per_sensor)


def generate_measurements(scenario, trajectories, run=0):
    """Frames for a scenario, dispatching on each sensor's observation type."""
    per_sensor = []
    for j, s in enumerate(scenario.sensors):
        rng = substream(scenario.seed, STREAM_MEASUREMENTS, run, j)
        if isinstance(s.observation, BearingObservationModel):
            per_sensor.append(_bearing_sensor_frames(trajectories, s, rng))
        else:
            per_sensor.append(_linear_sensor_frames(trajectories, s, rng, scenario.region))
    return _assemble(per_sensor)


def write_measurements_csv(frames, path):
    """Columns ``step,sensor,dim0,dim1`` (``dim1`` empty for scalar measurements)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "sensor", "dim0", "dim1"])
        for k, frame in enumerate(frames, start=1):
            for j, Z in enumerate(frame):
                for z in np.asarray(Z).reshape(len(Z), -1):
                    w.writerow([k, j] + [repr(float(v)) for v in z] + [""] * (2 - z.size))


def read_measurements_csv(path, dims, duration):
    """Inverse of :func:`write_measurements_csv`; ``dims[j]`` is sensor ``j``'s dimension."""
    rows = [[[] for _ in dims] for _ in range(duration)]
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            k, j = int(rec["step"]), int(rec["sensor"])
            vals = [float(rec["dim0"])] + ([float(rec["dim1"])] if dims[j] > 1 else [])
            rows[k - 1][j].append(vals)
    return [[np.asarray(Z, dtype=float).reshape(-1, d) for Z, d in zip(frame, dims)] for frame in rows]
