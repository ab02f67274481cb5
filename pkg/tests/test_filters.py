import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import mscphd.filters as filters_mod
from mscphd.cardinality import CardinalityDistribution, ClutterModel
from mscphd.filters import (
    BirthModel,
    FilterConfig,
    FilterState,
    elementary_symmetric,
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
from mscphd.gaussian import GaussianMixture, LinearObservationModel, MotionModel, ReductionParams
from mscphd.partitioning import GreedyParams, enumerate_partitions
from mscphd.update import SensorModel
from oracles import default_motion, elementary_symmetric_bruteforce, random_instance, reference_gcphd

MAXIMAL = GreedyParams(w_max=10**6, p_max=10**6)


def raw_config(sensors, exact=False, mode="gcphd", greedy=MAXIMAL, n_max=10):
    return FilterConfig(
        default_motion(),
        sensors,
        greedy=greedy,
        reduction=None,
        cap_factor=None,
        exact_update=exact,
        mode=mode,
        n_max=n_max,
    )


def assert_same_state(a, b, rtol=1e-9):
    assert len(a.phd) == len(b.phd)
    scale = max(a.phd.weights.max(initial=0.0), 1e-300)
    np.testing.assert_allclose(a.phd.weights, b.phd.weights, rtol=rtol, atol=rtol * 1e-3 * scale)
    np.testing.assert_allclose(a.phd.means, b.phd.means, rtol=rtol, atol=1e-9)
    np.testing.assert_allclose(a.phd.covs, b.phd.covs, rtol=rtol, atol=1e-9)
    if a.cardinality is not None:
        np.testing.assert_allclose(a.cardinality.probs, b.cardinality.probs, rtol=rtol, atol=1e-15)


def state_of(gm, card):
    return FilterState(gm.scaled(card.mean() / gm.total_weight), card)


def restrict_exact(monkeypatch, max_subsets):
    real = filters_mod.enumerate_partitions

    def restricted(frame, limit=None):
        return [P for P in real(frame) if len(P) <= max_subsets]

    monkeypatch.setattr(filters_mod, "enumerate_partitions", restricted)


class TestPredict:
    def test_identity(self):
        gm = GaussianMixture(np.array([0.3, 0.9]), np.arange(8.0).reshape(2, 4), np.stack([np.eye(4)] * 2))
        card = CardinalityDistribution.from_unnormalized([0.2, 0.3, 0.5])
        state = FilterState(gm.scaled(card.mean() / gm.total_weight), card)
        config = FilterConfig(MotionModel(np.eye(4), np.zeros((4, 4))), [], p_sv=1.0, n_max=2)
        birth = BirthModel(GaussianMixture.empty(4), CardinalityDistribution.delta(0, 2))
        out = predict(state, config, birth)
        np.testing.assert_array_equal(out.phd.weights, state.phd.weights)
        np.testing.assert_array_equal(out.phd.means, state.phd.means)
        np.testing.assert_allclose(out.cardinality.probs, card.probs, atol=1e-15)

    def test_birth_only(self):
        means = [[400, 400, 0, 0], [400, -400, 0, 0], [-400, 400, 0, 0], [-400, -400, 0, 0]]
        birth = BirthModel.poisson(means, np.diag([100.0, 100.0, 25.0, 25.0]), 0.1, 20)
        config = FilterConfig(MotionModel.ncv(), [], n_max=20)
        out = predict(initial_state(config, 4), config, birth)
        assert len(out.phd) == 4
        np.testing.assert_allclose(out.phd.weights, 0.1, rtol=1e-12)
        assert out.cardinality.mean() == pytest.approx(0.4, rel=1e-12)

    @given(st.integers(0, 10_000), st.floats(0.5, 1.0))
    def test_cardinality_mean_identity(self, seed, p_sv):
        rng = np.random.default_rng(seed)
        probs = np.r_[rng.uniform(size=6), np.zeros(15)]
        card = CardinalityDistribution.from_unnormalized(probs)
        gm = GaussianMixture(np.full(2, card.mean() / 2), rng.normal(size=(2, 4)), np.stack([np.eye(4)] * 2))
        birth = BirthModel.poisson(rng.normal(size=(3, 4)), np.eye(4), 0.2, 20)
        config = FilterConfig(MotionModel.ncv(), [], p_sv=p_sv, n_max=20)
        out = predict(FilterState(gm, card), config, birth)
        assert out.cardinality.mean() == pytest.approx(p_sv * card.mean() + birth.cardinality.mean(), abs=1e-6)
        assert out.phd.total_weight == pytest.approx(p_sv * gm.total_weight + birth.phd.total_weight)

    def test_birth_consistency_enforced(self):
        with pytest.raises(ValueError):
            BirthModel(GaussianMixture(np.ones(1), np.zeros((1, 2)), np.eye(2)[None]), CardinalityDistribution.delta(0))


class TestGcphd:
    def test_empty_frame_closed_form(self):
        rng = np.random.default_rng(0)
        gm, card, frame, sensors = random_instance(rng, 2, 0, 3, 1.0)
        pred = state_of(gm, card)
        out = gcphd_update(pred, frame, raw_config(sensors, exact=True))
        gamma = math.prod(1 - s.detection_prob for s in sensors)
        n = np.arange(card.probs.size)
        M0 = card.probs @ gamma**n
        M1 = card.probs[1:] @ (n[1:] * gamma ** (n[1:] - 1))
        np.testing.assert_allclose(out.phd.weights, gm.normalized().weights * M1 * gamma / M0, rtol=1e-12)
        ref = card.probs * gamma**n
        np.testing.assert_allclose(out.cardinality.probs, ref / ref.sum(), rtol=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_exact_matches_reference(self, seed):
        rng = np.random.default_rng(100 + seed)
        gm, card, frame, sensors = random_instance(rng, 2 + seed % 2, 3, 1 + seed % 3, [0.5, 2.0][seed % 2])
        out = gcphd_update(state_of(gm, card), frame, raw_config(sensors, exact=True))
        w, m, P, c = reference_gcphd(gm.normalized(), card.probs, frame, sensors)
        w = w * (np.arange(c.size) @ c) / w.sum()
        np.testing.assert_allclose(out.phd.weights, w, rtol=1e-9, atol=1e-300)
        np.testing.assert_allclose(out.phd.means, m, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(out.phd.covs, P, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(out.cardinality.probs, c, rtol=1e-9, atol=1e-15)

    def test_desk_instance_greedy_equals_exact(self):
        # two components, one measurement per sensor: every partition is reachable
        rng = np.random.default_rng(7)
        gm, card, _, sensors = random_instance(rng, 2, 1, 2, 2.0)
        frame = [gm.means[:1, :2] + 3.0, gm.means[1:, :2] - 4.0]
        pred = state_of(gm, card)
        exact = gcphd_update(pred, frame, raw_config(sensors, exact=True))
        greedy = gcphd_update(pred, frame, raw_config(sensors))
        assert_same_state(greedy, exact)
        # frozen from the exact enumeration above
        assert len(exact.phd) == 8
        assert exact.cardinality.map() == 2

    @given(st.integers(0, 10_000))
    def test_greedy_equals_exact_on_reachable_partitions(self, seed):
        rng = np.random.default_rng(seed)
        J = int(rng.integers(1, 4))
        gm, card, frame, sensors = random_instance(rng, int(rng.integers(2, 4)), 3, J, [0.5, 2.0][seed % 2])
        pred = state_of(gm, card)
        greedy = gcphd_update(pred, frame, raw_config(sensors))
        with pytest.MonkeyPatch.context() as mp:
            restrict_exact(mp, J)
            exact = gcphd_update(pred, frame, raw_config(sensors, exact=True))
        assert_same_state(greedy, exact)

    @given(st.integers(0, 10_000))
    def test_greedy_equals_exact_with_enough_components(self, seed):
        rng = np.random.default_rng(seed)
        s = int(rng.integers(1, 3))
        sizes_cap = 3 if s == 2 else 6
        gm, card, frame, sensors = random_instance(rng, s, sizes_cap, 1, 2.0)
        total = sum(len(Z) for Z in frame)
        assert np.prod([len(Z) + 1 for Z in frame]) <= 200
        rng2 = np.random.default_rng(seed + 1)
        extra, *_ = random_instance(rng2, 1, 0, max(total, 1), 1.0)
        pred = state_of(extra, card)
        exact = gcphd_update(pred, frame, raw_config(sensors, exact=True))
        greedy = gcphd_update(pred, frame, raw_config(sensors))
        assert_same_state(greedy, exact)
        grid = np.column_stack([np.linspace(-200, 200, 9), np.linspace(-150, 150, 9), np.zeros(9), np.zeros(9)])
        np.testing.assert_allclose(greedy.phd.pdf(grid), exact.phd.pdf(grid), rtol=1e-9, atol=1e-300)

    def test_single_sensor_matches_esf_update(self):
        rng = np.random.default_rng(3)
        gm, card, frame, sensors = random_instance(rng, 1, 6, 3, 2.0)
        frame = [np.vstack([frame[0], gm.means[:2, :2] + 1.0])]
        pred = state_of(gm, card)
        exact = gcphd_update(pred, frame, raw_config(sensors, exact=True))
        esf = single_sensor_cphd_update(pred, frame[0], sensors[0])
        assert_same_state(esf, exact)

    @given(st.integers(0, 10_000))
    def test_sensor_relabeling(self, seed):
        rng = np.random.default_rng(seed)
        gm, card, frame, sensors = random_instance(rng, 3, 2, 2, 1.0)
        pred = state_of(gm, card)
        perm = list(rng.permutation(3))
        a = gcphd_update(pred, frame, raw_config(sensors, exact=True))
        b = gcphd_update(pred, [frame[j] for j in perm], raw_config([sensors[j] for j in perm], exact=True))
        np.testing.assert_allclose(a.cardinality.probs, b.cardinality.probs, rtol=1e-12, atol=1e-15)
        grid = np.column_stack([rng.uniform(-200, 200, (20, 2)), np.zeros((20, 2))])
        np.testing.assert_allclose(a.phd.pdf(grid), b.phd.pdf(grid), rtol=1e-10, atol=1e-300)

    @given(st.integers(0, 10_000))
    def test_mass_equals_cardinality_mean(self, seed):
        rng = np.random.default_rng(seed)
        gm, card, frame, sensors = random_instance(rng, 3, 3, 3, 2.0)
        config = raw_config(sensors, greedy=GreedyParams(3, 3))
        state, inter = gcphd_update(state_of(gm, card), frame, config, return_intermediates=True)
        alphas = np.exp(inter.log_alphaP)
        assert alphas.sum() == pytest.approx(1.0, abs=1e-9)
        assert state.phd.total_weight == pytest.approx(state.cardinality.mean(), rel=1e-9)

    def test_reduction_and_cap(self):
        rng = np.random.default_rng(5)
        gm, card, frame, sensors = random_instance(rng, 3, 3, 3, 2.0)
        config = FilterConfig(default_motion(), sensors, n_max=10)
        out = gcphd_update(state_of(gm, card), frame, config)
        n_hat, _ = extract_estimates(out, "gcphd")
        assert len(out.phd) <= 4 * max(n_hat, 1)
        assert out.phd.total_weight == pytest.approx(out.cardinality.mean(), rel=1e-9)


class TestGphd:
    def test_empty_frame(self):
        rng = np.random.default_rng(1)
        gm, _, frame, sensors = random_instance(rng, 3, 0, 2, 1.0)
        out = gphd_update(FilterState(gm), frame, raw_config(sensors, mode="gphd"))
        gamma = math.prod(1 - s.detection_prob for s in sensors)
        np.testing.assert_allclose(out.phd.weights, gm.weights * gamma, rtol=1e-12)
        assert out.cardinality is None

    @given(st.integers(0, 10_000))
    def test_poisson_cphd_equivalence(self, seed):
        rng = np.random.default_rng(seed)
        gm, _, frame, sensors = random_instance(rng, 2, 3, 2, 2.0)
        mu = float(rng.uniform(0.5, 3.0))
        card = CardinalityDistribution.poisson(mu, 40)
        pred = FilterState(gm.scaled(mu / gm.total_weight), card)
        a = gcphd_update(pred, frame, raw_config(sensors, exact=True, n_max=40))
        b = gphd_update(pred, frame, raw_config(sensors, exact=True, mode="gphd", n_max=40))
        np.testing.assert_allclose(a.phd.weights, b.phd.weights, atol=1e-6)
        assert a.phd.total_weight == pytest.approx(b.phd.total_weight, abs=1e-4)

    @given(st.integers(0, 10_000))
    def test_single_sensor_classic(self, seed):
        rng = np.random.default_rng(seed)
        gm, _, frame, sensors = random_instance(rng, 1, 6, 3, float(rng.uniform(0.5, 5)))
        n = len(frame[0])
        extra, *_ = random_instance(np.random.default_rng(seed + 7), 1, 0, max(n, 3), 1.0)
        pred = FilterState(extra)
        a = gphd_update(pred, frame, raw_config(sensors, exact=True, mode="gphd"))
        b = single_sensor_phd_update(pred, frame[0], sensors[0])
        np.testing.assert_allclose(a.phd.weights, b.phd.weights, rtol=1e-9, atol=1e-300)
        np.testing.assert_allclose(a.phd.means, b.phd.means, rtol=1e-9, atol=1e-9)
        c = gphd_update(pred, frame, raw_config(sensors, mode="gphd"))
        np.testing.assert_allclose(c.phd.weights, b.phd.weights, rtol=1e-9, atol=1e-300)

    def test_classic_formula(self):
        sensor = SensorModel(0.8, LinearObservationModel(np.eye(1), np.eye(1)), ClutterModel.poisson(2.0, 10.0))
        gm = GaussianMixture(np.array([0.7]), np.zeros((1, 1)), np.eye(1)[None])
        out = single_sensor_phd_update(FilterState(gm), np.array([[0.5]]), sensor)
        q = math.exp(-0.25 / 4) / math.sqrt(4 * math.pi)
        num = 0.8 * 0.7 * q
        np.testing.assert_allclose(out.phd.weights, [0.2 * 0.7, num / (2.0 / 10.0 + num)], rtol=1e-12)

    def test_rejects_finite_clutter(self):
        clutter = ClutterModel.finite(CardinalityDistribution.delta(1, 3), 100.0)
        sensors = [SensorModel(0.5, LinearObservationModel.position(1.0), clutter)]
        gm = GaussianMixture(np.ones(1), np.zeros((1, 4)), np.eye(4)[None])
        with pytest.raises(ValueError, match="Poisson"):
            gphd_update(FilterState(gm), [np.zeros((0, 2))], raw_config(sensors, mode="gphd"))


class TestElementarySymmetric:
    def test_small(self):
        np.testing.assert_allclose(elementary_symmetric([1.0, 2.0, 3.0]), [1, 6, 11, 6])

    def test_empty(self):
        np.testing.assert_array_equal(elementary_symmetric([]), [1.0])

    def test_bruteforce(self):
        vals = np.random.default_rng(0).uniform(0, 3, 8)
        np.testing.assert_allclose(elementary_symmetric(vals), elementary_symmetric_bruteforce(vals), rtol=1e-10)


class TestSingleSensorCphd:
    @given(st.integers(0, 10_000))
    def test_equals_exact_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        gm, card, frame, sensors = random_instance(rng, 1, 6, int(rng.integers(1, 4)), float(rng.uniform(0.5, 5)))
        pred = state_of(gm, card)
        exact = gcphd_update(pred, frame, raw_config(sensors, exact=True))
        esf = single_sensor_cphd_update(pred, frame[0], sensors[0])
        np.testing.assert_allclose(esf.cardinality.probs, exact.cardinality.probs, rtol=1e-9, atol=1e-15)
        np.testing.assert_allclose(esf.phd.weights * exact.cardinality.mean() / exact.phd.total_weight,
                                   exact.phd.weights, rtol=1e-9, atol=1e-300)

    def test_empty_frame(self):
        rng = np.random.default_rng(2)
        gm, card, frame, sensors = random_instance(rng, 1, 0, 2, 1.0)
        pred = state_of(gm, card)
        a = single_sensor_cphd_update(pred, frame[0], sensors[0])
        b = gcphd_update(pred, frame, raw_config(sensors, exact=True))
        assert_same_state(a, b)

    def test_certain_detection_no_clutter(self):
        sensor = SensorModel(1.0, LinearObservationModel.position(5.0), ClutterModel.poisson(1e-8, 1000.0**2))
        means = np.array([[0.0, 0.0, 0.0, 0.0], [500.0, 500.0, 0.0, 0.0]])
        gm = GaussianMixture(np.array([0.5, 0.5]), means, np.stack([np.diag([50.0, 50.0, 1.0, 1.0])] * 2))
        card = CardinalityDistribution.from_unnormalized([0.2, 0.5, 0.3])
        out = single_sensor_cphd_update(state_of(gm, card), np.array([[3.0, -2.0]]), sensor)
        assert out.cardinality.probs[1] == pytest.approx(1.0, abs=1e-6)
        assert out.phd.weights[:2].sum() == pytest.approx(0.0, abs=1e-12)
        heavy = np.argmax(out.phd.weights)
        assert out.phd.weights[heavy] == pytest.approx(1.0, abs=1e-6)
        assert np.linalg.norm(out.phd.means[heavy, :2] - [3.0, -2.0]) < 2.0


class TestIteratedCorrector:
    def test_single_sensor_identity(self):
        rng = np.random.default_rng(4)
        gm, card, frame, sensors = random_instance(rng, 1, 4, 2, 2.0)
        pred = state_of(gm, card)
        a = ic_cphd_update(pred, frame, raw_config(sensors, mode="iccphd"))
        b = single_sensor_cphd_update(pred, frame[0], sensors[0])
        assert_same_state(a, b, rtol=1e-12)
        c = ic_phd_update(FilterState(gm), frame, raw_config(sensors, mode="icphd"))
        d = single_sensor_phd_update(FilterState(gm), frame[0], sensors[0])
        np.testing.assert_allclose(c.phd.weights, d.phd.weights, rtol=1e-12)

    def test_order_dependence(self):
        rng = np.random.default_rng(9)
        gm, card, frame, sensors = random_instance(rng, 2, 3, 2, 2.0)
        sensors = [
            SensorModel(0.95, sensors[0].observation, sensors[0].clutter),
            SensorModel(0.3, sensors[1].observation, sensors[1].clutter),
        ]
        frame = [gm.means[:, :2] + 2.0, gm.means[:1, :2] - 5.0]
        pred = state_of(gm, card)
        fwd = ic_cphd_update(pred, frame, raw_config(sensors, mode="iccphd", greedy=GreedyParams(sensor_order=(0, 1))))
        rev = ic_cphd_update(pred, frame, raw_config(sensors, mode="iccphd", greedy=GreedyParams(sensor_order=(1, 0))))
        assert not np.allclose(fwd.cardinality.probs, rev.cardinality.probs, rtol=1e-6)

    def test_all_empty_frames(self):
        rng = np.random.default_rng(6)
        gm, card, frame, sensors = random_instance(rng, 3, 0, 2, 1.0)
        pred = state_of(gm, card)
        out = ic_cphd_update(pred, frame, raw_config(sensors, mode="iccphd"))
        state = pred
        for sensor in sensors:
            q = 1 - sensor.detection_prob
            p = state.cardinality.probs * q ** np.arange(state.cardinality.probs.size)
            state = FilterState(state.phd, CardinalityDistribution(p / p.sum()))
        np.testing.assert_allclose(out.cardinality.probs, state.cardinality.probs, rtol=1e-12)
        np.testing.assert_allclose(out.phd.total_weight, state.cardinality.mean(), rtol=1e-12)

    @given(st.integers(0, 10_000))
    def test_intermediate_invariants(self, seed):
        rng = np.random.default_rng(seed)
        gm, card, frame, sensors = random_instance(rng, 3, 3, 2, 2.0)
        state = state_of(gm, card)
        for Z, sensor in zip(frame, sensors):
            state = single_sensor_cphd_update(state, Z, sensor)
            assert state.cardinality.probs.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(state.phd.weights >= 0)
            assert state.phd.total_weight == pytest.approx(state.cardinality.mean(), rel=1e-9)


class TestEstimates:
    def test_phd_rounding(self):
        gm = GaussianMixture(np.array([1.0, 0.9, 0.5]), np.arange(3.0)[:, None], np.ones((3, 1, 1)))
        n, est = extract_estimates(FilterState(gm), "gphd")
        assert n == 2
        np.testing.assert_array_equal(est.ravel(), [0.0, 1.0])

    def test_cphd_argmax(self):
        gm = GaussianMixture(np.array([1.0, 0.9]), np.arange(2.0)[:, None], np.ones((2, 1, 1)))
        card = CardinalityDistribution(np.array([0.1, 0.2, 0.7]))
        n, _ = extract_estimates(FilterState(gm, card), "gcphd")
        assert n == 2

    def test_shortfall(self):
        gm = GaussianMixture(np.array([1.0, 0.9]), np.arange(2.0)[:, None], np.ones((2, 1, 1)))
        card = CardinalityDistribution(np.array([0.0, 0.0, 0.0, 1.0]))
        n, est = extract_estimates(FilterState(gm, card), "iccphd")
        assert n == 3
        assert len(est) == 2


class TestFilterStep:
    @pytest.mark.parametrize("mode", ["gcphd", "gphd", "iccphd", "icphd"])
    def test_runs_and_stays_normalized(self, mode):
        rng = np.random.default_rng(12)
        _, _, _, sensors = random_instance(rng, 3, 0, 1, 2.0)
        config = FilterConfig(default_motion(), sensors, mode=mode, reduction=ReductionParams(), n_max=20)
        birth = BirthModel.poisson([[0.0, 0.0, 0.0, 0.0], [100.0, 100.0, 0.0, 0.0]], np.diag([100.0] * 4), 0.1)
        state = initial_state(config, 4)
        truth = np.array([[0.0, 0.0], [100.0, 100.0]])
        for k in range(8):
            frame = [truth + rng.normal(0, 10, truth.shape) for _ in sensors]
            state = filter_step(state, frame, config, birth, np.random.default_rng(k))
            assert np.all(state.phd.weights >= 0)
            if config.is_cphd:
                assert state.cardinality.probs.sum() == pytest.approx(1.0, abs=1e-9)
        n_hat, est = extract_estimates(state, mode)
        assert n_hat == 2
