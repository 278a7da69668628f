import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from fmf.clustering import HourClustering
from fmf.encoding import encode_hour
from fmf.errors import InputError
from fmf.forecaster import (
    DistanceWeights,
    ForecastModel,
    distance,
    distance_matrix,
    forecast_cell,
    forecast_encoded,
    forecast_matrix,
    median_table,
    nearest_clusters,
    rank_clusters,
    similarity,
    weighted_medians,
)
from fmf.ingest import CalendarContext
from fmf.pipeline import FMFConfig, forecast_test, train
from fmf.preprocess import TransformParams
from fmf.synthetic import SyntheticSpec, generate_synthetic


def random_vector(rng):
    """A valid 79-vector: one-hot categorical groups and weather in [0, 1]."""
    v = np.zeros(79)
    v[rng.integers(0, 24)] = 1
    v[24 + rng.integers(0, 7)] = 1
    v[31 + rng.integers(0, 31)] = 1
    v[62 + rng.integers(0, 12)] = 1
    v[74 + rng.integers(0, 2)] = 1
    v[76:] = rng.random(3)
    return v


def toy_model(vectors, medians, weights=None, t=2):
    r, n = medians.shape
    params = TransformParams(1, np.zeros(n), np.ones(n), np.zeros(3), np.ones(3))
    clustering = HourClustering(np.arange(r), np.zeros((r, 1)), 0.0, 1, (), np.zeros(1))
    return ForecastModel(clustering, np.asarray(vectors, float), np.asarray(medians, float), weights or DistanceWeights(), t, params)


class TestDistanceWeights:
    def test_defaults(self):
        w = DistanceWeights()
        assert w.w == (0.125,) * 8 and w.p == 2.0

    @pytest.mark.parametrize(
        "w,p",
        [((0.0,) * 8, 2.0), ((1.0,) * 7, 2.0), ((-1.0,) + (1.0,) * 7, 2.0), ((1.0,) * 8, 0.5), ((np.nan,) + (1.0,) * 7, 2.0)],
    )
    def test_rejects_invalid(self, w, p):
        with pytest.raises(InputError):
            DistanceWeights(w, p)

    def test_scaled(self):
        assert DistanceWeights((1, 0, 0, 0, 0, 0, 0, 2)).scaled(0.5).w == (0.5, 0, 0, 0, 0, 0, 0, 1.0)


class TestDistance:
    def test_identical_vectors_are_zero(self, rng):
        v = random_vector(rng)
        for _ in range(5):
            w = DistanceWeights(tuple(rng.random(8)), 1 + 3 * rng.random())
            assert distance(v, v, w) == 0.0
            assert similarity(v, v, w) == 1.0

    def test_hour_only_difference(self):
        a = encode_hour(np.datetime64("2009-07-07T16"), (0.5, 0.5, 0.5))
        b = encode_hour(np.datetime64("2009-07-07T17"), (0.5, 0.5, 0.5))
        w = DistanceWeights((1, 0, 0, 0, 0, 0, 0, 0), 2.0)
        assert distance(a, b, w) == math.sqrt(2.0)

    def test_matches_scalar_oracle(self, rng):
        w = DistanceWeights((1.0,) * 8, 2.0)
        for _ in range(50):
            a, b = rng.random(79), rng.random(79)
            assert distance(a, b, w) == pytest.approx(oracles.distance(a, b, w.w, 2), abs=1e-12)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
    def test_matches_oracle_any_p(self, rng, p):
        w = DistanceWeights(tuple(rng.random(8)), p)
        a, b = rng.random(79), rng.random(79)
        assert distance(a, b, w) == pytest.approx(oracles.distance(a, b, w.w, p), rel=1e-12)

    def test_similarity_of_quarter_distance(self):
        a = np.zeros(79)
        b = np.zeros(79)
        b[76] = 0.25
        w = DistanceWeights((0, 0, 0, 0, 0, 1, 0, 0))
        assert distance(a, b, w) == 0.25
        assert similarity(a, b, w) == 0.75

    def test_similarity_can_be_negative(self):
        a, b = np.zeros(79), np.ones(79)
        assert similarity(a, b, DistanceWeights((1.0,) * 8)) < 0

    @given(st.integers(0, 2**32 - 1), st.floats(1.0, 4.0))
    def test_symmetric_nonnegative(self, seed, p):
        rng = np.random.default_rng(seed)
        a, b = rng.random(79), rng.random(79)
        w = DistanceWeights(tuple(rng.random(8) + 0.01), p)
        assert distance(a, b, w) == distance(b, a, w) >= 0

    @given(st.integers(0, 2**32 - 1), st.integers(0, 7), st.floats(1.0, 4.0))
    def test_triangle_inequality_single_group(self, seed, g, p):
        rng = np.random.default_rng(seed)
        a, b, c = rng.random(79), rng.random(79), rng.random(79)
        w = [0.0] * 8
        w[g] = 1.0
        w = DistanceWeights(tuple(w), p)
        assert distance(a, c, w) <= distance(a, b, w) + distance(b, c, w) + 1e-12

    def test_rescaling_preserves_ranking(self, rng):
        vh = random_vector(rng)
        VC = np.array([random_vector(rng) for _ in range(100)])
        w = DistanceWeights(tuple(rng.random(8)), 2.0)
        base = distance_matrix(vh[None], VC, w)[0]
        for c in (0.01, 3.0, 250.0):
            scaled = distance_matrix(vh[None], VC, w.scaled(c))[0]
            np.testing.assert_allclose(scaled, c * base, rtol=1e-12)
            assert np.array_equal(np.argsort(scaled, kind="stable"), np.argsort(base, kind="stable"))

    def test_similarity_ranking_reverses_distance(self, rng):
        vh = random_vector(rng)
        VC = np.array([random_vector(rng) for _ in range(100)])
        d = distance_matrix(vh[None], VC, DistanceWeights())[0]
        by_sim = rank_clusters((1.0 - d)[None])[0]
        by_dist = sorted(range(100), key=lambda k: (d[k], k))
        assert by_sim.tolist() == by_dist


class TestNearestClusters:
    def test_all_clusters_sorted_when_t_equals_r(self, rng):
        VC = np.array([random_vector(rng) for _ in range(6)])
        model = toy_model(VC, np.full((6, 2), 0.5), t=6)
        vh = random_vector(rng)
        sims = [similarity(vh, c, model.weights) for c in VC]
        assert nearest_clusters(vh, model).tolist() == sorted(range(6), key=lambda k: (-sims[k], k))

    def test_exact_match_ranks_first(self, rng):
        VC = np.array([random_vector(rng) for _ in range(5)])
        model = toy_model(VC, np.full((5, 1), 0.5))
        assert nearest_clusters(VC[3], model)[0] == 3

    def test_ties_go_to_lower_id(self, rng):
        v = random_vector(rng)
        model = toy_model(np.array([random_vector(rng), v, v, v]), np.full((4, 1), 0.5), t=2)
        assert nearest_clusters(v, model).tolist() == [1, 2]

    def test_default_t(self):
        assert FMFConfig().t == 2


class TestWeightedMedians:
    def test_hand_arithmetic(self):
        out, fb = weighted_medians(np.array([[0.8, 0.2]]), np.array([[0, 1]]), np.array([[0.5], [0.9]]))
        assert out[0, 0] == pytest.approx(0.58, abs=1e-15)
        assert not fb[0]

    def test_negative_similarity_excluded(self):
        out, fb = weighted_medians(np.array([[0.5, -0.3]]), np.array([[1, 0]]), np.array([[0.2], [0.7]]))
        assert out[0, 0] == 0.7 and not fb[0]

    def test_fallback_to_top1(self):
        out, fb = weighted_medians(np.array([[-0.1, -0.4]]), np.array([[1, 0]]), np.array([[0.2], [0.7]]))
        assert out[0, 0] == 0.7 and fb[0]

    @given(st.integers(0, 2**32 - 1))
    def test_convex_combination(self, seed):
        rng = np.random.default_rng(seed)
        r, n, t = 6, 3, 3
        medians = rng.random((r, n))
        nbrs = rng.permutation(r)[:t][None]
        sims = rng.random((1, t)) + 1e-3
        out, _ = weighted_medians(sims, nbrs, medians)
        sel = medians[nbrs[0]]
        assert np.all(out[0] >= sel.min(axis=0) - 1e-15) and np.all(out[0] <= sel.max(axis=0) + 1e-15)


class TestMedianTable:
    def test_even_count_uses_midpoint(self):
        A = np.array([[0.1], [0.4], [0.2], [0.9]])
        np.testing.assert_array_equal(median_table(A, [0, 0, 1, 1], 2), [[0.25], [0.55]])

    def test_empty_cluster(self):
        with pytest.raises(InputError):
            median_table(np.ones((3, 1)), [0, 0, 0], 2)


@pytest.fixture(scope="module")
def trained(small_dataset):
    return train(small_dataset, FMFConfig(q=4, m1=24 * 35, r=12, replicates=3))


class TestForecast:
    def test_t1_is_nearest_median(self, trained):
        model = trained.model.with_weights(trained.model.weights, t=1)
        n = model.n
        res = forecast_matrix(trained.split.test_hours[:5], trained.split.B[:5, n:], model)
        expected = model.medians[res.neighbors[:, 0]]
        np.testing.assert_array_equal(res.transformed, expected)

    def test_row_equals_cell_calls(self, trained):
        model = trained.model
        n = model.n
        ts, w = trained.split.test_hours[7], trained.split.B[7, n:]
        row = forecast_matrix([ts], w[None], model).kwh[0]
        cells = [forecast_cell(ts, w, j, model) for j in range(n)]
        assert row.tolist() == cells

    def test_identical_hours_identical_rows(self, trained):
        n = trained.model.n
        ts = np.repeat(trained.split.test_hours[3], 2)
        w = np.repeat(trained.split.B[3:4, n:], 2, axis=0)
        res = forecast_matrix(ts, w, trained.model)
        assert np.array_equal(res.kwh[0], res.kwh[1])

    def test_nonnegative_kwh(self, trained):
        assert np.all(forecast_test(trained).kwh >= 0)

    def test_cost_counters(self, trained):
        res = forecast_test(trained)
        m = trained.split.m2
        assert res.distance_evaluations == m * trained.model.r
        assert res.median_reads == m * trained.model.t * trained.model.n

    def test_untrained_model(self):
        with pytest.raises(InputError):
            forecast_matrix([np.datetime64("2010-01-01T00")], np.zeros((1, 3)), None)
        with pytest.raises(InputError):
            forecast_cell(np.datetime64("2010-01-01T00"), np.zeros(3), 0, None)

    def test_bad_consumer(self, trained):
        with pytest.raises(InputError):
            forecast_cell(trained.split.test_hours[0], trained.split.B[0, -3:], 99, trained.model)

    def test_t_out_of_range(self, trained):
        with pytest.raises(InputError):
            trained.model.with_weights(trained.model.weights, t=trained.model.r + 1)

    def test_long_test_span_accepted(self):
        data = generate_synthetic(SyntheticSpec(n_consumers=2, n_hours=8760 + 4104, seed=0))
        trained = train(data, FMFConfig(m1=8760, r=10, replicates=1))
        assert forecast_test(trained).kwh.shape == (4104, 2)


class TestBruteForceOracle:
    def test_small_instance(self):
        """50 hours, 5 consumers, r = 4, t = 2."""
        data = generate_synthetic(SyntheticSpec(n_consumers=5, n_hours=74, seed=5))
        tr = train(data, FMFConfig(q=4, m1=50, r=4, t=2, replicates=3, seed=5))
        sp, p = tr.split, tr.model.params
        ref = oracles.forecast_oracle(
            oracles.to_datetimes(sp.train_hours), sp.A.tolist(), tr.model.clustering.assignments.tolist(), 4,
            oracles.to_datetimes(sp.test_hours), sp.B[:, 5:].tolist(), tr.model.weights.w, 2, 2, 4,
            p.per_consumer_min.tolist(), p.per_consumer_max.tolist(), data.calendar.holidays,
        )
        assert np.array_equal(np.array(ref), forecast_test(tr).kwh)

    def test_holiday_calendar_used(self):
        data = generate_synthetic(SyntheticSpec(n_consumers=2, n_hours=24 * 10, seed=1, holidays=["2009-07-20"]))
        tr = train(data, FMFConfig(m1=24 * 8, r=5, replicates=1))
        # Training rows on the holiday put mass on coordinate 74 of some cluster vector.
        assert tr.model.cluster_vectors[:, 74].sum() > 0
        vh = encode_hour(np.datetime64("2009-07-20T10"), (0.5, 0.5, 0.5), tr.model.calendar)
        assert vh[74] == 1.0
        assert forecast_encoded(vh, tr.model).kwh.shape == (1, 2)

    def test_calendar_default(self):
        assert toy_model(np.zeros((2, 79)), np.full((2, 1), 0.5)).calendar == CalendarContext()
