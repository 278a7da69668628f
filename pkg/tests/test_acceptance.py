"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import time
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

import oracles
from fmf import cli
from fmf.clustering import adjusted_rand_index, kmeans_pp
from fmf.encoding import CATEGORICAL, encode_cluster, encode_hours
from fmf.factorization import energy_profile, truncated_svd
from fmf.forecaster import DistanceWeights, combine_groups, distance_matrix, forecast_matrix, rank_clusters
from fmf.ingest import CalendarContext
from fmf.kernels import group_norms
from fmf.pipeline import FMFConfig, aggregation_sweep, forecast_test, train
from fmf.preprocess import fit_transform, inverse_load
from fmf.synthetic import SyntheticSpec, generate_synthetic


def verdict(request, number, ok, detail):
    capman = request.config.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_criterion_1_svd_oracle(request):
    rng = np.random.default_rng(1)
    tic = time.perf_counter()
    worst, monotone = 0.0, True
    for _ in range(100):
        m, n = int(rng.integers(1, 26)), int(rng.integers(1, 16))
        A = rng.standard_normal((m, n))
        k = min(m, n)
        ref = np.array(oracles.gram_singular_values(A))
        ours = truncated_svd(A, d=k).sigma
        worst = max(worst, float(np.max(np.abs(ours - ref) / ref)))
        frac = [f for _, f in energy_profile(A)]
        monotone &= all(b >= a for a, b in zip(frac, frac[1:])) and frac[-1] == 1.0
    seconds = time.perf_counter() - tic
    ok = worst <= 1e-8 and monotone and seconds < 10
    verdict(request, 1, ok, f"max rel err {worst:.2e}, energy monotone {monotone}, {seconds:.1f}s")


def test_criterion_2_forecast_oracle(request):
    tic = time.perf_counter()
    mismatches, cells = 0, 0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        m1 = int(rng.integers(24, 101))
        n = int(rng.integers(1, 9))
        r = int(rng.integers(1, 6))
        t = int(rng.integers(1, min(2, r) + 1))
        q = int(rng.choice([1, 2, 3, 4, 5]))
        p = float(rng.choice([1.0, 2.0]))
        w = tuple(float(x) for x in rng.choice(np.arange(9) / 8, 8))
        if not any(w):
            w = (0.125,) * 8
        total = max(48, m1 + int(rng.integers(1, 49)))
        data = generate_synthetic(SyntheticSpec(n_consumers=n, n_hours=total, seed=seed))
        cfg = FMFConfig(q=q, m1=m1, r=r, t=t, replicates=3, seed=seed, weights=DistanceWeights(w, p))
        tr = train(data, cfg)
        sp, prm = tr.split, tr.model.params
        ref = oracles.forecast_oracle(
            oracles.to_datetimes(sp.train_hours), sp.A.tolist(), tr.model.clustering.assignments.tolist(), r,
            oracles.to_datetimes(sp.test_hours), sp.B[:, n:].tolist(), w, p, t, q,
            prm.per_consumer_min.tolist(), prm.per_consumer_max.tolist(), data.calendar.holidays,
        )
        got = forecast_test(tr).kwh
        mismatches += int(np.sum(np.array(ref) != got))
        cells += got.size
    seconds = time.perf_counter() - tic
    ok = mismatches == 0 and seconds < 30
    verdict(request, 2, ok, f"{mismatches} of {cells} cells differ, {seconds:.1f}s")


def test_criterion_3_distance_properties(request):
    rng = np.random.default_rng(3)
    cal = CalendarContext()
    pairs = 10_000
    ts = np.datetime64("2009-01-01T00", "h") + rng.integers(0, 24 * 730, pairs)
    U = encode_hours(ts, rng.random((pairs, 3)), cal)
    # The second vector of each pair is a random cluster-style distribution vector.
    V = np.empty_like(U)
    for block in CATEGORICAL:
        raw = rng.random((pairs, block.stop - block.start))
        V[:, block] = raw / raw.sum(axis=1, keepdims=True)
    V[:, 76:] = rng.random((pairs, 3))
    w = DistanceWeights(tuple(rng.random(8)), 2.0)

    self_zero = np.all(combine_groups(group_norms_rows(U, U, w.p), w.w) == 0.0)
    d_uv = combine_groups(group_norms_rows(U, V, w.p), w.w)
    d_vu = combine_groups(group_norms_rows(V, U, w.p), w.w)
    symmetric = np.array_equal(d_uv, d_vu)

    # Ranking invariance: 100 hours against 100 cluster vectors is 10^4 pairs.
    flips = 0
    D = distance_matrix(U[:100], V[:100], w)
    base = rank_clusters(1.0 - D)[:, 0]
    for c in (0.01, 0.3, 2.5, 77.0):
        scaled = rank_clusters(1.0 - distance_matrix(U[:100], V[:100], w.scaled(c)))[:, 0]
        flips += int(np.sum(scaled != base))

    worst_sum = 0.0
    for seed in range(200):
        g = np.random.default_rng(seed)
        k = int(g.integers(1, 200))
        members = encode_hours(ts[g.integers(0, pairs, k)], g.random((k, 3)), cal)
        v = encode_cluster(members)
        worst_sum = max(worst_sum, max(abs(v[b].sum() - 1.0) for b in CATEGORICAL))
    ok = self_zero and symmetric and flips == 0 and worst_sum <= 1e-12
    verdict(request, 3, ok, f"d(v,v)=0 {self_zero}, symmetric {symmetric}, ranking flips {flips}, block-sum err {worst_sum:.1e}")


def group_norms_rows(X, Y, p):
    """Group norms of ``X[i]`` against ``Y[i]`` only, shape ``(m, 8)``."""
    out = np.empty((X.shape[0], 8))
    for i in range(X.shape[0]):
        out[i] = group_norms(X[i : i + 1], Y[i : i + 1], p)[0, 0]
    return out


def test_criterion_4_transform_round_trip(request):
    worst = 0.0
    for seed in range(20):
        data = generate_synthetic(SyntheticSpec(n_consumers=15, n_hours=24 * 90, seed=200 + seed))
        m1 = 24 * 60
        for q in (1, 3, 4, 5):
            _, params, split = fit_transform(data, q=q, m1=m1)
            back = inverse_load(split.A[:, : data.load.n], params)
            worst = max(worst, float(np.max(np.abs(back - data.load.values[:m1]))))
    ok = worst <= 1e-9
    verdict(request, 4, ok, f"max round-trip error {worst:.2e} kWh over 20 datasets x 4 q")


def planted_regimes(seed, dim=6, regimes=4):
    rng = np.random.default_rng(seed)
    spread = 1.0
    sizes = rng.integers(50, 151, regimes)
    centers = rng.standard_normal((regimes, dim))
    # Spread is the RMS distance of a point to its regime centre.
    radius = spread * np.sqrt(dim)
    gaps = [np.linalg.norm(a - b) for i, a in enumerate(centers) for b in centers[i + 1 :]]
    centers *= 10.0 * radius / min(gaps)
    X = np.concatenate([c + spread * rng.standard_normal((s, dim)) for c, s in zip(centers, sizes)])
    truth = np.repeat(np.arange(regimes), sizes)
    perm = rng.permutation(X.shape[0])
    return X[perm], truth[perm]


def test_criterion_5_clustering(request):
    deterministic = True
    recovered = 0
    for seed in range(20):
        X, truth = planted_regimes(seed)
        a = kmeans_pp(X, 4, replicates=50, seed=seed)
        b = kmeans_pp(X, 4, replicates=50, seed=seed)
        deterministic &= np.array_equal(a.assignments, b.assignments) and np.array_equal(a.centroids, b.centroids)
        recovered += adjusted_rand_index(a.assignments, truth) >= 0.95
    ok = deterministic and recovered >= 19
    verdict(request, 5, ok, f"bit-identical {deterministic}, ARI >= 0.95 in {recovered}/20 seeds")


@pytest.mark.slow
def test_criterion_6_aggregation_trend(request):
    tic = time.perf_counter()
    hour_wins, household_wins = 0, 0
    cfg = FMFConfig(q=4, m1=8760, r=70, replicates=10, t=2)
    for seed in range(20):
        data = generate_synthetic(SyntheticSpec(n_consumers=100, n_hours=12864, seed=seed))
        rows = {(row.window, row.k): row.report.mape for row in aggregation_sweep(data, (1, 24), (1, 100), replace(cfg, seed=seed), household_replicates=10)}
        hour_wins += rows[(24, 100)] < rows[(1, 100)]
        household_wins += rows[(1, 1)] < rows[(1, 100)]
    seconds = time.perf_counter() - tic
    ok = hour_wins >= 18 and household_wins >= 18 and seconds < 600
    verdict(request, 6, ok, f"24h beats 1h in {hour_wins}/20, k=1 beats k=n in {household_wins}/20, {seconds:.0f}s")


@pytest.mark.slow
def test_criterion_7_scale(request):
    data = generate_synthetic(SyntheticSpec(n_consumers=100, n_hours=8760 + 4104, seed=7))
    cfg = FMFConfig(q=4, m1=8760, r=70, replicates=100, t=2)
    tic = time.perf_counter()
    trained = train(data, cfg)
    result = forecast_test(trained)
    seconds = time.perf_counter() - tic

    model, sp = trained.model, trained.split
    n = model.n
    m2 = sp.m2
    counted = result.distance_evaluations == m2 * model.r and result.median_reads == m2 * model.t * n
    # Per-hour forecast cost as r and t vary, from the operation counters.
    per_hour = {}
    for r in (35, 70, 140):
        for t in (1, 2, 4):
            sub = replace(cfg, r=r, t=t, replicates=1)
            res = forecast_test(train(data, sub))
            per_hour[(r, t)] = (res.distance_evaluations / m2, res.median_reads / (m2 * n))
    linear = all(d == r and med == t for (r, t), (d, med) in per_hour.items())
    # Wall time of one-hour forecasts at the trained size.
    reps = 200
    tic = time.perf_counter()
    for i in range(reps):
        forecast_matrix(sp.test_hours[i : i + 1], sp.B[i : i + 1, n : n + 3], model)
    per_call = (time.perf_counter() - tic) / reps
    ok = seconds < 120 and counted and linear
    verdict(request, 7, ok, f"train+forecast {seconds:.1f}s, {result.distance_evaluations // m2} distances per hour, "
                            f"{model.t} median reads per hour and consumer, {per_call * 1e3:.2f} ms per single-hour call")


@pytest.mark.slow
def test_criterion_8_ireland_shaped_cli(request, tmp_path):
    tic = time.perf_counter()
    data_dir, run_dir = tmp_path / "data", tmp_path / "run"
    codes = [cli.main(["synth", "--out", str(data_dir), "--n-consumers", "709", "--n-hours", "12864", "--seed", "8"])]
    inputs = ["--load", str(data_dir / "load.csv"), "--weather", str(data_dir / "weather.csv"),
              "--holidays", str(data_dir / "holidays.txt")]
    codes.append(cli.main(["train", *inputs, "--q", "5", "--d", "300", "--r", "70", "--t", "2", "--m1", "8760",
                           "--replicates", "10", "--out", str(run_dir)]))
    codes.append(cli.main(["forecast", *inputs, "--snapshot", str(run_dir / "model.fmf"), "--horizon", "4104",
                           "--out", str(run_dir / "forecast")]))
    codes.append(cli.main(["evaluate", "--forecast", str(run_dir / "forecast" / "forecast.csv"),
                           "--out", str(run_dir / "evaluate")]))
    seconds = time.perf_counter() - tic
    report = run_dir / "evaluate" / "error_report.csv"
    ok = codes == [0, 0, 0, 0] and report.exists()
    detail = f"exit codes {codes}, {seconds:.0f}s"
    if report.exists():
        pooled = pd.read_csv(report).iloc[0]
        ok &= bool(np.isfinite(pooled["mae"]) and np.isfinite(pooled["mape"]))
        detail += f", MAE {pooled['mae']:.3f} kWh, RMSE {pooled['rmse']:.3f} kWh, NRMSE {pooled['nrmse']:.4f}, MAPE {pooled['mape']:.2f}%"
    verdict(request, 8, ok, detail)
