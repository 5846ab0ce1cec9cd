import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from config.run_config import SimulationConfig
from limset.criteria_engine import PredictedSets
from limset.criteria_engine.membership import AlphaEstimate
from limset.errors import DimensionError, ParameterError
from limset.heavy_tail_models import GaussianModel, StarSet, sample_X
from limset.strassen_core import GridFn, line
from limset.sumsim import (
    RngStream,
    Visit,
    brownian_path,
    brownian_paths,
    checkpoints,
    cluster_from_csv,
    cluster_replicas,
    containment_check,
    delta_net,
    empirical_cluster,
    merge_nets,
    normalizer_at,
    run_replicas,
    simulate_partial_sums,
    simulate_path_process,
    small_ball_bounds,
    small_ball_estimate,
    small_ball_sandwich,
    streams,
    talagrand_bound,
    talagrand_estimate,
)

SEED = 20240611


class OverflowModel:
    kind = "overflow"
    dim = 1
    supports_sampling = True

    def sample(self, gen, count):
        return np.full((count, 1), 1e308)


def unit_box_predictions(dim: int = 2) -> PredictedSets:
    alphas = [AlphaEstimate(1.0, 1.0, 1.0, 3.0, "log", f"alpha_{i + 1}") for i in range(dim)]
    return PredictedSets(alphas, StarSet.from_segments([(1.0, [1.0] + [0.0] * (dim - 1))]))


# streams and checkpoints


def test_checkpoints_geometric():
    ns = checkpoints(100, 1.1)
    assert ns[0] == 1
    assert ns[-1] <= 100
    assert np.all(np.diff(ns) > 0)
    assert set(ns.tolist()) == {math.ceil(1.1**k) for k in range(60) if math.ceil(1.1**k) <= 100}
    with pytest.raises(ParameterError):
        checkpoints(100, 1.0)


def test_stream_determinism():
    a = RngStream(SEED, 3).generator.random(5)
    b = RngStream(SEED, 3).generator.random(5)
    c = RngStream(SEED, 4).generator.random(5)
    assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert [s.stream_id for s in streams(SEED, 3)] == [0, 1, 2]
    with pytest.raises(ParameterError):
        RngStream(-1)


def test_antithetic_streams_flip_sign(gaussian_identity_2d, hartman_wintner):
    stream = RngStream(SEED)
    first = next(simulate_partial_sums(gaussian_identity_2d, hartman_wintner, 50, stream))
    flipped = next(simulate_partial_sums(gaussian_identity_2d, hartman_wintner, 50, stream.fresh().mirror()))
    assert_array_equal(flipped.point, -first.point)


def test_zero_law_points_vanish(hartman_wintner):
    model = GaussianModel(np.zeros((1, 1)))
    points = [v.point for v in simulate_partial_sums(model, hartman_wintner, 1000, RngStream(SEED))]
    assert_array_equal(np.abs(points), 0.0)


def test_hartman_wintner_band(hartman_wintner):
    model = GaussianModel([[1.0]])
    n_max = 10**5
    tail = [v for v in simulate_partial_sums(model, hartman_wintner, n_max, RngStream(SEED)) if v.n >= n_max**0.3]
    peak = max(abs(float(v.point[0])) for v in tail)
    assert 0.4 <= peak <= 2.0


def test_overflow_raises(hartman_wintner):
    with pytest.raises(ParameterError):
        list(simulate_partial_sums(OverflowModel(), hartman_wintner, 10, RngStream(SEED)))


# partial sum process


def test_snapshots_end_at_the_running_point(gaussian_identity_2d, hartman_wintner):
    visits = list(
        simulate_partial_sums(gaussian_identity_2d, hartman_wintner, 5000, RngStream(SEED), snapshot_every=1, grid_size=16)
    )
    assert all(v.snapshot is not None for v in visits)
    for v in visits:
        assert_array_equal(v.snapshot.values[-1], v.point)


def test_path_process_matches_stream_snapshot(gaussian_identity_2d, hartman_wintner):
    stream = RngStream(SEED, 2)
    visits = list(
        simulate_partial_sums(gaussian_identity_2d, hartman_wintner, 3000, stream, snapshot_every=1, grid_size=32)
    )
    target = visits[-5]
    again = simulate_path_process(gaussian_identity_2d, hartman_wintner, target.n, 32, stream.fresh())
    assert_array_equal(again.values, target.snapshot.values)


def test_grid_aligned_path_is_partial_sums(gaussian_identity_2d, hartman_wintner):
    stream = RngStream(SEED, 5)
    path = simulate_path_process(gaussian_identity_2d, hartman_wintner, 8, 8, stream)
    x = sample_X(gaussian_identity_2d, stream.fresh(), 8)
    expected = np.vstack([np.zeros((1, 2)), np.cumsum(x, axis=0)]) / normalizer_at(hartman_wintner, 8)
    assert_array_equal(path.values, expected)


def test_single_step_path_is_a_segment(hartman_wintner):
    model = GaussianModel([[1.0]])
    stream = RngStream(SEED, 6)
    path = simulate_path_process(model, hartman_wintner, 1, 10, stream)
    x = sample_X(model, stream.fresh(), 1)[0, 0]
    assert_allclose(path.scalar, path.nodes * x / normalizer_at(hartman_wintner, 1), rtol=1e-15, atol=1e-300)


# Brownian paths and small balls


def test_zero_scale_gives_zero_path():
    path = brownian_path(100, 16, np.zeros((2, 2)), 5.0, RngStream(SEED))
    assert_array_equal(np.abs(path.values), 0.0)


def test_single_step_brownian_draw():
    path = brownian_path(1, 1, [[3.0]], 2.0, RngStream(SEED))
    z = RngStream(SEED).generator.standard_normal((1, 1, 1))[0, 0, 0]
    assert_allclose(path.scalar, [0.0, 1.5 * z], rtol=1e-15)


def test_brownian_moments():
    reps, n, c = 10_000, 100, 10.0
    scale = np.diag([2.0, 0.5])
    paths = brownian_paths(n, 16, scale, c, RngStream(SEED, 9), reps)
    for node, t in ((4, 0.25), (8, 0.5), (16, 1.0)):
        theory = t * n * np.diag(scale) ** 2 / c**2
        vals = paths[:, node, :]
        assert np.all(np.abs(vals.mean(axis=0)) <= 4 * np.sqrt(theory / reps))
        assert np.all(np.abs(vals.var(axis=0, ddof=1) - theory) <= 4 * theory * math.sqrt(2.0 / (reps - 1)))


def test_small_ball_extremes():
    f = GridFn.zeros(16)
    assert small_ball_estimate(f, [[1.0]], 1.0, 1, 100.0, 500, RngStream(SEED)).p_hat == 1.0
    far = line(10.0, 16)
    est = small_ball_estimate(far, [[1.0]], 1.0, 1, 0.5, 500, RngStream(SEED))
    assert est.p_hat == 0.0
    assert est.se == 0.0
    with pytest.raises(DimensionError):
        small_ball_estimate(f, np.eye(2), 1.0, 1, 0.5, 10, RngStream(SEED))


def test_small_ball_bounds_closed_form():
    # I(t in the 0.25 tube) = 0.5625
    lower, upper = small_ball_bounds(line(1.0), 1.0, 2.0, 2, 0.25)
    assert_allclose(upper, math.exp(-0.5625))
    assert_allclose(lower, 0.5 * math.exp(-0.5625))
    assert_allclose(small_ball_bounds(line(0.5), 1.0, 2.0, 2, 0.5), (0.5, 1.0), atol=1e-12)


@pytest.mark.parametrize("slope", [0.0, 0.5])
def test_small_ball_sandwich(hartman_wintner, slope):
    n = 10**4
    sandwich = small_ball_sandwich(line(slope), 1.0, normalizer_at(hartman_wintner, n), n, 0.5, 20_000, RngStream(SEED))
    assert sandwich.outer.hits >= 100
    assert sandwich.holds()
    assert sandwich.to_json()["holds"] is True


# cluster nets


def test_delta_net_properties(rng):
    pts = rng.standard_normal((300, 2))
    net = delta_net(pts, 0.3)
    gaps = np.linalg.norm(pts[:, None, :] - net[None, :, :], axis=2).min(axis=1)
    assert np.all(gaps <= 0.3)
    pair = np.linalg.norm(net[:, None, :] - net[None, :, :], axis=2)
    assert np.all(pair[~np.eye(len(net), dtype=bool)] > 0.3)
    assert_array_equal(delta_net(pts[::-1], 0.3), net)
    assert_array_equal(merge_nets([pts[:100], pts[100:]], 0.3), merge_nets([pts[100:], pts[:100]], 0.3))


def test_constant_stream_gives_single_point():
    p = np.array([0.3, -0.2])
    report = empirical_cluster([Visit(n, p) for n in range(1, 20)], delta=0.1)
    assert_array_equal(report.net, [p])
    assert report.max_ratio == pytest.approx(np.linalg.norm(p))


def test_zero_law_net(hartman_wintner):
    model = GaussianModel(np.zeros((2, 2)))
    report = empirical_cluster(simulate_partial_sums(model, hartman_wintner, 500, RngStream(SEED)), 0.15)
    assert_array_equal(np.abs(report.net), [[0.0, 0.0]])


def test_empty_tail_window():
    with pytest.raises(ParameterError):
        empirical_cluster([Visit(1, np.zeros(2))], delta=0.1, burn_in=10)


def test_reflected_nets_agree(rng):
    pts = rng.standard_normal((200, 2)) * 0.5
    visits = [Visit(i + 1, p) for i, p in enumerate(pts)]
    mirrored = [Visit(i + 1, -p) for i, p in enumerate(pts)]
    net = empirical_cluster(visits, 0.15).net
    net_of_mirror = empirical_cluster(mirrored, 0.15).net
    gaps = np.linalg.norm(net_of_mirror[:, None, :] + net[None, :, :], axis=2).min(axis=1)
    assert np.all(gaps <= 0.15)


def test_sector_coverage():
    angles = 2 * np.pi * (np.arange(16) + 0.5) / 16
    ring = np.column_stack([np.cos(angles), np.sin(angles)]) * 0.8
    report = empirical_cluster([Visit(i + 1, p) for i, p in enumerate(ring)], 0.05)
    assert report.sector_coverage(16, 0.5) == 16
    assert report.sector_coverage(16, 0.9) == 0
    assert report.inside_ball(1.3)
    flat = empirical_cluster([Visit(1, np.array([0.5]))], 0.05)
    with pytest.raises(DimensionError):
        flat.sector_coverage()


def test_cluster_csv_round_trip(gaussian_identity_2d, hartman_wintner):
    visits = simulate_partial_sums(gaussian_identity_2d, hartman_wintner, 2000, RngStream(SEED), snapshot_every=3, grid_size=8)
    report = empirical_cluster(visits, 0.1)
    net, snaps = cluster_from_csv(report.to_csv())
    assert_array_equal(net, report.net)
    assert [n for n, _ in snaps] == [n for n, _ in report.snapshots]
    for (_, a), (_, b) in zip(snaps, report.snapshots):
        assert_array_equal(a.values, b.values)


def test_replicas_independent_of_worker_count(gaussian_identity_2d, hartman_wintner):
    config = SimulationConfig(n_max=3000, snapshot_every=2, grid_size=16)
    serial = run_replicas(gaussian_identity_2d, hartman_wintner, config, streams(SEED, 3), workers=1)
    threaded = run_replicas(gaussian_identity_2d, hartman_wintner, config, streams(SEED, 3), workers=3)
    for a, b in zip(serial, threaded):
        assert_array_equal(a.points, b.points)
    assert cluster_replicas(serial, config).to_json() == cluster_replicas(threaded, config).to_json()


# containment


def test_lower_set_snapshots_are_contained():
    predicted = unit_box_predictions()
    probes = predicted.lower_samples(32)
    visits = [Visit(i + 1, f.values[-1], f) for i, f in enumerate(probes)]
    summary = containment_check(empirical_cluster(visits, 0.01), predicted, tol=0.05)
    assert summary.upper_violations == 0
    assert summary.coverage == 1.0
    assert not summary.vacuous
    assert summary.sqrt_t_violations == 0
    assert summary.points_outside == 0


def test_steep_snapshot_violates_upper_box():
    predicted = unit_box_predictions()
    f = line(1.5, 64).outer([1.0, 0.0])
    report = empirical_cluster([Visit(10, f.values[-1], f)], 0.01)
    summary = containment_check(report, predicted, tol=0.05)
    assert summary.upper_violations == 1
    assert_allclose(summary.max_upper_excess, 0.5, atol=1e-4)
    assert report.distances["upper"] == summary.upper_distances


def test_no_snapshots_gives_vacuous_coverage():
    report = empirical_cluster([Visit(5, np.array([0.5, 0.0]))], 0.01)
    summary = containment_check(report, unit_box_predictions(), tol=0.05)
    assert summary.vacuous
    assert summary.coverage == 1.0
    assert summary.to_json()["vacuous_coverage"] is True


# diagnostics


def test_talagrand_bound():
    assert talagrand_bound(0.5, 1.0) == 1.0
    assert_allclose(talagrand_bound(4.0, 2.0), math.exp(1 / 16 - 4.0 - 2.0))
    with pytest.raises(ParameterError):
        talagrand_bound(0.0, 1.0)


def test_talagrand_estimate_is_informational():
    diag = talagrand_estimate(0.5, 1.0, 40, RngStream(SEED), grid_size=16)
    assert 0.0 <= diag.p_hat <= 1.0
    assert diag.to_json()["informational"] is True


@pytest.mark.slow
def test_desk_scale_clustering(gaussian_identity_2d, hartman_wintner):
    config = SimulationConfig(n_max=10**6, snapshot_every=0)
    results = run_replicas(gaussian_identity_2d, hartman_wintner, config, streams(config.seed, 1))
    report = cluster_replicas(results, config)
    assert report.max_ratio < 2.0
    assert report.sector_coverage(16, 0.5) >= 8
