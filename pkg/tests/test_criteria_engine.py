import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from config.model_config import NormalizerConfig
from config.run_config import ClassifierConfig
from limset.criteria_engine import (
    Classification,
    Ellipsoid,
    MemberStatus,
    NormalizerSeq,
    PointCloud,
    PredictedSets,
    alpha0,
    build_plan,
    coordinate_alphas,
    eigensystem,
    eigensystem_from_cov,
    function_membership,
    jacobi_eigh,
    point_membership,
    predicted_sets,
    tail_summability,
    validate_normalizer,
)
from limset.errors import ClassifierError, DimensionError, InputError, ParameterError
from limset.heavy_tail_models import GaussianModel, IndependentComponentsModel, NormalLaw, StarSet
from limset.strassen_core import GridFn, line


@pytest.fixture
def config():
    return ClassifierConfig()


@pytest.fixture
def hw_plan(gaussian_identity_2d, hartman_wintner, config):
    return build_plan(gaussian_identity_2d, hartman_wintner, config)


def pair(a: float, b: float, n_grid: int = 64) -> GridFn:
    return GridFn.stack([line(a, n_grid), line(b, n_grid)])


# normalizers


def test_hartman_wintner_values(hartman_wintner):
    n = 1e6
    assert_allclose(hartman_wintner.c(n), math.sqrt(2 * n * math.log(math.log(n))), rtol=1e-12)
    assert_allclose(hartman_wintner.ratio_log(math.log(n)), math.log(math.log(math.log(n))), rtol=1e-12)


def test_power_family_and_loglog_power():
    seq = NormalizerSeq.power(1.0)
    assert_allclose(seq.log_c(math.log(500.0)), math.log(500.0))
    assert seq.loglog_power is None
    assert NormalizerSeq.sqrt_2n_loglog_pow(1.0).loglog_power == 2.0
    with pytest.raises(ParameterError):
        NormalizerSeq.power(0.0)
    with pytest.raises(ParameterError):
        NormalizerSeq.sqrt_2n_loglog_pow(-1.0)


def test_tabulated_interpolates_in_log_space():
    seq = NormalizerSeq.tabulated([1.0, 2.0, 3.0, 4.0, 5.0])
    assert_allclose(seq.c(4), 4.0)
    assert_allclose(seq.log_c(0.5 * (math.log(2) + math.log(3))), 0.5 * (math.log(2) + math.log(3)))
    with pytest.raises(ParameterError):
        seq.c(9)
    with pytest.raises(ParameterError):
        NormalizerSeq.tabulated([1.0, -2.0, 3.0, 4.0])


def test_from_config():
    seq = NormalizerSeq.from_config(NormalizerConfig(family="sqrt_2n_loglog_pow", p=0.5, n_max=5000))
    assert seq.family == "sqrt_2n_loglog_pow"
    assert seq.p == 0.5
    assert seq.n_max == 5000
    with pytest.raises(ParameterError):
        NormalizerSeq.from_config({"family": "cubic"})


@pytest.mark.parametrize("w", [3.0, 10.0, 50.0, 1e16])
def test_inverse_loglog_c(loglog_p1, w):
    v = loglog_p1.inverse_loglog_c(w)
    assert_allclose(loglog_p1.loglog_c(v), w, rtol=1e-10)


def test_validate_hartman_wintner_passes(hartman_wintner):
    report = validate_normalizer(hartman_wintner)
    assert report.passed
    assert [c.name for c in report.checks] == ["cn1", "cn2(eps=0.5)", "cn2(eps=0.1)", "cn2(eps=0.01)"]
    assert report.tail_summable is None


def test_validate_sqrt_n_fails_cn1():
    report = validate_normalizer(NormalizerSeq.power(0.5))
    assert not report.passed
    assert [c.name for c in report.violations()] == ["cn1"]


def test_validate_linear_normalizer_passes():
    report = validate_normalizer(NormalizerSeq.power(1.0))
    assert report.passed
    assert report.to_json()["passed"] is True


def test_validate_range_checked(hartman_wintner):
    with pytest.raises(ParameterError):
        validate_normalizer(hartman_wintner, n_min=100, n_max=50)


def test_tail_summability_gaussian(gaussian_identity_2d, hartman_wintner, config):
    assert tail_summability(gaussian_identity_2d, hartman_wintner, config).classification == Classification.CONVERGENT
    report = validate_normalizer(hartman_wintner, model=gaussian_identity_2d, config=config)
    assert report.tail_summable is True


# eigen-systems


def test_jacobi_diagonal():
    evals, vecs = jacobi_eigh(np.diag([1.0, 3.0, 2.0]))
    assert_allclose(evals, [3.0, 2.0, 1.0])
    assert_allclose(np.abs(vecs), np.eye(3)[[1, 2, 0]])


def test_jacobi_random_psd_round_trip(rng):
    for d in (2, 3, 5):
        a = rng.standard_normal((d, d))
        cov = a @ a.T
        system = eigensystem_from_cov(cov)
        assert system.rank == d
        assert_allclose(system.reconstruct(), cov, atol=1e-9)
        assert_allclose(system.vectors @ system.vectors.T, np.eye(d), atol=1e-12)
        assert np.all(np.diff(system.lambdas) <= 0)


def test_rank_one_eigensystem():
    u = np.array([3.0, 4.0]) / 5.0
    system = eigensystem_from_cov(4.0 * np.outer(u, u))
    assert system.rank == 1
    assert_allclose(system.lambdas, [2.0, 0.0], atol=1e-12)
    assert_allclose(np.abs(system.vectors[0]), u, atol=1e-12)
    assert_allclose(system.ln_top_variance, math.log(4.0))


def test_zero_and_oversized_matrices():
    assert eigensystem_from_cov(np.zeros((2, 2))).rank == 0
    assert eigensystem_from_cov(np.zeros((2, 2))).ln_top_variance == -math.inf
    with pytest.raises(ParameterError):
        jacobi_eigh(np.eye(9))
    with pytest.raises(DimensionError):
        jacobi_eigh(np.ones((2, 3)))


def test_eigensystem_of_gaussian(gaussian_identity_2d, hartman_wintner):
    system = eigensystem(gaussian_identity_2d, hartman_wintner, n=10**6)
    assert_allclose(system.variances, [1.0, 1.0], atol=1e-9)
    with pytest.raises(ParameterError):
        eigensystem(gaussian_identity_2d, hartman_wintner)


# alpha constants


def test_alpha0_hartman_wintner(gaussian_identity_2d, hartman_wintner, config, hw_plan):
    est = alpha0(gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)
    assert abs(est.value - 1.0) < 0.15
    assert est.lo <= est.value <= est.hi
    assert est.width < 0.25
    assert est.scale == "log"


def test_alpha_verdicts_either_side_of_one(hw_plan):
    ln_var = np.array([b.eigen.ln_top_variance for b in hw_plan.blocks])
    assert hw_plan.classify(2 * math.log(0.9) - ln_var).classification == Classification.DIVERGENT
    assert hw_plan.classify(2 * math.log(1.1) - ln_var).classification == Classification.CONVERGENT


def test_alpha0_anisotropic_gaussian(hartman_wintner, config):
    model = GaussianModel(np.diag([4.0, 1.0]))
    assert abs(alpha0(model, hartman_wintner, config).value - 2.0) < 0.25
    a1, a2 = coordinate_alphas(model, hartman_wintner, config)
    assert abs(a1.value - 2.0) < 0.25
    assert abs(a2.value - 1.0) < 0.15
    assert a1.label == "alpha_1"


def test_alpha0_larger_normalizer_collapses(gaussian_identity_2d, loglog_p1, config):
    assert alpha0(gaussian_identity_2d, loglog_p1, config).value < 0.05


def test_alpha0_sqrt_n_normalizer_fails(gaussian_identity_2d, config):
    with pytest.raises(ClassifierError) as err:
        alpha0(gaussian_identity_2d, NormalizerSeq.power(0.5), config)
    assert "probes" in err.value.diagnostics


def test_alpha0_zero_law(hartman_wintner, config):
    est = alpha0(GaussianModel(np.zeros((2, 2))), hartman_wintner, config)
    assert est.value == 0.0
    assert (est.lo, est.hi) == (0.0, 0.0)


def test_example8_alphas_on_loglog_scale(example8_exact, loglog_p1, config):
    plan = build_plan(example8_exact, loglog_p1, config)
    assert plan.scale == "loglog"
    est = alpha0(example8_exact, loglog_p1, config, plan=plan)
    assert abs(est.value - 1.0) < 0.15
    a1, a2 = coordinate_alphas(example8_exact, loglog_p1, config, plan=plan)
    assert abs(a1.value - 1.0) < 0.15
    assert a2.value == 0.0


def test_loglog_scale_needs_ladder_model(gaussian_identity_2d, loglog_p1):
    with pytest.raises(ParameterError):
        build_plan(gaussian_identity_2d, loglog_p1, ClassifierConfig(scale="loglog"))


# membership


@pytest.mark.parametrize(
    "x, status",
    [
        ([0.5, 0.0], MemberStatus.MEMBER),
        ([0.3, -0.4], MemberStatus.MEMBER),
        ([1.5, 0.0], MemberStatus.NON_MEMBER),
        ([2.0, 2.0], MemberStatus.NON_MEMBER),
    ],
)
def test_point_membership_gaussian(gaussian_identity_2d, hartman_wintner, config, hw_plan, x, status):
    verdict = point_membership(x, gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)
    assert verdict.status == status
    assert verdict.monotone
    mirrored = point_membership(-np.asarray(x), gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)
    assert mirrored.status == status


def test_point_membership_epsilon_star(gaussian_identity_2d, hartman_wintner, config, hw_plan):
    inside = point_membership([0.5, 0.0], gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)
    assert inside.epsilon_star is None
    outside = point_membership([1.5, 0.0], gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)
    assert outside.epsilon_star == config.epsilons[0]
    assert outside.to_json()["status"] == "non_member"


def test_point_membership_star_like(gaussian_identity_2d, hartman_wintner, config, hw_plan, rng):
    for _ in range(5):
        x = rng.uniform(-0.7, 0.7, size=2)
        if point_membership(x, gaussian_identity_2d, hartman_wintner, config, plan=hw_plan).member:
            assert point_membership(0.5 * x, gaussian_identity_2d, hartman_wintner, config, plan=hw_plan).member


def test_point_membership_rejects_bad_input(gaussian_identity_2d, hartman_wintner, config, hw_plan):
    with pytest.raises(DimensionError):
        point_membership([0.1, 0.2, 0.3], gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)
    with pytest.raises(InputError):
        point_membership([np.nan, 0.0], gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)


def test_point_membership_workers_agree(gaussian_identity_2d, hartman_wintner, config, hw_plan):
    serial = point_membership([0.8, 0.3], gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)
    threaded = point_membership([0.8, 0.3], gaussian_identity_2d, hartman_wintner, config, plan=hw_plan, workers=3)
    assert serial.to_json() == threaded.to_json()


def test_independent_fast_path(hartman_wintner, config):
    model = IndependentComponentsModel([NormalLaw(), NormalLaw()])
    verdict = point_membership([0.5, 0.0], model, hartman_wintner, config)
    assert verdict.fast_path
    assert verdict.member
    assert not point_membership([1.5, 0.0], model, hartman_wintner, config).member


def test_example8_point_membership(example8_exact, loglog_p1, config):
    plan = build_plan(example8_exact, loglog_p1, config)
    on_segment = point_membership([0.6, 0.0], example8_exact, loglog_p1, config, plan=plan)
    assert on_segment.status == MemberStatus.MEMBER
    assert on_segment.scale == "loglog"
    off_segment = point_membership([0.0, 0.6], example8_exact, loglog_p1, config, plan=plan)
    assert off_segment.status == MemberStatus.NON_MEMBER


@pytest.mark.parametrize(
    "f, status",
    [
        (pair(0.5, 0.0), MemberStatus.MEMBER),
        (pair(0.4, 0.4), MemberStatus.MEMBER),
        (pair(1.5, 0.0), MemberStatus.NON_MEMBER),
    ],
)
def test_function_membership_gaussian(gaussian_identity_2d, hartman_wintner, config, hw_plan, f, status):
    verdict = function_membership(f, gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)
    assert verdict.status == status
    assert not verdict.fast_path


def test_function_membership_example8(example8_exact, loglog_p1, config):
    plan = build_plan(example8_exact, loglog_p1, config)
    assert function_membership(pair(0.6, 0.0), example8_exact, loglog_p1, config, plan=plan).member
    assert not function_membership(pair(0.0, 0.6), example8_exact, loglog_p1, config, plan=plan).member


def test_function_membership_checks_dim(gaussian_identity_2d, hartman_wintner, config, hw_plan):
    with pytest.raises(DimensionError):
        function_membership(line(0.5), gaussian_identity_2d, hartman_wintner, config, plan=hw_plan)


# predicted sets


def test_predicted_sets_gaussian(hartman_wintner, config):
    model = GaussianModel(np.diag([4.0, 1.0]))
    sets = predicted_sets(model, hartman_wintner, config)
    assert isinstance(sets.lower, Ellipsoid)
    assert_allclose(sets.upper_box, [2.0, 1.0], atol=0.25)
    assert sets.consistent(tol=0.1)
    assert sets.upper_distance(pair(0.5, 0.5)) == 0.0
    assert sets.upper_distance(pair(4.0, 0.0)) > 0.5
    assert sets.d2_upper is not None
    assert len(sets.lower_samples(32)) == len(sets.lower.probe_points()) * 8


def test_predicted_sets_example8(example8_exact, loglog_p1, config):
    sets = predicted_sets(example8_exact, loglog_p1, config)
    assert sets.lower is example8_exact.star
    assert sets.d2_upper_contains(pair(0.5, 0.0))
    assert not sets.d2_upper_contains(pair(0.0, 0.5))
    assert sets.to_json()["lower"]["type"] == "star"


def test_predicted_sets_from_candidate_points(gaussian_identity_2d, hartman_wintner, config, hw_plan):
    sets = predicted_sets(
        gaussian_identity_2d, hartman_wintner, config, a_points=[[0.5, 0.0], [2.0, 0.0]], plan=hw_plan
    )
    assert isinstance(sets.lower, PointCloud)
    assert_allclose(sets.lower.points, [[0.5, 0.0]])


def test_ellipsoid_geometry():
    ell = Ellipsoid(np.diag([2.0, 1.0]))
    assert ell.contains([1.9, 0.0])
    assert not ell.contains([0.0, 1.2])
    assert_allclose(ell.distance([0.0, 1.5]), 0.5, atol=1e-3)
    assert_allclose(ell.coordinate_extent(), [2.0, 1.0])
    degenerate = Ellipsoid(np.zeros((2, 2)))
    assert degenerate.contains([0.0, 0.0])
    assert_allclose(degenerate.distance([0.3, 0.4]), 0.5)


def test_d2_upper_off_diagonal_star():
    star = StarSet.from_segments([(1.0, [1.0, 1.0])])
    sets = PredictedSets.from_star(star)
    assert sets.d2_upper_contains(pair(0.5, 0.0))
    assert sets.d2_upper_contains(pair(0.6, 0.3))
    assert sets.d2_upper_contains(pair(0.7, 0.7))
    assert not sets.d2_upper_contains(pair(0.8, 0.0))
    assert not sets.d2_upper_contains(pair(0.72, 0.72))


def test_d2_upper_rejects_other_dims():
    star = StarSet.from_segments([(1.0, [1.0, 0.0, 0.0])])
    with pytest.raises(DimensionError):
        PredictedSets.from_star(star).d2_upper_contains(pair(0.1, 0.1))


@pytest.mark.parametrize("rho", [0.9, -0.9])
def test_ellipsoid_dominance_correlated(rho):
    evals, evecs = np.linalg.eigh(np.array([[1.0, rho], [rho, 1.0]]))
    ell = Ellipsoid((evecs * np.sqrt(evals)) @ evecs.T)
    assert not ell.contains([0.9, 0.0])
    assert ell.dominates([0.9, 0.0])
    assert ell.dominates([0.9, 0.9])
    assert ell.dominates([0.99, 0.5])
    assert not ell.dominates([1.0, 1.0])
    assert not ell.dominates([1.01, 0.0])


def test_ellipsoid_dominance_axis_aligned():
    ell = Ellipsoid(np.diag([2.0, 1.0]))
    assert ell.dominates([1.5, 0.5])
    assert ell.dominates([0.0, 0.0])
    assert not ell.dominates([2.0, 1.0])
    assert Ellipsoid(np.zeros((2, 2))).dominates([0.0, 0.0])
    assert not Ellipsoid(np.zeros((2, 2))).dominates([0.1, 0.0])


def test_point_cloud_dominance():
    cloud = PointCloud(np.array([[0.5, -0.5], [0.0, 0.9]]))
    assert cloud.dominates([0.4, 0.2])
    assert cloud.dominates([0.0, 0.8])
    assert not cloud.dominates([0.6, 0.0])
    assert not PointCloud(np.zeros((0, 2))).dominates([0.0, 0.0])


def test_d2_upper_gaussian_correlated(hartman_wintner, config):
    model = GaussianModel(np.array([[1.0, 0.9], [0.9, 1.0]]))
    sets = predicted_sets(model, hartman_wintner, config)
    assert sets.d2_upper_contains(pair(0.85, 0.0))
    assert sets.d2_upper_contains(pair(0.8, 0.8))
    assert not sets.d2_upper_contains(pair(1.2, 1.2))
