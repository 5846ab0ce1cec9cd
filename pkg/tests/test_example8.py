import math
from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose

from limset.errors import CapabilityError, ParameterError
from limset.heavy_tail_models import (
    BlockPosition,
    BlockSchedule,
    StarSet,
    build_example8,
    q_mass_bound,
    q_of,
    slow_variation_profile,
    trunc_cov,
    verify_block_identities,
)
from limset.heavy_tail_models.example8 import anchor_index, ladder_exponent

LN3 = math.log(3.0)


@pytest.fixture
def two_segment_star():
    return StarSet.from_segments([(1.0, [1.0, 0.0]), (0.8, [1.0, 1.0])])


def test_ladder_indexing():
    assert [ladder_exponent(1, ell) for ell in range(3)] == [1, 2, 8]
    assert ladder_exponent(2, 3) == 27
    assert anchor_index(1, 2) == anchor_index(2, 0) == 2
    assert anchor_index(3, 0) == 5
    with pytest.raises(ParameterError):
        ladder_exponent(1, 3)


def test_first_anchors(example8_exact):
    sched = example8_exact.schedule
    assert sched.m_int(0) == 9
    assert sched.m_int(1) == 81
    assert_allclose([a.ln_m for a in sched.anchors[:3]], [2 * LN3, 4 * LN3, 256 * LN3], rtol=1e-15)
    assert sched.compare_m(3**256, 2) == 0
    assert sched.compare_m(3**256 - 1, 2) == -1


def test_level_sequence_first_block(example8_exact):
    assert example8_exact.level(8) == 0.0
    for n in (9, 10, 40, 80):
        assert_allclose(example8_exact.level(n), 2 * LN3, rtol=1e-14)
    assert_allclose(example8_exact.level(81), math.log(81), rtol=1e-14)
    assert_allclose(example8_exact.level(10**6), math.log(81), rtol=1e-14)


def test_q_values(example8_exact):
    assert q_of(example8_exact, 10).is_zero
    assert q_of(example8_exact, 5).is_zero
    assert_allclose(q_of(example8_exact, 9).ln_mag, math.log(LN3) - 18.0, rtol=1e-14)
    assert_allclose(q_of(example8_exact, 81).ln_mag, math.log(LN3) - 162.0, rtol=1e-14)
    assert_allclose(q_of(example8_exact, BlockPosition(1, 0)).ln_mag, math.log(LN3) - 162.0, rtol=1e-14)


def test_trunc_cov_at_first_seam(example8_exact):
    expected = np.diag([math.log(81), 0.0])
    assert_allclose(trunc_cov(example8_exact, math.exp(81)), expected, rtol=1e-12, atol=1e-12)
    assert_allclose(trunc_cov(example8_exact, math.exp(8.5)), np.zeros((2, 2)))
    assert_allclose(example8_exact.trunc_cov_log(40.0), np.diag([2 * LN3, 0.0]), rtol=1e-14)


def test_trunc_cov_routes_blocks_to_segments(two_segment_star):
    model = build_example8(two_segment_star, mode="exact_log")
    z = np.array([1.0, 1.0]) / math.sqrt(2.0)
    L1, L2 = 4 * LN3, 256 * LN3
    # ln t beyond ln m_(2,0) = 3^256, far below m_(2,1)
    got = model.trunc_cov_log(1e123)
    expected = L1 * np.diag([1.0, 0.0]) + 0.64 * (L2 - L1) * np.outer(z, z)
    assert_allclose(got, expected, rtol=1e-12)


def test_trunc_cov_monotone_psd(two_segment_star):
    model = build_example8(two_segment_star, mode="exact_log")
    ws = np.linspace(0.5, 600.0, 80)
    mats = [model.trunc_cov_loglog(w) for w in ws]
    for lo, hi in zip(mats[:-1], mats[1:]):
        diff = hi - lo
        assert np.linalg.eigvalsh(diff)[0] >= -1e-10 * max(1.0, np.abs(hi).max())


def test_H_envelope_at_probe_points(example8_exact):
    # probes are ln t; H(t) <= ln ln t
    for x in np.geomspace(1.0001, 1e300, 1000):
        ln_h = example8_exact.ln_H_log(float(x))
        if x < 9.0:
            assert ln_h == -math.inf
        else:
            assert ln_h <= math.log(math.log(x)) + 1e-12
    # equality at the anchors
    for anchor in example8_exact.schedule.anchors[:8]:
        assert_allclose(example8_exact.ln_H_loglog(anchor.ln_m), anchor.ln_ln_m, rtol=1e-15)


def test_H_envelope_in_log_domain(example8_exact):
    for w in np.linspace(0.0, 5000.0, 400):
        ln_h = example8_exact.ln_H_loglog(float(w))
        if ln_h > -math.inf:
            assert ln_h <= math.log(w) + 1e-12


def test_block_identities_k1(example8_exact):
    report = verify_block_identities(example8_exact, 1)
    assert report.passed
    anchors = [c for c in report.checks if c.name in ("anchor", "seam")]
    assert [c.detail.split("2^")[1].split(",")[0] for c in anchors] == ["1", "2", "8"]


def test_block_identities_k3(example8_exact):
    report = verify_block_identities(example8_exact, 3)
    assert report.passed, [c.detail for c in report.failures()]
    names = {c.name for c in report.checks}
    assert names == {"anchor", "seam", "ramp", "ramp_landing", "envelope", "slow_variation"}
    assert sum(c.name == "seam" for c in report.checks) == 3


def test_block_identities_empty_for_k0(example8_exact):
    assert verify_block_identities(example8_exact, 0).checks == []


def test_block_identities_beyond_ladder(example8_exact):
    with pytest.raises(ParameterError):
        verify_block_identities(example8_exact, 20)


def test_ramp_exponent_closed_form(example8_exact):
    k = 3
    a = anchor_index(k, k)
    e_lo = ladder_exponent(k, k)
    for j in (1, 5, 27):
        got = example8_exact.level_exponent_at(BlockPosition(a + 1, j - 27))
        assert got == e_lo + Fraction((2 * k * k + 3 * k + 1) * j, k**3)


def test_slow_variation_profile_decreases(example8_exact):
    profile = slow_variation_profile(example8_exact, 6)
    ratios = [r for _, r in profile]
    assert all(b <= a + 1e-12 for a, b in zip(ratios[:-1], ratios[1:]))
    assert_allclose(ratios[1], 15 / 8 * math.log(2.0), rtol=1e-12)
    assert ratios[-1] < 0.5


@pytest.mark.parametrize("n_enum", [0, 9, 200])
def test_q_mass_bound_below_half(example8_exact, n_enum):
    report = q_mass_bound(example8_exact, n_enum)
    assert report.below_half
    assert report.total < 0.5
    if n_enum == 0:
        assert report.n_terms == 0
        assert report.partial.is_zero
    if n_enum == 200:
        assert report.n_terms == 2
        assert_allclose(report.partial.to_float(), LN3 * math.exp(-18.0), rtol=1e-12)
        assert report.tail_bound < 1e-170


def test_scaled_ladder_defaults(two_segment_star):
    model = build_example8(two_segment_star, mode="scaled", kappa=8, k_max=2)
    assert [a.m for a in model.schedule.anchors] == [2, 4, 8, 16, 32, 64]
    assert model.supports_sampling
    assert verify_block_identities(model, 2).passed
    assert q_mass_bound(model, 100).below_half


def test_scaled_ladder_capability_error(single_segment_star):
    with pytest.raises(CapabilityError, match=r"\(3,3\)"):
        build_example8(single_segment_star, mode="scaled", kappa=8, k_max=3)


def test_large_kappa_keeps_structure(single_segment_star):
    model = build_example8(single_segment_star, mode="scaled", kappa=10**6, k_max=2)
    assert [a.exponent for a in model.schedule.anchors] == [1, 2, 3, 4, 5, 6]
    assert q_mass_bound(model, 0).below_half


def test_scaled_envelope(single_segment_star):
    model = build_example8(single_segment_star, mode="scaled")
    for n in range(2, 200):
        assert model.ln_level(n) <= math.log(math.log(n)) + 1e-12
    levels = [model.level(n) for n in range(1, 200)]
    assert all(b >= a for a, b in zip(levels[:-1], levels[1:]))


def test_scaled_zero_mass_frequency(two_segment_star):
    model = build_example8(two_segment_star, mode="scaled")
    gen = np.random.Generator(np.random.Philox(key=[11, 0]))
    z, x = model.sample_pairs(gen, 1_000_000)
    p0 = model.p_zero
    freq = float(np.mean(z == 0.0))
    se = math.sqrt(p0 * (1 - p0) / z.size)
    assert abs(freq - p0) <= 3 * se
    assert np.all(np.linalg.norm(x, axis=1) <= np.abs(z) * (1 + 1e-12))


def test_scaled_sampler_deterministic(two_segment_star):
    model = build_example8(two_segment_star, mode="scaled")
    draw = lambda: model.sample(np.random.Generator(np.random.Philox(key=[3, 1])), 5000)
    np.testing.assert_array_equal(draw(), draw())
    prefix = model.sample(np.random.Generator(np.random.Philox(key=[3, 1])), 100)
    np.testing.assert_array_equal(prefix, draw()[:100])


def test_exact_model_refuses_sampling(example8_exact, rng):
    with pytest.raises(CapabilityError):
        example8_exact.sample(rng, 3)


def test_tail_is_double_q_sum(example8_exact):
    assert_allclose(example8_exact.tail(0.0), 2 * LN3 * (math.exp(-18.0) + math.exp(-162.0)), rtol=1e-12)
    assert_allclose(example8_exact.tail(math.exp(10.0)), 2 * LN3 * math.exp(-162.0), rtol=1e-12)
    assert example8_exact.tail(math.exp(82.0)) == 0.0


def test_exact_schedule_bounds():
    with pytest.raises(ParameterError):
        BlockSchedule.exact(12)
    assert BlockSchedule.exact(2).generations == 2
