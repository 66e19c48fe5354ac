import numpy as np
import pytest

from sptrack import (ConstantSymmetric, DeviceVariationSpec, LinearDevice, OffsetModel,
                     make_reference, make_tile, sp_error_stats, symmetric_point, zs_cyclic,
                     zs_stochastic)

from conftest import one_by_one


def test_single_step_drift_matches_minus_dw_G(oracle):
    n = 100_000
    dw = 1e-3
    t = make_tile(1, n, LinearDevice(1.2, 0.8), dw_min=dw, seed=0)
    t.weights = np.full((1, n), 0.5)
    zs_stochastic(t, 1)
    step = t.weights.ravel() - 0.5
    expect = -dw * oracle["G_at_half"]
    assert abs(step.mean() - expect) <= 3 * step.std() / np.sqrt(n)


def test_no_drift_when_started_at_sp(oracle):
    n = 100_000
    t = make_tile(1, n, LinearDevice(1.2, 0.8), seed=1)
    t.weights = np.full((1, n), oracle["sp_linear"])
    zs_stochastic(t, 1)
    step = t.weights.ravel() - oracle["sp_linear"]
    assert abs(step.mean()) <= 3 * step.std() / np.sqrt(n)


def test_symmetric_device_random_walk_is_unbiased():
    n = 20_000
    t = make_tile(1, n, ConstantSymmetric(1.0), seed=2)
    w0 = t.weights.copy()
    zs_stochastic(t, 50)
    d = (t.weights - w0).ravel()
    assert abs(d.mean()) <= 3 * d.std() / np.sqrt(n)


def test_pulse_accounting_matches_counter():
    t = make_tile(4, 5, LinearDevice(1.2, 0.8), seed=0)
    before = t.pulse_counter
    est = zs_stochastic(t, 37)
    assert est.pulses_used == t.pulse_counter - before == 37 * 20
    est = zs_cyclic(t, 10)
    assert est.pulses_used == 2 * 10 * 20


def test_estimate_is_final_iterate_by_default():
    t = make_tile(3, 3, LinearDevice(1.2, 0.8), seed=0)
    est = zs_stochastic(t, 100)
    np.testing.assert_array_equal(est.estimate, t.weights)


def test_bad_step_count():
    t = one_by_one()
    for bad in (0, -3, 2.5):
        with pytest.raises(ValueError):
            zs_stochastic(t, bad)
        with pytest.raises(ValueError):
            zs_cyclic(t, bad)


def test_trajectory_decimation():
    t = make_tile(2, 2, LinearDevice(1.2, 0.8), seed=0)
    est = zs_stochastic(t, 5000, record_trajectory=True)
    steps = [n for n, _ in est.trajectory]
    assert steps[1] - steps[0] == 5 and len(steps) == 1000


def test_cyclic_pair_from_sp(oracle):
    t = one_by_one(w=oracle["sp_linear"], dw=1e-3)
    zs_cyclic(t, 1)
    drift = t.weights[0, 0] - oracle["sp_linear"]
    assert drift == pytest.approx(oracle["cyclic_pair_drift"], rel=1e-6)
    assert abs(drift) <= 10 * 1e-3 ** 2 * 1.0


def test_cyclic_constant_device_cancels():
    t = make_tile(3, 3, ConstantSymmetric(1.0), seed=0)
    w0 = t.weights.copy()
    zs_cyclic(t, 1)
    np.testing.assert_allclose(t.weights, w0, atol=1e-16)


def test_cyclic_is_deterministic():
    a = make_tile(6, 6, LinearDevice(1.2, 0.8), DeviceVariationSpec(0.1, 0.05), seed=3)
    b = a.copy(seed=99)
    ea, eb = zs_cyclic(a, 500), zs_cyclic(b, 500)
    np.testing.assert_array_equal(ea.estimate, eb.estimate)


def test_cyclic_and_stochastic_share_rate_order():
    """Average mean G^2 over a run scales alike for both variants."""
    def avg(fn, steps, dw):
        t = make_tile(16, 16, LinearDevice(1.2, 0.8), DeviceVariationSpec(0.1, 0.05),
                      dw_min=dw, seed=1)
        return fn(t, steps).running_mean_G_sq

    for dw in (2e-3, 1e-3):
        s = avg(zs_stochastic, 4000, dw)
        c = avg(zs_cyclic, 2000, dw)  # same 4000 steps
        assert 0.5 < c / s < 2.0


def test_zs_reaches_sp():
    t = make_tile(16, 16, LinearDevice(1.2, 0.8), DeviceVariationSpec(0.1, 0.05), seed=0)
    truth = symmetric_point(t)
    est = zs_stochastic(t, 8000)
    assert np.sqrt(np.mean((est.estimate - truth) ** 2)) < 0.05


def test_make_reference():
    rng = np.random.default_rng(0)
    sp = rng.uniform(-0.3, 0.3, size=(300, 300))
    np.testing.assert_array_equal(make_reference(sp, OffsetModel(0, 0), rng), sp)
    np.testing.assert_allclose(make_reference(sp, OffsetModel(0.1, 0), rng) - sp, 0.1,
                               atol=1e-15)
    r = make_reference(sp[:316, :316].ravel()[:100_000], OffsetModel(0.0, 0.05), rng)
    assert np.std(r - sp.ravel()[:100_000]) == pytest.approx(0.05, rel=0.01)


def test_error_stats_examples(oracle):
    truth = np.full((4, 4), 0.2)
    z = sp_error_stats(truth.copy(), truth)
    assert z.mean_offset == z.std_offset == z.rel_mean_error == 0.0
    s = sp_error_stats(truth + 0.01, truth)
    ex = oracle["offset_example"]
    assert s.mean_offset == pytest.approx(ex["mean_offset"], abs=1e-15)
    assert s.rel_mean_error == pytest.approx(ex["rel_mean_error"], rel=1e-12)


def test_error_stats_G_at_truth_is_zero():
    t = make_tile(8, 8, LinearDevice(1.2, 0.8), DeviceVariationSpec(0.1, 0.05), seed=0)
    sp = symmetric_point(t)
    assert sp_error_stats(sp, sp, t).mean_G_sq <= 1e-20


def test_error_stats_zero_mean_truth_flagged():
    t = make_tile(1, 1, ConstantSymmetric(), seed=0)
    s = sp_error_stats(np.array([[0.03]]), symmetric_point(t), t)
    assert s.rel_undefined and s.rel_mean_error == pytest.approx(0.03)


def test_error_stats_shape_mismatch():
    with pytest.raises(ValueError):
        sp_error_stats(np.zeros((2, 2)), np.zeros((3, 3)))
