from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from momentfit.basis import AffineMap, BasisSpec
from momentfit.errors import ConditioningError, InputError
from momentfit.moments import WeightedSample, accumulate, parameter_vector
from momentfit.oracle import bootstrap_fit, finite_difference_check
from momentfit.polyfit import (
    build_gram,
    coefficient_derivatives,
    fit,
    loss_at,
    physical_coefficients,
    predict,
    solve_amplitudes,
)


def raw_pv(x, y, w=None, degree=1):
    s = WeightedSample(x, y, w)
    return parameter_vector(accumulate(s, BasisSpec(s.dim, degree, AffineMap.identity(s.dim))))


def test_constant_basis_gram():
    gs = build_gram(raw_pv([0.0, 1.0, 2.0], [1.0, 3.0, 8.0], degree=0))
    np.testing.assert_array_equal(gs.G, [[1.0]])
    assert gs.h[0] == pytest.approx(4.0)


def test_hand_computed_linear_gram():
    gs = build_gram(raw_pv([0.0, 1.0, 2.0], [1.0, 3.0, 5.0]))
    np.testing.assert_allclose(gs.G, [[1.0, 1.0], [1.0, 5.0 / 3.0]])
    np.testing.assert_allclose(gs.h, [3.0, 13.0 / 3.0])


@pytest.mark.parametrize("degree", [1, 3, 6])
def test_one_dim_gram_is_hankel(rng, degree):
    x = rng.uniform(-2, 2, 300)
    gs = build_gram(raw_pv(x, rng.normal(size=300), rng.uniform(0.2, 1, 300), degree=degree))
    i, l = np.indices(gs.G.shape)
    for s in range(2 * degree + 1):
        cells = gs.G[i + l == s]
        assert np.all(cells == cells[0])


def test_hankel_entries_are_weighted_power_means(rng):
    x = rng.uniform(-1, 1, 200)
    w = rng.uniform(0.1, 2, 200)
    gs = build_gram(raw_pv(x, rng.normal(size=200), w, degree=3))
    for i in range(4):
        for l in range(4):
            assert gs.G[i, l] == pytest.approx(np.sum(w * x ** (i + l)) / np.sum(w), rel=1e-12, abs=1e-15)


def test_degree_beyond_family_rejected():
    with pytest.raises(InputError):
        build_gram(raw_pv([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], degree=1), 2)


def test_exact_linear_data():
    x = np.linspace(-1, 3, 9)
    model = solve_amplitudes(build_gram(raw_pv(x, 1 + 2 * x)))
    np.testing.assert_allclose(model.coeffs, [1.0, 2.0], atol=1e-12)
    assert abs(model.loss) < 1e-12


def test_constant_fit_is_mean(rng):
    y = rng.normal(2, 1, 100)
    model = solve_amplitudes(build_gram(raw_pv(np.zeros(100), y, degree=0)))
    assert model.coeffs[0] == pytest.approx(y.mean())
    assert model.loss == pytest.approx(np.mean(y**2) - y.mean() ** 2)


def test_matches_brute_force_normal_equations(rng):
    x = rng.uniform(-1, 1, 50)
    y = np.sin(3 * x) + rng.normal(0, 0.1, 50)
    model = solve_amplitudes(build_gram(raw_pv(x, y, degree=3)))
    V = np.vander(x, 4, increasing=True)
    ref = np.linalg.lstsq(V, y, rcond=None)[0]
    np.testing.assert_allclose(model.coeffs, ref, rtol=1e-9)


def test_residual_after_refinement(rng):
    x = rng.uniform(-1, 1, 400)
    pv = parameter_vector(accumulate(WeightedSample(x, np.cos(4 * x), None), BasisSpec.for_data(x, 14)))
    model = solve_amplitudes(build_gram(pv))
    gs = model.gram
    assert np.linalg.norm(gs.G @ model.coeffs - gs.h) <= 1e-8 * np.linalg.norm(gs.h)


def test_conditioning_guard_carries_estimate():
    x = np.linspace(0, 1, 50)
    pv = raw_pv(x + 10.0, x, degree=6)
    with pytest.raises(ConditioningError) as info:
        solve_amplitudes(build_gram(pv))
    assert info.value.estimate > 1e12


def test_constant_model_derivatives():
    model = solve_amplitudes(build_gram(raw_pv([0.0, 1.0, 2.0], [1.0, 2.0, 6.0], degree=0)))
    dh, dg = coefficient_derivatives(model)
    np.testing.assert_array_equal(dh, [[1.0]])
    np.testing.assert_array_equal(dg, [[-model.coeffs[0]]])  # the <1> entry, which never varies
    assert finite_difference_check(model).max_rel_error == 0.0


def test_symmetric_inputs_decouple_slope_from_mean():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    model = fit(WeightedSample(x, np.array([1.0, 0.0, 2.0, 5.0, 3.0]), None), 1)
    dh, _ = coefficient_derivatives(model)
    assert dh[1, 0] == 0.0


@pytest.mark.parametrize("seed", range(4))
def test_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (300, 2))
    y = x[:, 0] ** 2 - x[:, 1] + rng.normal(0, 0.2, 300)
    model = fit(WeightedSample(x, y, rng.uniform(0.5, 1.5, 300)), 3)
    assert model.diagnostics["conditionEstimate"] < 1e8
    assert finite_difference_check(model).max_rel_error <= 1e-6


def test_constant_model_variance_is_mean_variance(rng):
    y = rng.normal(size=60)
    s = WeightedSample(rng.uniform(-1, 1, 60), y, None)
    model = fit(s, 0)
    p = predict(model, np.linspace(-3, 3, 11))
    np.testing.assert_allclose(p.variance, np.var(y, ddof=1) / 60, rtol=1e-12)


def test_linear_band_agrees_with_bootstrap():
    rng = np.random.default_rng(2024)
    x = rng.uniform(-1, 1, 2000)
    s = WeightedSample(x, 0.5 - 1.5 * x + rng.normal(0, 0.5, 2000), None)
    model = fit(s, 1)
    med = np.median(x)
    boot = bootstrap_fit(s, model.basis, 1000, seed=3, points=[med])
    assert predict(model, med).sigma[0] == pytest.approx(boot.band_at_points[0], rel=0.15)


def test_variance_nonnegative_everywhere(rng):
    x = rng.uniform(-1, 1, (200, 2))
    model = fit(WeightedSample(x, rng.normal(size=200), rng.uniform(-0.2, 1, 200)), 3)
    p = predict(model, rng.uniform(-3, 3, (10_000, 2)))
    assert np.all(p.variance >= 0)


def test_zero_noise_gives_zero_coefficient_covariance(rng):
    # h and g fluctuations cancel when every residual is zero
    x = rng.uniform(-1, 1, 500)
    model = fit(WeightedSample(x, 1 - x + 3 * x**3, None), 3)
    assert abs(model.loss) < 1e-12
    dh, _ = coefficient_derivatives(model)
    k = len(model.coeffs)
    h_only = dh @ model.gram.pcov[:k, :k] @ dh.T  # what the h fluctuations alone would give
    assert np.max(np.abs(model.coeff_cov)) < 1e-10 * np.max(np.abs(h_only))


def test_translation_invariance(rng):
    x = rng.uniform(-1, 1, 300)
    y = np.exp(x) + rng.normal(0, 0.1, 300)
    a = fit(WeightedSample(x, y, None), 4)
    b = fit(WeightedSample(x + 123.4, y, None), 4)
    probe = np.linspace(-1, 1, 50)
    np.testing.assert_allclose(predict(a, probe).value, predict(b, probe + 123.4).value, atol=1e-9)
    np.testing.assert_allclose(predict(a, probe).sigma, predict(b, probe + 123.4).sigma, rtol=1e-6)


def test_loss_is_minimal(rng):
    x = rng.uniform(-1, 1, (400, 2))
    model = fit(WeightedSample(x, np.sin(x[:, 0]) * x[:, 1] + rng.normal(0, 0.1, 400), None), 3)
    for _ in range(200):
        delta = rng.normal(size=model.coeffs.shape)
        delta *= 1e-3 / np.linalg.norm(delta)
        assert loss_at(model, model.coeffs + delta) >= model.loss - 1e-12


def test_extrapolation_is_flagged():
    model = fit(WeightedSample(np.linspace(0, 1, 20), np.linspace(0, 1, 20), None), 1)
    p = predict(model, [-0.5, 0.5, 1.5])
    np.testing.assert_array_equal(p.extrapolated, [True, False, True])


def test_physical_coefficients_round_trip(rng):
    x = rng.uniform(2, 5, (100, 2))
    y = 1 + x[:, 0] - 2 * x[:, 0] * x[:, 1] + 0.5 * x[:, 1] ** 2
    model = fit(WeightedSample(x, y, None), 2)
    np.testing.assert_allclose(physical_coefficients(model), [1, 1, 0, 0, -2, 0.5], atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    dim=st.integers(1, 3),
    degree=st.integers(0, 3),
    shift=st.floats(-50, 50),
    stretch=st.floats(0.1, 10),
)
def test_fit_ignores_row_order_and_input_units(seed, dim, degree, shift, stretch):
    r = np.random.default_rng(seed)
    n = 40 + 10 * dim
    x = r.uniform(-1, 1, (n, dim))
    y = np.sin(x.sum(axis=1)) + r.normal(0, 0.1, n)
    w = r.uniform(0.5, 2, n)
    base = fit(WeightedSample(x, y, w), degree)
    perm = r.permutation(n)
    shuffled = fit(WeightedSample(x[perm], y[perm], w[perm]), degree)
    moved = fit(WeightedSample(x * stretch + shift, y, w), degree)
    probe = r.uniform(-1, 1, (7, dim))
    ref = predict(base, probe)
    for other, pts in ((shuffled, probe), (moved, probe * stretch + shift)):
        p = predict(other, pts)
        np.testing.assert_allclose(p.value, ref.value, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(p.variance, ref.variance, rtol=1e-6, atol=1e-16)
