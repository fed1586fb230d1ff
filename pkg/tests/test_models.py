"""Benchmark models: transforms, g-and-k, Lorenz 96, linear-Gaussian, registry."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from enki.ensembles import GaussPair
from enki.models import available_models, build_model
from enki.models.gk import GkModel, GkParams, _order_stat_indices, gk_quantile, gk_simulate_summaries
from enki.models.lingauss import (
    LinearGaussianModel,
    linear_gaussian_posterior,
    linear_gaussian_tempered,
    tempered_recursion_step,
)
from enki.models.lorenz96 import L96Config, L96Model, l96_drift, l96_simulate
from enki.models.transforms import inverse_transform, transform_to_unconstrained
from enki.rng import ParticleStreams, as_seed_sequence, substream

from _helpers import random_lingauss, random_spd

# 50-digit reference values (probit quantile at u = 0.77, and the g-and-k
# quantile at the conventional truth), frozen from an mpmath evaluation.
NDTRI_077 = 0.7388468491852136293212
GK_TRUTH_U090 = 6.511290090395887057146
GK_TRUTH_U025 = 2.569082407113303879111


# ---------------------------------------------------------------- transforms

def test_transform_round_trip_fixed_points():
    x = np.array([0.1, 2.5, 5.0, 7.7, 9.9])
    z = transform_to_unconstrained(x)
    assert np.allclose(inverse_transform(z), x, atol=1e-12)
    assert z[2] == 0.0  # midpoint of (0, 10) maps to the origin
    assert abs(z[3] - NDTRI_077) < 1e-9


def test_transform_rejects_boundary():
    for bad in (0.0, 10.0, -1.0, 11.0):
        with pytest.raises(ValueError):
            transform_to_unconstrained(np.array([bad]))


def test_inverse_transform_range():
    z = np.linspace(-6, 6, 101)
    x = inverse_transform(z)
    assert np.all(x > 0.0) and np.all(x < 10.0)
    assert np.all(np.diff(x) > 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5.5, 5.5))
def test_transform_round_trip_property(z):
    # the probit pair is float-exact to ~1e-8 inside +/- 5.5; beyond that the
    # bounded side saturates and precision decays (covered by the range test)
    x = inverse_transform(np.array([z]))
    back = transform_to_unconstrained(x)
    assert abs(back[0] - z) < 1e-7


# ---------------------------------------------------------------------- g-and-k

def test_gk_quantile_median_is_location():
    params = GkParams(A=3.0, B=1.0, g=2.0, k=0.5)
    assert gk_quantile(0.5, params) == pytest.approx(3.0, abs=1e-14)


def test_gk_quantile_frozen_reference_values():
    params = GkParams(A=3.0, B=1.0, g=2.0, k=0.5)
    assert abs(gk_quantile(0.9, params) - GK_TRUTH_U090) < 1e-12
    assert abs(gk_quantile(0.25, params) - GK_TRUTH_U025) < 1e-12


def test_gk_quantile_gaussian_reduction():
    # g = k = 0 collapses the family to N(A, B^2)
    from scipy.special import ndtri

    params = GkParams(A=2.0, B=1.5, g=0.0, k=0.0)
    u = np.array([0.1, 0.3, 0.77, 0.95])
    assert np.allclose(gk_quantile(u, params), 2.0 + 1.5 * ndtri(u), atol=1e-12)


def test_gk_quantile_degenerate_scale():
    params = GkParams(A=4.0, B=0.0, g=1.0, k=1.0)
    assert np.allclose(gk_quantile(np.array([0.01, 0.5, 0.99]), params), 4.0)


def test_gk_quantile_rejects_closed_interval():
    params = GkParams(3.0, 1.0, 2.0, 0.5)
    for bad in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(ValueError):
            gk_quantile(bad, params)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.5, 9.5),
    st.floats(0.1, 9.5),
    st.floats(0.1, 9.5),
    st.floats(0.05, 9.5),
    st.floats(0.001, 0.998),
    st.floats(1e-4, 1e-3),
)
def test_gk_quantile_monotone(a, b, g, k, u, du):
    # positive scale and kurtosis keep the quantile strictly increasing
    params = GkParams(a, b, g, k)
    assert gk_quantile(u, params) < gk_quantile(u + du, params)


def test_order_stat_indices_layout():
    idx = _order_stat_indices(1000, 100)
    assert idx[0] == 9 and idx[-1] == 999
    assert np.all(np.diff(idx) == 10)
    assert _order_stat_indices(6, 3).tolist() == [1, 3, 5]


def test_gk_summaries_sorted_and_deterministic():
    params = GkParams(3.0, 1.0, 2.0, 0.5)
    a = gk_simulate_summaries(params, rng=np.random.default_rng(0))
    b = gk_simulate_summaries(params, rng=np.random.default_rng(0))
    assert a.shape == (100,)
    assert np.array_equal(a, b)
    assert np.all(np.diff(a) >= 0)


def test_gk_summary_median_tracks_location():
    # the middle order statistic estimates the median, which equals A
    params = GkParams(3.0, 1.0, 2.0, 0.5)
    mids = [
        gk_simulate_summaries(params, rng=np.random.default_rng(s))[49]
        for s in range(20)
    ]
    assert abs(np.median(mids) - 3.0) < 0.15


def test_gk_model_batch_matches_serial_loop():
    model = GkModel()
    root = as_seed_sequence(4)
    params = model.prior_sample(7, substream(root, 0))
    streams = ParticleStreams(root, 1, 0)
    batch = model.simulate_batch(params, streams)
    serial = np.stack(
        [model.simulate(params[i], streams.particle(i)) for i in range(7)]
    )
    assert np.array_equal(batch, serial)


def test_gk_model_prior_and_truth():
    model = GkModel()
    draws = model.prior_sample(50_000, np.random.default_rng(0))
    assert abs(draws.mean()) < 0.02 and abs(draws.std() - 1.0) < 0.02
    natural = model.constrain(draws)
    assert np.all((natural > 0) & (natural < 10))
    assert np.allclose(
        model.constrain(model.sample_truth(np.random.default_rng(1))),
        [3.0, 1.0, 2.0, 0.5],
        atol=1e-12,
    )
    # the fixed truth ignores the rng argument entirely
    assert np.array_equal(
        model.sample_truth(np.random.default_rng(2)),
        model.sample_truth(np.random.default_rng(3)),
    )


def test_gk_model_validation():
    with pytest.raises(ValueError):
        GkModel(n_raw=10, n_stats=20)


# ---------------------------------------------------------------------- Lorenz 96

def test_l96_drift_hand_oracle():
    # x[m-1](x[m+1] - x[m-2]) - x[m] at x = (1, 2, 3, 4):
    # (4(2-3)-1, 1(3-4)-2, 2(4-1)-3, 3(1-2)-4) = (-5, -3, 3, -7)
    out = l96_drift(np.array([1.0, 2.0, 3.0, 4.0]), forcing=0.0)
    assert np.allclose(out, [-5.0, -3.0, 3.0, -7.0])


def test_l96_drift_fixed_point():
    x = np.full(6, 2.5)
    assert np.allclose(l96_drift(x, forcing=2.5), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-10, 10), st.integers(4, 12))
def test_l96_drift_cyclic_equivariance(seed, shift, d):
    x = np.random.default_rng(seed).normal(size=d)
    rolled = l96_drift(np.roll(x, shift), 8.0)
    assert np.allclose(rolled, np.roll(l96_drift(x, 8.0), shift))


def test_l96_drift_batched_rows():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 8))
    batch = l96_drift(x, 8.0)
    for i in range(5):
        assert np.allclose(batch[i], l96_drift(x[i], 8.0))


def test_l96_config_layout_and_validation():
    cfg = L96Config()
    assert cfg.d_y == 100  # 20 observed dims x 5 times
    assert cfg.observed_dims == tuple(range(0, 40, 2))
    assert cfg.obs_steps == (1000, 2000, 3000, 4000, 5000)
    assert cfg.n_steps == 5000
    with pytest.raises(ValueError):
        L96Config(obs_times=(0.00151,), dt=0.001)  # off the step grid
    with pytest.raises(ValueError):
        L96Config(obs_times=(2.0, 1.0))
    with pytest.raises(ValueError):
        L96Config(d_x=3)
    with pytest.raises(ValueError):
        L96Config(observed_dims=(0, 0))


def test_l96_simulate_deterministic_given_stream():
    cfg = L96Config(d_x=6, obs_times=(0.05, 0.1), dt=0.01)
    x0 = np.full(6, 8.0)
    a = l96_simulate(x0, cfg, np.random.default_rng(3))
    b = l96_simulate(x0, cfg, np.random.default_rng(3))
    assert a.shape == (6,)  # 3 observed dims x 2 times, time-major
    assert np.array_equal(a, b)


def test_l96_simulate_noiseless_matches_manual_euler():
    cfg = L96Config(
        d_x=5, obs_times=(0.02, 0.03), dt=0.01, obs_noise_var=0.0, diffusion=0.0,
        observed_dims=(0, 2),
    )
    x0 = np.array([1.0, 0.5, -0.5, 2.0, 8.0])
    out = l96_simulate(x0, cfg, np.random.default_rng(0))
    x = x0.copy()
    expected = []
    for step in range(1, 4):
        x = x + l96_drift(x, cfg.forcing) * cfg.dt
        if step in (2, 3):
            expected.extend(x[[0, 2]])
    assert np.allclose(out, expected, atol=1e-14)


def test_l96_simulate_blowup_names_time():
    # a uniform state would decay (the advection differences cancel), so use
    # an uneven huge start whose quadratic term overflows within a few steps
    cfg = L96Config(d_x=4, obs_times=(1.0,), dt=0.01, diffusion=0.0)
    with pytest.raises(FloatingPointError, match="t="):
        with np.errstate(all="ignore"):
            l96_simulate(np.array([1e80, 1e80, 0.0, 0.0]), cfg, np.random.default_rng(0))


def test_l96_model_batch_matches_serial_loop():
    # same substreams, chunked draws: vectorised path must be bit-identical
    model = L96Model(L96Config(d_x=6, obs_times=(0.5, 1.0), dt=0.01))
    root = as_seed_sequence(8)
    params = model.prior_sample(5, substream(root, 0))
    streams = ParticleStreams(root, 1, 3)
    batch = model.simulate_batch(params, streams)
    serial = np.stack(
        [model.simulate(params[i], streams.particle(i)) for i in range(5)]
    )
    assert np.array_equal(batch, serial)


def test_l96_model_prior_moments():
    model = L96Model(L96Config(d_x=8, obs_times=(0.1,), dt=0.01), prior_var=5.0)
    draws = model.prior_sample(100_000, np.random.default_rng(0))
    assert abs(draws.mean() - 8.0) < 0.02
    assert abs(draws.var() - 5.0) < 0.05


# ------------------------------------------------------------- linear-Gaussian

def test_posterior_scalar_hand_oracle():
    # m=0, Q=1, H=1, R=1, y=1: posterior mean 1/2, variance 1/2
    post = linear_gaussian_posterior(GaussPair([0.0], [[1.0]]), [[1.0]], [[1.0]], [1.0])
    assert post.mean == pytest.approx(0.5)
    assert post.cov[0, 0] == pytest.approx(0.5)


def test_posterior_zero_obs_matrix_returns_prior():
    prior = GaussPair(np.array([1.0, -1.0]), np.array([[2.0, 0.5], [0.5, 1.0]]))
    post = linear_gaussian_posterior(prior, np.zeros((2, 2)), np.eye(2), np.zeros(2))
    assert np.allclose(post.mean, prior.mean)
    assert np.allclose(post.cov, prior.cov)


def test_posterior_huge_noise_approaches_prior():
    rng = np.random.default_rng(0)
    prior = GaussPair(rng.normal(size=3), random_spd(rng, 3))
    h = rng.normal(size=(2, 3))
    post = linear_gaussian_posterior(prior, h, 1e12 * np.eye(2), rng.normal(size=2))
    assert np.allclose(post.mean, prior.mean, atol=1e-6)
    assert np.allclose(post.cov, prior.cov, atol=1e-6)


def test_tempered_limits():
    rng = np.random.default_rng(2)
    prior = GaussPair(rng.normal(size=2), random_spd(rng, 2))
    h = rng.normal(size=(2, 2))
    r = random_spd(rng, 2)
    y = rng.normal(size=2)
    at_zero = linear_gaussian_tempered(prior, h, r, y, 0.0)
    assert np.allclose(at_zero.mean, prior.mean)
    assert np.allclose(at_zero.cov, prior.cov)
    at_one = linear_gaussian_tempered(prior, h, r, y, 1.0)
    post = linear_gaussian_posterior(prior, h, r, y)
    assert np.allclose(at_one.mean, post.mean)
    assert np.allclose(at_one.cov, post.cov)
    with pytest.raises(ValueError):
        linear_gaussian_tempered(prior, h, r, y, -0.1)


def test_tempered_recursion_matches_direct_on_fixed_partition():
    rng = np.random.default_rng(4)
    prior = GaussPair(rng.normal(size=3), random_spd(rng, 3))
    h = rng.normal(size=(2, 3))
    r = random_spd(rng, 2)
    y = rng.normal(size=2)
    cur = GaussPair(prior.mean.copy(), prior.cov.copy())
    prev = 0.0
    for lam in (0.125, 0.5, 0.625, 1.0):
        cur = tempered_recursion_step(cur, h, r, y, lam - prev)
        direct = linear_gaussian_tempered(prior, h, r, y, lam)
        assert np.allclose(cur.mean, direct.mean, atol=1e-10)
        assert np.allclose(cur.cov, direct.cov, atol=1e-10)
        prev = lam
    with pytest.raises(ValueError):
        tempered_recursion_step(cur, h, r, y, 0.0)


def test_lingauss_model_simulate_and_logpdf():
    rng = np.random.default_rng(6)
    model = random_lingauss(rng, 3, 2)
    # deterministic forward map plus noise with the declared covariance
    zero_noise = LinearGaussianModel(
        model.prior, model.obs_matrix, np.zeros((2, 2))
    )
    x = rng.normal(size=3)
    assert np.allclose(zero_noise.simulate(x, np.random.default_rng(0)),
                       model.obs_matrix @ x)
    sims = np.stack(
        [model.simulate(x, np.random.default_rng(s)) for s in range(40_000)]
    )
    assert np.allclose(np.cov(sims.T, ddof=1), model.noise_cov, atol=0.05)
    # log density against scipy's reference implementation
    from scipy.stats import multivariate_normal

    pts = rng.normal(size=(5, 3))
    ref = multivariate_normal(model.prior.mean, model.prior.cov).logpdf(pts)
    assert np.allclose(model.prior_logpdf(pts), ref)


# ---------------------------------------------------------------------- registry

def test_registry_lists_and_builds():
    assert available_models() == ["gk", "l96", "lingauss"]
    gk = build_model("gk")
    assert gk.d_x == 4 and gk.d_y == 100
    l96 = build_model("l96", {"d_x": 8, "obs_times": [1.0, 2.0]})
    assert l96.d_x == 8 and l96.d_y == 8
    lg = build_model("lingauss")
    assert lg.d_x == 3 and lg.d_y == 3


def test_registry_rejects_unknown():
    with pytest.raises(ValueError, match="unknown model"):
        build_model("nope")
    with pytest.raises(ValueError, match="unknown override"):
        build_model("gk", {"bogus": 1})
    with pytest.raises(ValueError, match="unknown override"):
        build_model("l96", {"n_raw": 10})
