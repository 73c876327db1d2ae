import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from bundle_uq import bayes, models, nn
from bundle_uq.bayes import bbb, data, nlm, nuts
from bundle_uq.bayes.posterior import enforced_draws, mean_networks


def brute_force_blr(phi, y, sigma, sigma_prior):
    """Posterior of w via Gaussian conditioning in function space (N x N solve)."""
    d = np.diag(np.broadcast_to(sigma, y.shape) ** 2)
    k = sigma_prior ** 2 * phi @ phi.T + d
    a = np.linalg.solve(k, phi)
    mu = sigma_prior ** 2 * a.T @ y
    cov = sigma_prior ** 2 * np.eye(phi.shape[1]) - sigma_prior ** 4 * phi.T @ a
    return mu, cov


@pytest.mark.parametrize("n, f", [(30, 5), (80, 20), (60, 50)])
def test_nlm_matches_brute_force(n, f, rng):
    phi = rng.standard_normal((n, f))
    y = phi @ rng.standard_normal(f) + 0.1 * rng.standard_normal(n)
    sigma = rng.uniform(0.05, 0.3, n)
    mu, cov = nlm.nlm_fit_arrays(phi, y, sigma, 1.5)
    mu_b, cov_b = brute_force_blr(phi, y, sigma, 1.5)
    np.testing.assert_allclose(mu, mu_b, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(cov, cov_b, rtol=1e-8, atol=1e-10)


def test_nlm_prior_only_limit():
    mu, cov = nlm.nlm_fit_arrays(np.zeros((3, 2)), np.ones(3), 1.0, 2.0)
    np.testing.assert_allclose(mu, 0.0)
    np.testing.assert_allclose(cov, 4.0 * np.eye(2))


def test_nlm_design_reconstructs_network(tiny_cpl, rng):
    spec = tiny_cpl.spec
    x = rng.uniform(0, 3, 6)
    p = spec.full_params(rng.uniform(*spec.bundle_box().T, (6, 2)), Om0=0.3)
    phi, off = nlm.design(spec, tiny_cpl.params, x, p)
    w = np.append(tiny_cpl.params.weights[-1][0], tiny_cpl.params.biases[-1][0])
    np.testing.assert_allclose(off[:, 0] + phi[0] @ w, tiny_cpl.predict(x, p)[:, 0], rtol=1e-13)


def test_nlm_fit_and_predict(tiny_lcdm, rng):
    like = data.Homoscedastic(0.05)
    ds = data.build_dataset(tiny_lcdm, like, 12, rng)
    post = nlm.nlm_fit(tiny_lcdm.spec, tiny_lcdm.params, ds, 1.0, like)
    mean, std = nlm.nlm_predict(post, ds.x[:5], ds.params[:5])
    _, std_like = nlm.nlm_predict(post, ds.x[:5], ds.params[:5], np.full((5, 1), 0.05))
    np.testing.assert_allclose(std_like, np.sqrt(std ** 2 + 0.05 ** 2))
    # well-determined fit reproduces the targets it was given
    np.testing.assert_allclose(mean, ds.targets[:5], atol=0.05)
    back = nlm.NLMPosterior.from_dict(post.to_dict(), tiny_lcdm.spec)
    np.testing.assert_array_equal(back.cov, post.cov)
    with pytest.raises(ValueError):
        nlm.nlm_fit(tiny_lcdm.spec, tiny_lcdm.params, ds, 1.0, data.ResidualBaseline(0.1))


def test_sigma_floor_and_likelihood_kinds(tiny_lcdm):
    np.testing.assert_allclose(data.sigma_floor(np.array([0.0, 2.0])), [1e-12, 2e-6])
    with pytest.raises(ValueError):
        data.Homoscedastic(0.0)
    with pytest.raises(ValueError):
        data.make_likelihood("laplace", tiny_lcdm, 0.1)
    assert np.all(data.ResidualBaseline(0.1).sigma_like(None, None, np.ones((3, 1))) == 0)


def test_error_bound_likelihood_cache_and_floor(tiny_lcdm):
    like = data.ErrorBoundLikelihood(tiny_lcdm, 10, 5, max_cache=2)
    x = np.array([0.0, 1.0, 2.0])
    p = np.array([[0.3], [0.3], [0.2]])
    b = like.bound(x, p)
    assert b[0] == 0.0 and np.all(b[1:] > 0)
    assert len(like.tables) == 2
    like.bound(x[:1], [[0.25]])
    assert len(like.tables) == 1  # cache was emptied when full
    sig = like.sigma_like(x, p, np.ones((3, 1)))
    assert sig[0, 0] == pytest.approx(1e-6)
    with pytest.raises(ValueError):
        data.ErrorBoundLikelihood(type(tiny_lcdm)(tiny_lcdm.params, models.get_model("hs"),
                                                  tiny_lcdm.train_config))


def _fd(fn, theta, idx, h=1e-6):
    out = []
    for i in idx:
        e = np.zeros_like(theta)
        e[i] = h
        out.append((fn(theta + e)[0] - fn(theta - e)[0]) / (2 * h))
    return np.array(out)


def test_gaussian_loglik_fn_value_and_gradient(tiny_cpl, rng):
    like = data.Homoscedastic(0.02)
    ds = data.build_dataset(tiny_cpl, like, 4, rng, Om0=0.3)
    spec = tiny_cpl.spec
    fn = data.gaussian_loglik_fn(spec, tiny_cpl.params, ds)
    theta = tiny_cpl.params.flatten() + 0.01 * rng.standard_normal(tiny_cpl.params.n_params)
    ll, g = fn(theta)
    pred = tiny_cpl.params.unflatten(theta)
    from bundle_uq import training

    u, _ = training.evaluate(spec, pred, ds.x, ds.params)
    assert ll == pytest.approx(data.gaussian_loglik(ds, u), rel=1e-12)
    want = stats.norm.logpdf(ds.targets, u, ds.sigma_like).sum()
    assert ll == pytest.approx(want, rel=1e-12)
    idx = rng.choice(theta.size, 10, replace=False)
    np.testing.assert_allclose(g[idx], _fd(fn, theta, idx), rtol=1e-5, atol=1e-6)


def test_residual_loglik_fn_value_and_gradient(tiny_lcdm, rng):
    spec = tiny_lcdm.spec
    x = rng.uniform(0, 3, 20)
    p = rng.uniform(0.1, 0.4, (20, 1))
    fn = data.residual_loglik_fn(spec, tiny_lcdm.params, x, p, 0.3)
    theta = tiny_lcdm.params.flatten()
    ll, g = fn(theta)
    assert ll == pytest.approx(data.residual_loglik(spec, tiny_lcdm.params, x, p, 0.3), rel=1e-12)
    idx = rng.choice(theta.size, 8, replace=False)
    np.testing.assert_allclose(g[idx], _fd(fn, theta, idx), rtol=1e-5, atol=1e-6)


def test_log_prior():
    theta = np.array([0.5, -1.0])
    lp, g = data.log_prior(theta, 2.0)
    assert lp == pytest.approx(stats.norm.logpdf(theta, 0, 2.0).sum())
    np.testing.assert_allclose(g, -theta / 4.0)


# -- variational ----------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.floats(1e-8, 50.0))
def test_softplus_inverse(s):
    assert float(bbb.softplus(bbb.softplus_inv(s))) == pytest.approx(s, rel=1e-9)


def test_gaussian_kl_against_quadrature():
    mu, std, sp = 0.4, 0.3, 1.5
    q, p = stats.norm(mu, std), stats.norm(0, sp)
    want = integrate.quad(lambda t: q.pdf(t) * (q.logpdf(t) - p.logpdf(t)), -10, 10)[0]
    assert bbb.gaussian_kl(np.array([mu]), np.array([std]), sp) == pytest.approx(want, rel=1e-8)


def test_bbb_recovers_conjugate_gaussian(rng):
    # likelihood N(theta | a, s^2) per coordinate with prior N(0, sp^2)
    a = np.array([1.0, -0.5, 2.0])
    s, sp = 0.2, 1.0

    def loglik(theta):
        return -0.5 * float(np.sum((theta - a) ** 2)) / s ** 2, -(theta - a) / s ** 2

    mu, rho, hist = bbb.bbb_fit(loglik, np.zeros(3), sp, 6000, 1e-2, rng, mc_samples=4,
                                init_std=0.05)
    post_var = 1.0 / (1 / s ** 2 + 1 / sp ** 2)
    np.testing.assert_allclose(mu, post_var * a / s ** 2, atol=0.01)
    np.testing.assert_allclose(bbb.softplus(rho), np.sqrt(post_var), rtol=0.1)
    assert hist[-1][1] > hist[0][1]


def test_bbb_posterior_roundtrip_and_sampling(tiny_lcdm, rng):
    n = tiny_lcdm.params.n_params
    post = bbb.BBBPosterior(tiny_lcdm.params, np.zeros(n), np.full(n, bbb.softplus_inv(0.5)), 1.0)
    draws = post.sample(4000, rng)
    assert abs(draws.std() - 0.5) < 0.01
    back = bbb.BBBPosterior.from_dict(post.to_dict())
    np.testing.assert_array_equal(back.rho, post.rho)


# -- NUTS -------------------------------------------------------------------------

def _gauss(prec):
    def fn(theta):
        g = -prec @ theta
        return 0.5 * float(theta @ g), g

    return fn


def test_leapfrog_reversible_and_symplectic(rng):
    fn = _gauss(np.diag([1.0, 4.0]))
    th, r = rng.standard_normal(2), rng.standard_normal(2)
    lp, g = fn(th)
    t1, r1, g1, lp1 = nuts.leapfrog(fn, th, r, g, 0.1)
    t2, r2, _, _ = nuts.leapfrog(fn, t1, -r1, g1, 0.1)
    np.testing.assert_allclose(t2, th, atol=1e-14)
    np.testing.assert_allclose(-r2, r, atol=1e-14)
    h0 = -lp + 0.5 * r @ r
    h1 = -lp1 + 0.5 * r1 @ r1
    assert abs(h1 - h0) < 0.05


def test_dual_averaging_converges_to_target(rng):
    da = nuts.DualAveraging(1.0, target=0.8)
    eps = 1.0
    for _ in range(2000):
        # acceptance falls smoothly with step size
        eps = da.update(float(np.exp(-eps)))
    assert np.exp(-da.final) == pytest.approx(0.8, abs=0.03)


def test_nuts_correlated_gaussian(rng):
    cov = np.array([[1.0, 0.9], [0.9, 1.0]])
    res = nuts.nuts_sample(_gauss(np.linalg.inv(cov)), np.zeros(2), 2000, 500, rng)
    assert np.corrcoef(res.samples.T)[0, 1] == pytest.approx(0.9, abs=0.05)
    assert res.divergences == 0
    assert 0.6 < res.mean_accept <= 1.0


def test_nuts_warns_on_divergences(rng):
    def cliff(theta):
        return -1e6 * float(theta @ theta) ** 2, -4e6 * float(theta @ theta) * theta

    with pytest.warns(RuntimeWarning, match="diverged"):
        nuts.nuts_sample(cliff, np.ones(2), 20, 0, rng, step_size=1.0, max_depth=3)


# -- predictive -------------------------------------------------------------------

def test_predictive_variance_formula(tiny_lcdm, rng):
    spec = tiny_lcdm.spec
    theta0 = tiny_lcdm.params.flatten()
    samples = theta0 + 0.01 * rng.standard_normal((40, theta0.size))
    post = bayes.NUTSPosterior(tiny_lcdm.params, samples, 1.0)
    like = data.Homoscedastic(0.07)
    x = np.linspace(0, 3, 9)
    p = np.full((9, 1), 0.3)
    pred = bayes.predictive(post, spec, like, x, p, m=40, keep_draws=True)
    draws = np.stack([tiny_lcdm.predict(x, p) * 0 + models.enforce_ic(
        spec, x, nn.forward(tiny_lcdm.params.unflatten(t), spec.network_inputs(x, p)), p)
        for t in samples])
    np.testing.assert_allclose(pred.draws, draws, rtol=1e-12)
    np.testing.assert_allclose(pred.mean, draws.mean(0), rtol=1e-12)
    np.testing.assert_allclose(pred.std ** 2, draws.var(0) + 0.07 ** 2, rtol=1e-12)
    # residual baseline: posterior spread only
    pred0 = bayes.predictive(post, spec, data.ResidualBaseline(0.1), x, p, m=40)
    np.testing.assert_allclose(pred0.std ** 2, draws.var(0), rtol=1e-12)
    with pytest.raises(ValueError):
        bayes.predictive(post, spec, like, x, p, m=1)


def test_enforced_draws_exact_at_ic(tiny_lcdm, rng):
    theta = tiny_lcdm.params.flatten() + rng.standard_normal((3, tiny_lcdm.params.n_params))
    out = enforced_draws(tiny_lcdm.spec, tiny_lcdm.params, theta, [0.0, 0.0], [[0.2], [0.35]])
    np.testing.assert_array_equal(out[:, :, 0], [[0.2, 0.35]] * 3)


def test_mean_networks(tiny_lcdm, rng):
    like = data.Homoscedastic(0.05)
    ds = data.build_dataset(tiny_lcdm, like, 8, rng)
    post = nlm.nlm_fit(tiny_lcdm.spec, tiny_lcdm.params, ds, 1.0)
    (net,) = mean_networks(post)
    x, p = ds.x[:4], ds.params[:4]
    mean, _ = nlm.nlm_predict(post, x, p)
    from bundle_uq import training

    np.testing.assert_allclose(training.evaluate(tiny_lcdm.spec, net, x, p)[0], mean, rtol=1e-12)
    bpost = bbb.BBBPosterior(tiny_lcdm.params, tiny_lcdm.params.flatten(),
                             np.full(tiny_lcdm.params.n_params, -20.0), 1.0)
    with pytest.raises(ValueError):
        mean_networks(bpost)
    assert len(mean_networks(bpost, 3, rng)) == 3


def test_posterior_dict_dispatch(tiny_lcdm):
    post = bayes.NUTSPosterior(tiny_lcdm.params, np.zeros((3, tiny_lcdm.params.n_params)), 1.0)
    back = bayes.posterior_from_dict(post.to_dict(), tiny_lcdm.spec)
    assert back.kind == "hmc" and back.samples.shape == post.samples.shape
    with pytest.raises(ValueError):
        bayes.posterior_from_dict({"kind": "laplace"}, tiny_lcdm.spec)
    with pytest.raises(ValueError):
        bayes.NUTSPosterior(tiny_lcdm.params, np.full((1, tiny_lcdm.params.n_params), np.nan), 1.0)


def test_bayes_config_validation():
    with pytest.raises(ValueError):
        bayes.BayesConfig(method="mcmc")
    with pytest.raises(ValueError):
        bayes.BayesConfig(method="nlm", likelihood="residual")
    assert bayes.BayesConfig().to_dict()["method"] == "hmc"


@pytest.mark.parametrize("method, likelihood", [("nlm", "eb"), ("bbb", "homo"),
                                                ("hmc", "residual"), ("hmc", "eb")])
def test_fit_posterior_smoke(tiny_lcdm, method, likelihood, rng):
    cfg = bayes.BayesConfig(method=method, likelihood=likelihood, samples_per_dim=6,
                            iterations=30, n_samples=15, n_tune=15, max_depth=4,
                            n_partitions=10, points_per_partition=5)
    post, ds, like = bayes.fit_posterior(tiny_lcdm, cfg, rng)
    assert post.kind == method and len(ds) == 36
    pred = bayes.predictive(post, tiny_lcdm.spec, like, ds.x, ds.params, m=10, rng=rng)
    assert np.all(np.isfinite(pred.mean)) and np.all(pred.std >= 0)
