import numpy as np
import pytest
from scipy import stats

from bundle_uq import bayes, ensemble, inverse, models


def _gauss_logp(cov):
    prec = np.linalg.inv(cov)
    return lambda th: -0.5 * float(th @ prec @ th)


def test_stretch_distribution(rng):
    a = 2.0
    z = ensemble.draw_stretch(rng, 50_000, a)
    assert z.min() >= 1 / a and z.max() <= a
    # CDF of g(z) ~ 1/sqrt(z) on [1/a, a]
    cdf = lambda t: (np.sqrt(t) - np.sqrt(1 / a)) / (np.sqrt(a) - np.sqrt(1 / a))  # noqa: E731
    assert stats.kstest(z, cdf).pvalue > 1e-3


def test_ensemble_correlated_gaussian(rng):
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    init = rng.standard_normal((16, 2))
    chain = ensemble.stretch_sample(_gauss_logp(cov), init, 3000, rng, burn_in=500)
    flat = chain.flat()
    want = 0.6 / np.sqrt(2.0)
    assert np.corrcoef(flat.T)[0, 1] == pytest.approx(want, abs=0.05)
    np.testing.assert_allclose(flat.var(axis=0), [1.0, 2.0], rtol=0.15)
    assert 0.2 < chain.acceptance_rate < 0.9


def test_ensemble_respects_support(rng):
    def logp(th):
        return 0.0 if np.all((th > 0) & (th < 1)) else -np.inf

    chain = ensemble.stretch_sample(logp, rng.uniform(size=(8, 2)), 400, rng)
    assert np.all((chain.samples > 0) & (chain.samples < 1))
    np.testing.assert_allclose(chain.flat(100).mean(0), 0.5, atol=0.05)


def test_ensemble_validation(rng):
    with pytest.raises(ValueError):
        ensemble.stretch_sample(lambda t: 0.0, np.zeros((3, 2)), 1, rng)
    with pytest.raises(ValueError):
        ensemble.stretch_sample(lambda t: -np.inf, np.zeros((4, 2)), 1, rng)


def test_summarize(rng):
    s = rng.normal(3.0, 0.5, (10, 100, 1))
    chain = ensemble.ChainResult(s, np.zeros((10, 100)), 0.5, 0, ("a",))
    out = ensemble.summarize(chain, 0.2)
    assert out["a"]["mean"] == pytest.approx(s[:, 20:].mean())
    assert out["a"]["std"] == pytest.approx(s[:, 20:].std())
    with pytest.raises(ValueError):
        ensemble.summarize(chain, 1.0)


def test_cc_data():
    obs = inverse.load_cc()
    assert len(obs) == 30
    assert obs.z.min() == pytest.approx(0.07) and obs.z.max() == pytest.approx(1.965)
    assert np.all(obs.sigma > 0) and len(set(obs.source)) == 6


def test_analytic_loglik_matches_direct_sum():
    obs = inverse.load_cc()
    task = inverse.InferenceTask(models.get_model("lcdm"),
                                 inverse.AnalyticSource(models.get_model("lcdm")))
    om, h0 = 0.3, 68.0
    H = h0 * np.sqrt(om * (1 + obs.z) ** 3 + 1 - om)
    want = stats.norm.logpdf(obs.mu, H, obs.sigma).sum()
    assert inverse.log_likelihood(task, [om, h0], obs) == pytest.approx(want, rel=1e-12)
    assert inverse.log_likelihood(task, [0.9, h0], obs) == -np.inf
    assert task.param_names == ("Om0", "H0")


def test_cpl_loglik_reduces_to_lcdm():
    obs = inverse.load_cc()
    spec = models.get_model("cpl")
    cpl = inverse.InferenceTask(spec, inverse.AnalyticSource(spec))
    lcdm = inverse.InferenceTask(models.get_model("lcdm"),
                                 inverse.AnalyticSource(models.get_model("lcdm")))
    a = inverse.log_likelihood(cpl, [-1.0, 0.0, 0.3, 70.0], obs)
    b = inverse.log_likelihood(lcdm, [0.3, 70.0], obs)
    assert a == pytest.approx(b, rel=1e-12)


class _TwoDraws:
    """One valid and one unphysical draw (negative radicand)."""

    kind = "fake"

    def draws(self, z, params):
        good = models.analytic_solution(models.get_model("lcdm"), z, params)
        return np.stack([good, np.full_like(good, -10.0)])


def test_invalid_draws_contribute_zero_density():
    obs = inverse.load_cc()
    spec = models.get_model("lcdm")
    fake = inverse.InferenceTask(spec, _TwoDraws())
    exact = inverse.InferenceTask(spec, inverse.AnalyticSource(spec))
    lam = [0.3, 68.0]
    want = inverse.log_likelihood(exact, lam, obs) + len(obs) * np.log(0.5)
    assert inverse.log_likelihood(fake, lam, obs) == pytest.approx(want, rel=1e-12)


def test_posterior_source_common_random_numbers(tiny_lcdm, rng):
    spec = tiny_lcdm.spec
    n = tiny_lcdm.params.n_params
    post = bayes.NUTSPosterior(tiny_lcdm.params,
                               tiny_lcdm.params.flatten() + 1e-3 * rng.standard_normal((20, n)),
                               1.0)
    obs = inverse.load_cc()
    src = inverse.PosteriorSource(post, spec, bayes.Homoscedastic(0.01), len(obs), 8, rng)
    rows = np.full((len(obs), 1), 0.3)
    a, b = src.draws(obs.z, rows), src.draws(obs.z, rows)
    assert a.shape == (8, 30, 1)
    np.testing.assert_array_equal(a, b)
    task = inverse.InferenceTask(spec, src)
    assert inverse.log_likelihood(task, [0.3, 68.0], obs) == inverse.log_likelihood(
        task, [0.3, 68.0], obs)


def test_task_validation():
    spec = models.get_model("lcdm")
    src = inverse.AnalyticSource(spec)
    with pytest.raises(ValueError):
        inverse.InferenceTask(spec, src, walkers=3)
    with pytest.raises(ValueError):
        inverse.InferenceTask(spec, src, prior_box={"H0": (90.0, 50.0)})
    task = inverse.InferenceTask(spec, src, prior_box={"Om0": (0.2, 0.4)})
    np.testing.assert_array_equal(task.box_array, [[0.2, 0.4], [50.0, 90.0]])


def test_chain_csv_roundtrip(tmp_path, rng):
    chain = ensemble.ChainResult(rng.normal(size=(4, 5, 2)), rng.normal(size=(4, 5)), 0.3, 1,
                                 ("Om0", "H0"))
    inverse.chain_to_csv(chain, tmp_path / "c.csv")
    back = inverse.chain_from_csv(tmp_path / "c.csv")
    np.testing.assert_allclose(back.samples, chain.samples, rtol=1e-9)
    assert back.param_names == ("Om0", "H0")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "walker,step,Om0,H0,logp"


def test_small_inference_run(rng):
    spec = models.get_model("lcdm")
    task = inverse.InferenceTask(spec, inverse.AnalyticSource(spec), walkers=8, steps=300)
    chain = inverse.run_inference(task, inverse.load_cc(), rng)
    s = inverse.summarize(chain, task.burn_in_fraction)
    assert 0.2 < s["Om0"]["mean"] < 0.45 and 60 < s["H0"]["mean"] < 76


def test_stranded_walker_recovers(rng):
    def logp(th):
        return -0.5 * float(th @ th) if np.all(np.abs(th) < 3) else -np.inf

    init = rng.standard_normal((8, 2)) * 0.5
    init[0] = [3.5, 0.0]  # just outside; half-way moves land inside
    chain = ensemble.stretch_sample(logp, init, 200, rng)
    assert np.all(np.isfinite(chain.log_probs[:, -1]))
