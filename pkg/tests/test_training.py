import numpy as np
import pytest

from bundle_uq import models, nn, training
from bundle_uq.training import TrainConfig


def test_config_validation_and_schedule():
    with pytest.raises(ValueError):
        TrainConfig("lcdm", iterations=-1)
    with pytest.raises(ValueError):
        TrainConfig("lcdm", lr=0.0)
    cfg = TrainConfig("lcdm", iterations=100, lr=1e-2, lr_final=1e-4)
    assert cfg.lr_at(0) == pytest.approx(1e-2)
    assert cfg.lr_at(50) == pytest.approx(1e-3)
    assert TrainConfig("lcdm", lr=5e-3).lr_at(77) == 5e-3


def test_sample_batch_is_cartesian(rng):
    spec = models.get_model("cpl")
    rows = training.sample_batch(spec, 4, rng)
    assert rows.shape == (64, 3)
    assert len(np.unique(rows[:, 0])) == 4 and len(np.unique(rows[:, 2])) == 4
    assert rows[:, 1].min() >= -2.0 and rows[:, 1].max() <= 0.0


def test_split_rows_fills_reference_parameters():
    spec = models.get_model("cpl")
    x, p = training.split_rows(spec, [[1.0, -1.0, 0.5]])
    np.testing.assert_array_equal(p, [[-1.0, 0.5, 0.0]])
    _, p = training.split_rows(spec, [[1.0, -1.0, 0.5]], Om0=0.3)
    assert p[0, 2] == 0.3


@pytest.mark.parametrize("mid", models.MODEL_IDS)
def test_residual_loss_gradient(mid, rng):
    spec = models.get_model(mid)
    net = nn.init_params(TrainConfig(mid, hidden=(5,)).layer_sizes(spec), rng)
    x, p = training.split_rows(spec, training.sample_batch(spec, 2, rng))
    loss, g = training.residual_loss(spec, net, x, p)
    # central differences lose about eps_machine * loss / h to roundoff
    atol = max(1e-7, 1e-9 * loss)
    flat = net.flatten()
    idx = rng.choice(flat.size, 12, replace=False)
    for i in idx:
        e = np.zeros_like(flat)
        e[i] = 1e-6
        lp, _ = training.residual_loss(spec, net.unflatten(flat + e), x, p, grad=False)
        lm, _ = training.residual_loss(spec, net.unflatten(flat - e), x, p, grad=False)
        assert g.flatten()[i] == pytest.approx((lp - lm) / 2e-6, rel=1e-4, abs=atol)


def test_residual_vanishes_on_exact_solution():
    # a "network" whose enforced output is the exact LCDM solution has zero residual
    spec = models.get_model("lcdm")
    z = np.linspace(0.1, 3, 7)
    p = np.full((7, 1), 0.3)
    exact = models.analytic_solution(spec, z, p)
    c, dc = models.enforcement_factor(spec, z)
    raw = (exact - 0.3) / c[:, None]
    d_exact = 3 * exact / (1 + z)[:, None]
    raw_dx = (d_exact - dc[:, None] * raw) / c[:, None]
    du = models.enforce_ic_derivative(spec, z, raw, raw_dx, p)
    np.testing.assert_allclose(du - models.rhs(spec, z, exact, p), 0, atol=1e-12)


def test_training_is_deterministic_and_reduces_loss():
    cfg = TrainConfig("lcdm", iterations=150, samples_per_dim=8, lr=1e-2, hidden=(6,), seed=3)
    a, b = training.train(cfg), training.train(cfg)
    np.testing.assert_array_equal(a.params.flatten(), b.params.flatten())
    assert a.loss_history[-1][1] < a.loss_history[0][1]
    other = training.train(TrainConfig(**{**cfg.to_dict(), "seed": 4}))
    assert not np.array_equal(a.params.flatten(), other.params.flatten())


def test_continue_training_and_shape_check(tiny_lcdm):
    cfg = TrainConfig("lcdm", iterations=0, hidden=(8,))
    same = training.train(cfg, init=tiny_lcdm.params)
    np.testing.assert_array_equal(same.params.flatten(), tiny_lcdm.params.flatten())
    with pytest.raises(nn.ShapeError):
        training.train(TrainConfig("lcdm", iterations=1, hidden=(4,)), init=tiny_lcdm.params)


def test_solution_roundtrip(tiny_cpl, tmp_path):
    training.save_solution(tmp_path / "c.json", tiny_cpl)
    back = training.load_solution(tmp_path / "c.json")
    assert back.spec == tiny_cpl.spec
    assert back.train_config == tiny_cpl.train_config
    x = np.linspace(0, 3, 5)
    p = np.tile([-1.0, 0.3, 0.25], (5, 1))
    np.testing.assert_array_equal(back.predict(x, p), tiny_cpl.predict(x, p))


def test_quintessence_options_roundtrip(tmp_path):
    spec = models.get_model("quintessence", variable="N", z0=5.0)
    sol = training.train(TrainConfig("quintessence", iterations=2, samples_per_dim=2,
                                     hidden=(3,)), spec=spec)
    training.save_solution(tmp_path / "q.json", sol)
    assert training.load_solution(tmp_path / "q.json").spec == spec
