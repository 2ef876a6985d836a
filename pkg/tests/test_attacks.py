import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import QuadraticToy
from soae.attacks import (
    ATTACKS,
    AttackConfig,
    fgsm,
    fgsm_batch,
    pgd,
    project,
    run_attack_batch,
    soae,
    soae_batch,
)
from soae.nn import FeedForwardModel, Layer

unit = st.floats(0.0, 1.0)


def two_class_linear(w0, w1, c=(0.0, 0.0)):
    return FeedForwardModel([Layer(np.array([w0, w1], dtype=float), np.array(c, dtype=float), "identity")])


# -- project -------------------------------------------------------------------


def test_project_examples():
    x = np.array([0.2, 0.5, 0.7])
    np.testing.assert_array_equal(project(x, x + 0.01, 0.1), x)
    np.testing.assert_allclose(project(np.ones(4), 0.5 * np.ones(4), 0.1), 0.6 * np.ones(4))


@given(st.integers(1, 20).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-2, 3)), arrays(np.float64, n, elements=unit))), unit)
def test_project_is_componentwise_nearest_point(pair, eps):
    cand, origin = pair
    out = project(cand, origin, eps)
    assert np.all(np.abs(out - origin) <= eps + 1e-12) and np.all((out >= 0) & (out <= 1))
    for c, o, r in zip(cand, origin, out):
        lo, hi = max(o - eps, 0.0), min(o + eps, 1.0)
        assert r == min(max(c, lo), hi)


# -- FGSM / PGD ----------------------------------------------------------------


def test_fgsm_zero_budget_returns_input():
    model = FeedForwardModel.initialize([6, 5, 3], seed=0)
    x = np.random.default_rng(0).random(6)
    out = fgsm(model, x, 1, 0.0)
    np.testing.assert_array_equal(out.adversarial, x)
    assert out.success == (model.predict(x) != 1)


def test_fgsm_linear_margin_threshold():
    rng = np.random.default_rng(1)
    w0, w1 = rng.normal(size=8), rng.normal(size=8)
    model = two_class_linear(w0, w1)
    x = np.full(8, 0.5) + 0.01 * rng.normal(size=8)
    y = model.predict(x)
    diff = (w0 - w1) if y == 0 else (w1 - w0)
    margin = diff @ x
    threshold = margin / np.abs(diff).sum()
    assert 0 < threshold < 0.4  # no box clipping in play
    assert not fgsm(model, x, y, 0.98 * threshold).success
    assert fgsm(model, x, y, 1.02 * threshold).success


def test_fgsm_zero_gradient_leaves_input():
    w = np.array([0.4, -0.3, 0.2])
    model = two_class_linear(w, w)  # identical classes: loss is flat in x
    x = np.array([0.2, 0.6, 0.9])
    np.testing.assert_array_equal(fgsm(model, x, 0, 0.1).adversarial, x)


def test_pgd_single_step_equals_fgsm(small_mlp):
    X = np.random.default_rng(2).random((10, 12))
    Y = np.arange(10) % 4
    eps = 0.05
    cfg = AttackConfig(epsilon=eps, iterations=1, step_size=eps)
    pgd_out, _ = run_attack_batch("pgd", small_mlp, X, Y, cfg)
    np.testing.assert_array_equal(pgd_out, fgsm_batch(small_mlp, X, Y, eps))


def test_pgd_zero_budget_returns_input(small_mlp):
    x = np.random.default_rng(3).random(12)
    np.testing.assert_array_equal(pgd(small_mlp, x, 0, AttackConfig(epsilon=0.0)).adversarial, x)


def test_pgd_raises_loss_on_trained_model(mnist_small):
    model, test = mnist_small
    for i in range(20):
        out = pgd(model, test.X[i], test.y[i], AttackConfig())
        assert out.loss_trace[-1] >= out.loss_trace[0]
        assert out.iterations_used == 20 and len(out.loss_trace) == 21


def test_pgd_l2_is_not_implemented(small_mlp):
    with pytest.raises(NotImplementedError):
        pgd(small_mlp, np.zeros(12), 0, AttackConfig(norm="l2"))


# -- SOAE ----------------------------------------------------------------------


def test_soae_single_step_follows_newton_direction():
    rng = np.random.default_rng(4)
    B = rng.normal(size=(6, 6))
    A = B @ B.T + 6 * np.eye(6)
    toy = QuadraticToy(A, b=rng.normal(size=6))
    x = np.full(6, 0.5)
    alpha = 1e-3
    out = soae(toy, x, 0, AttackConfig(epsilon=0.5, alpha=alpha, iterations=1, tau=1e-10))
    newton = np.linalg.solve(A, A @ x + toy.b)
    np.testing.assert_allclose(out.adversarial - x, alpha * newton, rtol=1e-6, atol=1e-12)


def test_soae_zero_budget_returns_input(small_mlp):
    x = np.random.default_rng(5).random(12)
    out = soae(small_mlp, x, 2, AttackConfig(epsilon=0.0, alpha=50.0))
    np.testing.assert_array_equal(out.adversarial, x)
    X_adv, _ = soae_batch(small_mlp, x[None, :], np.array([2]), AttackConfig(epsilon=0.0))
    np.testing.assert_array_equal(X_adv[0], x)


def test_soae_records_telemetry(mnist_small):
    model, test = mnist_small
    out = soae(model, test.X[0], test.y[0], AttackConfig(alpha=20.0, iterations=4))
    assert len(out.krylov_dims) == 4 and all(1 <= m <= 64 for m in out.krylov_dims)
    assert len(out.loss_trace) == 5


def test_soae_batch_matches_single(mnist_small):
    model, test = mnist_small
    cfg = AttackConfig(alpha=20.0, iterations=3)
    X_adv, dims = soae_batch(model, test.X[:8], test.y[:8], cfg)
    for i in range(8):
        out = soae(model, test.X[i], test.y[i], cfg)
        np.testing.assert_allclose(X_adv[i], out.adversarial, atol=1e-7)  # BLAS order noise / eta
        assert list(dims[i]) == out.krylov_dims


def test_soae_succeeds_on_low_margin_image(mnist_small):
    model, test = mnist_small
    logits = model.forward(test.X)
    correct = np.flatnonzero(model.predict(test.X) == test.y)
    top = np.sort(logits[correct], axis=1)
    i = correct[np.argmin(top[:, -1] - top[:, -2])]  # most misclassification-prone
    out = soae(model, test.X[i], test.y[i], AttackConfig(alpha=20.0, iterations=4))
    assert out.success
    assert model.loss(out.adversarial, test.y[i]) > model.loss(test.X[i], test.y[i])


def test_soae_raises_mean_loss(mnist_small):
    model, test = mnist_small
    X, Y = test.X[:100], test.y[:100]
    X_adv, _ = soae_batch(model, X, Y, AttackConfig(alpha=20.0, iterations=4))
    assert model.loss(X_adv, Y).mean() > model.loss(X, Y).mean()


def test_soae_normalize_flag_changes_step(mnist_small):
    model, test = mnist_small
    cfg = AttackConfig(alpha=0.01, iterations=1, normalize=True)
    X_adv, _ = soae_batch(model, test.X[:4], test.y[:4], cfg)
    moved = np.linalg.norm(X_adv - test.X[:4], axis=1)
    assert np.all(moved <= 0.01 + 1e-12)


# -- shared invariants -------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(ATTACKS), st.floats(0.0, 0.3), st.integers(1, 4), st.integers(0, 10_000))
def test_budget_and_box_respected(name, eps, iters, seed):
    rng = np.random.default_rng(seed)
    model = FeedForwardModel.initialize([10, 8, 3], seed=seed % 5)
    X, Y = rng.random((6, 10)), rng.integers(0, 3, 6)
    X[0] = 0.0
    X[1] = 1.0
    cfg = AttackConfig(epsilon=eps, alpha=float(rng.uniform(0.1, 100)), iterations=iters, step_size=0.05)
    X_adv, _ = run_attack_batch(name, model, X, Y, cfg)
    assert np.abs(X_adv - X).max() <= eps + 1e-9
    assert X_adv.min() >= 0.0 and X_adv.max() <= 1.0


def test_attacks_are_deterministic(mnist_small):
    model, test = mnist_small
    cfg = AttackConfig(alpha=20.0, iterations=3)
    for name in ATTACKS:
        a, _ = run_attack_batch(name, model, test.X[:16], test.y[:16], cfg)
        b, _ = run_attack_batch(name, model, test.X[:16], test.y[:16], cfg)
        assert a.tobytes() == b.tobytes()


def test_unknown_attack_name(small_mlp):
    with pytest.raises(KeyError):
        run_attack_batch("pgdd", small_mlp, np.zeros((1, 12)), np.zeros(1, int), AttackConfig())


@pytest.mark.parametrize("bad", [dict(epsilon=1.5), dict(alpha=0.0), dict(iterations=0), dict(eta=0.0),
                                 dict(tau=-1.0), dict(m_max=0), dict(norm="l1"), dict(step_size=0.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        AttackConfig(**bad)


def test_config_defaults():
    cfg = AttackConfig()
    assert cfg.epsilon == 8 / 255 and cfg.step_size == 2 / 255 and cfg.iterations == 20
    assert cfg.alpha == 1.0 and cfg.eta == 1e-5 and cfg.tau == 1e-3
    assert cfg.krylov_cap(784) == 64 and AttackConfig(m_max=None).krylov_cap(784) == 784
