import numpy as np
import pytest

from sigsym import models as M
from sigsym import tensor as T
from sigsym.errors import DimensionError
from sigsym.symbols import LabelTriplet, encode_labels, split_code

from helpers import kl_monte_carlo
from model_helpers import gradcheck_params, loss_term_closures, tiny_batch, tiny_model


def gauss(mean, log_var):
    return M.DiagGaussian(T.Tensor(np.asarray(mean, dtype=np.float64)),
                          T.Tensor(np.asarray(log_var, dtype=np.float64)))


def test_kl_identical_distributions_is_zero():
    q = gauss([0.3, -1.2, 2.0], [0.1, -0.4, 0.0])
    assert float(M.kl_diag_gaussian(q, q).data) == pytest.approx(0.0, abs=1e-12)


def test_kl_known_value():
    # KL(N(0,1) || N(1,4)) = 0.5*(ln 4 + (1+1)/4 - 1) = 0.4431471805599453
    q1 = gauss([0.0], [0.0])
    q2 = gauss([1.0], [np.log(4.0)])
    assert float(M.kl_diag_gaussian(q1, q2).data) == pytest.approx(0.4431471805599453, rel=1e-12)


def test_kl_is_asymmetric():
    q1 = gauss([0.0, 0.0], [0.0, 0.0])
    q2 = gauss([2.0, -1.0], [1.0, -1.0])
    ab = float(M.kl_diag_gaussian(q1, q2).data)
    ba = float(M.kl_diag_gaussian(q2, q1).data)
    assert abs(ab - ba) > 0.1


def test_kl_nonnegative_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = int(rng.integers(1, 6))
        q1 = gauss(rng.standard_normal(d), rng.uniform(-2, 2, d))
        q2 = gauss(rng.standard_normal(d), rng.uniform(-2, 2, d))
        assert float(M.kl_diag_gaussian(q1, q2).data) >= -1e-12


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(42)
    for i in range(5):
        d = 4
        m1, lv1 = rng.standard_normal(d), rng.uniform(-1, 1, d)
        m2, lv2 = rng.standard_normal(d), rng.uniform(-1, 1, d)
        exact = float(M.kl_diag_gaussian(gauss(m1, lv1), gauss(m2, lv2)).data)
        est, se = kl_monte_carlo(m1, lv1, m2, lv2, 20000, np.random.default_rng(100 + i))
        assert abs(exact - est) <= max(3 * se, 0.05 * abs(exact))


def test_reparameterize_zero_noise_returns_mean():
    q = gauss([1.0, -2.0], [0.3, -0.7])
    z = M.reparameterize(q, np.zeros(2))
    np.testing.assert_allclose(z.data, q.mean.data)


def test_reparameterize_formula():
    q = gauss([0.0, 0.0], [np.log(4.0), np.log(9.0)])
    z = M.reparameterize(q, np.array([1.0, -1.0]))
    np.testing.assert_allclose(z.data, [2.0, -3.0], rtol=1e-12)


def test_gaussian_loglik_standard_normal_at_mean():
    # log N(0; 0, 1) = -0.5 * ln(2*pi) = -0.9189385332046727
    q = gauss([0.0], [0.0])
    ll = M.log_likelihood_gaussian(np.array([0.0]), q)
    assert float(ll.data) == pytest.approx(-0.9189385332046727, rel=1e-12)


def test_gaussian_loglik_sums_dimensions():
    q = gauss([0.0, 1.0], [0.0, np.log(0.25)])
    x = np.array([0.5, 0.0])
    expected = (-0.5 * (np.log(2 * np.pi) + 0.0 + 0.25)
                - 0.5 * (np.log(2 * np.pi) + np.log(0.25) + 1.0 / 0.25))
    assert float(M.log_likelihood_gaussian(x, q).data) == pytest.approx(expected, rel=1e-12)


def test_categorical_loglik_matches_log_softmax():
    logits = T.Tensor(np.array([2.0, -1.0, 0.5]), dtype=np.float64)
    y = np.array([0.0, 0.0, 1.0])
    ll = float(M.log_likelihood_categorical([y], [logits]).data)
    ref = 0.5 - np.log(np.exp(2.0) + np.exp(-1.0) + np.exp(0.5))
    assert ll == pytest.approx(ref, rel=1e-12)


def test_categorical_loglik_floor():
    logits = T.Tensor(np.array([60.0, 0.0]), dtype=np.float64)
    y = np.array([0.0, 1.0])  # true class has probability ~exp(-60) < 1e-7
    ll = float(M.log_likelihood_categorical([y], [logits]).data)
    assert ll == pytest.approx(np.log(1e-7), rel=1e-9)


def test_encoder_variance_floor():
    model = tiny_model(dtype=np.float32)
    x = np.full((2, model.input_dim), 50.0, dtype=np.float32)  # extreme inputs
    q = model.signal_vae.encode(T.Tensor(x))
    assert np.all(np.exp(q.log_var.data) >= M.LATENT_VAR_FLOOR * 0.999)


def test_decoder_mean_in_unit_interval_and_var_floor():
    model = tiny_model(dtype=np.float32)
    z = T.Tensor(np.random.default_rng(0).standard_normal((4, model.latent_dim)) * 10,
                 dtype=np.float32)
    g = model.signal_vae.decode(z)
    assert np.all(g.mean.data >= 0) and np.all(g.mean.data <= 1)
    assert np.all(np.exp(g.log_var.data) >= M.SIGNAL_VAR_FLOOR * 0.999)


def test_symbol_decode_probabilities_normalized():
    model = tiny_model(dtype=np.float32)
    z = T.Tensor(np.zeros((2, model.latent_dim), dtype=np.float32))
    probs = model.symbol_vae.decode_probs(z)
    assert len(probs) == 3
    for p in probs:
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, rtol=1e-5)


def test_paired_loss_breakdown_is_additive():
    model = tiny_model()
    x, y, nx, ny = tiny_batch(model)
    breakdown, node = M.paired_loss(model.signal_vae, model.symbol_vae, x, y,
                                    beta=0.37, gamma=10.0, noise_x=nx, noise_y=ny)
    assert breakdown.total == pytest.approx(breakdown.recombine(), abs=1e-6)
    assert breakdown.total == pytest.approx(float(node.data), abs=1e-9)
    assert breakdown.match_kl >= 0
    assert breakdown.kl_signal >= 0 and breakdown.kl_symbol >= 0


def test_match_term_uses_signal_posterior_first():
    # regression: the matching divergence must be KL(q(z|x) || q(z|y))
    model = tiny_model(seed=3)
    x, y, nx, ny = tiny_batch(model, seed=4)
    breakdown, _ = M.paired_loss(model.signal_vae, model.symbol_vae, x, y,
                                 beta=1.0, gamma=10.0, noise_x=nx, noise_y=ny)
    q_x = model.signal_vae.encode(T.Tensor(x, dtype=np.float64))
    q_y = model.symbol_vae.encode(T.Tensor(y, dtype=np.float64))
    forward = float(T.mean_all(M.kl_diag_gaussian(q_x, q_y)).data)
    backward = float(T.mean_all(M.kl_diag_gaussian(q_y, q_x)).data)
    assert breakdown.match_kl == pytest.approx(forward, rel=1e-6)
    assert abs(forward - backward) > 1e-6
    assert breakdown.match_kl != pytest.approx(backward, rel=1e-6)


def test_gradients_of_every_loss_term_match_finite_differences():
    model = tiny_model(dtype=np.float64)
    x, y, nx, ny = tiny_batch(model)
    closures = loss_term_closures(model, x, y, nx, ny)
    named = model.named_parameters()
    for term, closure in closures.items():
        errors = gradcheck_params(closure, named)
        worst = max(errors.values())
        assert worst <= 1e-4, f"{term}: worst rel err {worst:.2e}"


def test_mlp_seed_determinism():
    a = tiny_model(seed=9, dtype=np.float32)
    b = tiny_model(seed=9, dtype=np.float32)
    for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)


def test_encode_rejects_wrong_width():
    model = tiny_model(dtype=np.float32)
    with pytest.raises(DimensionError):
        model.signal_vae.encode(T.Tensor(np.zeros((2, model.input_dim + 1), dtype=np.float32)))
