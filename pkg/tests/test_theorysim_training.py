import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import centered_cross
from vasfilter.errors import DegenerateClasses, DegenerateSpectrum, EmptyTest, SubsetTooSmall
from vasfilter.theorysim import (
    ClassSpec,
    SynthConfig,
    TrainedMap,
    axis_classes,
    classification_accuracy,
    closed_form_train,
    gamma_matrix,
    gen_world,
    gradient_descent_oracle,
    p_terms,
    product_loss,
    regularized_loss,
    test_loss as eval_test_loss,
)
from vasfilter.theorysim.training import nuclear_norm, truncated_svd


def world(**kw):
    base = dict(r=4, d=16, n_train=200, n_test=2000, noise_std=0.01, seed=0)
    base.update(kw)
    return gen_world(SynthConfig(**base))


def test_rank_one_gamma_is_kept_whole():
    u = np.arange(1.0, 5.0)
    x_v = np.outer([1.0, -1.0, 2.0, 0.0], u)
    x_l = np.outer([1.0, -1.0, 2.0, 0.0], u[::-1])
    g = gamma_matrix(x_v, x_l)
    assert np.linalg.matrix_rank(g) == 1
    w = dataclasses.replace(world(d=4, r=2, n_train=4, sigma_train_diag=(0.4, 0.4),
                                  sigma_test_diag=(0.4, 0.4)), x_v=x_v, x_l=x_l)
    tm = closed_form_train(w, np.arange(4), rho=2.0)
    np.testing.assert_allclose(tm.product, (1 / 2.0) * (3 / 4) * g, atol=1e-14)


def test_gamma_definition(rng):
    x_v, x_l = rng.standard_normal((9, 3)), rng.standard_normal((9, 3))
    m = 9
    manual = sum(np.outer(x_v[i], x_l[i]) for i in range(m)) / (m - 1) \
        - m / (m - 1) * np.outer(x_v.mean(0), x_l.mean(0))
    np.testing.assert_allclose(gamma_matrix(x_v, x_l), manual, atol=1e-14)


def test_rho_scaling():
    w = world()
    a = closed_form_train(w, np.arange(100), rho=1.0).product
    b = closed_form_train(w, np.arange(100), rho=2.0).product
    np.testing.assert_allclose(b, a / 2, rtol=1e-12, atol=1e-16)


def test_matches_gradient_descent():
    w = world()
    tm = closed_form_train(w, np.arange(200))
    gd = gradient_descent_oracle(w.x_v, w.x_l, 4, 1.0, seed=1)
    assert gd.converged
    rel = np.linalg.norm(gd.product - tm.product) / np.linalg.norm(tm.product)
    assert rel <= 1e-3


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10_000))
def test_closed_form_never_beaten(seed):
    r_ = np.random.default_rng(seed)
    r = int(r_.integers(1, 5))
    d = int(r_.integers(r, 17))
    m = int(r_.integers(4, 65))
    diag = tuple(r_.dirichlet(np.full(r, 3.0)) * 0.9)
    w = gen_world(SynthConfig(r=r, d=d, n_train=m, n_test=0, sigma_train_diag=diag,
                              sigma_test_diag=diag, noise_std=float(r_.uniform(0, 0.05)),
                              seed=seed))
    tm = closed_form_train(w, np.arange(m))
    gd = gradient_descent_oracle(w.x_v, w.x_l, r, 1.0, seed=seed, max_iters=3000)
    assert product_loss(tm.product, w.x_v, w.x_l, 1.0) <= \
        regularized_loss(gd.g_v, gd.g_l, w.x_v, w.x_l, 1.0) + 1e-6
    assert tm.numerical_rank() <= r


def test_pairwise_loss_matches_product_form(rng):
    x_v, x_l = rng.standard_normal((12, 5)), rng.standard_normal((12, 5))
    g_v, g_l = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    s = (x_v @ g_v) @ (x_l @ g_l).T
    m = 12
    direct = sum(s[i, j] - s[i, i] for i in range(m) for j in range(m) if j != i) / (m * (m - 1)) \
        + 0.5 * 1.3 * m / (m - 1) * np.sum((g_v @ g_l.T) ** 2)
    assert regularized_loss(g_v, g_l, x_v, x_l, 1.3) == pytest.approx(direct, rel=1e-12)
    assert product_loss(g_v @ g_l.T, x_v, x_l, 1.3) == pytest.approx(direct, rel=1e-12)


def test_rank_bound():
    tm = closed_form_train(world(noise_std=0.3), np.arange(200))
    s = tm.singular_values()
    assert np.sum(s > 1e-8 * s[0]) <= 4


def test_tied_spectrum_refused():
    with pytest.raises(DegenerateSpectrum):
        truncated_svd(np.diag([3.0, 2.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(truncated_svd(np.diag([3.0, 2.0, 1.0]), 2), np.diag([3.0, 2.0, 0.0]))


def test_subset_too_small():
    with pytest.raises(SubsetTooSmall):
        closed_form_train(world(), [3])


def test_zero_map_losses():
    w = world()
    tl = eval_test_loss(TrainedMap.zero(16), w)
    assert tl.contrast == 0 and tl.simplified == 0


def test_contrast_and_simplified_agree():
    w = world(n_test=10_000, noise_std=0.0, seed=8)
    tl = eval_test_loss(closed_form_train(w, np.arange(200)), w)
    assert abs(tl.contrast - tl.simplified) <= 5 * tl.scale / np.sqrt(tl.n)


def test_latent_identity_for_simplified_loss():
    w = world(noise_std=0.0, seed=3, sigma_train_diag=(0.2,) * 4,
              sigma_test_diag=(0.5, 0.2, 0.05, 0.05))
    S = np.arange(40)
    tm = closed_form_train(w, S, rho=1.7)
    T = w.test_cross_moment()
    sigma_c = centered_cross(w.z_v[S].tolist(), w.z_l[S].tolist())
    assert eval_test_loss(tm, w).simplified == pytest.approx(-np.sum(T * sigma_c) / 1.7, abs=1e-8)


def test_empty_test_split():
    w = world(n_test=0)
    with pytest.raises(EmptyTest):
        eval_test_loss(closed_form_train(w, np.arange(10)), w)


def test_exact_map_classifies_perfectly():
    w = world(noise_std=0.0, r=2, d=6, sigma_train_diag=(0.4, 0.4), sigma_test_diag=(0.4, 0.4))
    exact = TrainedMap(w.g_star_v @ w.g_star_l.T, 1.0, 0, 2)
    templates = np.eye(2)
    labels = np.argmax(w.z_v_test @ templates.T, axis=1)
    assert classification_accuracy(exact, w, ClassSpec(templates, labels), trials=3000) == 1.0


def test_zero_map_is_coin_flip():
    w = world()
    assert classification_accuracy(TrainedMap.zero(16), w, axis_classes(w), trials=500) == 0.5


def test_random_map_on_sign_symmetric_classes():
    w = world(n_test=2000, seed=6)
    # close the test set under negation so every map is balanced in expectation
    half = w.z_v_test[:1000]
    z = np.vstack([half, -half])
    x = np.vstack([w.x_v_test[:1000], -w.x_v_test[:1000]])
    w = dataclasses.replace(w, z_v_test=z, x_v_test=x, z_l_test=z, x_l_test=x)
    templates = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
    labels = np.argmax(np.abs(z[:, :2]), axis=1)
    rand = TrainedMap(np.random.default_rng(1).standard_normal((16, 16)), 1.0, 0, 16)
    acc = classification_accuracy(rand, w, ClassSpec(templates, labels), trials=10_000)
    assert abs(acc - 0.5) <= 0.02


def test_degenerate_classes():
    w = world()
    tm = TrainedMap.zero(16)
    with pytest.raises(DegenerateClasses):
        classification_accuracy(tm, w, ClassSpec(np.eye(1, 4), np.zeros(2000, int)))
    with pytest.raises(DegenerateClasses):
        classification_accuracy(tm, w, ClassSpec(np.eye(2, 4), np.zeros(2000, int)))


def test_p_terms_reassemble_gamma():
    w = world(noise_std=0.2)
    S = np.arange(0, 200, 3)
    parts = p_terms(w, S)
    np.testing.assert_allclose(sum(parts), gamma_matrix(w.x_v[S], w.x_l[S]), atol=1e-12)


@pytest.mark.parametrize("noise", [0.01, 0.05, 0.2])
def test_p_term_bound(noise):
    w = world(noise_std=noise, seed=11)
    S = np.arange(120)
    m = S.size
    tm = closed_form_train(w, S)
    parts = p_terms(w, S)
    sigma_s = w.z_v[S].T @ w.z_l[S] / m
    recon = tm.product - (1 / tm.rho) * w.g_star_v @ sigma_s @ w.g_star_l.T
    bound = (2 / tm.rho) * ((m - 1) / m) * sum(nuclear_norm(p) for p in parts[1:])
    assert nuclear_norm(recon) <= bound
