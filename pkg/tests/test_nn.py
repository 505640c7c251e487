import math

import numpy as np
import pytest

from _gradcheck import ce_input_error, ce_params_error, fd_input, fd_params, kl_adv_input_error, rel_error
from dafa_lab import nn
from dafa_lab.errors import DimensionMismatch, EmptyArchitecture


class TestInit:
    def test_glorot_bound(self):
        p = nn.init([10, 4], 0)
        s = math.sqrt(6 / 14)
        assert s == pytest.approx(0.6547, abs=1e-4)
        assert np.all(np.abs(p.weights[0]) <= s)
        assert np.all(p.biases[0] == 0)

    def test_linear_and_sizes(self):
        p = nn.init([10, 64, 64, 4], 1)
        assert p.layer_sizes == [10, 64, 64, 4] and p.num_classes == 4
        assert len(nn.init([3, 2], 0).weights) == 1

    def test_deterministic(self):
        a, b = nn.init([5, 7, 3], 9), nn.init([5, 7, 3], 9)
        for x, y in zip(a.arrays(), b.arrays()):
            np.testing.assert_array_equal(x, y)

    def test_empty(self):
        with pytest.raises(EmptyArchitecture):
            nn.init([4], 0)

    def test_chain_check(self):
        with pytest.raises(DimensionMismatch):
            nn.MlpParams((np.zeros((3, 2)), np.zeros((2, 4))), (np.zeros(3), np.zeros(2)))


class TestForward:
    def test_softmax_rows(self):
        p = nn.init([6, 8, 5], 2)
        tr = nn.forward(p, np.random.default_rng(0).normal(0, 3, (20, 6)))
        np.testing.assert_allclose(tr.probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(tr.probs > 0) and np.all(tr.probs < 1)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            nn.forward(nn.init([3, 2], 0), np.zeros((1, 4)))

    def test_uniform_logits_ce(self):
        p = nn.MlpParams((np.zeros((4, 3)),), (np.zeros(4),))
        tr = nn.forward(p, np.ones((2, 3)))
        assert nn.loss_ce(tr, np.array([0, 3])) == pytest.approx(math.log(4))

    def test_ce_direct_summation(self):
        rng = np.random.default_rng(5)
        p = nn.init([4, 6, 3], 5)
        x, y = rng.normal(size=(7, 4)), rng.integers(0, 3, 7)
        h = np.maximum(x @ p.weights[0].T + p.biases[0], 0)
        z = h @ p.weights[1].T + p.biases[1]
        direct = np.mean([-z[i, y[i]] + math.log(sum(math.exp(v) for v in z[i])) for i in range(7)])
        assert nn.loss_ce(nn.forward(p, x), y) == pytest.approx(direct, abs=1e-10)

    def test_kl_identity_and_nonneg(self):
        p = nn.init([4, 5, 3], 0)
        x = np.random.default_rng(1).normal(size=(10, 4))
        tr = nn.forward(p, x)
        assert abs(nn.loss_kl(tr, tr)) < 1e-12
        assert np.all(nn.kl_per_example(tr, nn.forward(p, x + 0.5)) >= 0)

    def test_embedding_is_last_hidden(self):
        p = nn.init([4, 5, 3], 0)
        tr = nn.forward(p, np.ones((2, 4)))
        assert tr.embedding.shape == (2, 5) and np.all(tr.embedding >= 0)

    def test_label_shape(self):
        tr = nn.forward(nn.init([3, 2], 0), np.zeros((2, 3)))
        with pytest.raises(DimensionMismatch):
            nn.ce_per_example(tr, np.array([0]))

    def test_stable_for_large_logits(self):
        p = nn.MlpParams((np.array([[1000.0], [-1000.0]]),), (np.zeros(2),))
        tr = nn.forward(p, np.array([[1.0]]))
        assert np.isfinite(nn.loss_ce(tr, np.array([1])))


class TestGradients:
    @pytest.mark.parametrize("seed", range(10))
    def test_ce_params(self, seed):
        assert ce_params_error(np.random.default_rng([seed, 1])) <= 1e-4

    @pytest.mark.parametrize("seed", range(10))
    def test_ce_input(self, seed):
        assert ce_input_error(np.random.default_rng([seed, 2])) <= 1e-4

    @pytest.mark.parametrize("seed", range(10))
    def test_kl_adv_input(self, seed):
        assert kl_adv_input_error(np.random.default_rng([seed, 3])) <= 1e-4

    def test_kl_params_adversarial_branch(self):
        rng = np.random.default_rng(4)
        p = nn.init([3, 5, 3], 4)
        x = rng.normal(size=(4, 3))
        clean = nn.forward(p, x)
        x_adv = x + 0.2
        analytic = nn.grad_params(p, x_adv, clean, nn.KL).arrays()
        numeric = fd_params(lambda q: nn.loss_kl(clean, nn.forward(q, x_adv)), p)
        for a, n in zip(analytic, numeric):
            assert rel_error(a, n) <= 1e-4

    def test_kl_clean_logit_grad(self):
        rng = np.random.default_rng(6)
        zc, za = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
        lin = lambda z: nn.MlpParams((np.eye(4),), (np.zeros(4),))

        def kl_of(zc_):
            return nn.kl_per_example(nn.forward(lin(None), zc_), nn.forward(lin(None), za)).sum()

        d_clean, _ = nn.kl_logit_grads(nn.forward(lin(None), zc), nn.forward(lin(None), za))
        assert rel_error(d_clean, fd_input(kl_of, zc)) <= 1e-6

    def test_zero_network_input_grad(self):
        p = nn.MlpParams((np.zeros((4, 3)), np.zeros((2, 4))), (np.zeros(4), np.zeros(2)))
        g = nn.grad_input(p, np.ones((3, 3)), np.array([0, 1, 0]))
        np.testing.assert_array_equal(g, 0.0)

    def test_linear_softmax_closed_form(self):
        rng = np.random.default_rng(8)
        w, b = rng.normal(size=(3, 5)), rng.normal(size=3)
        p = nn.MlpParams((w,), (b,))
        x, y = rng.normal(size=(6, 5)), rng.integers(0, 3, 6)
        probs = nn.forward(p, x).probs
        expected = (probs - np.eye(3)[y]) @ w
        np.testing.assert_allclose(nn.grad_input(p, x, y), expected, atol=1e-10)

    def test_unknown_loss(self):
        with pytest.raises(ValueError):
            nn.grad_params(nn.init([2, 2], 0), np.zeros((1, 2)), np.array([0]), "mse")


class TestOptimiser:
    def test_zero_lr(self):
        p = nn.init([3, 2], 0)
        g = nn.MlpParams.from_arrays([np.ones_like(a) for a in p.arrays()])
        for a, b in zip(nn.sgd_step(p, g, 0.0, 0.1).arrays(), p.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_zero_grad_no_decay(self):
        p = nn.init([3, 2], 0)
        g = nn.MlpParams.from_arrays([np.zeros_like(a) for a in p.arrays()])
        for a, b in zip(nn.sgd_step(p, g, 0.5).arrays(), p.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_scalar_quadratic(self):
        # f(t) = (t - 3)^2 at t = 1: grad -4; wd 0.1 -> t - 0.5*(-4 + 0.1) = 2.95
        p = nn.MlpParams((np.array([[1.0]]),), (np.array([0.0]),))
        g = nn.MlpParams((np.array([[-4.0]]),), (np.array([0.0]),))
        assert nn.sgd_step(p, g, 0.5, 0.1).weights[0][0, 0] == pytest.approx(2.95)

    def test_momentum_first_step_is_sgd(self):
        p = nn.init([3, 2], 1)
        g = nn.MlpParams.from_arrays([np.full_like(a, 0.5) for a in p.arrays()])
        new, vel = nn.momentum_step(p, g, None, 0.1, 0.01)
        for a, b in zip(new.arrays(), nn.sgd_step(p, g, 0.1, 0.01).arrays()):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)
        new2, _ = nn.momentum_step(new, g, vel, 0.1, 0.0, 0.9)
        expected = new.weights[0] - 0.1 * (0.9 * vel.weights[0] + 0.5)
        np.testing.assert_allclose(new2.weights[0], expected, atol=1e-15)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        p = nn.init([4, 6, 3], 3)
        p = nn.MlpParams(p.weights, tuple(b + 0.1 for b in p.biases))
        path = nn.save_checkpoint(p, tmp_path / "ck.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "# layers 4,6,3" and lines[1] == "layer,row,col,value"
        back = nn.load_checkpoint(path)
        for a, b in zip(back.arrays(), p.arrays()):
            np.testing.assert_array_equal(a, b)
