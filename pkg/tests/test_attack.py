import numpy as np
import pytest

from dafa_lab import attack as A
from dafa_lab import nn


def small_net(seed, d=4, c=3):
    return nn.init([d, 8, c], seed)


class TestAttackConfig:
    def test_default_step(self):
        assert A.AttackConfig(0.4).step_size == pytest.approx(0.1)

    def test_presets(self):
        t = A.AttackConfig.training(0.5)
        assert (t.steps, t.step_size, t.objective) == (10, 0.125, nn.KL)
        e = A.AttackConfig.evaluation(0.5)
        assert (e.steps, e.step_size, e.objective) == (20, pytest.approx(0.0625), nn.CE)

    @pytest.mark.parametrize(
        "kwargs", [{"epsilon": -0.1}, {"epsilon": 0.1, "steps": 0}, {"epsilon": 0.1, "init": "gauss"},
                   {"epsilon": 0.1, "objective": "mse"}, {"epsilon": 0.1, "step_size": 0.0}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            A.AttackConfig(**kwargs)


class TestPgd:
    def test_zero_radius(self):
        p = small_net(0)
        x = np.random.default_rng(0).normal(size=(5, 4))
        delta = A.pgd(p, x, np.zeros(5, int), 0.0, A.AttackConfig(0.3))
        np.testing.assert_array_equal(delta, 0.0)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            A.pgd(small_net(0), np.zeros((2, 4)), np.zeros(2, int), -0.1, A.AttackConfig(0.3))

    def test_linear_worst_case(self):
        # binary linear softmax: CE grows with (w_1 - w_0).x, maximised at a corner of the box
        rng = np.random.default_rng(3)
        w = rng.normal(size=(2, 5))
        p = nn.MlpParams((w,), (np.zeros(2),))
        x = rng.normal(size=(6, 5))
        y = np.zeros(6, int)
        eps = 0.3
        delta = A.pgd(p, x, y, eps, A.AttackConfig(eps, steps=10, init=A.ZERO))
        np.testing.assert_allclose(delta, eps * np.sign(w[1] - w[0])[None, :].repeat(6, 0), atol=1e-12)

    def test_best_iterate_never_below_start(self):
        for case in range(100):
            rng = np.random.default_rng([case, 7])
            p = small_net(case)
            x = rng.normal(size=(8, 4))
            y = rng.integers(0, 3, 8)
            cfg = A.AttackConfig(float(rng.uniform(0.05, 1.0)), steps=int(rng.integers(1, 8)), init=A.ZERO)
            delta = A.pgd(p, x, y, cfg.epsilon, cfg)
            start = A.objective_value(p, x, y, nn.CE)
            assert np.all(A.objective_value(p, x + delta, y, nn.CE) >= start)
            assert np.all(np.abs(delta) <= cfg.epsilon + 1e-15)

    def test_kl_objective_starts_at_zero(self):
        p = small_net(2)
        x = np.random.default_rng(2).normal(size=(6, 4))
        clean = nn.forward(p, x)
        cfg = A.AttackConfig(0.2, objective=nn.KL, init=A.ZERO)
        delta = A.pgd(p, x, clean, 0.2, cfg)
        assert np.all(A.objective_value(p, x + delta, clean, nn.KL) >= 0)
        assert np.all(np.abs(delta) <= 0.2 + 1e-15)

    def test_per_example_radii(self):
        p = small_net(4)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(4, 4))
        radii = np.array([0.0, 0.1, 0.3, 0.6])
        delta = A.pgd(p, x, rng.integers(0, 3, 4), radii, A.AttackConfig(0.3), rng)
        np.testing.assert_array_equal(delta[0], 0.0)
        assert np.all(np.abs(delta).max(axis=1) <= radii + 1e-15)

    def test_step_scales_with_radius(self):
        # a single step from zero lands at min(step * r / eps, r) for a linear model
        w = np.array([[1.0, -2.0], [-1.0, 2.0]])
        p = nn.MlpParams((w,), (np.zeros(2),))
        x = np.zeros((2, 2))
        cfg = A.AttackConfig(0.4, steps=1, step_size=0.1, init=A.ZERO)
        delta = A.pgd(p, x, np.zeros(2, int), np.array([0.4, 0.2]), cfg)
        np.testing.assert_allclose(np.abs(delta), [[0.1, 0.1], [0.05, 0.05]])

    def test_seeded_random_start_reproducible(self):
        p = small_net(5)
        x = np.random.default_rng(5).normal(size=(3, 4))
        y = np.array([0, 1, 2])
        cfg = A.AttackConfig(0.2, seed=9)
        np.testing.assert_array_equal(A.pgd(p, x, y, 0.2, cfg), A.pgd(p, x, y, 0.2, cfg))
