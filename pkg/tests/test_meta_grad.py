import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmaml.errors import FamilyError
from mmaml.meta_grad import (
    WorkCounter,
    apply_hessian_factors,
    exact_meta_grad,
    exact_task_meta_grad,
    hessian_factor_product,
    meta_grad_finite_sum,
    meta_loss,
    per_task_meta_grads,
    stoch_meta_grad_resample,
)
from mmaml.streams import RngStream
from mmaml.tasks import QuadraticTask
from mmaml.theory import default_alpha
from mmaml.verifier import meta_grad_fd_error


def random_quadratic(seed, dim):
    generator = np.random.default_rng(seed)
    raw = generator.standard_normal((dim, dim))
    A = raw @ raw.T / dim
    A /= max(np.linalg.norm(A, 2), 1.0)
    return QuadraticTask(A=A, b=generator.standard_normal(dim))


class TestHessianFactors:
    def test_right_to_left_product_matches_explicit_product(self):
        generator = np.random.default_rng(1)
        hessians = [generator.standard_normal((3, 3)) for _ in range(4)]
        vector = generator.standard_normal(3)
        assert np.allclose(apply_hessian_factors(hessians, 0.1, vector),
                           hessian_factor_product(hessians, 0.1) @ vector, rtol=1e-12)

    def test_no_factors_is_identity(self):
        assert np.array_equal(apply_hessian_factors([], 0.3, np.array([1.0, 2.0])), [1.0, 2.0])


class TestExactMetaGrad:
    def test_one_dimensional_value(self):
        task = QuadraticTask(A=np.array([[2.0]]), b=np.zeros(1))
        value = exact_task_meta_grad(task, np.array([1.0]), 0.1, 2)
        # (1 - 0.2)^2 * (2 * 0.64)
        assert value.shape == (1,)
        assert float(value[0]) == pytest.approx(0.8192, rel=1e-12)

    @given(st.integers(min_value=0, max_value=10_000), st.sampled_from([2, 5, 10]), st.sampled_from([1, 3, 5, 10]))
    @settings(max_examples=30, deadline=None)
    def test_quadratic_closed_form(self, seed, dim, N):
        task = random_quadratic(seed, dim)
        alpha = default_alpha(N, task.gradient_lipschitz())
        w = np.random.default_rng(seed + 1).standard_normal(dim)
        factor = np.linalg.matrix_power(np.eye(dim) - alpha * task.A, 2 * N)
        expected = factor @ task.grad(w)
        assert np.allclose(exact_task_meta_grad(task, w, alpha, N), expected, rtol=1e-10, atol=1e-12)

    def test_zero_steps_is_plain_gradient(self, trig_family):
        task = trig_family.tasks[2]
        w = np.array([0.3, -0.1, 0.2])
        assert np.array_equal(exact_task_meta_grad(task, w, 0.05, 0), task.grad(w))

    def test_zero_stepsize_is_plain_gradient(self, trig_family):
        task = trig_family.tasks[2]
        w = np.array([0.3, -0.1, 0.2])
        assert np.allclose(exact_task_meta_grad(task, w, 0.0, 4), task.grad(w), rtol=0, atol=0)

    @pytest.mark.parametrize("N", [1, 3, 5])
    def test_trig_matches_finite_differences(self, trig_family, N):
        alpha = default_alpha(N, trig_family.profile.L)
        generator = np.random.default_rng(N)
        for task in trig_family.tasks:
            w = generator.uniform(-1.0, 1.0, size=3)
            assert meta_grad_fd_error(task, w, alpha, N) <= 1e-5

    def test_finite_sum_matches_finite_differences(self, mse_family):
        alpha = default_alpha(3, mse_family.profile.L)
        for task in mse_family.tasks:
            assert meta_grad_fd_error(task, np.array([0.2, -0.4, 0.1]), alpha, 3) <= 1e-8

    def test_family_meta_gradient_is_weighted_mean(self, trig_family):
        w = np.array([0.1, 0.2, 0.3])
        per_task = per_task_meta_grads(trig_family, w, 0.02, 2)
        assert np.allclose(exact_meta_grad(trig_family, w, 0.02, 2), trig_family.weights @ per_task, rtol=1e-13)

    def test_meta_loss_matches_gradient(self, trig_family):
        w = np.array([0.1, 0.2, 0.3])
        h = 1e-6
        step = np.array([h, 0.0, 0.0])
        fd = (meta_loss(trig_family, w + step, 0.02, 2) - meta_loss(trig_family, w - step, 0.02, 2)) / (2 * h)
        assert fd == pytest.approx(exact_meta_grad(trig_family, w, 0.02, 2)[0], abs=1e-7)


class TestResamplingEstimator:
    def test_noiseless_estimator_is_exact(self, noiseless_quadratic):
        task = noiseless_quadratic.tasks[0]
        w = np.array([0.5, -0.5, 0.2])
        estimate = stoch_meta_grad_resample(task, w, 0.04, 3, 2, 2, 2, RngStream(1))
        assert np.allclose(estimate.value, exact_task_meta_grad(task, w, 0.04, 3), rtol=1e-13)

    def test_work_is_counted_per_sample(self, quadratic_family):
        estimate = stoch_meta_grad_resample(quadratic_family.tasks[0], np.zeros(3), 0.04, 3, 5, 7, 11, RngStream(2))
        assert estimate.work == WorkCounter(grad_evals=3 * 5 + 11, hess_evals=3 * 7)
        assert estimate.batch_sizes == (5, 7, 11)

    def test_same_stream_same_estimate(self, quadratic_family):
        task = quadratic_family.tasks[3]
        first = stoch_meta_grad_resample(task, np.ones(3), 0.04, 2, 3, 3, 3, RngStream(5).slot(0))
        second = stoch_meta_grad_resample(task, np.ones(3), 0.04, 2, 3, 3, 3, RngStream(5).slot(0))
        assert np.array_equal(first.value, second.value)

    def test_finite_sum_task_rejected(self, mse_family):
        with pytest.raises(FamilyError):
            stoch_meta_grad_resample(mse_family.tasks[0], np.zeros(3), 0.04, 2, 1, 1, 1, RngStream(0))


class TestFiniteSumEstimator:
    def test_equals_exact_task_meta_gradient(self, mse_family):
        task = mse_family.tasks[1]
        w = np.array([0.3, 0.0, -0.3])
        estimate = meta_grad_finite_sum(task, w, 0.03, 4, task_index=1)
        assert np.array_equal(estimate.value, exact_task_meta_grad(task, w, 0.03, 4))
        assert estimate.work == WorkCounter(grad_evals=4 * 8 + 10, hess_evals=4 * 8)

    def test_resampling_task_rejected(self, trig_family):
        with pytest.raises(FamilyError):
            meta_grad_finite_sum(trig_family.tasks[0], np.zeros(3), 0.03, 2)


class TestWorkCounter:
    def test_merge_and_add(self):
        counter = WorkCounter(1, 2).merge(WorkCounter(3, 4))
        assert counter == WorkCounter(4, 6)
        assert counter + WorkCounter(1, 1) == WorkCounter(5, 7)
