import numpy as np
import pytest

from mmaml.errors import DivergenceError, FamilyError
from mmaml.inner import InnerMode, exact_path, inner_gd, inner_gd_finite, inner_sgd
from mmaml.streams import RngStream
from mmaml.tasks import QuadraticTask


class TestInnerGd:
    def test_one_dimensional_path_values(self):
        task = QuadraticTask(A=np.array([[2.0]]), b=np.zeros(1))
        path = inner_gd(task, np.array([1.0]), 0.1, 2)
        assert [float(iterate[0]) for iterate in path.iterates] == pytest.approx([1.0, 0.8, 0.64], rel=1e-12)

    def test_quadratic_path_matches_closed_form(self):
        task = QuadraticTask(A=np.diag([1.0, 0.5]), b=np.array([0.2, -0.1]))
        w = np.array([1.0, 1.0])
        path = inner_gd(task, w, 0.1, 4)
        step = np.eye(2) - 0.1 * task.A
        expected = w
        for _ in range(4):
            expected = step @ expected - 0.1 * task.b
        assert path.mode is InnerMode.EXACT_GD
        assert path.N == 4
        assert np.allclose(path.end, expected, rtol=1e-14)

    def test_zero_steps_returns_start(self):
        task = QuadraticTask(A=np.eye(2), b=np.ones(2))
        path = inner_gd(task, np.array([0.5, 0.5]), 0.1, 0)
        assert len(path.iterates) == 1
        assert np.array_equal(path.end, [0.5, 0.5])

    def test_zero_stepsize_keeps_every_iterate(self, trig_family):
        task = trig_family.tasks[0]
        path = inner_gd(task, np.ones(3), 0.0, 3)
        assert all(np.array_equal(iterate, np.ones(3)) for iterate in path.iterates)

    def test_iterates_are_read_only(self, trig_family):
        path = inner_gd(trig_family.tasks[0], np.zeros(3), 0.05, 2)
        with pytest.raises(ValueError):
            path.iterates[1][0] = 1.0

    def test_overflow_raises_divergence(self):
        task = QuadraticTask(A=np.eye(2), b=np.ones(2))
        with pytest.raises(DivergenceError) as info:
            with np.errstate(over="ignore", invalid="ignore"):
                inner_gd(task, np.ones(2), 1e200, 5)
        assert info.value.step >= 1

    def test_negative_arguments_rejected(self):
        task = QuadraticTask(A=np.eye(2), b=np.ones(2))
        with pytest.raises(ValueError):
            inner_gd(task, np.ones(2), -0.1, 2)
        with pytest.raises(ValueError):
            inner_gd(task, np.ones(2), 0.1, -1)

    def test_frame_dump(self, trig_family, tmp_path):
        path = inner_gd(trig_family.tasks[0], np.zeros(3), 0.05, 3)
        frame = path.to_frame()
        assert list(frame.columns) == ["j", "w0", "w1", "w2", "norm"]
        assert len(frame) == 4
        assert path.to_csv(tmp_path / "path.csv").exists()


class TestInnerSgd:
    def test_noiseless_sgd_equals_gd(self, noiseless_quadratic):
        task = noiseless_quadratic.tasks[0]
        w = np.array([0.3, -0.2, 0.1])
        sgd = inner_sgd(task, w, 0.05, 3, 4, RngStream(0))
        gd = inner_gd(task, w, 0.05, 3)
        assert all(np.array_equal(a, b) for a, b in zip(sgd.iterates, gd.iterates))

    def test_batches_come_from_step_streams(self, quadratic_family):
        task = quadratic_family.tasks[1]
        w = np.zeros(3)
        first = inner_sgd(task, w, 0.05, 3, 5, RngStream(4).slot(2))
        second = inner_sgd(task, w, 0.05, 3, 5, RngStream(4).slot(2))
        other = inner_sgd(task, w, 0.05, 3, 5, RngStream(4).slot(3))
        assert len(first.batches) == 3
        assert np.array_equal(first.end, second.end)
        assert not np.array_equal(first.end, other.end)

    def test_finite_sum_task_rejected(self, mse_family):
        with pytest.raises(FamilyError):
            inner_sgd(mse_family.tasks[0], np.zeros(3), 0.05, 2, 3, RngStream(0))

    def test_batch_size_must_be_positive(self, quadratic_family):
        with pytest.raises(ValueError):
            inner_sgd(quadratic_family.tasks[0], np.zeros(3), 0.05, 2, 0, RngStream(0))


class TestFiniteSumPath:
    def test_uses_support_gradient(self, mse_family):
        task = mse_family.tasks[0]
        w = np.array([0.1, 0.2, -0.3])
        path = inner_gd_finite(task, w, 0.05, 1)
        assert np.allclose(path.end, w - 0.05 * task.support_grad(w), rtol=1e-14)
        assert path.mode is InnerMode.FINITE_SUM_GD

    def test_exact_path_dispatches_on_case(self, mse_family, trig_family):
        assert exact_path(mse_family.tasks[0], np.zeros(3), 0.05, 2).mode is InnerMode.FINITE_SUM_GD
        assert exact_path(trig_family.tasks[0], np.zeros(3), 0.05, 2).mode is InnerMode.EXACT_GD

    def test_resampling_task_rejected(self, trig_family):
        with pytest.raises(FamilyError):
            inner_gd_finite(trig_family.tasks[0], np.zeros(3), 0.05, 2)
