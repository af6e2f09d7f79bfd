import pytest

from mmaml.workers import run_jobs


class TestRunJobs:
    def test_inline_results_keep_order(self):
        assert run_jobs([lambda value=value: value * value for value in range(5)]) == [0, 1, 4, 9, 16]

    def test_pool_results_keep_order(self):
        jobs = [lambda value=value: value + 1 for value in range(20)]
        assert run_jobs(jobs, workers=4) == list(range(1, 21))

    def test_lowest_failing_index_is_raised(self):
        def fail(message):
            raise RuntimeError(message)

        jobs = [lambda: 1, lambda: fail("second"), lambda: fail("third")]
        with pytest.raises(RuntimeError, match="second"):
            run_jobs(jobs, workers=3)

    def test_inline_failure_propagates(self):
        with pytest.raises(ZeroDivisionError):
            run_jobs([lambda: 1 / 0], workers=1)

    def test_empty_job_list(self):
        assert run_jobs([], workers=4) == []
