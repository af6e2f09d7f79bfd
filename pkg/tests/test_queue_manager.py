import pandas as pd
import pytest

from mmaml.config import SWEEP_RESULT_COLUMNS
from mmaml.errors import ConfigError
from mmaml.queue_manager import SweepQueue

RESULT = {
    "final_grad_norm": 0.1,
    "zeta_grad_norm": 0.2,
    "theorem_rhs": 3.0,
    "grad_evals_per_iter": 40,
    "hess_evals_per_iter": 30,
    "diverged": False,
}


class TestSweepQueue:
    def test_cartesian_product_last_axis_fastest(self):
        queue = SweepQueue.from_axes({"N": (1, 2), "S": (5, 10)})
        assert queue.axes == ("S", "N")
        assert [item["point"] for item in queue.get_all()] == [
            {"S": 5, "N": 1}, {"S": 5, "N": 2}, {"S": 10, "N": 1}, {"S": 10, "N": 2},
        ]
        assert queue.count_status("pending") == 4
        assert len(queue) == 4

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            SweepQueue.from_axes({})
        with pytest.raises(ConfigError):
            SweepQueue.from_axes({"N": ()})

    def test_unknown_axis_rejected(self):
        with pytest.raises(ConfigError, match="C_beta"):
            SweepQueue.from_axes({"C_beta": (1.0,)})

    def test_out_of_range_result_ignored(self):
        queue = SweepQueue.from_axes({"B": (1, 2)})
        assert not queue.set_result(5, RESULT)
        assert not queue.set_result(-1, RESULT)
        assert queue.count_status("pending") == 2

    def test_results_set_status(self):
        queue = SweepQueue.from_axes({"B": (1, 2)})
        queue.set_result(0, RESULT)
        queue.set_result(1, dict(RESULT, diverged=True))
        assert queue.count_status("finished") == 1
        assert queue.count_status("diverged") == 1
        assert queue.count_status("pending") == 0

    def test_frame_and_csv(self, tmp_path):
        queue = SweepQueue.from_axes({"K": (10,), "alpha": (0.01, 0.02)})
        queue.set_result(0, RESULT)
        frame = queue.to_frame()
        assert list(frame.columns) == ["K", "alpha"] + SWEEP_RESULT_COLUMNS
        assert frame.loc[0, "grad_evals_per_iter"] == 40
        assert frame["final_grad_norm"].isna().iloc[1]
        loaded = pd.read_csv(queue.to_csv(tmp_path / "sweep.csv"))
        assert list(loaded["alpha"]) == [0.01, 0.02]
