from itertools import product

import pandas as pd

from .config import SWEEP_AXES, SWEEP_RESULT_COLUMNS
from .errors import ConfigError


class SweepQueue:
    """Grid points of a sweep with their status and result row."""

    def __init__(self, axes=()):
        self.axes = tuple(axes)
        self._items = []

    @classmethod
    def from_axes(cls, axes):
        """One item per point of the cartesian product; the last axis varies fastest."""
        unknown = [axis for axis in axes if axis not in SWEEP_AXES]
        if unknown:
            raise ConfigError(f"unknown sweep axes: {', '.join(unknown)}")
        names = [axis for axis in SWEEP_AXES if axes.get(axis)]
        if not names:
            raise ConfigError("sweep grid is empty: set at least one sweep/<axis> list")
        queue = cls(names)
        for values in product(*(axes[name] for name in names)):
            queue.add(dict(zip(names, values)))
        return queue

    def add(self, point):
        item = {
            "point": dict(point),
            "status": "pending",
            "result": None,
        }
        self._items.append(item)
        return len(self._items) - 1

    def get_all(self):
        return self._items

    def count_status(self, status):
        return sum(1 for item in self._items if item["status"] == status)

    def __len__(self):
        return len(self._items)

    def set_result(self, index, result):
        if index < 0 or index >= len(self._items):
            return False
        self._items[index]["result"] = dict(result)
        self._items[index]["status"] = "diverged" if result.get("diverged") else "finished"
        return True

    def to_frame(self):
        rows = []
        for item in self._items:
            result = item["result"] or {}
            rows.append([item["point"][axis] for axis in self.axes]
                        + [result.get(column) for column in SWEEP_RESULT_COLUMNS])
        return pd.DataFrame(rows, columns=list(self.axes) + SWEEP_RESULT_COLUMNS)

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path
