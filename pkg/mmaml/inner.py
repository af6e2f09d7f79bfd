from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from .errors import DivergenceError, FamilyError
from .streams import StreamRole
from .tasks import SamplingCase
from .utils import as_vector, frozen


# N-step inner loops: exact GD, SGD on resampled batches, full-gradient GD on a support set.


class InnerMode(str, Enum):
    EXACT_GD = "exact_gd"
    SGD = "sgd"
    FINITE_SUM_GD = "finite_sum_gd"


@dataclass(frozen=True, eq=False)
class InnerPath:
    iterates: tuple
    alpha: float
    mode: InnerMode
    batches: tuple = None

    @property
    def N(self):
        return len(self.iterates) - 1

    @property
    def start(self):
        return self.iterates[0]

    @property
    def end(self):
        return self.iterates[-1]

    def to_frame(self):
        stacked = np.stack(self.iterates)
        frame = pd.DataFrame(stacked, columns=[f"w{index}" for index in range(stacked.shape[1])])
        frame.insert(0, "j", np.arange(len(self.iterates)))
        frame["norm"] = np.linalg.norm(stacked, axis=1)
        return frame

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path


def _check_args(alpha, N):
    if N < 0:
        raise ValueError(f"N must be >= 0, got {N}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")


def _descend(w, alpha, N, gradient_at, where):
    iterates = [frozen(w)]
    if not np.all(np.isfinite(w)):
        raise DivergenceError(0, where)
    current = w
    for j in range(N):
        current = current - alpha * gradient_at(j, current)
        if not np.all(np.isfinite(current)):
            raise DivergenceError(j + 1, where)
        iterates.append(frozen(current))
    return tuple(iterates)


def inner_gd(task, w, alpha, N):
    _check_args(alpha, N)
    w = as_vector(w, task.dim)
    iterates = _descend(w, alpha, N, lambda j, current: task.grad(current), "inner GD path")
    return InnerPath(iterates=iterates, alpha=float(alpha), mode=InnerMode.EXACT_GD)


def inner_sgd(task, w, alpha, N, S, rng_stream, task_index=0):
    """SGD inner path; the batch of step j is drawn from ``rng_stream.child(S, j)``."""
    if task.case is not SamplingCase.RESAMPLING:
        raise FamilyError("inner_sgd needs a resampling task; use inner_gd_finite for finite-sum tasks")
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    _check_args(alpha, N)
    w = as_vector(w, task.dim)
    batches = []

    def gradient_at(j, current):
        generator = rng_stream.child(StreamRole.S, j).generator()
        batch = task.draw_batch(generator, S, task_index=task_index)
        batches.append(batch)
        return task.stoch_grad(current, batch)

    iterates = _descend(w, alpha, N, gradient_at, "inner SGD path")
    return InnerPath(iterates=iterates, alpha=float(alpha), mode=InnerMode.SGD, batches=tuple(batches))


def inner_gd_finite(task, w, alpha, N):
    if task.case is not SamplingCase.FINITE_SUM:
        raise FamilyError("inner_gd_finite needs a finite-sum task")
    _check_args(alpha, N)
    w = as_vector(w, task.dim)
    iterates = _descend(w, alpha, N, lambda j, current: task.support_grad(current), "inner support-set path")
    return InnerPath(iterates=iterates, alpha=float(alpha), mode=InnerMode.FINITE_SUM_GD)


def exact_path(task, w, alpha, N):
    """Noiseless path of the inner-loop loss: l_i for resampling tasks, l_{S_i} for finite-sum tasks."""
    if task.case is SamplingCase.FINITE_SUM:
        return inner_gd_finite(task, w, alpha, N)
    return inner_gd(task, w, alpha, N)
