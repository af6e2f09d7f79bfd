"""Meta gradients.

The task meta gradient is

    grad L_i(w) = (I - a H_0)(I - a H_1) ... (I - a H_{N-1}) g_N

with H_j the (support) Hessian at the j-th inner iterate and g_N the
(query) gradient at the last one. It is evaluated right to left as N
matrix-vector products: H_{N-1} acts first, H_0 last.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, FamilyError
from .inner import exact_path, inner_gd_finite, inner_sgd
from .streams import StreamRole
from .tasks import SamplingCase
from .utils import as_vector


@dataclass
class WorkCounter:
    """Sample-level oracle counts: a batch of size m costs m evaluations."""

    grad_evals: int = 0
    hess_evals: int = 0

    def add(self, grad_evals=0, hess_evals=0):
        self.grad_evals += int(grad_evals)
        self.hess_evals += int(hess_evals)
        return self

    def merge(self, other):
        return self.add(other.grad_evals, other.hess_evals)

    def __add__(self, other):
        return WorkCounter(self.grad_evals + other.grad_evals, self.hess_evals + other.hess_evals)


@dataclass(frozen=True, eq=False)
class MetaGradEstimate:
    value: np.ndarray
    task_index: int
    batch_sizes: tuple
    path: object
    work: WorkCounter = field(default_factory=WorkCounter)


def apply_hessian_factors(hessians, alpha, vector):
    result = np.array(vector, dtype=float, copy=True)
    for hessian in reversed(hessians):
        result = result - alpha * (hessian @ result)
    return result


def hessian_factor_product(hessians, alpha):
    """Explicit product (I - a H_0)...(I - a H_m); O(m d^3), for checks only."""
    dim = hessians[0].shape[0] if len(hessians) else 0
    product = np.eye(dim)
    for hessian in hessians:
        product = product @ (np.eye(dim) - alpha * hessian)
    return product


def _finite_or_raise(value, step, where):
    if not np.all(np.isfinite(value)):
        raise DivergenceError(step, where)
    return value


def exact_task_meta_grad(task, w, alpha, N):
    path = exact_path(task, w, alpha, N)
    hessians = [task.support_hess(path.iterates[j]) for j in range(N)]
    value = apply_hessian_factors(hessians, alpha, task.grad(path.end))
    return _finite_or_raise(value, N, "exact meta gradient")


def exact_meta_grad(dist, w, alpha, N):
    w = as_vector(w, dist.dim)
    return dist.expectation(lambda task: exact_task_meta_grad(task, w, alpha, N))


def meta_loss(dist, w, alpha, N):
    w = as_vector(w, dist.dim)
    return float(dist.expectation(lambda task: task.loss(exact_path(task, w, alpha, N).end)))


def per_task_meta_grads(dist, w, alpha, N):
    w = as_vector(w, dist.dim)
    return np.stack([exact_task_meta_grad(task, w, alpha, N) for task in dist.tasks])


def stoch_meta_grad_resample(task, w, alpha, N, S, D, T, rng_stream, task_index=0):
    """One draw of the resampling estimator.

    Streams below ``rng_stream``: ``(S, j)`` inner batches, ``(D, j)`` Hessian
    batches, ``(T,)`` the final gradient batch.
    """
    if task.case is not SamplingCase.RESAMPLING:
        raise FamilyError("stoch_meta_grad_resample needs a resampling task")
    if min(S, D, T) < 1:
        raise ValueError(f"batch sizes must be >= 1, got S={S}, D={D}, T={T}")
    path = inner_sgd(task, w, alpha, N, S, rng_stream, task_index=task_index)

    hessians = []
    for j in range(N):
        batch = task.draw_batch(rng_stream.child(StreamRole.D, j).generator(), D, task_index=task_index)
        hessians.append(task.stoch_hess(path.iterates[j], batch))
    final_batch = task.draw_batch(rng_stream.child(StreamRole.T).generator(), T, task_index=task_index)
    value = apply_hessian_factors(hessians, alpha, task.stoch_grad(path.end, final_batch))

    return MetaGradEstimate(
        value=_finite_or_raise(value, N, "meta gradient estimate"),
        task_index=int(task_index),
        batch_sizes=(int(S), int(D), int(T)),
        path=path,
        work=WorkCounter(grad_evals=N * S + T, hess_evals=N * D),
    )


def meta_grad_finite_sum(task, w, alpha, N, task_index=0):
    if task.case is not SamplingCase.FINITE_SUM:
        raise FamilyError("meta_grad_finite_sum needs a finite-sum task")
    path = inner_gd_finite(task, w, alpha, N)
    hessians = [task.support_hess(path.iterates[j]) for j in range(N)]
    value = apply_hessian_factors(hessians, alpha, task.grad(path.end))
    return MetaGradEstimate(
        value=_finite_or_raise(value, N, "meta gradient estimate"),
        task_index=int(task_index),
        batch_sizes=None,
        path=path,
        work=WorkCounter(
            grad_evals=N * task.support_size + task.query_size,
            hess_evals=N * task.support_size,
        ),
    )
