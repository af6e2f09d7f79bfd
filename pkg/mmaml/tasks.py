"""Synthetic task families with closed-form oracles.

Three families are provided, each with analytically known smoothness
constants over a ball of radius R:

* quadratic: ``l_i(w) = 1/2 w^T A_i w + b_i^T w`` with per-sample noise
  ``1/2 w^T E w + eps^T w`` (E symmetric, zero mean), rho = 0;
* trig: ``l_i(w) = c_i (1 - cos(a_i^T w + phi_i)) + lam/2 |w|^2`` with the same
  additive per-sample noise, rho > 0;
* finite-sum MSE: a linear model fitted on fixed support and query sets.

A family is a ``TaskDistribution``; its ``SmoothnessProfile`` carries the
constants every bound is evaluated with.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from .errors import DimensionMismatchError, FamilyError
from .logger import logger
from .streams import RngStream
from .utils import as_vector, frozen, sample_in_ball, spectral_norm

WEIGHT_TOLERANCE = 1e-12


class TaskFamily(str, Enum):
    QUADRATIC = "quadratic"
    TRIG = "trig"
    FINITE_SUM_MSE = "mse"


class SamplingCase(str, Enum):
    RESAMPLING = "resampling"
    FINITE_SUM = "finite_sum"


@dataclass(frozen=True)
class NoiseModel:
    """Per-sample noise ``l(w; tau) = l(w) + 1/2 w^T E w + eps^T w``.

    ``eps`` has iid N(0, grad_std^2) coordinates; ``E = (G + G^T)/2`` with iid
    N(0, hess_std^2) entries in G, so E||E||_F^2 = hess_std^2 d(d+1)/2 and
    E||E w||^2 = hess_std^2 (d+1)/2 ||w||^2.
    """

    grad_std: float = 0.0
    hess_std: float = 0.0

    def __post_init__(self):
        if self.grad_std < 0 or self.hess_std < 0:
            raise ValueError("noise standard deviations must be nonnegative")

    @classmethod
    def calibrated(cls, dim, sigma_g, sigma_H, radius):
        """Noise meeting Assumption-3 bounds sigma_g, sigma_H on the ball of the given radius."""
        if sigma_g < 0 or sigma_H < 0:
            raise ValueError("variance bounds must be nonnegative")
        hess_var_total = sigma_H ** 2
        hess_std = math.sqrt(2.0 * hess_var_total / (dim * (dim + 1)))
        # E||E w||^2 at |w| = R
        hess_part = hess_var_total * radius ** 2 / dim
        eps_budget = sigma_g ** 2 - hess_part
        if eps_budget < -1e-12 * max(sigma_g ** 2, 1.0):
            raise ValueError(
                f"sigma_H={sigma_H} on radius {radius} already exceeds sigma_g={sigma_g}: "
                "need sigma_H^2 R^2 / d <= sigma_g^2"
            )
        grad_std = math.sqrt(max(eps_budget, 0.0) / dim)
        return cls(grad_std=grad_std, hess_std=hess_std)

    @property
    def is_zero(self):
        return self.grad_std == 0.0 and self.hess_std == 0.0

    def hessian_variance(self, dim):
        return self.hess_std ** 2 * dim * (dim + 1) / 2.0

    def gradient_variance(self, dim, radius):
        return dim * self.grad_std ** 2 + self.hess_std ** 2 * (dim + 1) / 2.0 * radius ** 2

    def draw(self, generator, size, dim):
        if self.grad_std > 0:
            grad_noise = generator.normal(0.0, self.grad_std, size=(size, dim))
        else:
            grad_noise = np.zeros((size, dim))
        if self.hess_std > 0:
            raw = generator.normal(0.0, self.hess_std, size=(size, dim, dim))
            hess_noise = 0.5 * (raw + np.swapaxes(raw, 1, 2))
        else:
            hess_noise = np.broadcast_to(np.zeros((dim, dim)), (size, dim, dim))
        return grad_noise, hess_noise


@dataclass(frozen=True, eq=False)
class SampleBatch:
    task_index: int
    grad_noise: np.ndarray
    hess_noise: np.ndarray

    def __post_init__(self):
        if self.grad_noise.shape[0] != self.hess_noise.shape[0]:
            raise ValueError("gradient and Hessian noise must hold the same number of samples")
        if self.grad_noise.shape[0] < 1:
            raise ValueError("a batch holds at least one sample")

    @property
    def size(self):
        return self.grad_noise.shape[0]

    @property
    def dim(self):
        return self.grad_noise.shape[1]


@dataclass(frozen=True)
class SmoothnessProfile:
    L: float
    rho: float
    sigma: float
    sigma_g: float = 0.0
    sigma_H: float = 0.0
    b: float = 0.0
    b_tilde: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"profile field {name} must be finite and nonnegative, got {value}")

    def to_document(self):
        return {name: float(value) for name, value in asdict(self).items()}


class Task(ABC):
    """One task: the evaluation loss l_i and the inner-loop loss.

    For resampling tasks both are l_i. Finite-sum tasks adapt on the support
    loss l_{S_i} and are evaluated on the query loss l_{T_i}; ``loss``,
    ``grad`` and ``hess`` always refer to the evaluation loss.
    """

    family = None
    case = SamplingCase.RESAMPLING

    @property
    @abstractmethod
    def dim(self):
        ...

    @abstractmethod
    def loss(self, w):
        ...

    @abstractmethod
    def grad(self, w):
        ...

    @abstractmethod
    def hess(self, w):
        ...

    def support_loss(self, w):
        return self.loss(w)

    def support_grad(self, w):
        return self.grad(w)

    def support_hess(self, w):
        return self.hess(w)

    @abstractmethod
    def gradient_lipschitz(self):
        ...

    @abstractmethod
    def hessian_lipschitz(self):
        ...

    @abstractmethod
    def gradient_decomposition(self):
        """(A, b, M) with grad(w) = A w + b + g(w) and |g(w)| <= M for every w."""

    @abstractmethod
    def to_document(self):
        ...

    @property
    def noise(self):
        return NoiseModel()

    def quadratic_views(self):
        """(support, query) QuadraticTask views when both losses are quadratic, else None."""
        return None

    @property
    def constant_hessian(self):
        return self.hessian_lipschitz() == 0.0

    def draw_batch(self, generator, size, task_index=0):
        if self.case is not SamplingCase.RESAMPLING:
            raise FamilyError("finite-sum tasks have fixed sample sets; nothing to draw")
        if size < 1:
            raise ValueError(f"batch size must be >= 1, got {size}")
        grad_noise, hess_noise = self.noise.draw(generator, size, self.dim)
        return SampleBatch(task_index=task_index, grad_noise=grad_noise, hess_noise=hess_noise)

    def stoch_grad(self, w, batch):
        self._check_batch(batch)
        mean_hess_noise = batch.hess_noise.mean(axis=0)
        return self.grad(w) + mean_hess_noise @ w + batch.grad_noise.mean(axis=0)

    def stoch_hess(self, w, batch):
        self._check_batch(batch)
        return self.hess(w) + batch.hess_noise.mean(axis=0)

    def _check_batch(self, batch):
        if self.case is not SamplingCase.RESAMPLING:
            raise FamilyError("stochastic oracles exist only for resampling tasks")
        if batch.dim != self.dim:
            raise DimensionMismatchError(self.dim, batch.dim)


@dataclass(frozen=True, eq=False)
class QuadraticTask(Task):
    A: np.ndarray
    b: np.ndarray
    offset: float = 0.0
    noise_model: NoiseModel = field(default_factory=NoiseModel)

    family = TaskFamily.QUADRATIC

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = as_vector(self.b)
        if A.shape != (b.shape[0], b.shape[0]):
            raise DimensionMismatchError((b.shape[0], b.shape[0]), A.shape)
        object.__setattr__(self, "A", frozen(0.5 * (A + A.T)))
        object.__setattr__(self, "b", frozen(b))

    @property
    def dim(self):
        return self.b.shape[0]

    @property
    def noise(self):
        return self.noise_model

    def loss(self, w):
        return float(0.5 * w @ self.A @ w + self.b @ w + self.offset)

    def grad(self, w):
        return self.A @ w + self.b

    def hess(self, w):
        return self.A

    def gradient_lipschitz(self):
        return spectral_norm(self.A)

    def hessian_lipschitz(self):
        return 0.0

    def gradient_decomposition(self):
        return self.A, self.b, 0.0

    def quadratic_views(self):
        return self, self

    def to_document(self):
        return {
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "offset": float(self.offset),
            "noise": asdict(self.noise_model),
        }

    @classmethod
    def from_document(cls, doc):
        return cls(
            A=np.asarray(doc["A"], dtype=float),
            b=np.asarray(doc["b"], dtype=float),
            offset=float(doc.get("offset", 0.0)),
            noise_model=NoiseModel(**doc.get("noise", {})),
        )


@dataclass(frozen=True, eq=False)
class TrigTask(Task):
    c: float
    a: np.ndarray
    phi: float
    lam: float = 0.0
    noise_model: NoiseModel = field(default_factory=NoiseModel)

    family = TaskFamily.TRIG

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")
        object.__setattr__(self, "a", frozen(as_vector(self.a)))

    @property
    def dim(self):
        return self.a.shape[0]

    @property
    def noise(self):
        return self.noise_model

    def _phase(self, w):
        return float(self.a @ w + self.phi)

    def loss(self, w):
        return float(self.c * (1.0 - math.cos(self._phase(w))) + 0.5 * self.lam * (w @ w))

    def grad(self, w):
        return self.c * math.sin(self._phase(w)) * self.a + self.lam * w

    def hess(self, w):
        return self.c * math.cos(self._phase(w)) * np.outer(self.a, self.a) + self.lam * np.eye(self.dim)

    def gradient_lipschitz(self):
        return abs(self.c) * float(self.a @ self.a) + self.lam

    def hessian_lipschitz(self):
        return abs(self.c) * float(np.linalg.norm(self.a)) ** 3

    def gradient_decomposition(self):
        return self.lam * np.eye(self.dim), np.zeros(self.dim), abs(self.c) * float(np.linalg.norm(self.a))

    def to_document(self):
        return {
            "c": float(self.c),
            "a": self.a.tolist(),
            "phi": float(self.phi),
            "lam": float(self.lam),
            "noise": asdict(self.noise_model),
        }

    @classmethod
    def from_document(cls, doc):
        return cls(
            c=float(doc["c"]),
            a=np.asarray(doc["a"], dtype=float),
            phi=float(doc["phi"]),
            lam=float(doc.get("lam", 0.0)),
            noise_model=NoiseModel(**doc.get("noise", {})),
        )


def _mse_quadratic(x, y):
    # (1/n) sum (y - w^T x)^2 = 1/2 w^T A w + b^T w + c
    n = x.shape[0]
    return QuadraticTask(A=2.0 * x.T @ x / n, b=-2.0 * x.T @ y / n, offset=float(y @ y / n))


@dataclass(frozen=True, eq=False)
class MseTask(Task):
    x_support: np.ndarray
    y_support: np.ndarray
    x_query: np.ndarray
    y_query: np.ndarray

    family = TaskFamily.FINITE_SUM_MSE
    case = SamplingCase.FINITE_SUM

    def __post_init__(self):
        for prefix in ("support", "query"):
            x = np.atleast_2d(np.asarray(getattr(self, f"x_{prefix}"), dtype=float))
            y = as_vector(getattr(self, f"y_{prefix}"))
            if x.shape[0] == 0:
                raise ValueError(f"{prefix} set must not be empty")
            if x.shape[0] != y.shape[0]:
                raise DimensionMismatchError(x.shape[0], y.shape[0])
            object.__setattr__(self, f"x_{prefix}", frozen(x))
            object.__setattr__(self, f"y_{prefix}", frozen(y))
        if self.x_support.shape[1] != self.x_query.shape[1]:
            raise DimensionMismatchError(self.x_support.shape[1], self.x_query.shape[1])
        object.__setattr__(self, "_support", _mse_quadratic(self.x_support, self.y_support))
        object.__setattr__(self, "_query", _mse_quadratic(self.x_query, self.y_query))

    @property
    def dim(self):
        return self.x_support.shape[1]

    @property
    def support_size(self):
        return self.x_support.shape[0]

    @property
    def query_size(self):
        return self.x_query.shape[0]

    @staticmethod
    def _mse(x, y, w):
        residual = y - x @ w
        return float(residual @ residual / x.shape[0])

    @staticmethod
    def _mse_grad(x, y, w):
        return -2.0 * x.T @ (y - x @ w) / x.shape[0]

    def loss(self, w):
        return self._mse(self.x_query, self.y_query, w)

    def grad(self, w):
        return self._mse_grad(self.x_query, self.y_query, w)

    def hess(self, w):
        return self._query.A

    def support_loss(self, w):
        return self._mse(self.x_support, self.y_support, w)

    def support_grad(self, w):
        return self._mse_grad(self.x_support, self.y_support, w)

    def support_hess(self, w):
        return self._support.A

    def quadratic_views(self):
        return self._support, self._query

    def gradient_lipschitz(self):
        return max(spectral_norm(self._support.A), spectral_norm(self._query.A))

    def hessian_lipschitz(self):
        return 0.0

    def gradient_decomposition(self):
        return self._query.A, self._query.b, 0.0

    def gap_bound(self, radius):
        """max over |w| <= radius of |grad l_S(w) - grad l_T(w)|, bounded by the triangle inequality."""
        gram_gap = spectral_norm(self._support.A - self._query.A)
        linear_gap = float(np.linalg.norm(self._support.b - self._query.b))
        return gram_gap * radius + linear_gap

    def to_document(self):
        return {
            "x_support": self.x_support.tolist(),
            "y_support": self.y_support.tolist(),
            "x_query": self.x_query.tolist(),
            "y_query": self.y_query.tolist(),
        }

    @classmethod
    def from_document(cls, doc):
        return cls(
            x_support=np.asarray(doc["x_support"], dtype=float),
            y_support=np.asarray(doc["y_support"], dtype=float),
            x_query=np.asarray(doc["x_query"], dtype=float),
            y_query=np.asarray(doc["y_query"], dtype=float),
        )


TASK_TYPES = {
    TaskFamily.QUADRATIC: QuadraticTask,
    TaskFamily.TRIG: TrigTask,
    TaskFamily.FINITE_SUM_MSE: MseTask,
}


def compute_profile(tasks, weights, radius, L=None, rho=None):
    """Smoothness profile of a finite family, certified on the ball of the given radius.

    sigma is the Minkowski bound on sqrt(E_i |grad l_i(w) - grad l(w)|^2) built
    from ``gradient_decomposition``; it dominates the weighted spread at every
    w in the ball.
    """
    weights = np.asarray(weights, dtype=float)
    dim = tasks[0].dim
    if L is None:
        L = max(task.gradient_lipschitz() for task in tasks)
    if rho is None:
        rho = max(task.hessian_lipschitz() for task in tasks)

    parts = [task.gradient_decomposition() for task in tasks]
    mats = np.stack([part[0] for part in parts])
    vecs = np.stack([part[1] for part in parts])
    caps = np.array([part[2] for part in parts])
    mat_mean = np.tensordot(weights, mats, axes=1)
    vec_mean = weights @ vecs
    mat_spread = math.sqrt(sum(p * spectral_norm(m - mat_mean) ** 2 for p, m in zip(weights, mats)))
    vec_spread = math.sqrt(float(weights @ np.sum((vecs - vec_mean) ** 2, axis=1)))
    cap_spread = math.sqrt(float(weights @ caps ** 2))
    sigma = mat_spread * radius + vec_spread + cap_spread

    sigma_g = max(math.sqrt(task.noise.gradient_variance(dim, radius)) for task in tasks)
    sigma_H = max(math.sqrt(task.noise.hessian_variance(dim)) for task in tasks)

    b = b_tilde = 0.0
    if tasks[0].case is SamplingCase.FINITE_SUM:
        gaps = np.array([task.gap_bound(radius) for task in tasks])
        b = float(weights @ gaps)
        b_tilde = float(weights @ gaps ** 2)

    return SmoothnessProfile(
        L=float(L), rho=float(rho), sigma=float(sigma),
        sigma_g=float(sigma_g), sigma_H=float(sigma_H), b=b, b_tilde=b_tilde,
    )


@dataclass(frozen=True, eq=False)
class TaskDistribution:
    tasks: tuple
    weights: np.ndarray
    radius: float
    profile: SmoothnessProfile
    family: TaskFamily
    seed: int = None

    def __post_init__(self):
        tasks = tuple(self.tasks)
        if not tasks:
            raise ValueError("a task distribution needs at least one task")
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (len(tasks),):
            raise ValueError(f"expected {len(tasks)} weights, got shape {weights.shape}")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError("weights must be nonnegative and sum to 1")
        dims = {task.dim for task in tasks}
        if len(dims) != 1:
            raise DimensionMismatchError(tasks[0].dim, sorted(dims))
        if len({task.case for task in tasks}) != 1:
            raise FamilyError("tasks of one distribution must share the sampling case")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "tasks", tasks)
        object.__setattr__(self, "weights", frozen(weights))
        object.__setattr__(self, "family", TaskFamily(self.family))

    @classmethod
    def from_tasks(cls, tasks, radius, weights=None, seed=None, L=None, rho=None):
        tasks = tuple(tasks)
        if weights is None:
            weights = np.full(len(tasks), 1.0 / len(tasks))
        profile = compute_profile(tasks, weights, radius, L=L, rho=rho)
        return cls(tasks=tasks, weights=weights, radius=float(radius), profile=profile,
                   family=tasks[0].family, seed=seed)

    @property
    def case(self):
        return self.tasks[0].case

    @property
    def dim(self):
        return self.tasks[0].dim

    def __len__(self):
        return len(self.tasks)

    def sample_indices(self, generator, size):
        return generator.choice(len(self.tasks), size=size, replace=True, p=self.weights)

    def expectation(self, fn):
        """Exact E_i fn(task_i) over the finite family, accumulated in task order."""
        total = None
        for weight, task in zip(self.weights, self.tasks):
            value = weight * np.asarray(fn(task), dtype=float)
            total = value if total is None else total + value
        return total

    def gradient_spread(self, w):
        """E_i |grad l_i(w) - grad l(w)|^2 at one point (Assumption 2 / 5 left side)."""
        w = as_vector(w, self.dim)
        grads = np.stack([task.grad(w) for task in self.tasks])
        mean = self.weights @ grads
        return float(self.weights @ np.sum((grads - mean) ** 2, axis=1))

    def contains(self, w, slack=1e-12):
        return float(np.linalg.norm(w)) <= self.radius * (1.0 + slack)

    def to_document(self):
        return {
            "family": self.family.value,
            "case": self.case.value,
            "d": int(self.dim),
            "seed": None if self.seed is None else int(self.seed),
            "radius": float(self.radius),
            "weights": self.weights.tolist(),
            "profile": self.profile.to_document(),
            "tasks": [task.to_document() for task in self.tasks],
        }

    @classmethod
    def from_document(cls, doc):
        family = TaskFamily(doc["family"])
        task_type = TASK_TYPES[family]
        tasks = tuple(task_type.from_document(entry) for entry in doc["tasks"])
        dist = cls(
            tasks=tasks,
            weights=np.asarray(doc["weights"], dtype=float),
            radius=float(doc["radius"]),
            profile=SmoothnessProfile(**doc["profile"]),
            family=family,
            seed=doc.get("seed"),
        )
        if int(doc.get("d", dist.dim)) != dist.dim:
            raise DimensionMismatchError(int(doc["d"]), dist.dim)
        return dist


# ---------------------------------------------------------------------------
# Oracle functions
# ---------------------------------------------------------------------------

def loss(task, w):
    return task.loss(as_vector(w, task.dim))


def grad(task, w):
    return task.grad(as_vector(w, task.dim))


def hess(task, w):
    return task.hess(as_vector(w, task.dim))


def stoch_grad(task, w, batch):
    return task.stoch_grad(as_vector(w, task.dim), batch)


def stoch_hess(task, w, batch):
    return task.stoch_hess(as_vector(w, task.dim), batch)


# ---------------------------------------------------------------------------
# Family constructors
# ---------------------------------------------------------------------------

def _random_orthogonal(generator, dim):
    q, r = np.linalg.qr(generator.standard_normal((dim, dim)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def _random_symmetric(generator, dim):
    raw = generator.standard_normal((dim, dim))
    return 0.5 * (raw + raw.T)


def make_quadratic_family(d, num_tasks, L_target, sigma, sigma_g, sigma_H, R, seed):
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if num_tasks < 1:
        raise ValueError(f"need at least one task, got {num_tasks}")
    if L_target <= 0 or R <= 0:
        raise ValueError("L_target and R must be positive")
    if min(sigma, sigma_g, sigma_H) < 0:
        raise ValueError("variances must be nonnegative")

    generator = RngStream(seed).generator()
    noise = NoiseModel.calibrated(d, sigma_g, sigma_H, R)
    weights = np.full(num_tasks, 1.0 / num_tasks)

    # base spectrum in [L/4, 3L/4]; deviations of spectral norm <= L/8 keep every A_i in [L/8, 7L/8]
    basis = _random_orthogonal(generator, d)
    base_A = basis @ np.diag(generator.uniform(0.25 * L_target, 0.75 * L_target, size=d)) @ basis.T
    direction = generator.standard_normal(d)
    base_b = direction / max(np.linalg.norm(direction), 1e-300) * (L_target * R / 32.0)

    deviations = np.stack([_random_symmetric(generator, d) for _ in range(num_tasks)])
    deviations -= np.tensordot(weights, deviations, axes=1)
    offsets = generator.standard_normal((num_tasks, d))
    offsets -= weights @ offsets

    max_dev = max(spectral_norm(dev) for dev in deviations)
    rms_dev = math.sqrt(sum(p * spectral_norm(dev) ** 2 for p, dev in zip(weights, deviations)))
    scale_A = 0.0
    if max_dev > 0 and sigma > 0:
        scale_A = min(0.125 * L_target / max_dev, 0.5 * sigma / (R * rms_dev))
    used = scale_A * rms_dev * R
    rms_off = math.sqrt(float(weights @ np.sum(offsets ** 2, axis=1)))
    scale_b = (sigma - used) / rms_off if rms_off > 0 and sigma > 0 else 0.0

    tasks = tuple(
        QuadraticTask(A=base_A + scale_A * dev, b=base_b + scale_b * off, noise_model=noise)
        for dev, off in zip(deviations, offsets)
    )
    dist = TaskDistribution.from_tasks(tasks, radius=R, weights=weights, seed=seed)
    logger.info(
        "Built quadratic family: d=%s tasks=%s L=%.6g sigma=%.6g sigma_g=%.6g sigma_H=%.6g",
        d, num_tasks, dist.profile.L, dist.profile.sigma, dist.profile.sigma_g, dist.profile.sigma_H,
    )
    return dist


def make_trig_family(d, num_tasks, c_max, a_max, lam, R, sigma_g, sigma_H, seed):
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if num_tasks < 1:
        raise ValueError(f"need at least one task, got {num_tasks}")
    if c_max <= 0 or a_max <= 0:
        raise ValueError("c_max and a_max must be positive")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if R <= 0:
        raise ValueError("R must be positive")

    generator = RngStream(seed).generator()
    noise = NoiseModel.calibrated(d, sigma_g, sigma_H, R)
    tasks = []
    for _ in range(num_tasks):
        direction = generator.standard_normal(d)
        direction /= max(np.linalg.norm(direction), 1e-300)
        tasks.append(TrigTask(
            c=float(generator.uniform(0.5 * c_max, c_max)),
            a=direction * a_max * generator.uniform(0.5, 1.0),
            phi=float(generator.uniform(0.0, 2.0 * math.pi)),
            lam=float(lam),
            noise_model=noise,
        ))
    dist = TaskDistribution.from_tasks(
        tasks, radius=R, seed=seed,
        L=c_max * a_max ** 2 + lam,
        rho=c_max * a_max ** 3,
    )
    logger.info(
        "Built trig family: d=%s tasks=%s L=%.6g rho=%.6g sigma=%.6g",
        d, num_tasks, dist.profile.L, dist.profile.rho, dist.profile.sigma,
    )
    return dist


def make_finite_sum_mse(d, num_tasks, support_size, query_size, noise_std, R, seed):
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if num_tasks < 1:
        raise ValueError(f"need at least one task, got {num_tasks}")
    if support_size < 1 or query_size < 1:
        raise ValueError("support and query sets must not be empty")
    if noise_std < 0 or R <= 0:
        raise ValueError("noise_std must be nonnegative and R positive")

    root = RngStream(seed)
    tasks = []
    for index in range(num_tasks):
        # per-task streams so the query set and target do not move when support_size changes
        theta = root.child(index, 0).generator().standard_normal(d) * (0.5 * R / math.sqrt(d))
        sets = []
        for role, size in ((1, support_size), (2, query_size)):
            generator = root.child(index, role).generator()
            x = generator.standard_normal((size, d))
            y = x @ theta + noise_std * generator.standard_normal(size)
            sets.append((x, y))
        (xs, ys), (xq, yq) = sets
        tasks.append(MseTask(x_support=xs, y_support=ys, x_query=xq, y_query=yq))
    dist = TaskDistribution.from_tasks(tasks, radius=R, seed=seed)
    logger.info(
        "Built finite-sum MSE family: d=%s tasks=%s |S|=%s |T|=%s L=%.6g b=%.6g",
        d, num_tasks, support_size, query_size, dist.profile.L, dist.profile.b,
    )
    return dist


def sample_gradient_spread(dist, points, seed=0):
    """Largest E_i |grad l_i(w) - grad l(w)|^2 over uniform points in the ball."""
    generator = RngStream(seed).generator()
    return max(dist.gradient_spread(sample_in_ball(generator, dist.dim, dist.radius)) for _ in range(points))


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------

def save_family(dist, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        yaml.safe_dump(dist.to_document(), handle, sort_keys=False, default_flow_style=None, width=120)
    logger.info("Saved %s family (%s tasks) to %s", dist.family.value, len(dist), path)
    return path


def load_family(path):
    with open(path, "r", encoding="utf-8") as handle:
        doc = yaml.safe_load(handle)
    if not isinstance(doc, dict) or "tasks" not in doc:
        raise ValueError(f"{path} is not a task family document")
    return TaskDistribution.from_document(doc)
