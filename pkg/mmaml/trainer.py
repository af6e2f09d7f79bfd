"""Outer loops of multi-step MAML for the resampling and finite-sum cases."""

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from scipy.optimize import minimize

from .config import METRICS_COLUMNS, TIMING_COLUMNS, ZETA_DRAWS
from .errors import ConfigError, DivergenceError, FamilyError, StepsizeError
from .logger import logger
from .meta_grad import (
    WorkCounter,
    exact_meta_grad,
    meta_grad_finite_sum,
    meta_loss,
    stoch_meta_grad_resample,
)
from .streams import RngStream, StreamRole
from .tasks import SamplingCase
from .theory import (
    check_inner_stepsize,
    constants_for,
    hat_L_finite,
    hat_L_resample,
    meta_stepsize,
    smoothness_constants,
    theorem_rhs,
)
from .utils import as_vector, ensure_dir, sample_in_ball
from .workers import run_jobs


@dataclass(frozen=True)
class RunConfig:
    case: SamplingCase
    N: int
    K: int
    B: int
    alpha: float
    C_beta: float
    seed: int
    S: int = 1
    D: int = 1
    T: int = 1
    Bprime: int = 1
    DL: int = 1
    record_exact_grad: bool = True
    allow_unsafe_alpha: bool = False
    w0: tuple = None
    init_radius_fraction: float = 0.5
    workers: int = 1
    zeta_draws: int = ZETA_DRAWS

    def __post_init__(self):
        object.__setattr__(self, "case", SamplingCase(self.case))
        for name in ("N",):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("K", "B", "S", "D", "T", "Bprime", "DL", "zeta_draws"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.C_beta <= 0:
            raise ConfigError(f"C_beta must be positive, got {self.C_beta}")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")

    def validate(self, dist):
        """Check the config against a family; returns the constants the run uses."""
        if dist.case is not self.case:
            raise FamilyError(f"config case {self.case.value} does not match family case {dist.case.value}")
        if self.w0 is not None:
            as_vector(self.w0, dist.dim)
        profile = dist.profile
        try:
            check_inner_stepsize(self.alpha, self.N, profile.L, allow_unsafe=self.allow_unsafe_alpha)
            constants = constants_for(profile, self.case, self.alpha, self.N, self.C_beta, self.B,
                                      S=self.S, D=self.D, T=self.T)
        except StepsizeError:
            if not self.allow_unsafe_alpha:
                raise
            return smoothness_constants(profile, self.case, self.alpha, self.N, self.C_beta, self.B)

        if constants.Bprime_threshold is not None and self.Bprime < constants.Bprime_min:
            logger.warning("B'=%s is below the smoothness-estimate threshold %.6g", self.Bprime,
                           constants.Bprime_threshold)
        if constants.DL_threshold is not None and self.DL < constants.DL_min:
            logger.warning("D_L=%s is below the smoothness-estimate threshold %.6g", self.DL,
                           constants.DL_threshold)
        return constants

    def to_document(self):
        doc = {
            "case": self.case.value,
            "N": self.N, "K": self.K, "B": self.B,
            "S": self.S, "D": self.D, "T": self.T,
            "Bprime": self.Bprime, "DL": self.DL,
            "alpha": float(self.alpha), "C_beta": float(self.C_beta),
            "seed": int(self.seed),
            "record_exact_grad": bool(self.record_exact_grad),
            "allow_unsafe_alpha": bool(self.allow_unsafe_alpha),
            "init_radius_fraction": float(self.init_radius_fraction),
            "zeta_draws": int(self.zeta_draws),
        }
        if self.w0 is not None:
            doc["w0"] = [float(value) for value in self.w0]
        return doc


@dataclass(frozen=True)
class IterationRecord:
    k: int
    grad_norm: float
    loss: float
    beta: float
    hat_L: float
    grad_evals: int
    hess_evals: int
    in_ball: bool
    elapsed_ms: float = 0.0


@dataclass
class RunMetrics:
    config: RunConfig
    rows: list = field(default_factory=list)
    w0: np.ndarray = None
    w_final: np.ndarray = None
    zeta: int = None
    zeta_draws: list = field(default_factory=list)
    zeta_grad_norm: float = None
    diverged: bool = False
    divergence_step: int = None
    ball_violations: int = 0
    delta: float = None
    loss_star: float = None
    theorem_rhs: float = None
    constants: object = None

    @property
    def K(self):
        return len(self.rows)

    @property
    def initial_grad_norm(self):
        return self.rows[0].grad_norm if self.rows else None

    @property
    def final_grad_norm(self):
        return self.rows[-1].grad_norm if self.rows else None

    def grad_evals_per_iter(self):
        return self.rows[0].grad_evals if self.rows else 0

    def hess_evals_per_iter(self):
        return self.rows[0].hess_evals if self.rows else 0

    def to_frame(self):
        return pd.DataFrame(
            [[getattr(row, column) for column in METRICS_COLUMNS] for row in self.rows],
            columns=METRICS_COLUMNS,
        )

    def timings_frame(self):
        return pd.DataFrame([[row.k, row.elapsed_ms] for row in self.rows], columns=TIMING_COLUMNS)

    def summary(self):
        return {
            "config": self.config.to_document(),
            "K_completed": self.K,
            "zeta": self.zeta,
            "zeta_grad_norm": _plain(self.zeta_grad_norm),
            "initial_grad_norm": _plain(self.initial_grad_norm),
            "final_grad_norm": _plain(self.final_grad_norm),
            "min_grad_norm": _plain(min((row.grad_norm for row in self.rows), default=None)),
            "diverged": bool(self.diverged),
            "divergence_step": self.divergence_step,
            "ball_violations": int(self.ball_violations),
            "delta": _plain(self.delta),
            "loss_star": _plain(self.loss_star),
            "theorem_rhs": _plain(self.theorem_rhs),
            "grad_evals_per_iter": int(self.grad_evals_per_iter()),
            "hess_evals_per_iter": int(self.hess_evals_per_iter()),
            "w0": None if self.w0 is None else self.w0.tolist(),
            "w_final": None if self.w_final is None else self.w_final.tolist(),
            "constants": None if self.constants is None else self.constants.to_document(),
        }


def _plain(value):
    return None if value is None else float(value)


def initial_point(config, dist):
    if config.w0 is not None:
        return as_vector(config.w0, dist.dim).copy()
    generator = RngStream(config.seed).child(StreamRole.INIT).generator()
    return sample_in_ball(generator, dist.dim, config.init_radius_fraction * dist.radius)


def select_zeta(metrics, rng_stream):
    if not metrics.rows:
        raise ValueError("cannot select an output iterate from empty metrics")
    return int(rng_stream.generator().integers(len(metrics.rows)))


def draw_zetas(metrics, rng_stream, draws):
    """``draws`` independent output indices, the r-th from stream ``(r,)`` below ``rng_stream``."""
    return [select_zeta(metrics, rng_stream.child(draw)) for draw in range(draws)]


def reference_minimum(dist, alpha, N, seed=0, restarts=4):
    """(w_star, L_star) for the exact meta objective.

    Closed form when every task's inner and outer losses are quadratic, where
    L(w) = 1/2 w^T H w + g^T w + c; otherwise the best of several L-BFGS-B runs.
    """
    views = [task.quadratic_views() for task in dist.tasks]
    if all(view is not None for view in views):
        dim = dist.dim
        H = np.zeros((dim, dim))
        g = np.zeros(dim)
        for weight, (support, query) in zip(dist.weights, views):
            step = np.eye(dim) - alpha * support.A
            M = np.linalg.matrix_power(step, N)
            c = np.zeros(dim)
            for _ in range(N):
                c = step @ c - alpha * support.b
            H += weight * M.T @ query.A @ M
            g += weight * M.T @ (query.A @ c + query.b)
        w_star = np.linalg.lstsq(H, -g, rcond=None)[0]
        return w_star, meta_loss(dist, w_star, alpha, N)

    generator = RngStream(seed).child(StreamRole.CHECK).generator()
    starts = [np.zeros(dist.dim)] + [sample_in_ball(generator, dist.dim, dist.radius) for _ in range(restarts)]
    best = None
    for start in starts:
        result = minimize(
            lambda w: meta_loss(dist, w, alpha, N),
            start,
            jac=lambda w: exact_meta_grad(dist, w, alpha, N),
            method="L-BFGS-B",
            options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15},
        )
        if best is None or result.fun < best.fun:
            best = result
    logger.debug("Reference minimum from %s starts: %.12g", len(starts), best.fun)
    return np.asarray(best.x, dtype=float), float(best.fun)


def _resampling_step(config, dist, constants, w, stream, counter):
    indices = dist.sample_indices(stream.child(StreamRole.TASKS).generator(), config.B)
    jobs = [
        (lambda slot=slot, index=int(index): stoch_meta_grad_resample(
            dist.tasks[index], w, config.alpha, config.N, config.S, config.D, config.T,
            stream.slot(slot), task_index=index))
        for slot, index in enumerate(indices)
    ]
    estimates = run_jobs(jobs, config.workers)
    for estimate in estimates:
        counter.merge(estimate.work)
    hat_L = hat_L_resample(dist, w, config.Bprime, config.DL, constants, stream, counter=counter)
    return estimates, hat_L


def _finite_sum_step(config, dist, constants, w, stream, counter):
    indices = dist.sample_indices(stream.child(StreamRole.TASKS).generator(), config.B)
    jobs = [
        (lambda index=int(index): meta_grad_finite_sum(dist.tasks[index], w, config.alpha, config.N,
                                                       task_index=index))
        for index in indices
    ]
    estimates = run_jobs(jobs, config.workers)
    for estimate in estimates:
        counter.merge(estimate.work)
    hat_L = hat_L_finite(dist, w, config.Bprime, constants, stream, counter=counter)
    return estimates, hat_L


def _run(config, dist, step):
    constants = config.validate(dist)
    metrics = RunMetrics(config=config, constants=constants)
    root = RngStream(config.seed)
    w = initial_point(config, dist)
    metrics.w0 = w.copy()
    logger.info("Starting %s run: K=%s B=%s N=%s alpha=%.6g C_beta=%s seed=%s",
                config.case.value, config.K, config.B, config.N, config.alpha, config.C_beta, config.seed)

    for k in range(config.K):
        started = time.perf_counter()
        stream = root.iteration(k)
        counter = WorkCounter()
        in_ball = dist.contains(w)
        if not in_ball:
            metrics.ball_violations += 1
            logger.warning("Iterate k=%s left the certified ball: |w|=%.6g > R=%.6g",
                           k, float(np.linalg.norm(w)), dist.radius)

        try:
            if config.record_exact_grad:
                grad_norm = float(np.linalg.norm(exact_meta_grad(dist, w, config.alpha, config.N)))
                loss = meta_loss(dist, w, config.alpha, config.N)
            else:
                grad_norm = loss = float("nan")
            estimates, hat_L = step(config, dist, constants, w, stream, counter)
            beta = meta_stepsize(hat_L, config.C_beta)
            # fixed reduction order: task slot 0..B-1
            direction = np.sum(np.stack([estimate.value for estimate in estimates]), axis=0) / config.B
            w_next = w - beta * direction
            if not np.all(np.isfinite(w_next)):
                raise DivergenceError(k + 1, "outer iterate")
        except DivergenceError as e:
            logger.warning("Run diverged at k=%s: %s", k, e)
            metrics.diverged = True
            metrics.divergence_step = k
            break

        metrics.rows.append(IterationRecord(
            k=k, grad_norm=grad_norm, loss=loss, beta=beta, hat_L=hat_L,
            grad_evals=counter.grad_evals, hess_evals=counter.hess_evals, in_ball=bool(in_ball),
            elapsed_ms=(time.perf_counter() - started) * 1000.0,
        ))
        logger.debug("k=%s |grad L|=%.6g loss=%.6g beta=%.6g hat_L=%.6g", k, grad_norm, loss, beta, hat_L)
        w = w_next

    metrics.w_final = w
    if metrics.rows:
        metrics.zeta_draws = draw_zetas(metrics, root.child(StreamRole.ZETA), config.zeta_draws)
        metrics.zeta = metrics.zeta_draws[0]
        if config.record_exact_grad:
            metrics.zeta_grad_norm = float(np.mean([metrics.rows[index].grad_norm for index in metrics.zeta_draws]))
    logger.info("Finished %s run: %s iterations, final |grad L|=%s, diverged=%s",
                config.case.value, metrics.K, metrics.final_grad_norm, metrics.diverged)
    return metrics


def run_maml_resampling(config, dist):
    if config.case is not SamplingCase.RESAMPLING:
        raise FamilyError("run_maml_resampling needs a resampling config")
    return _run(config, dist, _resampling_step)


def run_maml_finite_sum(config, dist):
    if config.case is not SamplingCase.FINITE_SUM:
        raise FamilyError("run_maml_finite_sum needs a finite-sum config")
    return _run(config, dist, _finite_sum_step)


def run_maml(config, dist):
    if config.case is SamplingCase.FINITE_SUM:
        return run_maml_finite_sum(config, dist)
    return run_maml_resampling(config, dist)


def attach_theorem_bound(metrics, dist, reference_seed=0):
    """Fill delta, loss_star and the convergence-theorem right-hand side."""
    config = metrics.config
    if metrics.w0 is None or metrics.constants is None or metrics.constants.theta_margin is None:
        return metrics
    _, loss_star = reference_minimum(dist, config.alpha, config.N, seed=reference_seed)
    loss_w0 = meta_loss(dist, metrics.w0, config.alpha, config.N)
    metrics.loss_star = loss_star
    metrics.delta = max(loss_w0 - loss_star, 0.0)
    metrics.theorem_rhs = theorem_rhs(metrics.constants, metrics.delta, config.K)
    return metrics


def save_run(metrics, out_dir):
    out_dir = ensure_dir(out_dir)
    metrics.to_frame().to_csv(Path(out_dir) / "metrics.csv", index=False, float_format="%.17g")
    metrics.timings_frame().to_csv(Path(out_dir) / "timings.csv", index=False, float_format="%.3f")
    with open(Path(out_dir) / "summary.yaml", "w", encoding="utf-8") as handle:
        yaml.safe_dump(metrics.summary(), handle, sort_keys=False)
    logger.info("Wrote run outputs to %s", out_dir)
    return out_dir
