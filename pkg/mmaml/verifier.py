"""Deterministic and Monte-Carlo checks of the meta-gradient bounds.

Every check returns ``BoundReport`` values. Upper bounds pass when
``empirical + 3 SE <= bound``, lower bounds when ``empirical - 3 SE >= bound``;
deterministic inequalities are checked instance by instance and report the
worst ratio of left to right side against a bound of 1.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .config import (
    DETERMINISTIC_ATOL,
    DETERMINISTIC_RTOL,
    FD_TOLERANCE,
    MC_SIGMA_BAND,
    REPORT_COLUMNS,
    REPORT_KINDS,
)
from .errors import StepsizeError
from .inner import exact_path, inner_sgd
from .logger import logger
from .meta_grad import (
    exact_meta_grad,
    exact_task_meta_grad,
    hessian_factor_product,
    meta_grad_finite_sum,
    per_task_meta_grads,
    stoch_meta_grad_resample,
)
from .streams import RngStream, StreamRole
from .tasks import SamplingCase
from .theory import (
    PATH_FACTOR_PROOF,
    corollary1_bounds,
    corollary2_bounds,
    exact_smoothness,
    finite_sum_constants,
    hat_L_finite,
    hat_L_resample,
    inner_stepsize_bound,
    meta_stepsize,
    path_moment_bounds,
    resampling_constants,
    smoothness_constants,
)
from .utils import (
    as_vector,
    mean_and_std_error,
    sample_in_ball,
    sample_pair_in_ball,
    spectral_norm,
    vector_mean_and_std_error,
)
from .workers import run_jobs

# E|w_N - w~_N| should fall like S^(-1/2)
PATH_SLOPE_TARGET = -0.5
PATH_SLOPE_TOLERANCE = 0.1


@dataclass(frozen=True)
class BoundReport:
    name: str
    kind: str
    trials: int
    empirical: float
    std_error: float
    bound: float
    satisfied: bool
    slack_ratio: float

    def __post_init__(self):
        if self.kind not in REPORT_KINDS:
            raise ValueError(f"unknown report kind {self.kind!r}")

    def to_row(self):
        return [asdict(self)[column] for column in REPORT_COLUMNS]


def _slack(numerator, denominator):
    if denominator == 0:
        return 0.0 if numerator == 0 else math.inf
    if math.isinf(denominator):
        return 0.0
    return numerator / denominator


def upper_report(name, trials, empirical, std_error, bound, kind="stochastic"):
    satisfied = empirical + MC_SIGMA_BAND * std_error <= bound * (1.0 + DETERMINISTIC_RTOL) + DETERMINISTIC_ATOL
    return BoundReport(name, kind, int(trials), float(empirical), float(std_error), float(bound),
                       bool(satisfied), float(_slack(empirical, bound)))


def lower_report(name, trials, empirical, std_error, bound, kind="stochastic"):
    satisfied = empirical - MC_SIGMA_BAND * std_error >= bound * (1.0 - DETERMINISTIC_RTOL)
    return BoundReport(name, kind, int(trials), float(empirical), float(std_error), float(bound),
                       bool(satisfied), float(_slack(bound, empirical)))


class InequalityTally:
    """Collects lhs <= rhs instances and reports the worst lhs/rhs ratio."""

    def __init__(self, name):
        self.name = name
        self.count = 0
        self.violations = 0
        self.worst = 0.0

    def add(self, lhs, rhs):
        self.count += 1
        if lhs > rhs * (1.0 + DETERMINISTIC_RTOL) + DETERMINISTIC_ATOL:
            self.violations += 1
            logger.debug("%s violated: lhs=%.17g rhs=%.17g", self.name, lhs, rhs)
        ratio = _slack(lhs, rhs) if lhs > DETERMINISTIC_ATOL else 0.0
        self.worst = max(self.worst, ratio)

    def report(self):
        return BoundReport(self.name, "deterministic", self.count, float(self.worst), 0.0, 1.0,
                           self.violations == 0, float(self.worst))


def _trial_chunks(trials, workers):
    chunks = max(1, min(trials, 4 * max(1, workers or 1)))
    edges = np.linspace(0, trials, chunks + 1).astype(int)
    return [(int(start), int(stop)) for start, stop in zip(edges[:-1], edges[1:]) if stop > start]


def map_trials(trial_fn, trials, workers=1):
    """[trial_fn(t) for t in range(trials)] computed in chunks on the worker pool, kept in trial order."""
    jobs = [
        (lambda start=start, stop=stop: [trial_fn(t) for t in range(start, stop)])
        for start, stop in _trial_chunks(trials, workers)
    ]
    results = []
    for chunk in run_jobs(jobs, workers):
        results.extend(chunk)
    return results


def _draw_task(dist, stream):
    index = int(dist.sample_indices(stream.child(StreamRole.TASKS).generator(), 1)[0])
    return index, dist.tasks[index]


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def post_adaptation_loss(task, w, alpha, N):
    return task.loss(exact_path(task, w, alpha, N).end)


def meta_grad_fd_error(task, w, alpha, N, h=None):
    """Max coordinate error of the meta gradient against central differences, relative to max(1, |g|_inf)."""
    w = as_vector(w, task.dim)
    if h is None:
        h = 1e-5 * (1.0 + float(np.linalg.norm(w)))
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    exact = exact_task_meta_grad(task, w, alpha, N)
    fd = np.empty(task.dim)
    for index in range(task.dim):
        step = np.zeros(task.dim)
        step[index] = h
        fd[index] = (post_adaptation_loss(task, w + step, alpha, N)
                     - post_adaptation_loss(task, w - step, alpha, N)) / (2.0 * h)
    return float(np.max(np.abs(fd - exact)) / max(1.0, float(np.max(np.abs(exact)))))


def check_meta_grad_fd(task, w, alpha, N, h=None, tolerance=None):
    if tolerance is None:
        tolerance = FD_TOLERANCE[task.family.value]
    error = meta_grad_fd_error(task, w, alpha, N, h)
    return BoundReport("meta_gradient_fd", "deterministic", 1, error, 0.0, tolerance,
                       error <= tolerance, _slack(error, tolerance))


def check_meta_grad_fd_sample(dist, alpha, N, points, rng_stream, h=None, tolerance=None):
    """FD check at ``points`` random (task, w) pairs; reports the worst relative error."""
    if tolerance is None:
        tolerance = FD_TOLERANCE[dist.family.value]
    worst = 0.0
    for point in range(points):
        stream = rng_stream.child(point)
        _, task = _draw_task(dist, stream)
        w = sample_in_ball(stream.generator(), dist.dim, dist.radius)
        worst = max(worst, meta_grad_fd_error(task, w, alpha, N, h))
    return BoundReport("meta_gradient_fd", "deterministic", points, worst, 0.0, tolerance,
                       worst <= tolerance, _slack(worst, tolerance))


# ---------------------------------------------------------------------------
# Path moments
# ---------------------------------------------------------------------------

def _require_resampling(dist, what):
    if dist.case is not SamplingCase.RESAMPLING:
        raise ValueError(f"{what} needs a resampling family")


def path_distances(dist, w, alpha, N, S, trials, rng_stream, workers=1):
    """(trials, N+1) array of |w_j - w~_j| between SGD and GD inner paths at a fixed meta parameter."""
    _require_resampling(dist, "path moments")
    w = as_vector(w, dist.dim)
    exact = [np.stack(exact_path(task, w, alpha, N).iterates) for task in dist.tasks]

    def trial(t):
        stream = rng_stream.child(StreamRole.TRIAL, t)
        index, task = _draw_task(dist, stream)
        path = inner_sgd(task, w, alpha, N, S, stream, task_index=index)
        return np.linalg.norm(np.stack(path.iterates) - exact[index], axis=1)

    return np.stack(map_trials(trial, trials, workers))


def mc_check_prop2(dist, w, alpha, N, S, trials, rng_stream, factor=PATH_FACTOR_PROOF, workers=1):
    """First and second path-moment reports; each reports the inner step j with the least slack.

    Step 0 is skipped when N >= 1: both paths start at ``w``.
    """
    distances = path_distances(dist, w, alpha, N, S, trials, rng_stream, workers)
    steps = range(1, N + 1) if N >= 1 else range(1)
    reports = []
    for name, power, position in (("path_first_moment", 1, 0), ("path_second_moment", 2, 1)):
        candidates = []
        for j in steps:
            mean, se = mean_and_std_error(distances[:, j] ** power)
            bound = path_moment_bounds(dist.profile, alpha, j, S, factor)[position]
            candidates.append(upper_report(name, trials, float(mean), float(se), bound))
        # failures first, then the largest empirical/bound ratio
        reports.append(max(candidates, key=lambda report: (not report.satisfied, report.slack_ratio)))
    return tuple(reports)


def path_moment_slope(dist, w, alpha, N, S_values, trials, rng_stream, workers=1):
    """Log-log slope of E|w_N - w~_N| against S, with the per-S means."""
    means = []
    for position, S in enumerate(S_values):
        distances = path_distances(dist, w, alpha, N, S, trials, rng_stream.child(StreamRole.CHECK, position), workers)
        means.append(float(distances[:, N].mean()))
    slope = float(np.polyfit(np.log(np.asarray(S_values, dtype=float)), np.log(means), 1)[0])
    return slope, means


def check_path_moment_slope(dist, w, alpha, N, S_values, trials, rng_stream, workers=1):
    slope, means = path_moment_slope(dist, w, alpha, N, S_values, trials, rng_stream, workers)
    logger.debug("Path moment means over S=%s: %s", list(S_values), means)
    deviation = abs(slope - PATH_SLOPE_TARGET)
    return BoundReport("path_moment_slope", "stochastic", trials * len(S_values), slope, 0.0, PATH_SLOPE_TARGET,
                       deviation <= PATH_SLOPE_TOLERANCE, deviation / PATH_SLOPE_TOLERANCE)


# ---------------------------------------------------------------------------
# Estimator bias and second moment
# ---------------------------------------------------------------------------

def _estimates(dist, w, alpha, N, S, D, T, trials, rng_stream, workers):
    w = as_vector(w, dist.dim)

    def trial(t):
        stream = rng_stream.child(StreamRole.TRIAL, t)
        index, task = _draw_task(dist, stream)
        estimate = stoch_meta_grad_resample(task, w, alpha, N, S, D, T, stream, task_index=index)
        return index, estimate.value

    results = map_trials(trial, trials, workers)
    indices = np.array([index for index, _ in results])
    values = np.stack([value for _, value in results])
    return indices, values


def mc_check_prop3(dist, w, alpha, N, S, D, T, trials, rng_stream, workers=1):
    """Bias |E G - grad L(w)| measured as the mean of G_i - grad L_i(w) over trials."""
    _require_resampling(dist, "the bias check")
    constants = resampling_constants(dist.profile, alpha, N, 1.0, S, D, T, 1)
    w = as_vector(w, dist.dim)
    exact_per_task = per_task_meta_grads(dist, w, alpha, N)
    indices, values = _estimates(dist, w, alpha, N, S, D, T, trials, rng_stream, workers)
    bias, se = vector_mean_and_std_error(values - exact_per_task[indices])
    grad_norm = float(np.linalg.norm(dist.weights @ exact_per_task))
    bound = (constants.C_err1 + constants.C_err2 * (grad_norm + dist.profile.sigma)) / math.sqrt(S)
    return upper_report("estimator_bias", trials, bias, se, bound)


def mc_check_prop4(dist, w, alpha, N, S, D, T, trials, rng_stream, workers=1):
    _require_resampling(dist, "the second-moment check")
    constants = resampling_constants(dist.profile, alpha, N, 1.0, S, D, T, 1)
    w = as_vector(w, dist.dim)
    _, values = _estimates(dist, w, alpha, N, S, D, T, trials, rng_stream, workers)
    mean, se = mean_and_std_error(np.sum(values ** 2, axis=1))
    grad_norm = float(np.linalg.norm(exact_meta_grad(dist, w, alpha, N)))
    bound = (constants.C_squ1 / T + constants.C_squ2 / S
             + constants.C_squ3 * (grad_norm ** 2 + dist.profile.sigma ** 2))
    return upper_report("estimator_second_moment", trials, float(mean), float(se), bound)


def mc_check_prop6(dist, w, alpha, N, trials=None, rng_stream=None):
    """Finite-sum second moment; the expectation over the finite family is exact, no sampling."""
    if dist.case is not SamplingCase.FINITE_SUM:
        raise ValueError("the finite-sum second-moment check needs a finite-sum family")
    constants = finite_sum_constants(dist.profile, alpha, N, 1.0, 1)
    w = as_vector(w, dist.dim)
    squares = dist.expectation(lambda task: float(np.sum(meta_grad_finite_sum(task, w, alpha, N).value ** 2)))
    grad_norm = float(np.linalg.norm(exact_meta_grad(dist, w, alpha, N)))
    bound = constants.A_squ1 * grad_norm ** 2 + constants.A_squ2
    return upper_report("finite_sum_second_moment", len(dist), float(squares), 0.0, bound, kind="exact")


# ---------------------------------------------------------------------------
# Smoothness and lemmas
# ---------------------------------------------------------------------------

def check_smoothness(dist, alpha, N, pairs, rng_stream):
    constants = smoothness_constants(dist.profile, dist.case, alpha, N, 1.0, 1)
    tally = InequalityTally("meta_smoothness")
    generator = rng_stream.generator()
    for _ in range(pairs):
        w, u = sample_pair_in_ball(generator, dist.dim, dist.radius)
        lhs = float(np.linalg.norm(exact_meta_grad(dist, w, alpha, N) - exact_meta_grad(dist, u, alpha, N)))
        tally.add(lhs, exact_smoothness(dist, w, constants) * float(np.linalg.norm(w - u)))
    return tally.report()


def check_lemma_suite(dist, alpha, N, trials, rng_stream):
    L = dist.profile.L
    q = 1.0 + alpha * L
    finite = dist.case is SamplingCase.FINITE_SUM
    prefix = "finite_sum_" if finite else ""
    contraction = InequalityTally(prefix + "path_contraction")
    growth = InequalityTally(prefix + "gradient_growth")
    product = InequalityTally(prefix + "factor_product")
    gap = InequalityTally(prefix + "meta_gradient_gap")
    generator = rng_stream.child(0).generator()

    for _ in range(trials):
        index = int(dist.sample_indices(generator, 1)[0])
        task = dist.tasks[index]
        w, u = sample_pair_in_ball(generator, dist.dim, dist.radius)
        path_w = exact_path(task, w, alpha, N)
        path_u = exact_path(task, u, alpha, N)
        distance = float(np.linalg.norm(w - u))
        start_grad = float(np.linalg.norm(task.support_grad(w)))
        for j in range(N + 1):
            contraction.add(float(np.linalg.norm(path_w.iterates[j] - path_u.iterates[j])), q ** j * distance)
            growth.add(float(np.linalg.norm(task.support_grad(path_w.iterates[j]))), q ** j * start_grad)
        if N >= 1:
            m = int(generator.integers(N))
            hessians = [task.support_hess(path_w.iterates[j]) for j in range(m + 1)]
            deviation = spectral_norm(np.eye(dist.dim) - hessian_factor_product(hessians, alpha))
            product.add(deviation, q ** (m + 1) - 1.0)
        meta = exact_task_meta_grad(task, w, alpha, N)
        grad_w = task.grad(w)
        if finite:
            rhs = (q ** N - 1.0) * float(np.linalg.norm(grad_w)) + q ** N * (q ** N - 1.0) * start_grad
        else:
            rhs = (q ** (2 * N) - 1.0) * float(np.linalg.norm(grad_w))
        gap.add(float(np.linalg.norm(grad_w - meta)), rhs)

    reports = [contraction.report(), growth.report()]
    if N >= 1:
        reports.append(product.report())
    reports.append(gap.report())

    mean_bound = _mean_gradient_tally(dist, alpha, N, trials, rng_stream.child(1))
    if mean_bound is not None:
        reports.append(mean_bound)
    return reports


def _mean_gradient_tally(dist, alpha, N, trials, rng_stream):
    """|E_i grad l_i(w)| against the meta-gradient norm; needs (1+aL)^{2N} < 2."""
    profile = dist.profile
    q = 1.0 + alpha * profile.L
    C_l = q ** (2 * N) - 1.0
    if N >= 1 and alpha >= inner_stepsize_bound(N, profile.L):
        logger.warning("Skipping the mean-gradient bound: alpha=%.6g is not below the stepsize bound", alpha)
        return None
    finite = dist.case is SamplingCase.FINITE_SUM
    tally = InequalityTally("query_gradient_bound" if finite else "gradient_mean_bound")
    generator = rng_stream.generator()
    for _ in range(trials):
        w = sample_in_ball(generator, dist.dim, dist.radius)
        mean_grad = float(np.linalg.norm(dist.expectation(lambda task: task.grad(w))))
        meta_norm = float(np.linalg.norm(exact_meta_grad(dist, w, alpha, N)))
        if finite:
            C_1 = 1.0 - C_l
            C_2 = C_l * profile.sigma + q ** N * (q ** N - 1.0) * profile.b
            tally.add(mean_grad, meta_norm / C_1 + C_2 / C_1)
        else:
            tally.add(mean_grad, (meta_norm + C_l * profile.sigma) / (1.0 - C_l))
    return tally.report()


# ---------------------------------------------------------------------------
# Stepsize moments
# ---------------------------------------------------------------------------

def mc_check_stepsize_moments(dist, w, alpha, N, C_beta, Bprime, DL, trials, rng_stream, workers=1):
    w = as_vector(w, dist.dim)
    profile = dist.profile
    constants = smoothness_constants(profile, dist.case, alpha, N, C_beta, 1)
    L_w = exact_smoothness(dist, w, constants)
    reports = []
    try:
        if dist.case is SamplingCase.FINITE_SUM:
            full = finite_sum_constants(profile, alpha, N, C_beta, 1)
            reports.append(upper_report("smoothness_batch_threshold", 1, full.Bprime_min, 0.0, Bprime,
                                        kind="threshold"))
        else:
            full = resampling_constants(profile, alpha, N, C_beta, 1, 1, 1, 1)
            reports.append(upper_report("smoothness_batch_threshold", 1, full.Bprime_min, 0.0, Bprime,
                                        kind="threshold"))
            reports.append(upper_report("smoothness_sample_threshold", 1, full.DL_min, 0.0, DL,
                                        kind="threshold"))
    except StepsizeError:
        logger.warning("Batch thresholds undefined for alpha=%.6g", alpha)
    for report in reports:
        if not report.satisfied:
            logger.warning("%s not met: need %s, have %s", report.name, int(report.empirical), int(report.bound))

    if dist.case is SamplingCase.FINITE_SUM:
        def trial(t):
            return hat_L_finite(dist, w, Bprime, constants, rng_stream.child(StreamRole.TRIAL, t))

        hat_L = np.asarray(map_trials(trial, trials, workers))
        inverse_mean, inverse_se = mean_and_std_error(1.0 / hat_L)
        square_mean, square_se = mean_and_std_error(1.0 / hat_L ** 2)
        reports.append(lower_report("inverse_smoothness_mean", trials, inverse_mean, inverse_se, 1.0 / L_w))
        reports.append(upper_report("inverse_smoothness_square", trials, square_mean, square_se, 2.0 / L_w ** 2))
        return reports

    def trial(t):
        return meta_stepsize(hat_L_resample(dist, w, Bprime, DL, constants, rng_stream.child(StreamRole.TRIAL, t)),
                             C_beta)

    beta = np.asarray(map_trials(trial, trials, workers))
    beta_mean, beta_se = mean_and_std_error(beta)
    square_mean, square_se = mean_and_std_error(beta ** 2)
    reports.append(lower_report("stepsize_mean", trials, beta_mean, beta_se, 4.0 / (5.0 * C_beta * L_w)))
    reports.append(upper_report("stepsize_square", trials, square_mean, square_se, 4.0 / (C_beta ** 2 * L_w ** 2)))
    return reports


# ---------------------------------------------------------------------------
# Corollary cross checks
# ---------------------------------------------------------------------------

def corollary_reports(dist, N, B):
    if dist.profile.L <= 0 or N < 1:
        return []
    if dist.case is SamplingCase.FINITE_SUM:
        _, checks = corollary2_bounds(dist.profile, N, B=B)
    else:
        _, checks = corollary1_bounds(dist.profile, N, B=B)
    reports = []
    for check in checks:
        if check.lower:
            slack = _slack(check.bound, check.value)
        else:
            slack = _slack(check.value, check.bound)
        reports.append(BoundReport("corollary_" + check.name, "cross_check", 1, float(check.value), 0.0,
                                   float(check.bound), bool(check.holds), float(slack)))
    return reports


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyConfig:
    alpha: float
    N: int
    C_beta: float = 100.0
    S: int = 10
    D: int = 10
    T: int = 10
    B: int = 10
    Bprime: int = 10
    DL: int = 10
    path_trials: int = 10000
    bias_trials: int = 100000
    stepsize_trials: int = 100000
    lemma_trials: int = 1000
    smoothness_pairs: int = 1000
    fd_points: int = 100
    slope_S: tuple = (10, 100, 1000)
    slope_trials: int = 2000
    path_factor: str = PATH_FACTOR_PROOF
    seed: int = 0
    workers: int = 1


def run_suite(dist, config):
    """Run every check that applies to the family, in a fixed order."""
    root = RngStream(config.seed)
    w = sample_in_ball(root.child(StreamRole.CHECK, 0).generator(), dist.dim, 0.5 * dist.radius)
    alpha, N = config.alpha, config.N
    logger.info("Verification suite: family=%s alpha=%.6g N=%s seed=%s", dist.family.value, alpha, N, config.seed)

    reports = [check_meta_grad_fd_sample(dist, alpha, N, config.fd_points, root.child(StreamRole.CHECK, 1))]
    reports.extend(check_lemma_suite(dist, alpha, N, config.lemma_trials, root.child(StreamRole.CHECK, 2)))
    reports.append(check_smoothness(dist, alpha, N, config.smoothness_pairs, root.child(StreamRole.CHECK, 3)))

    if dist.case is SamplingCase.RESAMPLING:
        reports.extend(mc_check_prop2(dist, w, alpha, N, config.S, config.path_trials,
                                      root.child(StreamRole.CHECK, 4), config.path_factor, config.workers))
        if N >= 1 and alpha > 0 and dist.profile.sigma_g > 0 and len(config.slope_S) >= 2:
            reports.append(check_path_moment_slope(dist, w, alpha, N, config.slope_S, config.slope_trials,
                                                   root.child(StreamRole.CHECK, 8), config.workers))
        if N >= 1 and alpha > 0.5 * inner_stepsize_bound(N, dist.profile.L):
            logger.warning("Skipping the bias check: alpha=%.6g exceeds half the stepsize bound", alpha)
        else:
            reports.append(mc_check_prop3(dist, w, alpha, N, config.S, config.D, config.T, config.bias_trials,
                                          root.child(StreamRole.CHECK, 5), config.workers))
        reports.append(mc_check_prop4(dist, w, alpha, N, config.S, config.D, config.T, config.bias_trials,
                                      root.child(StreamRole.CHECK, 6), config.workers))
    else:
        reports.append(mc_check_prop6(dist, w, alpha, N))

    reports.extend(mc_check_stepsize_moments(dist, w, alpha, N, config.C_beta, config.Bprime, config.DL,
                                             config.stepsize_trials, root.child(StreamRole.CHECK, 7), config.workers))
    reports.extend(corollary_reports(dist, N, config.B))

    failed = [report.name for report in reports if not report.satisfied and report.kind != "cross_check"]
    if failed:
        logger.warning("Verification failed: %s", ", ".join(failed))
    logger.info("Verification suite finished: %s reports, %s failed", len(reports), len(failed))
    return reports


def suite_passed(reports):
    return all(report.satisfied for report in reports if report.kind != "cross_check")


def reports_frame(reports):
    return pd.DataFrame([report.to_row() for report in reports], columns=REPORT_COLUMNS)


def write_reports(reports, path):
    reports_frame(reports).to_csv(path, index=False, float_format="%.17g")
    return path


def format_reports(reports):
    lines = []
    for report in reports:
        status = "ok" if report.satisfied else ("drift" if report.kind == "cross_check" else "FAIL")
        lines.append(
            f"{status:>5}  {report.name:<32} empirical={report.empirical:.6g} "
            f"(se {report.std_error:.2g})  bound={report.bound:.6g}  slack={report.slack_ratio:.3g}"
        )
    return "\n".join(lines)
