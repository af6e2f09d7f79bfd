"""Stepsize rules, batch thresholds and the constants of the convergence bounds.

Every function here is a pure function of a ``SmoothnessProfile`` and the run
parameters. Constants are evaluated exactly as stated; the simplified
corollary bounds live in ``corollary1_bounds`` / ``corollary2_bounds`` and
are compared against the exact values instead of replacing them.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import StepsizeError
from .logger import logger
from .streams import StreamRole
from .tasks import SamplingCase
from .utils import as_vector

PATH_FACTOR_PROOF = "proof"
PATH_FACTOR_STATEMENT = "statement"


def _ratio(numerator, denominator):
    # x/0 with x != 0 is an infinite constant; 0/0 only happens when rho = 0 and is 0
    if denominator == 0:
        if numerator == 0:
            return 0.0
        return math.copysign(math.inf, numerator)
    return numerator / denominator


def inner_stepsize_bound(N, L):
    if N < 1:
        raise ValueError("the inner stepsize bound needs N >= 1; N = 0 is plain SGD")
    if L <= 0:
        raise ValueError(f"L must be positive, got {L}")
    return (2.0 ** (1.0 / (2 * N)) - 1.0) / L


def default_alpha(N, L):
    if N < 1 or L <= 0:
        raise ValueError(f"default_alpha needs N >= 1 and L > 0, got N={N}, L={L}")
    return 1.0 / (8 * N * L)


def check_inner_stepsize(alpha, N, L, allow_unsafe=False):
    """Return alpha_max (inf when N = 0); raise StepsizeError when alpha >= alpha_max."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    if N == 0:
        return math.inf
    alpha_max = inner_stepsize_bound(N, L)
    if alpha >= alpha_max:
        if not allow_unsafe:
            raise StepsizeError(alpha, alpha_max, N)
        logger.warning("Running with alpha=%.6g above the safe bound %.6g (N=%s)", alpha, alpha_max, N)
    return alpha_max


def required_batch(threshold, strict):
    """Smallest integer batch size >= 1 that exceeds (strict) or meets the threshold."""
    if not math.isfinite(threshold):
        raise ValueError(f"batch threshold is not finite: {threshold}")
    size = math.floor(threshold) + 1 if strict else math.ceil(threshold)
    return max(1, int(size))


def _growth_base(alpha, L):
    # numpy scalar, so powers of an unsafe stepsize overflow to inf instead of raising
    return np.float64(1.0) + alpha * L


def _lipschitz_common(profile, alpha, N):
    # (1+aL)^(N-1) a rho + (rho/L)(1+aL)^N ((1+aL)^(N-1) - 1)
    if profile.rho == 0:
        return 0.0
    q = _growth_base(alpha, profile.L)
    rho, L = profile.rho, profile.L
    with np.errstate(over="ignore"):
        return float(q ** (N - 1) * alpha * rho + (rho / L) * q ** N * (q ** (N - 1) - 1.0))


def meta_lipschitz_constant(profile, alpha, N):
    """C_L, the coefficient of E_i|grad l_i(w)| in the meta-gradient smoothness."""
    return _lipschitz_common(profile, alpha, N) * (1.0 + alpha * profile.L) ** N


@dataclass(frozen=True)
class TheoreticalConstants:
    case: SamplingCase
    alpha: float
    N: int
    C_beta: float
    L: float
    rho: float
    sigma: float
    B: int
    growth: float
    C_L: float
    C_l: float
    chi: float = None
    xi: float = None
    phi: float = None
    theta: float = None
    theta_margin: float = None
    inv_theta: float = None
    chi_over_theta: float = None
    xi_over_theta: float = None
    S: int = None
    D: int = None
    T: int = None
    sigma_g: float = None
    sigma_H: float = None
    C_err1: float = None
    C_err2: float = None
    C_err1_proof: float = None
    C_err2_proof: float = None
    C_squ1: float = None
    C_squ2: float = None
    C_squ3: float = None
    Bprime_threshold: float = None
    DL_threshold: float = None
    b: float = None
    b_tilde: float = None
    C_b: float = None
    A_squ1: float = None
    A_squ2: float = None
    C_1: float = None
    C_2: float = None

    @property
    def theta_positive(self):
        return self.theta_margin is not None and self.theta_margin > 0

    @property
    def Bprime_min(self):
        return required_batch(self.Bprime_threshold, strict=self.case is SamplingCase.RESAMPLING)

    @property
    def DL_min(self):
        if self.DL_threshold is None:
            return None
        return required_batch(self.DL_threshold, strict=True)

    def to_document(self):
        doc = {}
        for name, value in asdict(self).items():
            if value is None:
                continue
            if isinstance(value, SamplingCase):
                value = value.value
            elif isinstance(value, (int, np.integer)) and not isinstance(value, bool):
                value = int(value)
            else:
                value = float(value)
            doc[name] = value
        return doc


def _check_common(profile, alpha, N, C_beta, B):
    if profile.L <= 0:
        raise ValueError("constants need a positive gradient-Lipschitz bound L")
    if N < 0:
        raise ValueError(f"N must be >= 0, got {N}")
    if C_beta <= 0:
        raise ValueError(f"C_beta must be positive, got {C_beta}")
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    check_inner_stepsize(alpha, N, profile.L)


def resampling_constants(profile, alpha, N, C_beta, S, D, T, B):
    _check_common(profile, alpha, N, C_beta, B)
    if min(S, D, T) < 1:
        raise ValueError(f"batch sizes must be >= 1, got S={S}, D={D}, T={T}")
    L, rho, sigma = profile.L, profile.rho, profile.sigma
    sigma_g, sigma_H = profile.sigma_g, profile.sigma_H
    q = 1.0 + alpha * L
    Q = q ** (2 * N)
    gap = 2.0 - Q

    C_L = meta_lipschitz_constant(profile, alpha, N)
    C_err1 = Q * sigma_g
    C_err2 = q ** (4 * N) * rho * sigma_g / (gap * L ** 2)
    # forms reached inside the bias proof before they are loosened into C_err1, C_err2
    C_err1_proof = q ** N * (q ** N - 1.0) * sigma_g
    C_err2_proof = (q ** (N - 1) - 1.0) ** 2 * rho * q ** (2 * N - 1) * sigma_g / (gap * L ** 2) if N >= 1 else 0.0

    squ1_unit = 3.0 * (alpha ** 2 * sigma_H ** 2 / D + q ** 2) ** N
    C_squ1 = squ1_unit * sigma_g ** 2
    C_squ2 = C_squ1 * ((1.0 + 2.0 * alpha * L + 2.0 * alpha ** 2 * L ** 2) ** N - 1.0) * alpha * L / q
    C_squ3 = 2.0 * squ1_unit * Q / gap ** 2

    chi = _ratio(gap * Q * L, C_L) + sigma
    xi = (6.0 / (C_beta * L)) * (0.2 + 2.0 / C_beta) * (C_err1 ** 2 + C_err2 ** 2 * sigma ** 2)
    phi = (2.0 / (C_beta ** 2 * L)) * (C_squ1 / T + C_squ2 / S + C_squ3 * sigma ** 2)
    margin = 0.2 - (0.6 + 6.0 / C_beta) * C_err2 ** 2 / S - C_squ3 / (C_beta * B) - 2.0 / C_beta
    theta = _ratio(2.0 * gap * margin, C_beta * C_L)
    if margin > 0:
        inv_theta = C_beta * C_L / (2.0 * gap * margin)
        chi_over_theta = C_beta * (gap * Q * L + sigma * C_L) / (2.0 * gap * margin)
    else:
        inv_theta = chi_over_theta = math.inf
        logger.warning("theta <= 0 (margin %.6g): C_beta=%s, S=%s, B=%s do not meet the convergence condition",
                       margin, C_beta, S, B)

    return TheoreticalConstants(
        case=SamplingCase.RESAMPLING, alpha=float(alpha), N=int(N), C_beta=float(C_beta),
        L=L, rho=rho, sigma=sigma, B=int(B), growth=Q, C_L=C_L, C_l=Q - 1.0,
        chi=chi, xi=xi, phi=phi, theta=theta, theta_margin=margin,
        inv_theta=inv_theta, chi_over_theta=chi_over_theta,
        S=int(S), D=int(D), T=int(T), sigma_g=sigma_g, sigma_H=sigma_H,
        C_err1=C_err1, C_err2=C_err2, C_err1_proof=C_err1_proof, C_err2_proof=C_err2_proof,
        C_squ1=C_squ1, C_squ2=C_squ2, C_squ3=C_squ3,
        Bprime_threshold=4.0 * C_L ** 2 * sigma ** 2 / (3.0 * q ** (4 * N) * L ** 2),
        DL_threshold=64.0 * sigma_g ** 2 * C_L ** 2 / (q ** (4 * N) * L ** 2),
    )


def finite_sum_constants(profile, alpha, N, C_beta, B):
    """Finite-sum constants.

    C_L matches the resampling case; C_b = K ((1+aL)^N - 1) where K is the
    shared bracket of C_L = K (1+aL)^N. C_b is not equal to C_L: the
    support/query gap only picks up the (1+aL)^N - 1 part of the growth
    in the smoothness argument.
    """
    _check_common(profile, alpha, N, C_beta, B)
    L, rho, sigma, b, b_tilde = profile.L, profile.rho, profile.sigma, profile.b, profile.b_tilde
    q = 1.0 + alpha * L
    Q = q ** (2 * N)
    gap = 2.0 - Q

    common = _lipschitz_common(profile, alpha, N)
    C_L = common * q ** N
    C_b = common * (q ** N - 1.0)
    A_squ1 = 4.0 * q ** (4 * N) / gap ** 2
    A_squ2 = 4.0 * q ** (8 * N) * (sigma + b) ** 2 / gap ** 2 + 2.0 * q ** (4 * N) * (sigma ** 2 + b_tilde)

    head = gap * (Q * L + C_b * b)
    xi = _ratio(head, C_L) + q ** (3 * N) * b
    phi = A_squ2 / (L * C_beta ** 2)
    margin = 1.0 / C_beta - (A_squ1 / B + 1.0) / C_beta ** 2
    theta = _ratio(gap * margin, C_L)
    if margin > 0:
        inv_theta = C_L / (gap * margin)
        xi_over_theta = (head + C_L * q ** (3 * N) * b) / (gap * margin)
    else:
        inv_theta = xi_over_theta = math.inf
        logger.warning("theta <= 0 (margin %.6g): C_beta=%s, B=%s do not meet the convergence condition",
                       margin, C_beta, B)

    return TheoreticalConstants(
        case=SamplingCase.FINITE_SUM, alpha=float(alpha), N=int(N), C_beta=float(C_beta),
        L=L, rho=rho, sigma=sigma, B=int(B), growth=Q, C_L=C_L, C_l=Q - 1.0,
        xi=xi, phi=phi, theta=theta, theta_margin=margin,
        inv_theta=inv_theta, xi_over_theta=xi_over_theta,
        b=b, b_tilde=b_tilde, C_b=C_b, A_squ1=A_squ1, A_squ2=A_squ2,
        C_1=gap, C_2=(Q - 1.0) * sigma + q ** N * (q ** N - 1.0) * b,
        Bprime_threshold=_ratio(2.0 * C_L ** 2 * sigma ** 2, (C_b * b + Q * L) ** 2),
    )


def constants_for(profile, case, alpha, N, C_beta, B, S=1, D=1, T=1):
    if SamplingCase(case) is SamplingCase.FINITE_SUM:
        return finite_sum_constants(profile, alpha, N, C_beta, B)
    return resampling_constants(profile, alpha, N, C_beta, S, D, T, B)


def smoothness_constants(profile, case, alpha, N, C_beta, B):
    """Only the terms L-hat needs, without the stepsize precondition.

    Used by runs that deliberately exceed the inner stepsize bound; every
    field depending on 2 - (1+aL)^{2N} is left unset.
    """
    if profile.L <= 0:
        raise ValueError("constants need a positive gradient-Lipschitz bound L")
    case = SamplingCase(case)
    q = _growth_base(alpha, profile.L)
    common = _lipschitz_common(profile, alpha, N)
    finite = case is SamplingCase.FINITE_SUM
    with np.errstate(over="ignore"):
        C_L = common * q ** N if common else 0.0
        C_b = common * (q ** N - 1.0) if common else 0.0
        growth = float(q ** (2 * N))
    return TheoreticalConstants(
        case=case, alpha=float(alpha), N=int(N), C_beta=float(C_beta),
        L=profile.L, rho=profile.rho, sigma=profile.sigma, B=int(B),
        growth=growth, C_L=float(C_L), C_l=growth - 1.0,
        b=profile.b if finite else None,
        C_b=float(C_b) if finite else None,
    )


@dataclass(frozen=True)
class StepsizePlan:
    alpha: float
    alpha_max: float
    C_beta: float
    Bprime_min: int
    DL_min: int = None

    @classmethod
    def from_constants(cls, constants):
        alpha_max = math.inf if constants.N == 0 else inner_stepsize_bound(constants.N, constants.L)
        return cls(
            alpha=constants.alpha,
            alpha_max=alpha_max,
            C_beta=constants.C_beta,
            Bprime_min=constants.Bprime_min,
            DL_min=constants.DL_min,
        )


def deterministic_smoothness(constants):
    """The sample-free part of L-hat: (1+aL)^{2N} L, plus C_b b in the finite-sum case."""
    value = constants.growth * constants.L
    if constants.case is SamplingCase.FINITE_SUM:
        value += constants.C_b * constants.b
    return value


def hat_L_resample(dist, w, Bprime, DL, constants, rng_stream, counter=None):
    """Smoothness estimate from B' fresh tasks, each with a fresh gradient batch of size D_L.

    Streams below ``rng_stream``: ``(B_PRIME,)`` task indices, ``(D_L, r)``
    the gradient batch of the r-th drawn task.
    The B' D_L samples are drawn and counted even when C_L = 0.
    """
    if Bprime < 1 or DL < 1:
        raise ValueError(f"B' and D_L must be >= 1, got {Bprime}, {DL}")
    base = deterministic_smoothness(constants)
    w = as_vector(w, dist.dim)
    indices = dist.sample_indices(rng_stream.child(StreamRole.B_PRIME).generator(), Bprime)
    norms = []
    for r, index in enumerate(indices):
        task = dist.tasks[index]
        batch = task.draw_batch(rng_stream.child(StreamRole.D_L, r).generator(), DL, task_index=int(index))
        norms.append(float(np.linalg.norm(task.stoch_grad(w, batch))))
    if counter is not None:
        counter.add(grad_evals=Bprime * DL)
    return base + constants.C_L * float(np.mean(norms))


def hat_L_finite(dist, w, Bprime, constants, rng_stream, counter=None):
    if Bprime < 1:
        raise ValueError(f"B' must be >= 1, got {Bprime}")
    base = deterministic_smoothness(constants)
    w = as_vector(w, dist.dim)
    indices = dist.sample_indices(rng_stream.child(StreamRole.B_PRIME).generator(), Bprime)
    norms = [float(np.linalg.norm(dist.tasks[index].grad(w))) for index in indices]
    if counter is not None:
        counter.add(grad_evals=sum(dist.tasks[index].query_size for index in indices))
    return base + constants.C_L * float(np.mean(norms))


def exact_smoothness(dist, w, constants):
    """L_w with the expectation over tasks taken exactly over the finite family."""
    w = as_vector(w, dist.dim)
    mean_norm = float(dist.expectation(lambda task: np.linalg.norm(task.grad(w))))
    return deterministic_smoothness(constants) + constants.C_L * mean_norm


def meta_stepsize(hat_L, C_beta):
    if hat_L <= 0 or C_beta <= 0:
        raise ValueError(f"meta_stepsize needs positive inputs, got hat_L={hat_L}, C_beta={C_beta}")
    return 1.0 / (C_beta * hat_L)


def theorem1_rhs(constants, delta, K, S=None, B=None):
    """Upper bound on E|grad L(w_zeta)| for the resampling algorithm; +inf when theta <= 0."""
    S = constants.S if S is None else S
    B = constants.B if B is None else B
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not constants.theta_positive:
        return math.inf
    load = delta / K + constants.xi / S + constants.phi / B
    return constants.inv_theta * load + math.sqrt(0.5 * constants.chi_over_theta * load)


def theorem2_rhs(constants, delta, K, B=None):
    """Upper bound on E|grad L(w_zeta)| for the finite-sum algorithm; +inf when theta <= 0."""
    B = constants.B if B is None else B
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not constants.theta_positive:
        return math.inf
    load = delta / K + constants.phi / B
    half = 0.5 * constants.inv_theta * load
    return half + math.sqrt(constants.xi_over_theta * load + half ** 2)


def theorem_rhs(constants, delta, K):
    if constants.case is SamplingCase.FINITE_SUM:
        return theorem2_rhs(constants, delta, K)
    return theorem1_rhs(constants, delta, K)


def path_moment_bounds(profile, alpha, j, S, factor=PATH_FACTOR_PROOF):
    """Bounds on E|w_j - w~_j| and E|w_j - w~_j|^2 between SGD and GD inner paths."""
    L, sigma_g = profile.L, profile.sigma_g
    if L <= 0:
        raise ValueError("path moment bounds need L > 0")
    q = 1.0 + alpha * L
    first = (q ** j - 1.0) * sigma_g / (L * math.sqrt(S))
    if factor == PATH_FACTOR_PROOF:
        growth = 1.0 + 2.0 * alpha * L + 2.0 * alpha ** 2 * L ** 2
    elif factor == PATH_FACTOR_STATEMENT:
        growth = 1.0 + alpha * L + 2.0 * alpha ** 2 * L ** 2
    else:
        raise ValueError(f"unknown path moment factor: {factor!r}")
    second = (growth ** j - 1.0) * alpha * sigma_g ** 2 / (L * q * S)
    return first, second


# ---------------------------------------------------------------------------
# Corollary parameter choices and their simplified bounds
# ---------------------------------------------------------------------------

COROLLARY1_C_BETA = 100.0
COROLLARY2_C_BETA = 80.0


@dataclass(frozen=True)
class CorollaryCheck:
    name: str
    value: float
    bound: float
    lower: bool = False

    @property
    def holds(self):
        if self.lower:
            return self.value > self.bound
        return self.value < self.bound


def corollary1_batch_sizes(profile):
    """(S_min, D_min) from S >= 15 rho^2 sigma_g^2 / L^4 and D >= sigma_H^2 max(L^2, 1/L^2)."""
    L = profile.L
    S_min = required_batch(15.0 * profile.rho ** 2 * profile.sigma_g ** 2 / L ** 4, strict=False)
    D_min = required_batch(profile.sigma_H ** 2 * max(L ** 2, 1.0 / L ** 2), strict=False)
    return S_min, D_min


def corollary1_bounds(profile, N, B=1, T=1):
    alpha = default_alpha(N, profile.L)
    S_min, D_min = corollary1_batch_sizes(profile)
    constants = resampling_constants(profile, alpha, N, COROLLARY1_C_BETA, S_min, D_min, T, B)
    L, rho, sigma_g = profile.L, profile.rho, profile.sigma_g
    q = 1.0 + alpha * L
    checks = [
        CorollaryCheck("growth_N", q ** N, 1.25),
        CorollaryCheck("growth_2N", q ** (2 * N), 1.5),
    ]
    if sigma_g > 0:
        checks += [
            CorollaryCheck("C_err1_proof", constants.C_err1_proof, 5.0 * sigma_g / 16.0),
            CorollaryCheck("C_squ1", constants.C_squ1, 4.0 * sigma_g ** 2),
            CorollaryCheck("C_squ2", constants.C_squ2, sigma_g ** 2 / 5.0),
        ]
        if rho > 0:
            checks.append(CorollaryCheck("C_err2_proof", constants.C_err2_proof, 3.0 * rho * sigma_g / (4.0 * L ** 2)))
    checks.append(CorollaryCheck("C_squ3", constants.C_squ3, 11.0 + 1e-12))
    if rho > 0:
        checks.append(CorollaryCheck("C_L_upper", constants.C_L, 3.0 * rho / (5.0 * L)))
        if N >= 2:
            checks.append(CorollaryCheck("C_L_lower", constants.C_L, rho / (16.0 * L), lower=True))
            checks.append(CorollaryCheck("chi", constants.chi, 24.0 * L ** 2 / rho + profile.sigma + 1e-12))
        checks.append(CorollaryCheck("theta", constants.theta, L / (1500.0 * rho) * (1.0 - 1e-12), lower=True))
    return constants, checks


def corollary2_bounds(profile, N, B=1):
    alpha = default_alpha(N, profile.L)
    constants = finite_sum_constants(profile, alpha, N, COROLLARY2_C_BETA, B)
    L, rho = profile.L, profile.rho
    checks = [CorollaryCheck("A_squ1", constants.A_squ1, 32.0)]
    if rho > 0:
        checks += [
            CorollaryCheck("C_L_upper", constants.C_L, 5.0 * rho / (8.0 * L)),
            CorollaryCheck("C_b", constants.C_b, rho / (8.0 * L)),
            CorollaryCheck("theta", constants.theta, L / (200.0 * rho) * (1.0 - 1e-12), lower=True),
        ]
        if N >= 2:
            checks.append(CorollaryCheck("C_L_lower", constants.C_L, rho / (16.0 * L), lower=True))
    return constants, checks
