# Static configuration: output schemas, exit codes and check tolerances.

METRICS_COLUMNS = [
    "k",
    "grad_norm",
    "loss",
    "beta",
    "hat_L",
    "grad_evals",
    "hess_evals",
    "in_ball",
]

TIMING_COLUMNS = ["k", "elapsed_ms"]

REPORT_COLUMNS = [
    "name",
    "kind",
    "trials",
    "empirical",
    "std_error",
    "bound",
    "satisfied",
    "slack_ratio",
]

SWEEP_RESULT_COLUMNS = [
    "final_grad_norm",
    "zeta_grad_norm",
    "theorem_rhs",
    "grad_evals_per_iter",
    "hess_evals_per_iter",
    "diverged",
]

# Axes a sweep may vary, mapped to the run/* key they override
SWEEP_AXES = {
    "K": "run/K",
    "S": "run/S",
    "B": "run/B",
    "T": "run/T",
    "D": "run/D",
    "N": "run/N",
    "alpha": "run/alpha",
}

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_DIVERGED = 3

# Finite-difference acceptance for the meta gradient
FD_TOLERANCE = {
    "quadratic": 1e-8,
    "mse": 1e-8,
    "trig": 1e-5,
}

# Number of standard errors a Monte-Carlo estimate may move before a bound check fails
MC_SIGMA_BAND = 3.0

# Relative slack granted to deterministic inequalities for floating-point rounding
DETERMINISTIC_RTOL = 1e-10

# Output index draws used for E||grad L(w_zeta)||
ZETA_DRAWS = 100

# Absolute slack for deterministic inequalities whose two sides can both be exactly zero
DETERMINISTIC_ATOL = 1e-12

# Report kinds; cross checks are informational and never fail a suite
REPORT_KINDS = ("deterministic", "stochastic", "exact", "threshold", "cross_check")
