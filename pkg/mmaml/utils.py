from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError
from .logger import logger

# Small numeric and filesystem helpers shared across modules.


def as_vector(w, dim=None):
    vector = np.asarray(w, dtype=float)
    if vector.ndim != 1:
        vector = vector.reshape(-1)
    if dim is not None and vector.shape[0] != dim:
        raise DimensionMismatchError(dim, vector.shape[0])
    return vector


def frozen(array):
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def spectral_norm(matrix):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return 0.0
    return float(np.linalg.norm(matrix, 2))


def sample_in_ball(rng, dim, radius):
    # Uniform in the d-ball: gaussian direction, radius ~ R * U^(1/d)
    direction = rng.standard_normal(dim)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return np.zeros(dim)
    scale = radius * rng.random() ** (1.0 / dim)
    return direction * (scale / norm)


def sample_pair_in_ball(rng, dim, radius):
    return sample_in_ball(rng, dim, radius), sample_in_ball(rng, dim, radius)


def mean_and_std_error(samples):
    samples = np.asarray(samples, dtype=float)
    count = samples.shape[0]
    mean = samples.mean(axis=0)
    if count < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(count)


def vector_mean_and_std_error(samples):
    # Norm of the mean of vector samples and the matching standard error
    samples = np.asarray(samples, dtype=float)
    mean, coordinate_se = mean_and_std_error(samples)
    return float(np.linalg.norm(mean)), float(np.sqrt(np.sum(coordinate_se ** 2)))


def ensure_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError:
        logger.error("Failed to create output directory: %s", path, exc_info=True)
        raise
    return path


def format_float(value):
    if value is None:
        return "n/a"
    value = float(value)
    if np.isnan(value):
        return "nan"
    if np.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.6g}"
