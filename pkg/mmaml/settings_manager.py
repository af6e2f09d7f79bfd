from pathlib import Path

from PyQt6.QtCore import QSettings

from .config import SWEEP_AXES
from .errors import ConfigError
from .logger import APP_DATA_DIR, logger


def _to_bool(value):
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in {"1", "true", "yes", "on"}:
        return True
    if text in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _to_alpha(value):
    text = str(value).strip().lower()
    if text == "auto":
        return "auto"
    return float(text)


def _to_int_list(value):
    text = str(value).strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(",") if part.strip())


def _to_float_list(value):
    text = str(value).strip()
    if not text:
        return ()
    return tuple(float(part) for part in text.split(",") if part.strip())


def _plain_text(value):
    # QSettings hands back comma separated INI values as a list
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return ",".join(str(part).strip() for part in value)
    return value


class ExperimentSettings:
    SETTINGS_DIR = APP_DATA_DIR / "settings"
    SETTINGS_FILE = SETTINGS_DIR / "experiment.ini"

    KEY_FAMILY_KIND = "family/kind"
    KEY_FAMILY_PATH = "family/path"
    KEY_FAMILY_D = "family/d"
    KEY_FAMILY_TASKS = "family/num_tasks"
    KEY_FAMILY_SEED = "family/seed"
    KEY_FAMILY_RADIUS = "family/radius"
    KEY_FAMILY_L_TARGET = "family/L_target"
    KEY_FAMILY_SIGMA = "family/sigma"
    KEY_FAMILY_SIGMA_G = "family/sigma_g"
    KEY_FAMILY_SIGMA_H = "family/sigma_H"
    KEY_FAMILY_C_MAX = "family/c_max"
    KEY_FAMILY_A_MAX = "family/a_max"
    KEY_FAMILY_LAMBDA = "family/lam"
    KEY_FAMILY_SUPPORT = "family/support_size"
    KEY_FAMILY_QUERY = "family/query_size"
    KEY_FAMILY_NOISE = "family/noise_std"

    KEY_RUN_N = "run/N"
    KEY_RUN_K = "run/K"
    KEY_RUN_B = "run/B"
    KEY_RUN_S = "run/S"
    KEY_RUN_D = "run/D"
    KEY_RUN_T = "run/T"
    KEY_RUN_BPRIME = "run/Bprime"
    KEY_RUN_DL = "run/DL"
    KEY_RUN_ALPHA = "run/alpha"
    KEY_RUN_C_BETA = "run/C_beta"
    KEY_RUN_SEED = "run/seed"
    KEY_RUN_WORKERS = "run/workers"
    KEY_RUN_UNSAFE = "run/allow_unsafe_alpha"
    KEY_RUN_RECORD = "run/record_exact_grad"
    KEY_RUN_INIT_FRACTION = "run/init_radius_fraction"
    KEY_RUN_ZETA_DRAWS = "run/zeta_draws"

    KEY_VERIFY_PATH_TRIALS = "verify/path_trials"
    KEY_VERIFY_BIAS_TRIALS = "verify/bias_trials"
    KEY_VERIFY_STEPSIZE_TRIALS = "verify/stepsize_trials"
    KEY_VERIFY_LEMMA_TRIALS = "verify/lemma_trials"
    KEY_VERIFY_SMOOTHNESS_PAIRS = "verify/smoothness_pairs"
    KEY_VERIFY_FD_POINTS = "verify/fd_points"
    KEY_VERIFY_SLOPE_S = "verify/slope_S"
    KEY_VERIFY_SLOPE_TRIALS = "verify/slope_trials"
    KEY_VERIFY_PATH_FACTOR = "verify/path_factor"

    KEY_SWEEP_K = "sweep/K"
    KEY_SWEEP_S = "sweep/S"
    KEY_SWEEP_B = "sweep/B"
    KEY_SWEEP_T = "sweep/T"
    KEY_SWEEP_D = "sweep/D"
    KEY_SWEEP_N = "sweep/N"
    KEY_SWEEP_ALPHA = "sweep/alpha"

    DEFAULTS = {
        KEY_FAMILY_KIND: "quadratic",
        KEY_FAMILY_PATH: "",
        KEY_FAMILY_D: 5,
        KEY_FAMILY_TASKS: 10,
        KEY_FAMILY_SEED: 0,
        KEY_FAMILY_RADIUS: 10.0,
        KEY_FAMILY_L_TARGET: 1.0,
        KEY_FAMILY_SIGMA: 1.0,
        KEY_FAMILY_SIGMA_G: 0.0,
        KEY_FAMILY_SIGMA_H: 0.0,
        KEY_FAMILY_C_MAX: 1.0,
        KEY_FAMILY_A_MAX: 1.0,
        KEY_FAMILY_LAMBDA: 0.1,
        KEY_FAMILY_SUPPORT: 20,
        KEY_FAMILY_QUERY: 20,
        KEY_FAMILY_NOISE: 0.1,

        KEY_RUN_N: 3,
        KEY_RUN_K: 100,
        KEY_RUN_B: 10,
        KEY_RUN_S: 10,
        KEY_RUN_D: 10,
        KEY_RUN_T: 10,
        KEY_RUN_BPRIME: 10,
        KEY_RUN_DL: 10,
        KEY_RUN_ALPHA: "auto",
        KEY_RUN_C_BETA: 100.0,
        KEY_RUN_SEED: 0,
        KEY_RUN_WORKERS: 1,
        KEY_RUN_UNSAFE: False,
        KEY_RUN_RECORD: True,
        KEY_RUN_INIT_FRACTION: 0.5,
        KEY_RUN_ZETA_DRAWS: 100,

        KEY_VERIFY_PATH_TRIALS: 10000,
        KEY_VERIFY_BIAS_TRIALS: 100000,
        KEY_VERIFY_STEPSIZE_TRIALS: 100000,
        KEY_VERIFY_LEMMA_TRIALS: 1000,
        KEY_VERIFY_SMOOTHNESS_PAIRS: 1000,
        KEY_VERIFY_FD_POINTS: 100,
        KEY_VERIFY_SLOPE_S: (10, 100, 1000),
        KEY_VERIFY_SLOPE_TRIALS: 2000,
        KEY_VERIFY_PATH_FACTOR: "proof",

        KEY_SWEEP_K: (),
        KEY_SWEEP_S: (),
        KEY_SWEEP_B: (),
        KEY_SWEEP_T: (),
        KEY_SWEEP_D: (),
        KEY_SWEEP_N: (),
        KEY_SWEEP_ALPHA: (),
    }

    CONVERTERS = {
        KEY_FAMILY_KIND: str,
        KEY_FAMILY_PATH: str,
        KEY_RUN_ALPHA: _to_alpha,
        KEY_RUN_UNSAFE: _to_bool,
        KEY_RUN_RECORD: _to_bool,
        KEY_VERIFY_SLOPE_S: _to_int_list,
        KEY_VERIFY_PATH_FACTOR: str,
        KEY_SWEEP_ALPHA: _to_float_list,
    }

    ALLOWED = {
        KEY_FAMILY_KIND: {"quadratic", "trig", "mse"},
        KEY_VERIFY_PATH_FACTOR: {"proof", "statement"},
    }

    def __init__(self, path=None):
        if path is None:
            self.SETTINGS_DIR.mkdir(parents=True, exist_ok=True)
            path = self.SETTINGS_FILE
        else:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
        self.path = Path(path)
        self._settings = QSettings(str(self.path), QSettings.Format.IniFormat)
        if self._settings.status() != QSettings.Status.NoError:
            raise ConfigError(f"config file could not be parsed: {self.path}")
        self._overrides = {}

        unknown = sorted(set(self._settings.allKeys()) - set(self.DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys in {self.path}: {', '.join(unknown)}")

    @classmethod
    def _converter(cls, key):
        if key in cls.CONVERTERS:
            return cls.CONVERTERS[key]
        if key.startswith("sweep/"):
            return _to_int_list
        return float if isinstance(cls.DEFAULTS[key], float) else int

    def _convert(self, key, value):
        value = self._converter(key)(_plain_text(value))
        allowed = self.ALLOWED.get(key)
        if allowed is not None and value not in allowed:
            raise ValueError(f"{value!r} is not one of {sorted(allowed)}")
        return value

    def _get_value(self, key):
        if key in self._overrides:
            return self._overrides[key]
        raw = self._settings.value(key, self.DEFAULTS[key])
        try:
            return self._convert(key, raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value for {key} in {self.path}: {raw!r} ({e})") from e

    def set_override(self, key, value):
        if key not in self.DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        try:
            self._overrides[key] = self._convert(key, value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value for {key}: {value!r} ({e})") from e

    def apply_overrides(self, pairs):
        """Apply ``group/key=value`` strings; later pairs win."""
        for pair in pairs or ():
            key, separator, value = str(pair).partition("=")
            if not separator:
                raise ConfigError(f"override must look like group/key=value, got {pair!r}")
            self.set_override(key.strip(), value.strip())
            logger.debug("Override %s=%s", key.strip(), value.strip())
        return self

    def load(self):
        return {key: self._get_value(key) for key in self.DEFAULTS}

    def sweep_axes(self):
        """{axis: values} for every non-empty sweep key, in SWEEP_AXES order."""
        values = self.load()
        return {axis: values["sweep/" + axis] for axis in SWEEP_AXES if values["sweep/" + axis]}

    @classmethod
    def _serialize(cls, value):
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, (list, tuple)):
            return ",".join(cls._serialize(part) for part in value)
        return str(value)

    def save(self, settings_dict, path=None):
        """Write every key (missing ones from the defaults) to ``path`` or the settings file."""
        path = Path(path) if path is not None else self.path
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.exists():
            path.unlink()
        target = QSettings(str(path), QSettings.Format.IniFormat)
        for key, default_value in self.DEFAULTS.items():
            target.setValue(key, self._serialize(settings_dict.get(key, default_value)))
        target.sync()
        if target.status() != QSettings.Status.NoError:
            raise ConfigError(f"failed to write config file: {path}")
        return path

    def save_resolved(self, out_dir):
        return self.save(self.load(), Path(out_dir) / "resolved.ini")
