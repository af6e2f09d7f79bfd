import os
import tempfile

# The data directory is resolved when mmaml.logger is imported
os.environ.setdefault("MMAML_HOME", tempfile.mkdtemp(prefix="mmaml-tests-"))

import pytest

from mmaml.tasks import make_finite_sum_mse, make_quadratic_family, make_trig_family


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    import mmaml.app
    from mmaml.settings_manager import ExperimentSettings

    home = tmp_path / "home"
    monkeypatch.setenv("MMAML_HOME", str(home))
    monkeypatch.setattr(ExperimentSettings, "SETTINGS_DIR", home / "settings")
    monkeypatch.setattr(ExperimentSettings, "SETTINGS_FILE", home / "settings" / "experiment.ini")
    monkeypatch.setattr(mmaml.app, "APP_DATA_DIR", home)
    return home


@pytest.fixture(scope="session")
def quadratic_family():
    return make_quadratic_family(d=3, num_tasks=5, L_target=1.0, sigma=0.5, sigma_g=0.5, sigma_H=0.1, R=2.0, seed=1)


@pytest.fixture(scope="session")
def noiseless_quadratic():
    return make_quadratic_family(d=3, num_tasks=4, L_target=1.0, sigma=0.5, sigma_g=0.0, sigma_H=0.0, R=2.0, seed=4)


@pytest.fixture(scope="session")
def trig_family():
    return make_trig_family(d=3, num_tasks=5, c_max=1.0, a_max=1.0, lam=0.1, R=2.0, sigma_g=0.3, sigma_H=0.1, seed=2)


@pytest.fixture(scope="session")
def mse_family():
    return make_finite_sum_mse(d=3, num_tasks=6, support_size=8, query_size=10, noise_std=0.1, R=2.0, seed=3)


@pytest.fixture
def ini_file(tmp_path):
    """Factory writing a test config from {"group/key": value}."""

    def write(values, name="experiment.ini"):
        groups = {}
        for key, value in values.items():
            group, option = key.split("/", 1)
            groups.setdefault(group, []).append(f"{option}={value}")
        path = tmp_path / name
        path.write_text("".join(f"[{group}]\n" + "\n".join(lines) + "\n\n" for group, lines in groups.items()),
                        encoding="utf-8")
        return path

    return write
