import pytest

from mmaml.errors import ConfigError
from mmaml.settings_manager import ExperimentSettings


class TestDefaults:
    def test_defaults_without_a_file(self):
        values = ExperimentSettings().load()
        assert values["family/kind"] == "quadratic"
        assert values["run/alpha"] == "auto"
        assert values["run/N"] == 3
        assert values["run/C_beta"] == 100.0
        assert values["run/allow_unsafe_alpha"] is False
        assert values["verify/slope_S"] == (10, 100, 1000)
        assert values["sweep/N"] == ()

    def test_settings_directory_is_created(self, isolated_home):
        ExperimentSettings()
        assert (isolated_home / "settings").is_dir()


class TestConfigFile:
    def test_values_are_typed(self, ini_file):
        path = ini_file({"run/N": 5, "run/C_beta": 80, "run/alpha": "0.01", "run/record_exact_grad": "false",
                         "family/kind": "trig", "verify/slope_S": "10,20"})
        values = ExperimentSettings(path).load()
        assert values["run/N"] == 5
        assert values["run/C_beta"] == 80.0 and isinstance(values["run/C_beta"], float)
        assert values["run/alpha"] == 0.01
        assert values["run/record_exact_grad"] is False
        assert values["family/kind"] == "trig"
        assert values["verify/slope_S"] == (10, 20)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentSettings(tmp_path / "absent.ini")

    def test_unknown_key(self, ini_file):
        with pytest.raises(ConfigError, match="run/steps"):
            ExperimentSettings(ini_file({"run/steps": 3}))

    @pytest.mark.parametrize("key, value", [
        ("run/N", "three"),
        ("run/allow_unsafe_alpha", "maybe"),
        ("family/kind", "cubic"),
        ("verify/path_factor", "lemma"),
        ("sweep/K", "10,x"),
    ])
    def test_invalid_values(self, ini_file, key, value):
        settings = ExperimentSettings(ini_file({key: value}))
        with pytest.raises(ConfigError):
            settings.load()


class TestOverrides:
    def test_override_wins_over_file(self, ini_file):
        settings = ExperimentSettings(ini_file({"run/K": 50}))
        settings.apply_overrides(["run/K=7", "run/seed=3", "run/K=9"])
        values = settings.load()
        assert values["run/K"] == 9
        assert values["run/seed"] == 3

    def test_unknown_override_key(self):
        with pytest.raises(ConfigError):
            ExperimentSettings().set_override("run/iterations", 3)

    def test_invalid_override_value(self):
        with pytest.raises(ConfigError):
            ExperimentSettings().apply_overrides(["run/B=ten"])

    def test_override_needs_equals_sign(self):
        with pytest.raises(ConfigError):
            ExperimentSettings().apply_overrides(["run/B"])

    def test_overrides_never_touch_the_file(self, ini_file):
        path = ini_file({"run/K": 50})
        before = path.read_text(encoding="utf-8")
        settings = ExperimentSettings(path)
        settings.apply_overrides(["run/K=7"])
        settings.load()
        assert path.read_text(encoding="utf-8") == before


class TestSaveAndSweep:
    def test_save_round_trip(self, tmp_path):
        settings = ExperimentSettings()
        values = settings.load()
        values.update({
            "run/alpha": 0.012345678901234567,
            "run/C_beta": 1e-3,
            "run/allow_unsafe_alpha": True,
            "sweep/alpha": (0.01, 0.02),
            "sweep/S": (1,),
            "family/path": str(tmp_path / "family.yaml"),
        })
        path = settings.save(values, tmp_path / "copy.ini")
        assert ExperimentSettings(path).load() == values

    def test_save_resolved_includes_overrides(self, tmp_path):
        settings = ExperimentSettings().apply_overrides(["run/N=6", "run/alpha=auto"])
        path = settings.save_resolved(tmp_path)
        assert path.name == "resolved.ini"
        values = ExperimentSettings(path).load()
        assert values["run/N"] == 6
        assert values["run/alpha"] == "auto"

    def test_sweep_axes_in_fixed_order(self, ini_file):
        settings = ExperimentSettings(ini_file({"sweep/alpha": "0.01,0.02", "sweep/N": "1,2,4"}))
        axes = settings.sweep_axes()
        assert list(axes) == ["N", "alpha"]
        assert axes["N"] == (1, 2, 4)
        assert axes["alpha"] == (0.01, 0.02)

    def test_single_sweep_value(self, ini_file):
        assert ExperimentSettings(ini_file({"sweep/B": "8"})).sweep_axes() == {"B": (8,)}

    def test_no_sweep_axes_by_default(self):
        assert ExperimentSettings().sweep_axes() == {}
