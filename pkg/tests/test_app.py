import pandas as pd
import pytest
import yaml

from mmaml.app import build_parser, main, resolve_alpha
from mmaml.config import EXIT_CONFIG_ERROR, EXIT_DIVERGED, EXIT_OK, METRICS_COLUMNS

FAMILY = [
    "family/d=3", "family/num_tasks=4", "family/radius=2", "family/sigma=0.5",
    "family/sigma_g=0.3", "family/sigma_H=0.1", "family/seed=5",
]
RUN = [
    "run/N=2", "run/K=5", "run/B=2", "run/S=3", "run/D=3", "run/T=3",
    "run/Bprime=2", "run/DL=2", "run/zeta_draws=10",
]
SMALL_VERIFY = [
    "verify/path_trials=30", "verify/bias_trials=30", "verify/stepsize_trials=30", "verify/lemma_trials=5",
    "verify/smoothness_pairs=5", "verify/fd_points=2", "verify/slope_trials=20",
]


def overrides(*groups):
    args = []
    for group in groups:
        for pair in group:
            args += ["--set", pair]
    return args


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        args = parser.parse_args(["run", "--seed", "4", "--set", "run/K=3", "--allow-unsafe-alpha"])
        assert args.command == "run"
        assert args.seed == 4
        assert args.set == ["run/K=3"]
        assert args.allow_unsafe_alpha

    def test_command_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_auto_alpha(self):
        assert resolve_alpha("auto", 2, 0.5) == pytest.approx(1.0 / 8.0)
        assert resolve_alpha("auto", 0, 0.5) == 0.0
        assert resolve_alpha(0.03, 2, 0.5) == 0.03


class TestRunCommand:
    def test_run_writes_outputs(self, tmp_path):
        out = tmp_path / "run"
        assert main(["run", "--out", str(out)] + overrides(FAMILY, RUN)) == EXIT_OK
        frame = pd.read_csv(out / "metrics.csv")
        assert list(frame.columns) == METRICS_COLUMNS
        assert len(frame) == 5
        for name in ("timings.csv", "summary.yaml", "family.yaml", "resolved.ini"):
            assert (out / name).is_file()

    def test_rerun_from_resolved_config_is_identical(self, tmp_path):
        first = tmp_path / "first"
        second = tmp_path / "second"
        assert main(["run", "--out", str(first), "--seed", "11"] + overrides(FAMILY, RUN)) == EXIT_OK
        assert main(["run", "--out", str(second), "--config", str(first / "resolved.ini")]) == EXIT_OK
        assert (first / "metrics.csv").read_bytes() == (second / "metrics.csv").read_bytes()

    def test_unsafe_alpha_is_a_config_error(self, tmp_path):
        code = main(["run", "--out", str(tmp_path / "run")] + overrides(FAMILY, RUN, ["run/alpha=1.0"]))
        assert code == EXIT_CONFIG_ERROR

    def test_unsafe_alpha_allowed_records_divergence(self, tmp_path):
        out = tmp_path / "run"
        code = main(["run", "--out", str(out), "--allow-unsafe-alpha"] + overrides(FAMILY, RUN, ["run/alpha=1e200"]))
        assert code == EXIT_OK
        summary = yaml.safe_load((out / "summary.yaml").read_text(encoding="utf-8"))
        assert summary["diverged"] is True
        assert summary["divergence_step"] == 0

    def test_outer_divergence_exit_code(self, tmp_path):
        code = main(["run", "--out", str(tmp_path / "run")] + overrides(FAMILY, RUN, ["run/C_beta=1e-300"]))
        assert code == EXIT_DIVERGED

    def test_bad_override(self, tmp_path):
        assert main(["run", "--out", str(tmp_path / "run"), "--set", "run/K"]) == EXIT_CONFIG_ERROR
        assert main(["run", "--out", str(tmp_path / "run"), "--set", "run/epochs=3"]) == EXIT_CONFIG_ERROR

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "absent.ini")]) == EXIT_CONFIG_ERROR

    def test_default_output_directory(self, isolated_home):
        assert main(["run"] + overrides(FAMILY, RUN)) == EXIT_OK
        assert (isolated_home / "output" / "run" / "metrics.csv").is_file()


class TestFamilyCommand:
    def test_saved_family_can_be_reused(self, tmp_path):
        family_dir = tmp_path / "family"
        assert main(["make-family", "--out", str(family_dir), "--set", "family/kind=trig"]
                    + overrides(FAMILY)) == EXIT_OK
        family_path = family_dir / "family.yaml"
        document = yaml.safe_load(family_path.read_text(encoding="utf-8"))
        assert document["family"] == "trig"

        out = tmp_path / "run"
        code = main(["run", "--out", str(out), "--set", f"family/path={family_path}"] + overrides(RUN))
        assert code == EXIT_OK
        assert len(pd.read_csv(out / "metrics.csv")) == 5

    def test_finite_sum_family_run(self, tmp_path):
        out = tmp_path / "run"
        args = ["run", "--out", str(out), "--set", "family/kind=mse", "--set", "family/support_size=6",
                "--set", "family/query_size=5"]
        assert main(args + overrides(FAMILY, RUN)) == EXIT_OK
        frame = pd.read_csv(out / "metrics.csv")
        # two query sets of 5 for the smoothness estimate
        assert (frame["grad_evals"] == 2 * (2 * 6 + 5) + 2 * 5).all()


class TestVerifyCommand:
    def test_noiseless_family_passes(self, tmp_path, capsys):
        out = tmp_path / "verify"
        noiseless = ["family/sigma_g=0", "family/sigma_H=0"]
        code = main(["verify", "--out", str(out)] + overrides(FAMILY, RUN, SMALL_VERIFY, noiseless))
        assert code == EXIT_OK
        reports = pd.read_csv(out / "reports.csv")
        assert "meta_gradient_fd" in set(reports["name"])
        assert "meta_gradient_fd" in capsys.readouterr().out


class TestConstantsCommand:
    def test_zero_hessian_lipschitz_family(self, tmp_path, capsys):
        code = main(["constants", "--out", str(tmp_path / "constants")] + overrides(FAMILY, RUN))
        assert code == EXIT_OK
        document = yaml.safe_load(capsys.readouterr().out)
        assert document["constants"]["C_L"] == 0.0
        assert document["plan"]["Bprime_min"] == 1
        assert "batch_sizes" in document
        assert (tmp_path / "constants" / "constants.yaml").is_file()

    def test_unsafe_alpha_prints_smoothness_terms_only(self, capsys):
        code = main(["constants", "--allow-unsafe-alpha"] + overrides(FAMILY, RUN, ["run/alpha=2.0"]))
        assert code == EXIT_OK
        document = yaml.safe_load(capsys.readouterr().out)
        assert "plan" not in document
        assert "theta" not in document["constants"]

    def test_allow_flag_with_safe_alpha_keeps_full_constants(self, capsys):
        code = main(["constants", "--allow-unsafe-alpha"] + overrides(FAMILY, RUN, ["run/alpha=0.01"]))
        assert code == EXIT_OK
        document = yaml.safe_load(capsys.readouterr().out)
        assert document["plan"]["alpha"] == 0.01
        assert "theta" in document["constants"]


class TestSweepCommand:
    def test_hessian_work_grows_linearly_with_inner_steps(self, tmp_path):
        out = tmp_path / "sweep"
        code = main(["sweep", "--out", str(out), "--set", "sweep/N=0,1,2,4"] + overrides(FAMILY, RUN))
        assert code == EXIT_OK
        frame = pd.read_csv(out / "sweep.csv")
        assert list(frame["N"]) == [0, 1, 2, 4]
        assert list(frame["hess_evals_per_iter"]) == [2 * N * 3 for N in (0, 1, 2, 4)]
        assert list(frame["grad_evals_per_iter"]) == [2 * (N * 3 + 3) + 2 * 2 for N in (0, 1, 2, 4)]
        assert (out / "points" / "0003" / "metrics.csv").is_file()

    def test_sweep_results_do_not_depend_on_workers(self, tmp_path):
        serial = tmp_path / "serial"
        pooled = tmp_path / "pooled"
        args = ["--set", "sweep/B=1,2,3"] + overrides(FAMILY, RUN)
        assert main(["sweep", "--out", str(serial), "--workers", "1"] + args) == EXIT_OK
        assert main(["sweep", "--out", str(pooled), "--workers", "3"] + args) == EXIT_OK
        for index in range(3):
            name = f"points/{index:04d}/metrics.csv"
            assert (serial / name).read_bytes() == (pooled / name).read_bytes()

    def test_empty_grid_is_a_config_error(self, tmp_path):
        assert main(["sweep", "--out", str(tmp_path / "sweep")] + overrides(FAMILY, RUN)) == EXIT_CONFIG_ERROR
