"""
End-to-end tests of the command-line surface and its report templates.
"""

import pytest

from ehmac.app import build_parser, main
from ehmac.constants import CsvColumns
from ehmac.registry import services
from ehmac.templates.reports import ReportTemplates

TINY_CONFIG = """
[system]
num_users = 1
horizon = 3

[model]
e_prob = 0.6

[training]
hidden_layers = [4]
epochs = 2
num_paths = 3

[experiment]
sweep_param = "e_prob"
sweep_values = [0.5]
episodes = 3
seed = 7
policies = ["greedy", "zero"]
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_CONFIG)
    yield str(path)
    services.config = None


class TestCommandLine:
    """Test exit codes and outputs of each sub-command."""

    def test_simulate(self, config_file, capsys):
        code = main(["simulate", "--config", config_file, "--policy", "greedy", "--policy", "zero"])
        out = capsys.readouterr().out
        assert code == 0
        assert "episodes=3 first_seed=7" in out
        assert "greedy" in out and "zero" in out

    def test_simulate_writes_csv(self, config_file, tmp_path, capsys):
        out_file = tmp_path / "sim.csv"
        code = main(["simulate", "--config", config_file, "--policy", "zero", "--out", str(out_file)])
        assert code == 0
        lines = out_file.read_text().splitlines()
        assert lines[0] == ",".join(CsvColumns.RESULTS)
        assert lines[1].startswith("none,0,zero,")

    def test_missing_config_reports_error_line(self, tmp_path, capsys):
        code = main(["simulate", "--config", str(tmp_path / "absent.toml")])
        err = capsys.readouterr().err.strip().splitlines()
        assert code == 1
        assert err[-1].startswith("error code=config-error message=")

    def test_unknown_key_is_named(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[system]\nusers = 2\n")
        assert main(["experiment", "--config", str(path)]) == 1
        assert 'message="system.users: unknown key"' in capsys.readouterr().err

    def test_zero_episodes_rejected(self, config_file, capsys):
        assert main(["simulate", "--config", config_file, "--episodes", "0", "--policy", "zero"]) == 1
        assert "experiment.episodes" in capsys.readouterr().err

    def test_usage_error_exits_with_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["launch"])
        assert exc.value.code == 2
        assert capsys.readouterr().err.startswith("error code=config-error")

    def test_solve_then_simulate_tables(self, config_file, tmp_path, capsys):
        tables = tmp_path / "tables.npz"
        assert main(["solve-mdp", "--config", config_file, "--out", str(tables)]) == 0
        assert "expected_cost=" in capsys.readouterr().out
        assert tables.exists()
        code = main(["simulate", "--config", config_file, "--policy", "mdp", "--tables", str(tables)])
        assert code == 0
        assert "mdp" in capsys.readouterr().out

    def test_dataset_then_training(self, config_file, tmp_path, capsys):
        dataset = tmp_path / "data.csv"
        model = tmp_path / "model.npz"
        assert main(["gen-offline", "--config", config_file, "--paths", "2", "--seed", "5",
                     "--out", str(dataset)]) == 0
        assert "records=6 paths=2 first_seed=5" in capsys.readouterr().out
        assert len(dataset.read_text().splitlines()) == 7
        argv = ["train-nn", "--config", config_file, "--dataset", str(dataset), "--out", str(model)]
        assert main(argv) == 0
        assert "layers=4x4x2" in capsys.readouterr().out
        assert main(["simulate", "--config", config_file, "--policy", "nn", "--model", str(model)]) == 0

    def test_experiment(self, config_file, tmp_path, capsys):
        results = tmp_path / "results.csv"
        assert main(["experiment", "--config", config_file, "--episodes", "2", "--out", str(results)]) == 0
        out = capsys.readouterr().out
        assert "results written" in out
        rows = results.read_text().splitlines()
        assert len(rows) == 3
        assert rows[1].startswith("e_prob,0.5,greedy,")

    def test_parser_collects_policies(self):
        args = build_parser().parse_args(["experiment", "--policy", "mdp", "--policy", "greedy"])
        assert args.policy == ["mdp", "greedy"]
        assert args.command == "experiment"


class TestReportTemplates:
    """Test the stdout templates."""

    def test_policy_table(self):
        text = ReportTemplates.policy_table({"greedy": (0.85, 0.01)}, episodes=100, seed=0)
        assert text.splitlines()[2].split() == ["greedy", "0.8500", "0.0100"]

    def test_sweep_table_marks_missing(self):
        text = ReportTemplates.sweep_table("i_prob", {0.4: {"greedy": 0.85}}, ["greedy", "mdp"])
        assert text.splitlines()[1].split() == ["0.4", "0.8500", "-"]

    def test_reference_deviation(self):
        lines = ReportTemplates.reference_deviation({0.4: {"greedy": 0.86, "mdp": 1.5}})
        assert len(lines) == 1
        assert lines[0].startswith("0.4 mdp")

    def test_training_summary_without_history(self):
        assert "best_validation_mse=n/a" in ReportTemplates.training_summary("m.npz", {"layer_sizes": [4, 2]})
