"""Unit tests for YAML config parsing and the command-line front end."""

import numpy as np
import pytest

from noncolliding import ConfigError, parse_config, serialize_config, build_system
from noncolliding.cli import main

DYSON_YAML = """
system:
  d: 3
  gamma:
    uniform: 4.0
  drift:
    kind: zero
  diffusion:
    kind: constant_matrix
    matrix: [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
  x0:
    linspace: [-1.0, 1.0]
run:
  scheme: semi_implicit
  T: 1.0
  n: 16
  levels: [8, 16, 32]
  ref_level: 128
  paths: 20
  seed: 7
"""


class TestParse:
    def test_minimal_dyson(self):
        cfg = parse_config(DYSON_YAML)
        assert cfg.system.d == 3
        assert cfg.system.gamma_kind == "uniform"
        assert cfg.run.seed == 7
        assert cfg.output.format == "csv"

    def test_non_dyadic_levels(self):
        bad = DYSON_YAML.replace("[8, 16, 32]", "[3]")
        with pytest.raises(ConfigError) as exc:
            parse_config(bad)
        assert "run.levels" in str(exc.value)
        assert "powers of 2" in str(exc.value)

    def test_missing_seed(self):
        bad = DYSON_YAML.replace("  seed: 7\n", "")
        with pytest.raises(ConfigError) as exc:
            parse_config(bad)
        assert "run.seed" in str(exc.value)

    def test_ref_level_ratio(self):
        bad = DYSON_YAML.replace("ref_level: 128", "ref_level: 64")
        with pytest.raises(ConfigError) as exc:
            parse_config(bad)
        assert "run.ref_level" in str(exc.value)

    def test_syntax_error_carries_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("system:\n  d: [unclosed\n")
        assert "line" in str(exc.value)

    def test_unknown_block(self):
        with pytest.raises(ConfigError):
            parse_config(DYSON_YAML + "\nextras:\n  x: 1\n")

    def test_unordered_x0(self):
        bad = DYSON_YAML.replace("linspace: [-1.0, 1.0]", "linspace: [1.0, -1.0]")
        with pytest.raises(ConfigError) as exc:
            parse_config(bad)
        assert "system.x0" in str(exc.value)

    def test_round_trip(self):
        cfg = parse_config(DYSON_YAML)
        again = parse_config(serialize_config(cfg))
        assert again == cfg

    def test_build_system(self):
        sys_ = build_system(parse_config(DYSON_YAML).system)
        assert sys_.d == 3
        assert sys_.is_uniform() and sys_.uniform_value() == 4.0
        assert np.allclose(sys_.x0, [-1.0, 0.0, 1.0])


@pytest.fixture
def dyson_config(tmp_path):
    path = tmp_path / "dyson.yaml"
    path.write_text(DYSON_YAML)
    return str(path)


class TestCli:
    def test_solve_closed_form(self, capsys):
        code = main(["solve", "--a", "0,3", "--c-uniform", "2"])
        out = capsys.readouterr().out.splitlines()
        assert code == 0
        row = out[1].split(",")
        assert float(row[0]) == pytest.approx(-0.5, abs=1e-10)
        assert float(row[1]) == pytest.approx(3.5, abs=1e-10)

    def test_solve_requires_one_c(self, capsys):
        code = main(["solve", "--a", "0,1"])
        assert code == 2

    def test_global_flags_both_positions(self, dyson_config, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        assert main(["--config", dyson_config, "simulate", "--paths", "2", "--out", str(out1)]) == 0
        assert main(["simulate", "--paths", "2", "--config", dyson_config, "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_byte_identical_reruns(self, dyson_config, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        argv = ["converge", "--config", dyson_config]
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_seed_override_changes_output(self, dyson_config, capsys):
        assert main(["simulate", "--config", dyson_config, "--paths", "1"]) == 0
        base = capsys.readouterr().out
        assert main(["simulate", "--config", dyson_config, "--paths", "1", "--seed", "8"]) == 0
        other = capsys.readouterr().out
        assert base != other

    def test_simulate_columns(self, dyson_config, capsys):
        assert main(["simulate", "--config", dyson_config, "--paths", "1", "--n", "4"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "path_id,k,t,x_1,x_2,x_3,min_gap"
        assert len(out) == 1 + 5  # header + n+1 rows

    def test_check_pass_and_fail_codes(self, dyson_config, tmp_path, capsys):
        # gamma = 4: ratio = 4, p = 3 passes
        assert main(["check", "--config", dyson_config, "--p", "3"]) == 0
        capsys.readouterr()
        # gamma = 1: ratio = 1 < 2 -> condition-failed exit code
        weak = tmp_path / "weak.yaml"
        weak.write_text(DYSON_YAML.replace("uniform: 4.0", "uniform: 1.0"))
        assert main(["check", "--config", str(weak), "--p", "1"]) == 1
        out = capsys.readouterr().out
        assert "false" in out

    def test_missing_config_file_is_io_error(self):
        assert main(["simulate", "--config", "/nonexistent/x.yaml"]) == 4

    def test_invalid_config_is_validation_error(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("system:\n  d: 1\n")
        assert main(["simulate", "--config", str(bad)]) == 2

    def test_subcommand_without_config_is_validation_error(self):
        assert main(["converge"]) == 2

    def test_inequalities_full(self, capsys):
        assert main(["inequalities", "--kind", "full", "--d", "4", "--p", "1", "--count", "2000"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "kind,d,p,count,chi,violations"
        assert out[1].endswith(",0")

    def test_chi_bar_output(self, capsys):
        assert main(["chi-bar", "--d", "3", "--p", "0"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "d,p,chi"
        assert float(out[1].split(",")[2]) == pytest.approx(np.sqrt(2.0), abs=1e-3)

    def test_nonconvergence_exit_code(self, capsys):
        # a huge scale with an impossible tolerance budget cannot converge
        code = main(["solve", "--a", "0,1,50", "--c-uniform", "2", "--method", "newton", "--tol", "1e-300"])
        assert code == 3
