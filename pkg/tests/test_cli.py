import json
import shutil
import tempfile
from pathlib import Path

import pytest

from wick_utils.cli import parse_model, parse_rows, parse_variables, run
from wick_utils.combinatorics import Multiset
from wick_utils.errors import ModelError
from wick_utils.storage import open_kernel


def run_json(capsys, argv):
    code = run(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


class TestParsers:
    """Test the flag mini-languages."""

    def test_models(self):
        assert parse_model("gaussian:1").model_id == "gaussian:1"
        assert parse_model("poisson:1/2").model_id == "poisson:1/2"
        assert parse_model("fbm:0.7").H == 0.7
        with pytest.raises(ModelError, match="kind:value"):
            parse_model("poisson")
        with pytest.raises(ModelError, match="Unknown model kind"):
            parse_model("cauchy:1")
        with pytest.raises(ModelError, match="Invalid parameter"):
            parse_model("poisson:abc")

    def test_rows(self):
        assert parse_rows("2,1") == [Multiset(["x", "x"]), Multiset(["x"])]
        assert parse_rows("x,y;x") == [Multiset(["x", "y"]), Multiset(["x"])]

    def test_variables(self):
        variables = parse_variables("x@0.5,x@1")
        assert [v.time for v in variables] == [0.5, 1.0]
        assert parse_variables("x,y")[1].component == "y"


class TestAlgebraCommands:
    """Test the exact algebra subcommands."""

    def test_appell_pretty(self, capsys):
        code = run(["appell", "--model", "poisson:1", "--degree", "3", "--pretty"])
        assert code == 0
        assert capsys.readouterr().out == "x^3 - 3x^2 + 0x + 1\n"

    def test_appell_json(self, capsys):
        code, data = run_json(capsys, ["appell", "--model", "gaussian:1", "--degree", "2"])
        assert code == 0
        assert data["command"] == "appell"
        assert data["polynomial"]["terms"] == {"": "-1", "x,x": "1"}
        assert data["args"]["degree"] == 2
        assert "pretty" not in data["args"]

    def test_appell_methods_agree(self, capsys):
        texts = set()
        for method in ("recursive", "closed", "generating", "inverse"):
            run(["appell", "--model", "poisson:2", "--multiset", "x,x,x", "--method", method, "--pretty"])
            texts.add(capsys.readouterr().out)
        assert len(texts) == 1

    def test_wick_product(self, capsys):
        code = run(["wick-product", "--left", "x", "--right", "x", "--pretty"])
        assert code == 0
        assert capsys.readouterr().out == "x^2 + 0x - 1\n"

    def test_diagram_count(self, capsys):
        argv = ["diagrams", "--rows", "2,2,2", "--total", "--nonflat", "--gaussian", "--connected"]
        code = run(argv + ["--count", "--pretty"])
        assert code == 0
        assert capsys.readouterr().out == "8\n"

    def test_diagram_listing(self, capsys):
        code, data = run_json(capsys, ["diagrams", "--rows", "x,x;x,x", "--gaussian", "--total"])
        assert code == 0
        assert data["count"] == len(data["diagrams"]) == 3

    def test_diagram_csv(self, capsys):
        code = run(["diagrams", "--rows", "2,2", "--gaussian", "--total", "--nonflat", "--csv"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert "edges" in lines[0]
        assert len(lines) == 3

    def test_cumulant(self, capsys):
        code, data = run_json(capsys, ["cumulant", "--model", "poisson:2", "--vars", "x,x"])
        assert code == 0
        assert data["kappa"] == 2
        assert data["moment"] == 6

    def test_change_chaos(self, capsys):
        argv = ["change-chaos", "--rows", "x,x;x,x", "--basis", "monomial", "--pretty"]
        assert run(argv) == 0
        assert capsys.readouterr().out == "x^4 + 0x^3 - 2x^2 + 0x - 1\n"


class TestErrors:
    """Test exit codes and error reporting."""

    def test_usage_errors(self, capsys):
        assert run([]) == 2
        assert run(["appell", "--model", "gaussian:1"]) == 2
        assert "--degree" in capsys.readouterr().err
        assert run(["verify", "--grid", "16"]) == 2
        assert run(["appell", "--degree", "2", "--csv"]) == 2

    def test_version(self, capsys):
        assert run(["--version"]) == 0
        assert "wick" in capsys.readouterr().out

    def test_domain_error(self, capsys):
        code, data = run_json(capsys, ["appell", "--model", "poisson:abc", "--degree", "2"])
        assert code == 1
        assert data["error"]["type"] == "ModelError"

    def test_divergent_series_is_domain_error(self, capsys):
        code, data = run_json(
            capsys, ["mc", "--experiment", "exp-wick", "--paths", "200", "--seed", "1", "--eps", "0.7"]
        )
        assert code == 1
        assert data["error"]["type"] == "ConfigurationError"


@pytest.mark.integration
class TestSampledCommands:
    """Test commands that sample paths."""

    @pytest.fixture
    def temp_dir(self):
        path = tempfile.mkdtemp()
        yield path
        shutil.rmtree(path)

    def test_verify_scalar(self, capsys):
        argv = ["verify", "--n", "0", "--grid", "16", "--levels", "3", "--seed", "1"]
        code, data = run_json(capsys, argv)
        assert code == 0
        assert data["identity"] == "scalar"
        assert abs(data["mesh_table"][-1]["residual"]) < 1e-12
        assert data["seed"] == 1

    def test_verify_ito_residual(self, capsys):
        argv = ["verify", "--identity", "ito-residual", "--p", "x^2", "--grid", "32", "--seed", "2"]
        code, data = run_json(capsys, argv)
        assert code == 0
        assert abs(data["residual"]) < 1e-10

    def test_verify_ito_stratonovich(self, capsys):
        argv = ["verify", "--identity", "ito-stratonovich", "--p", "x^2", "--grid", "32", "--seed", "2"]
        code, data = run_json(capsys, argv)
        assert code == 0
        assert abs(data["residual"]) < 1e-10

    def test_verify_needs_fbm(self, capsys):
        code, data = run_json(capsys, ["verify", "--model", "poisson:1", "--seed", "1"])
        assert code == 1
        assert data["error"]["type"] == "ModelError"

    def test_mc_replay(self, capsys, temp_dir):
        artifact = str(Path(temp_dir) / "run.json")
        argv = ["mc", "--experiment", "zero-mean-wick", "--paths", "200", "--seed", "3", "--grid", "16"]
        assert run(argv + ["--output", artifact]) == 0
        first = Path(artifact).read_text()
        assert json.loads(first)["n_paths"] == 200

        assert run(["mc", "--input", artifact]) == 0
        assert capsys.readouterr().out == first

    @pytest.mark.parametrize(
        "argv",
        [
            ["appell", "--model", "poisson:1", "--degree", "3"],
            ["wick-product", "--left", "x^2", "--right", "x", "--model", "poisson:1"],
            ["diagrams", "--rows", "2,2", "--gaussian", "--total"],
            ["cumulant", "--model", "poisson:2", "--vars", "x,x,x"],
            ["change-chaos", "--rows", "x,x;x"],
            ["rosenblatt", "--n", "2"],
            ["verify", "--grid", "16", "--levels", "3", "--seed", "1"],
            ["mc", "--experiment", "zero-mean-wick", "--paths", "200", "--seed", "3", "--grid", "16"],
        ],
        ids=lambda argv: argv[0],
    )
    def test_replay_from_input_alone(self, capsys, temp_dir, argv):
        """Every subcommand reproduces its artifact from ``<command> --input <file>``."""
        artifact = str(Path(temp_dir) / "run.json")
        assert run(argv + ["--output", artifact]) == 0
        first = Path(artifact).read_text()
        capsys.readouterr()

        assert run([argv[0], "--input", artifact]) == 0
        assert capsys.readouterr().out == first

    def test_missing_flag_without_input(self, capsys):
        assert run(["diagrams", "--gaussian"]) == 2
        assert "--rows" in capsys.readouterr().err
        assert run(["mc", "--paths", "10", "--seed", "1"]) == 2
        assert "--experiment" in capsys.readouterr().err

    def test_replay_rejects_other_command(self, capsys, temp_dir):
        artifact = str(Path(temp_dir) / "run.json")
        assert run(["appell", "--degree", "2", "--output", artifact]) == 0
        assert run(["diagrams", "--input", artifact]) == 2
        assert "not 'diagrams'" in capsys.readouterr().err

    def test_mc_config_file(self, capsys, temp_dir):
        config = Path(temp_dir) / "exp.cfg"
        config.write_text("# smaller grid\ngrid=16\np=x^3\n")
        argv = ["mc", "--experiment", "zero-mean-wick", "--paths", "200", "--seed", "4"]
        code, data = run_json(capsys, argv + ["--config", str(config), "--set", "H=0.6"])
        assert code == 0
        assert data["config"] == {"p": "x^3", "H": 0.6, "grid": 16, "T": 1.0}

    def test_mc_bad_set(self, capsys):
        argv = ["mc", "--experiment", "zero-mean-wick", "--paths", "200", "--seed", "4"]
        assert run(argv + ["--set", "grid"]) == 2

    def test_rosenblatt_kernel(self, capsys, temp_dir):
        kernel_path = str(Path(temp_dir) / "kernel.json")
        argv = ["rosenblatt", "--n", "2", "--grid", "64", "--kernel-out", kernel_path]
        code, data = run_json(capsys, argv)
        assert code == 0
        assert data["cumulant"]["value"] == pytest.approx(1.0, rel=1e-8)
        assert 0.5 < data["kernel"]["variance"] <= 1.0
        assert [row["n_grid"] for row in data["kernel"]["convergence"]] == [16, 32, 64]
        kernel = open_kernel(kernel_path)
        assert kernel.size == 64

    def test_rosenblatt_joint(self, capsys):
        code, data = run_json(capsys, ["rosenblatt", "--times", "0.4,1"])
        assert code == 0
        assert data["cumulant"]["method"] == "covariance"
