import csv
import io
import json

import pytest

from overflowlab.cli import build_parser, parse_config, run


def test_validate_prints_intensities(mm1_file, capsys):
    assert run(["validate", "--network", str(mm1_file)]) == 0
    out = capsys.readouterr().out
    assert "0.428571429" in out
    assert "rho_star" in out


def test_validate_csv(tandem_file, capsys):
    assert run(["validate", "--network", str(tandem_file), "--format", "csv"]) == 0
    blocks = capsys.readouterr().out.split("\n\n")
    stations = list(csv.DictReader(io.StringIO(blocks[0])))
    assert [row["station"] for row in stations] == ["1", "2"]
    assert all(row["bottleneck"] == "yes" for row in stations)
    summary = list(csv.DictReader(io.StringIO(blocks[1])))
    assert summary[0]["beta"] == "2"


def test_exact_table(mm1_file, capsys):
    assert run(["exact", "--network", str(mm1_file), "--n", "2", "--target", "1"]) == 0
    assert "0.090000000" in capsys.readouterr().out


def test_exact_csv(mm1_file, capsys):
    assert run(["exact", "--network", str(mm1_file), "--n", "2", "--format", "csv"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert float(rows[0]["probability"]) == pytest.approx(0.09, abs=1e-9)
    assert rows[0]["x"] == "0"


def test_split_csv_is_reproducible(tandem_file, capsys):
    argv = [
        "split",
        "--network",
        str(tandem_file),
        "--n",
        "6",
        "--target",
        "1,1",
        "--m",
        "200",
        "--seed",
        "42",
        "--format",
        "csv",
    ]
    assert run(argv) == 0
    first = capsys.readouterr().out
    assert run(argv) == 0
    assert capsys.readouterr().out == first

    row = next(csv.DictReader(io.StringIO(first)))
    assert row["levels"] == "14"
    assert float(row["mean"]) > 0
    assert {"cv2", "mean_work", "std_error", "mean_Nn"} <= row.keys()


def test_mc_table(mm1_file, capsys):
    assert run(["mc", "--network", str(mm1_file), "--n", "2", "--m", "2000", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "mean" in out
    assert "cv2" in out


@pytest.mark.parametrize("command", ["split", "mc", "scaling"])
def test_stochastic_commands_require_a_seed(mm1_file, command, capsys):
    argv = [command, "--network", str(mm1_file), "--m", "10"]
    argv += ["--n-list", "2,3,4,5"] if command == "scaling" else ["--n", "3"]
    assert run(argv) == 2
    assert "--seed" in capsys.readouterr().err


def test_scaling_csv_is_identical_across_worker_counts(mm1_file, tmp_path):
    outputs = []
    for threads in ("1", "4", "1"):
        path = tmp_path / f"scaling-{threads}-{len(outputs)}.csv"
        argv = [
            "scaling",
            "--network",
            str(mm1_file),
            "--n-list",
            "3,4,5,6",
            "--m",
            "120",
            "--seed",
            "99",
            "--threads",
            threads,
            "--format",
            "csv",
            "--output",
            str(path),
        ]
        assert run(argv) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]

    rows, fits = outputs[0].decode().split("\n\n")
    header = rows.splitlines()[0]
    assert header == "n,estimate,exact,cv2,mean_Nn,mean_work"
    assert len(rows.splitlines()) == 5
    assert fits.splitlines()[0].startswith("quantity,slope,intercept,r_squared")


def test_check_reports_identities(tandem_file, capsys):
    assert run(["check", "--network", str(tandem_file), "--n", "5", "--format", "csv"]) == 0
    checks, exponents = capsys.readouterr().out.split("\n\n")
    values = {row["check"]: float(row["value"]) for row in csv.DictReader(io.StringIO(checks))}
    assert values["max |subsolution residual| at interior states"] <= 1e-12
    assert values["max |reversed row sum - 1|"] <= 1e-12
    assert values["max |ratio kernel - reversed network kernel|"] <= 1e-12
    assert values["regeneration lhs p_n(x)"] == pytest.approx(
        values["regeneration rhs taboo ratio"], abs=1e-8
    )
    assert "work_normalized_cv2" in exponents


def test_missing_network_file_names_the_path(tmp_path, capsys):
    path = tmp_path / "nowhere.json"
    assert run(["validate", "--network", str(path)]) == 1
    assert "nowhere.json" in capsys.readouterr().err


def test_non_utf8_network_file_exits_with_error(tmp_path, capsys):
    path = tmp_path / "latin.json"
    path.write_bytes('{"name": "caf\xe9"}'.encode("latin-1"))
    assert run(["validate", "--network", str(path)]) == 1
    assert "latin.json" in capsys.readouterr().err


def test_unstable_network_exits_with_error(tmp_path, capsys):
    path = tmp_path / "unstable.json"
    path.write_text(json.dumps({"lambda": [0.7], "mu": [0.3], "routing": [[0.0]]}))
    assert run(["validate", "--network", str(path)]) == 1
    assert "unstable" in capsys.readouterr().err


def test_start_in_target_exits_with_error(mm1_file, capsys):
    argv = ["split", "--network", str(mm1_file), "--n", "3", "--x", "4", "--m", "10", "--seed", "1"]
    assert run(argv) == 1
    assert "already" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        pytest.param(["exact", "--network", "a.json", "--n", "0"], id="zero-n"),
        pytest.param(["exact", "--network", "a.json", "--n", "3", "--target", "1,2"], id="non-binary-target"),
        pytest.param(["frobnicate", "--network", "a.json"], id="unknown-command"),
        pytest.param(["split", "--network", "a.json", "--n", "3", "--m", "x", "--seed", "1"], id="bad-m"),
    ],
)
def test_usage_errors(argv, capsys):
    assert run(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_parse_config_defaults():
    config, verbosity = parse_config(
        ["split", "--network", "net.json", "--n", "10", "--m", "100", "--seed", "3", "-vv"]
    )
    assert config.command == "split"
    assert config.v is None
    assert config.r == 2
    assert config.threads == 1
    assert config.fmt == "table"
    assert verbosity == 2


def test_parser_lists_all_commands():
    help_text = build_parser().format_help()
    for command in ("validate", "exact", "split", "mc", "scaling", "check"):
        assert command in help_text


@pytest.fixture()
def mm1_file(tmp_path):
    path = tmp_path / "mm1.json"
    path.write_text(json.dumps({"name": "M/M/1", "lambda": [0.3], "mu": [0.7], "routing": [[0.0]]}))
    return path


@pytest.fixture()
def tandem_file(tmp_path):
    path = tmp_path / "tandem_sym.json"
    path.write_text(
        json.dumps(
            {
                "name": "symmetric tandem",
                "lambda": [0.1, 0.0],
                "mu": [0.45, 0.45],
                "routing": [[0.0, 1.0], [0.0, 0.0]],
            }
        )
    )
    return path
