import csv
import json
import logging
import re
from pathlib import Path

import pytest

from homog.cli import ExperimentConfig, main, parse_config, parse_flags
from homog.errors import ConfigError


def _run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_defaults_fill_scale_range():
    cfg = parse_config(command="study-dirichlet")
    assert cfg.n_range == (1, 2, 3)
    assert cfg.N == 100 and cfg.dim == 2


def test_flag_forms():
    assert parse_flags(["N=3", "--dim=1", "--res", "2"]) == {"N": "3", "dim": "1", "res": "2"}


def test_invalid_N_names_the_key(capsys):
    code, _, err = _run(["study-cell", "N=0"], capsys)
    assert code == 2
    doc = json.loads(err.strip().splitlines()[-1])
    assert doc["error"]["category"] == "config"
    assert doc["error"]["message"].startswith("N")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(flags={"bogus": "1"}, command="study-cell")


def test_unknown_command_rejected(capsys):
    code, _, _ = _run(["frobnicate"], capsys)
    assert code == 2


def test_canonical_round_trip(tmp_path):
    cfg = parse_config(flags={"N": "7", "law": "weibull_tail:6,6", "r_grid": "0.1,0.2"}, command="study-dirichlet")
    p = tmp_path / "c.cfg"
    p.write_text(cfg.canonical())
    again = parse_config(p)
    assert again.canonical() == cfg.canonical()
    assert isinstance(again, ExperimentConfig)


def test_flags_override_file_with_warning(tmp_path, caplog):
    p = tmp_path / "c.cfg"
    p.write_text("command=study-cell\nN=5\n")
    with caplog.at_level(logging.WARNING):
        cfg = parse_config(p, {"N": "9"})
    assert cfg.N == 9
    assert any("overrides" in r.message for r in caplog.records)


def test_unwritable_output_exits_with_io_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = _run(["max-moment", f"out={blocker / 'sub'}", "samples=100"], capsys)
    assert code == 6
    assert json.loads(err.strip().splitlines()[-1])["error"]["category"] == "io"


def test_coverage_error_exit_code(capsys):
    code, _, _ = _run(["study-dirichlet", "domain=0.7", "N=2"], capsys)
    assert code == 2


def _outputs(tmp_path, threads):
    out = tmp_path / f"t{threads}"
    code = main(["study-cell", "dim=2", "n_range=0,1", "N=6", "res=2", "seed=3", f"threads={threads}",
                 "timings=false", f"out={out}"])
    assert code == 0
    return out


def test_outputs_do_not_depend_on_thread_count(tmp_path, capsys):
    a, b = _outputs(tmp_path, 1), _outputs(tmp_path, 8)
    capsys.readouterr()
    for name in ("study_cell.csv", "study_cell.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    ja, jb = (json.loads((d / "study_cell.json").read_text()) for d in (a, b))
    assert "threads" not in ja["config"]
    ja["config"].pop("out"), jb["config"].pop("out")
    assert ja == jb
    assert ja["timings"] == {"compute_s": 0.0, "plot_s": 0.0, "threads": 0}


def test_one_dimensional_convergence_matches_closed_form(tmp_path, capsys):
    out = tmp_path / "conv"
    code = main(["study-convergence", "dim=1", "n_range=0,1,2", "N=200", "res=2", "seed=5", f"out={out}",
                 "plots=false"])
    assert code == 0
    with open(out / "study_convergence.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    for row in rows:
        assert abs(float(row["err2"]) - float(row["exact"])) <= 3 * float(row["err2_se"])
    assert "study-convergence" in capsys.readouterr().out


SCHEMA = (Path(__file__).resolve().parents[1] / "docs" / "schema.md").read_text()


@pytest.mark.parametrize("cmd,extra", [
    ("check-invariants", ["N=2", "res=2", "probes=2"]),
    ("study-cell", ["N=3", "res=2", "n_range=0,1", "omega=true"]),
    ("study-convergence", ["N=30", "res=2", "dim=1", "n_range=0,1"]),
    ("suppressive-profile", ["law=weibull_tail:6,6", "n_max=2", "beta_p=0.25", "gamma_p=0.25"]),
    ("study-dirichlet", ["N=2", "res=2", "n_range=1", "r_grid=0.1"]),
    ("max-moment", ["samples=200"]),
])
def test_commands_write_documented_outputs(tmp_path, capsys, cmd, extra):
    out = tmp_path / cmd
    assert main([cmd, f"out={out}"] + extra) == 0
    stem = cmd.replace("-", "_")
    assert (out / f"{stem}.png").exists()
    doc = json.loads((out / f"{stem}.json").read_text())
    assert doc["config"]["command"] == cmd
    assert doc["results"]["rows"]
    assert set(doc) == {"config", "results", "timings"}
    for path in out.glob("*.csv"):
        raw = path.read_bytes()
        assert b"\r" not in raw
        header = raw.decode("utf-8").splitlines()[0].split(",")
        for col in header:
            assert f"`{re.sub(r'_[0-9]{2}$', '_ij', col)}`" in SCHEMA, col
