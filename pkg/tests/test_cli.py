import subprocess
import sys

import pytest

from cliffock.cli import main
from cliffock.config import ConfigError, dump_config, parse_config

SMALL = """\
model.n = 1
model.degree = 6
weight.type = quadratic_iso
weight.coeffs = 1
quadrature.order = 24
grid.half_width = 2.0
grid.spacing = 0.1
solver.trials = 2
samples.count = 4
diagonal.radius = 0.8
diagonal.step = 0.2
witness.k = 2, 4
harmonic.degrees = 4, 6
run.seed = 5
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_kernel_run_writes_tables(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL + "output.dir = out\n")
    code = main(["kernel", "--config", str(cfg)])
    assert code == 0
    out = tmp_path / "out"
    text = (out / "kernel_diag.csv").read_bytes()
    assert text.startswith(b"x0,x1,e0,e1,sup,relerr\n")
    assert b"\r" not in text
    assert (out / "kernel_eval.csv").exists() and (out / "kernel.gp").exists()
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS ") for line in lines)


def test_output_override(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    target = tmp_path / "elsewhere"
    assert main(["diagonal", "--config", str(cfg), "--output", str(target)]) == 0
    assert (target / "diagonal.csv").read_text().splitlines()[0] == "x0,x1,B0,ratio"


def test_missing_weight_is_usage_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "model.n = 1\nmodel.degree = 2\n")
    assert main(["kernel", "--config", str(cfg)]) == 2
    assert "weight.type" in capsys.readouterr().err


@pytest.mark.parametrize("text", [
    SMALL + "model.colour = red\n",
    SMALL + "this line has no equals sign\n",
    SMALL + "model.degree = six\n",
    SMALL + "mvi.radii = 0.5, 1.5\n",
    SMALL + "weight.type = quartic\n",
])
def test_bad_config_is_usage_error(tmp_path, text):
    assert main(["kernel", "--config", str(write_cfg(tmp_path, text))]) == 2


def test_bad_arguments_are_usage_errors(tmp_path):
    assert main(["nonsense", "--config", "x"]) == 2
    assert main(["kernel"]) == 2
    assert main(["kernel", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_config_round_trip():
    cfg = parse_config(SMALL)
    again = parse_config(dump_config(cfg))
    assert dump_config(again) == dump_config(cfg)
    assert again.witness_k == (2.0, 4.0) and again.n == 1
    with pytest.raises(ConfigError):
        parse_config("model.n = 0\nweight.type = quadratic_iso\n")


def test_runs_are_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    for target in (a, b):
        main(["mvi", "--config", str(cfg), "--output", str(target), "--quiet-warnings"])
        main(["witness", "--config", str(cfg), "--output", str(target), "--quiet-warnings"])
    names = sorted(p.name for p in a.iterdir())
    assert "witness.csv" in names and "mvi_summary.csv" in names
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_contract_failure_exit_code(tmp_path, capsys):
    # degrees 4 and 6 are too low for the harmonic constant to settle within 5%
    cfg = write_cfg(tmp_path, SMALL)
    assert main(["harmonic", "--config", str(cfg), "--output", str(tmp_path / "h")]) == 1
    assert "FAIL harmonic.stable" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, SMALL + "harmonic.degrees = 8, 10\n")
    proc = subprocess.run([sys.executable, "-m", "cliffock", "harmonic", "--config", str(cfg),
                           "--output", str(tmp_path / "h")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "PASS harmonic.stable" in proc.stdout
