import csv
import io
import json

import pytest

from brmdd import cli
from brmdd.harness import read_results


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_borders_point_a(capsys):
    code, out, _ = run(capsys, "borders", "--q", "5.55", "--beta", "0.016")
    assert code == 0
    assert out.strip() == "localized_nonergodic"


def test_borders_several_points(capsys):
    code, out, _ = run(capsys, "borders", "--q", "5.55", "--beta", "0.016", "--q", "5.55", "--beta", "0.125")
    assert code == 0
    assert out.split()[-1] == "localized_ergodic"


def test_borders_grid(capsys):
    code, out, _ = run(capsys, "borders", "--points", "5")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# xi_e = 1 at q")
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    assert len(rows) == 5
    for r in rows:
        assert float(r["beta_ergodicity"]) >= float(r["beta_localization"]) * (1 - 1e-12)


def test_lsd_command(capsys, tmp_path):
    path = tmp_path / "lsd.csv"
    code, out, err = run(capsys, "lsd", "--beta", "1", "--v-over-dc", "0.45", "--K", "40",
                         "--realizations", "10", "--seed", "7", "-o", str(path))
    assert code in (0, 2)
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["E", "rho_w", "rho_bw_fit"]
    assert len(rows) == 41
    assert "gamma=" in err and "xi_e=" in err


def test_spacing_command(capsys):
    code, out, err = run(capsys, "spacing", "--q", "0.5", "--beta", "0.25", "--K", "40",
                         "--realizations", "4", "--spacing-bins", "10")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["S", "P", "poisson", "wigner_dyson"]
    assert len(rows) == 10
    assert "ks_poisson=" in err


def test_sweep_fit_report(capsys, tmp_path):
    spec = {
        "master_seed": 1,
        "cells": [{"q": q, "beta": 1.0, "K": 60, "realizations": 4} for q in (0.3, 0.6, 0.9, 1.2)],
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    out_dir = tmp_path / "res"
    code, out, _ = run(capsys, "sweep", str(spec_path), "--output-dir", str(out_dir))
    assert code == 0
    assert "4 cells" in out
    assert len(read_results(out_dir / "results.csv")) == 4

    code, out, _ = run(capsys, "sweep", str(spec_path), "--output-dir", str(out_dir))
    assert "4 resumed" in out

    code, out, _ = run(capsys, "fit", str(out_dir), "--law", "ergodic")
    assert code == 0 and out.startswith("ergodic_ipr: D1 =")

    # four points cannot span two decades
    code, _, err = run(capsys, "fit", str(out_dir), "--law", "xi_e")
    assert code == 2 and "decades" in err

    code, out, _ = run(capsys, "report", str(out_dir))
    assert code == 0 and "reference: D1 = 3.16" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["lsd", "--nope"],
        ["fit"],
        ["lsd", "--q", "1"],
        ["lsd", "--q", "1", "--beta", "1", "--v", "2"],
        ["lsd", "--N", "10", "--q", "1", "--beta", "1"],
        ["borders", "--q", "1"],
        ["lsd", "--q", "3", "--beta", "1", "--K", "20"],
        [],
    ],
)
def test_usage_errors(capsys, argv):
    with pytest.raises(SystemExit) as info:
        code = cli.main(argv)
        raise SystemExit(code)
    assert info.value.code == 1
    assert capsys.readouterr().err


def test_io_errors(capsys, tmp_path):
    code, _, err = run(capsys, "sweep", str(tmp_path / "missing.json"))
    assert code == 3 and "I/O" in err
    code, _, _ = run(capsys, "report", str(tmp_path))
    assert code == 3
