from pathlib import Path

import numpy as np
import pytest

from apotential.cli import (OperatorFileError, format_operator, load_operator, main,
                            parse_operator_text)
from apotential.diffop import builtin
from apotential.spectral import project_afree, random_field, write_afield

OPS = Path(__file__).resolve().parent.parent / "operators"
SHIPPED = ["div2", "div3", "grad2", "grad3", "curl3d", "symgrad2", "curl2d"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


def test_div2_file_matches_builtin():
    assert load_operator(str(OPS / "div2.op")) == builtin("div", 2)
    assert load_operator("builtin:div:2") == builtin("div", 2)


@pytest.mark.parametrize("name", SHIPPED + ["diag", "B_grad"])
def test_shipped_files_round_trip(name):
    text = (OPS / f"{name}.op").read_text()
    op = parse_operator_text(text)
    body = "".join(l + "\n" for l in text.splitlines() if not l.startswith("#"))
    assert format_operator(op) == body
    assert parse_operator_text(format_operator(op)) == op


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_pairs_verify(capsys, name):
    code, out = run(capsys, "verify", OPS / f"{name}.op", OPS / f"{name}.potential.op",
                    "--samples", 100)
    assert code == 0 and "symbolic_zero: yes" in out


def test_parse_errors():
    good = "n=2\norder=1\ndim_from=2\ndim_to=1\n"
    with pytest.raises(OperatorFileError) as exc:
        parse_operator_text(good + "term alpha=(1,0): [[1,0]]\nterm alpha=(1,1): [[0,1]]\n")
    assert exc.value.lineno == 6
    with pytest.raises(OperatorFileError) as exc:
        parse_operator_text(good + "term alpha=(1,0): [[1,0,3]]\n")
    assert exc.value.lineno == 5
    with pytest.raises(OperatorFileError) as exc:
        parse_operator_text(good + "term alpha=(1,0) [[1,0]]\n")
    assert exc.value.lineno == 5
    with pytest.raises(OperatorFileError, match="missing"):
        parse_operator_text("n=2\norder=1\n")
    with pytest.raises(OperatorFileError):
        parse_operator_text(good + "flavour=3\n")


def test_canonical_ordering_and_rationals():
    text = ("# shuffled\nn=2\norder=1\ndim_from=1\ndim_to=1\n"
            "term alpha=(0,1): [[2/4]]\nterm alpha=(1,0): [[-6/3]]\n")
    out = format_operator(parse_operator_text(text))
    assert out.splitlines()[-2:] == ["term alpha=(1,0): [[-2]]", "term alpha=(0,1): [[1/2]]"]


def test_potential_then_verify(tmp_path, capsys):
    b = tmp_path / "B.op"
    code, _ = run(capsys, "potential", OPS / "div2.op", "-o", b)
    assert code == 0 and b.exists()
    code, out = run(capsys, "verify", OPS / "div2.op", b, "--samples", 100,
                    "-o", tmp_path / "t.csv")
    assert code == 0 and "rank_pairs: ((1,1))" in out
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 101


def test_verify_failure_exit(capsys):
    code, out = run(capsys, "verify", OPS / "div2.op", OPS / "grad2.op")
    assert code == 1 and "symbolic_zero: no" in out


def test_rank_certify_exit_codes(capsys):
    code, out = run(capsys, "rank", OPS / "diag.op", "--certify")
    assert code == 1 and "witness: (1,0)" in out
    code, out = run(capsys, "certify", OPS / "div2.op")
    assert code == 0 and "depth: 0" in out
    code, out = run(capsys, "rank", OPS / "curl3d.op")
    assert code == 0 and "generic_rank: 2" in out


def test_potential_of_diag_is_falsified(capsys):
    code, out = run(capsys, "potential", OPS / "diag.op")
    assert code == 1


def test_usage_and_input_errors(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["rank"])
    assert exc.value.code == 3
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 3
    code, out = run(capsys, "rank", tmp_path / "missing.op")
    assert code == 3 and "status: error" in out
    code, out = run(capsys, "envelope", OPS / "B_grad.op", "--f", "w1 + (", "--eta", "1,0,0,1")
    assert code == 3 and "offset 5" in out


def test_project_and_recover(tmp_path, capsys):
    w = random_field((16, 16), 2, 5, seed=1)
    with open(tmp_path / "w.afield", "w") as fh:
        write_afield(w, fh)
    code, out = run(capsys, "project", OPS / "div2.op", tmp_path / "w.afield",
                    "-o", tmp_path / "pw.afield")
    assert code == 0
    code, out = run(capsys, "recover", OPS / "div2.potential.op", tmp_path / "pw.afield",
                    "--annihilator", OPS / "div2.op", "-o", tmp_path / "u.afield")
    assert code == 0 and (tmp_path / "u.afield").exists()
    rel = float(out.split("relative_residual: ")[1].split()[0])
    assert rel < 1e-8
    code, out = run(capsys, "recover", OPS / "div2.potential.op", tmp_path / "w.afield",
                    "--annihilator", OPS / "div2.op")
    assert code == 1 and "not A-free" in out


def test_binary_fields(tmp_path, capsys):
    w = project_afree(builtin("div", 2), random_field((16, 16), 2, 5, seed=2))
    np.savez(tmp_path / "w.npz", coeffs=w.coeffs, real=np.array(True))
    code, _ = run(capsys, "project", OPS / "div2.op", tmp_path / "w.npz", "--binary",
                  "-o", tmp_path / "p.npz")
    assert code == 0 and (tmp_path / "p.npz").exists()


def test_envelope_command(capsys, tmp_path):
    code, out = run(capsys, "envelope", OPS / "B_grad.op", "--f", "det2", "--eta", "1,0,0,1",
                    "--budget", 200, "--seed", 7, "-o", tmp_path / "trace.csv")
    assert code == 0
    value = float(out.split("\nvalue: ")[1].split()[0])
    assert abs(value - 1) < 1e-4


def test_pipeline_and_moments(capsys, tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("# defaults, spelled out\nmollifier_cells=2\nmin_margin_cells=4\n")
    code, out = run(capsys, "pipeline", OPS / "div2.op", OPS / "div2.potential.op",
                    "--config", cfg, "--indices", "1,2", "--grid", 64, "-o", tmp_path / "p.csv")
    assert code == 0 and out.count("band_zero: yes") == 2
    code, out = run(capsys, "pipeline", OPS / "div2.op", OPS / "div2.potential.op",
                    "--set", "bogus=1", "--grid", 32)
    assert code == 3
    code, out = run(capsys, "moments", "--indices", "1,2", "--grid", 32, "--f", "w2^2")
    vals = [float(l.split(": ")[1]) for l in out.splitlines() if l.startswith("w2^2:")]
    assert code == 0 and len(vals) == 2 and np.allclose(vals, 0.5, atol=1e-12)


@pytest.mark.parametrize("argv", [
    ["rank", str(OPS / "diag.op"), "--certify", "--seed", "3"],
    ["verify", str(OPS / "curl3d.op"), str(OPS / "curl3d.potential.op"), "--seed", "9"],
    ["envelope", str(OPS / "B_grad.op"), "--f", "w1^2*w4^2 - w2", "--eta", "1,0.3,0,1",
     "--budget", "30", "--seed", "4", "--grid", "16", "--modes", "1"],
])
def test_reports_are_deterministic(capsys, tmp_path, argv):
    outs = []
    for i in range(2):
        rep = tmp_path / f"r{i}.txt"
        main(["--report", str(rep)] + argv)
        capsys.readouterr()
        outs.append(rep.read_bytes())
    assert outs[0] == outs[1]
