# Tests for the command line entry point
import json

from app import build_parser, main


def test_unknown_subcommand():
    assert main(["bogus"]) == 2


def test_invalid_override(tmp_path):
    assert main(["solve", "--m", "5", "--output-dir", str(tmp_path)]) == 2


def test_defect_requires_sequence():
    assert main(["defect"]) == 2


def test_options_reach_the_config():
    args = build_parser().parse_args(["symmetry", "--x", "0.1", "0", "0", "--r", "0.3", "--eps-thresh", "2"])
    assert args.x == [0.1, 0.0, 0.0]
    assert args.r == 0.3
    assert args.eps_thresh == 2.0
    assert args.strict is None


def test_solve_writes_outputs(tmp_path):
    code = main(["solve", "--m", "2", "--h", "1/8", "--boundary", "constant", "--output-dir", str(tmp_path)])
    assert code == 0
    saved = json.loads((tmp_path / "config.json").read_text())
    assert saved["boundary"] == "constant"
    assert saved["h"] == "1/8"
    assert (tmp_path / "solution.field").exists()


def test_unknown_experiment(tmp_path):
    assert main(["reproduce", "nope", "--output-dir", str(tmp_path)]) == 2


def test_interface_flags():
    parser = build_parser()
    sym = parser.parse_args(["symmetry", "--in", "field.bin", "--x", "0,0,0", "--r", "0.5", "--k", "1", "--eps", "0.01"])
    assert sym.field_path == "field.bin"
    assert sym.x == [0.0, 0.0, 0.0]
    assert sym.epsilon == 0.01
    dfc = parser.parse_args(["defect", "--seq", "dir/", "--p", "2", "--eps", "0.05"])
    assert dfc.eps_thresh == 0.05
    assert dfc.epsilon is None
    slv = parser.parse_args(["solve", "--boundary", "radial", "--target", "sphere:3", "--out", "field.bin"])
    assert slv.out == "field.bin"
    assert slv.output_dir is None


def test_bad_coordinates():
    assert main(["symmetry", "--x", "0,a,0"]) == 2


def test_solve_out(tmp_path):
    code = main(["solve", "--m", "2", "--h", "1/8", "--boundary", "constant", "--output-dir", str(tmp_path), "--out", "field.bin"])
    assert code == 0
    assert (tmp_path / "field.bin").read_bytes().startswith(b"PHARMFIELD v1 m=2 h=1/8")
    assert not (tmp_path / "solution.field").exists()


def test_symmetry_report(tmp_path):
    code = main([
        "symmetry", "--m", "3", "--h", "1/16", "--preset", "radial", "--x", "0,0,0", "--r", "0.5",
        "--eps", "0.01", "--output-dir", str(tmp_path),
    ])
    assert code == 0
    lines = (tmp_path / "symmetry.csv").read_text().splitlines()
    assert lines[1] == "x1,x2,x3,r,k,defect,symmetric,basis"
    assert lines[2].split(",")[4:5] == ["0"]
    assert lines[2].split(",")[6] == "1"
    body = json.loads((tmp_path / "symmetry.json").read_text())
    assert body["payload"]["is_symmetric"] is True
    assert body["payload"]["eps"] == 0.01
