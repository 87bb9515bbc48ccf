import csv
import json

import numpy as np
import pytest

from kvrecon import cli, data


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert cli.main(["generate", "--case", "A2:B1", "--out", str(out)]) == 0
    return out


def test_generate_writes_dataset_and_manifest(dataset_dir):
    assert (dataset_dir / "dataset.txt").exists()
    manifest = json.loads((dataset_dir / "manifest.json").read_text())
    assert manifest["admittance"] == "A2" and manifest["boundary"] == "B1"
    pairs, m = data.load_dataset(dataset_dir / "dataset.txt")
    assert len(pairs) == 2 and m.noise == 0.0


def test_generate_echoes_manifest_and_residual(tmp_path, capsys):
    assert cli.main(["generate", "--case", "A1:B3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "admittance=A1" in out and "flux compatibility residual k=2" in out


def test_generate_noisy_reproducible(tmp_path):
    args = ["generate", "--case", "A2:B1", "--noise", "0.005", "--seed", "7"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "dataset.txt").read_bytes()
    assert a == (tmp_path / "b" / "dataset.txt").read_bytes()
    assert b"noise=0.005" in a


@pytest.mark.parametrize("case", ["A9:B1", "A1", "A1:B1:B2", "B1:A1"])
def test_unknown_case_is_usage_error(case, tmp_path, capsys):
    assert cli.main(["generate", "--case", case, "--out", str(tmp_path)]) == 2
    assert "invalid case" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_reconstruct_outputs(dataset_dir, tmp_path):
    out = tmp_path / "run"
    code = cli.main(["reconstruct", "--data", str(dataset_dir / "dataset.txt"), "--out", str(out),
                     "--max-iter", "3", "--emit-svg", "--log-every", "0"])
    assert code == 0
    rows = list(csv.DictReader(open(out / "history.csv")))
    assert [r["iter"] for r in rows] == ["0", "1", "2", "3"]
    J = [float(r["J"]) for r in rows]
    assert all(b <= a for a, b in zip(J, J[1:]))
    alpha = (out / "alpha.csv").read_text().splitlines()
    assert alpha[0] == "arclength,alpha" and len(alpha) == 151
    summary = json.loads((out / "summary.json").read_text())
    assert summary["case"] == "A2:B1" and summary["iterations"] == 3
    assert summary["final_hausdorff"] < summary["config"]["r0"]
    assert (out / "snapshots" / "gamma_0000.csv").exists()
    assert (out / "snapshots" / "gamma_0003.csv").exists()
    for name in ("boundary.svg", "history.svg"):
        assert (out / name).read_text().startswith("<svg")


def test_reconstruct_zero_iterations(tmp_path):
    out = tmp_path / "zero"
    assert cli.main(["reconstruct", "--case", "A2:B1", "--out", str(out), "--max-iter", "0"]) == 0
    assert len((out / "history.csv").read_text().splitlines()) == 2


def test_reconstruct_outputs_byte_identical(dataset_dir, tmp_path):
    for name in ("a", "b"):
        cli.main(["reconstruct", "--data", str(dataset_dir / "dataset.txt"), "--out", str(tmp_path / name),
                  "--max-iter", "2", "--log-every", "0"])
    for f in ("history.csv", "alpha.csv", "summary.json", "snapshots/gamma_0002.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_file_and_flag_precedence(dataset_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_iter": 1, "mu": 0.25, "beta": 2.0, "data": str(dataset_dir / "dataset.txt")}))
    out = tmp_path / "run"
    assert cli.main(["reconstruct", "--config", str(cfg), "--out", str(out), "--max-iter", "2",
                     "--log-every", "0"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["max_iter"] == 2          # flag wins
    assert summary["config"]["mu"] == 0.25 and summary["config"]["beta"] == 2.0


@pytest.mark.parametrize("content", ["{not json", json.dumps({"colour": 1}), json.dumps([1, 2])])
def test_bad_config_is_usage_error(content, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(content)
    assert cli.main(["reconstruct", "--config", str(cfg), "--case", "A1:B1"]) == 2


def test_invalid_run_parameter_is_usage_error(tmp_path):
    assert cli.main(["reconstruct", "--case", "A1:B1", "--beta", "0.5", "--out", str(tmp_path)]) == 2


def test_missing_dataset_is_usage_error(tmp_path):
    assert cli.main(["reconstruct", "--data", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]) == 2


def test_reconstruct_without_input_is_usage_error(tmp_path):
    assert cli.main(["reconstruct", "--out", str(tmp_path)]) == 2


def test_corrupt_dataset_is_runtime_failure(dataset_dir, tmp_path):
    lines = (dataset_dir / "dataset.txt").read_text().splitlines()
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(lines[:40]) + "\n")
    assert cli.main(["reconstruct", "--data", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_breakdown_exit_code_keeps_outputs(dataset_dir, tmp_path, monkeypatch):
    from kvrecon import descent
    from kvrecon.mesh import MeshBreakdown

    def broken(mesh, alpha=None):
        raise MeshBreakdown("inner boundary is self-intersecting")
    monkeypatch.setattr(descent, "resample_gamma", broken)
    out = tmp_path / "bd"
    code = cli.main(["reconstruct", "--data", str(dataset_dir / "dataset.txt"), "--out", str(out),
                     "--max-iter", "5", "--config", str(_cfg(tmp_path, resample_period=2)), "--log-every", "0"])
    assert code == 1
    assert json.loads((out / "summary.json").read_text())["breakdown"] is True
    assert (out / "history.csv").exists()


def _cfg(tmp_path, **kw):
    p = tmp_path / "extra.json"
    p.write_text(json.dumps(kw))
    return p


def test_validate_subset(tmp_path, capsys):
    report = tmp_path / "report.csv"
    assert cli.main(["validate", "--checks", "fem-convergence,radial-oracle", "--out", str(report)]) == 0
    rows = list(csv.DictReader(open(report)))
    assert [r["check"] for r in rows] == ["fem-convergence", "radial-oracle", "radial-flux"]
    assert all(r["pass"] == "true" for r in rows)
    assert "PASS fem-convergence" in capsys.readouterr().out


def test_validate_fault_injection_fails(tmp_path):
    report = tmp_path / "report.csv"
    assert cli.main(["validate", "--checks", "shape-gradient", "--fault", "curvature-sign",
                     "--out", str(report)]) == 1
    rows = {r["check"]: r for r in csv.DictReader(open(report))}
    assert rows["shape-gradient-fd"]["pass"] == "false"


def test_validate_unknown_check():
    assert cli.main(["validate", "--checks", "nope"]) == 2


def test_all_cases_flag_parses():
    args = cli.build_parser().parse_args(["reconstruct", "--all-cases", "--workers", "3"])
    assert args.all_cases is True and args.workers == 3


def test_svg_writers(tmp_path):
    from kvrecon import svg
    t = np.linspace(0, 2 * np.pi, 50, endpoint=False)
    svg.boundary_overlay(tmp_path / "b.svg", {"circle": np.stack([np.cos(t), np.sin(t)], 1)})
    svg.history_chart(tmp_path / "h.svg", {"J": [1.0, 0.1, 0.01], "tau": [np.nan, 0.5, 0.2]})
    for name in ("b.svg", "h.svg"):
        text = (tmp_path / name).read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
