import csv
import json

import pytest

from treedlm.cli import EXIT_CODES, main

FAST = ["--iterations", "30", "--burn-in", "10", "--thin", "2", "--A", "3"]


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="module")
def sim1(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim1")
    assert main(["simulate", "--scenario", "1", "--n", "200", "--T", "12", "--seed", "7", "--out", str(d)]) == 0
    return d


def test_simulate_deterministic(sim1, tmp_path):
    assert main(["simulate", "--scenario", "1", "--n", "200", "--T", "12", "--seed", "7", "--out", str(tmp_path)]) == 0
    a, b = _files(sim1), _files(tmp_path)
    assert set(a) == {"panel.csv", "truth.json", "run_manifest.json"}
    assert a["panel.csv"] == b["panel.csv"] and a["truth.json"] == b["truth.json"]


def test_fit_emits_outputs_and_reproduces_from_manifest(sim1, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["fit", "--data", str(sim1 / "panel.csv"), "--mode", "tdlm", "--family", "bernoulli",
            "--seed", "5", *FAST]
    assert main([*args, "--out", str(out1)]) == 0
    files = _files(out1)
    for name in ("marginal_dlm.csv", "inclusion.csv", "cumulative.csv", "chain_diagnostics.csv",
                 "run_manifest.json", "draws.npz"):
        assert name in files
    manifest = json.loads(files["run_manifest.json"])
    assert manifest["seed"] == 5 and manifest["config"]["seed"] == 5
    assert main(["fit", "--config", str(out1 / "run_manifest.json"), "--out", str(out2)]) == 0
    again = _files(out2)
    for name in ("marginal_dlm.csv", "cumulative.csv", "draws.npz", "chain_diagnostics.csv"):
        assert again[name] == files[name]

    summ = tmp_path / "s"
    assert main(["summarize", "--draws", str(out1 / "draws.npz"), "--out", str(summ)]) == 0
    assert _files(summ)["marginal_dlm.csv"] == files["marginal_dlm.csv"]


def test_fit_mixture_writes_interaction_surfaces(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--scenario", "2", "--n", "150", "--T", "10", "--M", "3", "--seed", "1",
                 "--out", str(sim)]) == 0
    out = tmp_path / "fit"
    assert main(["fit", "--data", str(sim / "panel.csv"), "--mode", "tdlmm_noself", "--seed", "2",
                 *FAST, "--out", str(out)]) == 0
    names = set(_files(out))
    assert "interaction_pm25_no2.csv" in names and "interaction_pm25_pm25.csv" not in names
    inc = _rows(out / "inclusion.csv")
    assert [r["term"] for r in inc[:3]] == ["pm25", "no2", "so2"]


def test_benchmark_table2_schema(tmp_path):
    assert main(["benchmark", "--scenario", "2", "--replicates", "3", "--n", "80", "--T", "10",
                 "--seed", "4", *FAST, "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "scores.csv")
    assert [r["model"] for r in rows] == ["TDLMMadd", "TDLMMns", "TDLMM"]
    for col in ("rmse_pm25", "rmse_no2", "coverage_pm25", "coverage_no2", "tp_pm25", "fp_pm25", "fp_no2",
                "pip_pm25", "pip_pair"):
        assert col in rows[0]
    assert len(_rows(tmp_path / "replicates.csv")) == 9


def test_config_file_and_flag_override(tmp_path, sim1):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sampler\nmode = tdlm\nfamily = bernoulli\niterations = 20\nburn_in = 10\nthin = 5\nA = 2\n")
    out = tmp_path / "o"
    assert main(["fit", "--config", str(cfg), "--thin", "2", "--data", str(sim1 / "panel.csv"),
                 "--out", str(out)]) == 0
    m = json.loads((out / "run_manifest.json").read_text())
    assert m["config"]["thin"] == 2 and m["config"]["iterations"] == 20


@pytest.mark.parametrize("argv,cat", [
    ([], "usage"),
    (["fit", "--bogus"], "usage"),
    (["fit", "--iterations", "ten"], "usage"),
    (["fit", "--data", "x.csv", "--burn-in", "50", "--iterations", "10"], "config"),
    (["fit", "--mode", "nope", "--data", "x.csv"], "config"),
    (["fit"], "config"),
    (["fit", "--data", "/nonexistent/panel.csv", "--mode", "tdlm"], "io"),
    (["summarize", "--draws", "/nonexistent/d.npz", "--out", "OUT"], "io"),
])
def test_exit_codes(argv, cat, tmp_path, capsys):
    argv = [a.replace("OUT", str(tmp_path / "o")) for a in argv]
    if argv and argv[0] == "fit":
        argv += ["--out", str(tmp_path / "o")]
    code = main(argv)
    assert code == EXIT_CODES[cat]
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith(f"treedlm: error[{cat}]: ")


def test_exit_code_values_distinct():
    assert len(set(EXIT_CODES.values())) == len(EXIT_CODES)
    assert EXIT_CODES["ok"] == 0


def test_tdlm_on_mixture_panel_is_config_error(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--scenario", "2", "--n", "50", "--T", "8", "--M", "2", "--out", str(sim)]) == 0
    code = main(["fit", "--data", str(sim / "panel.csv"), "--mode", "tdlm", *FAST, "--out", str(tmp_path / "o")])
    assert code == EXIT_CODES["config"]
