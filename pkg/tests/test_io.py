import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from strategies import fake_draws
from treedlm.io import (
    PanelFormatError,
    atomic_write,
    build_outputs,
    check_writable,
    csv_text,
    load_draws,
    load_panel_csv,
    panel_csv_text,
    save_draws,
    write_outputs,
    write_panel_csv,
)
from treedlm.summary import EmptyDrawsError, critical_windows, marginal_dlm
from treedlm.trees import LagPanel


def test_small_panel(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("y,age,pm_1,pm_2\n1.5,30,0.1,0.2\n-0.5,41,0.3,0.4\n")
    panel, cov = load_panel_csv(p)
    assert (panel.n, panel.M, panel.T) == (2, 1, 2)
    assert cov == ["(intercept)", "age"]
    np.testing.assert_array_equal(panel.exposures[:, 0], [[0.1, 0.2], [0.3, 0.4]])
    assert panel.exposure_names == ["pm"]


def test_inconsistent_lags(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("y,pm_1,pm_2,pm_3,no2_1,no2_2\n" + "1,1,1,1,1,1\n")
    with pytest.raises(PanelFormatError, match="inconsistent T"):
        load_panel_csv(p)


@pytest.mark.parametrize("text,match", [
    ("y,pm_1,pm_2\n1,1,x\n", "row 2, column 'pm_2': non-numeric"),
    ("y,pm_1,pm_2\n1,1,NA\n", "missing value"),
    ("y,pm_1,pm_2\n1,1,inf\n", "non-finite"),
    ("y,pm_1,pm_3\n1,1,1\n", "pm_2"),
    ("y,pm_1,pm_2\n1,1\n", "row 2 has 2 fields"),
    ("q,pm_1,pm_2\n1,1,1\n", "missing column 'y'"),
    ("y,pm_1,pm_2\n", "no data rows"),
    ("y,a,b\n1,1,1\n", "no exposure columns"),
])
def test_format_errors(tmp_path, text, match):
    p = tmp_path / "a.csv"
    p.write_text(text)
    with pytest.raises(PanelFormatError, match=match):
        load_panel_csv(p)


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_panel_csv(tmp_path / "nope.csv")


def test_bernoulli_outcome_checked(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("y,pm_1,pm_2\n2,1,1\n0,1,2\n")
    with pytest.raises(PanelFormatError):
        load_panel_csv(p, family="bernoulli")


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(arrays(np.float64, (3, 2, 2), elements=finite), arrays(np.float64, (3,), elements=finite),
       arrays(np.float64, (3, 1), elements=finite))
def test_panel_round_trip_exact(x, y, z):
    import tempfile
    from pathlib import Path

    panel = LagPanel(x, np.hstack([np.ones((3, 1)), z]), y, exposure_names=["a", "b"])
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "p.csv"
        write_panel_csv(panel, path, ["(intercept)", "z1"])
        back, cov = load_panel_csv(path)
    np.testing.assert_array_equal(back.exposures, panel.exposures)
    np.testing.assert_array_equal(back.outcome, panel.outcome)
    # the stored constant column stands in for the intercept
    assert cov == ["(intercept)", "z1"]
    np.testing.assert_array_equal(back.covariates, panel.covariates)


@given(st.lists(finite, min_size=1, max_size=20))
def test_csv_floats_round_trip(vals):
    import csv
    import io

    text = csv_text(["v"], ([v] for v in vals))
    back = [float(r[0]) for r in list(csv.reader(io.StringIO(text)))[1:]]
    assert back == vals


def _draws(D=30, M=2, T=4, seed=0, interactions=True):
    rng = np.random.default_rng(seed)
    main = rng.normal(size=(D, M, T))
    inter = rng.normal(size=(D, M, M, T, T)) if interactions else None
    ec = rng.integers(0, 3, size=(D, M))
    pc = rng.integers(0, 2, size=(D, M, M))
    return fake_draws(main, inter, ec, np.triu(pc))


def test_draw_archive_round_trip(tmp_path):
    d = _draws()
    save_draws(d, tmp_path / "d.npz", {"levels": [0.1, 0.2]})
    back, meta = load_draws(tmp_path / "d.npz")
    assert meta["levels"] == [0.1, 0.2]
    assert (back.mode, back.M, back.T, back.exposure_names) == (d.mode, d.M, d.T, d.exposure_names)
    for name in ("main", "interactions", "exposure_counts", "pair_counts", "sigma2"):
        np.testing.assert_array_equal(getattr(back, name), getattr(d, name))
    save_draws(d, tmp_path / "e.npz", {"levels": [0.1, 0.2]})
    assert (tmp_path / "d.npz").read_bytes() == (tmp_path / "e.npz").read_bytes()


def test_outputs_listed_and_flagged_column(tmp_path):
    d = _draws(D=200)
    d.main[:, 0, 1] += 5.0
    write_outputs(d, tmp_path, {"seed": 3}, level=0.9)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"marginal_dlm.csv", "inclusion.csv", "cumulative.csv", "chain_diagnostics.csv",
            "run_manifest.json", "draws.npz", "interaction_x1_x1.csv", "interaction_x1_x2.csv",
            "interaction_x2_x2.csv"} <= names
    assert json.loads((tmp_path / "run_manifest.json").read_text())["seed"] == 3
    lines = (tmp_path / "marginal_dlm.csv").read_text().splitlines()[1:]
    win = critical_windows(*[marginal_dlm(d, m, level=0.9) for m in range(2)])
    for line in lines:
        e, lag, *_, flag = line.split(",")
        m = d.exposure_names.index(e)
        assert int(flag) == int(int(lag) in win.flagged(m))
    assert any(line.startswith("x1,2,") and line.endswith(",1") for line in lines)


def test_tdlm_outputs_have_empty_inclusion():
    files = build_outputs(fake_draws(np.zeros((5, 1, 3))))
    assert files["inclusion.csv"] == "term,probability\n"
    assert not any(k.startswith("interaction_") for k in files)


def test_zero_draws_leave_no_files(tmp_path):
    out = tmp_path / "out"
    with pytest.raises(EmptyDrawsError):
        write_outputs(fake_draws(np.zeros((0, 1, 3))), out, {})
    assert not out.exists() or not any(out.iterdir())


def test_unwritable_directory(tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    with pytest.raises(OSError):
        check_writable(f / "sub")


def test_atomic_write_keeps_old_file_on_failure(tmp_path, monkeypatch):
    p = tmp_path / "a.txt"
    p.write_text("old")

    def fail(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr("os.replace", fail)
    with pytest.raises(OSError):
        atomic_write(p, "new")
    assert p.read_text() == "old"
    assert [q.name for q in tmp_path.iterdir()] == ["a.txt"]


def test_panel_csv_text_checks_names():
    panel = LagPanel(np.zeros((2, 1, 2)), np.ones((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        panel_csv_text(panel, ["only_one"])
