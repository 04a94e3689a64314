"""CSV panels, draw archives and run outputs.

Panels are wide: one row per individual, with the outcome, covariates and
one column per exposure and lag named ``<exposure>_<lag>`` (lags 1..T).
Every file is written to a temporary sibling and renamed into place, so a
failed run never leaves a half-written file behind.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import re
import tempfile
import zipfile
from pathlib import Path

import numpy as np

from .diagnostics import summarize_chains
from .sampler import PosteriorDraws
from .summary import (
    EmptyDrawsError,
    critical_windows,
    cumulative_effect,
    equal_tailed,
    inclusion_probabilities,
    marginal_dlm,
)
from .trees import LagPanel

LAG_COLUMN = re.compile(r"^(.+)_(\d+)$")
MISSING = {"", "na", "nan", "null", "none", "."}


class PanelFormatError(OSError):
    """A panel CSV that cannot be read as specified."""


def finite_or_none(d: dict) -> dict:
    """JSON has no NaN; undefined rates become null."""
    return {k: (v if np.isfinite(v) else None) for k, v in d.items()}


def fmt(v) -> str:
    """Shortest decimal string that reads back to the same double."""
    return repr(float(v))


# ------------------------------------------------------------------ writing


def check_writable(directory: str | Path) -> Path:
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=d, prefix=".probe-"):
            pass
    except OSError as exc:
        raise OSError(f"output directory {d} is not writable: {exc.strerror or exc}") from exc
    return d


def atomic_write(path: str | Path, data: str | bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_files(directory: str | Path, files: dict[str, str | bytes]) -> None:
    """Write every prepared file; content is fully built before the first write."""
    d = check_writable(directory)
    for name, data in files.items():
        atomic_write(d / name, data)


def csv_text(header: list[str], rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# ------------------------------------------------------------------ panels


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise PanelFormatError(f"{path}: no such file")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise PanelFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise PanelFormatError(f"{path}: duplicate column names")
    body = rows[1:]
    if not body:
        raise PanelFormatError(f"{path}: header but no data rows")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise PanelFormatError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
    return header, body


def _column(path, header, body, name) -> np.ndarray:
    if name not in header:
        raise PanelFormatError(f"{path}: missing column {name!r}")
    j = header.index(name)
    out = np.empty(len(body))
    for i, r in enumerate(body):
        cell = r[j].strip()
        if cell.lower() in MISSING:
            raise PanelFormatError(f"{path}: row {i + 2}, column {name!r}: missing value")
        try:
            out[i] = float(cell)
        except ValueError:
            raise PanelFormatError(f"{path}: row {i + 2}, column {name!r}: non-numeric value {cell!r}") from None
        if not np.isfinite(out[i]):
            raise PanelFormatError(f"{path}: row {i + 2}, column {name!r}: non-finite value {cell!r}")
    return out


def exposure_columns(header: list[str], names: list[str] | None = None,
                     exclude: set[str] = frozenset()) -> tuple[list[str], int]:
    """Exposure names in header order and their common lag count."""
    lags: dict[str, set[int]] = {}
    for h in header:
        if h in exclude:
            continue
        m = LAG_COLUMN.match(h)
        if m and (names is None or m.group(1) in names):
            lags.setdefault(m.group(1), set()).add(int(m.group(2)))
    order = list(lags) if names is None else list(names)
    if not order:
        raise PanelFormatError("no exposure columns of the form <exposure>_<lag>")
    Ts = {}
    for e in order:
        got = lags.get(e)
        if not got:
            raise PanelFormatError(f"missing columns for exposure {e!r}")
        T = max(got)
        if got != set(range(1, T + 1)):
            gap = sorted(set(range(1, T + 1)) - got)
            raise PanelFormatError(f"exposure {e!r}: missing lag column(s) {', '.join(f'{e}_{t}' for t in gap)}")
        Ts[e] = T
    if len(set(Ts.values())) > 1:
        detail = ", ".join(f"{e}: T={t}" for e, t in Ts.items())
        raise PanelFormatError(f"inconsistent T across exposures ({detail})")
    return order, next(iter(Ts.values()))


def load_exposure_csv(path, exposures: list[str] | None = None) -> tuple[np.ndarray, list[str]]:
    """Only the ``<exposure>_<lag>`` block of a wide CSV, shaped ``(n, M, T)``."""
    header, body = _read_rows(path)
    names, T = exposure_columns(header, exposures)
    x = np.stack([np.stack([_column(path, header, body, f"{e}_{t}") for t in range(1, T + 1)], axis=1)
                  for e in names], axis=1)
    return x, names


def load_panel_csv(path, outcome: str = "y", covariates: list[str] | None = None,
                   exposures: list[str] | None = None, family: str = "gaussian",
                   intercept: bool = True) -> tuple[LagPanel, list[str]]:
    """Read a wide panel; returns it with the names of its covariate columns.

    Without an explicit list, covariates are every column that is neither the
    outcome nor an exposure column. An intercept is prepended unless a
    covariate is already constant.
    """
    header, body = _read_rows(path)
    exclude = {outcome} | set(covariates or [])
    names, T = exposure_columns(header, exposures, exclude)
    exp_cols = {f"{e}_{t}" for e in names for t in range(1, T + 1)}
    if covariates is None:
        covariates = [h for h in header if h != outcome and h not in exp_cols and not LAG_COLUMN.match(h)]
    y = _column(path, header, body, outcome)
    Z = [_column(path, header, body, c) for c in covariates]
    cov_names = list(covariates)
    if intercept and not any(np.ptp(z) == 0 for z in Z):
        Z.insert(0, np.ones(len(body)))
        cov_names.insert(0, "(intercept)")
    x = np.stack([np.stack([_column(path, header, body, f"{e}_{t}") for t in range(1, T + 1)], axis=1)
                  for e in names], axis=1)
    Zm = np.column_stack(Z) if Z else np.zeros((len(body), 0))
    try:
        panel = LagPanel(x, Zm, y, family, names)
    except ValueError as exc:
        raise PanelFormatError(f"{path}: {exc}") from exc
    return panel, cov_names


def panel_csv_text(panel: LagPanel, covariate_names: list[str] | None = None, outcome: str = "y") -> str:
    p = panel.covariates.shape[1]
    cov = covariate_names or [f"z{j}" for j in range(p)]
    if len(cov) != p:
        raise ValueError("covariate_names length does not match the covariate matrix")
    exp_cols = [f"{e}_{t}" for e in panel.exposure_names for t in range(1, panel.T + 1)]
    X = panel.exposures.reshape(panel.n, -1)
    rows = ([panel.outcome[i], *panel.covariates[i], *X[i]] for i in range(panel.n))
    return csv_text([outcome, *cov, *exp_cols], rows)


def write_panel_csv(panel: LagPanel, path, covariate_names: list[str] | None = None, outcome: str = "y") -> None:
    path = Path(path)
    check_writable(path.parent)
    atomic_write(path, panel_csv_text(panel, covariate_names, outcome))


# ------------------------------------------------------------------ draw archive

_ARRAYS = ("main", "interactions", "gamma", "sigma2", "nu2", "tau2", "mu_main2", "mu_int2",
           "exposure_counts", "pair_counts", "assignments", "n_terminal", "depth", "chain")


def draws_bytes(draws: PosteriorDraws, meta: dict | None = None) -> bytes:
    """Self-describing ``.npz`` archive: arrays plus a JSON header (mode, M, T, names, extras)."""
    header = {"mode": draws.mode, "M": draws.M, "T": draws.T, "exposure_names": draws.exposure_names,
              "acceptance": finite_or_none(draws.acceptance), "meta": meta or {}}
    arrays = {k: getattr(draws, k) for k in _ARRAYS if getattr(draws, k) is not None}
    arrays = {"header": np.array(json.dumps(header, sort_keys=True)), **arrays}
    buf = _io.BytesIO()
    # np.savez stamps members with the wall clock; a fixed date keeps archives byte-identical
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for k, v in arrays.items():
            member = _io.BytesIO()
            np.lib.format.write_array(member, np.asarray(v), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{k}.npy", date_time=(1980, 1, 1, 0, 0, 0)), member.getvalue(),
                        compress_type=zipfile.ZIP_DEFLATED)
    return buf.getvalue()


def save_draws(draws: PosteriorDraws, path, meta: dict | None = None) -> None:
    path = Path(path)
    check_writable(path.parent)
    atomic_write(path, draws_bytes(draws, meta))


def load_draws(path) -> tuple[PosteriorDraws, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such draw archive")
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(z["header"].item())
            arrays = {k: (z[k] if k in z.files else None) for k in _ARRAYS}
    except (ValueError, KeyError, OSError) as exc:
        raise PanelFormatError(f"{path}: not a draw archive ({exc})") from exc
    acc = {k: float("nan") if v is None else v for k, v in header.get("acceptance", {}).items()}
    draws = PosteriorDraws(header["mode"], header["M"], header["T"], header["exposure_names"],
                           acceptance=acc, **arrays)
    return draws, header.get("meta", {})


# ------------------------------------------------------------------ run outputs


def _per_chain(x: np.ndarray, chain: np.ndarray) -> np.ndarray:
    ids = np.unique(chain)
    parts = [x[chain == c] for c in ids]
    k = min(len(p) for p in parts)
    return np.stack([p[:k] for p in parts])


def diagnostics_rows(draws: PosteriorDraws) -> list[dict]:
    params = {"sigma2": draws.sigma2, "nu2": draws.nu2}
    for m, e in enumerate(draws.exposure_names):
        for t in range(draws.T):
            params[f"theta[{e},{t + 1}]"] = draws.main[:, m, t]
    for j in range(draws.gamma.shape[1]):
        params[f"gamma[{j}]"] = draws.gamma[:, j]
    return summarize_chains({k: _per_chain(v, draws.chain) for k, v in params.items()})


def _interaction_pairs(draws: PosteriorDraws) -> list[tuple[int, int]]:
    if draws.interactions is None:
        return []
    self_pairs = draws.mode != "tdlmm_noself"
    return [(a, b) for a in range(draws.M) for b in range(a, draws.M) if a < b or self_pairs]


def build_outputs(draws: PosteriorDraws, levels=None, level: float = 0.95,
                  iqr=None) -> dict[str, str]:
    """Render every summary CSV in memory; nothing touches the disk here."""
    if len(draws) == 0:
        raise EmptyDrawsError("no retained posterior draws to summarize")
    names = draws.exposure_names
    levels = np.zeros(draws.M) if levels is None else np.asarray(levels, dtype=float)
    mdlms = [marginal_dlm(draws, m, levels, level) for m in range(draws.M)]
    win = critical_windows(*mdlms)
    rows = []
    for md in mdlms:
        flagged = set(win.flagged(md.exposure))
        for t in range(md.T):
            rows.append([names[md.exposure], t + 1, md.mean[t], md.lower[t], md.upper[t], int(t + 1 in flagged)])
    files = {"marginal_dlm.csv": csv_text(["exposure", "lag", "mean", "lower", "upper", "flagged"], rows)}

    inc_rows = []
    if draws.mode != "tdlm":
        inc = inclusion_probabilities(draws)
        inc_rows += [[names[m], float(inc.main[m])] for m in range(draws.M)]
        inc_rows += [[f"{names[a]}:{names[b]}", float(inc.pairs[a, b])]
                     for a in range(draws.M) for b in range(a, draws.M)]
    files["inclusion.csv"] = csv_text(["term", "probability"], inc_rows)

    for a, b in _interaction_pairs(draws):
        s = draws.interactions[:, a, b]
        lo, hi = equal_tailed(s, level)
        mean = s.mean(axis=0)
        cells = [[t1 + 1, t2 + 1, mean[t1, t2], lo[t1, t2], hi[t1, t2]]
                 for t1 in range(draws.T) for t2 in range(draws.T)]
        files[f"interaction_{names[a]}_{names[b]}.csv"] = csv_text(["t1", "t2", "mean", "lower", "upper"], cells)

    cum = []
    for m in range(draws.M):
        contrasts = [("unit", 1.0)] + ([("iqr", float(iqr[m]))] if iqr is not None else [])
        for label, c in contrasts:
            iv = cumulative_effect(draws, m, c, levels, level)
            cum.append([names[m], label, c, iv.mean, iv.lower, iv.upper])
    files["cumulative.csv"] = csv_text(["exposure", "contrast", "size", "mean", "lower", "upper"], cum)

    diag = diagnostics_rows(draws)
    files["chain_diagnostics.csv"] = csv_text(["parameter", "ess", "rhat"],
                                              ([d["parameter"], d["ess"], d["rhat"]] for d in diag))
    return files


def panel_levels(panel: LagPanel) -> tuple[np.ndarray, np.ndarray]:
    """Per-exposure pooled mean and interquartile range."""
    x = panel.exposures
    q1, q3 = np.quantile(x, [0.25, 0.75], axis=(0, 2))
    return x.mean(axis=(0, 2)), q3 - q1


def write_outputs(draws: PosteriorDraws, directory, manifest: dict, levels=None, level: float = 0.95,
                  iqr=None) -> list[str]:
    """Write summaries, the draw archive and the run manifest; returns the file names."""
    check_writable(directory)
    files: dict[str, str | bytes] = build_outputs(draws, levels, level, iqr)
    meta = {"levels": None if levels is None else [float(v) for v in levels],
            "iqr": None if iqr is None else [float(v) for v in iqr], "level": level}
    files["draws.npz"] = draws_bytes(draws, meta)
    files["run_manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    write_files(directory, files)
    return list(files)
