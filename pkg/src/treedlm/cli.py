"""Command-line entry point: ``treedlm {fit,simulate,benchmark,summarize}``.

Failures print a single line ``treedlm: error[<category>]: <message>`` to
stderr and exit with the category's code (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import re
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, build_config, read_config_file
from .io import (
    check_writable,
    csv_text,
    finite_or_none,
    load_draws,
    load_panel_csv,
    panel_csv_text,
    panel_levels,
    write_files,
    write_outputs,
)
from .sampler import run_chains
from .simulate import BenchmarkError, run_benchmark, scenario_data
from .summary import EmptyDrawsError

log = logging.getLogger("treedlm")

EXIT_CODES = {"ok": 0, "internal": 1, "usage": 2, "config": 3, "io": 4, "numeric": 5, "state": 6, "benchmark": 7}

MODEL_LABELS = {"tdlm": "TDLM", "tdlmm_additive": "TDLMMadd", "tdlmm_noself": "TDLMMns", "tdlmm_full": "TDLMM"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON, run manifest or key = value file; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_sampler(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", help="tdlm, tdlmm_full, tdlmm_noself or tdlmm_additive")
    p.add_argument("--A", type=int, dest="A", help="number of trees (tree pairs)")
    p.add_argument("--iterations", type=int, help="total iterations including burn-in")
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--alpha", type=float, help="tree prior split probability scale")
    p.add_argument("--beta", type=float, help="tree prior depth penalty")
    p.add_argument("--level", type=float, help="credible level")


def _add_scenario(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", type=int, choices=(1, 2))
    p.add_argument("--n", type=int)
    p.add_argument("--T", type=int, dest="T")
    p.add_argument("--M", type=int, dest="M")
    p.add_argument("--pbar", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--exposure-source", dest="exposure_source", choices=("synthetic_ar", "resample_file"))
    p.add_argument("--exposure-file", dest="exposure_file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treedlm", description="Treed distributed lag (mixture) models.")
    parser.add_argument("--version", action="version", version=f"treedlm {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model to a wide panel CSV")
    _add_common(p)
    _add_sampler(p)
    p.add_argument("--data", help="panel CSV")
    p.add_argument("--family", choices=("gaussian", "bernoulli"))
    p.add_argument("--outcome")
    p.add_argument("--exposures", help="comma-separated exposure names")
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--chains", type=int)
    p.add_argument("--threads", type=int)

    p = sub.add_parser("simulate", help="write a synthetic scenario panel and its truth")
    _add_common(p)
    _add_scenario(p)

    p = sub.add_parser("benchmark", help="score models over simulated replicates")
    _add_common(p)
    _add_sampler(p)
    _add_scenario(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--models", help="comma-separated modes")
    p.add_argument("--workers", type=int, help="replicates run in parallel")

    p = sub.add_parser("summarize", help="recompute summaries from a stored draw archive")
    p.add_argument("--draws", required=True, help="draws.npz written by fit")
    p.add_argument("--data", help="panel CSV used to recompute exposure levels")
    p.add_argument("--exposures")
    p.add_argument("--outcome")
    p.add_argument("--level", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose", "draws")}
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    return build_config(file_values, flags)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _manifest(command: str, cfg: RunConfig, **extra) -> dict:
    return {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.to_dict(), **extra}


def cmd_fit(cfg: RunConfig) -> None:
    if not cfg.data:
        raise ConfigError("fit needs --data")
    sc = cfg.sampler_config()
    out = check_writable(cfg.out)
    panel, cov_names = load_panel_csv(cfg.data, cfg.outcome, cfg.covariates, cfg.exposures, cfg.family)
    if sc.mode == "tdlm" and panel.M != 1:
        raise ConfigError(f"mode tdlm needs one exposure, the panel has {panel.M}")
    log.info("fitting %s: n=%d M=%d T=%d", sc.mode, panel.n, panel.M, panel.T)
    draws = run_chains(panel, sc, cfg.seed, cfg.chains, cfg.threads)
    levels, iqr = panel_levels(panel)
    manifest = _manifest("fit", cfg, input_sha256=_sha256(cfg.data), covariate_columns=cov_names,
                         acceptance=finite_or_none(draws.acceptance))
    write_outputs(draws, out, manifest, levels, cfg.level, iqr)


def cmd_simulate(cfg: RunConfig) -> None:
    out = check_writable(cfg.out)
    rng = np.random.default_rng(cfg.seed)
    panel, truth = scenario_data(cfg.scenario, cfg.n, cfg.T, cfg.M, rng, cfg.pbar, cfg.sigma2,
                                 cfg.exposure_source, cfg.exposure_file)
    cov = ["(intercept)"] + [f"z{j + 1}" for j in range(panel.covariates.shape[1] - 1)]
    files = {
        "panel.csv": panel_csv_text(panel, cov),
        "truth.json": json.dumps(truth.to_json(), indent=2, sort_keys=True) + "\n",
        "run_manifest.json": json.dumps(_manifest("simulate", cfg), indent=2, sort_keys=True) + "\n",
    }
    write_files(out, files)


def _rename_columns(row: dict, names: list[str]) -> dict:
    out = {}
    for k, v in row.items():
        m = re.fullmatch(r"(.+?)_(\d+)(?:_(\d+))?", k)
        if m and k != "model":
            a = names[int(m.group(2))]
            k = f"{m.group(1)}_{a}" + (f"_{names[int(m.group(3))]}" if m.group(3) else "")
        out[k] = v
    return out


def cmd_benchmark(cfg: RunConfig) -> None:
    out = check_writable(cfg.out)
    configs = {MODEL_LABELS[m]: cfg.sampler_config(m) for m in cfg.models}
    res = run_benchmark(cfg.scenario, cfg.replicates, configs, cfg.seed, cfg.n, cfg.T, cfg.M, cfg.pbar,
                        cfg.sigma2, cfg.level, cfg.workers, cfg.exposure_source, cfg.exposure_file)
    names = ["pm25", "no2", "so2", "co", "temp"][: cfg.M] if cfg.M <= 5 else [f"x{m + 1}" for m in range(cfg.M)]
    table = [_rename_columns(r, names) for r in res.table]
    records = [_rename_columns(r, names) for r in res.records]
    cols = list(dict.fromkeys(k for r in table for k in r))
    rcols = list(dict.fromkeys(k for r in records for k in r))
    files = {
        "scores.csv": csv_text(cols, ([r.get(c, "") for c in cols] for r in table)),
        "replicates.csv": csv_text(rcols, ([r.get(c, "") for c in rcols] for r in records)),
        "run_manifest.json": json.dumps(_manifest("benchmark", cfg), indent=2, sort_keys=True) + "\n",
    }
    write_files(out, files)


def cmd_summarize(args: argparse.Namespace) -> None:
    out = check_writable(args.out)
    draws, meta = load_draws(args.draws)
    level = args.level if args.level is not None else meta.get("level", 0.95)
    levels, iqr = meta.get("levels"), meta.get("iqr")
    if args.data:
        panel, _ = load_panel_csv(args.data, args.outcome or "y",
                                  exposures=args.exposures.split(",") if args.exposures else None)
        levels, iqr = panel_levels(panel)
    manifest = {"command": "summarize", "version": __version__, "draws": str(args.draws),
                "draws_sha256": _sha256(args.draws), "level": level}
    write_outputs(draws, out, manifest, levels, level, iqr)


def _category(exc: BaseException) -> str:
    if isinstance(exc, UsageError):
        return "usage"
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, EmptyDrawsError):
        return "state"
    if isinstance(exc, BenchmarkError):
        return "benchmark"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (FloatingPointError, np.linalg.LinAlgError)):
        return "numeric"
    return "internal"


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: fit, simulate, benchmark or summarize")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if args.command == "summarize":
            cmd_summarize(args)
        else:
            cfg = _config(args)
            {"fit": cmd_fit, "simulate": cmd_simulate, "benchmark": cmd_benchmark}[args.command](cfg)
        return 0
    except Exception as exc:
        cat = _category(exc)
        if cat == "internal":
            log.debug("unhandled error", exc_info=True)
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"treedlm: error[{cat}]: {msg}", file=sys.stderr)
        return EXIT_CODES[cat]


if __name__ == "__main__":
    sys.exit(main())
