"""Command-line front end: ``mrd <command> ...``.

Every command resolves its inputs into a flat parameter dict, writes it to
``config_echo.json`` in the output directory and then runs from that dict
alone, so ``mrd replay`` reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .categories import SubsetError, classify_dataset, subset_mask
from .config import canonical_json, load_config, read_echo, write_echo
from .dgp import ConfigError, LotConfig, OperatorPolicy, policy_categories, simulate_panel
from .estimation import (
    EstimationError,
    WeakIdentificationError,
    fuzzy_estimate,
    pseudo_cutoff_test,
    rd_plot_data,
    sharp_estimate,
)
from .learners import METHOD_LABELS, LearnerError, resolve_learner
from .rules import RuleError, parse_rule

log = logging.getLogger("mrd")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3, 4
BASELINE = METHOD_LABELS["none"]


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# ingestion


def read_panel(path, required=(), binary=("d", "t"), numeric=()) -> pd.DataFrame:
    """Load a CSV panel, checking required columns, finiteness and 0/1 codes."""
    try:
        panel = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot parse CSV ({exc})") from None
    missing = [c for c in required if c not in panel.columns]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    check = list(dict.fromkeys([*required, *numeric, *(c for c in binary if c in panel.columns)]))
    check += [c for c in panel.columns if c.startswith("z_") and c not in check]
    for col in check:
        values = pd.to_numeric(panel[col], errors="coerce").to_numpy(float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            rows = ", ".join(str(i + 1) for i in bad[:5])
            more = f" (+{bad.size - 5} more)" if bad.size > 5 else ""
            raise DataError(f"{path}: column {col!r} has non-finite or non-numeric values at row(s) {rows}{more}")
        panel[col] = values
    for col in binary:
        if col in panel.columns:
            bad = np.flatnonzero(~np.isin(panel[col].to_numpy(), (0.0, 1.0)))
            if bad.size:
                raise DataError(f"{path}: column {col!r} must be 0/1; offending row(s) "
                                f"{', '.join(str(i + 1) for i in bad[:5])}")
            panel[col] = panel[col].astype(int)
    return panel


def _csv_bytes(frame: pd.DataFrame) -> bytes:
    buf = io.StringIO()
    frame.to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue().encode("utf-8")


def _write(out_dir: Path, name: str, data: bytes) -> Path:
    path = out_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


def _split(text) -> list[str]:
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return [str(t).strip() for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


# ---------------------------------------------------------------------------
# command bodies: each takes the resolved parameter dict


def run_simulate(params: dict, out_dir: Path, threads: int) -> int:
    cfg = LotConfig.from_dict(params["lot"])
    panel = simulate_panel(params["seed"], params["n_lots"], cfg, params["policy"])
    path = _write(out_dir, params["output"], _csv_bytes(panel))
    print(f"wrote {len(panel)} lots to {path} (treated share {panel.t.mean():.3f})")
    return EXIT_OK


def run_classify(params: dict, out_dir: Path, threads: int) -> int:
    if params.get("policy"):
        policy = OperatorPolicy.parse(params["policy"])
        cols = ["x_d", "x_y", "x_e", "x_r"] if policy is OperatorPolicy.REASONABLE else ["x_d", "x_y", "x_e"]
        panel = read_panel(params["panel"], required=cols, binary=())
        codes = policy_categories(panel, policy)["category"]
    else:
        scores = _split(params["scores"])
        t = parse_rule(params["rule_t"], len(scores))
        d = parse_rule(params["rule_d"], len(scores))
        panel = read_panel(params["panel"], required=scores, binary=())
        codes, _ = classify_dataset(t, d, panel[scores].to_numpy(float))
    panel["category"] = codes
    counts = pd.Series(codes).value_counts().reindex(["C", "NT", "AT", "DF", "IND"], fill_value=0)
    _write(out_dir, params["output"], _csv_bytes(panel))
    summary = pd.DataFrame({"category": counts.index, "count": counts.to_numpy()})
    _write(out_dir, "category_counts.csv", _csv_bytes(summary))
    for cat, n in counts.items():
        print(f"{cat:>4} {n}")
    return EXIT_OK


def _estimate_rows(params: dict) -> pd.DataFrame:
    axis = params["axis"]
    required = [axis, "y"] + (["d"] if params["design"] == "fuzzy" else [])
    panel = read_panel(params["panel"], required=required, numeric=params.get("covariates") or ())
    keep = subset_mask(panel, params.get("subset"), params.get("subset_check"))
    sub = panel.loc[keep] if not keep.all() else panel
    fn = fuzzy_estimate if params["design"] == "fuzzy" else sharp_estimate
    rows = []
    for learner in params["learners"]:
        est = fn(sub, axis, kernel=params["kernel"], bandwidth=params["bandwidth"],
                 learner=resolve_learner(learner), covariates=params.get("covariates"),
                 seed=params["seed"], subset=not keep.all())
        row = est.as_row()
        row["n_dropped"] = int((~keep).sum())
        rows.append(row)
    table = pd.DataFrame(rows)
    if BASELINE in set(table.method):
        base = float(table.loc[table.method == BASELINE, "se"].iloc[0])
        table["se_change_pct"] = 100.0 * (table.se / base - 1.0)
    else:
        table["se_change_pct"] = np.nan
    return table


def run_estimate(params: dict, out_dir: Path, threads: int) -> int:
    table = _estimate_rows(params)
    _write(out_dir, "estimates.csv", _csv_bytes(table))
    _write(out_dir, "estimates.json", canonical_json(table.to_dict(orient="records")).encode())
    cols = ["method", "design", "coef", "se", "ci_low", "ci_high", "h", "n_left", "n_right", "se_change_pct"]
    print(table[cols].rename(columns={"se_change_pct": "% s.e. change"}).to_string(index=False))
    return EXIT_OK


def run_mc(params: dict, out_dir: Path, threads: int) -> int:
    from .montecarlo import ExperimentConfig, emit_table, run_experiment, write_report

    cfg = ExperimentConfig.from_dict(params["experiment"])
    report = run_experiment(cfg, workers=threads)
    write_report(report, out_dir)
    sys.stdout.write(emit_table(report, "markdown").decode())
    failed = int((report.raw.status != "ok").sum())
    if failed:
        log.warning("%d estimator run(s) failed; see estimates_raw.csv", failed)
    return EXIT_OK


def run_validate(params: dict, out_dir: Path, threads: int) -> int:
    from .plotting import plot_pseudo_cutoffs

    axis = params["axis"]
    required = [axis, "y"] + (["d"] if params["design"] == "fuzzy" else [])
    panel = read_panel(params["panel"], required=required)
    table = pseudo_cutoff_test(panel, axis, params["shifts"], design=params["design"],
                               kernel=params["kernel"])
    _write(out_dir, "pseudo_cutoffs.csv", _csv_bytes(table))
    plot_pseudo_cutoffs(table, out_dir / "pseudo_cutoffs.png")
    print(table.to_string(index=False))
    return EXIT_OK


def run_rdplot(params: dict, out_dir: Path, threads: int) -> int:
    from .plotting import plot_rd

    axis, outcome = params["axis"], params["outcome"]
    panel = read_panel(params["panel"], required=[axis, outcome])
    bins, lines = rd_plot_data(panel, axis, outcome, params["bins"], params["kernel"], params["h"])
    _write(out_dir, "rdplot_bins.csv", _csv_bytes(bins))
    _write(out_dir, "rdplot_fit.csv", _csv_bytes(lines))
    plot_rd(bins, lines, out_dir / "rdplot.png", xlabel=axis, ylabel=outcome)
    print(f"{len(bins)} bins, {len(lines)} fit segments written to {out_dir}")
    return EXIT_OK


COMMANDS = {
    "simulate": run_simulate,
    "classify": run_classify,
    "estimate": run_estimate,
    "mc": run_mc,
    "validate": run_validate,
    "rdplot": run_rdplot,
}


# ---------------------------------------------------------------------------
# argument handling


def _bandwidth(text):
    if text is None or text == "mse":
        return "mse"
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"bandwidth: expected 'mse' or a positive number, got {text!r}") from None


def _abs(path) -> str:
    return str(Path(path).resolve())


def _params_simulate(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    known = {"seed", "n_lots", "policy", "lot"}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise ConfigError(f"simulate.{unknown[0]}: unknown field")
    policy = args.policy or cfg.get("policy", "cautious")
    OperatorPolicy.parse(policy)
    lot = LotConfig.from_dict(cfg.get("lot"))
    n_lots = args.n_lots if args.n_lots is not None else cfg.get("n_lots", 2000)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    return {"seed": int(seed), "n_lots": int(n_lots), "policy": OperatorPolicy.parse(policy).value,
            "lot": lot.to_dict(), "output": Path(args.output).name}


def _params_classify(args) -> dict:
    if args.policy is None and (args.rule_t is None or args.rule_d is None):
        raise ConfigError("classify: give --policy or both --rule-t and --rule-d")
    return {"panel": _abs(args.panel), "policy": args.policy, "rule_t": args.rule_t, "rule_d": args.rule_d,
            "scores": _split(args.scores), "output": Path(args.output).name}


def _params_estimate(args) -> dict:
    learners = []
    for name in _split(args.learner):
        learners.append(resolve_learner(name).kind)
    return {"panel": _abs(args.panel), "axis": args.axis, "design": args.design, "learners": learners,
            "subset": args.subset, "subset_check": args.subset_check, "kernel": args.kernel,
            "bandwidth": _bandwidth(args.bandwidth), "covariates": _split(args.covariates) or None,
            "seed": int(args.seed or 0)}


def _params_mc(args) -> dict:
    from .montecarlo import ExperimentConfig

    raw = load_config(args.config)
    exp = dict(raw.get("experiment", raw))
    if args.seed is not None:
        exp["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(exp)
    return {"experiment": cfg.to_dict()}


def _params_validate(args) -> dict:
    try:
        shifts = [float(s) for s in _split(args.shifts)]
    except ValueError:
        raise ConfigError(f"validate.shifts: expected comma-separated numbers, got {args.shifts!r}") from None
    if not shifts:
        raise ConfigError("validate.shifts: at least one shift required")
    return {"panel": _abs(args.panel), "axis": args.axis, "design": args.design, "shifts": shifts,
            "kernel": args.kernel}


def _params_rdplot(args) -> dict:
    return {"panel": _abs(args.panel), "axis": args.axis, "outcome": args.outcome, "bins": int(args.bins),
            "kernel": args.kernel, "h": None if args.h is None else float(args.h)}


PARAM_BUILDERS = {
    "simulate": _params_simulate,
    "classify": _params_classify,
    "estimate": _params_estimate,
    "mc": _params_mc,
    "validate": _params_validate,
    "rdplot": _params_rdplot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes (falls back to $MRD_THREADS, then 1)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default: .)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="mrd", parents=[common],
                                     description="Multi-score regression discontinuity toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a rework panel")
    p.add_argument("-c", "--config", help="TOML/JSON with seed, n_lots, policy and a [lot] table")
    p.add_argument("-o", "--output", default="panel.csv")
    p.add_argument("--n-lots", type=int)
    p.add_argument("--policy", choices=[x.value for x in OperatorPolicy])

    p = sub.add_parser("classify", parents=[common], help="classify units of a panel")
    p.add_argument("panel")
    p.add_argument("--rule-t", help="assignment rule, e.g. 'I1 & I2'")
    p.add_argument("--rule-d", help="decision rule over the same scores")
    p.add_argument("--scores", default="x_d,x_y", help="score columns in atom order")
    p.add_argument("--policy", choices=[x.value for x in OperatorPolicy],
                   help="use an operator policy's decision rule instead of --rule-d")
    p.add_argument("-o", "--output", default="classified.csv")

    kernels = ["triangular", "uniform", "epanechnikov"]
    p = sub.add_parser("estimate", parents=[common], help="RD estimate along one score axis")
    p.add_argument("panel")
    p.add_argument("--axis", default="x_d", help="centered score column")
    p.add_argument("--design", choices=["sharp", "fuzzy"], default="fuzzy")
    p.add_argument("--learner", default="none",
                   help=f"comma-separated learners: {', '.join(METHOD_LABELS)}")
    p.add_argument("--subset", help="exclusion set as a pandas expression, e.g. 'x_y <= 0'")
    p.add_argument("--subset-check", help="category column that must mark excluded units NT/AT")
    p.add_argument("--kernel", choices=kernels, default="triangular")
    p.add_argument("--bandwidth", default="mse", help="'mse' or a fixed value")
    p.add_argument("--covariates", help="comma-separated covariate columns (default: z_*)")

    p = sub.add_parser("mc", parents=[common], help="run a Monte Carlo experiment")
    p.add_argument("-c", "--config", required=True)

    p = sub.add_parser("validate", parents=[common], help="pseudo-cutoff placebo estimates")
    p.add_argument("panel")
    p.add_argument("--axis", default="x_d")
    p.add_argument("--design", choices=["sharp", "fuzzy"], default="sharp")
    p.add_argument("--shifts", default="-0.1,0,0.1")
    p.add_argument("--kernel", choices=kernels, default="triangular")

    p = sub.add_parser("rdplot", parents=[common], help="binned RD plot data and figure")
    p.add_argument("panel")
    p.add_argument("--axis", default="x_d")
    p.add_argument("--outcome", default="y")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--kernel", choices=kernels, default="triangular")
    p.add_argument("--h", type=float, help="window half-width (default: MSE-optimal)")

    p = sub.add_parser("replay", parents=[common], help="re-run a command from its config_echo.json")
    p.add_argument("echo")
    return parser


def _threads(args) -> int:
    value = getattr(args, "threads", None)
    if value is None:
        env = os.environ.get("MRD_THREADS", "").strip()
        try:
            value = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"MRD_THREADS: expected an integer, got {env!r}") from None
    if value < 1:
        raise ConfigError("threads: must be at least 1")
    return value


def _dispatch(args) -> int:
    out_dir = Path(getattr(args, "out_dir", "."))
    threads = _threads(args)
    if args.command == "replay":
        command, params = read_echo(args.echo)
        if command not in COMMANDS:
            raise ConfigError(f"echo: unknown command {command!r}")
    else:
        command = args.command
        args.seed = getattr(args, "seed", None)
        params = PARAM_BUILDERS[command](args)
    # normalize through JSON so replayed and fresh runs see identical values
    params = json.loads(canonical_json(params))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_echo(out_dir, command, params)
    return COMMANDS[command](params, out_dir, threads)


def _join_negative_lists(argv: list[str]) -> list[str]:
    # argparse reads "-0.1,0,0.1" as an option; glue it to its flag
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--shifts" and i + 1 < len(argv):
            out.append(f"--shifts={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(_join_negative_lists(argv))
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    warnings.simplefilter("default")
    try:
        return _dispatch(args)
    except WeakIdentificationError as exc:
        print(f"error: {exc} (jump in outcome {exc.jump_y:.6g}, jump in treatment {exc.jump_d:.6g})",
              file=sys.stderr)
        return EXIT_ESTIMATION
    except EstimationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (ConfigError, LearnerError, RuleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SubsetError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
