"""Command-line entry point: ``crossmatch score|match|screen|simulate``.

Exit codes: 0 success, 2 usage error, 3 invalid input data, 4 invalid
configuration or parameter, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from crossmatch import __version__
from crossmatch.demo import demo_differences
from crossmatch.errors import (
    ConfigError,
    ConvergenceError,
    DegenerateStatisticError,
    InvalidInputError,
    InvalidParameterError,
    SingularInformationError,
    ValidationError,
)
from crossmatch.matching import load_cohort, risk_set_match, standardized_differences, write_pairs
from crossmatch.matching.balance import BALANCE_COLUMNS
from crossmatch.matching.cohort import RELIGIONS
from crossmatch.scoring import score_file
from crossmatch.screening import (
    SubgroupEvidence,
    automated_cross_screen,
    holm_global_nulls_detail,
    holm_max_detail,
    holm_twosided_detail,
    read_differences,
    weighted_cross_screen_global,
    weighted_cross_screen_replicability,
    write_report,
)
from crossmatch.simulation import parse_config, run_power_study
from crossmatch.svg import study_charts

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3, 4, 5
DEFAULT_GAMMAS = (1.0, 1.2, 2.0)
SCREEN_METHODS = (
    "automated",
    "weighted-replicability",
    "weighted-global",
    "holm-global",
    "holm-max",
    "holm",
)

log = logging.getLogger("crossmatch")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir: Path, args, argv, inputs, outputs, seed=None, config=None) -> Path:
    """Record what is needed to reproduce the outputs of one run."""
    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "config": None if config is None else str(config),
        "config_sha256": None if config is None else _sha256(config),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
        "seed": seed,
        "threads": args.threads,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --- subcommands --------------------------------------------------------------------


def cmd_score(args, out_dir: Path):
    out = out_dir / "outcomes.csv"
    n = score_file(args.raw_items, out)
    log.info("scored %d rows", n)
    return [args.raw_items], [out], None


def cmd_match(args, out_dir: Path):
    cohort = load_cohort(args.cohort, args.births)
    religions = RELIGIONS if args.religion == "both" else (args.religion,)
    outputs = []
    for religion in religions:
        suffix = f"_{religion}" if args.religion == "both" else ""
        pairs_path = out_dir / f"pairs{suffix}.csv"
        balance_path = out_dir / f"balance{suffix}.csv"
        women = [w for w in cohort if w.religion == religion]
        result = None
        if not women:
            log.warning("no %s women in the cohort; writing empty outputs", religion)
            pairs = []
        else:
            result = risk_set_match(women)
            pairs = result.pairs
            if result.unmatched:
                log.warning("%s: %d treated women left unmatched", religion, len(result.unmatched))
        write_pairs(pairs, pairs_path)
        if len(pairs) >= 2:
            standardized_differences(pairs, women, risk_sets=result.risk_sets).write_csv(balance_path)
        else:
            if women:
                log.warning("%s: fewer than 2 pairs; balance table left empty", religion)
            balance_path.write_text(",".join(BALANCE_COLUMNS) + "\n")
        outputs += [pairs_path, balance_path]
    return [args.cohort, args.births], outputs, None


def _screen_blocks(data, method, gammas, alpha, c, statistic, mode):
    if len(data) != 2:
        raise InvalidInputError(f"screening needs exactly two subgroups, found {sorted(data)}")
    (name_a, diffs_a), (name_b, diffs_b) = data.items()
    shared = [k for k in diffs_a if k in diffs_b]
    for k in [k for k in diffs_a if k not in diffs_b] + [k for k in diffs_b if k not in diffs_a]:
        log.warning("outcome %s is present in only one subgroup; excluded", k)
    usable = []
    for k in shared:
        if not (diffs_a[k] != 0).any() or not (diffs_b[k] != 0).any():
            log.warning("outcome %s has only zero differences in a subgroup; excluded", k)
        else:
            usable.append(k)
    if not usable:
        raise InvalidInputError("no outcome is usable in both subgroups")
    methods = SCREEN_METHODS if method == "all" else (method,)
    blocks = []
    for gamma in gammas:
        a = SubgroupEvidence.from_differences(name_a, {k: diffs_a[k] for k in usable}, gamma, statistic, mode)
        b = SubgroupEvidence.from_differences(name_b, {k: diffs_b[k] for k in usable}, gamma, statistic, mode)
        for m in methods:
            if m == "automated":
                blocks.append(automated_cross_screen(a, b, alpha))
            elif m == "weighted-replicability":
                blocks.append(weighted_cross_screen_replicability(a, b, c, alpha))
            elif m == "weighted-global":
                blocks.append(weighted_cross_screen_global(a, b, c, alpha))
            elif m == "holm-global":
                blocks.append(holm_global_nulls_detail(a, b, alpha))
            elif m == "holm-max":
                blocks.append(holm_max_detail(a, b, alpha))
            else:
                blocks.append(holm_twosided_detail(a, b, alpha))
    return blocks


def cmd_screen(args, out_dir: Path):
    if args.demo == (args.differences is not None):
        raise ConfigError("differences", "give a differences CSV or --demo, not both or neither")
    data = demo_differences() if args.demo else read_differences(args.differences)
    blocks = _screen_blocks(data, args.method, args.gamma, args.alpha, args.c, args.statistic, args.mode)
    out = out_dir / "report.csv"
    write_report(out, blocks)
    return ([] if args.demo else [args.differences]), [out], None


def cmd_simulate(args, out_dir: Path):
    text = Path(args.config).read_text() if args.config else ""
    if args.set:
        text += "\n" + "\n".join(args.set)
    study = parse_config(text, env_seed=os.environ.get("CROSSMATCH_SEED"))
    table = run_power_study(study, threads=args.threads)
    outputs = [out_dir / "power.csv"]
    table.write_csv(outputs[0])
    for name, svg in study_charts(table, study.gammas, study.k11_grid).items():
        path = out_dir / name
        path.write_text(svg)
        outputs.append(path)
    return [], outputs, study.seed


# --- argument parsing -------------------------------------------------------------------


def _float_list(text: str):
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="directory for outputs and manifest.json")
    common.add_argument(
        "--threads", type=_positive_int, default=os.cpu_count() or 1,
        help="worker threads (outputs do not depend on this)",
    )
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="crossmatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", parents=[common], help="derive outcome scores from raw survey items")
    p.add_argument("raw_items", help="raw item CSV")

    p = sub.add_parser("match", parents=[common], help="risk-set matching within religion subgroups")
    p.add_argument("cohort", help="cohort.csv, one row per woman-year")
    p.add_argument("births", help="births.csv")
    p.add_argument("--religion", choices=RELIGIONS + ("both",), default="both")

    p = sub.add_parser("screen", parents=[common], help="cross-screening and global-null testing")
    p.add_argument("differences", nargs="?", help="long-format differences CSV (outcome_id, subgroup_id, pair_id, diff)")
    p.add_argument("--demo", action="store_true", help="use the built-in 18-outcome demo data")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma", type=_float_list, default=DEFAULT_GAMMAS, help="comma-separated, default 1,1.2,2.0")
    p.add_argument("--method", choices=SCREEN_METHODS + ("all",), default="automated")
    p.add_argument("--c", type=float, default=0.0, help="weight for unselected outcomes (weighted methods)")
    p.add_argument("--statistic", choices=("wilcoxon", "ttest"), default="wilcoxon")
    p.add_argument("--mode", choices=("auto", "exact", "normal"), default="auto")

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo power study")
    p.add_argument("config", nargs="?", help="key=value config file (defaults used when omitted)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    return parser


def _configure_logging(verbose: bool) -> None:
    # Own handler on the package logger; replaced on each call so repeated runs do not stack output.
    for h in [h for h in log.handlers if getattr(h, "crossmatch_cli", False)]:
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("crossmatch: %(levelname)s: %(message)s"))
    handler.crossmatch_cli = True
    log.addHandler(handler)
    log.setLevel(logging.INFO if verbose else logging.WARNING)


COMMANDS = {"score": cmd_score, "match": cmd_match, "screen": cmd_screen, "simulate": cmd_simulate}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    _configure_logging(args.verbose)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        inputs, outputs, seed = COMMANDS[args.command](args, out_dir)
        config = getattr(args, "config", None)
        write_manifest(out_dir, args, argv, inputs, outputs, seed, config)
    except (ConfigError, InvalidParameterError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (InvalidInputError, ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (SingularInformationError, ConvergenceError, DegenerateStatisticError) as exc:
        log.error("%s", exc)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
