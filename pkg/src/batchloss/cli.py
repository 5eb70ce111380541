"""Command-line front end: ``batchloss <subcommand> --config PATH [...]``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import oracle
from .config import ConfigError, ExperimentConfig, MODES, parse_config, validate
from .dists import ConfigurationError, classify_aging, mean_residual_life, empirical_mrl_check, sample_array
from .engine import RunawayCycleError, block_generator, run_cycles, simulate_cycle, tsv_tracer
from .stats import CSV_COLUMNS, estimate_report, test_lemma_inequality, test_theorem_equality

log = logging.getLogger("batchloss")

ORACLE_COLUMNS = ("lambda", "b", "d", "K", "n", "policy", "ex1", "ad_over_b", "oracle_ml",
                  "truncation_mass", "verdict")
MRL_COLUMNS = ("x", "mrl_exact", "mrl_empirical", "se", "count", "agrees", "aging")
ORACLE_TOL = 1e-8


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _simulate_reports(cfg: ExperimentConfig, mode: str):
    reports = []
    for model in cfg.models():
        records = run_cycles(model, cfg.num_cycles, cfg.seed, cfg.workers)
        rep = estimate_report(records, model, cfg.seed, cfg.level)
        if mode == "verify-theorem":
            rep.verdict = test_theorem_equality(records, model.mean_x, cfg.level)
        elif mode == "verify-lemma":
            rep.verdict = test_lemma_inequality(records, model, cfg.alpha)
        reports.append(rep)
        log.info("n=%g policy=%s E M_L=%.6g verdict=%s", model.capacity, model.policy.value,
                 rep.estimates["M_L"].point, rep.verdict or "-")
    return reports


def _run_simulation(cfg: ExperimentConfig, mode: str) -> tuple[str, bool]:
    reports = _simulate_reports(cfg, mode)
    good = {"verify-theorem": "consistent", "verify-lemma": "strictly-greater"}.get(mode)
    ok = good is None or all(r.verdict == good for r in reports)
    if cfg.output_format == "csv":
        text = _csv(CSV_COLUMNS, [r.csv_row() for r in reports])
    else:
        text = "\n\n".join(r.to_text() for r in reports) + "\n"
    if good is not None:
        line = f"{mode}: {'PASS' if ok else 'FAIL'}\n"
        if cfg.output_format == "report":
            text += line
        else:
            sys.stderr.write(line)
    return text, ok


def _run_oracle(cfg: ExperimentConfig) -> tuple[str, bool]:
    rows = []
    ok = True
    for model in cfg.models():
        result = oracle.solve(oracle.from_queue_model(model))
        row = result.row()
        if abs(result.mean_x - result.ad_over_b) < 1e-9:
            equal = abs(result.expected_loss - result.mean_x) <= ORACLE_TOL
            row["verdict"] = "equal" if equal else "unequal"
            ok = ok and equal
        else:
            row["verdict"] = "n/a"
        rows.append(row)
    if cfg.output_format == "csv":
        return _csv(ORACLE_COLUMNS, rows), ok
    lines = [
        f"lambda={r['lambda']:g} b={r['b']:g} d={r['d']:g} n={r['n']:g} K={r['K']} policy={r['policy']}: "
        f"E M_L = {r['oracle_ml']:.12g} (E X_1 = {r['ex1']:g}, ad/b = {r['ad_over_b']:g}, "
        f"truncated mass {r['truncation_mass']:.2g}) {r['verdict']}"
        for r in rows
    ]
    return "\n".join(lines) + "\n", ok


def _run_classify(cfg: ExperimentConfig) -> tuple[str, bool]:
    spec = cfg.distribution
    aging = classify_aging(spec)
    mu = spec.mean()
    grid = cfg.grid if cfg.grid is not None else [q * mu for q in np.arange(0, 5.25, 0.25)]
    samples = sample_array(spec, block_generator(cfg.seed, 0), cfg.samples)
    emp = empirical_mrl_check(samples, grid)
    rows = []
    for x, pt in zip(grid, emp.points):
        try:
            exact = mean_residual_life(spec, x)
        except ValueError:
            exact = None
        agrees = ""
        if pt.conclusive and exact is not None:
            agrees = abs(pt.mrl - exact) <= 2 * pt.stderr
        rows.append({"x": float(x), "mrl_exact": exact if exact is not None else "",
                     "mrl_empirical": pt.mrl if pt.conclusive else "", "se": pt.stderr if pt.conclusive else "",
                     "count": pt.count, "agrees": agrees, "aging": aging.value})
    if cfg.output_format == "csv":
        return _csv(MRL_COLUMNS, rows), True
    lines = [f"{spec.to_dict()}", f"aging class: {aging.value}   mean: {mu:.10g}"]
    for r in rows:
        exact = "-" if r["mrl_exact"] == "" else f"{r['mrl_exact']:.6g}"
        empirical = "inconclusive" if r["mrl_empirical"] == "" else f"{r['mrl_empirical']:.6g} +- {r['se']:.2g}"
        lines.append(f"  x={r['x']:<10.6g} mrl={exact:<12} empirical={empirical}")
    return "\n".join(lines) + "\n", True


def run(cfg: ExperimentConfig, mode: str, trace: Optional[str] = None) -> int:
    """Execute ``mode`` and write its output; returns the exit status."""
    validate(cfg, mode)
    if trace and cfg.model is not None:
        with open(trace, "w", encoding="utf-8") as fh:
            simulate_cycle(cfg.model, block_generator(cfg.seed, 0), trace=tsv_tracer(fh), debug=True)
    if mode == "oracle":
        text, ok = _run_oracle(cfg)
    elif mode == "classify-dist":
        text, ok = _run_classify(cfg)
    else:
        text, ok = _run_simulation(cfg, mode)
    if cfg.output_path:
        Path(cfg.output_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="batchloss", description="Losses per busy period in GI^X/GI^Y/1/n queues.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="JSON experiment file")
        p.add_argument("--seed", type=int)
        p.add_argument("--cycles", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "report"))
        p.add_argument("--trace", help="write a tab-separated event trace of the first cycle")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
        for w in caught:
            log.warning("%s", w.message)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.cycles is not None:
            if args.cycles < 2:
                raise ConfigError("--cycles must be >= 2")
            cfg.num_cycles = args.cycles
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.workers = args.workers
        if args.out is not None:
            cfg.output_path = args.out
        if args.format is not None:
            cfg.output_format = args.format
        return run(cfg, args.mode, args.trace)
    except (ConfigError, ConfigurationError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except RunawayCycleError as exc:
        sys.stderr.write(f"error: runaway cycle at stream index {exc.stream_index}: {exc}\n")
        return 3
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
