"""Command-line front end: ``run``, ``report`` and ``validate``.

Layout of an output directory::

    OUT/resolved_config.toml     every key with defaults filled in
    OUT/runs/<mode>/<seed>.jsonl one record per round, then {"DONE": true, ...}
    OUT/curves.csv               round,mode,seed,accuracy,macro_precision,macro_recall,macro_f1
    OUT/summary.csv              seed mean/std per mode at the sample rounds

Exit codes: 0 success, 1 invalid config or incomplete run directory,
2 failure while simulating.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import LoadedConfig, load_config, with_overrides
from .errors import ConfigError
from .federation import Mode, run_scenario

log = logging.getLogger("fcvi")

METRICS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")
CURVE_HEADER = ("round", "mode", "seed") + METRICS
RESOLVED_NAME = "resolved_config.toml"


class IncompleteRun(Exception):
    """A run directory is missing a file or a run never finished."""


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def run_one(cfg: LoadedConfig, mode: str, seed: int, jsonl_path: Path) -> list:
    """Simulate one (mode, seed) pair, streaming the round log. Returns curve rows."""
    jsonl_path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    with open(jsonl_path, "w", newline="\n") as fh:
        def emit(rep):
            fh.write(json.dumps(rep.to_json()) + "\n")
            m = rep.test_metrics
            rows.append([rep.round, mode, seed] + [getattr(m, k) for k in METRICS])
        run_scenario(cfg.schedule, cfg.federation, Mode(mode), seed, on_round=emit)
        fh.write(json.dumps({"DONE": True, "mode": mode, "seed": seed,
                             "rounds": cfg.schedule.total_rounds}) + "\n")
    return rows


def summarize(rows: list, modes, sample_rounds) -> list:
    """Seed mean and sample std of every metric per (mode, sample round)."""
    out = []
    for mode in modes:
        for t in sample_rounds:
            vals = np.array([r[3:] for r in rows if r[1] == mode and r[0] == t], dtype=np.float64)
            if len(vals) == 0:
                continue
            std = vals.std(axis=0, ddof=1) if len(vals) > 1 else np.zeros(len(METRICS))
            rec = [mode, t, len(vals)]
            for k in range(len(METRICS)):
                rec += [float(vals[:, k].mean()), float(std[k])]
            out.append(rec)
    return out


def summary_header() -> list:
    head = ["mode", "round", "n_seeds"]
    for k in METRICS:
        head += [f"{k}_mean", f"{k}_std"]
    return head


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def execute(cfg: LoadedConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / RESOLVED_NAME, cfg.dumps())
    rows = []
    for mode in cfg.run.modes:
        for seed in cfg.run.seeds:
            log.info("running mode=%s seed=%d", mode, seed)
            rows += run_one(cfg, mode, seed, out / "runs" / mode / f"{seed}.jsonl")
    _write_csv(out / "curves.csv", CURVE_HEADER, rows)
    _write_csv(out / "summary.csv", summary_header(),
               summarize(rows, cfg.run.modes, cfg.run.sample_rounds))


def load_run_dir(run_dir: Path):
    """Resolved config plus curve rows; raises IncompleteRun naming what's missing."""
    run_dir = Path(run_dir)
    resolved = run_dir / RESOLVED_NAME
    if not resolved.exists():
        raise IncompleteRun(f"missing file: {resolved}")
    cfg = load_config(resolved)
    for mode in cfg.run.modes:
        for seed in cfg.run.seeds:
            p = run_dir / "runs" / mode / f"{seed}.jsonl"
            if not p.exists():
                raise IncompleteRun(f"missing file: {p}")
            lines = p.read_text().splitlines()
            if not lines or not json.loads(lines[-1]).get("DONE"):
                raise IncompleteRun(f"run did not finish (no DONE record): {p}")
    curves = run_dir / "curves.csv"
    if not curves.exists():
        raise IncompleteRun(f"missing file: {curves}")
    with open(curves, newline="") as fh:
        rows = [[int(r["round"]), r["mode"], int(r["seed"])] + [float(r[k]) for k in METRICS]
                for r in csv.DictReader(fh)]
    return cfg, rows


def format_report(cfg: LoadedConfig, rows: list) -> str:
    """Per-metric tables: sample rounds by mode, plus delta columns.

    The reference for deltas is ``fcvi`` when it was run, else the first
    mode; one delta column per other mode. A single-mode run has none.
    """
    modes = list(cfg.run.modes)
    ref = Mode.FCVI.value if Mode.FCVI.value in modes else modes[0]
    others = [m for m in modes if m != ref] if len(modes) > 1 else []
    rounds = list(cfg.run.sample_rounds)
    lines = []
    for k, metric in enumerate(METRICS):
        means = {}
        for m in modes:
            for t in rounds:
                vals = [r[3 + k] for r in rows if r[1] == m and r[0] == t]
                means[m, t] = float(np.mean(vals)) if vals else float("nan")
            means[m, "avg"] = float(np.mean([means[m, t] for t in rounds]))
        head = ["round"] + modes + [f"d({ref}-{o})" for o in others]
        width = max(12, max(len(h) for h in head) + 2)
        lines.append(metric)
        lines.append("".join(h.rjust(width) if i else h.ljust(8) for i, h in enumerate(head)))
        for t in rounds + ["avg"]:
            cells = [str(t).ljust(8)] + [f"{means[m, t]:.4f}".rjust(width) for m in modes]
            cells += [f"{means[ref, t] - means[o, t]:+.4f}".rjust(width) for o in others]
            lines.append("".join(cells))
        lines.append("")
    return "\n".join(lines)


def _parse_seeds(items) -> list:
    seeds = []
    for it in items:
        if "-" in it:
            lo, hi = it.split("-", 1)
            seeds += list(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(it))
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fcvi", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate every (mode, seed) pair of a scenario")
    r.add_argument("config", type=Path)
    r.add_argument("--modes", nargs="+", choices=[m.value for m in Mode])
    r.add_argument("--seeds", nargs="+", help="seed values or inclusive ranges like 0-9")
    r.add_argument("--out", type=Path, default=Path("fcvi_out"))
    r.add_argument("--monitor-every-round", action="store_true",
                   help="also log the monitor report on rounds without churn (no action taken)")

    rep = sub.add_parser("report", help="print metric tables for a finished run directory")
    rep.add_argument("run_dir", type=Path)

    v = sub.add_parser("validate", help="check a scenario file and print the resolved config")
    v.add_argument("config", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            sys.stdout.write(cfg.dumps())
            return 0
        if args.command == "report":
            cfg, rows = load_run_dir(args.run_dir)
            sys.stdout.write(format_report(cfg, rows))
            return 0
        seeds = None
        if args.seeds is not None:
            try:
                seeds = _parse_seeds(args.seeds)
            except ValueError:
                raise ConfigError(f"cannot parse {args.seeds}", "--seeds") from None
        cfg = with_overrides(load_config(args.config), args.modes, seeds, args.monitor_every_round)
    except (ConfigError, IncompleteRun) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        execute(cfg, args.out)
    except Exception as e:  # anything past validation is a simulation failure
        log.exception("run failed")
        print(f"error: run failed: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
