"""Command-line entry point: ingest, qpl, train, backtest, report.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .agents import Agent, train
from .baselines import BASELINES, run_baseline
from .config import OUTPUT_ROOT_ENV, ConfigError, load_config, parse_overrides
from .env import TradingEnv, run_episode
from .experiments import Setting, run_all
from .market import (InsufficientHistoryError, MarketDataError, align, load_csv, load_frame,
                     save_frame, write_csv)
from .metrics import report, sanitize, summary_json
from .portfolio import read_ledger, write_ledger
from .qpl import QplError, daily_qpl
from .synthetic import drift_market

log = logging.getLogger("augddpg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ArgParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers

def output_root(explicit=None):
    return Path(explicit or os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def split_symbols(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def ingest_frame(data_dir, symbols):
    """Load and align ``<data_dir>/<SYMBOL>.csv``; errors name the offending file."""
    if not symbols:
        raise ConfigError("no symbols given")
    series = []
    for sym in symbols:
        path = Path(data_dir) / f"{sym}.csv"
        if not path.is_file():
            raise MarketDataError(f"symbol {sym}: file not found: {path}")
        try:
            series.append(load_csv(path, sym))
        except MarketDataError as exc:
            raise type(exc)(f"symbol {sym}: {exc}") from None
    return align(series)


def resolve_frame(cache, cfg=None):
    """Frame from an explicit cache, else from the config's CSVs, else the default cache."""
    if cache:
        return load_frame(cache)
    if cfg is not None and cfg.symbols:
        return ingest_frame(cfg.data_dir, cfg.symbols)
    default = output_root(cfg.output_dir if cfg else None) / "frame.json"
    if default.is_file():
        return load_frame(default)
    raise MarketDataError(f"no frame cache given and {default} does not exist; run 'ingest' first")


def split_days(cfg, n_days):
    """Training days [warmup, n_train) and held-out days [max(n_train, warmup), n_days)."""
    n_train = math.floor(cfg.split * n_days)
    warmup = cfg.env_config().warmup
    if n_train <= warmup:
        raise InsufficientHistoryError(
            f"{n_train} training days do not cover the warmup of {warmup} days")
    test_start = max(n_train, warmup)
    if test_start >= n_days:
        raise InsufficientHistoryError("no held-out days left after the training split")
    return (warmup, n_train), (test_start, n_days)


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config(args):
    overrides = parse_overrides(getattr(args, "set", None))
    if getattr(args, "output_dir", None):
        overrides["output_dir"] = args.output_dir
    return load_config(getattr(args, "config", None), overrides)


# ---------------------------------------------------------------- commands

def cmd_ingest(args):
    symbols = split_symbols(args.symbols)
    frame = ingest_frame(args.data_dir, symbols)
    out = Path(args.cache) if args.cache else output_root(args.output_dir) / "frame.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = save_frame(frame, out)
    print(f"{out}\t{frame.m} symbols\t{frame.n_days} days\tsha256={digest}")
    return EXIT_OK


def cmd_qpl(args):
    cfg = _config(args)
    frame = resolve_frame(args.cache, cfg)
    if args.symbol not in frame.symbols:
        raise MarketDataError(f"symbol {args.symbol} not in frame {frame.symbols}")
    asset = frame.symbols.index(args.symbol)
    iso = [d.isoformat() for d in frame.dates]
    if args.date not in iso:
        raise MarketDataError(f"date {args.date} is not a trading day of the frame")
    first = iso.index(args.date)
    last = first
    if args.end:
        if args.end not in iso:
            raise MarketDataError(f"date {args.end} is not a trading day of the frame")
        last = iso.index(args.end)
        if last < first:
            raise UsageError("--end precedes --date")
    lookback = args.lookback or cfg.qpl_lookback
    header = ["date", "symbol", "anchor"]
    for n in range(1, args.levels + 1):
        header += [f"qpl_m{n}", f"qpl_p{n}"]
    rows = []
    for t in range(first, last + 1):
        lad = daily_qpl(frame, asset, t, lookback, args.levels, grid_points=cfg.qpl_grid_points,
                        vol_scaled=cfg.qpl_vol_scaled)
        row = [iso[t], args.symbol, repr(float(lad.anchor))]
        for n in range(args.levels):
            row += [repr(float(lad.levels_down[n])), repr(float(lad.levels_up[n]))]
        rows.append(row)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    frame = resolve_frame(args.cache, cfg)
    (start, end), _ = split_days(cfg, frame.n_days)
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.toml").write_text(cfg.to_toml(), encoding="utf-8")
    env = TradingEnv(frame, cfg.env_config(), start, end)
    agent = Agent(frame.m, cfg.window, cfg.hyperparams(), cfg.seed)

    def progress(ep):
        log.info("episode %d  cum_reward %.6g  value %.6g", ep.episode + 1, ep.cum_reward,
                 ep.final_value)

    logs = train(env, agent, progress)
    with (out / "train_log.jsonl").open("w", encoding="utf-8") as fh:
        for ep in logs:
            fh.write(json.dumps(ep.record(), sort_keys=True) + "\n")
    meta = agent.meta()
    meta.update({"seed": cfg.seed, "config_hash": cfg.digest(), "symbols": list(frame.symbols),
                 "train_days": [start, end]})
    ad.save_checkpoint(out / "checkpoint.json", agent.named_parameters(), meta)
    print(f"{out / 'checkpoint.json'}\t{len(logs)} episodes\ttrain days [{start}, {end})")
    return EXIT_OK


def _write_backtest(ledger, name, m, out_dir, cfg, extra):
    out_dir.mkdir(parents=True, exist_ok=True)
    name = sanitize(name)
    write_ledger(ledger, out_dir / f"{name}.csv", m)
    summary = summary_json(ledger, cfg.digest(), cfg.rf_annual, cfg.t_year,
                           dict(extra, strategy=name, seed=cfg.seed))
    (out_dir / f"{name}.summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True)
                                                  + "\n", encoding="utf-8")
    print(f"{out_dir / (name + '.csv')}\t{len(ledger)} days\tfinal value {summary['final_value']:.6g}")


def cmd_backtest(args):
    if not args.checkpoint and not args.baseline:
        raise UsageError("give --checkpoint and/or --baseline")
    if args.checkpoint and args.baseline and args.baseline != "all":
        raise UsageError("--checkpoint combines only with --baseline all")
    config_path = args.config
    if args.checkpoint and not config_path:
        sibling = Path(args.checkpoint).parent / "resolved_config.toml"
        config_path = str(sibling) if sibling.is_file() else None
    args.config = config_path
    cfg = _config(args)
    frame = resolve_frame(args.cache, cfg)
    _, (start, end) = split_days(cfg, frame.n_days)
    out_dir = cfg.resolved_output_dir() / "ledgers"
    common = {"start_day": start, "end_day": end, "start_date": frame.dates[start].isoformat()}
    if args.checkpoint:
        agent = Agent.load(args.checkpoint)
        if agent.n_assets != frame.m or agent.window != cfg.window:
            raise ConfigError(f"checkpoint expects {agent.n_assets} assets and window "
                              f"{agent.window}; frame has {frame.m}, config window {cfg.window}")
        env = TradingEnv(frame, cfg.env_config(), start, end)
        ledger = run_episode(env, agent.policy_fn(cfg.use_qpl))
        _write_backtest(ledger, args.name or "ours", frame.m, out_dir, cfg,
                        dict(common, checkpoint_sha256=file_sha256(args.checkpoint)))
    names = BASELINES if args.baseline == "all" else ([args.baseline] if args.baseline else [])
    for b in names:
        ledger = run_baseline(b, frame, cfg.env_config(), start, end, cfg.baseline_commission,
                              **({"ons_params": cfg.ons_params()} if b == "ons" else {}),
                              **({"winner_lookback": cfg.winner_lookback} if b == "winner" else {}))
        label = args.name if (args.name and len(names) == 1 and not args.checkpoint) else b
        _write_backtest(ledger, label, frame.m, out_dir, cfg, common)
    return EXIT_OK


def cmd_report(args):
    cfg = _config(args)
    src = Path(args.ledgers)
    if not src.is_dir():
        raise MarketDataError(f"ledger directory not found: {src}")
    files = sorted(src.glob("*.csv"))
    if not files:
        raise MarketDataError(f"no ledger CSV files in {src}")
    ledgers = {p.stem: read_ledger(p) for p in files}
    out = Path(args.out) if args.out else cfg.resolved_output_dir() / "report"
    rows = report(ledgers, out, cfg.rf_annual, cfg.t_year, cfg.sharpe_window)
    print(f"{out}\t{len(rows)} strategies")
    return EXIT_OK


def cmd_experiment(args):
    which = ("smoke", "gini_sweep", "efficiency") if args.which == "all" else (args.which,)
    out = Path(args.out) if args.out else output_root(args.output_dir) / "experiments"
    payload = run_all(out, Setting(episodes=args.episodes), which)
    for name, ok in payload["flags"].items():
        print(f"{name}\t{'PASS' if ok else 'FAIL'}")
    return EXIT_OK


def cmd_synth(args):
    """Write the seeded drift market as per-symbol CSVs (demo and smoke data)."""
    frame = drift_market(args.days, args.assets, 0, args.drift, args.vol, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(frame.m):
        write_csv(frame.series(i), out / f"{frame.symbols[i]}.csv")
    print(f"{out}\t{','.join(frame.symbols)}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = ArgParser(prog="augddpg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=ArgParser)

    def config_flags(sp):
        sp.add_argument("--config", help="flat TOML run configuration")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--cache", help="frame cache written by 'ingest'")
        sp.add_argument("--output-dir", help=f"output directory (default ${OUTPUT_ROOT_ENV} or ./runs)")

    sp = sub.add_parser("ingest", help="validate and align CSVs into a frame cache")
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--symbols", required=True, help="comma-separated symbol list")
    sp.add_argument("--cache", help="output path (default <output>/frame.json)")
    sp.add_argument("--output-dir")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("qpl", help="quantum price level ladders as CSV")
    config_flags(sp)
    sp.add_argument("--symbol", required=True)
    sp.add_argument("--date", required=True, help="first trading day (YYYY-MM-DD)")
    sp.add_argument("--end", help="last trading day, inclusive (default: --date)")
    sp.add_argument("--lookback", type=int, help="return observations per fit")
    sp.add_argument("--levels", type=int, default=1, choices=range(1, 11), metavar="K")
    sp.add_argument("--out", help="CSV path (default stdout)")
    sp.set_defaults(func=cmd_qpl)

    sp = sub.add_parser("train", help="train the agent on the first split of the data")
    config_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("backtest", help="run a checkpoint or baseline on the held-out days")
    config_flags(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--baseline", choices=BASELINES + ("all",))
    sp.add_argument("--name", help="ledger name (default 'ours' or the baseline name)")
    sp.set_defaults(func=cmd_backtest)

    sp = sub.add_parser("report", help="metrics table and SVG figures from ledgers")
    config_flags(sp)
    sp.add_argument("--ledgers", required=True, help="directory of ledger CSVs")
    sp.add_argument("--out", help="report directory (default <output>/report)")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("experiment", help="smoke, Gini sweep and encoder-efficiency runs")
    sp.add_argument("which", choices=("smoke", "gini_sweep", "efficiency", "all"))
    sp.add_argument("--episodes", type=int, default=50)
    sp.add_argument("--out", help="directory (default <output>/experiments)")
    sp.add_argument("--output-dir")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("synth", help="write a seeded synthetic drift market as CSVs")
    sp.add_argument("--out", required=True)
    sp.add_argument("--days", type=int, default=300)
    sp.add_argument("--assets", type=int, default=5)
    sp.add_argument("--drift", type=float, default=0.003)
    sp.add_argument("--vol", type=float, default=0.005)
    sp.add_argument("--seed", type=int, default=7)
    sp.set_defaults(func=cmd_synth)
    return p


def exit_code(exc):
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, (QplError, ArithmeticError, FloatingPointError, RuntimeError,
                        np.linalg.LinAlgError)):
        return EXIT_RUNTIME
    if isinstance(exc, (MarketDataError, ConfigError, OSError, ValueError, KeyError)):
        return EXIT_DATA
    return EXIT_RUNTIME


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = exit_code(exc)
        print(f"augddpg {args.command}: error: {exc}", file=sys.stderr)
        if code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
