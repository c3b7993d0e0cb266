"""Shared plumbing for the experiment scripts: config loading, overrides, output."""

import argparse
import time
from pathlib import Path

import yaml

from ksconf.harness import run_config

CONFIG_DIR = Path(__file__).resolve().parent / "configs"


def parser(description: str, default_config: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=str(CONFIG_DIR / default_config))
    p.add_argument("--trials", type=int, default=None, help="override the config's trial count")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-o", "--output", default=None, help="also write the report as CSV")
    return p


def run(args):
    path = Path(args.config)
    cfg = yaml.safe_load(path.read_text()) or {}
    if args.trials is not None:
        cfg["trials"] = args.trials
    if args.seed is not None:
        cfg["seed"] = args.seed
    t0 = time.perf_counter()
    report = run_config(cfg, path.parent)
    print(f"# {path.name}: {cfg.get('experiment', 'fpr')}, {cfg.get('trials')} trials, "
          f"{time.perf_counter() - t0:.1f} s")
    if args.output:
        Path(args.output).write_text(report.to_csv())
    return cfg, report
