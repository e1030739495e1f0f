"""Reproduce the experiment figures as seed-averaged tables.

Every experiment writes one ``metrics.csv``/``trace.csv``/``report.json``
directory per seed under ``--out`` and prints the seed mean per series.

    python3 scripts/figures.py optimizers --seeds 0-4
    python3 scripts/figures.py adaptation --seeds 0-4 --snr 0,5,10,15,20
    python3 scripts/figures.py rates
    python3 scripts/figures.py ablation
    python3 scripts/figures.py pilots
"""

from __future__ import annotations

import argparse
import collections
from pathlib import Path

import numpy as np

from envadapt import config
from envadapt import experiments as ex


def seed_list(text):
    if "-" in text:
        lo, hi = map(int, text.split("-"))
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",")]


def summarize(reports, keys):
    table = collections.defaultdict(list)
    for rep in reports:
        for r in rep.metrics:
            table[tuple(str(r[k]) for k in keys)].append(r["value"])
    print("  ".join(f"{k:>12}" for k in keys) + f"  {'mean':>10}  {'std':>8}")
    for key, vals in sorted(table.items()):
        print("  ".join(f"{k:>12}" for k in key) + f"  {np.mean(vals):10.4f}  {np.std(vals):8.4f}")


def optimizers(cfg):
    return ex.optimizer_comparison(cfg)


def adaptation(cfg):
    return ex.ofdm_compare(cfg)


def rates(cfg):
    return ex.mmwave_compare(cfg, methods=("mismatch", "tl", "oa", "ea", "upper"))


def ablation(cfg):
    return ex.ablate_fewshot(cfg)


def pilots(cfg):
    return ex.pilot_study(cfg)


EXPERIMENTS = {
    "optimizers": (optimizers, "ofdm", ("method",)),
    "adaptation": (adaptation, "ofdm", ("env", "method", "snr_db")),
    "rates": (rates, "mmwave", ("env", "method")),
    "ablation": (ablation, "mmwave", ("d_n",)),
    "pilots": (pilots, "ofdm", ("env", "method", "snr_db")),
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--seeds", type=seed_list, default=seed_list("0-4"), help="e.g. 0-4 or 0,3")
    ap.add_argument("--config", help="optional TOML overlay")
    ap.add_argument("--snr", help="comma-separated SNR grid in dB")
    ap.add_argument("--out", default="figures", help="output root")
    args = ap.parse_args(argv)
    fn, task, keys = EXPERIMENTS[args.experiment]
    over = {"experiment": {"task": task}}
    if args.snr:
        over["data"] = {"snr_grid": [float(s) for s in args.snr.split(",")]}
    reports = []
    for seed in args.seeds:
        cfg = config.load(args.config, seed=seed, overrides=over)
        rep = fn(cfg)
        rep.config = cfg.to_dict()
        ex.write_report(rep, Path(args.out) / args.experiment / f"seed{seed}")
        reports.append(rep)
        print(f"seed {seed} done", flush=True)
    summarize(reports, keys)


if __name__ == "__main__":
    main()
