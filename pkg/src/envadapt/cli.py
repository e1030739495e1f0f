"""Command-line entry point: ``envadapt {run,ablate-fewshot,pilot-study,selftest}``."""

from __future__ import annotations

import argparse
import sys
import time

from . import config as cfgmod
from . import experiments as ex
from .errors import ConfigurationError, UsageError


def _parse_list(text, kind):
    try:
        return [kind(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list '{text}'") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="envadapt", description="Few-shot environment adaptation experiments")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, out=True):
        p.add_argument("--config", metavar="PATH", help="TOML experiment file")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--preset", choices=cfgmod.PRESETS, help="override the preset")
        if out:
            p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")

    common(sub.add_parser("run", help="run the configured task and scheme"))
    p = sub.add_parser("ablate-fewshot", help="OA rate versus few-shot size (mmWave)")
    common(p)
    p.add_argument("--d-n", metavar="LIST", help="comma-separated few-shot sizes, e.g. 8,16,32,64")
    p = sub.add_parser("pilot-study", help="BER versus SNR per pilot count (OFDM)")
    common(p)
    p.add_argument("--pilots", metavar="LIST", help="comma-separated pilot counts, e.g. 3,24")
    p = sub.add_parser("selftest", help="fast installation check")
    p.add_argument("--seed", type=int, default=0)
    return ap


def _load(args, overrides=None):
    return cfgmod.load(args.config, args.preset, args.seed, overrides)


def _finish(report, out, t0):
    report.seconds = time.perf_counter() - t0
    path = ex.write_report(report, out)
    state = "complete" if report.complete else f"INCOMPLETE ({report.error})"
    print(f"{len(report.metrics)} metric rows, {len(report.traces)} trace rows -> {path} [{state}]")
    return 0 if report.complete else 1


def _guarded(cfg, fn):
    report = ex.ExperimentReport(cfg.hash(), cfg.experiment.seed, config=cfg.to_dict())
    try:
        fn(report)
    except Exception as exc:  # noqa: BLE001 - recorded in the partial report
        report.complete = False
        report.error = f"{type(exc).__name__}: {exc}"
    return report


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "selftest":
            from .selftest import run_selftest
            return 0 if run_selftest(args.seed) else 1
        t0 = time.perf_counter()
        if args.verb == "run":
            cfg = _load(args)
            return _finish(ex.run(cfg), args.out, t0)
        if args.verb == "ablate-fewshot":
            cfg = _load(args, {"experiment": {"task": "mmwave", "scheme": "oa"}})
            d_n = _parse_list(args.d_n, int) if args.d_n else None
            report = _guarded(cfg, lambda r: ex.ablate_fewshot(cfg, d_n, report=r))
            return _finish(report, args.out, t0)
        cfg = _load(args, {"experiment": {"task": "ofdm"}})
        pilots = _parse_list(args.pilots, int) if args.pilots else None
        report = _guarded(cfg, lambda r: ex.pilot_study(cfg, pilots, report=r))
        return _finish(report, args.out, t0)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
