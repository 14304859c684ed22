"""Command-line entry point: ``python -m cmarck`` or ``cmarck``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import load_channel
from .harness import DEFAULT_CACHE, DEFAULT_LEVELS, Classifier, ExperimentConfig, load_tables, run_experiment, run_fig1
from .signals import ConfigurationError, ModClass


def parse_snr(text: str) -> tuple[float, ...]:
    """``"20"`` or ``"min:step:max"`` (inclusive) in dB."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return (float(parts[0]),)
        if len(parts) != 3:
            raise ValueError
        lo, step, hi = map(float, parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR grid {text!r}; use min:step:max") from None
    if step <= 0:
        raise argparse.ArgumentTypeError("SNR step must be positive")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    if n < 1:
        raise argparse.ArgumentTypeError(f"SNR grid {text!r} is empty")
    return tuple(float(lo + k * step) for k in range(n))


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmarck", description=__doc__)
    p.add_argument("--channel", default="ch1", choices=["ch1", "ch2", "ch3", "custom"])
    p.add_argument("--channel-file", type=Path, help="custom taps, one 're im' per line")
    p.add_argument("--mod", default="qam", choices=["qam", "psk"])
    p.add_argument("--levels", type=_int_list)
    p.add_argument("--snr", type=parse_snr, help="dB, value or min:step:max (default 20; 0 and 20 with --fig1)")
    p.add_argument("--realizations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classifiers", default="cma-rck")
    p.add_argument("--out", type=Path)
    p.add_argument("-L", "--taps", dest="L", type=int, default=20, help="equalizer length")
    p.add_argument("-M", "--iterations", dest="M", type=int, default=200, help="CMA updates / blocks")
    p.add_argument("--mu", type=float, default=1e-4)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--normalize-power", action="store_true", help="rescale CMA output to unit signal power")
    p.add_argument("--cache-dir", type=Path, default=DEFAULT_CACHE)
    p.add_argument("--rebuild-tables", action="store_true")
    p.add_argument("--no-build", action="store_true", help="fail instead of building missing tables")
    p.add_argument("--lzf-tolerance", type=float, default=1e-5)
    p.add_argument("--dump-cdf", type=Path, help="write CDF and testpoint tables to this directory")
    p.add_argument("--fig1", action="store_true", help="run the CDF-match experiment instead of a sweep")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    try:
        if args.fig1:
            points = run_fig1(args.snr or (0.0, 20.0), seed=args.seed, output_path=args.out)
            print("snr_db,sigma2_full,sigma2_no_isi,sup_full,sup_no_isi,model_gap")
            for pt in points:
                print(f"{pt.snr_db:g},{pt.variance_full:.6g},{pt.variance_no_isi:.6g},"
                      f"{pt.sup_full:.4f},{pt.sup_no_isi:.4f},{pt.model_gap:.4f}")
            return 0

        mod = ModClass(args.mod)
        custom = None
        if args.channel == "custom":
            if args.channel_file is None:
                raise ConfigurationError("--channel custom requires --channel-file")
            custom = tuple(load_channel(args.channel_file).taps)
        cfg = ExperimentConfig(
            mod_class=mod,
            levels=args.levels or DEFAULT_LEVELS[mod],
            channel_model=args.channel,
            snr_grid_db=args.snr or (20.0,),
            L=args.L,
            M=args.M,
            mu=args.mu,
            realizations=args.realizations,
            master_seed=args.seed,
            classifiers=tuple(c.strip() for c in args.classifiers.split(",")),
            output_path=str(args.out) if args.out else None,
            custom_taps=custom,
            lzf_tolerance=args.lzf_tolerance,
            normalize_power=args.normalize_power,
        )
        needs_tables = any(c is not Classifier.C63 for c in cfg.classifiers) or args.dump_cdf or args.rebuild_tables
        tables = (
            load_tables(cfg, args.cache_dir, rebuild=args.rebuild_tables, build=not args.no_build)
            if needs_tables
            else None
        )
        if args.dump_cdf:
            tables.save(args.dump_cdf)
        result = run_experiment(cfg, tables, workers=args.workers)
        print("classifier,snr_db,pc,ci_halfwidth,n")
        for r in result.summary():
            print(f"{r['classifier']},{r['snr_db']:g},{r['pc']:.4f},{r['ci_halfwidth']:.4f},{r['n']}")
        return 0
    except (ConfigurationError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"cmarck: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
