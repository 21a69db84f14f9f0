"""Command line entry point: ``relpose --config FILE [overrides]``."""

from __future__ import annotations

import argparse
import sys
import time

from relpose.errors import ConfigError, NonPositiveP
from relpose.harness import CONFIG_DIR, export, load_config, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="relpose",
        description="Run the ship-landing scenario and write records.csv, sweep.csv and summary.json.",
    )
    p.add_argument("--config", help="INI run file (defaults to the shipped file for --mode)")
    p.add_argument("--mode", choices=["position", "bearing"], help="output used by the observer")
    p.add_argument("--duration", type=float, help="simulated time in seconds")
    p.add_argument("--dt", type=float, help="integration step in seconds")
    p.add_argument("--sweep-delta", type=float, help="observability window length in seconds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="seed for measurement noise")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    path = args.config
    if path is None:
        path = CONFIG_DIR / f"ship_landing_{args.mode or 'position'}.cfg"
    try:
        cfg = load_config(
            path,
            mode=args.mode,
            duration=args.duration,
            dt=args.dt,
            sweep_delta=args.sweep_delta,
            out_dir=args.out,
            seed=args.seed,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    try:
        result = run_scenario(cfg)
    except NonPositiveP as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    elapsed = time.perf_counter() - start

    paths = export(result, cfg.out_dir or "out")
    s = result.summary
    print(f"mode={s['mode']} steps={s['steps']} runtime={elapsed:.1f}s")
    for ph in s["phases"]:
        if "slope" in ph:
            print(
                f"phase {ph['id']} [{ph['t_start']:.3f}, {ph['t_end']:.3f}] "
                f"err {ph['err_start']:.3e} -> {ph['err_end']:.3e} "
                f"slope {ph['slope']:+.4f} ({ph['classification']}) "
                f"gamma slope {ph['slope_gamma']:+.4f} ({ph['classification_gamma']})"
            )
    for key, p in paths.items():
        print(f"{key}: {p}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
