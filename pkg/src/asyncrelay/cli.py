"""Command line front end for the BER sweep harness.

Options may come from a key=value config file (--config), with command line
flags taking precedence. Exit codes: 0 success, 2 invalid configuration,
3 structurally unusable code.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from .codebook import ScheduleError
from .harness import (
    ConfigError,
    SimConfig,
    emit_csv,
    emit_plotscript,
    parse_delay_spec,
    parse_power_spec,
    run_sweep,
)

__all__ = ["build_parser", "config_from_args", "main"]

_EXIT_OK = 0
_EXIT_BAD_CONFIG = 2
_EXIT_BAD_CODE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Simulate bit error rates of a two-hop amplify-and-forward "
        "relay network with OFDM and distributed space-time coding.",
    )
    parser.add_argument("--config", metavar="FILE", help="key=value file supplying defaults")
    parser.add_argument("--mode", choices=["coherent", "differential"], help="receiver type")
    parser.add_argument("--code", help="built-in code name or path to a code description file")
    parser.add_argument("--n", type=int, dest="n_fft", help="subcarrier count (power of two)")
    parser.add_argument("--cp", type=int, dest="cp_len", help="cyclic prefix length in samples")
    parser.add_argument(
        "--power",
        help="total power sweep in dB: start:step:stop, comma list, or a single value",
    )
    parser.add_argument("--frames", type=int, help="minimum Monte Carlo units per point")
    parser.add_argument("--min-errors", type=int, help="keep simulating until this many bit errors")
    parser.add_argument("--max-frames", type=int, help="hard cap on units per point")
    parser.add_argument("--seed", type=int, help="master seed for all random streams")
    parser.add_argument("--out", help="output CSV path (a .gp plot script is written alongside)")
    parser.add_argument(
        "--fixed-delays",
        help="comma list of per-relay arrival offsets; omit to draw them randomly",
    )
    parser.add_argument(
        "--no-noise",
        action="store_true",
        default=None,
        help="disable relay and destination noise (pipeline checks)",
    )
    parser.add_argument("--workers", type=int, help="worker processes for the simulation")
    parser.add_argument("--source-fraction", type=float, help="share of total power spent at the source")
    parser.add_argument(
        "--relay-fraction",
        type=float,
        help="share of total power spent per relay (default: evenly split)",
    )
    parser.add_argument(
        "--rotation-deg",
        type=float,
        help="constellation rotation in degrees (default: spreads coordinates across pairs)",
    )
    parser.add_argument("--diff-chain", type=int, help="frames per channel draw in differential mode")
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        values[key.strip().lower().replace("-", "_")] = value.strip()
    return values


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, value: str):
    if key in ("n_fft", "cp_len", "frames", "min_errors", "max_frames", "seed", "workers", "diff_chain"):
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} needs an integer, got {value!r}") from exc
    if key in ("source_fraction", "relay_fraction", "rotation_deg"):
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r} needs a number, got {value!r}") from exc
    if key == "noise":
        low = value.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"config key 'noise' needs a boolean, got {value!r}")
    if key == "power_db":
        return parse_power_spec(value)
    if key == "delays":
        return parse_delay_spec(value)
    if key in ("mode", "code", "out"):
        return value
    raise ConfigError(f"unknown config key {key!r}")


def config_from_args(args: argparse.Namespace) -> SimConfig:
    """Merge config file values and command line flags into a SimConfig."""
    cfg = SimConfig()
    if args.config:
        file_values = _read_config_file(args.config)
        aliases = {"n": "n_fft", "cp": "cp_len", "power": "power_db", "fixed_delays": "delays"}
        known = {f.name for f in fields(SimConfig)}
        updates = {}
        for key, value in file_values.items():
            key = aliases.get(key, key)
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            updates[key] = _coerce(key, value)
        cfg = replace(cfg, **updates)

    overrides = {}
    for name in (
        "mode",
        "code",
        "n_fft",
        "cp_len",
        "frames",
        "min_errors",
        "max_frames",
        "seed",
        "out",
        "workers",
        "source_fraction",
        "relay_fraction",
        "rotation_deg",
        "diff_chain",
    ):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.power is not None:
        overrides["power_db"] = parse_power_spec(args.power)
    if args.fixed_delays is not None:
        overrides["delays"] = parse_delay_spec(args.fixed_delays)
    if args.no_noise:
        overrides["noise"] = False
    return replace(cfg, **overrides)


def _print_table(points) -> None:
    print(f"{'P_dB':>8}  {'BER':>12}  {'95% interval':>28}  {'bits':>12}  {'frames':>8}")
    for p in points:
        interval = f"[{p.ci_lo:.3e}, {p.ci_hi:.3e}]"
        print(f"{p.power_db:>8.2f}  {p.ber:>12.4e}  {interval:>28}  {p.bits:>12}  {p.frames:>8}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        points = run_sweep(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_BAD_CONFIG
    except ScheduleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_BAD_CODE

    _print_table(points)
    if cfg.out:
        out = Path(cfg.out)
        emit_csv(points, out)
        script = out.with_suffix(".gp")
        emit_plotscript(points, script, csv_name=out.name)
        print(f"wrote {out} and {script}")
    return _EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
