"""Batch command-line front end.

Subcommands::

    flipofdm ber-sweep        Monte Carlo BER against SNR
    flipofdm threshold-table  optimal/approximate thresholds and SNR gains
    flipofdm closed-form-report  clipper noise: quadrature, closed form, Monte Carlo
    flipofdm waveform         dump the unipolar subframes of one frame
    flipofdm complexity       FFT operation counts per scheme

Every subcommand accepts ``--config FILE.json`` whose keys are the long
flag names (dashes or underscores); flags given on the command line win.
Results go to ``--out`` (default stdout). When ``--out`` names a file, a
``<out>.manifest.json`` run manifest is written beside it.

Exit codes: 0 success, 2 usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .aco_ofdm import aco_transmit
from .channel import EqualizationError
from .detection import THRESHOLD_TABLE_COLUMNS, DetectorConfig, closed_form_report, threshold_table
from .flip_ofdm import UnipolarSubframe, flip_transmit, write_waveform
from .numerics import DomainError, NumericError, Rng
from .qam import constellation, modulate
from .sim import ConfigError, SweepConfig, complexity_table, run_sweep, snr_grid

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

BER_COLUMNS = (
    "snr_db",
    "scheme",
    "detector",
    "bits_sent",
    "bit_errors",
    "ber_sim",
    "ber_analytic",
    "ci95",
    "threshold_over_sigma_z",
    "analytic_snr_db",
)
COMPLEXITY_COLUMNS = ("n", "aco_tx", "flip_tx", "aco_rx", "flip_rx", "rx_saving")
CLOSED_FORM_COLUMNS = (
    "snr_db",
    "sigma2_nc_quadrature",
    "sigma2_nc_closed_form",
    "sigma2_nc_monte_carlo",
    "monte_carlo_stderr",
    "quadrature_vs_mc_sigmas",
    "closed_form_vs_mc_sigmas",
)

_DETECTORS = {"plain": "plain", "clip": "clipper", "clip+threshold": "clipper_plus_threshold"}


class UsageError(Exception):
    """Bad flags or flag combinations."""


@dataclass
class RunManifest:
    command: str
    config: dict
    version: str
    timestamp: str
    seed: int | None
    outputs: list[str] = field(default_factory=list)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, default=_json_default)
            fh.write("\n")


# --------------------------------------------------------------------------
# flag parsing helpers
# --------------------------------------------------------------------------


def parse_snr_range(text: str) -> tuple[float, ...]:
    """``A:B:step`` (inclusive) or a single value ``A``."""
    parts = str(text).split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad SNR range {text!r}; expected A:B:step") from None
    if len(nums) == 1:
        return (nums[0],)
    if len(nums) != 3:
        raise UsageError(f"bad SNR range {text!r}; expected A:B:step")
    try:
        return snr_grid(*nums)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def parse_threshold(text: str) -> tuple[str, float]:
    """``optimal``, ``approx``, ``disabled`` or ``fixed:<c/sigma_z>``."""
    text = str(text)
    if text in ("optimal", "disabled"):
        return text, 0.0
    if text in ("approx", "approximate"):
        return "approximate", 0.0
    if text.startswith("fixed:"):
        try:
            value = float(text[len("fixed:") :])
        except ValueError:
            raise UsageError(f"bad fixed threshold {text!r}") from None
        if not value >= 0:
            raise UsageError("fixed threshold must be >= 0")
        return "fixed", value
    raise UsageError(f"unknown threshold policy {text!r}")


def parse_taps(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(t) for t in text)
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise UsageError(f"bad tap list {text!r}") from None


def _cell(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(float(value))
    return value


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return str(obj)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return _cell(value)
    return value


def render(rows: list[dict], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        objs = [{c: _json_value(r[c]) for c in columns} for r in rows]
        return json.dumps(objs, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def _emit(text: str, args, command: str, config: dict, seed: int | None) -> None:
    out = getattr(args, "out", None)
    if out in (None, "-"):
        sys.stdout.write(text)
        return
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(text)
    manifest = RunManifest(
        command=command,
        config=config,
        version=__version__,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        seed=seed,
        outputs=[out],
    )
    manifest.write(out + ".manifest.json")


def _config_echo(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "config")}


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def build_sweep_config(args) -> SweepConfig:
    if args.scheme is None:
        raise UsageError("--scheme is required")
    if args.detector not in _DETECTORS:
        raise UsageError(f"--detector must be one of {sorted(_DETECTORS)}")
    policy, value = parse_threshold(args.threshold)
    stages = _DETECTORS[args.detector]
    try:
        detector = DetectorConfig(stages, policy, value)
    except (DomainError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return SweepConfig(
        scheme=args.scheme,
        order=int(args.mod_order),
        n=int(args.fft_size),
        cp_len=int(args.cp_len),
        snr_db_points=parse_snr_range(args.snr_db),
        min_bit_errors=int(args.min_errors),
        max_bits=int(args.max_bits),
        detector=detector,
        taps=parse_taps(args.taps),
        seed=int(args.seed),
        workers=int(args.workers),
    )


def cmd_ber_sweep(args) -> int:
    config = build_sweep_config(args)
    try:
        config.validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    rows = []
    for rec in run_sweep(config):
        row = rec.as_dict()
        row["ci95"] = row.pop("ci95_halfwidth")
        rows.append(row)
    _emit(render(rows, BER_COLUMNS, args.format), args, "ber-sweep", _config_echo(args), config.seed)
    return EXIT_OK


def cmd_threshold_table(args) -> int:
    rows = threshold_table(parse_snr_range(args.snr_db))
    _emit(render(rows, THRESHOLD_TABLE_COLUMNS, args.format), args, "threshold-table", _config_echo(args), None)
    return EXIT_OK


def cmd_closed_form_report(args) -> int:
    if int(args.trials) < 2:
        raise UsageError("--trials must be at least 2")
    rows = closed_form_report(parse_snr_range(args.snr_db), int(args.trials), int(args.seed))
    _emit(
        render(rows, CLOSED_FORM_COLUMNS, args.format),
        args,
        "closed-form-report",
        _config_echo(args),
        int(args.seed),
    )
    return EXIT_OK


def waveform_subframes(scheme: str, n: int, cp_len: int, order: int, seed: int, zero_payload: bool):
    """Subframes for one frame of random (or all-zero) payload."""
    if scheme not in ("flip", "aco"):
        raise UsageError("--scheme must be flip or aco")
    try:
        const = constellation(order)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if n < 8 or n & (n - 1) or not 0 <= cp_len <= n:
        raise UsageError("--fft-size must be a power of two >= 8 and 0 <= --cp-len <= N")
    size = n // 2 - 1 if scheme == "flip" else n // 4
    if zero_payload:
        payload = np.zeros(size, dtype=complex)
    else:
        bits = Rng(seed, 0).bits(1, size * const.bits_per_symbol)
        payload = modulate(bits, const)[0]
    if scheme == "flip":
        return list(flip_transmit(payload, n, cp_len))
    sub: UnipolarSubframe = aco_transmit(payload, n, cp_len)
    return [sub]


def cmd_waveform(args) -> int:
    if args.scheme is None:
        raise UsageError("--scheme is required")
    subs = waveform_subframes(
        args.scheme, int(args.fft_size), int(args.cp_len), int(args.mod_order), int(args.seed), bool(args.zero_payload)
    )
    buf = io.StringIO()
    write_waveform(subs, buf)
    _emit(buf.getvalue(), args, "waveform", _config_echo(args), int(args.seed))
    return EXIT_OK


def cmd_complexity(args) -> int:
    try:
        row = complexity_table(int(args.fft_size))
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    _emit(render([row], COMPLEXITY_COLUMNS, args.format), args, "complexity", _config_echo(args), None)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # raise instead of exiting so main() owns the exit code
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, formats: bool = True) -> None:
    p.add_argument("--config", help="JSON file of flag values; explicit flags override it")
    p.add_argument("--out", default="-", help="output path (default: stdout)")
    if formats:
        p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flipofdm", description="Flip-OFDM / ACO-OFDM link simulation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ber-sweep", help="Monte Carlo BER against SNR")
    p.add_argument("--scheme", choices=("flip", "aco"))
    p.add_argument("--mod-order", type=int, default=16)
    p.add_argument("--fft-size", type=int, default=512)
    p.add_argument("--cp-len", type=int, default=0)
    p.add_argument("--snr-db", default="0:24:2")
    p.add_argument("--min-errors", type=int, default=200)
    p.add_argument("--max-bits", type=int, default=10_000_000)
    p.add_argument("--detector", choices=tuple(_DETECTORS), default="plain")
    p.add_argument("--threshold", default="optimal", help="optimal | approx | disabled | fixed:<c/sigma_z>")
    p.add_argument("--taps", default="1.0", help="comma-separated nonnegative channel taps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _common(p)
    p.set_defaults(func=cmd_ber_sweep)

    p = sub.add_parser("threshold-table", help="optimal thresholds and SNR gains")
    p.add_argument("--snr-db", default="0:30:1")
    _common(p)
    p.set_defaults(func=cmd_threshold_table)

    p = sub.add_parser("closed-form-report", help="clipper noise power three ways")
    p.add_argument("--snr-db", default="0:30:5")
    p.add_argument("--trials", type=int, default=2_000_000)
    p.add_argument("--seed", type=int, default=23)
    _common(p)
    p.set_defaults(func=cmd_closed_form_report)

    p = sub.add_parser("waveform", help="dump one frame's unipolar subframes")
    p.add_argument("--scheme", choices=("flip", "aco"))
    p.add_argument("--fft-size", type=int, default=64)
    p.add_argument("--cp-len", type=int, default=0)
    p.add_argument("--mod-order", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zero-payload", action="store_true")
    _common(p, formats=False)
    p.set_defaults(func=cmd_waveform)

    p = sub.add_parser("complexity", help="FFT operation counts")
    p.add_argument("--fft-size", type=int, default=1024)
    _common(p)
    p.set_defaults(func=cmd_complexity)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    try:
        with open(args.config, encoding="utf-8") as fh:
            values = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(values, dict):
        raise UsageError("config file must hold a JSON object")
    # re-parse with file values as defaults so that explicit flags still win
    subparser = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
    known = {a.dest for a in subparser._actions}
    defaults = {}
    for key, value in values.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in known or dest in ("help", "config", "func"):
            raise UsageError(f"unknown config key {key!r}")
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return args.func(args)
    except UsageError as exc:
        print(f"flipofdm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DomainError) as exc:
        print(f"flipofdm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, EqualizationError, ArithmeticError) as exc:
        print(f"flipofdm: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
