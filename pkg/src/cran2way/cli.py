"""Command-line sweep runner: ``cran2way --sweep snr --values 0:40:5 --out run``."""

import argparse
import sys

from .errors import ConfigError, IoError
from .harness import SweepSpec, load_config, parse_config, parse_values, run_and_write

_AXIS = {"snr": "snr_db", "fronthaul": "fronthaul_bits"}
_DEFAULT_VALUES = {"snr": "0:40:5", "fronthaul": "1:12:1"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="cran2way", description="Two-way C-RAN rate sweeps.")
    p.add_argument("--config", help="key = value system configuration file")
    p.add_argument("--sweep", choices=sorted(_AXIS), required=True)
    p.add_argument("--values", help="a:b:step (inclusive) or comma list")
    p.add_argument("--realizations", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schemes", default="multipair", help="comma list of multipair, individual")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--workers", type=int, default=1)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        config = load_config(args.config) if args.config else parse_config("")
        spec = SweepSpec(
            axis=_AXIS[args.sweep],
            values=parse_values(args.values or _DEFAULT_VALUES[args.sweep]),
            realizations=args.realizations,
            seed=args.seed,
            schemes=tuple(s for s in args.schemes.split(",") if s.strip()),
        )
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        run_and_write(config, spec, args.out, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except IoError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
