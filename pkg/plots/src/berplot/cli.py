"""Command line: render BER figures from result CSVs."""

import argparse
import sys

from .render import PlotDataError, PlotSpec, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="berplot", description=__doc__)
    p.add_argument("inputs", nargs="+", help="result CSV files (long format, one row per scheme & sweep point)")
    p.add_argument("--axis", required=True, choices=["snr_db", "symbols", "users", "group_size", "relays"])
    p.add_argument("--out", required=True, help="output image path (.svg or .pdf)")
    p.add_argument("--linear", action="store_true", help="linear BER axis instead of log")
    p.add_argument("--labels", help="comma-separated series labels overriding the scheme names")
    p.add_argument("--title", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    labels = [t.strip() for t in args.labels.split(",")] if args.labels else None
    try:
        spec = PlotSpec(inputs=args.inputs, axis=args.axis, out=args.out, log_ber=not args.linear, labels=labels, title=args.title)
        out = render(spec)
    except PlotDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
