"""Command line: ddrw-export export <source> <out.ddrw> [--verify N]."""

import argparse
import json
import sys

from .errors import ExporterError
from .export import export, verify


def build_parser():
    ap = argparse.ArgumentParser(prog="ddrw-export")
    sub = ap.add_subparsers(dest="command", required=True)
    e = sub.add_parser("export", help="convert a checkpoint to DDRW")
    e.add_argument("source", help="torch checkpoint (.pt/.pkl)")
    e.add_argument("out", help="output .ddrw path")
    e.add_argument("--verify", type=int, default=0, metavar="N",
                   help="check logit parity on N seeded probe images")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        report = export(args.source, args.out)
        if args.verify > 0:
            report["verify_probes"] = args.verify
            report["max_abs_logit_diff"] = verify(args.source, args.out, args.verify)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0
    except (ExporterError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
