"""``swan-lab`` command-line entry point.

Exit codes: 0 all checks passed, 2 a certificate or acceptance check failed,
1 operational error (bad config, I/O, numeric failure).
"""

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .config import load_config
from .errors import SwanLabError
from .experiments import COMMANDS, RESULT_COLUMNS, write_histories

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2

log = logging.getLogger("swan_lab")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_outputs(cfg, outcome, started):
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "results.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for row in outcome.rows:
            w.writerow([_fmt(x) for x in row])
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump({"command": cfg.command, "passed": outcome.ok, **outcome.summary}, fh, indent=2,
                  sort_keys=True, default=_json_default)
        fh.write("\n")
    meta = {
        "config": cfg.echo(),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": started,
    }
    with open(os.path.join(out, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    extra = outcome.extra_files
    if extra.get("histories"):
        write_histories(extra["histories"], os.path.join(out, "histories"))
    if extra.get("table"):
        with open(os.path.join(out, "table.txt"), "w") as fh:
            fh.write(extra["table"] + "\n")
    if "best" in extra:
        with open(os.path.join(out, "best.json"), "w") as fh:
            json.dump(extra["best"], fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def build_parser():
    p = argparse.ArgumentParser(prog="swan-lab", description="SWAN graph-ODE laboratory")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--seeds", help="comma-separated seeds (overrides [run] seeds)")
    p.add_argument("--scale", type=float, help="property-dataset scale factor")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    overrides = {"out": args.out, "scale": args.scale}
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    try:
        cfg = load_config(args.config, args.command, overrides=overrides)
        outcome = COMMANDS[args.command](cfg)
        write_outputs(cfg, outcome, started)
    except (SwanLabError, ValueError, OSError) as err:
        log.error("%s", err)
        return EXIT_ERROR
    for name, chk in outcome.summary.get("checks", {}).items():
        log.info("%s %s (%s)", "PASS" if chk["passed"] else "FAIL", name, chk["value"])
    if not outcome.ok:
        log.warning("checks failed; see %s", os.path.join(cfg.output_dir, "summary.json"))
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
