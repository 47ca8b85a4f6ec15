"""``spikeonet`` command line.

    spikeonet <experiment> [--config PATH] [--seed N] [--encoder NAME] [--out DIR] [--set KEY=VALUE ...]
    spikeonet import-mnist SOURCE [--dir DIR]
    spikeonet fetch-mnist [--dir DIR]

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
Errors are written to stderr as a single JSON object.
"""

import argparse
import json
import sys
from pathlib import Path

from spikeonet import config as config_mod
from spikeonet import data as datasets
from spikeonet.deeponet import DeepONetError
from spikeonet.encoding import EncodingError
from spikeonet.experiments import NumericError, run_experiment
from spikeonet.membrane import MembraneError
from spikeonet.metrics import MetricError
from spikeonet.mlp_membrane import EmulatorError
from spikeonet.nn import ShapeError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise config_mod.ConfigError(message)


def _parse_set(items):
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise config_mod.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = out
        *parents, leaf = key.split(".")
        for p in parents:
            target = target.setdefault(p, {})
        target[leaf] = value
    return out


def build_parser():
    parser = _Parser(prog="spikeonet", description="Spiking DeepONet experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in config_mod.EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--encoder")
        p.add_argument("--out", help="output directory (default runs/<experiment>-seed<N>)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key; VALUE is parsed as JSON when possible")
    p = sub.add_parser("import-mnist", help="convert the npm 'mnist' package digits into IDX files")
    p.add_argument("source", help="package tarball or unpacked directory")
    p.add_argument("--dir", help="target directory (default $SPIKEONET_DATA_DIR/mnist)")
    p = sub.add_parser("fetch-mnist", help="download the canonical MNIST IDX files")
    p.add_argument("--dir", help="target directory (default $SPIKEONET_DATA_DIR/mnist)")
    return parser


def _run(args):
    if args.command == "import-mnist":
        print(datasets.import_npm_mnist(args.source, args.dir))
        return EXIT_OK
    if args.command == "fetch-mnist":
        print(datasets.fetch_mnist(args.dir))
        return EXIT_OK
    file_cfg = config_mod.load_file(args.config) if args.config else {}
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.encoder is not None:
        overrides["encoder"] = args.encoder
    cfg = config_mod.resolve(args.command, file_cfg, overrides)
    out = Path(args.out) if args.out else Path("runs") / f"{args.command}-seed{cfg['seed']}"
    report = run_experiment(cfg, out)
    table = report["results"].get("table")
    if table:
        print(table)
    print(f"artifacts written to {out}")
    return EXIT_OK


def _fail(code, exc):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return _run(args)
    except config_mod.ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except datasets.DataError as exc:
        return _fail(EXIT_DATA, exc)
    except (NumericError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (EncodingError, MembraneError, DeepONetError, EmulatorError, MetricError, ShapeError) as exc:
        # invalid parameter combinations surface from the modules themselves
        return _fail(EXIT_CONFIG, exc)


if __name__ == "__main__":
    sys.exit(main())
