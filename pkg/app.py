from pathlib import Path
from typing import Any, Dict, List, Optional
import argparse
import logging
import sys

from config import load_config, save_config
from pharmonic import __version__
from pharmonic.errors import ConfigError
from services.experiment_service import EXIT_USAGE, ExperimentService

# Set up logging
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
logger = logging.getLogger(__name__)

# subcommands with no options of their own
PLAIN_COMMANDS = ("verify", "strata", "minkowski", "census")

# flag -> config key
OVERRIDES = {
    "m": int, "p": float, "h": str, "target": str, "boundary": str, "preset": str, "preset_param": float,
    "field_path": str, "gamma": float, "epsilon": float, "delta": float, "eta": float, "A": int, "alpha": float,
    "r_cut": float, "eps_thresh": float, "k_max": int, "j_max": int, "stride": int, "seed": int,
    "max_iter": int, "output_dir": str, "workers": int,
}


class CoordsAction(argparse.Action):
    """Point coordinates given as '0.1 0 0' or '0.1,0,0'"""

    def __call__(self, parser, namespace, values, option_string=None):
        try:
            coords = [float(c) for v in values for c in v.replace(",", " ").split()]
        except ValueError:
            parser.error(f"{option_string} expects numbers, got {' '.join(values)}")
        setattr(namespace, self.dest, coords)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pharmonic", description="p-harmonic map stratification lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    for key, kind in OVERRIDES.items():
        flags = [f"--{key.replace('_', '-')}"]
        if key == "field_path":
            flags.append("--in")
        common.add_argument(*flags, dest=key, type=kind, default=None)
    common.add_argument("--strict", action="store_true", default=None, help="fail with exit 4 on invariant breaches")

    sub = parser.add_subparsers(dest="command", required=True)
    for name in PLAIN_COMMANDS:
        sub.add_parser(name, parents=[common])
    slv = sub.add_parser("solve", parents=[common])
    slv.add_argument("--out", default=None, help="field file to write, relative to the output directory")
    sym = sub.add_parser("symmetry", parents=[common])
    sym.add_argument("--x", nargs="+", action=CoordsAction, default=None)
    sym.add_argument("--r", type=float, default=None)
    sym.add_argument("--k", type=int, default=None)
    sym.add_argument("--eps", dest="epsilon", type=float, default=None, help="symmetry threshold")
    cov = sub.add_parser("covering", parents=[common])
    cov.add_argument("--k", type=int, default=None)
    dfc = sub.add_parser("defect", parents=[common])
    dfc.add_argument("--seq", required=True, help="directory of field files, in sequence order by name")
    dfc.add_argument("--limit", default=None, help="field file of the weak-limit candidate")
    dfc.add_argument("--eps", dest="eps_thresh", type=float, default=None, help="concentration threshold")
    rep = sub.add_parser("reproduce", parents=[common])
    rep.add_argument("experiment")
    return parser


def _command_options(args: argparse.Namespace) -> Dict[str, Any]:
    if args.command == "solve":
        return {"out": args.out}
    if args.command == "symmetry":
        return {"x": args.x, "r": args.r, "k": args.k}
    if args.command == "covering":
        return {"k": args.k}
    if args.command == "defect":
        return {"seq": args.seq, "limit": args.limit}
    if args.command == "reproduce":
        return {"experiment": args.experiment}
    return {}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else 0
    overrides = {key: getattr(args, key) for key in OVERRIDES}
    overrides["strict"] = args.strict
    try:
        cfg = load_config(args.config, **overrides)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        return EXIT_USAGE
    service = ExperimentService(cfg)
    save_config(cfg, _ensure(Path(cfg.output_dir)) / "config.json")
    return service.run(args.command, **_command_options(args))


def _ensure(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


if __name__ == "__main__":
    sys.exit(main())
