"""Command line entry point: ``dcuq {forward,invert,converge,diagnose} --config FILE``."""
import argparse
import logging
import sys

from .errors import ConfigError
from .harness import EXIT_CONFIG, SUBCOMMANDS, StudyConfig, run


def main(argv=None):
    parser = argparse.ArgumentParser(prog="dcuq", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML study configuration")
        p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = StudyConfig.load(args.config)
    except (OSError, ConfigError, TypeError) as exc:
        logging.error("cannot load config: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # yaml syntax errors
        logging.error("cannot parse config: %s", exc)
        return EXIT_CONFIG
    config.study = SUBCOMMANDS[args.command]
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    return run(config, args.out)


if __name__ == "__main__":
    sys.exit(main())
