"""Command-line entry point: ``apcrw <experiment> [--config PATH] [--seed N] [--replicas N] [--out DIR]``.

Extra ``--set key=value`` pairs override single configuration keys (values
are parsed as YAML, so lists and numbers work).  The thread count is read
from the ``APCRW_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import yaml

from .config import KINDS, ConfigError, load_mapping, parse_config
from .harness import ExperimentError, replay, run_experiment


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="apcrw", description="Monte Carlo experiments for random walks driven by "
                                 "a Poisson cloud of drifting random walks.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", help="YAML/JSON config file, or a manifest to replay")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicas", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    rp = sub.add_parser("replay", help="re-run a manifest and compare file digests")
    rp.add_argument("manifest")
    rp.add_argument("--out", required=True)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.kind == "replay":
            res, same = replay(args.manifest, args.out)
            print(json.dumps({"out": str(res.out), "identical": same}, indent=1))
            return 0 if all(same.values()) else 1
        source = load_mapping(args.config) if args.config else {}
        if source.get("schema", "").startswith("apcrw.manifest/"):
            source = source["config"]
        if source.get("kind") not in (None, args.kind):
            raise ConfigError(f"config is for '{source['kind']}', not '{args.kind}'")
        source.pop("kind", None)
        cfg = parse_config(source, kind=args.kind, seed=args.seed, replicas=args.replicas, out=args.out,
                           **_overrides(args.set))
        res = run_experiment(cfg)
    except (ConfigError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"out": str(res.out), "files": res.manifest["files"], "summary": res.summary},
                     indent=1, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
