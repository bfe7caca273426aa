"""Command line interface: run, validate, analytic and template."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import yaml

from .errors import InvalidConfigError, RigidMPMError, SimulationAbort
from .scenarios import analytic
from .scenarios.config import load_config
from .scenarios.runner import OUTPUT_ROOT_ENV, run_scenario
from .scenarios.templates import TEMPLATES, template, yaml_safe


def _cmd_run(args):
    cfg = load_config(args.config)

    def progress(sim, rec):
        if not args.quiet:
            print(f"step {rec.index:5d}  t={sim.time:.6g}  dt={rec.dt:.3g}  iters={rec.iterations}"
                  f"  halvings={rec.halvings}", flush=True)

    summary = run_scenario(cfg, out=args.output, progress=progress)
    for k in ("_sim", "_state"):
        summary.pop(k, None)
    print(json.dumps(summary, indent=2, default=float))
    return 0


def _cmd_validate(args):
    cfg = load_config(args.config)
    print(f"{args.config}: valid (schema version {cfg['schema_version']}, {len(cfg['points'])} point block(s), "
          f"{len(cfg['bodies'])} rigid bod{'y' if len(cfg['bodies']) == 1 else 'ies'})")
    return 0


def _cmd_analytic(args):
    p = dict(kv.split("=", 1) for kv in args.params)
    try:
        p = {k: float(v) for k, v in p.items()}
    except ValueError as exc:
        raise InvalidConfigError(f"analytic parameters must be numbers: {exc}") from exc
    if args.benchmark == "cube":
        val = analytic.analytic_cube_stress(p.get("E", 1e3), p.get("l", 0.8), p.get("l0", 1.0))
        print(f"sigma = {val:.6g} Pa")
    elif args.benchmark == "sphere":
        theta = math.radians(p.get("theta", 45.0))
        mu = p.get("mu", 0.0)
        val = analytic.analytic_sphere_position(p.get("t", 1.0), mu, theta, p.get("g", 9.81))
        branch = "stick" if analytic.sphere_sticks(mu, theta) else "slip"
        print(f"d_x = {val:.6g} m ({branch})")
    else:
        raise InvalidConfigError(f"unknown benchmark {args.benchmark!r} (cube | sphere)")
    return 0


def _cmd_template(args):
    kw = {}
    for kv in args.params:
        k, v = kv.split("=", 1)
        kw[k] = yaml.safe_load(v)
    cfg = yaml_safe(template(args.name, **kw))
    text = yaml.safe_dump(cfg, sort_keys=False)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="rigidmpm", description="Implicit GIMP MPM with rigid-body contact.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario config",
                       description=f"Run a scenario; outputs go to output.dir under ${OUTPUT_ROOT_ENV} (default ./output).")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the config)")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("validate", help="check a scenario config")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    a = sub.add_parser("analytic", help="evaluate a closed-form benchmark solution")
    a.add_argument("benchmark", choices=["cube", "sphere"])
    a.add_argument("params", nargs="*", help="key=value, e.g. E=1e3 l=0.8 l0=1 or t=1 mu=0.2 theta=45")
    a.set_defaults(func=_cmd_analytic)
    t = sub.add_parser("template", help="write a benchmark config")
    t.add_argument("name", choices=sorted(TEMPLATES))
    t.add_argument("params", nargs="*", help="key=value overrides of the template arguments")
    t.add_argument("-o", "--output")
    t.set_defaults(func=_cmd_template)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SimulationAbort as exc:
        print(f"error: {exc} (state dumped to {exc.dump_path})", file=sys.stderr)
        return 3
    except InvalidConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RigidMPMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
