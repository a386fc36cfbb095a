"""Command-line entry point: ``smc-ddpg {train,eval,simulate}``.

Exit codes: 0 success, 2 configuration or checkpoint-schema error,
3 runtime or numeric failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, net
from ._jit import NUMBA_ENABLED
from .harness import EpisodeError, evaluate, simulate, train
from .net import NumericError, SchemaError
from .numerics import IntegrationError
from .smc import SingularGainError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("smc_ddpg")


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def _load_config(args):
    cfg = cfgmod.resolve(args.config, args.preset)
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        episodes=getattr(args, "episodes", None),
        alpha_actor=getattr(args, "alpha_a", None),
        alpha_critic=getattr(args, "alpha_c", None),
        out_dir=getattr(args, "out", None),
    )


def _init_state(args, cfg):
    x0 = args.init if args.init is not None else list(cfg.run.initial_state)
    if len(x0) != len(cfg.run.initial_state):
        raise cfgmod.ConfigError(f"--init needs {len(cfg.run.initial_state)} values, got {len(x0)}")
    return x0


def write_manifest(cfg, out_dir, extra=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "package_version": __version__,
        "numba": NUMBA_ENABLED,
        "input_hash": cfg.content_hash(),
        "config": cfg.to_dict(),
    }
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2))
    return path


def cmd_train(args):
    cfg = _load_config(args)
    out = Path(cfg.run.out_dir)
    task = cfg.build_task()
    summary = {}
    for seed in cfg.run.seeds:
        hyper = cfg.hyper.replace(seed=seed)
        run_dir = out / f"seed_{seed}"
        log.info("training seed %d for %d episodes into %s", seed, hyper.episodes, run_dir)
        _, curve = train(task, cfg.actor, cfg.critic, hyper, x0=cfg.run.initial_state, out_dir=run_dir)
        R = curve.returns()
        summary[str(seed)] = {"episodes": len(R), "first_G0": float(R[0]), "last_G0": float(R[-1])}
    write_manifest(cfg, out, {"command": "train", "summary": summary})
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args):
    cfg = _load_config(args)
    x0 = _init_state(args, cfg)
    if args.agent == "zero":
        actor = None
    else:
        if args.checkpoint is None:
            raise UsageError("--checkpoint is required unless --agent zero")
        actor = net.load_checkpoint(args.checkpoint, expected_spec=cfg.actor)
    ep = evaluate(cfg.build_task(), actor, x0, cfg.hyper)
    out = Path(cfg.run.out_dir)
    path = ep.to_csv(out / "trajectory.csv")
    write_manifest(cfg, out, {"command": "eval", "initial_state": x0, "agent": args.agent, "checkpoint": args.checkpoint})
    print(json.dumps({"trajectory": str(path), "G0": ep.G0, "steps": ep.steps}))
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load_config(args)
    x0 = _init_state(args, cfg)
    ep = simulate(cfg.build_task(), args.controller, cfg.hyper, x0=x0)
    out = Path(cfg.run.out_dir)
    path = ep.to_csv(out / f"simulate_{args.controller}.csv")
    write_manifest(cfg, out, {"command": "simulate", "controller": args.controller, "initial_state": x0})
    print(json.dumps({"trajectory": str(path), "G0": ep.G0, "steps": ep.steps}))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="smc-ddpg", description="Sliding-mode control with a DDPG-learned compensation term.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every episode")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--config", metavar="PATH", help="experiment config (TOML)")
        src.add_argument("--preset", choices=cfgmod.PRESETS, help="bundled config (default: paper-msd)")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides run.out_dir)")

    t = sub.add_parser("train", help="train the compensation network")
    common(t)
    t.add_argument("--seed", type=int)
    t.add_argument("--episodes", type=int)
    t.add_argument("--alpha-a", type=float, dest="alpha_a", help="actor learning rate")
    t.add_argument("--alpha-c", type=float, dest="alpha_c", help="critic learning rate")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="noise-free evaluation of a trained actor")
    common(e)
    e.add_argument("--checkpoint", metavar="PATH", help="actor checkpoint JSON")
    e.add_argument("--agent", choices=("checkpoint", "zero"), default="checkpoint")
    e.add_argument("--init", type=_floats, metavar="X1,X2", help="initial state, e.g. --init=2,-1")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("simulate", help="run an analytic controller")
    common(s)
    s.add_argument("--controller", choices=("nominal", "ideal-oracle", "zero"), default="nominal")
    s.add_argument("--init", type=_floats, metavar="X1,X2")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, SchemaError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EpisodeError, IntegrationError, NumericError, SingularGainError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
