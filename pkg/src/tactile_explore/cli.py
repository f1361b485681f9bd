"""Command-line entry point: ``tactile-explore <subcommand> --config FILE --seed N``.

Exit codes: 0 on success, 2 on a configuration error, 3 on a numeric error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .cotrain import CoTrainer
from .encoder import write_pgm
from .errors import ConfigurationError, InvalidParameterError, NumericError
from .geometry import save_object_set
from .harness import (METRIC_COLUMNS, CSVWriter, config_hash, evaluate, metrics_row, run_trial, trial_seed,
                      write_trials_csv)
from .methods import DISCRIMINATOR_FILE, EXPLORER_FILE, build_method
from .nn import save_checkpoint

log = logging.getLogger("tactile_explore")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _load_config(args) -> cfgmod.RunConfig:
    return cfgmod.load(args.config) if args.config else cfgmod.load_default()


def _out_dir(args, rc: cfgmod.RunConfig) -> Path:
    d = Path(args.out or rc.evaluate.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _digest(rc: cfgmod.RunConfig, args) -> str:
    return config_hash({"config": rc.to_dict(), "seed": args.seed, "command": args.command})


def cmd_generate_objects(args, rc):
    objs = rc.objects.generate(args.seed)
    path = Path(args.out) if args.out else rc.objects.resolve_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    save_object_set(path, objs, rc.objects.max_edges, rc.objects.max_radius)
    print(f"wrote {len(objs)} objects to {path}")


def _train(rc: cfgmod.RunConfig, seed: int, out: Path, threshold: float | None = None) -> Path:
    cc = rc.cotrain if threshold is None else dataclasses.replace(rc.cotrain, confidence_threshold=threshold)
    if cc.mode == "edge_follower" and cc.sensor_failure_rate:
        # this baseline's discriminator is trained without sensor noise
        log.warning("edge_follower training ignores cotrain.sensor_failure_rate=%s and uses 0", cc.sensor_failure_rate)
        cc = dataclasses.replace(cc, sensor_failure_rate=0.0)
    trainer = CoTrainer(cc, rc.env, rc.objects.load(), seed=seed, disc_config=rc.discriminator,
                        ppo_config=rc.explorer, icp_config=rc.icp, log_path=out / "iterations.csv",
                        checkpoint_dir=out / "checkpoints")
    result = trainer.run()
    meta = {"seed": seed, "mode": cc.mode, "total_steps": trainer.total_steps}
    if result.discriminator is not None and hasattr(result.discriminator, "net"):
        save_checkpoint(out / DISCRIMINATOR_FILE, {"discriminator": result.discriminator.net}, meta)
    if result.explorer is not None:
        result.explorer.policy.save(out / EXPLORER_FILE, meta)
    return out


def cmd_train(args, rc):
    out = _train(rc, args.seed, _out_dir(args, rc))
    print(f"training finished; artifacts in {out}")


def _method(rc, args, checkpoint=None):
    ev = rc.evaluate
    return build_method(args.method or ev.method, rc.objects.load(), rc.env.grid,
                        checkpoint or args.checkpoint or ev.checkpoint, rc.discriminator, rc.icp, ev.greedy)


def cmd_evaluate(args, rc):
    out = _out_dir(args, rc)
    policy, disc = _method(rc, args)
    objs = rc.objects.load()
    n = args.trials or rc.evaluate.n_trials
    metrics, records = evaluate(policy, disc, rc.env, objs, n, args.seed, workers=rc.evaluate.workers)
    digest = _digest(rc, args)
    write_trials_csv(out / "trials.csv", records, digest)
    with CSVWriter(out / "metrics.csv", METRIC_COLUMNS, digest) as w:
        w.write_row(metrics_row(args.method or rc.evaluate.method, rc.env.sensor_failure_rate,
                                rc.discriminator.confidence_threshold, metrics))
    print(json.dumps(dataclasses.asdict(metrics)))


def cmd_sweep_noise(args, rc):
    out = _out_dir(args, rc)
    policy, disc = _method(rc, args)
    objs = rc.objects.load()
    n = args.trials or rc.evaluate.n_trials
    method = args.method or rc.evaluate.method
    with CSVWriter(out / "noise_sweep.csv", METRIC_COLUMNS, _digest(rc, args)) as w:
        for rate in rc.evaluate.noise_rates:
            env = dataclasses.replace(rc.env, sensor_failure_rate=rate)
            m, _ = evaluate(policy, disc, env, objs, n, args.seed, workers=rc.evaluate.workers)
            w.write_row(metrics_row(method, rate, rc.discriminator.confidence_threshold, m))
            print(f"noise {rate}: success {m.success_rate:.3f} actions {m.actions_mean:.1f}")


def cmd_sweep_threshold(args, rc):
    out = _out_dir(args, rc)
    objs = rc.objects.load()
    n = args.trials or rc.evaluate.n_trials
    method = "ppo" if rc.cotrain.mode == "tandem" else rc.cotrain.mode
    with CSVWriter(out / "threshold_sweep.csv", METRIC_COLUMNS, _digest(rc, args)) as w:
        for t in rc.evaluate.thresholds:
            run_dir = out / f"threshold_{t}"
            run_dir.mkdir(parents=True, exist_ok=True)
            _train(rc, args.seed, run_dir, threshold=t)
            disc_cfg = dataclasses.replace(rc.discriminator, confidence_threshold=t)
            policy, disc = build_method(method, objs, rc.env.grid, run_dir, disc_cfg, rc.icp, rc.evaluate.greedy)
            m, _ = evaluate(policy, disc, rc.env, objs, n, args.seed, threshold=t, workers=rc.evaluate.workers)
            w.write_row(metrics_row(method, rc.env.sensor_failure_rate, t, m))
            print(f"threshold {t}: success {m.success_rate:.3f} actions {m.actions_mean:.1f}")


def cmd_render(args, rc):
    policy, disc = _method(rc, args)
    objs = rc.objects.load()
    obj = args.object % len(objs)
    rec, grid = run_trial(policy, disc, rc.env, objs, obj, trial_seed(args.seed, 0), return_grid=True)
    out = Path(args.out or f"trial_object{obj}.pgm")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(out, grid.view_for_explorer() if args.marker else grid.view_for_discriminator())
    print(f"object {obj}: {rec.actions} actions, predicted {rec.predicted} ({rec.termination}); wrote {out}")


COMMANDS = {
    "generate-objects": cmd_generate_objects,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep-noise": cmd_sweep_noise,
    "sweep-threshold": cmd_sweep_threshold,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tactile-explore", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML run config (default: the shipped defaults)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output file or directory")
        if name in ("evaluate", "sweep-noise", "render"):
            sp.add_argument("--method", choices=cfgmod.METHODS)
            sp.add_argument("--checkpoint", help="directory with trained networks")
        if name in ("evaluate", "sweep-noise", "sweep-threshold"):
            sp.add_argument("--trials", type=int, help="override evaluate.n_trials")
        if name == "render":
            sp.add_argument("--object", type=int, default=0)
            sp.add_argument("--marker", action="store_true", help="draw the finger marker")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = _load_config(args)
        if getattr(args, "trials", None) is not None and args.trials < 1:
            raise InvalidParameterError("--trials must be >= 1")
        COMMANDS[args.command](args, rc)
    except (ConfigurationError, InvalidParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
