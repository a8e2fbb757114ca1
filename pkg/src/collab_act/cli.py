"""Command-line entry point: ``collab-act <subcommand> ...``.

Options resolve as command-line flags > ``--config`` JSON file > built-in
defaults. ``--seed`` falls back to ``$COLLAB_ACT_SEED`` when neither a flag
nor the config file sets it. Machine-readable results go to stdout as JSON;
one-line human summaries go to stderr.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .action_codec import (
    PcaModel,
    analyze_action_distribution,
    decode_actions,
    decode_position,
    decode_rotation,
    encode_actions,
    encode_position,
    encode_rotation,
    fit_pca,
)
from .action_codec.pca import reconstruction_mse
from .action_codec.quaternion import geodesic, random_unit
from .errors import CollabActError, EmptyDataset
from .inference_sim import (
    LearnedPolicy,
    ReplayPolicy,
    SimConfig,
    SyntheticWorld,
    latency_report,
    read_records,
    records_to_rows,
    run_episode,
    write_jsonl,
)
from .toy_policy import TrainConfig, flag_grid, load_policy, run_ablation, save_policy, train
from .toy_policy.experiments import OVERFIT_DEFAULTS, trainer_overfit_experiment
from .trajectory_store import (
    RawStream,
    SyncConfig,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
    synchronize,
)

SEED_ENV = "COLLAB_ACT_SEED"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- option plumbing

def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add(p, name, default, help, type=None, **kw):
    """Register an option whose default is applied later (so explicit flags are detectable)."""
    if isinstance(default, bool) and type is None:
        p.add_argument(_flag(name), dest=name, action=argparse.BooleanOptionalAction,
                       default=argparse.SUPPRESS, help=f"{help} (default: {default})")
    else:
        if type is None:
            type = _option_type(default)
        p.add_argument(_flag(name), dest=name, type=type, default=argparse.SUPPRESS,
                       help=f"{help} (default: {default})", **kw)
    p._collab_defaults[name] = default


def _option_type(default):
    return int if default is None else type(default)


TRAIN_HELP = {
    "chunk_size": "actions predicted per query",
    "proprio_history": "proprioceptive frames in the observation",
    "vision_history": "keypoint frames in the observation",
    "hidden_size": "trunk width",
    "n_hidden": "trunk depth",
    "learning_rate": "Adam step size",
    "epochs": "training epochs",
    "batch_size": "minibatch size",
    "lambda_aux": "weight of the auxiliary hand-head loss",
    "action_objective": "action loss: l2 or directional",
    "directional_r": "directional loss scale r",
    "directional_variant": "directional loss variant: parallel or residual",
    "use_film": "FiLM prompt conditioning",
    "use_postprocessing": "train on delta / rotation-vector / PCA-latent actions",
    "use_aux": "train the auxiliary hand head",
    "pca_tau": "explained-variance threshold for the hand PCA",
    "val_fraction": "fraction of trajectories held out for validation",
    "seed": "random seed (split, init, batch order)",
}


def _train_flags(p, defaults: TrainConfig = TrainConfig()):
    for f in dataclasses.fields(TrainConfig):
        _add(p, f.name, getattr(defaults, f.name), TRAIN_HELP[f.name])


def _train_config(opts, base: TrainConfig = TrainConfig()) -> TrainConfig:
    names = {f.name for f in dataclasses.fields(TrainConfig)}
    return dataclasses.replace(base, **{k: v for k, v in opts.items() if k in names})


def _sim_flags(p):
    d = SimConfig()
    _add(p, "sensor_rate_hz", d.sensor_rate_hz, "sensor rate")
    _add(p, "policy_delay_s", d.policy_delay_s, "simulated policy compute time (s)")
    _add(p, "chunk_execute_steps", d.chunk_execute_steps, "chunk steps run before switching (default chunk size)")
    _add(p, "step_cap", d.step_cap, "maximum executed steps")
    _add(p, "z_threshold", d.z_threshold, "lift height that switches Pick to Pass (m)")
    _add(p, "open_threshold", d.open_threshold, "mean finger flexion below which Pass is Done (rad)")
    _add(p, "clock", d.clock, "sim (deterministic) or wall (benchmark only)", choices=("sim", "wall"))


def _sim_config(opts) -> SimConfig:
    names = {f.name for f in dataclasses.fields(SimConfig)}
    return SimConfig(**{k: v for k, v in opts.items() if k in names})


def _load(path) -> list:
    path = Path(path)
    if path.is_dir() and not any(path.iterdir()):
        raise EmptyDataset(f"dataset directory {path} is empty")
    return load_dataset(path)


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _echo(opts) -> dict:
    # output locations are left out so identical runs write identical bytes
    return {k: v for k, v in opts.items() if k != "out"}


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- subcommands

def cmd_gen(opts):
    trajs = generate_synthetic_dataset(opts["seed"], opts["n"], opts["collaborator"], opts["n_views"])
    save_dataset(trajs, opts["out"], meta={"config": _echo(opts)})
    _note(f"wrote {len(trajs)} trajectories to {opts['out']}")
    return {"out": str(opts["out"]), "n_trajectories": len(trajs),
            "n_frames": int(sum(len(t) for t in trajs)), "config": opts}


def cmd_sync(opts):
    try:
        npz = np.load(opts["streams"])
    except (OSError, ValueError) as exc:
        raise CollabActError(f"cannot read streams file {opts['streams']}: {exc}") from exc
    names = sorted({k.split("__")[0] for k in npz.files})
    streams = []
    for name in names:
        if f"{name}__t" not in npz.files or f"{name}__samples" not in npz.files:
            raise CollabActError(f"stream {name!r} needs both {name}__t and {name}__samples")
        streams.append(RawStream(name, npz[f"{name}__t"], npz[f"{name}__samples"]))
    cfg = SyncConfig(rate_hz=opts["rate_hz"], max_gap_s=opts["max_gap_s"])
    traj = synchronize(streams, cfg, task_id=opts["task"], collaborator_id=opts["collaborator"])
    save_dataset([traj], opts["out"], meta={"config": _echo(opts)})
    _note(f"synchronized {len(streams)} streams into {len(traj)} frames at {cfg.rate_hz} Hz")
    return {"out": str(opts["out"]), "n_frames": len(traj), "streams": names, "config": opts}


def _pca_target(opts):
    return opts["k"] if opts.get("k") is not None else opts["tau"]


def cmd_fit_pca(opts):
    trajs = _load(opts["data"])
    hands = np.vstack([t.hand_joints for t in trajs]).astype(np.float64)
    model = fit_pca(hands, _pca_target(opts))
    summary = {
        "k": model.k,
        "explained_ratio": model.explained_ratio.tolist(),
        "explained_ratio_cum": model.explained_ratio_cum.tolist(),
        "discarded_variance": model.discarded_variance,
        "n_samples": len(hands),
        "config": opts,
    }
    if opts.get("out"):
        _write_json(opts["out"], {**model.to_dict(), "config": _echo(opts)})
    _note(f"k = {model.k}, cumulative explained ratio {model.explained_ratio_cum[-1]:.4f}")
    return summary


def cmd_codec_check(opts):
    trajs = _load(opts["data"])
    hands = np.vstack([t.hand_joints for t in trajs]).astype(np.float64)
    model = PcaModel.load(opts["pca"]) if opts.get("pca") else fit_pca(hands, _pca_target(opts))

    pos = np.vstack([t.ee_position for t in trajs]).astype(np.float64)
    quat = np.vstack([t.ee_quat for t in trajs]).astype(np.float64)
    raw = np.vstack([t.action_raw for t in trajs]).astype(np.float64)
    raw[:, 3:7] /= np.linalg.norm(raw[:, 3:7], axis=1, keepdims=True)
    quat /= np.linalg.norm(quat, axis=1, keepdims=True)
    dec = decode_actions(pos, quat, encode_actions(pos, quat, raw, model), model)

    rng = np.random.default_rng(opts["seed"])
    n = opts["n_random"]
    p, a_p = rng.uniform(-1, 1, (n, 3)), rng.uniform(-1, 1, (n, 3))
    q, a_r = random_unit(rng, n), random_unit(rng, n)

    mse = reconstruction_mse(model, hands)
    expected = model.discarded_variance * (len(hands) - 1) / len(hands)
    picks = [t for t in trajs if t.task_id == "pick"] or trajs
    raw_stats, delta_stats = analyze_action_distribution(picks)
    out = {
        "dataset": {
            "position_max_error": float(np.abs(dec[:, :3] - raw[:, :3]).max()),
            "rotation_max_geodesic": float(geodesic(dec[:, 3:7], raw[:, 3:7]).max()),
        },
        "random_pairs": {
            "n": n,
            "position_max_error": float(np.abs(decode_position(p, encode_position(p, a_p)) - a_p).max()),
            "rotation_max_geodesic": float(geodesic(decode_rotation(q, encode_rotation(q, a_r)), a_r).max()),
        },
        "pca": {
            "k": model.k,
            "reconstruction_mse": mse,
            "discarded_variance_scaled": expected,
            "relative_error": abs(mse - expected) / expected if expected > 0 else abs(mse),
        },
        "distribution": {"raw": raw_stats.to_dict(), "delta": delta_stats.to_dict()},
        "config": opts,
    }
    _note(f"roundtrip: position {out['random_pairs']['position_max_error']:.2e}, "
          f"rotation {out['random_pairs']['rotation_max_geodesic']:.2e} rad")
    return out


def _final_metrics(curve):
    last = curve[-1]
    return {"epoch": last["epoch"], "train_loss": last["train_loss"], "val": last.get("val")}


def cmd_train(opts):
    cfg = _train_config(opts)
    trajs = _load(opts["data"])
    net, curve = train(trajs, cfg)
    save_policy(net, opts["out"])
    if opts.get("curve"):
        _write_json(opts["curve"], {"config": cfg.to_dict(), "curve": curve})
    _note(f"trained {cfg.epochs} epochs, final train loss {curve[-1]['train_loss']:.5f}; saved {opts['out']}")
    return {"checkpoint": str(opts["out"]), **_final_metrics(curve), "config": cfg.to_dict()}


def _parse_vary(items) -> dict:
    names = {f.name: f for f in dataclasses.fields(TrainConfig)}
    choices = {}
    for item in items:
        key, sep, vals = item.partition("=")
        if not sep or key not in names:
            raise UsageError(f"--vary expects NAME=V1,V2 with NAME a training option, got {item!r}")
        kind = type(getattr(TrainConfig(), key))
        parsed = []
        for v in vals.split(","):
            if kind is bool:
                if v.lower() not in ("true", "false"):
                    raise UsageError(f"--vary {key}: expected true/false, got {v!r}")
                parsed.append(v.lower() == "true")
            else:
                try:
                    parsed.append(kind(v))
                except ValueError as exc:
                    raise UsageError(f"--vary {key}: {exc}") from exc
        choices[key] = parsed
    return choices


DEFAULT_VARY = ["use_postprocessing=true,false", "action_objective=l2,directional"]


def cmd_ablate(opts):
    base = _train_config(opts)
    grid = flag_grid(**_parse_vary(opts["vary"] or DEFAULT_VARY))
    trajs = _load(opts["data"])
    results = [r.to_dict() for r in run_ablation(trajs, base, grid, jobs=opts["jobs"])]
    out = {"config": {**opts, "train": base.to_dict()}, "results": results}
    if opts.get("out"):
        _write_json(opts["out"], out)
    for r in results:
        _note(f"{r['flags']}: val raw_nmse {r['metrics']['raw_nmse']:.5f}")
    return out


def cmd_overfit_exp(opts):
    cfg = _train_config(opts, OVERFIT_DEFAULTS)
    same, other = trainer_overfit_experiment(opts["seed"], opts["other"], opts["n_train"], opts["n_eval"], cfg)
    out = {
        "aux_loss_same": same,
        "aux_loss_other": other,
        "final_ratio": other[-1] / same[-1],
        "config": {**opts, "train": cfg.to_dict()},
    }
    if opts.get("out"):
        _write_json(opts["out"], out)
    _note(f"final aux loss A {same[-1]:.5f}, {opts['other']} {other[-1]:.5f} (ratio {out['final_ratio']:.2f})")
    return out


def cmd_simulate(opts):
    cfg = _sim_config(opts)
    world = SyntheticWorld(opts["seed"], opts["target"], opts["collaborator"])
    if opts.get("oracle"):
        policy = ReplayPolicy(world.demo_actions, opts["chunk_size"])
    else:
        net = load_policy(opts["policy"])
        if net.layout.n_views != world.n_views:
            raise CollabActError(f"policy expects {net.layout.n_views} views, world has {world.n_views}")
        policy = LearnedPolicy(net)
    result = run_episode(policy, world, cfg)
    if opts.get("log"):
        write_jsonl(result.log, opts["log"])
    if opts.get("records"):
        write_jsonl(records_to_rows(result.records), opts["records"])
    out = {
        "status": result.status,
        "phases": result.phases,
        "transcript": result.transcript,
        "executed_steps": len(result.log),
        "frames": {"emitted": result.emitted, "consumed": result.consumed, "dropped": result.dropped},
        "latency": latency_report(result.records) if result.records else None,
        "config": {**opts, "sim": cfg.to_dict()},
    }
    _note(f"episode {result.status}: {' -> '.join(result.phases)} in {len(result.log)} steps")
    return out


def cmd_latency_report(opts):
    rep = latency_report(read_records(opts["records"]))
    _note(f"mean latency {rep['mean']:.3f} s, p95 {rep['p95']:.3f} s, drop rate {rep['drop_rate']:.3f}")
    return rep


# ---------------------------------------------------------------- parser

def _subparser(sub, name, help, func):
    p = sub.add_parser(name, help=help, description=help)
    p._collab_defaults = {}
    p.set_defaults(_func=func, _parser=p)
    p.add_argument("--config", help="JSON file of option values (flags override it)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collab-act", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", required=True)

    p = _subparser(sub, "gen", "generate a synthetic demonstration dataset", cmd_gen)
    _add(p, "seed", 0, "random seed")
    _add(p, "n", 60, "trajectories per task")
    _add(p, "collaborator", "A", "synthetic collaborator", choices=("A", "B"))
    _add(p, "n_views", 2, "camera views of the collaborator's hand")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = _subparser(sub, "sync", "resample raw streams (npz: NAME__t, NAME__samples) onto the grid", cmd_sync)
    p.add_argument("streams", help="npz file of raw streams")
    _add(p, "rate_hz", SyncConfig().rate_hz, "grid rate")
    _add(p, "max_gap_s", SyncConfig().max_gap_s, "largest allowed distance to the nearest sample (s)")
    _add(p, "task", "pick", "task id", choices=("pick", "pass"))
    _add(p, "collaborator", "A", "collaborator id")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = _subparser(sub, "fit-pca", "fit the hand-joint PCA", cmd_fit_pca)
    p.add_argument("data", help="dataset directory")
    _add(p, "tau", 0.96, "explained-variance threshold")
    _add(p, "k", None, "fixed component count (overrides --tau)")
    _add(p, "out", None, "write the model JSON here", type=str)

    p = _subparser(sub, "codec-check", "action codec roundtrip and distribution analysis", cmd_codec_check)
    p.add_argument("data", help="dataset directory")
    _add(p, "tau", 0.96, "explained-variance threshold")
    _add(p, "k", None, "fixed component count (overrides --tau)")
    _add(p, "pca", None, "use this PCA model JSON instead of fitting", type=str)
    _add(p, "n_random", 10_000, "random pose pairs for the roundtrip check")
    _add(p, "seed", 0, "random seed")

    p = _subparser(sub, "train", "train the toy policy", cmd_train)
    p.add_argument("data", help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    _add(p, "curve", None, "write the per-epoch curve JSON here", type=str)
    _train_flags(p)

    p = _subparser(sub, "ablate", "ablation grid over training flags", cmd_ablate)
    p.add_argument("data", help="dataset directory")
    p.add_argument("--vary", action="append", default=argparse.SUPPRESS, metavar="NAME=V1,V2",
                   help=f"flag values to cross (repeatable; default: {' '.join(DEFAULT_VARY)})")
    p._collab_defaults["vary"] = None
    _add(p, "jobs", 1, "parallel worker processes")
    _add(p, "out", None, "write results JSON here", type=str)
    _train_flags(p)

    p = _subparser(sub, "overfit-exp", "trainer-overfitting experiment (train on A, evaluate A vs other)",
                   cmd_overfit_exp)
    _add(p, "other", "B", "collaborator to compare against", choices=("A", "B"))
    _add(p, "n_train", 60, "training trajectories per task")
    _add(p, "n_eval", 30, "evaluation trajectories per task and collaborator")
    _add(p, "out", None, "write results JSON here", type=str)
    _train_flags(p, OVERFIT_DEFAULTS)

    p = _subparser(sub, "simulate", "run one long-horizon pick-and-pass episode", cmd_simulate)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--policy", help="trained checkpoint")
    src.add_argument("--oracle", action="store_true", help="replay the seeded demonstration instead")
    _add(p, "seed", 0, "world seed")
    _add(p, "target", 0, "cube the collaborator points at", choices=(0, 1))
    _add(p, "collaborator", "A", "collaborator in the scene", choices=("A", "B"))
    _add(p, "chunk_size", 16, "oracle chunk length")
    _add(p, "log", None, "episode log (JSON lines)", type=str)
    _add(p, "records", None, "latency records (JSON lines)", type=str)
    _sim_flags(p)

    p = _subparser(sub, "latency-report", "summarize latency records", cmd_latency_report)
    p.add_argument("records", help="latency records (JSON lines)")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags."""
    p = args._parser
    defaults = dict(p._collab_defaults)
    given = {k: v for k, v in vars(args).items() if not k.startswith("_") and k not in ("command", "config")}
    file_opts = {}
    if getattr(args, "config", None):
        try:
            file_opts = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_opts, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_opts) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {unknown}")
    opts = {**defaults, **file_opts, **given}
    if "seed" in defaults and "seed" not in given and "seed" not in file_opts and SEED_ENV in os.environ:
        try:
            opts["seed"] = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise UsageError(f"${SEED_ENV} must be an integer") from exc
    return opts


def _validate(args, opts) -> None:
    # Build configs once up front so bad combinations fail before any work.
    if args.command in ("train", "ablate", "overfit-exp"):
        _train_config(opts, OVERFIT_DEFAULTS if args.command == "overfit-exp" else TrainConfig())
    if args.command == "simulate":
        cfg = _sim_config(opts)
        if opts.get("oracle") and cfg.chunk_execute_steps is not None and cfg.chunk_execute_steps > opts["chunk_size"]:
            raise UsageError("chunk_execute_steps exceeds chunk_size")
    if args.command == "ablate":
        _parse_vary(opts["vary"] or DEFAULT_VARY)
        if opts["jobs"] < 1:
            raise UsageError("--jobs must be >= 1")
    if args.command in ("gen",) and opts["n"] < 1:
        raise UsageError("--n must be >= 1")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = resolve(args)
        _validate(args, opts)
    except (UsageError, ValueError) as exc:
        args._parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    try:
        result = args._func(opts)
    except CollabActError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except UsageError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True, default=_jsonable))
    return 0


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


if __name__ == "__main__":
    sys.exit(main())
