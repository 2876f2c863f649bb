"""Command-line runner: ``rod <subcommand> [options]``.

Settings resolve in three layers: per-task defaults, then a flat
``key = value`` file given with ``--config``, then ``--key value`` flags.
Exit status is 0 on success, 2 for configuration errors and 3 for data errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import fields
from pathlib import Path

from .data import DataFormatError, EdgeSplit, generate_sbm, load_dataset, save_dataset, split_edges
from .graph import GraphError
from .metrics import to_json
from .model import RodConfig, coerce, load_checkpoint, model_from_state, parse_kv, save_checkpoint
from .trainer import TASK_DEFAULTS, analyze_depth, default_config, evaluate, run_baseline, sweep, train

EXIT_CONFIG = 2
EXIT_DATA = 3

CONFIG_FIELDS = {f.name: f.default for f in fields(RodConfig)}


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="flat key = value file")
    g = p.add_argument_group("model settings (override the config file)")
    for name in CONFIG_FIELDS:
        flags = [f"--{name}"]
        if "_" in name:
            flags.append(f"--{name.replace('_', '-')}")
        g.add_argument(*flags, dest=f"cfg_{name}", metavar="VALUE", default=None)


def _add_data_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("data source (exactly one of --data or --sbm)")
    g.add_argument("--data", type=Path, help="dataset directory")
    g.add_argument("--sbm", help="block sizes, e.g. 100,100")
    g.add_argument("--p-in", type=float, default=0.05)
    g.add_argument("--p-out", type=float, default=0.005)
    g.add_argument("--sbm-dim", type=int, default=16)
    g.add_argument("--sbm-mu", type=float, default=1.0)
    g.add_argument("--sbm-sigma", type=float, default=1.0)
    g.add_argument("--sbm-seed", type=int, default=0)
    g.add_argument("--labels-per-class", type=int, default=20)


def resolve_config(args) -> RodConfig:
    """Task defaults < config file < command-line flags."""
    file_kv = {}
    if getattr(args, "config", None) is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        try:
            file_kv = parse_kv(text, RodConfig)
        except ValueError as e:
            raise ConfigError(f"{args.config}: {e}") from None
    flag_kv = {}
    for name, default in CONFIG_FIELDS.items():
        raw = getattr(args, f"cfg_{name}", None)
        if raw is not None:
            try:
                flag_kv[name] = coerce(raw, default, name)
            except ValueError as e:
                raise ConfigError(f"--{name}: {e}") from None
    task = flag_kv.get("task", file_kv.get("task", "classify"))
    if task not in TASK_DEFAULTS:
        raise ConfigError(f"unknown task {task!r}")
    merged = {**file_kv, **flag_kv}
    merged.pop("task", None)
    try:
        return default_config(task, **merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def resolve_dataset(args):
    if (args.data is None) == (args.sbm is None):
        raise ConfigError("give exactly one data source: --data DIR or --sbm SIZES")
    if args.data is not None:
        return load_dataset(args.data)
    try:
        blocks = _int_list(args.sbm)
    except ValueError:
        raise ConfigError(f"--sbm: expected comma-separated block sizes, got {args.sbm!r}") from None
    return generate_sbm(blocks, args.p_in, args.p_out, d=args.sbm_dim, mu=args.sbm_mu,
                        sigma=args.sbm_sigma, seed=args.sbm_seed,
                        labels_per_class=args.labels_per_class)


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(path: Path, rows: list[dict]):
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols.extend(k for k in r if k not in cols)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def _emit(rep: dict, out: Path | None, name: str = "metrics.json"):
    text = to_json(rep)
    print(text)
    if out is not None:
        (out / name).write_text(text + "\n")


# ---- subcommands ----------------------------------------------------------

def cmd_train(args) -> int:
    config = resolve_config(args)
    ds = resolve_dataset(args)
    split = EdgeSplit.load(args.split) if args.split else None
    result = train(ds, config, split=split)
    out = _out_dir(args)
    if out is not None:
        write_csv(out / "losses.csv", result.losses)
        save_checkpoint(out / "checkpoint.rodckpt", result.config, result.model.state())
        (out / "config.txt").write_text(result.config.to_text())
        if result.split is not None:
            result.split.save(out / "edge_split.txt")
    _emit(result.metrics, out)
    return 0


def cmd_eval(args) -> int:
    config, state = load_checkpoint(args.checkpoint)
    if args.task is not None and args.task != config.task:
        raise ConfigError(f"checkpoint was trained for {config.task!r}, not {args.task!r}")
    ds = resolve_dataset(args)
    split = EdgeSplit.load(args.split) if args.split else None
    if config.task == "link" and split is None:
        raise ConfigError("link evaluation needs --split (the edge_split.txt written by train)")
    model = model_from_state(config, state)
    _emit(evaluate(model, ds, split=split), _out_dir(args))
    return 0


def cmd_baseline(args) -> int:
    config = resolve_config(args)
    if config.task != "classify":
        raise ConfigError("baselines support the classify task only")
    ds = resolve_dataset(args)
    _emit(run_baseline(args.kind, ds, config), _out_dir(args))
    return 0


def cmd_analyze_depth(args) -> int:
    config = resolve_config(args)
    ds = resolve_dataset(args)
    rows = analyze_depth(ds, config, _int_list(args.k_range), _int_list(args.seeds))
    out = _out_dir(args)
    if out is not None:
        write_csv(out / "depth.csv", rows)
    for r in rows:
        print(json.dumps(r, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    config = resolve_config(args)
    ds = resolve_dataset(args)
    grid = _float_list(args.grid) if args.study == "edge_sparsity" else _int_list(args.grid)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in ("rod", "sgc", "mlp"):
            raise ConfigError(f"unknown method {m!r}")
    rows = sweep(args.study, ds, config, grid, _int_list(args.seeds), methods=methods)
    out = _out_dir(args)
    if out is not None:
        write_csv(out / f"sweep_{args.study}.csv", rows)
    for r in rows:
        print(json.dumps(r, sort_keys=True))
    return 0


def cmd_gen_sbm(args) -> int:
    if args.sbm is None:
        raise ConfigError("gen-sbm needs --sbm SIZES")
    args.data = None
    ds = resolve_dataset(args)
    save_dataset(ds, args.out)
    print(f"wrote {ds.n} nodes, {ds.graph.n_edges} edges to {args.out}")
    return 0


def cmd_split_edges(args) -> int:
    ds = load_dataset(args.data)
    split = split_edges(ds.graph, val_frac=args.val_frac, test_frac=args.test_frac, seed=args.seed)
    for w in split.warnings:
        print(f"warning: {w}", file=sys.stderr)
    split.save(args.out)
    print(f"train {len(split.train_edges)}  val {len(split.val_pos)}  test {len(split.test_pos)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rod", description="Reception-aware online distillation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train ROD and write metrics, losses and a checkpoint")
    _add_config_flags(p)
    _add_data_flags(p)
    p.add_argument("--split", type=Path, help="edge split file (link task)")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--task", choices=TASK_DEFAULTS)
    _add_data_flags(p)
    p.add_argument("--split", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="SGC or MLP classification baseline")
    p.add_argument("--kind", choices=("sgc", "mlp"), required=True)
    _add_config_flags(p)
    _add_data_flags(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("analyze-depth", help="per-degree SGC correctness over depths")
    _add_config_flags(p)
    _add_data_flags(p)
    p.add_argument("--k-range", default="1,2,4,8")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_analyze_depth)

    p = sub.add_parser("sweep", help="edge/label sparsity or depth study")
    p.add_argument("--study", choices=("edge_sparsity", "label_sparsity", "depth"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated grid values")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--methods", default="rod,sgc")
    _add_config_flags(p)
    _add_data_flags(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-sbm", help="write a synthetic SBM dataset directory")
    _add_data_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_sbm)

    p = sub.add_parser("split-edges", help="hold out val/test edges for link prediction")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--val-frac", type=float, default=0.05)
    p.add_argument("--test-frac", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_split_edges)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, GraphError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
