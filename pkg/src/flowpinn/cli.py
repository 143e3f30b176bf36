"""Command-line pipelines: generate, train, evaluate, ablate, validate-solver.

Every command echoes its fully resolved configuration to
``<out>/config_resolved.txt``; re-running with ``--config`` on that file and
the same --out reproduces the run byte for byte. Exit codes: 0 success,
1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cf
from . import evaluation as ev
from . import model as mdl
from . import training as tr
from .dataset import build_splits
from .model import DesignPoint
from .solver import ChannelGeometry, SolverConfig, export_dataset, simulate, taylor_green_validation


class ShapeMismatchError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--preset", choices=("desk", "paper"), help="scale preset")
    p.add_argument("--out", default="runs", help="run directory (default: runs)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")


def _overrides(args) -> dict:
    out = {}
    if args.preset is not None:
        out["preset"] = args.preset
    if args.seed is not None:
        out["seed"] = args.seed
    for item in args.set:
        if "=" not in item:
            raise cf.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    if getattr(args, "lam", None) is not None:
        out["train.lambda"] = args.lam
    if getattr(args, "variant", None) is not None:
        out["model.variant"] = args.variant.replace("-", "_")
    if getattr(args, "epochs", None) is not None:
        out["train.epochs"] = args.epochs
    if getattr(args, "seeds", None) is not None:
        out["ablate.seeds"] = args.seeds
    if getattr(args, "snapshot", None):
        out["eval.snapshots"] = ";".join(args.snapshot)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowpinn",
                                     description="cylinder-flow surrogate pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate the design grid and write dataset files")
    _add_common(g)

    t = sub.add_parser("train", help="train the surrogate on generated data")
    _add_common(t)
    t.add_argument("--data", help="dataset directory (default: <out>/dataset)")
    t.add_argument("--lambda", dest="lam", help="PDE-loss weight")
    t.add_argument("--variant", choices=("full", "no-ffm", "no_ffm"))
    t.add_argument("--epochs", type=int)

    e = sub.add_parser("evaluate", help="quadrant report and snapshot triptychs")
    _add_common(e)
    e.add_argument("--data", help="dataset directory (default: <out>/dataset)")
    e.add_argument("--checkpoint", help="checkpoint path (default: <out>/train/checkpoint.ck)")
    e.add_argument("--snapshot", action="append", metavar="U,DY,T",
                   help="export a triptych at this design and time (repeatable)")

    a = sub.add_parser("ablate", help="train and score the four published variants")
    _add_common(a)
    a.add_argument("--data", help="dataset directory (default: <out>/dataset)")
    a.add_argument("--seeds", type=int, help="seeds per variant")
    a.add_argument("--epochs", type=int)

    v = sub.add_parser("validate-solver", help="Taylor-Green accuracy and convergence check")
    _add_common(v)
    return parser


def _echo_config(cfg: cf.RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "config_resolved.txt")


def _dataset_dir(args, out: Path) -> Path:
    return Path(args.data) if getattr(args, "data", None) else out / "dataset"


def _design_filename(d: DesignPoint) -> str:
    return f"data_{d.u_inlet!r}_{d.d_y!r}.bin"


def cmd_generate(cfg: cf.RunConfig, args) -> int:
    designs = cf.design_list(cfg)  # reject bad designs before any compute or output
    scfg = cf.solver_config(cfg)
    scfg.check_cfl(ChannelGeometry())
    out = Path(args.out)
    _echo_config(cfg, out)
    data_dir = out / "dataset"
    data_dir.mkdir(parents=True, exist_ok=True)
    geo = ChannelGeometry()
    index_lines = ["u_inlet d_y path records status"]
    failures = 0
    for d in designs:
        name = _design_filename(d)
        try:
            snaps = simulate(d, geo, scfg)
            csv_path = (data_dir / name.replace(".bin", ".csv")) if cfg["data.csv"] else None
            n = export_dataset(snaps, d, geo, scfg, data_dir / name, csv_path)
            index_lines.append(f"{d.u_inlet!r} {d.d_y!r} {name} {n} ok")
            print(f"generated {name}: {n} records")
        except Exception as exc:  # noqa: BLE001 - per-design isolation
            failures += 1
            index_lines.append(f"{d.u_inlet!r} {d.d_y!r} {name} 0 failed:{type(exc).__name__}")
            print(f"FAILED {name}: {exc}", file=sys.stderr)
    (data_dir / "index.txt").write_text("\n".join(index_lines) + "\n")
    if failures == 0 and cfg["designs"] == "all":
        splits = build_splits([data_dir / _design_filename(d) for d in designs],
                              cf.split_spec(cfg))
        (data_dir / "manifest.txt").write_text(splits.manifest.to_text())
        print(splits.manifest.to_text(), end="")
    return 2 if failures else 0


def _load_dataset(args, cfg, out: Path):
    data_dir = _dataset_dir(args, out)
    index = data_dir / "index.txt"
    if not index.exists():
        raise FileNotFoundError(f"no dataset index at {index}; run generate first")
    paths = []
    missing = []
    for line in index.read_text().splitlines()[1:]:
        parts = line.split()
        path = data_dir / parts[2]
        if parts[4] != "ok" or not path.exists():
            missing.append(f"({parts[0]}, {parts[1]})")
        else:
            paths.append(path)
    if missing:
        raise FileNotFoundError(f"dataset files missing or failed for designs: {', '.join(missing)}")
    return build_splits(paths, cf.split_spec(cfg))


def cmd_train(cfg: cf.RunConfig, args) -> int:
    out = Path(args.out)
    _echo_config(cfg, out)
    splits = _load_dataset(args, cfg, out)
    train_dir = out / "train"
    train_dir.mkdir(parents=True, exist_ok=True)
    (train_dir / "manifest.txt").write_text(splits.manifest.to_text())
    tcfg = cf.train_config(cfg)
    mcfg = cf.model_config(cfg)

    def log(row):
        print(f"epoch {row.epoch}: L={row.total:.6g} (pred {row.prediction:.6g}, "
              f"pde {row.pde:.6g})  val {row.val_mse:.6g}")

    params, history = tr.train(tcfg, splits, mcfg, train_dir / "checkpoint.ck",
                               history_path=train_dir / "history.txt", log=log)
    best = min(h.val_mse for h in history)
    print(f"trained {len(history)} epochs; best validation MSE {best:.6g}")
    return 0


def cmd_evaluate(cfg: cf.RunConfig, args) -> int:
    out = Path(args.out)
    _echo_config(cfg, out)
    ck_path = Path(args.checkpoint) if args.checkpoint else out / "train" / "checkpoint.ck"
    if not ck_path.exists():
        raise FileNotFoundError(f"no checkpoint at {ck_path}")
    params = mdl.load_params(ck_path)
    wanted = cf.model_config(cfg)
    if params.config != wanted:
        raise ShapeMismatchError(
            f"checkpoint architecture {params.config} does not match configured {wanted}")
    splits = _load_dataset(args, cfg, out)
    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    report = ev.quadrant_mse(params, splits.test, splits.spec)
    ev.write_quadrant_report(report, eval_dir / "quadrant_report.txt",
                             eval_dir / "quadrant_report.kv")
    print(report.to_text(), end="")
    val = tr.validation_mse(params, splits)
    (eval_dir / "validation_mse.txt").write_text(f"{val!r}\n")
    print(f"validation MSE of checkpoint: {val:.6g}")
    snapshots = cf.snapshot_list(cfg)
    if snapshots:
        all_records = _concat_splits(splits)
        for (u, d, t) in snapshots:
            trip = ev.export_snapshot(params, all_records, DesignPoint(u, d), t, eval_dir)
            note = " (nearest stamp)" if trip.off_grid else ""
            print(f"snapshot u={u} d_y={d} t={trip.used_t:g}{note} written")
    return 0


def _concat_splits(splits):
    from .dataset import RecordSet

    data = {}
    for name in splits.train.data:
        data[name] = np.concatenate([splits.train.data[name],
                                     splits.validation.data[name],
                                     splits.test.data[name]])
    return RecordSet(data)


def cmd_ablate(cfg: cf.RunConfig, args) -> int:
    out = Path(args.out)
    _echo_config(cfg, out)
    splits = _load_dataset(args, cfg, out)
    seeds = tuple(cfg["seed"] + i for i in range(cfg["ablate.seeds"]))
    table = ev.run_ablations(cf.train_config(cfg), splits, cf.model_config(cfg),
                             out / "ablation", seeds=seeds,
                             lam_strong=cfg["ablate.lam_strong"])
    print(table.to_text(), end="")
    if all(all(row.failed) for row in table.rows):
        return 2
    return 0


def cmd_validate_solver(cfg: cf.RunConfig, args) -> int:
    out = Path(args.out)
    _echo_config(cfg, out)
    base = SolverConfig(nx=64, ny=64, dt=1e-3, periodic=True, cylinder=False)
    fine = SolverConfig(nx=128, ny=128, dt=1e-3, periodic=True, cylinder=False)
    rep64 = taylor_green_validation(base)
    rep128 = taylor_green_validation(fine)
    order = float(np.log2(rep64.max_rel_error / rep128.max_rel_error))
    lines = [f"taylor-green 64x64: max relative velocity error {rep64.max_rel_error:.6e}",
             f"taylor-green 128x128: max relative velocity error {rep128.max_rel_error:.6e}",
             f"observed convergence order {order:.3f}"]
    text = "\n".join(lines) + "\n"
    (out / "validate_solver.txt").write_text(text)
    print(text, end="")
    return 0 if rep64.max_rel_error < 0.02 and order >= 1.5 else 2


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "validate-solver": cmd_validate_solver,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        cfg = cf.resolve(args.config, _overrides(args))
    except (cf.ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](cfg, args)
    except (cf.ConfigError, ShapeMismatchError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
