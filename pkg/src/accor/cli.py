"""``accor`` command-line tool.

Each subcommand resolves its flags and config file into one plain dict,
runs :func:`execute` on it and writes a JSON manifest next to its outputs.
``accor rerun --manifest M --out DIR`` replays a manifest and checks that
the regenerated outputs hash identically.

Exit status: 0 on success, 1 when a check fails (selfcheck, rerun
mismatch, diverged training), 2 for usage, config or data errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, build_synth, read_ini, resolve_synth, resolve_train
from .dataio import (
    DatasetFormatError,
    LayoutDescriptor,
    SplitSpec,
    import_external,
    read_dataset,
    split_train_test,
    write_dataset,
)
from .frames import Band, Dataset
from .loss import LossConfig, inverse_frequency_weights
from .model import AccorNetwork, CheckpointError, ModelConfig, load_checkpoint, save_checkpoint
from .signal import AliasingError, generate_dataset
from .trainer import (
    RunResult,
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    format_alpha_table,
    format_runs_table,
    profiles_for,
    run_once,
    runs_to_csv,
)

log = logging.getLogger("accor")

DEFAULT_ALPHAS = "0.6,0.5,0.4,0.3,0.2,0.1,0"
MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    """Bad input: exit status 2."""


class CheckFailed(Exception):
    """A verification failed: exit status 1."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _parse_alphas(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--alphas must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError("--alphas needs at least one value")
    if any(not 0.0 <= a <= 1.0 for a in values):
        raise UsageError("every alpha must lie in [0, 1]")
    return values


# -- building blocks ---------------------------------------------------------------
def _load_dataset(path, band) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"dataset {path} not found")
    ds = read_dataset(path)
    if band is not None:
        ids = np.nonzero(ds.bands == int(band))[0]
        if len(ids) == 0:
            raise UsageError(f"dataset {path} has no frames tagged {band} GHz")
        ds = ds.subset(ids)
        ds.band = Band(int(band))
    return ds


def _configs(cfg: dict, dataset: Dataset, train_ids, seed: int, alpha=None):
    m, l, t = cfg["model"], cfg["loss"], cfg["train"]
    model_cfg = ModelConfig(
        conv_channels=tuple(m["conv_channels"]),
        kernel_size=m["kernel_size"],
        input_channels=dataset.data.shape[1],
        n_samples=dataset.n_samples,
        embed_dim=m["embed_dim"],
        attention_heads=m["attention_heads"],
        n_classes=dataset.n_classes,
        token_mode=m["token_mode"],
        pool_window=m["pool_window"],
        conv_dims=m["conv_dims"],
        bn_epsilon=m["bn_epsilon"],
        bn_momentum=m["bn_momentum"],
    )
    weights = l["class_weights"]
    if weights == "inverse_frequency":
        weights = inverse_frequency_weights(dataset.labels[train_ids], dataset.n_classes)
    loss_cfg = LossConfig(alpha=l["alpha"] if alpha is None else alpha, tau=l["tau"], class_weights=weights)
    train_cfg = TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        learning_rate=t["learning_rate"],
        optimizer=t["optimizer"],
        loss=loss_cfg,
        seed=seed,
        shuffle=t["shuffle"],
        divergence_threshold=t["divergence_threshold"],
    )
    return model_cfg, train_cfg


def _split(cfg: dict, dataset: Dataset, seed: int):
    s = cfg["split"]
    return split_train_test(dataset, SplitSpec(s["train_fraction"], seed, s["stratified"]))


def _summary_lines(runs: list[RunResult]) -> str:
    acc = np.array([r.metrics.overall_accuracy for r in runs])
    std = float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0
    return f"mean accuracy {100 * acc.mean():.2f} % (std {100 * std:.2f} pt over {len(acc)} run(s))\n"


def _confusion_text(runs: list[RunResult], names: list[str]) -> str:
    lines = []
    for r in runs:
        lines.append(f"run {r.run_id} (seed {r.seed}, alpha {r.alpha:g}) confusion matrix, rows = true class:")
        width = max(len(n) for n in names)
        for name, row in zip(names, r.metrics.confusion_matrix):
            lines.append(f"  {name:<{width}} " + " ".join(f"{v:4d}" for v in row))
    return "\n".join(lines) + "\n"


# -- commands ----------------------------------------------------------------------
def _exec_gen_synth(res: dict, out: Path) -> list[Path]:
    templates, per_class, jitter, seed, chirp, band = build_synth(res["config"])
    try:
        ds = generate_dataset(templates, per_class, jitter, seed=seed, chirp=chirp, band=band)
    except AliasingError as exc:
        raise UsageError(f"aliasing template rejected: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out)
    for c, count in ds.class_counts().items():
        print(f"{c}\t{ds.class_names[c]}\t{count}")
    print(f"total\t{len(ds)}")
    return [out]


def _exec_import(res: dict, out: Path) -> list[Path]:
    layout = LayoutDescriptor(**res["config"]["layout"])
    ds = import_external(res["inputs"]["source"], layout)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out)
    for c, count in ds.class_counts().items():
        print(f"{c}\t{ds.class_names[c]}\t{count}")
    print(f"total\t{len(ds)}")
    return [out]


def _train_runs(res: dict, ds: Dataset, split, alphas, runs: int, out: Path, tag_alpha: bool):
    cfg, seed = res["config"], res["seed"]
    cache: dict = {}
    results, written = [], []
    for alpha in alphas:
        for i in range(runs):
            model_cfg, train_cfg = _configs(cfg, ds, split[0], seed + i, alpha)
            run_id = len(results)
            log.info("run %d: alpha %g seed %d", run_id, train_cfg.loss.alpha, train_cfg.seed)
            r = run_once(ds, split, model_cfg, train_cfg, run_id=run_id, keep_network=True, cache=cache)
            name = f"model_alpha{train_cfg.loss.alpha:g}_seed{train_cfg.seed}.acck" if tag_alpha else (
                "model.acck" if runs == 1 else f"model_seed{train_cfg.seed}.acck"
            )
            save_checkpoint(r.network, out / name)
            written.append(out / name)
            r.network = None
            results.append(r)
    return results, written


def _exec_train(res: dict, out: Path) -> list[Path]:
    ds = _load_dataset(res["inputs"]["dataset"], res["band"])
    split = _split(res["config"], ds, res["seed"])
    out.mkdir(parents=True, exist_ok=True)
    runs, written = _train_runs(res, ds, split, [res["config"]["loss"]["alpha"]], res["runs"], out, False)
    table = format_runs_table(runs) + _summary_lines(runs) + _confusion_text(runs, ds.class_names)
    (out / "report.txt").write_text(table)
    (out / "results.csv").write_text(runs_to_csv(runs, ds.n_classes))
    sys.stdout.write(format_runs_table(runs) + _summary_lines(runs))
    return written + [out / "report.txt", out / "results.csv"]


def _exec_ablate(res: dict, out: Path) -> list[Path]:
    ds = _load_dataset(res["inputs"]["dataset"], res["band"])
    split = _split(res["config"], ds, res["seed"])
    out.mkdir(parents=True, exist_ok=True)
    runs, written = _train_runs(res, ds, split, res["alphas"], res["runs"], out, True)
    table = format_alpha_table(runs)
    (out / "table.txt").write_text(table)
    (out / "results.csv").write_text(runs_to_csv(runs, ds.n_classes))
    sys.stdout.write(table)
    return written + [out / "table.txt", out / "results.csv"]


def _exec_eval(res: dict, out: Path) -> list[Path]:
    ds = _load_dataset(res["inputs"]["dataset"], res["band"])
    seed = res["seed"]
    if res["split"] == "all":
        ids = np.arange(len(ds))
    else:
        ids = _split(res["config"], ds, seed)[1]
    ckpt = res["inputs"].get("checkpoint")
    if ckpt:
        try:
            net = load_checkpoint(ckpt)
        except FileNotFoundError:
            raise UsageError(f"checkpoint {ckpt} not found") from None
        if net.config.n_classes != ds.n_classes:
            raise UsageError(f"checkpoint predicts {net.config.n_classes} classes, dataset has {ds.n_classes}")
    else:
        model_cfg, _ = _configs(res["config"], ds, ids, seed)
        net = AccorNetwork.init(model_cfg, seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    metrics = evaluate(net, ds, ids, profiles=profiles_for(ds, ids))
    alpha = res["config"]["loss"]["alpha"]
    run = RunResult(0, alpha, seed, int(ds.band), metrics)
    save_checkpoint(net, out / "model.acck")
    report = format_runs_table([run]) + _confusion_text([run], ds.class_names)
    (out / "report.txt").write_text(report)
    (out / "results.csv").write_text(runs_to_csv([run], ds.n_classes))
    sys.stdout.write(format_runs_table([run]))
    return [out / "model.acck", out / "report.txt", out / "results.csv"]


EXECUTORS = {
    "gen-synth": _exec_gen_synth,
    "import": _exec_import,
    "train": _exec_train,
    "eval": _exec_eval,
    "ablate": _exec_ablate,
}


def manifest_path(command: str, out: Path) -> Path:
    if command in ("gen-synth", "import"):
        return out.with_name(out.name + ".manifest.json")
    return out / MANIFEST_NAME


def execute(resolved: dict, out) -> dict:
    """Run a resolved command, write its manifest and return it."""
    out = Path(out)
    for role, path in resolved.get("inputs", {}).items():
        if path and not Path(path).exists():
            raise UsageError(f"{role} {path} not found")
    outputs = EXECUTORS[resolved["command"]](resolved, out)
    base = out.parent if resolved["command"] in ("gen-synth", "import") else out
    manifest = dict(resolved)
    manifest["tool_version"] = __version__
    manifest["input_hashes"] = {
        role: sha256_file(p) for role, p in resolved.get("inputs", {}).items() if p and Path(p).is_file()
    }
    manifest["outputs"] = {str(p.relative_to(base)): sha256_file(p) for p in outputs}
    mpath = manifest_path(resolved["command"], out)
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# -- argument handling -------------------------------------------------------------
def _train_overrides(args) -> dict:
    return {
        "loss": {"alpha": args.alpha, "tau": args.tau},
        "train": {"epochs": getattr(args, "epochs", None)},
    }


def _resolve(args) -> dict:
    cmd = args.command
    seed = getattr(args, "seed", None)
    seed = 0 if seed is None else seed
    if cmd == "gen-synth":
        parser = read_ini(args.config) if args.config else None
        cfg = resolve_synth(parser, seed=args.seed, band=args.band)
        return {"command": cmd, "config": cfg, "seed": cfg["dataset"]["seed"], "inputs": {}}
    if cmd == "import":
        layout = LayoutDescriptor.from_file(args.config) if args.config else LayoutDescriptor()
        if args.band is not None:
            layout.band = Band.parse(args.band)
        cfg = {
            "layout": {
                "shape": list(layout.shape),
                "encoding": layout.encoding,
                "dtype": layout.dtype,
                "byte_order": layout.byte_order,
                "label_map": layout.label_map,
                "pattern": layout.pattern,
                "band": int(layout.band),
            }
        }
        return {"command": cmd, "config": cfg, "seed": seed, "inputs": {"source": str(Path(args.dataset).resolve())}}
    parser = read_ini(args.config) if args.config else None
    cfg = resolve_train(parser, _train_overrides(args))
    res = {
        "command": cmd,
        "config": cfg,
        "seed": seed,
        "band": args.band,
        "inputs": {"dataset": str(Path(args.dataset).resolve())},
    }
    if cmd in ("train", "ablate"):
        if args.runs < 1:
            raise UsageError("--runs must be at least 1")
        res["runs"] = args.runs
    if cmd == "ablate":
        res["alphas"] = _parse_alphas(args.alphas)
    if cmd == "eval":
        res["inputs"]["checkpoint"] = str(Path(args.checkpoint).resolve()) if args.checkpoint else None
        res["split"] = args.split
    return res


def _cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    results = run_selfcheck()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise CheckFailed(f"{len(failed)} self-check(s) failed: " + ", ".join(r.name for r in failed))
    return 0


def _cmd_rerun(args) -> int:
    path = Path(args.manifest)
    if not path.is_file():
        raise UsageError(f"manifest {path} not found")
    try:
        manifest = json.loads(path.read_text())
        resolved = {k: manifest[k] for k in manifest if k not in ("tool_version", "input_hashes", "outputs")}
        command = resolved["command"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: not a valid manifest ({exc})") from None
    if command not in EXECUTORS:
        raise UsageError(f"{path}: unknown command {command!r}")
    for role, digest in manifest.get("input_hashes", {}).items():
        p = resolved["inputs"].get(role)
        if p and Path(p).is_file() and sha256_file(p) != digest:
            raise CheckFailed(f"input {role} ({p}) changed since the manifest was written")
    if not args.out:
        raise UsageError("rerun needs --out (a fresh location for regenerated outputs)")
    out = Path(args.out)
    if command in ("gen-synth", "import") and out.is_dir():
        out = out / Path(next(iter(manifest["outputs"]))).name
    fresh = execute(resolved, out)
    old, new = manifest["outputs"], fresh["outputs"]
    if command in ("gen-synth", "import"):
        # single output file; its name may differ between runs
        old, new = sorted(old.values()), sorted(new.values())
    if old != new:
        raise CheckFailed(f"regenerated outputs differ from {path}: expected {old}, got {new}")
    print(f"rerun of {command} reproduced {len(new)} output(s) bit-exactly")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="accor", description="Complex-valued radar object classifier tools.")
    p.add_argument("--version", action="version", version=f"accor {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset_help="dataset file (ACCORIQ1)"):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--seed", type=int, help="master seed (default 0)")
        sp.add_argument("--band", type=int, choices=(64, 67), help="band tag in GHz")
        sp.add_argument("--dataset", required=True, help=dataset_help)
        sp.add_argument("--out", required=True, help="output directory")

    g = sub.add_parser("gen-synth", help="synthesise a labelled dataset from scene templates")
    g.add_argument("--config", help="scene INI file (defaults: 10 built-in objects)")
    g.add_argument("--seed", type=int)
    g.add_argument("--band", type=int, choices=(64, 67))
    g.add_argument("--out", required=True, help="dataset file to write")

    im = sub.add_parser("import", help="convert externally published IQ files")
    im.add_argument("--config", help="layout descriptor (key = value)")
    im.add_argument("--band", type=int, choices=(64, 67))
    im.add_argument("--dataset", required=True, help="directory or file to import")
    im.add_argument("--out", required=True, help="dataset file to write")

    for name, helptext in (("train", "train and evaluate"), ("ablate", "alpha sweep"), ("eval", "evaluate a checkpoint")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--alpha", type=float, help="contrastive weight (default 0.4)")
        sp.add_argument("--tau", type=float, help="contrastive temperature (default 0.1)")
        if name != "eval":
            sp.add_argument("--epochs", type=int, help="override [train] epochs")
            sp.add_argument("--runs", type=int, default=1, help="seeds per setting (seed, seed+1, ...)")
        if name == "ablate":
            sp.add_argument("--alphas", default=DEFAULT_ALPHAS, help="comma-separated alpha values")
        if name == "eval":
            sp.add_argument("--checkpoint", help="model checkpoint (omit for a freshly initialised model)")
            sp.add_argument("--split", choices=("test", "all"), default="test")

    sub.add_parser("selfcheck", help="run the built-in verification suite")

    rr = sub.add_parser("rerun", help="replay a manifest and compare output hashes")
    rr.add_argument("--manifest", required=True)
    rr.add_argument("--out", help="fresh output location")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "selfcheck":
            return _cmd_selfcheck(args)
        if args.command == "rerun":
            return _cmd_rerun(args)
        execute(_resolve(args), args.out)
        return 0
    except CheckFailed as exc:
        print(f"accor: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"accor: training diverged: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ConfigError, DatasetFormatError, CheckpointError, AliasingError) as exc:
        print(f"accor: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"accor: invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"accor: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
