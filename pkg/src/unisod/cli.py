"""Command-line entry points: pretrain, prompt-tune, predict, evaluate, params.

Exit codes: 0 success, 1 internal error, 2 usage or configuration error,
3 data or checkpoint error.  Every command writes a ``run_manifest.json``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import torch
import torch.nn.functional as F

from . import __version__
from .checkpoint import atomic_write_bytes, load_checkpoint, model_from_checkpoint, restore_tensors
from .config import PROFILES, Config
from .data import IMAGE_SUFFIXES, TASK_MODALITY, DatasetSpec, Modality, load_dataset, read_aux, read_rgb, save_saliency
from .errors import CheckpointError, ConfigError, ContractViolation, DataError
from .metrics import evaluate_dataset
from .model import ModelConfig, UniSOD
from .trainer import MODES, TrainConfig, partition_parameters, run, set_determinism

logger = logging.getLogger("unisod")

EXIT_INTERNAL, EXIT_USAGE, EXIT_DATA = 1, 2, 3


def _hash_inputs(paths, extra: str = "") -> str:
    h = hashlib.sha256(extra.encode())
    files = []
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        if p.is_dir():
            files.extend((f, f.relative_to(p.parent)) for f in sorted(p.rglob("*")) if f.is_file())
        elif p.is_file():
            files.append((p, Path(p.name)))
    for f, rel in files:
        h.update(str(rel).encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def write_manifest(path: Path, command: str, config: dict, inputs_hash: str, outputs: dict, started: float, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs_sha256": inputs_hash,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "wall_time_s": round(time.time() - started, 3),
        **(extra or {}),
    }
    data = (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode()
    atomic_write_bytes(path, lambda tmp: Path(tmp).write_bytes(data))
    return path


def _load_config(args) -> Config:
    return Config.load(args.config, overrides=args.set, profile=args.profile)


def _apply_seed(cfg: Config, seed):
    if seed is not None:
        cfg["train.seed"] = int(seed)


# --------------------------------------------------------------------------


def cmd_pretrain(args) -> int:
    started = time.time()
    cfg = _load_config(args)
    _apply_seed(cfg, args.seed)
    spec = DatasetSpec.from_config(cfg)
    if spec.modality is not Modality.RGB:
        raise ConfigError(f"pretrain needs an RGB dataset, data.modality={spec.modality.value}")
    samples, scan = load_dataset(spec, workers=int(cfg["data.workers"]))
    for stem, reason in scan.rejects:
        logger.warning("skipping %s: %s", stem, reason)
    tcfg = TrainConfig.from_config(cfg, "pretrain", "rgb")
    out = Path(args.out)
    result = run(tcfg, samples, model_config=ModelConfig.from_config(cfg), out_dir=out, run_manifest={"config": cfg.to_json()})
    first, last = result.log[0]["total"], result.log[-1]["total"]
    print(f"pretrain: {result.step} steps, loss {first:.4f} -> {last:.4f}, checkpoint {result.checkpoint}")
    write_manifest(
        out / "run_manifest.json",
        "pretrain",
        cfg.to_json(),
        _hash_inputs([args.config, spec.root], cfg.to_text()),
        {"checkpoint": result.checkpoint, "log": out / "train_log.jsonl"},
        started,
        {"initial_loss": first, "final_loss": last, "steps": result.step, "rejects": scan.rejects},
    )
    return 0


def cmd_prompt_tune(args) -> int:
    started = time.time()
    cfg = _load_config(args)
    _apply_seed(cfg, args.seed)
    spec = DatasetSpec.from_config(cfg)
    if spec.modality is not TASK_MODALITY[args.task]:
        raise ConfigError(f"task {args.task} needs {TASK_MODALITY[args.task].value} data, data.modality={spec.modality.value}")
    init = load_checkpoint(args.init)
    if init.kind != "model":
        raise CheckpointError(f"--init must be a full model checkpoint, {args.init} holds {init.kind}")
    samples, scan = load_dataset(spec, workers=int(cfg["data.workers"]))
    tcfg = TrainConfig.from_config(cfg, args.mode, args.task)
    out = Path(args.out or f"runs/prompt-{args.task}")
    model = model_from_checkpoint(init)
    result = run(tcfg, samples, model=model, out_dir=out, run_manifest={"config": cfg.to_json(), "init": str(args.init)})
    report = {"task": args.task, "mode": args.mode, **result.partition.report()}
    report.pop("trainable")
    (out / "partition.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"prompt-tune[{args.task}]: trainable {report['trainable_count']} / frozen {report['frozen_count']} (fraction {report['trainable_fraction']:.4f})")
    outputs = {"checkpoint": result.checkpoint, "partition": out / "partition.json", "log": out / "train_log.jsonl"}
    if result.prompt_checkpoint is not None:
        outputs["prompts"] = result.prompt_checkpoint
    write_manifest(
        out / "run_manifest.json",
        "prompt-tune",
        cfg.to_json(),
        _hash_inputs([args.config, spec.root, args.init], cfg.to_text() + args.task + args.mode),
        outputs,
        started,
        {"final_loss": result.final_loss, "steps": result.step, "partition": report},
    )
    return 0


def _list_images(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise ConfigError(f"input directory does not exist: {directory}")
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def cmd_predict(args) -> int:
    started = time.time()
    set_determinism(0, True)
    base = load_checkpoint(args.checkpoint)
    if base.kind != "model":
        raise CheckpointError(f"{args.checkpoint} is a {base.kind} checkpoint; pass it with --prompts")
    model = model_from_checkpoint(base)
    prompt_mode = base.manifest.get("prompt_mode", "none")
    if args.prompts:
        prompts = load_checkpoint(args.prompts)
        if prompts.kind != "prompts":
            raise CheckpointError(f"{args.prompts} is not a prompt checkpoint")
        if prompts.manifest.get("model_config") != base.manifest.get("model_config"):
            raise CheckpointError(
                f"prompt checkpoint v{prompts.manifest.get('version')} was trained for a different model configuration"
            )
        restore_tensors(model, prompts)
        prompt_mode = prompts.manifest.get("prompt_mode", "sum")
    model.eval()
    images = _list_images(Path(args.input))
    aux_files = _list_images(Path(args.aux)) if args.aux else {}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    size = (model.config.image_size,) * 2
    written = []
    for stem, path in images.items():
        rgb = read_rgb(path)
        h, w = rgb.shape[-2:]
        x = F.interpolate(rgb[None], size=size, mode="bilinear", align_corners=False)
        aux = None
        if args.aux:
            if stem not in aux_files:
                raise DataError(f"no auxiliary image for {stem} in {args.aux}")
            aux = F.interpolate(read_aux(aux_files[stem])[None], size=size, mode="bilinear", align_corners=False)
        with torch.no_grad():
            s = model(x, aux, prompt_mode)
            s = F.interpolate(s, size=(h, w), mode="bilinear", align_corners=False)
        target = out / f"{stem}.png"
        save_saliency(s[0, 0], target)
        written.append(target)
    print(f"predict: wrote {len(written)} maps to {out} (prompt mode {prompt_mode})")
    write_manifest(
        out / "run_manifest.json",
        "predict",
        {"checkpoint": str(args.checkpoint), "prompts": str(args.prompts) if args.prompts else None, "prompt_mode": prompt_mode},
        _hash_inputs([args.checkpoint, args.prompts, args.input, args.aux]),
        {"maps": out},
        started,
        {"count": len(written)},
    )
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    report = evaluate_dataset(args.pred, args.gt, args.dataset)
    csv_path = Path(args.out)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    json_path = Path(args.json) if args.json else csv_path.with_suffix(".json")
    report.write_csv(csv_path)
    report.write_json(json_path)
    means = report.means
    print(
        f"{report.dataset}: n={len(report.rows)} MAE={means['mae']:.4f} S={means['s']:.4f} "
        f"E(mean)={means['e_mean']:.4f} E(adp)={means['e_adaptive']:.4f} Fw={means['fw']:.4f}"
    )
    for stem, reason in report.rejects:
        print(f"  reject {stem}: {reason}", file=sys.stderr)
    write_manifest(
        csv_path.with_name(csv_path.stem + ".manifest.json"),
        "evaluate",
        {"pred": str(args.pred), "gt": str(args.gt), "dataset": report.dataset},
        _hash_inputs([args.pred, args.gt]),
        {"csv": csv_path, "json": json_path},
        started,
    )
    return 3 if not report.rows else 0


def cmd_params(args) -> int:
    started = time.time()
    cfg = _load_config(args)
    model = UniSOD(ModelConfig.from_config(cfg))
    partition = partition_parameters(model, args.mode)
    per_ns = {}
    for name, count in {**partition.trainable, **partition.frozen}.items():
        ns = name.split(".", 1)[0]
        per_ns[ns] = per_ns.get(ns, 0) + count
    report = {
        "profile": cfg.profile,
        "mode": args.mode,
        "channels": list(cfg["backbone.channels"]),
        "namespaces": per_ns,
        "trainable_count": partition.trainable_count,
        "frozen_count": partition.frozen_count,
        "trainable_fraction": partition.fraction,
    }
    print(json.dumps(report, indent=2))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "params.json").write_text(json.dumps(report, indent=2) + "\n")
    write_manifest(out / "run_manifest.json", "params", cfg.to_json(), _hash_inputs([args.config], cfg.to_text()), {"report": out / "params.json"}, started)
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="unisod", description="Unified RGB / RGB-D / RGB-T saliency with prompt tuning", formatter_class=fmt)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("config", nargs="?", default=None, help="key=value config file (optional)")
        p.add_argument("--profile", choices=sorted(PROFILES), default=None, help="defaults profile (falls back to $UNISOD_PROFILE, then toy)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")

    p = sub.add_parser("pretrain", help="train the RGB baseline with every parameter learnable", formatter_class=fmt)
    config_args(p)
    p.add_argument("--seed", type=int, default=None, help="overrides train.seed")
    p.add_argument("--out", default="runs/pretrain", help="output directory")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("prompt-tune", help="learn task prompts on a frozen pre-trained model", formatter_class=fmt)
    config_args(p)
    p.add_argument("--task", choices=sorted(TASK_MODALITY), required=True, help="target task")
    p.add_argument("--init", required=True, help="pre-trained model checkpoint")
    p.add_argument("--mode", choices=[m for m in MODES if m != "pretrain"], default="prompt_tune", help="tuning variant")
    p.add_argument("--seed", type=int, default=None, help="overrides train.seed")
    p.add_argument("--out", default=None, help="output directory (default runs/prompt-<task>)")
    p.set_defaults(func=cmd_prompt_tune)

    p = sub.add_parser("predict", help="write saliency maps as 8-bit PNGs", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--prompts", default=None, help="task prompt checkpoint; omit for the pre-trained model alone")
    p.add_argument("--input", required=True, help="directory of RGB images")
    p.add_argument("--aux", default=None, help="directory of depth/thermal images with matching stems")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions: MAE, S, E (mean, adaptive), weighted F", formatter_class=fmt)
    p.add_argument("--pred", required=True, help="prediction directory")
    p.add_argument("--gt", required=True, help="ground-truth directory")
    p.add_argument("--out", required=True, help="per-image CSV path")
    p.add_argument("--json", default=None, help="summary JSON path (default: CSV path with .json)")
    p.add_argument("--dataset", default=None, help="dataset name for the CSV (default: parent of --gt)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("params", help="parameter accounting for a configuration", formatter_class=fmt)
    config_args(p)
    p.add_argument("--mode", choices=MODES, default="prompt_tune", help="partition to report")
    p.add_argument("--out", default="runs/params", help="output directory")
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractViolation) as exc:
        print(f"unisod {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError) as exc:
        print(f"unisod {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        logger.exception("internal error")
        print(f"unisod {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
