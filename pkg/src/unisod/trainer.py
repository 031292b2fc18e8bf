"""Pre-training and prompt-tuning harness.

Modes:

``pretrain``        RGB-only model, every parameter trainable
``prompt_tune``     SPG prompts summed in, only ``spg.*`` trainable
``full_finetune``   SPG prompts summed in, every parameter trainable
``no_spg``          auxiliary features summed in directly, nothing trainable
``prompt_concat``   SPG prompts appended as tokens, only ``spg.*`` trainable
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import torch

from .checkpoint import Checkpoint, load_checkpoint, restore_tensors, save_checkpoint
from .data import TASK_MODALITY, Modality, Sample, make_batch
from .errors import AccountingError, ConfigError, TrainingDivergence
from .losses import LossReport, loss_kwargs, total_loss
from .model import ModelConfig, UniSOD

logger = logging.getLogger(__name__)

MODES = ("pretrain", "prompt_tune", "full_finetune", "no_spg", "prompt_concat")
PROMPT_MODE = {
    "pretrain": "none",
    "prompt_tune": "sum",
    "full_finetune": "sum",
    "no_spg": "direct",
    "prompt_concat": "concat",
}
NAMESPACES = ("backbone", "transformer", "decoder", "spg")


@dataclass
class ParameterPartition:
    trainable: dict[str, int]
    frozen: dict[str, int]

    @property
    def trainable_count(self) -> int:
        return sum(self.trainable.values())

    @property
    def frozen_count(self) -> int:
        return sum(self.frozen.values())

    @property
    def fraction(self) -> float:
        total = self.trainable_count + self.frozen_count
        return self.trainable_count / total if total else 0.0

    def report(self) -> dict:
        return {
            "trainable_count": self.trainable_count,
            "frozen_count": self.frozen_count,
            "trainable_fraction": self.fraction,
            "trainable": sorted(self.trainable),
        }


def _namespace(name: str) -> str:
    head = name.split(".", 1)[0]
    if head not in NAMESPACES:
        raise AccountingError(f"parameter {name!r} is outside the known namespaces {NAMESPACES}")
    return head


def partition_parameters(model: UniSOD, mode: str) -> ParameterPartition:
    """Set ``requires_grad`` for ``mode`` and return the resulting split."""
    if mode not in MODES:
        raise ConfigError(f"unknown training mode {mode!r}")
    trainable, frozen = {}, {}
    for name, p in model.named_parameters():
        ns = _namespace(name)
        if mode in ("pretrain", "full_finetune"):
            learn = True
        elif mode == "no_spg":
            learn = False
        else:
            learn = ns == "spg"
        p.requires_grad_(learn)
        (trainable if learn else frozen)[name] = p.numel()
    covered = set(trainable) | set(frozen)
    if covered != {n for n, _ in model.named_parameters()}:
        raise AccountingError("partition does not cover every parameter")
    return ParameterPartition(trainable, frozen)


@dataclass
class TrainConfig:
    mode: str = "pretrain"
    task: str = "rgb"
    lr: float = 1e-5
    batch_size: int = 4
    epochs: int = 200
    seed: int = 0
    weight_decay: float = 0.0
    deterministic: bool = True
    max_steps: int = 0
    checkpoint_every: int = 0
    log_every: int = 1
    loss: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown training mode {self.mode!r}")
        if self.task not in TASK_MODALITY:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {sorted(TASK_MODALITY)}")

    @classmethod
    def from_config(cls, cfg, mode: str, task: str = "rgb") -> "TrainConfig":
        phase = "pretrain" if mode == "pretrain" else "prompt"
        return cls(
            mode=mode,
            task=task,
            lr=float(cfg["train.lr"]),
            batch_size=int(cfg[f"{phase}.batch_size"]),
            epochs=int(cfg[f"{phase}.epochs"]),
            seed=int(cfg["train.seed"]),
            weight_decay=float(cfg["train.weight_decay"]),
            deterministic=bool(cfg["train.deterministic"]),
            max_steps=int(cfg["train.max_steps"]),
            checkpoint_every=int(cfg["train.checkpoint_every"]),
            log_every=int(cfg["train.log_every"]),
            loss=loss_kwargs(cfg),
        )

    @property
    def prompt_mode(self) -> str:
        return PROMPT_MODE[self.mode]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def set_determinism(seed: int, deterministic: bool) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def make_optimizer(model: UniSOD, cfg: TrainConfig) -> torch.optim.Optimizer | None:
    # frozen parameters never enter the optimizer, so they get no state at all
    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        return None
    return torch.optim.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)


def train_step(model: UniSOD, batch, optimizer: torch.optim.Optimizer | None, loss_kw: dict | None = None, step: int = 0) -> LossReport:
    model.train()
    loss_kw = loss_kw or {}
    if optimizer is None:
        with torch.no_grad():
            s = model(batch.rgb, batch.aux)
            report = total_loss(s, batch.gt, batch.rgb, **loss_kw)
    else:
        optimizer.zero_grad(set_to_none=True)
        s = model(batch.rgb, batch.aux)
        report = total_loss(s, batch.gt, batch.rgb, **loss_kw)
    if not torch.isfinite(report.total):
        lr = optimizer.param_groups[0]["lr"] if optimizer is not None else None
        raise TrainingDivergence(f"non-finite loss at step {step} (lr={lr}, batch={batch.ids})")
    if optimizer is not None:
        report.total.backward()
        optimizer.step()
    return report


def epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    """Sample order for one epoch; a pure function of (seed, epoch) so resume needs no RNG replay."""
    g = torch.Generator().manual_seed(seed * 1_000_003 + epoch)
    return torch.randperm(n, generator=g).tolist()


def check_task(samples: Sequence[Sample], cfg: TrainConfig) -> None:
    expected = Modality.RGB if cfg.mode == "pretrain" else TASK_MODALITY[cfg.task]
    for s in samples:
        if s.modality is not expected:
            raise ConfigError(
                f"mode {cfg.mode} / task {cfg.task} expects {expected.value} data, sample {s.id} is {s.modality.value}"
            )


@dataclass
class RunResult:
    model: UniSOD
    partition: ParameterPartition
    log: list[dict]
    step: int
    checkpoint: Path | None = None
    prompt_checkpoint: Path | None = None
    optimizer: torch.optim.Optimizer | None = None

    @property
    def final_loss(self) -> float:
        return self.log[-1]["total"] if self.log else float("nan")


def run(
    cfg: TrainConfig,
    samples: Sequence[Sample],
    model: UniSOD | None = None,
    model_config: ModelConfig | None = None,
    init: Checkpoint | str | Path | None = None,
    resume: Checkpoint | str | Path | None = None,
    out_dir: str | Path | None = None,
    callback: Callable[[int, UniSOD, LossReport], None] | None = None,
    run_manifest: dict | None = None,
) -> RunResult:
    """Train for ``cfg.epochs`` epochs (or ``cfg.max_steps`` steps when set).

    ``init`` loads pre-trained tensors (e.g. for prompt tuning); ``resume``
    restores model, optimizer and step from a checkpoint written by a
    previous call with the same configuration.  A ``callback`` returning
    ``True`` ends training after the current step.
    """
    if not samples:
        raise ConfigError("training set is empty")
    check_task(samples, cfg)
    set_determinism(cfg.seed, cfg.deterministic)
    if model is None:
        model = UniSOD(model_config or ModelConfig())
    if init is not None:
        init = init if isinstance(init, Checkpoint) else load_checkpoint(init)
        restore_tensors(model, init, strict=False)
    model.prompt_mode = cfg.prompt_mode
    partition = partition_parameters(model, cfg.mode)
    optimizer = make_optimizer(model, cfg)

    start = 0
    if resume is not None:
        resume = resume if isinstance(resume, Checkpoint) else load_checkpoint(resume)
        restore_tensors(model, resume)
        if optimizer is not None and resume.optimizer is not None:
            optimizer.load_state_dict(resume.optimizer)
        if resume.rng is not None:
            torch.set_rng_state(resume.rng)
        start = resume.step

    n = len(samples)
    per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.max_steps if cfg.max_steps > 0 else cfg.epochs * per_epoch
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    log_fh = open(out / "train_log.jsonl", "a" if start else "w") if out is not None else None

    def manifest(step: int) -> dict:
        return {
            "step": step,
            "seed": cfg.seed,
            "mode": cfg.mode,
            "task": cfg.task,
            "prompt_mode": cfg.prompt_mode,
            "train_config": cfg.to_dict(),
            "partition": partition.report(),
            "run": run_manifest or {},
        }

    log: list[dict] = []
    best = math.inf
    epoch_losses: list[float] = []
    prompt_ckpt = None
    try:
        for step in range(start, total_steps):
            epoch, pos = divmod(step, per_epoch)
            order = epoch_order(n, cfg.seed, epoch)
            idx = order[pos * cfg.batch_size : (pos + 1) * cfg.batch_size]
            batch = make_batch([samples[i] for i in idx])
            report = train_step(model, batch, optimizer, cfg.loss, step)
            entry = {"step": step + 1, **report.as_floats(), "lr": cfg.lr}
            log.append(entry)
            epoch_losses.append(entry["total"])
            stop = callback is not None and callback(step + 1, model, report) is True
            if log_fh is not None and (step + 1) % max(cfg.log_every, 1) == 0:
                log_fh.write(json.dumps(entry) + "\n")
            if out is not None:
                if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                    save_checkpoint(out / f"step_{step + 1:06d}.pt", model, manifest(step + 1), optimizer)
                if pos == per_epoch - 1 or step + 1 == total_steps:
                    mean_loss = sum(epoch_losses) / len(epoch_losses)
                    epoch_losses = []
                    if mean_loss < best:
                        best = mean_loss
                        save_checkpoint(out / "best.pt", model, {**manifest(step + 1), "epoch_loss": mean_loss}, optimizer)
            if stop:
                total_steps = step + 1
                break
    finally:
        if log_fh is not None:
            log_fh.close()

    last = None
    if out is not None:
        last = save_checkpoint(out / "last.pt", model, manifest(total_steps), optimizer)
        if cfg.mode in ("prompt_tune", "prompt_concat"):
            prompt_ckpt = save_checkpoint(out / f"prompts_{cfg.task}.pt", model, manifest(total_steps), prompts_only=True)
    logger.info("finished %s after %d steps", cfg.mode, total_steps)
    return RunResult(model, partition, log, total_steps, last, prompt_ckpt, optimizer)


@torch.no_grad()
def predict_samples(model: UniSOD, samples: Sequence[Sample], prompt_mode: str | None = None, batch_size: int = 8) -> torch.Tensor:
    outs = []
    for i in range(0, len(samples), batch_size):
        batch = make_batch(samples[i : i + batch_size])
        outs.append(model.predict(batch.rgb, batch.aux, prompt_mode))
    return torch.cat(outs)


def mean_mae(model: UniSOD, samples: Sequence[Sample], prompt_mode: str | None = None) -> float:
    pred = predict_samples(model, samples, prompt_mode)
    gt = torch.stack([s.gt for s in samples])
    return float((pred - gt).abs().mean())
