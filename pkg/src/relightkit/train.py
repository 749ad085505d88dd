"""Training loop for the compact decomposer on multi-lit datasets.

Each step samples a batch of image pairs, runs both members through the
network in one batched forward pass, evaluates the weighted objective per
pair (supervised terms plus reconstruction and cross-relighting), and
applies one Adam update. Supervision modes:

* ``full``: ground-truth albedo, normals and lighting all supervise.
* ``light-only``: only the lighting is supervised; albedo/normal weights are
  forced to zero and the self-supervised terms carry the decomposition.

Runs are deterministic for a fixed seed; checkpoints embed the RNG state so
training resumes exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InvalidInputError, OptimizationFailedError
from .losses import LossWeights, pair_objective
from .model import ModelConfig, backward_batch, forward_batch, init_params
from .synthgen import MultiLitSample, enumerate_pairs

SUPERVISION_MODES = ("full", "light-only")


@dataclass(frozen=True)
class TrainConfig:
    supervision: str = "light-only"
    use_relit: bool = True
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 5e-4
    adam_betas: tuple = (0.9, 0.999)
    weight_decay: float = 5e-4
    batch_size: int = 8
    steps: int = 2000
    seed: int = 0
    pair_mode: str = "anchored"
    model: ModelConfig = field(default_factory=ModelConfig)
    checkpoint_every: int = 0
    lr_schedule: str = "cosine"

    def __post_init__(self):
        if self.supervision not in SUPERVISION_MODES:
            raise InvalidInputError(f"unknown supervision mode {self.supervision!r}")
        if self.lr <= 0:
            raise InvalidInputError("lr must be positive")
        if self.steps < 1 or self.batch_size < 1:
            raise InvalidInputError("steps and batch_size must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidInputError(f"unknown lr schedule {self.lr_schedule!r}")

    def lr_at(self, step: int) -> float:
        """Learning rate for a step; cosine decays to 5% of the base rate."""
        if self.lr_schedule == "constant":
            return self.lr
        floor = 0.05 * self.lr
        t = min(max(step, 0), self.steps) / max(self.steps, 1)
        return floor + (self.lr - floor) * 0.5 * (1.0 + np.cos(np.pi * t))

    def effective_weights(self) -> LossWeights:
        w = self.weights
        if self.supervision == "light-only":
            w = w.light_only()
        if not self.use_relit:
            w = replace(w, lambda_relit=0.0)
        return w

    def to_dict(self) -> dict:
        return {"supervision": self.supervision, "use_relit": self.use_relit,
                "weights": vars(self.weights).copy(), "lr": self.lr,
                "adam_betas": list(self.adam_betas), "weight_decay": self.weight_decay,
                "batch_size": self.batch_size, "steps": self.steps, "seed": self.seed,
                "pair_mode": self.pair_mode, "model": self.model.to_dict(),
                "checkpoint_every": self.checkpoint_every,
                "lr_schedule": self.lr_schedule}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(supervision=d["supervision"], use_relit=bool(d["use_relit"]),
                   weights=LossWeights(**d["weights"]), lr=float(d["lr"]),
                   adam_betas=tuple(d["adam_betas"]), weight_decay=float(d["weight_decay"]),
                   batch_size=int(d["batch_size"]), steps=int(d["steps"]),
                   seed=int(d["seed"]), pair_mode=d["pair_mode"],
                   model=ModelConfig.from_dict(d["model"]),
                   checkpoint_every=int(d.get("checkpoint_every", 0)),
                   lr_schedule=d.get("lr_schedule", "cosine"))


def _prepare(samples: list, dtype) -> list:
    """Cast dataset arrays once; network inputs are masked, channels-first."""
    prepped = []
    for s in samples:
        mask_bits = s.mask.bits
        images = [img.data.astype(dtype) for img in s.images]
        inputs = [np.ascontiguousarray((img * mask_bits[..., None]).transpose(2, 0, 1))
                  for img in images]
        prepped.append({
            "images": images,
            "inputs": inputs,
            "mask": mask_bits,
            "lights": [l.coeffs.astype(dtype) for l in s.lightings],
            "albedo": s.albedo.data.astype(dtype),
            "normals": s.normals.data.astype(dtype),
        })
    return prepped


def _pair_index(samples: list, mode: str) -> list:
    out = []
    for si, s in enumerate(samples):
        for i, j in enumerate_pairs(s, mode=mode):
            out.append((si, i, j))
    if not out:
        raise InvalidInputError("dataset yields no training pairs")
    return out


def train(samples: list[MultiLitSample], config: TrainConfig,
          out_path: str | None = None, log_path: str | None = None,
          resume_from: str | None = None):
    """Train the decomposer; returns ``(ModelParams, list of log records)``.

    ``out_path`` receives the final checkpoint (and periodic ones when
    ``checkpoint_every`` is set). A non-finite loss aborts with the last
    finite checkpoint written to ``out_path`` if given.
    """
    dtype = np.dtype(config.model.dtype)
    data = _prepare(samples, dtype)
    pairs = _pair_index(samples, config.pair_mode)
    weights = config.effective_weights()
    full = config.supervision == "full"

    start_step = 0
    if resume_from is not None:
        params, header = load_checkpoint(resume_from)
        rng = np.random.default_rng(0)
        rng.bit_generator.state = header["rng_state"]
        start_step = int(header["step"])
    else:
        rng = np.random.default_rng(config.seed)
        params = init_params(config.model, rng)
        params.opt_m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        params.opt_v = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    logs = []
    log_file = open(log_path, "w") if log_path else None
    beta1, beta2 = config.adam_betas

    def _checkpoint(path, step):
        save_checkpoint(path, params, train_config=config.to_dict(),
                        rng_state=rng.bit_generator.state, step=step)

    try:
        for step in range(start_step, config.steps):
            chosen = rng.choice(len(pairs), size=config.batch_size,
                                replace=len(pairs) < config.batch_size)
            batch = [pairs[int(c)] for c in chosen]
            x = np.stack([data[si]["inputs"][idx]
                          for si, i, j in batch for idx in (i, j)])
            outputs, tape = forward_batch(params, x, train=True)

            d_albedo = np.zeros_like(outputs["albedo"])
            d_normals = np.zeros_like(outputs["normals"])
            d_light = np.zeros_like(outputs["light"])
            terms = {"total": 0.0, "rec": 0.0, "relit": 0.0, "albedo": 0.0,
                     "normal": 0.0, "light": 0.0}
            inv_b = 1.0 / config.batch_size
            for p, (si, i, j) in enumerate(batch):
                d = data[si]
                a1 = outputs["albedo"][2 * p].transpose(1, 2, 0)
                a2 = outputs["albedo"][2 * p + 1].transpose(1, 2, 0)
                n1 = outputs["normals"][2 * p].transpose(1, 2, 0)
                n2 = outputs["normals"][2 * p + 1].transpose(1, 2, 0)
                l1 = outputs["light"][2 * p]
                l2 = outputs["light"][2 * p + 1]
                loss, grads = pair_objective(
                    a1, n1, l1, a2, n2, l2, d["images"][i], d["images"][j],
                    d["mask"], weights,
                    gt_albedo=d["albedo"] if full else None,
                    gt_normals=d["normals"] if full else None,
                    gt_lights=(d["lights"][i], d["lights"][j]))
                terms["total"] += loss.total * inv_b
                for key in ("rec", "relit", "albedo", "normal", "light"):
                    terms[key] += loss.terms[key] * inv_b
                d_albedo[2 * p] = grads.d_albedo_1.transpose(2, 0, 1) * inv_b
                d_albedo[2 * p + 1] = grads.d_albedo_2.transpose(2, 0, 1) * inv_b
                d_normals[2 * p] = grads.d_normals_1.transpose(2, 0, 1) * inv_b
                d_normals[2 * p + 1] = grads.d_normals_2.transpose(2, 0, 1) * inv_b
                d_light[2 * p] = grads.d_light_1 * inv_b
                d_light[2 * p + 1] = grads.d_light_2 * inv_b

            if not np.isfinite(terms["total"]):
                if out_path:
                    _checkpoint(out_path, step)
                raise OptimizationFailedError(
                    f"loss became non-finite at step {step}",
                    last_state={"step": step, "params": params})

            grads = backward_batch(params, tape, d_albedo, d_normals, d_light)
            params.opt_step += 1
            lr = config.lr_at(step)
            for name, tensor in params.tensors.items():
                nn.adam_update(tensor, grads[name], params.opt_m[name],
                               params.opt_v[name], params.opt_step, lr,
                               beta1, beta2, weight_decay=config.weight_decay)

            record = {"step": step, "lr": lr,
                      **{k: float(v) for k, v in terms.items()}}
            logs.append(record)
            if log_file:
                log_file.write(json.dumps(record, sort_keys=True) + "\n")
            if (out_path and config.checkpoint_every
                    and (step + 1) % config.checkpoint_every == 0):
                _checkpoint(out_path, step + 1)
    finally:
        if log_file:
            log_file.close()

    if out_path:
        _checkpoint(out_path, config.steps)
    return params, logs
