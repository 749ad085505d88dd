"""Compact trainable decomposer: image -> (albedo, normals, lighting).

A shared strided-conv encoder feeds two stacks of residual blocks (albedo
and normal features), each decoded back to image resolution by transposed
convolutions. Lighting comes from a 1x1 convolution over the concatenated
image/albedo/normal features, batch-normalized, pooled and mapped to the 27
coefficients by a final affine layer.

Output heads: sigmoid bounds albedos to (0, 1); normals are unit-normalized
per pixel. Convolution blocks are conv -> ReLU -> batchnorm; the light head
is conv -> batchnorm -> ReLU -> pool -> affine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn, sh
from .errors import InvalidInputError, InvalidStateError
from .image import ImagePlane, Mask, NormalMap, check_same_grid


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple = (16, 32, 64)
    light_hidden: int = 64
    res_blocks: int = 2
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    dtype: str = "float32"

    def to_dict(self) -> dict:
        return {"channels": list(self.channels), "light_hidden": self.light_hidden,
                "res_blocks": self.res_blocks, "bn_momentum": self.bn_momentum,
                "bn_eps": self.bn_eps, "dtype": self.dtype}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(channels=tuple(d["channels"]), light_hidden=int(d["light_hidden"]),
                   res_blocks=int(d["res_blocks"]), bn_momentum=float(d["bn_momentum"]),
                   bn_eps=float(d["bn_eps"]), dtype=str(d["dtype"]))


#: Tiny widths for finite-difference gradient checks.
MICRO_CONFIG = ModelConfig(channels=(4, 6, 8), light_hidden=8, dtype="float64")


@dataclass
class ModelParams:
    """Named parameter tensors plus batchnorm buffers and Adam state."""

    config: ModelConfig
    tensors: dict
    running: dict
    opt_m: dict = field(default_factory=dict)
    opt_v: dict = field(default_factory=dict)
    opt_step: int = 0

    def n_parameters(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())


@dataclass
class Tape:
    """Activation record of one train-mode forward pass; single use."""

    caches: dict
    shapes: dict
    train: bool
    consumed: bool = False


def _convb_init(tensors, running, rng, name, c_in, c_out, k, dtype):
    tensors[f"{name}.w"] = nn.he_init(rng, (c_out, c_in, k, k), c_in * k * k, dtype)
    tensors[f"{name}.b"] = np.zeros(c_out, dtype=dtype)
    tensors[f"{name}.gamma"] = np.ones(c_out, dtype=dtype)
    tensors[f"{name}.beta"] = np.zeros(c_out, dtype=dtype)
    running[f"{name}.mean"] = np.zeros(c_out, dtype=dtype)
    running[f"{name}.var"] = np.ones(c_out, dtype=dtype)


def _deconvb_init(tensors, running, rng, name, c_in, c_out, k, dtype, bn=True):
    tensors[f"{name}.w"] = nn.he_init(rng, (c_in, c_out, k, k), c_in * k * k, dtype)
    tensors[f"{name}.b"] = np.zeros(c_out, dtype=dtype)
    if bn:
        tensors[f"{name}.gamma"] = np.ones(c_out, dtype=dtype)
        tensors[f"{name}.beta"] = np.zeros(c_out, dtype=dtype)
        running[f"{name}.mean"] = np.zeros(c_out, dtype=dtype)
        running[f"{name}.var"] = np.ones(c_out, dtype=dtype)


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    dtype = np.dtype(config.dtype)
    c1, c2, c3 = config.channels
    tensors: dict = {}
    running: dict = {}
    _convb_init(tensors, running, rng, "enc0", 3, c1, 3, dtype)
    _convb_init(tensors, running, rng, "enc1", c1, c2, 3, dtype)
    _convb_init(tensors, running, rng, "enc2", c2, c3, 3, dtype)
    for branch in ("alb", "nrm"):
        for i in range(config.res_blocks):
            _convb_init(tensors, running, rng, f"{branch}res{i}.a", c3, c3, 3, dtype)
            _convb_init(tensors, running, rng, f"{branch}res{i}.b", c3, c3, 3, dtype)
        _deconvb_init(tensors, running, rng, f"{branch}dec0", c3, c2, 4, dtype)
        _deconvb_init(tensors, running, rng, f"{branch}dec1", c2, c1, 4, dtype)
        _deconvb_init(tensors, running, rng, f"{branch}dec2", c1, 3, 4, dtype, bn=False)
    _convb_init(tensors, running, rng, "light.conv", 3 * c3, config.light_hidden, 1, dtype)
    tensors["light.fc.w"] = (rng.standard_normal((27, config.light_hidden)) * 0.01).astype(dtype)
    tensors["light.fc.b"] = np.zeros(27, dtype=dtype)
    # neutral starting point for the light head: uniform white light
    tensors["light.fc.b"][0:3] = 1.0 / sh.C4
    return ModelParams(config=config, tensors=tensors, running=running)


def _convb_fwd(params, caches, name, x, train, stride, pad):
    t, r, cfg = params.tensors, params.running, params.config
    y, c_conv = nn.conv2d(x, t[f"{name}.w"], t[f"{name}.b"], stride=stride, pad=pad)
    y, c_relu = nn.relu(y)
    y, c_bn = nn.batchnorm(y, t[f"{name}.gamma"], t[f"{name}.beta"],
                           r[f"{name}.mean"], r[f"{name}.var"], train,
                           cfg.bn_momentum, cfg.bn_eps)
    caches[name] = (c_conv, c_relu, c_bn)
    return y


def _convb_bwd(caches, grads, name, dy):
    c_conv, c_relu, c_bn = caches[name]
    dy, dgamma, dbeta = nn.batchnorm_backward(dy, c_bn)
    dy = nn.relu_backward(dy, c_relu)
    dx, dw, db = nn.conv2d_backward(dy, c_conv)
    grads[f"{name}.w"] = grads.get(f"{name}.w", 0) + dw
    grads[f"{name}.b"] = grads.get(f"{name}.b", 0) + db
    grads[f"{name}.gamma"] = grads.get(f"{name}.gamma", 0) + dgamma
    grads[f"{name}.beta"] = grads.get(f"{name}.beta", 0) + dbeta
    return dx


def _resblock_fwd(params, caches, name, x, train):
    y = _convb_fwd(params, caches, f"{name}.a", x, train, stride=1, pad=1)
    y = _convb_fwd(params, caches, f"{name}.b", y, train, stride=1, pad=1)
    return x + y


def _resblock_bwd(caches, grads, name, dy):
    dx_inner = _convb_bwd(caches, grads, f"{name}.b", dy)
    dx_inner = _convb_bwd(caches, grads, f"{name}.a", dx_inner)
    return dy + dx_inner


def _decoder_fwd(params, caches, branch, x, train):
    t, r, cfg = params.tensors, params.running, params.config
    y = x
    for i in range(2):
        name = f"{branch}dec{i}"
        y, c_d = nn.conv_transpose2d(y, t[f"{name}.w"], t[f"{name}.b"], stride=2, pad=1)
        y, c_r = nn.relu(y)
        y, c_b = nn.batchnorm(y, t[f"{name}.gamma"], t[f"{name}.beta"],
                              r[f"{name}.mean"], r[f"{name}.var"], train,
                              cfg.bn_momentum, cfg.bn_eps)
        caches[name] = (c_d, c_r, c_b)
    name = f"{branch}dec2"
    y, c_d = nn.conv_transpose2d(y, t[f"{name}.w"], t[f"{name}.b"], stride=2, pad=1)
    caches[name] = c_d
    return y


def _decoder_bwd(caches, grads, branch, dy):
    name = f"{branch}dec2"
    dy, dw, db = nn.conv_transpose2d_backward(dy, caches[name])
    grads[f"{name}.w"] = dw
    grads[f"{name}.b"] = db
    for i in (1, 0):
        name = f"{branch}dec{i}"
        c_d, c_r, c_b = caches[name]
        dy, dgamma, dbeta = nn.batchnorm_backward(dy, c_b)
        dy = nn.relu_backward(dy, c_r)
        dy, dw, db = nn.conv_transpose2d_backward(dy, c_d)
        grads[f"{name}.w"] = dw
        grads[f"{name}.b"] = db
        grads[f"{name}.gamma"] = dgamma
        grads[f"{name}.beta"] = dbeta
    return dy


def forward_batch(params: ModelParams, x: np.ndarray, train: bool):
    """Run the network on (N, 3, H, W) inputs.

    Returns ``(outputs, tape)`` with outputs ``albedo`` / ``normals`` as
    (N, 3, H, W) and ``light`` as (N, 9, 3). The tape is None in eval mode.
    """
    if x.ndim != 4 or x.shape[1] != 3:
        raise InvalidInputError(f"expected (N, 3, H, W) input, got {x.shape}")
    if x.shape[2] % 8 or x.shape[3] % 8:
        raise InvalidInputError(f"input size must be divisible by 8, got {x.shape[2:]}")
    x = x.astype(np.dtype(params.config.dtype), copy=False)
    caches: dict = {}
    e = _convb_fwd(params, caches, "enc0", x, train, stride=2, pad=1)
    e = _convb_fwd(params, caches, "enc1", e, train, stride=2, pad=1)
    e3 = _convb_fwd(params, caches, "enc2", e, train, stride=2, pad=1)
    fa = fn = e3
    for i in range(params.config.res_blocks):
        fa = _resblock_fwd(params, caches, f"albres{i}", fa, train)
        fn = _resblock_fwd(params, caches, f"nrmres{i}", fn, train)
    alb_raw = _decoder_fwd(params, caches, "alb", fa, train)
    nrm_raw = _decoder_fwd(params, caches, "nrm", fn, train)
    albedo, c_sig = nn.sigmoid(alb_raw)
    normals, c_nrm = nn.normalize_channels(nrm_raw)

    cat = np.concatenate([e3, fa, fn], axis=1)
    lh = _convb_light_fwd(params, caches, cat, train)
    light = lh.reshape(-1, 9, 3)

    caches["head.sigmoid"] = c_sig
    caches["head.normalize"] = c_nrm
    outputs = {"albedo": albedo, "normals": normals, "light": light}
    tape = Tape(caches=caches, train=train,
                shapes={"e3": e3.shape, "cat": cat.shape}) if train else None
    return outputs, tape


def _convb_light_fwd(params, caches, cat, train):
    t, r, cfg = params.tensors, params.running, params.config
    y, c_conv = nn.conv2d(cat, t["light.conv.w"], t["light.conv.b"], stride=1, pad=0)
    y, c_bn = nn.batchnorm(y, t["light.conv.gamma"], t["light.conv.beta"],
                           r["light.conv.mean"], r["light.conv.var"], train,
                           cfg.bn_momentum, cfg.bn_eps)
    y, c_relu = nn.relu(y)
    pooled, c_pool = nn.global_avg_pool(y)
    out, c_fc = nn.linear(pooled, t["light.fc.w"], t["light.fc.b"])
    caches["light"] = (c_conv, c_bn, c_relu, c_pool, c_fc)
    return out


def _convb_light_bwd(caches, grads, d_light_flat):
    c_conv, c_bn, c_relu, c_pool, c_fc = caches["light"]
    dy, dw, db = nn.linear_backward(d_light_flat, c_fc)
    grads["light.fc.w"] = dw
    grads["light.fc.b"] = db
    dy = nn.global_avg_pool_backward(dy, c_pool)
    dy = nn.relu_backward(dy, c_relu)
    dy, dgamma, dbeta = nn.batchnorm_backward(dy, c_bn)
    grads["light.conv.gamma"] = dgamma
    grads["light.conv.beta"] = dbeta
    dcat, dw, db = nn.conv2d_backward(dy, c_conv)
    grads["light.conv.w"] = dw
    grads["light.conv.b"] = db
    return dcat


def backward_batch(params: ModelParams, tape: Tape, d_albedo: np.ndarray,
                   d_normals: np.ndarray, d_light: np.ndarray) -> dict:
    """Parameter gradients from output gradients.

    ``d_normals`` is taken with respect to the unit normals; the
    normalize-on-use chain rule is applied here.
    """
    if tape is None or not tape.train:
        raise InvalidStateError("backward needs a tape from a train-mode forward")
    if tape.consumed:
        raise InvalidStateError("tape already consumed; rerun forward before backward")
    tape.consumed = True
    caches = tape.caches
    grads: dict = {}
    dtype = np.dtype(params.config.dtype)

    d_alb_raw = nn.sigmoid_backward(d_albedo.astype(dtype, copy=False),
                                    caches["head.sigmoid"])
    d_nrm_raw = nn.normalize_channels_backward(d_normals.astype(dtype, copy=False),
                                               caches["head.normalize"])
    dcat = _convb_light_bwd(caches, grads, d_light.reshape(-1, 27).astype(dtype, copy=False))
    c3 = params.config.channels[2]
    de3_light, dfa_light, dfn_light = dcat[:, :c3], dcat[:, c3:2 * c3], dcat[:, 2 * c3:]

    dfa = _decoder_bwd(caches, grads, "alb", d_alb_raw) + dfa_light
    dfn = _decoder_bwd(caches, grads, "nrm", d_nrm_raw) + dfn_light
    for i in reversed(range(params.config.res_blocks)):
        dfa = _resblock_bwd(caches, grads, f"albres{i}", dfa)
        dfn = _resblock_bwd(caches, grads, f"nrmres{i}", dfn)
    de3 = dfa + dfn + de3_light
    de = _convb_bwd(caches, grads, "enc2", de3)
    de = _convb_bwd(caches, grads, "enc1", de)
    _convb_bwd(caches, grads, "enc0", de)
    return grads


def _to_batch(image: ImagePlane, mask: Mask) -> np.ndarray:
    data = image.data * mask.bits[..., None]
    return data.transpose(2, 0, 1)[None]


def model_forward(params: ModelParams, image: ImagePlane, mask: Mask,
                  mode: str = "eval"):
    """Decompose one image.

    Returns ``(albedo, normals, light, tape)``; the tape is None in eval
    mode. The image is masked before entering the network.
    """
    if mode not in ("train", "eval"):
        raise InvalidInputError(f"mode must be train or eval, got {mode!r}")
    image.require_space("linear-rgb")
    check_same_grid(image, mask)
    outputs, tape = forward_batch(params, _to_batch(image, mask), train=(mode == "train"))
    albedo = ImagePlane(outputs["albedo"][0].transpose(1, 2, 0).astype(np.float64), "linear-rgb")
    normals = NormalMap(outputs["normals"][0].transpose(1, 2, 0).astype(np.float64))
    light = sh.ShLighting(outputs["light"][0].astype(np.float64))
    return albedo, normals, light, tape


def model_backward(params: ModelParams, tape: Tape, d_albedo: np.ndarray,
                   d_normals: np.ndarray, d_light: np.ndarray) -> dict:
    """Single-image wrapper over :func:`backward_batch` (H, W, 3 layout)."""
    return backward_batch(params, tape,
                          d_albedo.transpose(2, 0, 1)[None],
                          d_normals.transpose(2, 0, 1)[None],
                          d_light[None])


def decompose_single(params: ModelParams, image: ImagePlane, mask: Mask):
    """Eval-mode decomposition; the entry point used by the CLI and service."""
    albedo, normals, light, _ = model_forward(params, image, mask, mode="eval")
    return albedo, normals, light
