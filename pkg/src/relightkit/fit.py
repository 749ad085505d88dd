"""Direct gradient-descent decomposition of a multi-lit image pair.

No learned prior: per-pair albedo logits, free normal parameters and 9x3
lightings are optimized by Adam against the reconstruction and
cross-relighting objective. Each pair member keeps its own albedo and
normals, so the cross-relighting term is a real constraint rather than an
algebraic restatement of reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lightsolve, nn, sh
from .errors import OptimizationFailedError
from .image import ImagePlane, Mask, NormalMap, check_same_grid
from .losses import LossWeights, PairEstimate, pair_objective


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 400
    lr: float = 0.02
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    warmup: int = 20

    def lr_at(self, it: int) -> float:
        """Linear warmup then cosine decay to 10% of the base rate."""
        ramp = min(1.0, (it + 1) / max(self.warmup, 1))
        t = it / max(self.iterations, 1)
        return self.lr * ramp * (0.1 + 0.9 * 0.5 * (1.0 + np.cos(np.pi * t)))


@dataclass
class FitResult:
    estimate: PairEstimate
    trace: np.ndarray           # weighted total objective per iteration
    final_terms: dict


def sphere_prior_normals(mask: Mask) -> np.ndarray:
    """Spherical-cap normal field over the mask's bounding circle.

    The generic initializer for unknown geometry: centered on the mask
    centroid, flat (0, 0, 1) outside the cap and off the mask.
    """
    bits = mask.bits
    out = np.zeros((mask.height, mask.width, 3))
    out[..., 2] = 1.0
    if not bits.any():
        return out
    rows, cols = np.nonzero(bits)
    cy, cx = rows.mean(), cols.mean()
    radius = np.sqrt(((rows - cy) ** 2 + (cols - cx) ** 2).max()) * 1.05 + 1e-9
    r, c = np.mgrid[0:mask.height, 0:mask.width]
    u = (c - cx) / radius
    v = (cy - r) / radius
    rr = u * u + v * v
    cap = (rr < 1.0) & bits
    z = np.sqrt(np.clip(1.0 - rr, 0.0, None))
    out[cap] = np.stack([u[cap], v[cap], z[cap]], axis=-1)
    return out


def _normalize_rows(u: np.ndarray):
    norms = np.linalg.norm(u, axis=-1, keepdims=True)
    safe = np.maximum(norms, nn.NORMALIZE_EPS)
    return u / safe, safe, norms > nn.NORMALIZE_EPS


def _project_rows(grad: np.ndarray, n: np.ndarray, safe: np.ndarray, live: np.ndarray):
    dot = (grad * n).sum(axis=-1, keepdims=True)
    return np.where(live, (grad - dot * n) / safe, 0.0)


def fit_pair(i1: ImagePlane, i2: ImagePlane, mask: Mask, weights: LossWeights,
             config: FitConfig = FitConfig(),
             init: PairEstimate | None = None) -> FitResult:
    """Recover (albedo, normals, lighting) for both members of a pair.

    By default albedos start flat at 0.5, normals at a spherical cap over
    the mask, and each lighting at the closed-form least-squares estimate
    under that initialization; pass ``init`` to warm-start instead. Only the
    reconstruction and cross-relighting weights participate; supervision
    weights are ignored.

    The returned estimate is the best iterate seen, so a warm start at a
    near-optimal point is never degraded; the trace still records every
    iteration's objective.
    """
    i1.require_space("linear-rgb")
    i2.require_space("linear-rgb")
    check_same_grid(i1, i2, mask)
    w = LossWeights(lambda_albedo=0.0, lambda_normal=0.0, lambda_light=0.0,
                    lambda_rec=weights.lambda_rec, lambda_relit=weights.lambda_relit)

    if init is not None:
        def logit(a):
            a = np.clip(a, 1e-6, 1.0 - 1e-6)
            return np.log(a / (1.0 - a))
        variables = {
            "logits1": logit(init.albedo_1.data),
            "logits2": logit(init.albedo_2.data),
            "u1": init.normals_1.data.copy(),
            "u2": init.normals_2.data.copy(),
            "l1": init.light_1.coeffs.copy(),
            "l2": init.light_2.coeffs.copy(),
        }
    else:
        prior_n = sphere_prior_normals(mask)
        prior_a = ImagePlane(np.full((mask.height, mask.width, 3), 0.5), "linear-rgb")
        variables = {
            "logits1": np.zeros((mask.height, mask.width, 3)),
            "logits2": np.zeros((mask.height, mask.width, 3)),
            "u1": prior_n.copy(),
            "u2": prior_n.copy(),
            "l1": lightsolve.estimate_light(i1, prior_a, NormalMap(prior_n), mask).lighting.coeffs,
            "l2": lightsolve.estimate_light(i2, prior_a, NormalMap(prior_n), mask).lighting.coeffs,
        }
    m_state = {k: np.zeros_like(a) for k, a in variables.items()}
    v_state = {k: np.zeros_like(a) for k, a in variables.items()}

    def decode():
        a1, sig1 = nn.sigmoid(variables["logits1"])
        a2, sig2 = nn.sigmoid(variables["logits2"])
        n1, safe1, live1 = _normalize_rows(variables["u1"])
        n2, safe2, live2 = _normalize_rows(variables["u2"])
        return (a1, sig1, n1, safe1, live1), (a2, sig2, n2, safe2, live2)

    trace = np.zeros(config.iterations)
    best = None  # (loss, terms, estimate); the returned iterate
    for it in range(config.iterations):
        (a1, sig1, n1, safe1, live1), (a2, sig2, n2, safe2, live2) = decode()
        loss, grads = pair_objective(a1, n1, variables["l1"], a2, n2, variables["l2"],
                                     i1.data, i2.data, mask.bits, w)
        if not np.isfinite(loss.total):
            raise OptimizationFailedError(
                f"objective became non-finite at iteration {it}",
                last_state={"estimate": best[2] if best else None, "trace": trace[:it]})
        trace[it] = loss.total
        if best is None or loss.total < best[0]:
            best = (loss.total, loss.terms,
                    _build_estimate(a1, n1, variables["l1"], a2, n2, variables["l2"]))

        steps = {
            "logits1": nn.sigmoid_backward(grads.d_albedo_1, sig1),
            "logits2": nn.sigmoid_backward(grads.d_albedo_2, sig2),
            "u1": _project_rows(grads.d_normals_1, n1, safe1, live1),
            "u2": _project_rows(grads.d_normals_2, n2, safe2, live2),
            "l1": grads.d_light_1,
            "l2": grads.d_light_2,
        }
        lr = config.lr_at(it)
        for key, grad in steps.items():
            nn.adam_update(variables[key], grad, m_state[key], v_state[key],
                           it + 1, lr, *config.betas, config.eps)

    (a1, _, n1, _, _), (a2, _, n2, _, _) = decode()
    final_loss, _ = pair_objective(a1, n1, variables["l1"], a2, n2, variables["l2"],
                                   i1.data, i2.data, mask.bits, w, want_grads=False)
    if final_loss.total < best[0]:
        best = (final_loss.total, final_loss.terms,
                _build_estimate(a1, n1, variables["l1"], a2, n2, variables["l2"]))
    return FitResult(estimate=best[2], trace=trace, final_terms=best[1])


def _build_estimate(a1, n1, l1, a2, n2, l2) -> PairEstimate:
    return PairEstimate(
        albedo_1=ImagePlane(a1.copy(), "linear-rgb"), normals_1=NormalMap(n1.copy()),
        light_1=sh.ShLighting(l1.copy()),
        albedo_2=ImagePlane(a2.copy(), "linear-rgb"), normals_2=NormalMap(n2.copy()),
        light_2=sh.ShLighting(l2.copy()))
