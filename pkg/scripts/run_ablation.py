#!/usr/bin/env python3
"""Cross-relighting ablation at configurable scale.

Trains the compact decomposer twice on the same synthetic multi-lit dataset
under light-only supervision, once with and once without the cross-relighting
term, then compares median normal angular error and relit L1 on a held-out
split. The acceptance suite runs the same experiment at its pinned scale;
this script exists for exploring other scales and inspecting the outputs.

Usage:
    python scripts/run_ablation.py --scenes 64 --steps 6000 --out ablation.json
"""

import argparse
import json
import sys
import tempfile
import time

import numpy as np

from relightkit import metrics, model, synthgen, train


def median_angular(params, samples):
    angles = []
    for s in samples:
        for img in s.images[:2]:
            _, normals, _ = model.decompose_single(params, img, s.mask)
            n = normals.data[s.mask.bits]
            n = n / np.linalg.norm(n, axis=-1, keepdims=True)
            dots = np.clip((n * s.normals.data[s.mask.bits]).sum(-1), -1.0, 1.0)
            angles.append(np.degrees(np.arccos(dots)))
    return float(np.median(np.concatenate(angles)))


def run(n_scenes, n_eval, k, size, steps, batch, lr, seed, pair_mode):
    with tempfile.TemporaryDirectory() as tmp:
        print(f"generating {n_scenes} train + {n_eval} eval scenes "
              f"(K={k}, {size}x{size})", flush=True)
        lighting = {"direction_strength": (0.35, 0.85), "tilt_max_deg": 70.0}
        synthgen.generate_dataset(n_scenes, k, tmp + "/train", seed=seed, size=size,
                                  lighting_params=lighting)
        synthgen.generate_dataset(n_eval, k, tmp + "/eval", seed=seed + 1, size=size,
                                  lighting_params=lighting)
        train_samples, _ = synthgen.load_dataset(tmp + "/train")
        eval_samples, _ = synthgen.load_dataset(tmp + "/eval")

        results = {}
        for use_relit in (True, False):
            label = "with-relit" if use_relit else "without-relit"
            cfg = train.TrainConfig(supervision="light-only", use_relit=use_relit,
                                    steps=steps, batch_size=batch, seed=seed,
                                    lr=lr, pair_mode=pair_mode)
            t0 = time.monotonic()
            params, logs = train.train(train_samples, cfg)
            minutes = (time.monotonic() - t0) / 60

            def decomposer(image, mask, params=params):
                return model.decompose_single(params, image, mask)

            med = median_angular(params, eval_samples)
            rep, _ = metrics.evaluate_relight(decomposer, eval_samples, angular=False)
            results[label] = {
                "median_angular_deg": med,
                "l1_relit": rep.l1_relit,
                "l1_recon": rep.l1_recon,
                "l2_relit": rep.l2_relit,
                "ssim_relit": rep.ssim_relit,
                "final_loss": logs[-1]["total"],
                "train_minutes": minutes,
            }
            print(f"{label}: median angular {med:.1f} deg, relit L1 "
                  f"{rep.l1_relit:.2f}, recon L1 {rep.l1_recon:.2f} "
                  f"({minutes:.1f} min)", flush=True)

        w, wo = results["with-relit"], results["without-relit"]
        results["ratios"] = {
            "median_angular": w["median_angular_deg"] / wo["median_angular_deg"],
            "l1_relit": w["l1_relit"] / wo["l1_relit"],
        }
        print(f"ratios with/without: angular "
              f"{results['ratios']['median_angular']:.3f}, relit L1 "
              f"{results['ratios']['l1_relit']:.3f}")
        return results


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenes", type=int, default=64)
    p.add_argument("--eval-scenes", type=int, default=16)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--steps", type=int, default=6000)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--pairs", choices=["all", "anchored"], default="all")
    p.add_argument("--out", help="write results JSON here")
    args = p.parse_args(argv)

    results = run(args.scenes, args.eval_scenes, args.k, args.size, args.steps,
                  args.batch, args.lr, args.seed, args.pairs)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(results, f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
