"""Quick de-risking probe for the relit-vs-no-relit ablation (not shipped)."""
import sys
import tempfile
import time

import numpy as np

from relightkit import metrics, model, synthgen, train

n_scenes = int(sys.argv[1]) if len(sys.argv) > 1 else 16
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 600
lr = float(sys.argv[3]) if len(sys.argv) > 3 else 1e-3

t0 = time.time()
with tempfile.TemporaryDirectory() as d:
    synthgen.generate_dataset(n_scenes, 5, d + "/train", seed=10, size=64)
    synthgen.generate_dataset(8, 5, d + "/eval", seed=77, size=64)
    train_samples, _ = synthgen.load_dataset(d + "/train")
    eval_samples, _ = synthgen.load_dataset(d + "/eval")
    print(f"data gen: {time.time()-t0:.1f}s", flush=True)

    results = {}
    for use_relit in (True, False):
        cfg = train.TrainConfig(supervision="light-only", use_relit=use_relit,
                                steps=steps, batch_size=4, seed=0, lr=lr,
                                pair_mode="all")
        t1 = time.time()
        params, logs = train.train(train_samples, cfg)
        print(f"relit={use_relit}: trained {steps} steps in {time.time()-t1:.0f}s; "
              f"loss {logs[0]['total']:.2f} -> {logs[-1]['total']:.2f} "
              f"(rec {logs[-1]['rec']:.2f} relit {logs[-1]['relit']:.2f} light {logs[-1]['light']:.3f})",
              flush=True)

        def decompose(img, mask, params=params):
            return model.decompose_single(params, img, mask)

        def med_ang(split):
            angles = []
            for s in split:
                for img in s.images[:2]:
                    _, nrm, _ = decompose(img, s.mask)
                    dots = np.clip((nrm.data[s.mask.bits] * s.normals.data[s.mask.bits]).sum(-1), -1, 1)
                    angles.append(np.degrees(np.arccos(dots)))
            return float(np.median(np.concatenate(angles)))

        ang_eval = med_ang(eval_samples)
        ang_train = med_ang(train_samples[:16])
        report, _ = metrics.evaluate_relight(decompose, eval_samples, angular=False)
        rep_tr, _ = metrics.evaluate_relight(decompose, train_samples[:16], angular=False)
        results[use_relit] = (ang_eval, report.l1_relit, ang_train, rep_tr.l1_relit)
        print(f"  EVAL  median angular: {ang_eval:.2f} | relit L1: {report.l1_relit:.2f} | recon L1 {report.l1_recon:.2f}", flush=True)
        print(f"  TRAIN median angular: {ang_train:.2f} | relit L1: {rep_tr.l1_relit:.2f} | recon L1 {rep_tr.l1_recon:.2f}", flush=True)

    m_t, m_f = results[True], results[False]
    print(f"EVAL  RATIOS with/without: angular {m_t[0]/m_f[0]:.3f}  relitL1 {m_t[1]/m_f[1]:.3f}", flush=True)
    print(f"TRAIN RATIOS with/without: angular {m_t[2]/m_f[2]:.3f}  relitL1 {m_t[3]/m_f[3]:.3f}", flush=True)
