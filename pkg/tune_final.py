"""Scratch: evaluate acceptance-criterion quantities on candidate geometries."""
import sys
import time

import numpy as np

from fsc.data import MixtureSpec, generate_mixture
from fsc.experiments import ExperimentConfig, run_ablation, with_seed


def knn1(train, test):
    sq_tr = np.sum(train.inputs**2, 1)
    d = sq_tr[None, :] - 2 * test.inputs @ train.inputs.T
    nn = np.argmin(d, 1)
    return float(np.mean(train.labels[nn] == test.labels))


def check(name, cs, ms, sd, seeds=(1, 2, 3, 4, 5)):
    t0 = time.time()
    spec = MixtureSpec(class_separation=cs, mode_separation=ms, mode_stddev=sd)
    base = ExperimentConfig(mixture=spec)
    knns = [knn1(*generate_mixture(with_seed(base, s).mixture)) for s in seeds]
    res = run_ablation(base, seeds=seeds)
    v = {s.label: s for s in res}
    sm, tr = v["softmax"], v["subcenter_trainable"]
    trc, fx, fsc = v["subcenter_trainable+compact"], v["subcenter_fixed"], v["fsc"]
    gap = (fsc.mean_top1 - sm.mean_top1) * 100
    chain = fsc.mean_top1 >= fx.mean_top1 >= tr.mean_top1
    # criterion-6 style: within-subclass variance lower with beta in >= 4/5 seeds
    wv_wins = sum(1 for a, b in zip(fsc.within_variance, fx.within_variance) if a < b)
    print(f"{name} cs={cs} ms={ms} sd={sd} | knn1 min={min(knns):.4f}")
    for s in res:
        print(f"    {s.label:30s} mean={s.mean_top1:.4f} per-seed={[round(t, 4) for t in s.top1]}")
    print(
        f"    gap={gap:+.2f}pt (need >= 1.0)  chain fsc>=fx>=tr: {chain}  "
        f"fsc-var<fx-var in {wv_wins}/5 seeds (need >= 4)  [{round(time.time() - t0)}s]",
        flush=True,
    )


if __name__ == "__main__":
    for arg in sys.argv[1:]:
        name, cs, ms, sd = arg.split(":")
        check(name, float(cs), float(ms), float(sd))
