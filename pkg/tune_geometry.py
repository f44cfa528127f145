"""Scratch: scan mixture geometries for the ablation ordering. Not shipped."""
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


def scan(combos, seeds=(1, 2, 3), epochs=None):
    for name, cs, ms, sd in combos:
        t0 = time.time()
        spec = MixtureSpec(class_separation=cs, mode_separation=ms, mode_stddev=sd)
        base = ExperimentConfig(mixture=spec)
        if epochs is not None:
            from dataclasses import replace

            base = replace(base, train=replace(base.train, epochs=epochs))
        knns = []
        for seed in seeds:
            m = with_seed(base, seed).mixture
            tr, te = generate_mixture(m)
            knns.append(knn1(tr, te))
        res = run_ablation(base, seeds=seeds)
        v = {s.label: s.mean_top1 for s in res}
        gap = (v["fsc"] - v["softmax"]) * 100
        fxtr = (v["subcenter_fixed"] - v["subcenter_trainable"]) * 100
        fsfx = (v["fsc"] - v["subcenter_fixed"]) * 100
        print(
            f"{name} cs={cs} ms={ms} sd={sd} knn1={np.mean(knns):.4f} | "
            f"sm={v['softmax']:.4f} tr={v['subcenter_trainable']:.4f} "
            f"tr+c={v['subcenter_trainable+compact']:.4f} fx={v['subcenter_fixed']:.4f} "
            f"fsc={v['fsc']:.4f} | gap={gap:+.2f} fx-tr={fxtr:+.2f} fsc-fx={fsfx:+.2f} "
            f"({round(time.time() - t0)}s)",
            flush=True,
        )


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "p"
    if which == "p":
        scan(
            [
                ("P1", 0.5, 9.0, 0.85),
                ("P2", 0.25, 9.0, 0.9),
                ("P3", 0.75, 9.0, 0.85),
                ("P4", 0.5, 10.0, 0.9),
            ]
        )
