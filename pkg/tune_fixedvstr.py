"""Scratch: paired fixed-vs-trainable diagnosis. Not shipped."""
import numpy as np
from dataclasses import replace

from fsc.data import MixtureSpec, generate_mixture
from fsc.experiments import ExperimentConfig, with_seed
from fsc.train import train_model, evaluate

spec = MixtureSpec(class_separation=1.0, mode_separation=9.0, mode_stddev=1.0)
base = ExperimentConfig(mixture=spec)

rows = []
for seed in range(1, 11):
    cfg = with_seed(base, seed)
    tr, te = generate_mixture(cfg.mixture)
    accs = {}
    norms = {}
    for variant in ("fsc", "trainable_subcenter"):
        c = replace(cfg, train=replace(cfg.train, head_variant=variant, beta=0.0))
        res = train_model(c.train, tr)
        accs[variant] = evaluate(res.model, te).top1
        bank = res.model.bank()
        norms[variant] = float(np.linalg.norm(bank.w, axis=1).mean())
    diff = (accs["fsc"] - accs["trainable_subcenter"]) * 100
    rows.append(diff)
    print(
        f"seed {seed}: fixed={accs['fsc']:.4f} trainable={accs['trainable_subcenter']:.4f} "
        f"diff={diff:+.2f}pt | row-norm fixed={norms['fsc']:.2f} trainable={norms['trainable_subcenter']:.2f}",
        flush=True,
    )
print(f"mean diff {np.mean(rows):+.3f}pt  std {np.std(rows):.3f}")
