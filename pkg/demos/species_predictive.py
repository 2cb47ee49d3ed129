"""Gibbs-type species sampling: Dirichlet against Pitman-Yor.

A positive discount makes new species keep appearing at a power-law rate,
while the Dirichlet process opens new blocks only logarithmically often.

    python3 demos/species_predictive.py
"""
import numpy as np

from featurelab import species

models = {"dirichlet(1)": species.dirichlet(1.0),
          "pitman-yor(0.5, 1)": species.pitman_yor(0.5, 1.0)}

for name, model in models.items():
    rng = np.random.default_rng(3)
    part = species.sample_partition(rng, model, 500)
    pred = species.gibbs_predictive(model, part)
    print(f"{name}: {part.k} blocks among 500 draws, "
          f"largest {sorted(part.blocks, reverse=True)[:5]}, P(new) = {pred.p_new:.4f}")

# the sequential law is exchangeable: reordering labels leaves it unchanged
py = models["pitman-yor(0.5, 1)"]
seq = [0, 0, 1, 0, 2, 1]
print("\nlog P(seq) =", species.eppf_log_prob(py, seq))
print("log P(reversed) =", species.eppf_log_prob(py, seq[::-1]))
