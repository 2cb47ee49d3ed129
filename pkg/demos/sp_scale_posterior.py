"""What do the data say about the scale of a scaled process?

For a stable intensity the scale posterior depends on the data only through
the number of customers and the number of features.  For the log intensity
with a uniform prior it does not move at all.  A gamma intensity is shown as
a control where the feature counts matter.

    python3 demos/sp_scale_posterior.py
"""
import numpy as np

from featurelab import levy, sp
from featurelab.alloc import SuffStats


def summary(post):
    w = post.density * np.gradient(post.grid)
    mean = float(np.sum(w * post.grid) / np.sum(w))
    return f"posterior mean {mean:.4f}"


prior = sp.exponential_prior(1.0)
configs = [SuffStats(6, (3, 1)), SuffStats(6, (1, 1)), SuffStats(6, (2, 2, 1))]

for name, lam in [("stable(0.5)", levy.stable(0.5)), ("gamma(1)", levy.gamma(1.0))]:
    model = sp.SPModel(lam, prior)
    print(f"{name} intensity, exponential prior:")
    for st in configs:
        post = sp.psi_posterior(model, st)
        print(f"  n={st.n} m={list(st.m)}: {summary(post)}")

flat = sp.SPModel(levy.log_intensity(1.0, 2.0), sp.uniform_prior(0.0, 2.0))
print("log intensity, uniform prior on (0, 2):")
for st in configs:
    print(f"  n={st.n} m={list(st.m)}: {summary(sp.psi_posterior(flat, st))}")

model = sp.SPModel(levy.stable(0.5), prior)
mp = sp.marginal_predictive(model, configs[0])
print("\nnext customer under stable(0.5), scale integrated out:")
print("  P(Y_new = y), y = 0..5:", np.round(mp.new_pmf[:6], 4).tolist())
print("  mean inclusions of known features:", np.round(mp.known_means, 4).tolist())
