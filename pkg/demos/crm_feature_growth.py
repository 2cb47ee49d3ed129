"""How fast do features accumulate under a stable-Beta intensity?

Draw a few customers, look at the predictive law of the next one, and
compare the expected number of distinct features with a small simulation.
The discount ``sigma`` sets the power-law growth rate; small ``sigma``
approaches the logarithmic growth of the plain Beta process.

    python3 demos/crm_feature_growth.py
"""
import numpy as np

from featurelab import crm, harness, levy, suff_stats

lam = levy.stable_beta(alpha=2.0, c=1.0, sigma=0.5)
rng = np.random.default_rng(7)

alloc = crm.sample_allocation(rng, lam, 8)
print("first 8 customers (feature ids per customer):")
for i, row in enumerate(alloc.to_lists()):
    print(f"  {i}: {row}")

stats = suff_stats(alloc)
law = crm.predictive(lam, stats)
print(f"\nnext customer: Poisson({law.new_rate:.4f}) new features")
print("inclusion probabilities of existing features:",
      np.round(law.known_probs, 3).tolist())

# expected K_n against Monte Carlo, for two discounts
for sigma in (0.1, 0.5):
    lam_s = levy.stable_beta(2.0, 1.0, sigma)
    exact = [crm.expected_num_features(lam_s, n) for n in (10, 100, 1000)]
    print(f"\nsigma={sigma}: E[K_n] at n=10, 100, 1000 ->", np.round(exact, 2).tolist())

report = harness.growth_curve(lam, 50, 2000, seed=11)
print("\n" + report.to_text())
