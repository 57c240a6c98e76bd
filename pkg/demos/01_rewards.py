"""How loss traces become client weights.

Three clients train for four local steps. Two of them see similar data and
produce similar losses; the third is an outlier. Rewards are Gaussian in
the per-step z-score of a client's loss against the cohort, so the outlier
collects less reward and its running weight falls behind.
"""

import numpy as np

from fedgwc.rewards import GaussianWeightState, LossTrace, cohort_rewards, compute_round_stats, gaussian_rewards, update_weight

traces = [
    LossTrace("a", [2.30, 1.90, 1.60, 1.40]),
    LossTrace("b", [2.25, 1.95, 1.55, 1.45]),
    LossTrace("c", [2.30, 2.20, 2.15, 2.10]),  # barely learns
]

stats = compute_round_stats(traces)
print("per-step cohort mean:", np.round(stats.mean, 3))
print("per-step cohort std: ", np.round(stats.std, 3))

for t in traces:
    print(f"client {t.client_id}: rewards {np.round(gaussian_rewards(t, stats), 3)}")

omegas = cohort_rewards(traces)
print("round rewards:", {k: round(v, 3) for k, v in omegas.items()})

# the same round repeated: weights approach the round reward geometrically
state = GaussianWeightState()
for _ in range(30):
    for k, w in omegas.items():
        update_weight(state, k, w, alpha=0.1)
print("weights after 30 rounds:", {k: round(v, 3) for k, v in state.gamma.items()})
