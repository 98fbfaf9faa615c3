"""Build the action-labeled offline dataset: repairs, rewards, returns-to-go.

Random repairs give the classifier both action classes; reward labels price
every cycle, repair, and failure; the horizon-limited return-to-go channel is
what the policy later conditions on.
"""

import numpy as np

from rulrl.labeling import (
    Action,
    CostModel,
    Terminal,
    assign_rewards,
    build_training_set,
    compute_rtg,
    inject_repairs,
)
from rulrl.regime_norm import fit_regimes, normalize
from rulrl.trajdata import SynthConfig, synth_generate

fleet = synth_generate(SynthConfig(n_units=60, seed=3))
norm = fit_regimes(fleet, k=6, seed=0)
fleet = [normalize(t, norm) for t in fleet]
cost = CostModel(seed=1)

episodes = [inject_repairs(t, repair_prob=0.02, rng_seed=5)[0] for t in fleet]
by_terminal = {t: sum(ep.terminal == t for ep in episodes) for t in Terminal}
print(f"{len(episodes)} episodes from {len(fleet)} trajectories:")
for terminal, count in by_terminal.items():
    if count:
        print(f"  {terminal.value:14s} {count}")

ep = next(e for e in episodes if e.terminal == Terminal.REPAIRED)
ep = assign_rewards(ep, cost)
rtg = compute_rtg(ep.rewards, horizon=150)
print(f"\na repaired episode (unit {ep.unit_id}, {len(ep)} steps):")
print(f"  final-step reward {ep.rewards[-1]:8.2f}   (profit minus repair cost)")
print(f"  return-to-go head {rtg[0]:8.2f}   (equals the episode total here)")
print(f"  return-to-go tail {rtg[-1]:8.2f}")

samples, meta = build_training_set(
    fleet, cost, repair_prob=0.02, window=10, horizon=150, injection_seed=5, with_rul=True
)
n_repair = sum(s.label == Action.REPAIR for s in samples)
print(f"\ndataset: {meta.n_samples} samples, {n_repair} repair labels "
      f"({100 * n_repair / meta.n_samples:.1f}%)")
print(f"return-to-go support: [{meta.rtg_min:.1f}, {meta.rtg_max:.1f}]")
s = samples[0]
print(f"window shapes: obs {s.obs_window.shape}, actions {s.action_window.shape}, "
      f"rtg {s.rtg_window.shape}, rul {s.rul}")
