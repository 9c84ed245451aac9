"""Why the complementary loss needs a gradient-ascent correction.

The unbiased rewrite of the classification risk is a difference of terms, so
its empirical value can go negative -- and an expressive network will happily
drive it to minus infinity by overfitting the complementary labels.  The fix:
whenever any per-class component of the loss goes negative, take a gradient
ASCENT step on the sum of the negative parts instead of descending on the
total.

This script overfits a deliberately tiny dataset twice, with the correction
on and off, and prints both loss trajectories.
"""

import numpy as np

from clarinet.data import SyntheticPairConfig, make_synthetic_pair
from clarinet.train import TrainConfig, train_gac

cfg = SyntheticPairConfig(K=4, n_per_domain=40, spread=0.2, rotation_deg=0.0,
                          seed=3)
src, _ = make_synthetic_pair(cfg)
source = src.to_complementary(np.random.default_rng(3))
print("Tiny dataset: %d samples, 4 classes, full-batch updates, lr 0.1." % len(source))


def run(correction):
    config = TrainConfig(K=4, t_max=80, t_s=80, gamma1=0.1, batch_size=40,
                         seed=3, hidden=32, d_g=16,
                         correction_enabled=correction)
    return train_gac(source, config)


print("\n%-8s %-22s %-22s" % ("epoch", "with correction", "without correction"))
with_c = run(True)
without_c = run(False)
for e in (1, 10, 20, 40, 60, 80):
    a, b = with_c.records[e - 1], without_c.records[e - 1]
    print("%-8d %-22.4f %-22.4f" % (e, a.comp_loss, b.comp_loss))

ascents = sum(r.ascent_steps for r in with_c.records)
print("\nCorrected run: %d ascent steps fired; loss floor %.2f (stays bounded)."
      % (ascents, min(r.comp_loss for r in with_c.records)))
print("Uncorrected run: loss floor %.2f (diverges toward -inf)."
      % min(r.comp_loss for r in without_c.records))
