"""Completing a subsampled Poisson matrix.

Only 30% of the entries are observed.  The three estimators all work on the
zero-filled observation matrix rescaled by 1/p.
"""

from poisson_lowrank import (SamplingConfig, estimate_dantzig, estimate_rank_truncated,
                             estimate_regls, frobenius_norm, mask_adjoint, operator_norm,
                             sample_bernoulli_mask, sample_poisson, upper_bound)
from poisson_lowrank.bounds import matching_regime_check
from poisson_lowrank.sampling import random_lowrank_rates

m, n, r, p = 200, 150, 3, 0.3
M = random_lowrank_rates(m, n, r, lambda_max=20.0, seed=10)
mask = sample_bernoulli_mask(m, n, SamplingConfig(p, seed=11))
obs = sample_poisson(M, mask, seed=12)
print(f"observed {len(mask)} of {m * n} entries")

delta = operator_norm(mask_adjoint(obs) - p * M)
for name, res, bound in [
    ("dantzig", estimate_dantzig(obs, p, delta), upper_bound("dantzig", r, p, delta)),
    ("regls", estimate_regls(obs, p, 2 * p * delta), upper_bound("regls", r, p, 2 * p * delta)),
    ("rank_trunc", estimate_rank_truncated(obs, p, r), upper_bound("rank_trunc", r, p, delta)),
]:
    err = frobenius_norm(res.estimate - M)
    print(f"{name:>10}: error {err:8.1f}  bound {bound:8.1f}  rank {res.output_rank}")

print(f"relative error of rank truncation: "
      f"{frobenius_norm(estimate_rank_truncated(obs, p, r).estimate - M) / frobenius_norm(M):.3f}")

check = matching_regime_check(m, n, r, p, M.max())
print(f"sampling rate {p} vs threshold {check['threshold']:.3f}: {check['regime']}, "
      f"satisfied={check['satisfied']}")
