"""Denoising a fully observed Poisson count matrix.

Every entry of a rank-2 rate matrix is observed once.  The raw counts are
the maximum likelihood estimate; shrinking or truncating their singular
values removes most of the noise.
"""

import numpy as np

from poisson_lowrank import (BoundConfig, MaskedObservations, bound_report, estimate_dantzig,
                             estimate_rank_truncated, frobenius_norm, mask_adjoint,
                             operator_norm, sample_poisson)
from poisson_lowrank.linalg import Mask
from poisson_lowrank.sampling import random_lowrank_rates

m, n, r = 120, 80, 2
M = random_lowrank_rates(m, n, r, lambda_max=15.0, seed=1)
obs = sample_poisson(M, Mask.full(m, n), seed=2)
X = mask_adjoint(obs)

# the raw counts: expected squared error is the total rate
print(f"MLE squared error       {frobenius_norm(X - M) ** 2:10.1f}   (expected {M.sum():.1f})")

# keep the two leading singular values
trunc = estimate_rank_truncated(obs, 1.0, r)
print(f"rank-{r} squared error    {frobenius_norm(trunc.estimate - M) ** 2:10.1f}")

# soft thresholding at the realized noise level
noise = operator_norm(X - M)
dz = estimate_dantzig(obs, 1.0, noise, project=["nonnegative"])
print(f"soft-threshold error    {frobenius_norm(dz.estimate - M) ** 2:10.1f}   "
      f"(output rank {dz.output_rank})")

# the bounds these runs must respect
rep = bound_report(M, 1.0, BoundConfig(C=1e-3), r=r)
print(f"noise norm {noise:.1f} vs high-probability radius {rep.A_value:.1f}")
print(f"error bound at the radius: {rep.ub_rank_trunc:.1f} (rank truncation)")
