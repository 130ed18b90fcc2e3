"""Low-rank estimation of nonnegative matrices from Poisson and multinomial counts.

Submodules
----------
linalg
    norms, SVD, observation masks and the sampling operator.
sampling
    seeded Bernoulli masks, Poisson and multinomial draws.
estimators
    singular value thresholding estimators and projections.
bounds
    concentration radii, error bounds and minimax rates.
constructions
    packing sets and hard-instance matrix families.
bench
    Monte Carlo campaigns with reproducible reports.
io, cli
    file formats and the ``poisson-lowrank`` command.
"""

from .bench import CampaignReport, Scenario, mle_risk_reference, run_campaign, run_trial
from .bounds import (BoundConfig, BoundReport, bound_report, calibrate_C, opnorm_bound_A,
                     poisson_kl, poisson_tail_bound, sigma_tilde, upper_bound)
from .constructions import (BlockFamilyConfig, PackingFailure, PackingSet, assouad_family,
                            fano_family, gv_packing)
from .estimators import (EstimateResult, EstimatorParams, estimate, estimate_dantzig,
                         estimate_multinomial_matrix, estimate_rank_truncated, estimate_regls,
                         estimate_row_multinomial, reference_solver_dantzig, svt)
from .linalg import (Mask, MaskedObservations, NumericalError, apply_mask, frobenius_norm,
                     mask_adjoint, nuclear_norm, operator_norm, svd)
from .sampling import (RowMultinomialModel, SamplingConfig, sample_bernoulli_mask,
                       sample_matrix_multinomial, sample_poisson, sample_row_multinomial)

__version__ = "0.1.0"
