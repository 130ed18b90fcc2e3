"""The block-matrix families behind the minimax lower bounds.

A Fano family packs rank-r block matrices whose rows take one of two
levels close to lambda_max / 2.  An Assouad family uses levels 0 and
lambda_max on short blocks, so a row is often unobserved altogether.
"""

from poisson_lowrank import BlockFamilyConfig, assouad_family, fano_family
from poisson_lowrank.bench import minimax_family_sweep

fcfg = BlockFamilyConfig(r=2, k=20, l=5, lambda_max=8.0, p=0.5)
fano = fano_family(fcfg, seed=3)
print(f"fano: {len(fano)} members of shape {fano.matrix(0).shape}, "
      f"separation {fano.separation():.2f}, KL budget {fano.kl_bound:.2f}")
print(f"  all members in class: {fano.validate()}")

sweep = minimax_family_sweep(fano, {"kind": "rank_trunc", "rank_budget": 2}, members=30, seed=1)
print(f"  rank truncation worst error {sweep['max_error']:.2f} "
      f"vs lower-bound radius {sweep['lb_radius']:.2f} ({sweep['label']})")

acfg = BlockFamilyConfig(r=1, k=6, l=6, lambda_max=4.0, p=0.2, mode="assouad")
assouad = assouad_family(acfg)
print(f"assouad: {len(assouad)} members, block width {assouad.width}, "
      f"row unobserved w.p. {assouad.missing_row_probability:.2f}")
sweep = minimax_family_sweep(assouad, {"kind": "rank_trunc", "rank_budget": 1},
                             members=40, trials_per_member=2, seed=2)
print(f"  mean squared error {sweep['mean_squared_error']:.1f} "
      f"vs lower bound {sweep['lb_squared']:.1f}")
