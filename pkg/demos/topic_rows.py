"""Word frequencies per document, one multinomial draw per row.

Rows of P are document-specific word distributions mixing two topics.
Document i contributes N_i words.  The estimator thresholds the singular
values of D^{-1/2} X and projects each row back onto the simplex.
"""

import numpy as np

from poisson_lowrank import RowMultinomialModel, estimate_row_multinomial, sample_row_multinomial
from poisson_lowrank.bounds import delta_row_multinomial
from poisson_lowrank.sampling import random_row_stochastic

docs, vocab, topics = 80, 60, 2
P = random_row_stochastic(docs, vocab, topics, seed=4)
lengths = np.random.default_rng(0).integers(100, 400, size=docs)
X = sample_row_multinomial(RowMultinomialModel(P, lengths), seed=5)

root = np.sqrt(lengths)[:, None]
mle = X / lengths[:, None]
delta = delta_row_multinomial(P.sum(axis=0).max(), lengths.min(), docs, vocab, 0.1)
res = estimate_row_multinomial(X, lengths, delta, project=["row_simplex"])

weighted = lambda A: np.linalg.norm(root * (A - P))
print(f"radius delta = {delta:.2f}")
print(f"weighted squared error: MLE {weighted(mle) ** 2:.1f} "
      f"(expected {np.sum(P * (1 - P)):.1f}), low-rank {weighted(res.estimate) ** 2:.1f}")
print(f"guarantee 4 sqrt(2r) delta = {4 * np.sqrt(2 * topics) * delta:.1f}")
print(f"rows sum to one: {np.allclose(res.estimate.sum(axis=1), 1.0)}")
