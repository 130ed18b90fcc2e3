"""Hard instances behind the minimax lower bounds.

Both families are built from block matrices ``M_theta``: with ``m = r k``
rows split into ``r`` groups of ``k``, row ``i`` of group ``q`` carries the
value ``lambda_{theta_i}`` on the ``q``-th block of ``l`` columns and zero
elsewhere, so ``rank(M_theta) <= r``.

The constructions assume ``k >= l``.  When a configuration has ``k < l`` the
matrices are built in the tall orientation (``r max(k, l)`` rows) and
transposed on output; ``theta`` always indexes rows of the tall orientation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _random
from .bounds import poisson_kl
from .linalg import as_matrix, svd

__all__ = [
    "BlockFamilyConfig",
    "PackingSet",
    "PackingFailure",
    "block_matrix",
    "in_variance_class",
    "in_squared_class",
    "FanoFamily",
    "AssouadFamily",
    "fano_family",
    "assouad_family",
    "gv_packing",
]


@dataclass(frozen=True)
class BlockFamilyConfig:
    r: int
    k: int
    l: int
    lambda_max: float
    p: float
    mode: str = "fano"

    def __post_init__(self):
        if min(self.r, self.k, self.l) < 1:
            raise ValueError("r, k, l must be positive integers")
        if self.lambda_max <= 0 or not 0 < self.p <= 1:
            raise ValueError("need lambda_max > 0 and p in (0, 1]")
        if self.mode == "fano":
            if self.lambda_max < 1.0 / (8.0 * self.block_width * self.p):
                raise ValueError(
                    f"fano family needs lambda_max >= 1/(8 l p) = "
                    f"{1.0 / (8.0 * self.block_width * self.p):g}")
        elif self.mode == "assouad":
            if self.p < 1.0 / (2.0 * min(self.k, self.l)):
                raise ValueError(
                    f"assouad family needs p >= 1/(2 min(k, l)) = {1.0 / (2.0 * min(self.k, self.l)):g}")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def shape(self):
        return (self.r * self.k, self.r * self.l)

    @property
    def transposed(self) -> bool:
        return self.k < self.l

    @property
    def group_size(self) -> int:
        """Rows per group in the tall orientation."""
        return max(self.k, self.l)

    @property
    def block_width(self) -> int:
        """Columns per block in the tall orientation."""
        return min(self.k, self.l)

    @property
    def theta_length(self) -> int:
        return self.r * self.group_size


def block_matrix(theta, cfg: BlockFamilyConfig, lambda0: float, lambda1: float,
                 width: int | None = None) -> np.ndarray:
    """Block matrix ``M_theta`` in the configured ``(r k) x (r l)`` shape.

    `width` fills only the first `width` columns of each block (used by the
    Assouad reduction); the default fills the whole block.
    """
    theta = np.asarray(theta).astype(np.int64).ravel()
    if theta.size != cfg.theta_length:
        raise ValueError(f"theta must have length {cfg.theta_length}, got {theta.size}")
    if np.any((theta != 0) & (theta != 1)):
        raise ValueError("theta must be a 0/1 vector")
    kk, ll = cfg.group_size, cfg.block_width
    w = ll if width is None else int(width)
    if not 1 <= w <= ll:
        raise ValueError(f"width must lie in [1, {ll}]")
    M = np.zeros((cfg.r * kk, cfg.r * ll))
    values = np.where(theta == 1, lambda1, lambda0)
    for q in range(cfg.r):
        M[q * kk:(q + 1) * kk, q * ll:q * ll + w] = values[q * kk:(q + 1) * kk, None]
    return M.T if cfg.transposed else M


def _in_class(M, r, lambda_max, sigma, squared, tol=1e-9):
    M = as_matrix(M)
    if M.min() < -tol * lambda_max or M.max() > lambda_max * (1 + tol):
        return False
    if svd(M).rank(1e-10) > r:
        return False
    V = M * M if squared else M
    stat = math.sqrt(V.sum(axis=1).max()) + math.sqrt(V.sum(axis=0).max())
    return stat <= 2.0 * sigma * (1 + tol)


def in_variance_class(M, r, lambda_max, sigma1) -> bool:
    """Entries in [0, lambda_max], rank <= r, root max row + root max column sum <= 2 sigma_1."""
    return _in_class(M, r, lambda_max, sigma1, squared=False)


def in_squared_class(M, r, lambda_max, sigma2) -> bool:
    """As :func:`in_variance_class` with squared entries and sigma_2."""
    return _in_class(M, r, lambda_max, sigma2, squared=True)


class PackingFailure(RuntimeError):
    """Attempt budget ran out before the target number of codewords."""

    def __init__(self, message, achieved):
        super().__init__(message)
        self.achieved = achieved


@dataclass
class PackingSet:
    """Binary codewords of length `m` with pairwise Hamming distance >= `min_dist`."""

    m: int
    min_dist: int
    codewords: np.ndarray  # (count, m) uint8

    def __len__(self):
        return int(self.codewords.shape[0])

    def _packed(self):
        return _pack_bits(self.codewords)

    def distances(self) -> np.ndarray:
        """Full pairwise Hamming distance matrix."""
        packed = self._packed()
        D = np.zeros((len(self), len(self)), dtype=np.int64)
        for i in range(len(self)):
            D[i] = np.bitwise_count(packed ^ packed[i]).sum(axis=1)
        return D

    def audit(self) -> bool:
        """Exhaustive pairwise check of the minimum-distance invariant."""
        packed = self._packed()
        for i in range(len(self) - 1):
            d = np.bitwise_count(packed[i + 1:] ^ packed[i]).sum(axis=1)
            if d.size and d.min() < self.min_dist:
                return False
        return True

    def to_hex(self) -> list:
        width = (self.m + 3) // 4
        out = []
        for word in self.codewords:
            value = int("".join(map(str, word.tolist())), 2)
            out.append(format(value, f"0{width}x"))
        return out

    @classmethod
    def from_hex(cls, m, min_dist, lines):
        rows = []
        for line in lines:
            value = int(line, 16)
            if value >> m:
                raise ValueError(f"codeword {line!r} exceeds {m} bits")
            rows.append([int(b) for b in format(value, f"0{m}b")])
        return cls(m, min_dist, np.asarray(rows, dtype=np.uint8).reshape(-1, m))


def _pack_bits(bits):
    bits = np.asarray(bits, dtype=np.uint64)
    count, m = bits.shape
    words = (m + 63) // 64
    padded = np.zeros((count, words * 64), dtype=np.uint64)
    padded[:, :m] = bits
    weights = np.uint64(1) << np.arange(64, dtype=np.uint64)
    return (padded.reshape(count, words, 64) * weights).sum(axis=2, dtype=np.uint64)


def _unpack_bits(packed, m):
    shifts = np.arange(64, dtype=np.uint64)
    bits = (packed[:, :, None] >> shifts) & np.uint64(1)
    return bits.reshape(packed.shape[0], -1)[:, :m].astype(np.uint8)


def gv_packing(m: int, min_dist: int, target_count: int, seed=0,
               budget: int = 10 ** 7, batch: int = 4096) -> PackingSet:
    """Randomized greedy Gilbert--Varshamov packing.

    Uniform random words are accepted when they are at distance at least
    `min_dist` from every accepted word, until `target_count` words are
    found.  Raises :class:`PackingFailure` (with ``achieved``) once `budget`
    candidates have been tried.
    """
    if m < 1 or min_dist < 0 or min_dist > m / 2 or target_count < 1:
        raise ValueError("need m >= 1, 0 <= min_dist <= m/2, target_count >= 1")
    words = (m + 63) // 64
    tail_mask = np.full(words, np.uint64(2 ** 64 - 1))
    if m % 64:
        tail_mask[-1] = np.uint64((1 << (m % 64)) - 1)
    key = _random.mix_words(int(seed), 0x9ac)
    accepted = np.zeros((target_count, words), dtype=np.uint64)
    count = 0
    tried = 0
    while count < target_count and tried < budget:
        size = min(batch, budget - tried)
        idx = np.arange(tried, tried + size, dtype=np.uint64)
        states = _random.cell_states(key, idx)
        with np.errstate(over="ignore"):
            cand = np.stack([_random._mix64(states + np.uint64(w + 1) * _random._GOLDEN)
                             for w in range(words)], axis=1) & tail_mask
        tried += size
        if count:
            far = np.ones(size, dtype=bool)
            for start in range(0, count, 512):
                block = accepted[start:min(count, start + 512)]
                d = np.bitwise_count(cand[:, None, :] ^ block[None, :, :]).sum(axis=2)
                far &= d.min(axis=1) >= min_dist
            cand = cand[far]
        for c in cand:
            if count == target_count:
                break
            if count and np.bitwise_count(accepted[:count] ^ c).sum(axis=1).min() < min_dist:
                continue
            accepted[count] = c
            count += 1
    packing = PackingSet(m, min_dist, _unpack_bits(accepted[:count], m))
    if count < target_count:
        raise PackingFailure(
            f"found {count} of {target_count} codewords in {tried} attempts", packing)
    return packing


@dataclass
class FanoFamily:
    """Block matrices over a packing set, with the construction parameters.

    ``delta`` is the half-gap between the two row levels and
    ``lambda0 = lambda_max / 2 - delta``, ``lambda1 = lambda_max / 2 + delta``.
    """

    cfg: BlockFamilyConfig
    packing: PackingSet
    delta: float
    lambda0: float
    lambda1: float
    sigma1: float
    kl_bound: float
    notes: list = field(default_factory=list)

    def __len__(self):
        return len(self.packing)

    def matrix(self, i: int) -> np.ndarray:
        return block_matrix(self.packing.codewords[i], self.cfg, self.lambda0, self.lambda1)

    def matrices(self):
        for i in range(len(self)):
            yield self.matrix(i)

    def kl_to_reference(self, i: int) -> float:
        """Exact KL from member `i`'s observation law to the all-``lambda_max/2`` law."""
        theta = self.packing.codewords[i]
        mid = self.cfg.lambda_max / 2.0
        per_row = np.array([poisson_kl(self.lambda1 if t else self.lambda0, mid) for t in theta])
        return float(self.cfg.p * self.cfg.block_width * per_row.sum())

    def separation(self) -> float:
        """Guaranteed pairwise Frobenius separation ``sqrt(m l) delta``."""
        return math.sqrt(self.cfg.theta_length * self.cfg.block_width) * self.delta

    def validate(self) -> bool:
        return all(in_variance_class(M, self.cfg.r, self.cfg.lambda_max, self.sigma1)
                   for M in self.matrices())


def fano_family(cfg: BlockFamilyConfig, count: int | None = None, seed=0,
                budget: int = 10 ** 7) -> FanoFamily:
    """Fano-method family over a packing with distance ``>= m/4``.

    The packing targets ``ceil(exp(m/8))`` codewords, or `count` if given.
    For ``m < 32`` the exponential floor is not asserted and the achieved
    size is recorded in ``notes``.
    """
    if cfg.mode != "fano":
        raise ValueError("configuration mode must be 'fano'")
    m = cfg.theta_length
    ll = cfg.block_width
    lam = cfg.lambda_max
    delta = math.sqrt(lam / (32.0 * ll * cfg.p))
    target = math.ceil(math.exp(m / 8.0)) if count is None else int(count)
    notes = []
    try:
        packing = gv_packing(m, math.ceil(m / 4), target, seed, budget)
    except PackingFailure as exc:
        if m >= 32 and count is None:
            raise
        packing = exc.achieved
        notes.append(f"packing reached {len(packing)} of {target} codewords")
    if m < 32:
        notes.append(f"m = {m} < 32: exp(m/8) size floor not asserted ({len(packing)} codewords)")
    return FanoFamily(
        cfg=cfg, packing=packing, delta=delta,
        lambda0=lam / 2.0 - delta, lambda1=lam / 2.0 + delta,
        sigma1=math.sqrt(cfg.group_size * lam),
        kl_bound=m * ll * cfg.p * 2.0 * delta ** 2 / lam,
        notes=notes,
    )


@dataclass
class AssouadFamily:
    """All ``2^m`` block matrices with row levels 0 and ``lambda_max``.

    Each block is filled on ``width = min(l, floor(1/(2p)))`` columns;
    flipping one bit changes the squared Frobenius norm by
    ``width * lambda_max^2``.
    """

    cfg: BlockFamilyConfig
    width: int
    sigma2: float

    def __len__(self):
        return 2 ** self.cfg.theta_length

    def matrix(self, theta) -> np.ndarray:
        return block_matrix(theta, self.cfg, 0.0, self.cfg.lambda_max, width=self.width)

    def thetas(self):
        return (np.array(t) for t in itertools.product((0, 1), repeat=self.cfg.theta_length))

    def matrices(self):
        return (self.matrix(t) for t in self.thetas())

    @property
    def separation_per_bit(self) -> float:
        """Squared half-distance for one flipped bit, ``width lambda_max^2 / 4``."""
        return self.width * self.cfg.lambda_max ** 2 / 4.0

    @property
    def missing_row_probability(self) -> float:
        """Probability that none of a row's nonzero entries is observed."""
        return (1.0 - self.cfg.p) ** self.width

    def bayes_risk_lower_bound(self) -> float:
        """``(1/2) sum_i (width lambda_max^2 / 4) (1 - p)^width``."""
        return 0.5 * self.cfg.theta_length * self.separation_per_bit * self.missing_row_probability

    def validate(self, limit: int | None = None) -> bool:
        thetas = self.thetas() if limit is None else itertools.islice(self.thetas(), limit)
        return all(in_squared_class(self.matrix(t), self.cfg.r, self.cfg.lambda_max, self.sigma2)
                   for t in thetas)


def assouad_family(cfg: BlockFamilyConfig) -> AssouadFamily:
    if cfg.mode != "assouad":
        raise ValueError("configuration mode must be 'assouad'")
    width = max(1, min(cfg.block_width, math.floor(1.0 / (2.0 * cfg.p))))
    return AssouadFamily(cfg, width, math.sqrt(cfg.group_size) * cfg.lambda_max)
