"""Discretized Laplace mechanism driven by hash-derived, publicly
re-derivable randomness."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .fieldcodec import ScaledMatrix, SignMag, fp_encode
from .merklehash import HashAlg, hash_sponge


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta_sens: float  # scaled units
    d_L: int
    d: int

    def __post_init__(self):
        if self.epsilon <= 0 or self.delta_sens <= 0:
            raise ValueError("epsilon and sensitivity must be positive")
        if self.d_L < 2:
            raise ValueError("d_L must be at least 2")

    @classmethod
    def default(cls, epsilon: float, d_L: int, d: int) -> "PrivacyParams":
        # normalized weights live in [-1, 1]
        return cls(epsilon=epsilon, delta_sens=2 * 10 ** d, d_L=d_L, d=d)

    @property
    def lam(self) -> float:
        return self.delta_sens / self.epsilon

    @property
    def lam_real(self) -> float:
        return self.delta_sens / 10 ** self.d / self.epsilon


@dataclass(frozen=True)
class NoiseTable:
    entries: tuple  # SignMag, entry p-1 holds L(p)
    params: PrivacyParams

    def ints(self) -> list[int]:
        return [e.to_int() for e in self.entries]

    def variance_real(self) -> float:
        """Exact variance of a uniformly indexed table draw, in real units."""
        vals = [v / 10 ** self.params.d for v in self.ints()]
        mean = sum(vals) / len(vals)
        return sum((v - mean) ** 2 for v in vals) / len(vals)


@dataclass(frozen=True)
class NoiseDraw:
    p: int
    h: int
    q: SignMag


def laplace_inverse_cdf(p: int, d_L: int, lam: float) -> float:
    # |2p - d_L| is computed in integers so the table is exactly antisymmetric
    gap = abs(2 * p - d_L)
    if gap == 0:
        return 0.0
    mag = -lam * math.log((d_L - gap) / d_L)
    return mag if 2 * p > d_L else -mag


def build_noise_table(params: PrivacyParams) -> NoiseTable:
    lam = params.lam_real
    entries = tuple(
        fp_encode(laplace_inverse_cdf(p, params.d_L, lam), params.d)
        for p in range(1, params.d_L)
    )
    return NoiseTable(entries, params)


def index_from_hash(h: int, d_L: int) -> int:
    """Table position p in [1, d_L - 1] selected by a hash value."""
    if d_L < 2:
        raise ValueError("d_L must be at least 2")
    return 1 + h % (d_L - 1)


def derive_randomness(
    block_hash: int, y_enc: int, d_L: int, alg: HashAlg = HashAlg.POSEIDON_LITE
) -> tuple[int, int]:
    h = hash_sponge([block_hash, y_enc], alg)
    return h, index_from_hash(h, d_L)


def perturb_weights(
    w: ScaledMatrix,
    block_hash: int,
    y_enc: Sequence[int],
    table: NoiseTable,
    alg: HashAlg = HashAlg.POSEIDON_LITE,
) -> tuple[ScaledMatrix, list[NoiseDraw]]:
    size = w.rows * w.cols
    if len(y_enc) < size:
        raise ValueError(f"need {size} committed targets for noise derivation, got {len(y_enc)}")
    if w.scale != table.params.d:
        raise ValueError(f"weights at scale {w.scale}, noise table at scale {table.params.d}")
    out, draws = [], []
    for j, wj in enumerate(w.ints()):
        h, p = derive_randomness(block_hash, y_enc[j], table.params.d_L, alg)
        q = table.entries[p - 1]
        draws.append(NoiseDraw(p=p, h=h, q=q))
        out.append(wj + q.to_int())
    return ScaledMatrix.from_ints(w.rows, w.cols, out, w.scale), draws
