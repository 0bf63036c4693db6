"""Algebraic hashing and the six-packed dataset Merkle commitment."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .fieldcodec import P, ScaledMatrix, field_embed

GROUP_SIZE = 6
ROUND_STEP = 0x9E3779B97F4A7C15


class HashAlg(enum.IntEnum):
    MIMC7 = 0
    POSEIDON_LITE = 1

    @classmethod
    def parse(cls, name) -> "HashAlg":
        if isinstance(name, HashAlg):
            return name
        if isinstance(name, int):
            return cls(name)
        try:
            return {"mimc7": cls.MIMC7, "poseidon_lite": cls.POSEIDON_LITE}[str(name).lower()]
        except KeyError:
            raise ValueError(f"unknown hash algorithm {name!r}; use mimc7 or poseidon_lite") from None

    @property
    def label(self) -> str:
        return self.name.lower()


# (rounds, S-box exponent)
HASH_PARAMS = {
    HashAlg.MIMC7: (91, 7),
    HashAlg.POSEIDON_LITE: (64, 5),
}


@lru_cache(maxsize=None)
def round_constants(rounds: int) -> tuple[int, ...]:
    return tuple((i * ROUND_STEP) % P for i in range(rounds))


def permute(x: int, key: int, alg: HashAlg) -> int:
    rounds, e = HASH_PARAMS[alg]
    t = x % P
    for c in round_constants(rounds):
        t = pow(t + key + c, e, P)
    return (t + key) % P


def mimc7_permute(x: int, key: int) -> int:
    return permute(x, key, HashAlg.MIMC7)


def poseidon_lite_permute(x: int, key: int) -> int:
    return permute(x, key, HashAlg.POSEIDON_LITE)


def hash_sponge(values: Sequence[int], alg: HashAlg = HashAlg.POSEIDON_LITE) -> int:
    """Miyaguchi-Preneel chaining of the keyless permutation over ``values``."""
    if len(values) == 0:
        raise ValueError("hash_sponge needs at least one value")
    s = 0
    for v in values:
        t = (s + v) % P
        s = (permute(t, 0, alg) + t) % P
    return s


@lru_cache(maxsize=None)
def empty_group_hash(alg: HashAlg = HashAlg.POSEIDON_LITE) -> int:
    return hash_sponge([0] * GROUP_SIZE, alg)


@lru_cache(maxsize=None)
def empty_subtree_hash(level: int, alg: HashAlg) -> int:
    """Root of a fully empty subtree whose leaves sit ``level`` levels below."""
    if level == 0:
        return empty_group_hash(alg)
    h = empty_subtree_hash(level - 1, alg)
    return hash_sponge([h, h], alg)


def tree_depth(value_count: int) -> int:
    if value_count < 1:
        raise ValueError("empty dataset")
    groups = -(-value_count // GROUP_SIZE)
    return (groups - 1).bit_length()


@dataclass(frozen=True)
class MerkleCommitment:
    root: int
    depth: int
    value_count: int
    alg: HashAlg

    @property
    def capacity(self) -> int:
        return GROUP_SIZE << self.depth


def serialize_dataset(features: ScaledMatrix, targets: ScaledMatrix) -> list[int]:
    """Column-major field elements: X_1 fully, ..., X_k, then Y."""
    if features.rows != targets.rows:
        raise ValueError("features and targets disagree on n")
    out = []
    for j in range(features.cols):
        out.extend(field_embed(features.get(i, j)) for i in range(features.rows))
    out.extend(field_embed(targets.get(i, 0)) for i in range(targets.rows))
    return out


def merkle_root(values: Sequence[int], alg: HashAlg) -> tuple[int, int]:
    """Root and depth of the six-packed tree over already-embedded values."""
    depth = tree_depth(len(values))
    level = []
    for g in range(0, len(values), GROUP_SIZE):
        group = list(values[g:g + GROUP_SIZE])
        group += [0] * (GROUP_SIZE - len(group))
        level.append(hash_sponge(group, alg))
    for h in range(depth):
        nxt = []
        for i in range(0, len(level), 2):
            right = level[i + 1] if i + 1 < len(level) else empty_subtree_hash(h, alg)
            nxt.append(hash_sponge([level[i], right], alg))
        level = nxt
    return level[0], depth


def commit_values(values: Sequence[int], alg: HashAlg) -> MerkleCommitment:
    root, depth = merkle_root(values, alg)
    return MerkleCommitment(root, depth, len(values), alg)


def commit_dataset(
    features: ScaledMatrix, targets: ScaledMatrix, alg: HashAlg = HashAlg.POSEIDON_LITE
) -> MerkleCommitment:
    return commit_values(serialize_dataset(features, targets), alg)
