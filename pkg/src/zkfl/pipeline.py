"""Client-side protocol steps: encode and commit data, train, perturb,
and produce the witnesses submitted to the ledger."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .circuits import (
    CostCircuitParams,
    CostPublics,
    WeightCircuitParams,
    WeightPublics,
    fixed_point_cost,
    gen_cost_witness,
    gen_weight_witness,
    weight_from_inverse,
)
from .circuits.r1cs import Witness
from .dpnoise import NoiseDraw, NoiseTable, perturb_weights
from .fieldcodec import ScaledMatrix
from .linreg import BoundSet, Dataset, TrainedModel, normalize, train
from .merklehash import HashAlg, MerkleCommitment, commit_dataset


@dataclass(frozen=True)
class EncodedData:
    features: ScaledMatrix  # n x k at scale d
    targets: ScaledMatrix  # n x 1 at scale d

    @classmethod
    def from_dataset(cls, ds: Dataset, d: int) -> "EncodedData":
        return cls(ScaledMatrix.from_array(ds.features, d), ScaledMatrix.from_array(ds.targets, d))

    def decoded(self) -> Dataset:
        return Dataset(self.features.to_array(), self.targets.to_array().ravel())

    def commit(self, alg: HashAlg) -> MerkleCommitment:
        return commit_dataset(self.features, self.targets, alg)

    def with_value(self, col: int, row: int, delta: int) -> "EncodedData":
        """Copy with one scaled value shifted by ``delta`` units (col k is Y)."""
        k = self.features.cols
        if col < k:
            vals = self.features.ints()
            vals[row * k + col] += delta
            return replace(self, features=ScaledMatrix.from_ints(self.features.rows, k, vals, self.features.scale))
        vals = self.targets.ints()
        vals[row] += delta
        return replace(self, targets=ScaledMatrix.column(vals, self.targets.scale))


@dataclass
class ClientState:
    """Everything one client holds between protocol steps."""

    data: EncodedData
    model: TrainedModel
    Z: ScaledMatrix
    w: ScaledMatrix
    commitment: MerkleCommitment
    w_noisy: Optional[ScaledMatrix] = None
    draws: Optional[list] = None


def prepare_client(raw: Dataset, d: int, alg: HashAlg, *, normalized: bool = False) -> ClientState:
    """Steps 1-2: normalize, encode, commit, train and fix the weight to scale d."""
    norm = raw if normalized else normalize(raw)
    data = EncodedData.from_dataset(norm, d)
    model = train(data.decoded())
    return client_from_model(data, model, d, alg)


def client_from_model(data: EncodedData, model: TrainedModel, d: int, alg: HashAlg) -> ClientState:
    Z = ScaledMatrix.from_array(model.Z, d)
    w = weight_from_inverse(Z, data.features, data.targets)
    return ClientState(data=data, model=model, Z=Z, w=w, commitment=data.commit(alg))


def perturb(client: ClientState, block_hash: int, table: NoiseTable, alg: HashAlg) -> ClientState:
    """Step 3: add hash-selected table noise to the fixed-point weight."""
    client.w_noisy, client.draws = perturb_weights(
        client.w, block_hash, client.data.targets.field_elements(), table, alg
    )
    return client


def weight_witness(
    client: ClientState,
    params: WeightCircuitParams,
    table: NoiseTable,
    block_hash: int,
    bounds: BoundSet,
    *,
    root: Optional[int] = None,
    w_noisy: Optional[ScaledMatrix] = None,
    draws: Optional[list[NoiseDraw]] = None,
    strict: bool = False,
) -> Witness:
    """Step 4: witness for the weight circuit.  Overrides exist for attackers."""
    w_noisy = w_noisy if w_noisy is not None else client.w_noisy
    pub = WeightPublics(
        k=params.k,
        n=params.n,
        d=params.d,
        root=client.commitment.root if root is None else root,
        table=tuple(table.ints()),
        d_L=params.d_L,
        block_hash=block_hash,
        w_noisy=tuple(w_noisy.ints()),
        bounds=bounds,
    )
    return gen_weight_witness(
        params,
        client.data.features,
        client.data.targets,
        client.Z,
        draws if draws is not None else client.draws,
        pub,
        strict=strict,
    )


def client_cost(client: ClientState, test: EncodedData) -> int:
    """Step 7: RSS of the unperturbed weight on the public test set, scale 2d."""
    return fixed_point_cost(client.w, test.features, test.targets)


def cost_witness(
    client: ClientState,
    params: CostCircuitParams,
    test: EncodedData,
    c: int,
    eps_w: int,
    root_test: int,
    *,
    strict: bool = False,
) -> Witness:
    """Step 8: witness for the cost circuit."""
    pub = CostPublics(
        c=c,
        k=params.k,
        n=params.n,
        n_test=params.n_test,
        d=params.d,
        root=client.commitment.root,
        root_test=root_test,
        eps_w=eps_w,
    )
    return gen_cost_witness(
        params,
        client.data.features,
        client.data.targets,
        client.Z,
        client.w,
        test.features,
        test.targets,
        pub,
        strict=strict,
    )


def decoded_weight(w: ScaledMatrix) -> np.ndarray:
    return w.to_array().ravel()
