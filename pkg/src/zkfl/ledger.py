"""Deterministic simulated chain and the ``Clients`` contract.

Transactions apply strictly in submission order.  Every transaction,
successful or reverted, is logged and sealed into its own block, so the
block hashes (the entropy fed into the noise derivation) depend on the
whole history.  A failed ``require`` raises ``ContractError`` and leaves the
state untouched; a proof that does not verify is not an error, the upload
is simply not stored and the verdict is returned.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from .circuits import (
    CostCircuitParams,
    CostPublics,
    MalformedProofError,
    Verdict,
    WeightCircuitParams,
    WeightPublics,
    build_cost_circuit,
    build_weight_circuit,
    cs_verify,
)
from .circuits.r1cs import Witness
from .fieldcodec import P, ScaledMatrix, round_half_away
from .linreg import BoundSet
from .merklehash import HashAlg, hash_sponge


class ContractError(RuntimeError):
    """A ``require`` failed; the transaction reverts."""


# -- chain --------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: int
    tx_digest: int
    hash: int

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": str(self.prev_hash),
            "tx_digest": str(self.tx_digest),
            "hash": str(self.hash),
        }


def tx_digest(payload: dict) -> int:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return int.from_bytes(hashlib.sha256(blob).digest(), "big") % P


class Chain:
    def __init__(self, seed: int = 0, alg: HashAlg = HashAlg.POSEIDON_LITE):
        self.alg = alg
        self.blocks: list[Block] = []
        self._seal(seed % P)

    def _seal(self, digest: int) -> Block:
        height = len(self.blocks)
        prev = self.blocks[-1].hash if self.blocks else 0
        block = Block(height, prev, digest, hash_sponge([height, prev, digest], self.alg))
        self.blocks.append(block)
        return block

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def advance_block(self, digest: Optional[int] = None) -> Block:
        return self._seal(0 if digest is None else digest % P)


# -- contract state -----------------------------------------------------------


@dataclass(frozen=True)
class GenericParams:
    """Task-wide parameters fixed at deployment."""

    k: int
    n: int
    n_test: int
    d: int
    d_L: int
    admission_fee: int
    rt_test: int
    table: tuple  # signed noise table entries at scale d
    bounds: BoundSet
    hash_alg: HashAlg = HashAlg.POSEIDON_LITE

    def weight_params(self) -> WeightCircuitParams:
        return WeightCircuitParams(self.k, self.n, self.d, self.d_L, self.hash_alg, bounds=self.bounds)

    def cost_params(self) -> CostCircuitParams:
        return CostCircuitParams(self.k, self.n, self.n_test, self.d, self.hash_alg, eps_w=self.bounds.eps_w)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "n": self.n,
            "n_test": self.n_test,
            "d": self.d,
            "d_L": self.d_L,
            "admission_fee": self.admission_fee,
            "rt_test": str(self.rt_test),
            "table": [str(v) for v in self.table],
            "bounds": self.bounds.to_json(),
            "hash_alg": HashAlg(self.hash_alg).label,
        }


@dataclass
class ClientRecord:
    address: str
    client_id: int
    rt_train: int
    hash_bc: int
    w_noisy: Optional[ScaledMatrix] = None
    betaproof_valid: bool = False
    cost: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "address": self.address,
            "client_id": self.client_id,
            "rt_train": str(self.rt_train),
            "hash_bc": str(self.hash_bc),
            "w_noisy": None if self.w_noisy is None else [str(v) for v in self.w_noisy.ints()],
            "betaproof_valid": self.betaproof_valid,
            "cost": None if self.cost is None else str(self.cost),
        }


@dataclass
class ContractState:
    generic: GenericParams
    deployer: str
    count: int = 0
    clients: dict = field(default_factory=dict)
    global_w: Optional[ScaledMatrix] = None
    i_round: int = 0
    cost_list: list = field(default_factory=list)  # (address, cost) in arrival order
    balance: int = 0
    incentives: Optional[list] = None
    payouts: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "generic": self.generic.to_json(),
            "deployer": self.deployer,
            "count": self.count,
            "clients": {a: r.to_json() for a, r in sorted(self.clients.items())},
            "global_w": None if self.global_w is None else [str(v) for v in self.global_w.ints()],
            "i_round": self.i_round,
            "cost_list": [[a, str(c)] for a, c in self.cost_list],
            "balance": str(self.balance),
            "incentives": None if self.incentives is None else [str(v) for v in self.incentives],
            "payouts": {a: str(v) for a, v in sorted(self.payouts.items())},
        }


def fedavg(weights: Sequence[ScaledMatrix]) -> ScaledMatrix:
    """Element-wise mean with exact integer sums, rounded half away from zero."""
    if not weights:
        raise ValueError("nothing to aggregate")
    first = weights[0]
    cols = [w.ints() for w in weights]
    mean = [round_half_away(sum(c[i] for c in cols), len(cols)) for i in range(len(cols[0]))]
    return ScaledMatrix.from_ints(first.rows, first.cols, mean, first.scale)


def compute_incentives(costs: Sequence[int], fee: int, valid_count: int) -> list[int]:
    """Payouts rewarding below-average cost; sums to ``fee * valid_count`` exactly.

    The z-score's standard deviation cancels in the final rescaling, so the
    shares are computed exactly as ``max(0, mean - c_i)`` normalized to one.
    """
    if not costs:
        raise ValueError("no costs to reward")
    m = len(costs)
    total = fee * valid_count
    mean = Fraction(sum(costs), m)
    raw = [max(Fraction(0), mean - c) for c in costs]
    s = sum(raw)
    shares = [Fraction(1, m)] * m if s == 0 else [r / s for r in raw]
    payout = [round_half_away(sh.numerator * total, sh.denominator) for sh in shares]
    # rounding residue goes to the last rewarded entry
    sink = max(i for i, sh in enumerate(shares) if sh > 0)
    payout[sink] += total - sum(payout)
    if payout[sink] < 0:
        payout = [sh.numerator * total // sh.denominator for sh in shares]
        payout[sink] += total - sum(payout)
    return payout


@dataclass(frozen=True)
class TxResult:
    ok: bool
    error: Optional[str] = None
    verdict: Optional[Verdict] = None


class Contract:
    """Single-writer state machine mirroring the ``Clients`` contract."""

    def __init__(self, generic: GenericParams, deployer: str, chain: Optional[Chain] = None):
        self.chain = chain if chain is not None else Chain(0, generic.hash_alg)
        self.state = ContractState(generic=generic, deployer=deployer)
        self.weight_cs = build_weight_circuit(generic.weight_params())
        self.cost_cs = build_cost_circuit(generic.cost_params())
        self.log: list[dict] = []

    # -- bookkeeping ----------------------------------------------------------

    def snapshot(self) -> ContractState:
        return copy.deepcopy(self.state)

    def _record(self, kind: str, sender: str, payload: dict, result: TxResult) -> TxResult:
        entry = {"kind": kind, "sender": sender, **payload, "ok": result.ok}
        if result.error:
            entry["error"] = result.error
        if result.verdict is not None:
            entry["verdict"] = {
                "ok": result.verdict.ok,
                "label": result.verdict.label,
                "evaluated": result.verdict.evaluated,
            }
        block = self.chain.advance_block(tx_digest(entry))
        entry["block"] = block.height
        self.log.append(entry)
        return result

    def _revert(self, kind, sender, payload, msg):
        self._record(kind, sender, payload, TxResult(False, msg))
        raise ContractError(msg)

    # -- transactions ---------------------------------------------------------

    def register_client(self, address: str, rt_train: int, fee: int) -> TxResult:
        payload = {"rt_train": str(rt_train), "fee": str(fee)}
        st = self.state
        if fee < st.generic.admission_fee:
            self._revert("register", address, payload, "Pay fee")
        st.count += 1
        st.clients[address] = ClientRecord(address, st.count, rt_train, self.chain.head.hash)
        st.balance += fee
        # a re-registration discards earlier uploads
        st.cost_list = [(a, c) for a, c in st.cost_list if a != address]
        self._aggregate()
        return self._record("register", address, payload, TxResult(True))

    def upload_beta(self, address: str, w_noisy: ScaledMatrix, witness: Witness) -> TxResult:
        payload = {"w_noisy": [str(v) for v in w_noisy.ints()]}
        st = self.state
        rec = st.clients.get(address)
        if rec is None:
            self._revert("upload_beta", address, payload, "not registered")
        g = st.generic
        if w_noisy.rows * w_noisy.cols != g.k + 1 or w_noisy.scale != g.d:
            self._revert("upload_beta", address, payload, "malformed weight")
        pub = WeightPublics(
            k=g.k, n=g.n, d=g.d, root=rec.rt_train, table=g.table, d_L=g.d_L,
            block_hash=rec.hash_bc, w_noisy=tuple(w_noisy.ints()), bounds=g.bounds,
        )
        try:
            verdict = cs_verify(self.weight_cs, witness, pub.vector())
        except MalformedProofError as e:
            self._revert("upload_beta", address, payload, f"malformed proof: {e}")
        if not verdict.ok:
            return self._record("upload_beta", address, payload, TxResult(False, "invalid proof", verdict))
        rec.w_noisy = w_noisy
        rec.betaproof_valid = True
        self._aggregate()
        return self._record("upload_beta", address, payload, TxResult(True, None, verdict))

    def upload_cost(self, address: str, c: int, witness: Witness) -> TxResult:
        payload = {"cost": str(c)}
        st = self.state
        rec = st.clients.get(address)
        if rec is None:
            self._revert("upload_cost", address, payload, "not registered")
        if not rec.betaproof_valid:
            self._revert("upload_cost", address, payload, "no beta")
        g = st.generic
        pub = CostPublics(c=c, k=g.k, n=g.n, n_test=g.n_test, d=g.d, root=rec.rt_train,
                          root_test=g.rt_test, eps_w=g.bounds.eps_w)
        try:
            verdict = cs_verify(self.cost_cs, witness, pub.vector())
        except MalformedProofError as e:
            self._revert("upload_cost", address, payload, f"malformed proof: {e}")
        if not verdict.ok:
            return self._record("upload_cost", address, payload, TxResult(False, "invalid proof", verdict))
        rec.cost = c
        st.cost_list = [(a, v) for a, v in st.cost_list if a != address] + [(address, c)]
        return self._record("upload_cost", address, payload, TxResult(True, None, verdict))

    def incentivize(self, caller: str) -> TxResult:
        st = self.state
        if caller != st.deployer:
            self._revert("incentivize", caller, {}, "only initclient")
        if not st.cost_list:
            self._revert("incentivize", caller, {}, "no costs")
        costs = [c for _, c in st.cost_list]
        v = compute_incentives(costs, st.generic.admission_fee, len(costs))
        if st.balance < sum(v):
            self._revert("incentivize", caller, {}, "low balance")
        st.balance -= sum(v)
        for (addr, _), amount in zip(st.cost_list, v):
            st.payouts[addr] = st.payouts.get(addr, 0) + amount
        st.incentives = v
        return self._record("incentivize", caller, {"incentives": [str(x) for x in v]}, TxResult(True))

    def withdraw(self, caller: str, amount: int) -> TxResult:
        """Deployer-only debit, used to exercise the balance guard."""
        st = self.state
        if caller != st.deployer:
            self._revert("withdraw", caller, {"amount": str(amount)}, "only initclient")
        if amount > st.balance:
            self._revert("withdraw", caller, {"amount": str(amount)}, "low balance")
        st.balance -= amount
        return self._record("withdraw", caller, {"amount": str(amount)}, TxResult(True))

    # -- helpers --------------------------------------------------------------

    def _aggregate(self) -> None:
        st = self.state
        valid = [r.w_noisy for _, r in sorted(st.clients.items(), key=lambda kv: kv[1].client_id)
                 if r.betaproof_valid]
        st.global_w = fedavg(valid) if valid else None
        st.i_round = len(valid)
