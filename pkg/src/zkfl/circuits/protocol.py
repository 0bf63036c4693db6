"""The two protocol circuits: weight honesty and cost honesty.

Each circuit is written once as a body function over a ``Circuit``.  The
body runs without values to produce the constraint system and with values
to produce the witness.  Constraint labels carry the check they belong to
(``mean``, ``merkle_train``, ``noisy_weight``, ...), which is what a failed
verification reports.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from ..dpnoise import NoiseDraw
from ..fieldcodec import ScaledMatrix, embed_int, field_to_signed, round_half_away
from ..linreg import BoundSet
from ..merklehash import HashAlg, tree_depth
from .gadgets import (
    assert_abs_le,
    field_mod_params,
    gadget_lookup,
    gadget_merkle_root,
    gadget_mod,
    gadget_signmag,
    gadget_sponge,
)
from .r1cs import LC, Circuit, ConstraintSystem, Witness, WitnessError, lc_sum

# data magnitudes are range-checked to this many bits before use
DATA_BITS = 64

WEIGHT_CHECKS = (
    "params",
    "data_range",
    "gram",
    "mean",
    "variance",
    "merkle_train",
    "inverse_residual",
    "z_norm",
    "xty_norm",
    "noisy_weight",
)
COST_CHECKS = (
    "params",
    "data_range",
    "gram",
    "merkle_train",
    "merkle_test",
    "weight",
    "prediction",
    "cost",
)


@dataclass(frozen=True)
class WeightCircuitParams:
    k: int
    n: int
    d: int
    d_L: int
    hash_alg: HashAlg = HashAlg.POSEIDON_LITE
    depth_train: Optional[int] = None
    bounds: Optional[BoundSet] = field(default=None, compare=False)

    def __post_init__(self):
        if self.k < 0 or self.n < self.k + 2:
            raise ValueError(f"need n >= k + 2, got k={self.k}, n={self.n}")
        if self.d_L < 2:
            raise ValueError("d_L must be at least 2")
        depth = tree_depth((self.k + 1) * self.n)
        if self.depth_train is None:
            object.__setattr__(self, "depth_train", depth)
        elif self.depth_train != depth:
            raise ValueError(f"depth_train={self.depth_train}, data needs {depth}")
        object.__setattr__(self, "hash_alg", HashAlg.parse(self.hash_alg))

    @property
    def num_public(self) -> int:
        return 12 + (self.d_L - 1) + (self.k + 1)


@dataclass(frozen=True)
class CostCircuitParams:
    k: int
    n: int
    n_test: int
    d: int
    hash_alg: HashAlg = HashAlg.POSEIDON_LITE
    depth_train: Optional[int] = None
    depth_test: Optional[int] = None
    eps_w: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_test < 1:
            raise ValueError("n_test must be at least 1")
        if self.n < self.k + 2:
            raise ValueError(f"need n >= k + 2, got k={self.k}, n={self.n}")
        for attr, count in (("depth_train", self.n), ("depth_test", self.n_test)):
            depth = tree_depth((self.k + 1) * count)
            cur = getattr(self, attr)
            if cur is None:
                object.__setattr__(self, attr, depth)
            elif cur != depth:
                raise ValueError(f"{attr}={cur}, data needs {depth}")
        object.__setattr__(self, "hash_alg", HashAlg.parse(self.hash_alg))

    @property
    def num_public(self) -> int:
        return 8


@dataclass(frozen=True)
class WeightPublics:
    k: int
    n: int
    d: int
    root: int
    table: tuple  # signed ints at scale d
    d_L: int
    block_hash: int
    w_noisy: tuple  # signed ints at scale d
    bounds: BoundSet

    def vector(self) -> list[int]:
        b = self.bounds
        return [
            self.k,
            self.n,
            self.d,
            self.root,
            *(embed_int(v) for v in self.table),
            self.d_L,
            self.block_hash,
            *(embed_int(v) for v in self.w_noisy),
            b.eps_mu,
            b.eps_sigma,
            b.eps_inverse,
            b.theta_z,
            b.theta_xty,
            b.eps_w_noisy,
        ]


@dataclass(frozen=True)
class CostPublics:
    c: int
    k: int
    n: int
    n_test: int
    d: int
    root: int
    root_test: int
    eps_w: int

    def vector(self) -> list[int]:
        return [self.c, self.k, self.n, self.n_test, self.d, self.root, self.root_test, self.eps_w]


@dataclass
class _Data:
    X: list  # k columns of n signed ints
    Y: list
    Z: list  # (k+1) rows of signed ints
    extra: dict


def _columns(features: ScaledMatrix) -> list[list[int]]:
    rows = features.int_rows()
    return [[r[j] for r in rows] for j in range(features.cols)]


def _encode_Z(Z, d: int) -> ScaledMatrix:
    if isinstance(Z, ScaledMatrix):
        if Z.scale != d:
            raise ValueError(f"Z at scale {Z.scale}, expected {d}")
        return Z
    return ScaledMatrix.from_array(np.asarray(Z, dtype=float), d)


def _pub(cs: Circuit, name: str, vals: Optional[list], pos: int) -> LC:
    return cs.public(name, vals[pos] if vals is not None else None)


def _private_data(cs: Circuit, k: int, n: int, cols=None):
    """Allocate k feature columns and the target column, with values if given."""
    if cols is None:
        X = [[cs.alloc() for _ in range(n)] for _ in range(k)]
        Y = [cs.alloc() for _ in range(n)]
    else:
        if len(cols[0]) != k or any(len(c) != n for c in cols[0]) or len(cols[1]) != n:
            raise ValueError(f"data shape does not match k={k}, n={n}")
        X = [[cs.alloc(embed_int(v)) for v in col] for col in cols[0]]
        Y = [cs.alloc(embed_int(v)) for v in cols[1]]
    return X, Y


def _gram(cs: Circuit, X, Y, n: int, scale: int, full: bool):
    """XtX (if ``full``), XtY and sum(y^2) with the ones column at ``scale``."""
    size = len(X) + 1
    cols = [None] + X
    b = [cs.materialize(lc_sum(Y) * scale, "xty0")]
    for i in range(1, size):
        b.append(cs.materialize(lc_sum(cs.mul(xi, yi, "xty") for xi, yi in zip(cols[i], Y)), "xty"))
    if not full:
        return None, b, None
    G = [[None] * size for _ in range(size)]
    G[0][0] = LC.const(n * scale * scale)
    for j in range(1, size):
        G[0][j] = G[j][0] = cs.materialize(lc_sum(cols[j]) * scale, "xtx0")
    for i in range(1, size):
        for j in range(i, size):
            G[i][j] = G[j][i] = cs.materialize(
                lc_sum(cs.mul(a, c, "xtx") for a, c in zip(cols[i], cols[j])), "xtx"
            )
    syy = cs.materialize(lc_sum(cs.mul(y, y, "yty") for y in Y), "yty")
    return G, b, syy


def _rounded_weights(cs: Circuit, Z, b, scale: int) -> list[LC]:
    """w~ = round(Z . XtY) from scale 3d down to d, with witnessed remainders."""
    den = scale * scale
    out = []
    for j in range(len(Z)):
        v = lc_sum(cs.mul(Z[j][l], b[l], "zxty") for l in range(len(b)))
        wt = cs.alloc(round_half_away(field_to_signed(cs.val(v)), den) if cs.wit else None)
        assert_abs_le(cs, v - wt * den, den // 2, detail="round")
        out.append(wt)
    return out


def _weight_body(cs: Circuit, p: WeightCircuitParams, data: Optional[_Data]) -> None:
    k, n, d, size = p.k, p.n, p.d, p.k + 1
    scale = 10 ** d
    pv = data.extra["publics"] if data is not None else None

    pos = iter(range(p.num_public))
    k_ = _pub(cs, "k", pv, next(pos))
    n_ = _pub(cs, "n", pv, next(pos))
    d_ = _pub(cs, "d", pv, next(pos))
    root = _pub(cs, "rt_train", pv, next(pos))
    table = [_pub(cs, f"L[{i}]", pv, next(pos)) for i in range(p.d_L - 1)]
    dl_ = _pub(cs, "d_L", pv, next(pos))
    block_hash = _pub(cs, "block_hash", pv, next(pos))
    w_noisy = [_pub(cs, f"w_noisy[{j}]", pv, next(pos)) for j in range(size)]
    eps_mu = _pub(cs, "eps_mu", pv, next(pos))
    eps_sigma = _pub(cs, "eps_sigma", pv, next(pos))
    eps_inv = _pub(cs, "eps_inverse", pv, next(pos))
    theta_z = _pub(cs, "theta_z", pv, next(pos))
    theta_xty = _pub(cs, "theta_xty", pv, next(pos))
    eps_wn = _pub(cs, "eps_w_noisy", pv, next(pos))

    X, Y = _private_data(cs, k, n, (data.X, data.Y) if data else None)
    if data is None:
        Z = [[cs.alloc() for _ in range(size)] for _ in range(size)]
    else:
        Z = [[cs.alloc(embed_int(v)) for v in row] for row in data.Z]

    with cs.section("params"):
        for var, const in ((k_, k), (n_, n), (d_, d), (dl_, p.d_L)):
            cs.enforce_equal(var, const)

    with cs.section("data_range"):
        for v in [x for col in X for x in col] + Y:
            gadget_signmag(cs, v, DATA_BITS)

    with cs.section("gram"):
        G, b, syy = _gram(cs, X, Y, n, scale, full=True)

    with cs.section("mean"):
        for j, col in enumerate(X + [Y]):
            assert_abs_le(cs, lc_sum(col), eps_mu, detail=f"col{j + 1}")

    with cs.section("variance"):
        target = n * scale * scale
        for j in range(1, size):
            assert_abs_le(cs, G[j][j] - target, eps_sigma, detail=f"col{j}")
        assert_abs_le(cs, syy - target, eps_sigma, detail="y")

    with cs.section("merkle_train"):
        values = [x for col in X for x in col] + Y
        cs.enforce_equal(gadget_merkle_root(cs, values, p.depth_train, p.hash_alg), root, "root")

    with cs.section("inverse_residual"):
        ident = scale ** 3
        for i in range(size):
            for j in range(size):
                pij = lc_sum(cs.mul(G[i][l], Z[l][j], "xtxz") for l in range(size))
                assert_abs_le(cs, pij - (ident if i == j else 0), eps_inv * scale, detail=f"{i},{j}")

    with cs.section("z_norm"):
        for i in range(size):
            for j in range(size):
                assert_abs_le(cs, Z[i][j] * size, theta_z, detail=f"{i},{j}")

    with cs.section("xty_norm"):
        for i in range(size):
            assert_abs_le(cs, b[i] * size, theta_xty, detail=f"{i}")

    with cs.section("noisy_weight"):
        w_tilde = _rounded_weights(cs, Z, b, scale)
        qw, qmax = field_mod_params(p.d_L - 1)
        hints = data.extra["draw_idx"] if data is not None else [None] * size
        for j in range(size):
            h = gadget_sponge(cs, [block_hash, Y[j]], p.hash_alg)
            r = gadget_mod(cs, h, p.d_L - 1, qw, qmax)
            q = gadget_lookup(cs, r, table, hint=hints[j])
            assert_abs_le(cs, w_noisy[j] - (w_tilde[j] + q), eps_wn, detail=f"{j}")


def _cost_body(cs: Circuit, p: CostCircuitParams, data: Optional[_Data]) -> None:
    k, n, nt, d, size = p.k, p.n, p.n_test, p.d, p.k + 1
    scale = 10 ** d
    pv = data.extra["publics"] if data is not None else None

    names = ["c", "k", "n", "n_test", "d", "rt_train", "rt_test", "eps_w"]
    c_, k_, n_, nt_, d_, root, root_test, eps_w = (
        _pub(cs, name, pv, i) for i, name in enumerate(names)
    )

    X, Y = _private_data(cs, k, n, (data.X, data.Y) if data else None)
    Xt, Yt = _private_data(cs, k, nt, (data.extra["X_test"], data.extra["Y_test"]) if data else None)
    if data is None:
        Z = [[cs.alloc() for _ in range(size)] for _ in range(size)]
        w = [cs.alloc() for _ in range(size)]
    else:
        Z = [[cs.alloc(embed_int(v)) for v in row] for row in data.Z]
        w = [cs.alloc(embed_int(v)) for v in data.extra["w"]]

    with cs.section("params"):
        for var, const in ((k_, k), (n_, n), (nt_, nt), (d_, d)):
            cs.enforce_equal(var, const)

    with cs.section("data_range"):
        for v in [x for col in X + Xt for x in col] + Y + Yt:
            gadget_signmag(cs, v, DATA_BITS)

    with cs.section("gram"):
        _, b, _ = _gram(cs, X, Y, n, scale, full=False)

    with cs.section("merkle_train"):
        values = [x for col in X for x in col] + Y
        cs.enforce_equal(gadget_merkle_root(cs, values, p.depth_train, p.hash_alg), root, "root")

    with cs.section("merkle_test"):
        values = [x for col in Xt for x in col] + Yt
        cs.enforce_equal(gadget_merkle_root(cs, values, p.depth_test, p.hash_alg), root_test, "root")

    with cs.section("weight"):
        w_tilde = _rounded_weights(cs, Z, b, scale)
        for j in range(size):
            assert_abs_le(cs, w[j] - w_tilde[j], eps_w, detail=f"{j}")

    with cs.section("prediction"):
        y_hat = []
        for t in range(nt):
            s = w[0] * scale + lc_sum(cs.mul(Xt[j][t], w[j + 1], "xw") for j in range(k))
            yh = cs.alloc(round_half_away(field_to_signed(cs.val(s)), scale) if cs.wit else None)
            assert_abs_le(cs, s - yh * scale, scale // 2, detail="round")
            y_hat.append(yh)

    with cs.section("cost"):
        sq = []
        for t in range(nt):
            e = Yt[t] - y_hat[t]
            sq.append(cs.mul(e, e, "sq"))
        cs.enforce_equal(lc_sum(sq), c_, "rss")


@lru_cache(maxsize=4)
def _build_weight(p: WeightCircuitParams) -> ConstraintSystem:
    cs = Circuit("pi_w")
    _weight_body(cs, p, None)
    return cs.system()


@lru_cache(maxsize=4)
def _build_cost(p: CostCircuitParams) -> ConstraintSystem:
    cs = Circuit("pi_c")
    _cost_body(cs, p, None)
    return cs.system()


def build_weight_circuit(params: WeightCircuitParams) -> ConstraintSystem:
    return _build_weight(params)


def build_cost_circuit(params: CostCircuitParams) -> ConstraintSystem:
    return _build_cost(params)


def count_weight_constraints(params: WeightCircuitParams) -> int:
    """Constraint count without materializing the system (for scaling sweeps)."""
    cs = Circuit("pi_w", count_only=True)
    _weight_body(cs, params, None)
    return cs.count


def count_cost_constraints(params: CostCircuitParams) -> int:
    cs = Circuit("pi_c", count_only=True)
    _cost_body(cs, params, None)
    return cs.count


def _finish(cs: Circuit, strict: bool) -> Witness:
    if strict and cs.first_violation is not None:
        label = cs.first_violation
        raise WitnessError(label.split(":", 1)[0], label)
    return cs.witness()


def gen_weight_witness(
    params: WeightCircuitParams,
    features: ScaledMatrix,
    targets: ScaledMatrix,
    Z,
    draws: Sequence[NoiseDraw],
    publics: WeightPublics,
    strict: bool = True,
) -> Witness:
    """Full assignment for the weight circuit.

    With ``strict`` the generator refuses to hand out an unsatisfying
    witness and raises ``WitnessError`` naming the first violated check.
    """
    size = params.k + 1
    if len(draws) != size:
        raise ValueError(f"expected {size} noise draws, got {len(draws)}")
    Zs = _encode_Z(Z, params.d)
    data = _Data(
        X=_columns(features),
        Y=targets.ints(),
        Z=Zs.int_rows(),
        extra={"publics": publics.vector(), "draw_idx": [dr.p - 1 for dr in draws]},
    )
    cs = Circuit("pi_w", witness_mode=True, check=strict)
    _weight_body(cs, params, data)
    return _finish(cs, strict)


def gen_cost_witness(
    params: CostCircuitParams,
    features: ScaledMatrix,
    targets: ScaledMatrix,
    Z,
    w: ScaledMatrix,
    test_features: ScaledMatrix,
    test_targets: ScaledMatrix,
    publics: CostPublics,
    strict: bool = True,
) -> Witness:
    Zs = _encode_Z(Z, params.d)
    data = _Data(
        X=_columns(features),
        Y=targets.ints(),
        Z=Zs.int_rows(),
        extra={
            "publics": publics.vector(),
            "w": w.ints(),
            "X_test": _columns(test_features),
            "Y_test": test_targets.ints(),
        },
    )
    cs = Circuit("pi_c", witness_mode=True, check=strict)
    _cost_body(cs, params, data)
    return _finish(cs, strict)


def weight_from_inverse(Z: ScaledMatrix, features: ScaledMatrix, targets: ScaledMatrix) -> ScaledMatrix:
    """The fixed-point weight the circuits re-derive: round(Z . XtY) at scale d."""
    d = Z.scale
    scale = 10 ** d
    X = _columns(features)
    Y = targets.ints()
    b = [scale * sum(Y)] + [sum(x * y for x, y in zip(col, Y)) for col in X]
    rows = Z.int_rows()
    w = [round_half_away(sum(r[l] * b[l] for l in range(len(b))), scale * scale) for r in rows]
    return ScaledMatrix.column(w, d)


def fixed_point_cost(
    w: ScaledMatrix, test_features: ScaledMatrix, test_targets: ScaledMatrix
) -> int:
    """RSS at scale 2d exactly as the cost circuit computes it."""
    scale = 10 ** w.scale
    wi = w.ints()
    total = 0
    for row, y in zip(test_features.int_rows(), test_targets.ints()):
        s = wi[0] * scale + sum(x * wj for x, wj in zip(row, wi[1:]))
        e = y - round_half_away(s, scale)
        total += e * e
    return total


__all__ = [
    "WEIGHT_CHECKS",
    "COST_CHECKS",
    "WeightCircuitParams",
    "CostCircuitParams",
    "WeightPublics",
    "CostPublics",
    "build_weight_circuit",
    "build_cost_circuit",
    "count_weight_constraints",
    "count_cost_constraints",
    "gen_weight_witness",
    "gen_cost_witness",
    "weight_from_inverse",
    "fixed_point_cost",
]
