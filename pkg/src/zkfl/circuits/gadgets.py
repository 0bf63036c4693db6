"""Gadget library: bit decomposition, comparators, signed range checks,
table lookup, constant-modulus reduction and the in-circuit Merkle tree."""
from __future__ import annotations

import enum
from typing import Sequence

from ..fieldcodec import COMPARATOR_BITS, P, field_to_signed
from ..merklehash import (
    GROUP_SIZE,
    HASH_PARAMS,
    HashAlg,
    empty_subtree_hash,
    round_constants,
    tree_depth,
)
from .r1cs import LC, Circuit, as_lc, lc_sum

# num2bits is only sound while 2**width stays well below P
MAX_BITS = 252


class Cmp(enum.Enum):
    GEQ = "geq"
    LEQ = "leq"


def gadget_num2bits(cs: Circuit, var, width: int) -> list[LC]:
    if not 0 < width <= MAX_BITS:
        raise ValueError(f"bit width {width} outside (0, {MAX_BITS}]")
    var = as_lc(var)
    v = cs.val(var) if cs.wit else 0
    bits = []
    for i in range(width):
        b = cs.alloc((v >> i) & 1)
        cs.constrain(b, b - 1, LC(), "bool")
        bits.append(b)
    cs.enforce_equal(lc_sum(b * (1 << i) for i, b in enumerate(bits)), var, "bits")
    return bits


def gadget_cmp(cs: Circuit, lhs, rhs, width: int, mode: Cmp = Cmp.GEQ) -> LC:
    """Output bit of ``lhs >= rhs`` (or ``<=``) for operands below 2**width."""
    if mode is Cmp.LEQ:
        lhs, rhs = rhs, lhs
    bits = gadget_num2bits(cs, as_lc(lhs) - as_lc(rhs) + (1 << width), width + 1)
    return bits[width]


def assert_true(cs: Circuit, bit, detail: str = "") -> None:
    cs.enforce_equal(bit, 1, detail or "assert")


def gadget_signmag(cs: Circuit, x, width: int = COMPARATOR_BITS) -> tuple[LC, LC]:
    """Witnessed sign bit s and magnitude m with ``x = (1 - 2s) m``, m < 2**width."""
    x = as_lc(x)
    if cs.wit:
        sv = field_to_signed(cs.val(x))
        s = cs.alloc(1 if sv < 0 else 0)
        m = cs.alloc(abs(sv))
    else:
        s, m = cs.alloc(), cs.alloc()
    cs.constrain(s, s - 1, LC(), "sign_bool")
    cs.constrain(1 - 2 * s, m, x, "signmag")
    gadget_num2bits(cs, m, width)
    return s, m


def assert_abs_le(cs: Circuit, x, bound, width: int = COMPARATOR_BITS, detail: str = "") -> None:
    """Enforce ``|x| <= bound`` with x read as a signed field element."""
    _, m = gadget_signmag(cs, x, width)
    ok = gadget_cmp(cs, bound, m, width, Cmp.GEQ)
    assert_true(cs, ok, detail or "bound")


def gadget_lookup(cs: Circuit, index, table: Sequence, hint: int | None = None) -> LC:
    """Select ``table[index]`` through a one-hot indicator vector.

    ``hint`` lets the witness generator choose the indicator position; the
    constraints tie that position to ``index`` regardless.
    """
    if len(table) < 1:
        raise ValueError("lookup table is empty")
    index = as_lc(index)
    pos = (hint if hint is not None else cs.val(index)) if cs.wit else -1
    ind = []
    for i in range(len(table)):
        e = cs.alloc(1 if i == pos else 0)
        cs.constrain(e, e - 1, LC(), "onehot_bool")
        ind.append(e)
    cs.enforce_equal(lc_sum(ind), 1, "onehot_sum")
    cs.enforce_equal(lc_sum(e * i for i, e in enumerate(ind) if i), index, "onehot_index")
    return lc_sum(cs.mul(e, t, "select") for e, t in zip(ind, table))


def gadget_mod(
    cs: Circuit, value, modulus: int, quot_width: int, quot_max: int | None = None
) -> LC:
    """Remainder of ``value`` by a build-time constant.

    The quotient is range-checked to ``quot_width`` bits and, if ``quot_max``
    is given, to ``qt <= quot_max`` so that ``qt*m + r`` cannot wrap P.
    """
    if modulus < 1:
        raise ValueError("modulus must be positive")
    value = as_lc(value)
    v = cs.val(value) if cs.wit else 0
    qt = cs.alloc(v // modulus)
    r = cs.alloc(v % modulus)
    cs.enforce_equal(qt * modulus + r, value, "divmod")
    gadget_num2bits(cs, qt, quot_width)
    if quot_max is not None:
        gadget_num2bits(cs, quot_max - qt, quot_width)
    if modulus > 1:
        rw = (modulus - 1).bit_length()
        gadget_num2bits(cs, r, rw)
        gadget_num2bits(cs, (modulus - 1) - r, rw)
    else:
        cs.enforce_equal(r, 0, "rem_zero")
    return r


def field_mod_params(modulus: int) -> tuple[int, int]:
    """Quotient width and cap reducing any field element below m*floor(P/m)."""
    quot_max = P // modulus - 1
    return quot_max.bit_length(), quot_max


# -- hashing -----------------------------------------------------------------


def gadget_permute(cs: Circuit, x, alg: HashAlg) -> LC:
    rounds, e = HASH_PARAMS[alg]
    t = as_lc(x)
    tv = cs.val(t) if cs.wit else 0
    for c in round_constants(rounds):
        a = t + c
        av = (tv + c) % P
        a2v = av * av % P
        a2 = cs.alloc(a2v)
        cs.constrain(a, a, a2, "sbox")
        a4v = a2v * a2v % P
        a4 = cs.alloc(a4v)
        cs.constrain(a2, a2, a4, "sbox")
        if e == 7:
            a6v = a4v * a2v % P
            a6 = cs.alloc(a6v)
            cs.constrain(a4, a2, a6, "sbox")
            tv = a6v * av % P
            t = cs.alloc(tv)
            cs.constrain(a6, a, t, "sbox")
        elif e == 5:
            tv = a4v * av % P
            t = cs.alloc(tv)
            cs.constrain(a4, a, t, "sbox")
        else:
            raise ValueError(f"unsupported S-box exponent {e}")
    return t


def gadget_sponge(cs: Circuit, values: Sequence, alg: HashAlg) -> LC:
    if not values:
        raise ValueError("sponge needs at least one input")
    s = LC()
    for v in values:
        t = s + as_lc(v)
        s = gadget_permute(cs, t, alg) + t
    return cs.materialize(s, "sponge_out")


def gadget_merkle_root(cs: Circuit, value_vars: Sequence, depth: int, alg: HashAlg) -> LC:
    """Recompute the six-packed tree over ``value_vars`` (commit order)."""
    if tree_depth(len(value_vars)) != depth:
        raise ValueError(
            f"depth {depth} does not match minimal depth for {len(value_vars)} values"
        )
    level = []
    for g in range(0, len(value_vars), GROUP_SIZE):
        group = [as_lc(v) for v in value_vars[g:g + GROUP_SIZE]]
        group += [LC()] * (GROUP_SIZE - len(group))
        level.append(gadget_sponge(cs, group, alg))
    for h in range(depth):
        nxt = []
        for i in range(0, len(level), 2):
            right = level[i + 1] if i + 1 < len(level) else LC.const(empty_subtree_hash(h, alg))
            nxt.append(gadget_sponge(cs, [level[i], right], alg))
        level = nxt
    return level[0]
