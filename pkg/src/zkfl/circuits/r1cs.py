"""Rank-1 constraint systems, a two-mode circuit builder and the
satisfaction verifier.

The same circuit-writing code runs in two modes.  Without values it only
records constraints (``build_*_circuit``); with values it also fills every
wire, producing a witness (``gen_*_witness``).  Sharing one code path keeps
the constraint system and the witness layout in lockstep.
"""
from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..fieldcodec import P


class MalformedProofError(ValueError):
    """Witness or public inputs do not even have the right shape."""


class WitnessError(ValueError):
    """Honest inputs violate a circuit check; ``check`` names it."""

    def __init__(self, check: str, detail: str = ""):
        super().__init__(f"check '{check}' violated{': ' + detail if detail else ''}")
        self.check = check
        self.detail = detail


class LC:
    """Linear combination over wires, ``{index: coeff}``; index 0 is the constant one."""

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[dict] = None):
        self.terms = terms if terms is not None else {}

    @classmethod
    def const(cls, c: int) -> "LC":
        c %= P
        return cls({0: c} if c else {})

    @classmethod
    def var(cls, idx: int) -> "LC":
        return cls({idx: 1})

    def _combine(self, other, sign: int) -> "LC":
        other = as_lc(other)
        out = dict(self.terms)
        for i, c in other.terms.items():
            v = (out.get(i, 0) + sign * c) % P
            if v:
                out[i] = v
            else:
                out.pop(i, None)
        return LC(out)

    def __add__(self, other) -> "LC":
        return self._combine(other, 1)

    __radd__ = __add__

    def __sub__(self, other) -> "LC":
        return self._combine(other, -1)

    def __rsub__(self, other) -> "LC":
        return as_lc(other)._combine(self, -1)

    def __neg__(self) -> "LC":
        return LC({i: (-c) % P for i, c in self.terms.items()})

    def __mul__(self, k: int) -> "LC":
        k %= P
        if not k:
            return LC()
        return LC({i: c * k % P for i, c in self.terms.items()})

    __rmul__ = __mul__

    def is_const(self) -> bool:
        return all(i == 0 for i in self.terms)

    def items(self) -> tuple:
        return tuple(sorted(self.terms.items()))


def as_lc(x) -> LC:
    if isinstance(x, LC):
        return x
    if isinstance(x, int):
        return LC.const(x)
    raise TypeError(f"cannot treat {type(x).__name__} as a linear combination")


def lc_sum(items: Iterable) -> LC:
    out: dict = {}
    for it in items:
        for i, c in as_lc(it).terms.items():
            v = (out.get(i, 0) + c) % P
            if v:
                out[i] = v
            else:
                out.pop(i, None)
    return LC(out)


@dataclass
class ConstraintSystem:
    num_vars: int
    constraints: list  # (a, b, c): tuples of (index, coeff)
    labels: list
    public_indices: list
    public_names: list = field(default_factory=list)
    name: str = ""

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def num_public(self) -> int:
        return len(self.public_indices)

    def section_counts(self) -> dict:
        out: dict = {}
        for lab in self.labels:
            sec = lab.split(":", 1)[0]
            out[sec] = out.get(sec, 0) + 1
        return out

    def to_json(self) -> dict:
        def enc(lc):
            return [[i, str(c)] for i, c in lc]

        return {
            "name": self.name,
            "num_vars": self.num_vars,
            "public_indices": list(self.public_indices),
            "public_names": list(self.public_names),
            "constraints": [
                {"a": enc(a), "b": enc(b), "c": enc(c), "label": lab}
                for (a, b, c), lab in zip(self.constraints, self.labels)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConstraintSystem":
        def dec(lc):
            return tuple((int(i), int(c)) for i, c in lc)

        cons = [(dec(c["a"]), dec(c["b"]), dec(c["c"])) for c in obj["constraints"]]
        return cls(
            num_vars=obj["num_vars"],
            constraints=cons,
            labels=[c["label"] for c in obj["constraints"]],
            public_indices=list(obj["public_indices"]),
            public_names=list(obj.get("public_names", [])),
            name=obj.get("name", ""),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))


@dataclass
class Witness:
    assignment: list

    def to_json(self) -> dict:
        return {"assignment": [str(v) for v in self.assignment]}

    @classmethod
    def from_json(cls, obj: dict) -> "Witness":
        return cls([int(v) for v in obj["assignment"]])


@dataclass(frozen=True)
class Verdict:
    ok: bool
    label: Optional[str] = None
    index: Optional[int] = None
    evaluated: int = 0

    @property
    def check(self) -> Optional[str]:
        """Section name of the violated constraint, e.g. ``merkle_train``."""
        return None if self.label is None else self.label.split(":", 1)[0]

    def __bool__(self) -> bool:
        return self.ok


def _ev(lc, z) -> int:
    s = 0
    for i, c in lc:
        s += c * z[i]
    return s


def cs_verify(cs: ConstraintSystem, witness: Witness, publics: list) -> Verdict:
    """Bind ``publics`` into the witness and check every constraint in order."""
    if len(publics) != len(cs.public_indices):
        raise MalformedProofError(
            f"expected {len(cs.public_indices)} public inputs, got {len(publics)}"
        )
    if len(witness.assignment) != cs.num_vars:
        raise MalformedProofError(
            f"witness has {len(witness.assignment)} wires, circuit needs {cs.num_vars}"
        )
    z = list(witness.assignment)
    for idx, v in zip(cs.public_indices, publics):
        z[idx] = int(v) % P
    if z[0] != 1:
        return Verdict(False, "const_one", None, 0)
    for n, (a, b, c) in enumerate(cs.constraints):
        if (_ev(a, z) * _ev(b, z) - _ev(c, z)) % P:
            return Verdict(False, cs.labels[n], n, n + 1)
    return Verdict(True, None, None, len(cs.constraints))


class Circuit:
    """Constraint recorder that optionally carries wire values."""

    def __init__(
        self, name: str = "", witness_mode: bool = False, check: bool = False, count_only: bool = False
    ):
        self.name = name
        self.wit = witness_mode
        self.count_only = count_only and not witness_mode
        self.count = 0
        self.check = check and witness_mode
        self.values: list = [1]
        self.constraints: list = []
        self.labels: list = []
        self.public_indices: list = []
        self.public_names: list = []
        self._section = "main"
        self.first_violation: Optional[str] = None

    # -- wires --------------------------------------------------------------

    def alloc(self, value: Optional[int] = None) -> LC:
        idx = len(self.values)
        self.values.append((value % P) if (self.wit and value is not None) else 0)
        return LC.var(idx)

    def public(self, name: str, value: Optional[int] = None) -> LC:
        v = self.alloc(value)
        (idx,) = v.terms
        self.public_indices.append(idx)
        self.public_names.append(name)
        return v

    def val(self, x) -> int:
        """Current value of an LC (witness mode only)."""
        s = 0
        for i, c in as_lc(x).terms.items():
            s += c * self.values[i]
        return s % P

    # -- constraints --------------------------------------------------------

    @contextmanager
    def section(self, name: str):
        prev, self._section = self._section, name
        try:
            yield
        finally:
            self._section = prev

    def constrain(self, a, b, c, detail: str = "") -> None:
        self.count += 1
        if self.count_only:
            return
        a, b, c = as_lc(a), as_lc(b), as_lc(c)
        if self.wit:
            # witness generation only needs values; the system is built separately
            if self.check and self.first_violation is None:
                if (self.val(a) * self.val(b) - self.val(c)) % P:
                    self.first_violation = f"{self._section}:{detail}" if detail else self._section
            return
        self.constraints.append((a.items(), b.items(), c.items()))
        self.labels.append(f"{self._section}:{detail}" if detail else self._section)

    def enforce_equal(self, x, y, detail: str = "") -> None:
        self.constrain(as_lc(x) - as_lc(y), LC.const(1), LC(), detail)

    def mul(self, x, y, detail: str = "") -> LC:
        x, y = as_lc(x), as_lc(y)
        if x.is_const() or y.is_const():
            # scaling by a constant needs no constraint
            if x.is_const():
                return y * x.terms.get(0, 0)
            return x * y.terms.get(0, 0)
        out = self.alloc(self.val(x) * self.val(y) if self.wit else None)
        self.constrain(x, y, out, detail)
        return out

    def materialize(self, x, detail: str = "") -> LC:
        x = as_lc(x)
        if len(x.terms) == 1 and 0 not in x.terms and next(iter(x.terms.values())) == 1:
            return x
        out = self.alloc(self.val(x) if self.wit else None)
        self.enforce_equal(out, x, detail)
        return out

    def system(self) -> ConstraintSystem:
        return ConstraintSystem(
            num_vars=len(self.values),
            constraints=self.constraints,
            labels=self.labels,
            public_indices=list(self.public_indices),
            public_names=list(self.public_names),
            name=self.name,
        )

    def witness(self) -> Witness:
        return Witness(list(self.values))

    def publics(self) -> list:
        return [self.values[i] for i in self.public_indices]
