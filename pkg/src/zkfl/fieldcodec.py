"""Prime-field arithmetic and sign/magnitude fixed-point encoding.

Real-valued protocol data (features, targets, weights, inverses) is rounded
to ``d`` decimals and stored as a sign bit plus a natural magnitude.  Inside
constraint systems the same value appears as a field element, with negative
numbers embedded as ``P - mag``.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from typing import Iterable, NamedTuple, Sequence

import numpy as np

# BN254 scalar field
P = 21888242871839275222246405745257275088548364400416034343698204186575808495617

# Magnitudes entering comparators must stay below 2**COMPARATOR_BITS so that a
# product of two of them cannot wrap around P.
COMPARATOR_BITS = 126


class EncodingError(ValueError):
    pass


class SignMag(NamedTuple):
    sign: int
    mag: int

    @classmethod
    def from_int(cls, v: int) -> "SignMag":
        return cls(1, -v) if v < 0 else cls(0, v)

    def to_int(self) -> int:
        return -self.mag if self.sign else self.mag


def round_half_away(num: int, den: int) -> int:
    """Integer ``num / den`` rounded half away from zero (``den > 0``)."""
    if den <= 0:
        raise ValueError("denominator must be positive")
    q, r = divmod(abs(num), den)
    if 2 * r >= den:
        q += 1
    return -q if num < 0 else q


def fp_encode(x: float, d: int) -> SignMag:
    # Decimal of the shortest repr, so that -1.255 scales to exactly 125.5
    # instead of the binary 125.49999...
    if not np.isfinite(x):
        raise EncodingError(f"cannot encode non-finite value {x!r}")
    with localcontext() as ctx:
        ctx.prec = 80
        scaled = abs(Decimal(repr(float(x)))).scaleb(d)
        mag = int(scaled.quantize(Decimal(1), rounding=ROUND_HALF_UP))
    if mag >= 1 << COMPARATOR_BITS:
        raise EncodingError(f"|{x}|*10^{d} exceeds {COMPARATOR_BITS}-bit comparator width")
    if mag == 0:
        return SignMag(0, 0)
    return SignMag(1 if x < 0 else 0, mag)


def fp_decode(v: SignMag, d: int) -> float:
    sign, mag = v
    out = float(Decimal(mag).scaleb(-d))
    return -out if sign else out


def field_embed(v: SignMag) -> int:
    sign, mag = v
    if mag >= P:
        raise EncodingError("magnitude does not fit in the field")
    if sign and mag:
        return P - mag
    return mag


def field_to_signed(x: int) -> int:
    """Inverse of the signed embedding: values above P/2 read as negative."""
    x %= P
    return x - P if x > P // 2 else x


def embed_int(v: int) -> int:
    return v % P


@dataclass(frozen=True)
class ScaledMatrix:
    """Row-major matrix of SignMag entries sharing one decimal scale."""

    rows: int
    cols: int
    entries: tuple
    scale: int

    def __post_init__(self):
        if len(self.entries) != self.rows * self.cols:
            raise ValueError(
                f"expected {self.rows * self.cols} entries, got {len(self.entries)}"
            )

    @classmethod
    def from_ints(cls, rows: int, cols: int, values: Iterable[int], scale: int) -> "ScaledMatrix":
        return cls(rows, cols, tuple(SignMag.from_int(int(v)) for v in values), scale)

    @classmethod
    def from_array(cls, arr, d: int) -> "ScaledMatrix":
        a = np.asarray(arr, dtype=float)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        rows, cols = a.shape
        return cls(rows, cols, tuple(fp_encode(x, d) for x in a.ravel()), d)

    @classmethod
    def column(cls, values: Sequence[int], scale: int) -> "ScaledMatrix":
        return cls.from_ints(len(values), 1, values, scale)

    def ints(self) -> list[int]:
        return [e.to_int() for e in self.entries]

    def get(self, i: int, j: int) -> SignMag:
        return self.entries[i * self.cols + j]

    def int_rows(self) -> list[list[int]]:
        v = self.ints()
        return [v[r * self.cols:(r + 1) * self.cols] for r in range(self.rows)]

    def to_array(self) -> np.ndarray:
        return np.array([fp_decode(e, self.scale) for e in self.entries]).reshape(
            self.rows, self.cols
        )

    def field_elements(self) -> list[int]:
        return [field_embed(e) for e in self.entries]

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "scale": self.scale,
            "entries": [[e.sign, str(e.mag)] for e in self.entries],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScaledMatrix":
        return cls(
            obj["rows"],
            obj["cols"],
            tuple(SignMag(int(s), int(m)) for s, m in obj["entries"]),
            obj["scale"],
        )


def identity(size: int, scale: int = 0) -> ScaledMatrix:
    one = 10 ** scale
    return ScaledMatrix.from_ints(
        size, size, [one if i == j else 0 for i in range(size) for j in range(size)], scale
    )


def scaled_matmul(a: ScaledMatrix, b: ScaledMatrix) -> ScaledMatrix:
    """Exact product; scales add and nothing is rounded."""
    if a.cols != b.rows:
        raise ValueError(f"dimension mismatch: {a.rows}x{a.cols} @ {b.rows}x{b.cols}")
    ar, br = a.int_rows(), b.int_rows()
    out = []
    for i in range(a.rows):
        row = ar[i]
        for j in range(b.cols):
            out.append(sum(row[l] * br[l][j] for l in range(a.cols)))
    return ScaledMatrix.from_ints(a.rows, b.cols, out, a.scale + b.scale)


def rescale(m: ScaledMatrix, scale: int) -> ScaledMatrix:
    """Round a matrix down to a smaller scale (half away from zero)."""
    if scale > m.scale:
        f = 10 ** (scale - m.scale)
        return ScaledMatrix.from_ints(m.rows, m.cols, [v * f for v in m.ints()], scale)
    den = 10 ** (m.scale - scale)
    return ScaledMatrix.from_ints(
        m.rows, m.cols, [round_half_away(v, den) for v in m.ints()], scale
    )
