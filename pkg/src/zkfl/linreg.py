"""Floating-point side of the client pipeline: z-scoring, normal-equation
training with an approximate inverse, the Newman bound and the RSS cost."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class NormalizationError(ValueError):
    pass


class TrainingError(ValueError):
    pass


class BoundError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # n x k, without the ones column
    targets: np.ndarray  # n

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.features, dtype=float))
        if f.shape[0] == 1 and np.ndim(self.features) == 1:
            f = f.T
        t = np.asarray(self.targets, dtype=float).reshape(-1)
        if f.shape[0] != t.shape[0]:
            raise ValueError(f"{f.shape[0]} feature rows but {t.shape[0]} targets")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "targets", t)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def k(self) -> int:
        return self.features.shape[1]

    def design(self) -> np.ndarray:
        return np.hstack([np.ones((self.n, 1)), self.features])


@dataclass(frozen=True)
class TrainedModel:
    w: np.ndarray
    Z: np.ndarray
    residual: np.ndarray
    inverse_residual: float


@dataclass(frozen=True)
class BoundSet:
    """Public thresholds, each in scaled integer units.

    ``eps_mu``, ``theta_z``, ``eps_w`` and ``eps_w_noisy`` live at scale d;
    ``eps_sigma``, ``eps_inverse`` and ``theta_xty`` at scale 2d.
    """

    eps_mu: int
    eps_sigma: int
    eps_inverse: int
    theta_z: int
    theta_xty: int
    eps_w: int
    eps_w_noisy: int

    def to_json(self) -> dict:
        return {k: str(v) for k, v in self.__dict__.items()}

    @classmethod
    def from_json(cls, obj: dict) -> "BoundSet":
        return cls(**{k: int(v) for k, v in obj.items()})

    def with_overrides(self, **kw) -> "BoundSet":
        return replace(self, **{k: int(v) for k, v in kw.items()})


def default_bounds(k: int, n: int, d: int, eps_inverse: float = 1e-3) -> BoundSet:
    """Thresholds loose enough for honest rounding, tight enough to catch tampering."""
    if not 0 <= eps_inverse < 1:
        raise BoundError("eps_inverse must lie in [0, 1)")
    size = k + 1
    theta_z_real = 10 * size
    theta_xty_real = 2 * size * n
    eps_w = math.ceil(theta_z_real * eps_inverse * theta_xty_real * 10 ** d) + size
    return BoundSet(
        eps_mu=n,
        eps_sigma=10 * n * 10 ** d,
        eps_inverse=round(eps_inverse * 10 ** (2 * d)),
        theta_z=theta_z_real * 10 ** d,
        theta_xty=theta_xty_real * 10 ** (2 * d),
        eps_w=eps_w,
        eps_w_noisy=size,
    )


def matnorm(a) -> float:
    """Max-entry norm scaled by the row dimension; submultiplicative."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return a.shape[0] * float(np.max(np.abs(a)))


def normalize(raw: Dataset) -> Dataset:
    cols = np.column_stack([raw.features, raw.targets])
    names = [f"x{j + 1}" for j in range(raw.k)] + ["y"]
    mu = cols.mean(axis=0)
    sd = cols.std(axis=0)
    for name, s, col in zip(names, sd, cols.T):
        if s == 0 or s < 1e-12 * max(1.0, float(np.max(np.abs(col)))):
            raise NormalizationError(f"column {name} has zero variance")
    z = (cols - mu) / sd
    return Dataset(z[:, :-1], z[:, -1])


def gauss_inverse(a: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    m = a.shape[0]
    aug = np.hstack([a, np.eye(m)])
    scale = max(float(np.max(np.abs(a))), 1e-300)
    for col in range(m):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) <= rtol * scale:
            raise TrainingError(f"XtX is numerically singular (pivot {col})")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for r in range(m):
            if r != col and aug[r, col] != 0.0:
                aug[r] -= aug[r, col] * aug[col]
    return aug[:, m:]


def train(norm: Dataset) -> TrainedModel:
    X = norm.design()
    xtx = X.T @ X
    Z = gauss_inverse(xtx)
    w = Z @ (X.T @ norm.targets)
    resid = norm.targets - X @ w
    inv_res = matnorm(xtx @ Z - np.eye(xtx.shape[0]))
    return TrainedModel(w=w, Z=Z, residual=resid, inverse_residual=inv_res)


def newman_bound(Z, inverse_residual: float) -> float:
    if inverse_residual >= 1:
        raise BoundError("Neumann series diverges: inverse residual must be < 1")
    return matnorm(Z) * inverse_residual / (1.0 - inverse_residual)


def rss_cost(w, test: Dataset) -> float:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != test.k + 1:
        raise ValueError(f"weight has {w.shape[0]} entries, test set needs {test.k + 1}")
    r = test.targets - test.design() @ w
    return float(r @ r)
