"""Scalar positive-definite kernels.

The vector-valued space used for identification carries the separable kernel
``K(x, y) = k(x, y) * I``, so everything downstream only needs the scalar
kernel ``k`` defined here.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

FAMILIES = ("gaussian", "exponential-dot-product")


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family and its shape parameter.

    ``gaussian``: ``k(x, y) = exp(-|x - y|^2 / shape)``.
    ``exponential-dot-product``: ``k(x, y) = exp(x.y / shape)``.
    """

    family: str
    shape: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        shape = float(self.shape)
        if not np.isfinite(shape) or shape <= 0:
            raise ValueError(f"kernel shape must be a positive finite number, got {self.shape!r}")
        object.__setattr__(self, "shape", shape)

    def to_dict(self):
        return {"family": self.family, "shape": self.shape}

    @classmethod
    def from_dict(cls, d):
        return cls(family=d["family"], shape=d["shape"])


def kernel_eval(cfg, x, y):
    """Evaluate ``k(x, y)`` for two state vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"state dimension mismatch: {x.shape} vs {y.shape}")
    if cfg.family == "gaussian":
        d = x - y
        return float(np.exp(-np.dot(d, d) / cfg.shape))
    return float(np.exp(np.dot(x, y) / cfg.shape))


def _as_states(X, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a list of state vectors")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    return X


def kernel_cross_matrix(cfg, X, Y):
    """Return the ``p x q`` matrix ``k(X[i], Y[j])``.

    ``X`` and ``Y`` are ``(p, n)`` and ``(q, n)`` arrays (a 1-D array is read
    as ``p`` scalar states).
    """
    X = _as_states(X, "X")
    Y = _as_states(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"state dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if cfg.family == "gaussian":
        # cdist differences each pair directly: exact zeros on the diagonal, exact symmetry
        D = cdist(X, Y, "sqeuclidean")
        D /= -cfg.shape
    else:
        D = X @ Y.T
        D /= cfg.shape
    return np.exp(D, out=D)
