"""x = solve(DenseSystem(a, b)).

Gauss elimination with partial pivoting for the small dense systems of the
queue analyzers, plus one step of iterative refinement when the residual is
above tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from regen_bounds.errors import DomainError, SingularError

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-13
RESIDUAL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class DenseSystem:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DomainError(f"solve: matrix must be square with n >= 1, got shape {a.shape}")
        if b.shape[0] != a.shape[0]:
            raise DomainError(f"solve: rhs has length {b.shape[0]}, expected {a.shape[0]}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def residual(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.a @ x - self.b)))


def _eliminate(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a.copy()
    b = b.copy()
    n = b.shape[0]

    for k in range(n - 1):
        p = int(np.argmax(np.abs(a[k:, k]))) + k
        if abs(a[p, k]) <= PIVOT_TOLERANCE:
            raise SingularError(k, a[p, k])
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]

        lam = a[k + 1 :, k] / a[k, k]
        a[k + 1 :, k:] -= np.outer(lam, a[k, k:])
        b[k + 1 :] -= lam * b[k]
    if abs(a[n - 1, n - 1]) <= PIVOT_TOLERANCE:
        raise SingularError(n - 1, a[n - 1, n - 1])

    x = np.empty(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1 :] @ x[k + 1 :]) / a[k, k]
    return x


def solve(system: DenseSystem) -> np.ndarray:
    x = _eliminate(system.a, system.b)
    tol = RESIDUAL_TOLERANCE * (1.0 + float(np.max(np.abs(system.b))))
    res = system.residual(x)
    if res > tol:
        correction = _eliminate(system.a, system.b - system.a @ x)
        x = x + correction
        logger.debug("solve: refined n=%d residual %.3e -> %.3e", system.n, res, system.residual(x))
    return x
