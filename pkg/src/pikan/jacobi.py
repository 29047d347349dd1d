"""Jacobi polynomial bases evaluated by three-term recursion.

The same code path serves numpy arrays and torch tensors, so the basis can sit
inside an autograd graph (KAN layers) or be checked against closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

__all__ = [
    "JacobiParams",
    "LEGENDRE",
    "CHEBYSHEV_FIRST",
    "CHEBYSHEV_SECOND",
    "gegenbauer",
    "recurrence_coeffs",
    "eval_basis",
]


@dataclass(frozen=True)
class JacobiParams:
    """Exponents (alpha, beta) and highest order ``degree`` of a Jacobi basis."""

    alpha: float = -0.5
    beta: float = -0.5
    degree: int = 2

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError(f"degree must be a non-negative integer, got {self.degree!r}")
        if not (self.alpha > -1 and self.beta > -1):
            raise ValueError(
                f"alpha and beta must both exceed -1, got alpha={self.alpha}, beta={self.beta}"
            )
        object.__setattr__(self, "degree", int(self.degree))

    @property
    def n_basis(self) -> int:
        return self.degree + 1


LEGENDRE = JacobiParams(0.0, 0.0)
CHEBYSHEV_FIRST = JacobiParams(-0.5, -0.5)
CHEBYSHEV_SECOND = JacobiParams(0.5, 0.5)


def gegenbauer(a: float, degree: int = 2) -> JacobiParams:
    """Ultraspherical family: alpha = beta = a."""
    return JacobiParams(a, a, degree)


def recurrence_coeffs(order: int, params: JacobiParams) -> tuple[float, float, float]:
    """Coefficients (A, B, C) of ``P_n = (A z + B) P_{n-1} + C P_{n-2}`` for n = order."""
    if order < 2:
        raise ValueError(f"recursion coefficients are defined for order >= 2, got {order}")
    n = order
    a, b = params.alpha, params.beta
    s = a + b
    den_a = 2 * n * (n + s)
    den_bc = den_a * (2 * n + s - 2)
    if den_a == 0 or den_bc == 0:
        raise AssertionError(f"zero denominator in Jacobi recursion (n={n}, alpha={a}, beta={b})")
    A = (2 * n + s - 1) * (2 * n + s) / den_a
    B = (2 * n + s - 1) * (a * a - b * b) / den_bc
    C = -2 * (n + a - 1) * (n + b - 1) * (2 * n + s) / den_bc
    return A, B, C


def eval_basis(z, params: JacobiParams):
    """Evaluate ``P_0..P_n`` at ``z``; the order axis is appended last.

    Works on numpy arrays (and scalars) and on torch tensors; with tensors the
    result is differentiable to any order. The caller controls the range of
    ``z`` (KAN layers squash with tanh first).
    """
    if not isinstance(params, JacobiParams):
        raise TypeError("params must be a JacobiParams instance")
    is_torch = isinstance(z, torch.Tensor)
    if not is_torch:
        z = np.asarray(z, dtype=float)
    ones = torch.ones_like(z) if is_torch else np.ones_like(z)

    polys = [ones]
    if params.degree >= 1:
        a, b = params.alpha, params.beta
        polys.append(0.5 * (a + b + 2) * z + 0.5 * (a - b))
    for n in range(2, params.degree + 1):
        A, B, C = recurrence_coeffs(n, params)
        polys.append((A * z + B) * polys[-1] + C * polys[-2])

    if is_torch:
        return torch.stack(polys, dim=-1)
    return np.stack(polys, axis=-1)
