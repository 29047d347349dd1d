"""Shared Jacobi-KAN layer.

Every edge (input j -> output o) carries psi(z) = sum_i coeff[o, j, i] P_i(z),
with the input squashed by tanh before the basis is evaluated. The layer is
applied identically to every point of a cloud (last axis = features).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .jacobi import JacobiParams, eval_basis

__all__ = [
    "KanLayerSpec",
    "init_coefficients",
    "kan_forward",
    "layer_param_count",
    "JacobiKANLayer",
]


@dataclass(frozen=True)
class KanLayerSpec:
    d_input: int
    d_output: int
    jacobi: JacobiParams = JacobiParams()

    def __post_init__(self):
        if self.d_input < 1 or self.d_output < 1:
            raise ValueError(
                f"layer widths must be >= 1, got d_input={self.d_input}, d_output={self.d_output}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.d_output, self.d_input, self.jacobi.n_basis)


def layer_param_count(spec: KanLayerSpec) -> int:
    return spec.jacobi.n_basis * spec.d_output * spec.d_input


def init_coefficients(
    spec: KanLayerSpec,
    seed: int | None = None,
    *,
    generator: torch.Generator | None = None,
    dtype: torch.dtype = torch.float64,
) -> torch.Tensor:
    """Draw coefficients i.i.d. N(0, 1 / (d_input * (n + 1))).

    Pass either an integer ``seed`` or an existing ``generator`` (the latter is
    how a network seeds its layers in sequence).
    """
    if generator is None:
        generator = torch.Generator().manual_seed(0 if seed is None else int(seed))
    std = 1.0 / math.sqrt(spec.d_input * spec.jacobi.n_basis)
    out = torch.randn(spec.shape, generator=generator, dtype=torch.float64) * std
    return out.to(dtype)


def kan_forward(x: torch.Tensor, coefficients: torch.Tensor, jacobi: JacobiParams) -> torch.Tensor:
    """Map ``(..., d_input) -> (..., d_output)``."""
    d_out, d_in, n_basis = coefficients.shape
    if x.shape[-1] != d_in:
        raise ValueError(f"expected trailing dimension {d_in}, got input of shape {tuple(x.shape)}")
    if n_basis != jacobi.n_basis:
        raise ValueError(
            f"coefficient array holds {n_basis} basis functions but degree {jacobi.degree} needs {jacobi.n_basis}"
        )
    basis = eval_basis(torch.tanh(x), jacobi)  # (..., d_in, n+1)
    lead = basis.shape[:-2]
    out = basis.reshape(-1, d_in * n_basis) @ coefficients.reshape(d_out, d_in * n_basis).T
    return out.reshape(*lead, d_out)


class JacobiKANLayer(nn.Module):
    """Trainable shared KAN layer (no bias: P_0 already carries the constant)."""

    def __init__(
        self,
        spec: KanLayerSpec,
        *,
        seed: int | None = None,
        generator: torch.Generator | None = None,
        dtype: torch.dtype = torch.float64,
    ):
        super().__init__()
        self.spec = spec
        self.coefficients = nn.Parameter(
            init_coefficients(spec, seed, generator=generator, dtype=dtype)
        )

    @property
    def d_input(self) -> int:
        return self.spec.d_input

    @property
    def d_output(self) -> int:
        return self.spec.d_output

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return kan_forward(x, self.coefficients, self.spec.jacobi)

    def extra_repr(self) -> str:
        j = self.spec.jacobi
        return f"{self.d_input} -> {self.d_output}, degree={j.degree}, alpha={j.alpha}, beta={j.beta}"
