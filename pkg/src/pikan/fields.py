"""Containers for (u, v, p, T) fields and their spatial derivatives.

Both hold either numpy arrays or torch tensors; nothing here forces a backend.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import torch

FIELD_NAMES = ("u", "v", "p", "T")
DERIVATIVE_NAMES = (
    "u_x", "u_y", "v_x", "v_y", "p_x", "p_y", "T_x", "T_y",
    "u_xx", "u_yy", "v_xx", "v_yy", "T_xx", "T_yy",
)


def _take(a, idx):
    if isinstance(a, torch.Tensor):
        return a[..., torch.as_tensor(np.asarray(idx), dtype=torch.long)]
    return np.asarray(a)[..., np.asarray(idx)]


@dataclass
class FieldSolution:
    """Velocity (m/s), pressure (Pa) and temperature (K) per point."""

    u: object
    v: object
    p: object
    T: object

    @classmethod
    def from_array(cls, arr) -> "FieldSolution":
        """Split a ``(..., 4)`` array ordered (u, v, p, T)."""
        return cls(arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3])

    def as_array(self):
        parts = [self.u, self.v, self.p, self.T]
        if isinstance(self.u, torch.Tensor):
            return torch.stack(parts, dim=-1)
        return np.stack([np.asarray(x, dtype=float) for x in parts], axis=-1)

    def take(self, idx) -> "FieldSolution":
        return FieldSolution(*(_take(getattr(self, n), idx) for n in FIELD_NAMES))

    def numpy(self) -> "FieldSolution":
        return FieldSolution(*(_to_numpy(getattr(self, n)) for n in FIELD_NAMES))

    def __len__(self) -> int:
        return int(np.shape(self.u)[-1])

    def __getitem__(self, name: str):
        return getattr(self, name)


@dataclass
class FieldDerivatives:
    """First and second spatial derivatives needed by the residuals."""

    u_x: object
    u_y: object
    v_x: object
    v_y: object
    p_x: object
    p_y: object
    T_x: object
    T_y: object
    u_xx: object
    u_yy: object
    v_xx: object
    v_yy: object
    T_xx: object
    T_yy: object

    def take(self, idx) -> "FieldDerivatives":
        return FieldDerivatives(**{n: _take(getattr(self, n), idx) for n in DERIVATIVE_NAMES})

    def numpy(self) -> "FieldDerivatives":
        return FieldDerivatives(**{n: _to_numpy(getattr(self, n)) for n in DERIVATIVE_NAMES})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def _to_numpy(a):
    if isinstance(a, torch.Tensor):
        return a.detach().cpu().numpy()
    return np.asarray(a)
