"""Steady Boussinesq natural convection: residuals and the physics-informed loss.

Residuals are written with plain arithmetic so they run on numpy arrays
(analytic checks) and torch tensors (training) alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
import torch

from .fields import FieldDerivatives, FieldSolution

__all__ = [
    "FluidParams",
    "LossBreakdown",
    "LOSS_TERMS",
    "dimensionless",
    "boussinesq_forcing",
    "pointwise_residuals",
    "pde_residuals",
    "pipn_loss",
    "batched_pipn_loss",
    "autodiff_derivatives",
    "DirectFieldAdapter",
]

LOSS_TERMS = (
    "continuity",
    "momentum_x",
    "momentum_y",
    "energy",
    "velocity_bc",
    "temperature_outer_bc",
    "velocity_obs",
    "pressure_obs",
    "temperature_obs",
)

_DIFFUSIVITY = 2 * math.sqrt(2) * 10 ** -2.5


@dataclass(frozen=True)
class FluidParams:
    """Fluid properties in SI units. Defaults give Ra = 1e5, Pr = 1 for L = 2 m."""

    rho: float = 1.0
    mu: float = _DIFFUSIVITY
    kappa: float = _DIFFUSIVITY
    cp: float = 1.0
    G: float = 1.0
    beta_exp: float = 1.0
    T_hot: float = 1.0
    T_cold: float = 0.0
    T_ref: float = 0.0

    def __post_init__(self):
        for name in ("rho", "mu", "kappa", "cp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.T_hot > self.T_cold:
            raise ValueError("T_hot must exceed T_cold")


def dimensionless(params: FluidParams, L: float) -> tuple[float, float]:
    """Rayleigh and Prandtl numbers for enclosure side length ``L``."""
    if L <= 0:
        raise ValueError("L must be positive")
    p = params
    ra = p.rho ** 2 * p.cp * p.G * p.beta_exp * (p.T_hot - p.T_cold) * L ** 3 / (p.kappa * p.mu)
    pr = p.cp * p.mu / p.kappa
    return ra, pr


def boussinesq_forcing(T, params: FluidParams):
    fy = params.rho * params.G * params.beta_exp * (T - params.T_ref)
    fx = fy * 0
    return fx, fy


def pointwise_residuals(fields_: FieldSolution, d: FieldDerivatives, params: FluidParams):
    """Continuity, x/y momentum and energy residuals at each point (no sources)."""
    u, v, T = fields_.u, fields_.v, fields_.T
    rho, mu = params.rho, params.mu
    fx, fy = boussinesq_forcing(T, params)
    continuity = d.u_x + d.v_y
    mom_x = rho * (u * d.u_x + v * d.u_y) + d.p_x - mu * (d.u_xx + d.u_yy) - fx
    mom_y = rho * (u * d.v_x + v * d.v_y) + d.p_y - mu * (d.v_xx + d.v_yy) - fy
    energy = rho * (u * d.T_x + v * d.T_y) - params.kappa / params.cp * (d.T_xx + d.T_yy)
    return continuity, mom_x, mom_y, energy


def pde_residuals(fields_: FieldSolution, derivs: FieldDerivatives, params: FluidParams,
                  sources=None):
    """Mean-square residuals (continuity, momentum_x, momentum_y, energy).

    ``sources`` is an optional ``(M, 3)`` array of manufactured source terms
    (momentum x, momentum y, energy) subtracted from the residuals.
    """
    n = len(fields_)
    for name in ("u_x", "T_yy"):
        if np.shape(getattr(derivs, name))[-1] != n:
            raise ValueError("fields and derivatives are not aligned on the same points")
    c, mx, my, e = pointwise_residuals(fields_, derivs, params)
    if sources is not None:
        if isinstance(mx, torch.Tensor):
            sources = torch.as_tensor(sources, dtype=mx.dtype)
        if sources.shape[-2:] != (n, 3):
            raise ValueError(f"sources must have shape ({n}, 3), got {tuple(sources.shape)}")
        mx = mx - sources[..., 0]
        my = my - sources[..., 1]
        e = e - sources[..., 2]
    return (c ** 2).mean(), (mx ** 2).mean(), (my ** 2).mean(), (e ** 2).mean()


@dataclass
class LossBreakdown:
    continuity: object
    momentum_x: object
    momentum_y: object
    energy: object
    velocity_bc: object
    temperature_outer_bc: object
    velocity_obs: object
    pressure_obs: object
    temperature_obs: object

    @property
    def total(self):
        return sum(getattr(self, name) for name in LOSS_TERMS)

    def as_dict(self) -> dict:
        def num(v):
            return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        out = {name: num(getattr(self, name)) for name in LOSS_TERMS}
        out["total"] = num(self.total)
        return out

    def detach(self) -> "LossBreakdown":
        return LossBreakdown(**{
            f.name: (getattr(self, f.name).detach() if isinstance(getattr(self, f.name), torch.Tensor)
                     else getattr(self, f.name))
            for f in fields(self)
        })

    @classmethod
    def mean(cls, items: list["LossBreakdown"]) -> "LossBreakdown":
        if not items:
            raise ValueError("cannot average an empty list of losses")
        k = len(items)
        return cls(**{name: sum(getattr(it, name) for it in items) / k for name in LOSS_TERMS})


def _like(ref, arr):
    if isinstance(ref, torch.Tensor):
        return torch.as_tensor(np.asarray(arr), dtype=ref.dtype)
    return np.asarray(arr, dtype=float)


def pipn_loss(prediction: FieldSolution, derivs: FieldDerivatives, cloud, observations,
              params: FluidParams) -> LossBreakdown:
    """Nine-term loss for one geometry.

    ``prediction``/``derivs`` cover all N cloud points. ``observations`` is a
    :class:`pikan.groundtruth.Observations` (sensor values, boundary targets and
    optional manufactured sources).
    """
    cloud.validate()
    observations.check_against(cloud)
    interior = cloud.idx_interior

    pde = pde_residuals(prediction.take(interior), derivs.take(interior), params,
                        observations.sources)

    ref = prediction.u
    bnd = prediction.take(cloud.idx_boundary)
    bc_vel = _like(ref, observations.bc_velocity)
    velocity_bc = ((bnd.u - bc_vel[:, 0]) ** 2 + (bnd.v - bc_vel[:, 1]) ** 2).mean()

    outer = prediction.take(cloud.idx_outer)
    temperature_outer_bc = ((outer.T - _like(ref, observations.bc_temperature_outer)) ** 2).mean()

    vs = prediction.take(cloud.idx_vel_sensors)
    vel = _like(ref, observations.velocity)
    velocity_obs = ((vs.u - vel[:, 0]) ** 2 + (vs.v - vel[:, 1]) ** 2).mean()

    ps = prediction.take(cloud.idx_pt_sensors)
    pressure_obs = ((ps.p - _like(ref, observations.pressure)) ** 2).mean()
    temperature_obs = ((ps.T - _like(ref, observations.temperature)) ** 2).mean()

    return LossBreakdown(*pde, velocity_bc, temperature_outer_bc, velocity_obs,
                         pressure_obs, temperature_obs)


def batched_pipn_loss(mapping, coords: torch.Tensor, clouds, observations, params: FluidParams
                      ) -> LossBreakdown:
    """Loss averaged over the geometries of one batch.

    ``mapping`` is anything with ``fields_and_derivatives(coords)`` returning
    ``((B, N, 4) outputs, FieldDerivatives of (B, N))``: a network or a
    :class:`DirectFieldAdapter`.
    """
    if not (len(clouds) == len(observations) == coords.shape[0]):
        raise ValueError("coords, clouds and observations disagree on the batch size")
    out, derivs = mapping.fields_and_derivatives(coords)
    items = []
    for b, (cloud, obs) in enumerate(zip(clouds, observations)):
        pred = FieldSolution.from_array(out[b])
        d = FieldDerivatives(**{k: val[b] for k, val in derivs.as_dict().items()})
        items.append(pipn_loss(pred, d, cloud, obs, params))
    return LossBreakdown.mean(items)


def _grad(y: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    g = torch.autograd.grad(y.sum(), x, create_graph=True, allow_unused=True)[0]
    return torch.zeros_like(x) if g is None else g


def autodiff_derivatives(out: torch.Tensor, query: torch.Tensor) -> FieldDerivatives:
    """Derivatives of a pointwise map ``query (..., 2) -> out (..., 4)``.

    Output ``k`` at a point must depend only on that point's query coordinate,
    which is what lets a gradient of the summed output stand in for the
    per-point gradient. The graph is kept so the loss can be backpropagated.
    """
    gu, gv, gp, gT = (_grad(out[..., k], query) for k in range(4))
    u_x, u_y = gu[..., 0], gu[..., 1]
    v_x, v_y = gv[..., 0], gv[..., 1]
    T_x, T_y = gT[..., 0], gT[..., 1]
    return FieldDerivatives(
        u_x=u_x, u_y=u_y, v_x=v_x, v_y=v_y,
        p_x=gp[..., 0], p_y=gp[..., 1],
        T_x=T_x, T_y=T_y,
        u_xx=_grad(u_x, query)[..., 0], u_yy=_grad(u_y, query)[..., 1],
        v_xx=_grad(v_x, query)[..., 0], v_yy=_grad(v_y, query)[..., 1],
        T_xx=_grad(T_x, query)[..., 0], T_yy=_grad(T_y, query)[..., 1],
    )


class DirectFieldAdapter:
    """Stand-in for a network that returns closed-form fields and derivatives.

    ``case`` must provide ``fields(x, y) -> FieldSolution`` and
    ``derivatives(x, y) -> FieldDerivatives`` on numpy arrays.
    """

    def __init__(self, case, dtype: torch.dtype = torch.float64):
        self.case = case
        self.dtype = dtype

    def _xy(self, coords):
        c = coords.detach().cpu().numpy() if isinstance(coords, torch.Tensor) else np.asarray(coords)
        return c[..., 0], c[..., 1]

    def __call__(self, coords) -> torch.Tensor:
        x, y = self._xy(coords)
        return torch.as_tensor(self.case.fields(x, y).as_array(), dtype=self.dtype)

    def fields_and_derivatives(self, coords):
        x, y = self._xy(coords)
        d = self.case.derivatives(x, y)
        d = FieldDerivatives(**{k: torch.as_tensor(np.broadcast_to(v, x.shape).copy(), dtype=self.dtype)
                                for k, v in d.as_dict().items()})
        return self(coords), d

    def eval(self):
        return self

    def train(self, mode: bool = True):
        return self
