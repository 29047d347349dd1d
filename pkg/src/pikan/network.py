"""PointNet with shared KAN and/or MLP layers.

Layout (base widths, scaled by ``ns`` with a floor rule)::

    coords (B, N, 2)
      -> local branch   (64, 64)            per-point features kept for concat
      -> global branch  (64, 128, 1024)     max over N -> global feature
      -> concat [local, global]             (B, N, 64 + 1024)
      -> decoder        (512, 256, 128) + (128, n_pde)

The lightweight variant uses one layer per branch and a (128, n_pde) decoder.
Normalization follows every layer except the last.  KAN-built layers get
trainable affine normalization, MLP-built layers get affine-free
normalization and tanh activation (the output layer included).

Spatial derivatives are taken through a two-pass evaluation: a context pass
fixes the normalization statistics and the global feature for the cloud, and
a query pass re-evaluates the per-point map at query coordinates with that
context held fixed.  The query map is pointwise, so autograd of summed
outputs gives exact per-point derivatives.
"""

from __future__ import annotations

import contextlib
import dataclasses
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any

import torch
from torch import nn

from .jacobi import CHEBYSHEV_FIRST, JacobiParams
from .kan import JacobiKANLayer, KanLayerSpec

__all__ = [
    "VARIANTS",
    "ConfigurationError",
    "NetworkConfig",
    "LayerPlan",
    "scaled_width",
    "layer_plan",
    "param_breakdown",
    "total_param_count",
    "trainable_param_count",
    "SharedBatchNorm",
    "SharedBlock",
    "Context",
    "PointNetModel",
    "build",
    "save_checkpoint",
    "load_checkpoint",
]

VARIANTS = (
    "full_kan",
    "full_mlp",
    "lightweight_kan",
    "hybrid_mlp_enc_kan_dec",
    "hybrid_kan_enc_mlp_dec",
)

# (local branch, global branch, decoder); the final decoder width is n_pde.
_FULL_WIDTHS = ((64, 64), (64, 128, 1024), (512, 256, 128, 128))
_LIGHT_WIDTHS = ((128,), (1024,), (128,))

_KINDS = {
    "full_kan": ("kan", "kan"),
    "full_mlp": ("mlp", "mlp"),
    "lightweight_kan": ("kan", "kan"),
    "hybrid_mlp_enc_kan_dec": ("mlp", "kan"),
    "hybrid_kan_enc_mlp_dec": ("kan", "mlp"),
}


class ConfigurationError(ValueError):
    pass


def scaled_width(base: int, ns: float) -> int:
    if base < 1:
        raise ConfigurationError(f"base width must be >= 1, got {base}")
    if not (0 < ns <= 1):
        raise ConfigurationError(f"scaling factor must lie in (0, 1], got {ns}")
    # strip float noise before flooring: 100 * 0.29 evaluates to 28.999999999999996
    width = math.floor(round(base * ns, 9))
    if width < 1:
        raise ConfigurationError(f"width {base} scaled by {ns} underflows to {width}")
    return width


@dataclass(frozen=True)
class NetworkConfig:
    variant: str = "full_kan"
    ns_encoder: float = 0.5
    ns_decoder: float = 0.5
    jacobi: JacobiParams = CHEBYSHEV_FIRST
    n_pde: int = 4
    seed: int = 0
    input_dim: int = 2
    # (local, global, decoder) base widths; None selects the variant's standard sizes
    base_widths: tuple | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.n_pde < 1:
            raise ConfigurationError("n_pde must be >= 1")
        if self.input_dim < 1:
            raise ConfigurationError("input_dim must be >= 1")
        if isinstance(self.jacobi, dict):
            object.__setattr__(self, "jacobi", JacobiParams(**self.jacobi))
        if self.base_widths is not None:
            bw = tuple(tuple(int(w) for w in part) for part in self.base_widths)
            if len(bw) != 3 or not bw[0] or not bw[1]:
                raise ConfigurationError("base_widths needs non-empty local and global branches plus a decoder")
            object.__setattr__(self, "base_widths", bw)
        layer_plan(self)  # raises on width underflow

    @classmethod
    def uniform(cls, variant: str, ns: float, **kwargs) -> "NetworkConfig":
        return cls(variant=variant, ns_encoder=ns, ns_decoder=ns, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        if isinstance(d.get("jacobi"), dict):
            d["jacobi"] = JacobiParams(**d["jacobi"])
        return cls(**d)


@dataclass(frozen=True)
class LayerPlan:
    stage: str  # "local", "global" or "decoder"
    kind: str  # "kan" or "mlp"
    d_input: int
    d_output: int
    normalized: bool

    def param_count(self, jacobi: JacobiParams) -> dict:
        if self.kind == "kan":
            weights = jacobi.n_basis * self.d_input * self.d_output
            norm = 2 * self.d_output if self.normalized else 0
        else:
            weights = (self.d_input + 1) * self.d_output
            norm = 0
        return {"weights": weights, "norm": norm, "total": weights + norm}


def layer_plan(config: NetworkConfig) -> list[LayerPlan]:
    enc_kind, dec_kind = _KINDS[config.variant]
    if config.base_widths is not None:
        widths = config.base_widths
    else:
        widths = _LIGHT_WIDTHS if config.variant == "lightweight_kan" else _FULL_WIDTHS
    local_w = [scaled_width(w, config.ns_encoder) for w in widths[0]]
    global_w = [scaled_width(w, config.ns_encoder) for w in widths[1]]
    dec_w = [scaled_width(w, config.ns_decoder) for w in widths[2]] + [config.n_pde]

    plan: list[LayerPlan] = []
    d = config.input_dim
    for w in local_w:
        plan.append(LayerPlan("local", enc_kind, d, w, True))
        d = w
    d_local = d
    for w in global_w:
        plan.append(LayerPlan("global", enc_kind, d, w, True))
        d = w
    d = d_local + d
    for i, w in enumerate(dec_w):
        last = i == len(dec_w) - 1
        plan.append(LayerPlan("decoder", dec_kind, d, w, not last))
        d = w
    return plan


def param_breakdown(config: NetworkConfig) -> list[dict]:
    rows = []
    for i, p in enumerate(layer_plan(config)):
        rows.append({"index": i, **dataclasses.asdict(p), **p.param_count(config.jacobi)})
    return rows


def total_param_count(config: NetworkConfig) -> int:
    return sum(row["total"] for row in param_breakdown(config))


def trainable_param_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


class SharedBatchNorm(nn.Module):
    """Batch normalization over every leading axis (B * N samples per channel).

    ``forward`` returns the statistics it used so a later pass can reuse them.
    """

    def __init__(self, num_features: int, *, affine: bool, momentum: float = 0.1,
                 eps: float = 1e-5, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.num_features = num_features
        self.affine = affine
        self.momentum = momentum
        self.eps = eps
        if affine:
            self.weight = nn.Parameter(torch.ones(num_features, dtype=dtype))
            self.bias = nn.Parameter(torch.zeros(num_features, dtype=dtype))
        else:
            self.register_parameter("weight", None)
            self.register_parameter("bias", None)
        self.register_buffer("running_mean", torch.zeros(num_features, dtype=dtype))
        self.register_buffer("running_var", torch.ones(num_features, dtype=dtype))
        self.update_running = True

    def batch_stats(self, h: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        flat = h.reshape(-1, self.num_features)
        mean = flat.mean(dim=0)
        var = flat.var(dim=0, unbiased=False)
        n = flat.shape[0]
        if not self.update_running:
            return mean, var
        with torch.no_grad():
            unbiased = var * (n / (n - 1)) if n > 1 else var
            self.running_mean.mul_(1 - self.momentum).add_(self.momentum * mean.detach())
            self.running_var.mul_(1 - self.momentum).add_(self.momentum * unbiased.detach())
        return mean, var

    def forward(self, h, stats=None):
        if stats is None:
            stats = self.batch_stats(h) if self.training else (self.running_mean, self.running_var)
        mean, var = stats
        out = (h - mean) / torch.sqrt(var + self.eps)
        if self.affine:
            out = out * self.weight + self.bias
        return out, stats


def _glorot_linear(d_in: int, d_out: int, generator: torch.Generator, dtype) -> nn.Linear:
    lin = nn.Linear(d_in, d_out, dtype=dtype)
    limit = math.sqrt(6.0 / (d_in + d_out))
    with torch.no_grad():
        w = (torch.rand((d_out, d_in), generator=generator, dtype=torch.float64) * 2 - 1) * limit
        lin.weight.copy_(w.to(dtype))
        lin.bias.zero_()
    return lin


class SharedBlock(nn.Module):
    """One shared layer plus its optional normalization."""

    def __init__(self, plan: LayerPlan, jacobi: JacobiParams, generator: torch.Generator,
                 dtype: torch.dtype = torch.float64):
        super().__init__()
        self.plan = plan
        if plan.kind == "kan":
            spec = KanLayerSpec(plan.d_input, plan.d_output, jacobi)
            self.layer = JacobiKANLayer(spec, generator=generator, dtype=dtype)
        else:
            self.layer = _glorot_linear(plan.d_input, plan.d_output, generator, dtype)
        self.norm = (
            SharedBatchNorm(plan.d_output, affine=plan.kind == "kan", dtype=dtype)
            if plan.normalized else None
        )

    def forward(self, h, stats=None):
        h = self.layer(h)
        if self.plan.kind == "mlp":
            h = torch.tanh(h)
        if self.norm is None:
            return h, None
        return self.norm(h, stats)


@dataclass
class Context:
    """Per-cloud quantities held fixed when differentiating w.r.t. coordinates."""

    local_stats: list = field(default_factory=list)
    decoder_stats: list = field(default_factory=list)
    global_feature: torch.Tensor | None = None


class PointNetModel(nn.Module):
    def __init__(self, config: NetworkConfig, dtype: torch.dtype = torch.float64):
        super().__init__()
        self.config = config
        self.dtype = dtype
        gen = torch.Generator().manual_seed(int(config.seed))
        plan = layer_plan(config)
        blocks = {stage: [SharedBlock(p, config.jacobi, gen, dtype) for p in plan if p.stage == stage]
                  for stage in ("local", "global", "decoder")}
        self.local_branch = nn.ModuleList(blocks["local"])
        self.global_branch = nn.ModuleList(blocks["global"])
        self.decoder = nn.ModuleList(blocks["decoder"])

    @property
    def n_pde(self) -> int:
        return self.config.n_pde

    def _check(self, coords: torch.Tensor) -> torch.Tensor:
        coords = torch.as_tensor(coords, dtype=self.dtype)
        if coords.shape[-1] != self.config.input_dim:
            raise ValueError(f"coords must end in {self.config.input_dim}, got {tuple(coords.shape)}")
        if coords.dim() < 2 or coords.shape[-2] < 1:
            raise ValueError("coords need at least one point")
        if not torch.isfinite(coords).all():
            raise ValueError("coords contain non-finite values")
        return coords

    def _decode(self, local, global_feature, stats=None):
        g = global_feature.unsqueeze(-2).expand(*local.shape[:-1], global_feature.shape[-1])
        h = torch.cat([local, g], dim=-1)
        used = []
        for i, blk in enumerate(self.decoder):
            h, s = blk(h, None if stats is None else stats[i])
            used.append(s)
        return h, used

    def forward_with_context(self, coords) -> tuple[torch.Tensor, Context]:
        coords = self._check(coords)
        ctx = Context()
        h = coords
        for blk in self.local_branch:
            h, s = blk(h)
            ctx.local_stats.append(s)
        local = h
        for blk in self.global_branch:
            h, _ = blk(h)
        ctx.global_feature = h.max(dim=-2).values
        out, ctx.decoder_stats = self._decode(local, ctx.global_feature)
        return out, ctx

    def forward(self, coords) -> torch.Tensor:
        return self.forward_with_context(coords)[0]

    def evaluate(self, query, context: Context) -> torch.Tensor:
        """Per-point map at ``query`` with the cloud context held fixed."""
        h = query
        for blk, s in zip(self.local_branch, context.local_stats):
            h, _ = blk(h, s)
        out, _ = self._decode(h, context.global_feature, context.decoder_stats)
        return out

    def global_feature(self, coords) -> torch.Tensor:
        return self.forward_with_context(coords)[1].global_feature

    def fields_and_derivatives(self, coords):
        """Outputs ``(B, N, n_pde)`` and :class:`~pikan.physics.FieldDerivatives`."""
        from .physics import autodiff_derivatives

        coords = self._check(coords)
        _, ctx = self.forward_with_context(coords)
        query = coords.detach().clone().requires_grad_(True)
        out = self.evaluate(query, ctx)
        return out, autodiff_derivatives(out, query)

    def param_count(self) -> int:
        return trainable_param_count(self)

    @contextlib.contextmanager
    def frozen_running_stats(self):
        """Use batch statistics without folding them into the running averages."""
        norms = [m for m in self.modules() if isinstance(m, SharedBatchNorm)]
        previous = [m.update_running for m in norms]
        for m in norms:
            m.update_running = False
        try:
            yield self
        finally:
            for m, flag in zip(norms, previous):
                m.update_running = flag


def build(config: NetworkConfig, dtype: torch.dtype = torch.float64) -> PointNetModel:
    return PointNetModel(config, dtype=dtype)


def _atomic_torch_save(obj: Any, path: str | os.PathLike) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(obj, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def save_checkpoint(path, model: PointNetModel, *, optimizer_state: dict | None = None,
                    epoch: int | None = None, best_loss: float | None = None,
                    extra: dict | None = None) -> None:
    """Write config echo, parameters/normalization buffers, optimizer state, and
    best-loss record into a single archive (atomically)."""
    payload = {
        "format": "pikan-checkpoint/1",
        "config": model.config.to_dict(),
        "dtype": str(model.dtype).replace("torch.", ""),
        "state": model.state_dict(),
        "optimizer": optimizer_state,
        "epoch": epoch,
        "best_loss": best_loss,
        "extra": extra or {},
    }
    _atomic_torch_save(payload, path)


def load_checkpoint(path) -> tuple[PointNetModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("format") != "pikan-checkpoint/1":
        raise ValueError(f"{path} is not a pikan checkpoint")
    config = NetworkConfig.from_dict(payload["config"])
    model = build(config, dtype=getattr(torch, payload["dtype"]))
    model.load_state_dict(payload["state"])
    model.eval()
    return model, payload
