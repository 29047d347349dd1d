"""Training loop, error tables and surface-temperature profiles."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .fields import FieldSolution
from .network import NetworkConfig, PointNetModel, build, save_checkpoint
from .physics import LOSS_TERMS, FluidParams, LossBreakdown, batched_pipn_loss

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "TrainingDivergedError",
    "UndefinedMetricError",
    "QUANTITIES",
    "train",
    "dataset_loss",
    "predict_fields",
    "relative_l2",
    "error_table",
    "format_error_table",
    "run_rows",
    "surface_profile",
    "write_history",
    "read_history",
]

log = logging.getLogger(__name__)

QUANTITIES = ("u_V", "v_V", "p_V", "T_V", "T_Gamma")
_ROW_LABELS = {
    "u_V": "||u~-u||_V/||u||_V",
    "v_V": "||v~-v||_V/||v||_V",
    "p_V": "||p~-p||_V/||p||_V",
    "T_V": "||T~-T||_V/||T||_V",
    "T_Gamma": "||T~-T||_Gamma/||T||_Gamma",
}


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, breakdown: dict):
        self.epoch = epoch
        self.breakdown = breakdown
        terms = ", ".join(f"{k}={v:.3e}" for k, v in breakdown.items())
        super().__init__(f"non-finite loss at epoch {epoch}: {terms}")


class UndefinedMetricError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    epochs: int = 2500
    batch_size: int = 7
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_path: str | None = None
    history_path: str | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def torch_dtype(self) -> torch.dtype:
        return getattr(torch, self.dtype)


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int | None = None
    best_loss: float = math.inf

    def __len__(self) -> int:
        return len(self.records)

    @property
    def totals(self) -> list[float]:
        return [r["total"] for r in self.records]

    def running_best(self) -> list[float]:
        return list(np.minimum.accumulate(self.totals)) if self.records else []


def _stack_coords(clouds, dtype) -> torch.Tensor:
    sizes = {len(c.coords) for c in clouds}
    if len(sizes) != 1:
        raise ValueError(f"all clouds must share N, got sizes {sorted(sizes)}")
    return torch.as_tensor(np.stack([c.coords for c in clouds]), dtype=dtype)


def dataset_loss(model, coords: torch.Tensor, clouds, observations, params: FluidParams,
                 chunk: int = 7) -> LossBreakdown:
    """Mean loss over every geometry, evaluated in chunks (gradients w.r.t. parameters dropped)."""
    parts = []
    for start in range(0, len(clouds), chunk):
        sl = slice(start, start + chunk)
        lb = batched_pipn_loss(model, coords[sl], clouds[sl], observations[sl], params).detach()
        parts.append((len(clouds[sl]), lb))
    m = len(clouds)
    return LossBreakdown(**{
        t: sum(k * getattr(lb, t) for k, lb in parts) / m for t in LOSS_TERMS
    })


def _finite(lb: LossBreakdown) -> bool:
    return all(math.isfinite(float(getattr(lb, t))) for t in LOSS_TERMS)


def train(dataset, config: TrainConfig, net_config: NetworkConfig,
          params: FluidParams | None = None, *, model: PointNetModel | None = None,
          on_epoch=None) -> tuple[PointNetModel, TrainHistory]:
    """Adam over geometry mini-batches, keeping the state with the lowest epoch loss.

    ``dataset`` is a sequence of ``(PointCloud, Observations)``. After each
    epoch the loss over the full dataset is evaluated (batch statistics per
    chunk of ``batch_size`` geometries, running averages left untouched) and
    drives checkpoint selection.
    """
    params = params or FluidParams()
    clouds = [c for c, _ in dataset]
    observations = [o for _, o in dataset]
    if not clouds:
        raise ValueError("empty dataset")
    if config.batch_size > len(clouds):
        raise ValueError(f"batch_size {config.batch_size} exceeds the {len(clouds)} geometries")
    for c, o in dataset:
        c.validate()
        o.check_against(c)

    dtype = config.torch_dtype
    coords = _stack_coords(clouds, dtype)
    model = model if model is not None else build(net_config, dtype=dtype)
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                           betas=(config.adam_beta1, config.adam_beta2), eps=config.adam_eps)
    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    best_state = copy.deepcopy(model.state_dict())
    history_fh = open(config.history_path, "w") if config.history_path else None

    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            model.train()
            order = rng.permutation(len(clouds))
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                lb = batched_pipn_loss(model, coords[idx], [clouds[i] for i in idx],
                                       [observations[i] for i in idx], params)
                loss = lb.total
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(epoch, lb.as_dict())
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()

            with model.frozen_running_stats():
                full = dataset_loss(model, coords, clouds, observations, params,
                                    chunk=config.batch_size)
            record = {"epoch": epoch, **full.as_dict(), "seconds": time.perf_counter() - t0}
            if not _finite(full):
                raise TrainingDivergedError(epoch, full.as_dict())
            history.records.append(record)
            if history_fh:
                history_fh.write(json.dumps(record) + "\n")
                history_fh.flush()

            if record["total"] < history.best_loss:
                history.best_loss = record["total"]
                history.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                if config.checkpoint_path:
                    save_checkpoint(config.checkpoint_path, model, optimizer_state=opt.state_dict(),
                                    epoch=epoch, best_loss=history.best_loss,
                                    extra={"train_config": asdict(config)})
            if epoch == 1 or epoch % 50 == 0:
                log.info("epoch %d loss %.4e (best %.4e @ %d)", epoch, record["total"],
                         history.best_loss, history.best_epoch)
            if on_epoch is not None:
                on_epoch(record)
    finally:
        if history_fh:
            history_fh.close()

    model.load_state_dict(best_state)
    model.eval()
    return model, history


def write_history(path, history: TrainHistory) -> None:
    with open(path, "w") as fh:
        for r in history.records:
            fh.write(json.dumps(r) + "\n")


def read_history(path) -> TrainHistory:
    h = TrainHistory()
    with open(path) as fh:
        for line in fh:
            if line.strip():
                h.records.append(json.loads(line))
    if h.records:
        totals = h.totals
        h.best_epoch = h.records[int(np.argmin(totals))]["epoch"]
        h.best_loss = float(min(totals))
    return h


def predict_fields(mapping, clouds, chunk: int = 7) -> list[FieldSolution]:
    """Evaluate a network (in eval mode) or a direct-field adapter on each cloud."""
    if hasattr(mapping, "eval"):
        mapping.eval()
    dtype = getattr(mapping, "dtype", torch.float64)
    coords = _stack_coords(clouds, dtype)
    out = []
    with torch.no_grad():
        for start in range(0, len(clouds), chunk):
            pred = mapping(coords[start:start + chunk])
            out.extend(FieldSolution.from_array(p.double().numpy()) for p in pred)
    return out


def relative_l2(pred, truth, indices=None) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if indices is not None:
        pred, truth = pred[..., indices], truth[..., indices]
    denom = np.linalg.norm(truth)
    if denom == 0:
        raise UndefinedMetricError("relative L2 error is undefined for an all-zero reference")
    return float(np.linalg.norm(pred - truth) / denom)


def error_table(model, clouds, truths: list[FieldSolution]) -> dict:
    """Average / maximum / minimum relative L2 errors over geometries.

    ``V`` is every point of the cloud, ``Gamma`` the inner-surface points.
    Returns ``{"table": {quantity: {average, maximum, minimum}}, "per_geometry": [...]}``.
    """
    if len(truths) != len(clouds) or any(t is None for t in truths):
        raise ValueError("every geometry needs a ground-truth field")
    preds = predict_fields(model, clouds)
    per_geometry = []
    for cloud, pred, truth in zip(clouds, preds, truths):
        per_geometry.append({
            "u_V": relative_l2(pred.u, truth.u),
            "v_V": relative_l2(pred.v, truth.v),
            "p_V": relative_l2(pred.p, truth.p),
            "T_V": relative_l2(pred.T, truth.T),
            "T_Gamma": relative_l2(pred.T, truth.T, cloud.idx_inner),
        })
    table = {}
    for q in QUANTITIES:
        vals = np.array([g[q] for g in per_geometry])
        table[q] = {"average": float(vals.mean()), "maximum": float(vals.max()),
                    "minimum": float(vals.min())}
    return {"table": table, "per_geometry": per_geometry}


def format_error_table(table: dict, extra_rows: dict | None = None) -> str:
    """Plain-text rendering with one row per (statistic, quantity)."""
    lines = []
    for q in QUANTITIES:
        for stat in ("average", "maximum", "minimum"):
            lines.append(f"{stat.capitalize()} {_ROW_LABELS[q]}\t{table[q][stat]:.5E}")
    for label, value in (extra_rows or {}).items():
        lines.append(f"{label}\t{value}")
    return "\n".join(lines) + "\n"


def run_rows(best_loss=None, seconds_per_epoch=None, best_epoch=None, n_params=None) -> dict:
    """Trailing table rows describing the training run, in table order; ``None`` entries are dropped."""
    rows = {
        "Minimum loss achieved": None if best_loss is None else f"{best_loss:.5E}",
        "Training time per epoch (s)": None if seconds_per_epoch is None else f"{seconds_per_epoch:.1f}",
        "Number of epochs to reach the minimum loss": best_epoch,
        "Number of trainable parameters": n_params,
    }
    return {k: v for k, v in rows.items() if v is not None}


def surface_profile(fields_: FieldSolution, cloud, quantity: str = "T") -> np.ndarray:
    """``(M2 - M3, 2)`` array of (theta in degrees, value) along the inner surface.

    Theta is measured counterclockwise from +x about the cylinder centre,
    mapped into [0, 360), sorted ascending.
    """
    xy = cloud.coords[cloud.idx_inner]
    theta = np.degrees(np.arctan2(xy[:, 1], xy[:, 0])) % 360.0
    values = np.asarray(getattr(fields_, quantity), dtype=float)[cloud.idx_inner]
    order = np.argsort(theta, kind="stable")
    return np.column_stack([theta[order], values[order]])
