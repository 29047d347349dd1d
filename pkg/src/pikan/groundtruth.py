"""Reference fields: closed-form manufactured cases and external solver files.

A manufactured case supplies fields and analytic derivatives; its source
terms are whatever the governing equations leave over, so the equations hold
exactly once those sources are subtracted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .fields import FieldDerivatives, FieldSolution
from .physics import FluidParams, pointwise_residuals

__all__ = [
    "FieldSolution",
    "Observations",
    "IngestionError",
    "ManufacturedCase",
    "HydrostaticCase",
    "TrigonometricCase",
    "hydrostatic_case",
    "trigonometric_case",
    "make_case",
    "sample_truth",
    "observations_from_fields",
    "write_field_file",
    "read_field_file",
    "match_fields_to_cloud",
]

FIELD_HEADER = "# x[m] y[m] u[m/s] v[m/s] p[Pa] T[K]"


class IngestionError(ValueError):
    pass


@dataclass
class Observations:
    """Everything the loss compares against for one geometry.

    ``velocity`` is ``(M4, 2)`` at the velocity sensors, ``pressure`` and
    ``temperature`` are ``(M5,)`` at the pressure/temperature sensors.
    ``bc_velocity`` is aligned with ``cloud.idx_boundary`` and
    ``bc_temperature_outer`` with ``cloud.idx_outer``.  ``sources`` holds
    optional manufactured source terms ``(M1, 3)`` at the interior points.
    """

    velocity: np.ndarray
    pressure: np.ndarray
    temperature: np.ndarray
    bc_velocity: np.ndarray
    bc_temperature_outer: np.ndarray
    sources: np.ndarray | None = None

    def check_against(self, cloud) -> None:
        expected = {
            "velocity": (len(cloud.idx_vel_sensors), 2),
            "pressure": (len(cloud.idx_pt_sensors),),
            "temperature": (len(cloud.idx_pt_sensors),),
            "bc_velocity": (len(cloud.idx_outer) + len(cloud.idx_inner), 2),
            "bc_temperature_outer": (len(cloud.idx_outer),),
        }
        for name, shape in expected.items():
            got = getattr(self, name)
            if got is None or tuple(np.shape(got)) != shape:
                raise ValueError(f"observation {name!r} has shape {np.shape(got)}, expected {shape}")
        if self.sources is not None and tuple(np.shape(self.sources)) != (len(cloud.idx_interior), 3):
            raise ValueError("sources must cover every interior point")

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.velocity), len(self.pressure), len(self.temperature)


class ManufacturedCase:
    """Closed-form (u, v, p, T) with analytic derivatives."""

    name = "manufactured"

    def __init__(self, params: FluidParams):
        self.params = params

    def fields(self, x, y) -> FieldSolution:
        raise NotImplementedError

    def derivatives(self, x, y) -> FieldDerivatives:
        raise NotImplementedError

    def sources(self, x, y) -> np.ndarray:
        """``(..., 3)`` momentum-x, momentum-y and energy sources."""
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        _, mx, my, e = pointwise_residuals(self.fields(x, y), self.derivatives(x, y), self.params)
        return np.stack([np.broadcast_to(r, x.shape) for r in (mx, my, e)], axis=-1)

    def __repr__(self):
        return f"{type(self).__name__}({self.params})"


class HydrostaticCase(ManufacturedCase):
    """Fluid at rest at uniform temperature ``c``; buoyancy balanced by pressure."""

    name = "hydrostatic"

    def __init__(self, c: float, params: FluidParams):
        super().__init__(params)
        self.c = float(c)
        p = params
        self.dp_dy = p.rho * p.G * p.beta_exp * (self.c - p.T_ref)

    def fields(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        z = np.zeros(np.broadcast(x, y).shape)
        return FieldSolution(z, z.copy(), self.dp_dy * y + z, z + self.c)

    def derivatives(self, x, y):
        z = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        d = {name: z for name in (
            "u_x", "u_y", "v_x", "v_y", "p_x", "T_x", "T_y",
            "u_xx", "u_yy", "v_xx", "v_yy", "T_xx", "T_yy")}
        return FieldDerivatives(p_y=z + self.dp_dy, **d)

    def sources(self, x, y):
        # exact solution of the unforced equations
        z = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return np.stack([z, z, z], axis=-1)


class TrigonometricCase(ManufacturedCase):
    """Stream function sin(pi x) sin(pi y), p = cos(pi x) cos(pi y),
    T = cos(pi x / 2) cos(pi y / 2)."""

    name = "trigonometric"

    def fields(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        k = np.pi
        sx, cx, sy, cy = np.sin(k * x), np.cos(k * x), np.sin(k * y), np.cos(k * y)
        u = k * sx * cy
        v = -k * cx * sy
        p = cx * cy
        T = np.cos(k * x / 2) * np.cos(k * y / 2)
        return FieldSolution(u, v, p, T)

    def derivatives(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        k = np.pi
        sx, cx, sy, cy = np.sin(k * x), np.cos(k * x), np.sin(k * y), np.cos(k * y)
        hx, hy = k * x / 2, k * y / 2
        T = np.cos(hx) * np.cos(hy)
        return FieldDerivatives(
            u_x=k ** 2 * cx * cy,
            u_y=-k ** 2 * sx * sy,
            v_x=k ** 2 * sx * sy,
            v_y=-k ** 2 * cx * cy,
            p_x=-k * sx * cy,
            p_y=-k * cx * sy,
            T_x=-(k / 2) * np.sin(hx) * np.cos(hy),
            T_y=-(k / 2) * np.cos(hx) * np.sin(hy),
            u_xx=-k ** 3 * sx * cy,
            u_yy=-k ** 3 * sx * cy,
            v_xx=k ** 3 * cx * sy,
            v_yy=k ** 3 * cx * sy,
            T_xx=-(k ** 2 / 4) * T,
            T_yy=-(k ** 2 / 4) * T,
        )


def hydrostatic_case(c: float, params: FluidParams) -> HydrostaticCase:
    return HydrostaticCase(c, params)


def trigonometric_case(params: FluidParams) -> TrigonometricCase:
    return TrigonometricCase(params)


def make_case(name: str, params: FluidParams, **kwargs) -> ManufacturedCase:
    if name == "hydrostatic":
        return HydrostaticCase(kwargs.get("c", params.T_cold), params)
    if name == "trigonometric":
        return TrigonometricCase(params)
    raise ValueError(f"unknown manufactured case {name!r}")


def observations_from_fields(truth: FieldSolution, cloud, *, boundary_from_truth: bool,
                             sources: np.ndarray | None = None) -> Observations:
    """Read sensor values off ``truth``.

    With ``boundary_from_truth`` the boundary targets are the truth values
    (manufactured cases); otherwise the physical conditions stored on the
    cloud are used (no-slip, cold outer wall).
    """
    vel = truth.take(cloud.idx_vel_sensors)
    pt = truth.take(cloud.idx_pt_sensors)
    if boundary_from_truth:
        b = truth.take(cloud.idx_boundary)
        bc_vel = np.column_stack([b.u, b.v])
        bc_T = np.asarray(truth.take(cloud.idx_outer).T, dtype=float)
    else:
        bc_vel = cloud.bc_velocity
        bc_T = cloud.bc_temperature_outer
    return Observations(
        velocity=np.column_stack([vel.u, vel.v]),
        pressure=np.asarray(pt.p, dtype=float),
        temperature=np.asarray(pt.T, dtype=float),
        bc_velocity=bc_vel,
        bc_temperature_outer=bc_T,
        sources=sources,
    )


def sample_truth(source, cloud) -> tuple[FieldSolution, Observations]:
    """Fields at every cloud point plus the observation record.

    ``source`` is a :class:`ManufacturedCase` or the path of a field file
    (``x y u v p T``) covering the cloud.
    """
    cloud.validate()
    x, y = cloud.coords[:, 0], cloud.coords[:, 1]
    if isinstance(source, ManufacturedCase):
        truth = source.fields(x, y)
        truth = FieldSolution(*(np.broadcast_to(np.asarray(f, dtype=float), x.shape).copy()
                                for f in (truth.u, truth.v, truth.p, truth.T)))
        src = source.sources(x[cloud.idx_interior], y[cloud.idx_interior])
        obs = observations_from_fields(truth, cloud, boundary_from_truth=True, sources=src)
        return truth, obs
    coords, fields_ = read_field_file(source)
    truth = match_fields_to_cloud(coords, fields_, cloud)
    return truth, observations_from_fields(truth, cloud, boundary_from_truth=False)


def write_field_file(path, coords: np.ndarray, fields_: FieldSolution, geometry_id=None) -> None:
    arr = np.column_stack([coords, fields_.numpy().as_array()])
    lines = [FIELD_HEADER]
    if geometry_id is not None:
        lines.append(f"# geometry {geometry_id}")
    lines.extend(" ".join(repr(float(v)) for v in row) for row in arr)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field_file(path) -> tuple[np.ndarray, FieldSolution]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 6:
                raise IngestionError(f"{path}:{lineno}: expected 6 columns (x y u v p T), got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
            if not np.isfinite(vals).all():
                raise IngestionError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data records")
    arr = np.asarray(rows)
    return arr[:, :2], FieldSolution.from_array(arr[:, 2:])


def match_fields_to_cloud(coords: np.ndarray, fields_: FieldSolution, cloud, tol: float = 1e-9
                          ) -> FieldSolution:
    """Reorder file records onto cloud points; every point needs exactly one record."""
    n = len(cloud.coords)
    if len(coords) != n:
        raise IngestionError(f"field file has {len(coords)} records, cloud has {n} points")
    dist, idx = cKDTree(cloud.coords).query(coords, k=1)
    seen = np.full(n, -1)
    for rec, (d, j) in enumerate(zip(dist, idx)):
        if d > tol:
            raise IngestionError(
                f"record {rec} at ({float(coords[rec, 0])!r}, {float(coords[rec, 1])!r}) matches no cloud point "
                f"within {tol} m (nearest {d:.3e} m)"
            )
        if seen[j] >= 0:
            raise IngestionError(f"record {rec} duplicates record {seen[j]} (cloud point {j})")
        seen[j] = rec
    order = seen  # cloud point -> record
    arr = fields_.as_array()[order]
    return FieldSolution.from_array(arr)
