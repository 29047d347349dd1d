"""Enclosure-with-polygonal-cylinder domains, point clouds and sensor layout.

The fluid domain is the square H = [-1, 1]^2 minus a regular polygon W centred
at the origin.  Point clouds are built from equal-arc-length boundary samples
and a scrambled Halton fill of the interior.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .network import ConfigurationError

__all__ = [
    "SHAPES",
    "SIDE_LENGTHS",
    "OMEGA_MAX",
    "DEFAULT_COUNTS",
    "CLEARANCE",
    "GeometrySpec",
    "PointCloud",
    "generate_dataset_specs",
    "polygon_vertices",
    "circumradius",
    "sample_point_cloud",
    "sensor_template",
    "place_sensors",
    "write_cloud_file",
    "read_cloud_file",
    "write_manifest",
    "read_manifest",
]

SHAPES = {"nonagon": 9, "octagon": 8, "heptagon": 7}
SIDE_LENGTHS = {
    "nonagon": 0.365 * math.sin(math.pi / 9) / math.sin(math.pi / 7),
    "octagon": 0.8 * (math.sqrt(2) - 1),
    "heptagon": 0.365,
}
OMEGA_MAX = {"nonagon": 40, "octagon": 45, "heptagon": 50}
DATASET_ORDER = ("nonagon", "octagon", "heptagon")

DEFAULT_COUNTS = (5000, 4340, 660, 492)  # N, M1, M2, M3
N_LATTICE_SENSORS = 80
N_RING_SENSORS = 25
N_SURFACE_SENSORS = 25
RING_FACTOR = 1.3
CLEARANCE = 0.01

ROLE_INTERIOR, ROLE_OUTER, ROLE_INNER = 0, 1, 2


@dataclass(frozen=True)
class GeometrySpec:
    shape: str
    omega_deg: float = 0.0
    side_length: float | None = None
    enclosure_half_width: float = 1.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigurationError(f"unknown shape {self.shape!r}; choose from {tuple(SHAPES)}")
        side = SIDE_LENGTHS[self.shape]
        if self.side_length is None:
            object.__setattr__(self, "side_length", side)
        elif abs(self.side_length - side) > 1e-12:
            raise ConfigurationError(
                f"{self.shape} side length must be {side!r}, got {self.side_length!r}"
            )
        if circumradius(self) + CLEARANCE >= self.enclosure_half_width:
            raise ConfigurationError(f"{self.shape} does not fit inside the enclosure")

    @property
    def n_sides(self) -> int:
        return SHAPES[self.shape]

    @property
    def in_table_range(self) -> bool:
        return 1 <= self.omega_deg <= OMEGA_MAX[self.shape]

    @property
    def name(self) -> str:
        return f"{self.shape}_{self.omega_deg:g}deg"


def circumradius(spec: GeometrySpec) -> float:
    return spec.side_length / (2 * math.sin(math.pi / spec.n_sides))


def generate_dataset_specs() -> list[GeometrySpec]:
    """All 135 geometries: nonagons, then octagons, then heptagons, 1 deg steps."""
    return [
        GeometrySpec(shape, float(omega))
        for shape in DATASET_ORDER
        for omega in range(1, OMEGA_MAX[shape] + 1)
    ]


def polygon_vertices(spec: GeometrySpec) -> np.ndarray:
    """Counterclockwise vertices, the first at angle omega from the +x axis."""
    k = spec.n_sides
    theta = np.deg2rad(spec.omega_deg) + 2 * np.pi * np.arange(k) / k
    r = circumradius(spec)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _perimeter_points(vertices: np.ndarray, n: int) -> np.ndarray:
    """``n`` points equally spaced by arc length on a closed polyline, starting at vertex 0."""
    closed = np.vstack([vertices, vertices[:1]])
    seg = np.diff(closed, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.arange(n) * (cum[-1] / n)
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = (s - cum[i]) / seg_len[i]
    return closed[i] + t[:, None] * seg[i]


def _square_vertices(half: float) -> np.ndarray:
    return np.array([[-half, -half], [half, -half], [half, half], [-half, half]])


@dataclass
class PointCloud:
    """Points of one domain with their role partitions.

    Index arrays refer to rows of ``coords``.  ``idx_boundary`` lists the
    outer-wall points followed by the inner-surface points; ``bc_velocity``
    and ``bc_temperature_outer`` are aligned with ``idx_boundary`` and
    ``idx_outer`` respectively.
    """

    coords: np.ndarray
    idx_interior: np.ndarray
    idx_outer: np.ndarray
    idx_inner: np.ndarray
    idx_vel_sensors: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    idx_pt_sensors: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    T_cold: float = 0.0
    spec: GeometrySpec | None = None
    _validated: bool = field(default=False, repr=False, compare=False)

    @property
    def idx_boundary(self) -> np.ndarray:
        return np.concatenate([self.idx_outer, self.idx_inner])

    @property
    def bc_velocity(self) -> np.ndarray:
        return np.zeros((len(self.idx_outer) + len(self.idx_inner), 2))

    @property
    def bc_temperature_outer(self) -> np.ndarray:
        return np.full(len(self.idx_outer), float(self.T_cold))

    @property
    def idx_surface_sensors(self) -> np.ndarray:
        return self.idx_pt_sensors[len(self.idx_vel_sensors):]

    @property
    def counts(self) -> dict:
        return {
            "N": len(self.coords),
            "M1": len(self.idx_interior),
            "M2": len(self.idx_outer) + len(self.idx_inner),
            "M3": len(self.idx_outer),
            "M4": len(self.idx_vel_sensors),
            "M5": len(self.idx_pt_sensors),
        }

    def validate(self) -> "PointCloud":
        """Check partition and subset relations; raises ValueError on violation."""
        if self._validated:
            return self
        n = len(self.coords)
        interior = set(self.idx_interior.tolist())
        outer = set(self.idx_outer.tolist())
        inner = set(self.idx_inner.tolist())
        if len(interior) != len(self.idx_interior) or len(outer) != len(self.idx_outer) \
                or len(inner) != len(self.idx_inner):
            raise ValueError("duplicate indices within a partition")
        if interior & outer or interior & inner or outer & inner:
            raise ValueError("interior, outer and inner index sets overlap")
        if interior | outer | inner != set(range(n)):
            raise ValueError("index sets do not cover every point")
        vel = self.idx_vel_sensors.tolist()
        if len(set(vel)) != len(vel) or not set(vel) <= interior:
            raise ValueError("velocity sensors must be distinct interior points")
        pt = self.idx_pt_sensors.tolist()
        if len(set(pt)) != len(pt) or pt[: len(vel)] != vel:
            raise ValueError("pressure/temperature sensors must start with the velocity sensors")
        if not set(pt[len(vel):]) <= inner:
            raise ValueError("surface sensors must lie on the inner boundary")
        if not np.isfinite(self.coords).all():
            raise ValueError("non-finite coordinates")
        self._validated = True
        return self


def _check_counts(counts) -> tuple[int, int, int, int]:
    N, M1, M2, M3 = (int(c) for c in counts)
    if M1 + M2 != N:
        raise ConfigurationError(f"M1 + M2 must equal N ({M1} + {M2} != {N})")
    if not 0 < M3 < M2:
        raise ConfigurationError(f"need 0 < M3 < M2, got M3={M3}, M2={M2}")
    if M2 - M3 < N_SURFACE_SENSORS:
        raise ConfigurationError(f"inner surface needs at least {N_SURFACE_SENSORS} points")
    if M1 < N_LATTICE_SENSORS + N_RING_SENSORS:
        raise ConfigurationError(
            f"interior needs at least {N_LATTICE_SENSORS + N_RING_SENSORS} points for the sensors"
        )
    return N, M1, M2, M3


def lattice_sensor_points() -> np.ndarray:
    """Fixed 80-point layout shared by every geometry.

    A 10 x 10 lattice on [-0.9, 0.9]^2 without its central 4 x 4 block (which
    would fall on or near the cylinder) and without the four corners.
    """
    g = np.linspace(-0.9, 0.9, 10)
    xx, yy = np.meshgrid(g, g, indexing="xy")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    a = np.abs(pts)
    keep = ~((a[:, 0] < 0.4) & (a[:, 1] < 0.4)) & ~((a[:, 0] > 0.85) & (a[:, 1] > 0.85))
    return pts[keep]


def sensor_template(spec: GeometrySpec) -> np.ndarray:
    """105 interior sensor targets: the fixed lattice, then a ring rotated with omega."""
    theta = np.deg2rad(spec.omega_deg) + 2 * np.pi * np.arange(N_RING_SENSORS) / N_RING_SENSORS
    r = RING_FACTOR * circumradius(spec)
    ring = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return np.vstack([lattice_sensor_points(), ring])


def _interior_fill(spec: GeometrySpec, n: int, seed: int) -> np.ndarray:
    poly = shapely.Polygon(polygon_vertices(spec))
    half = spec.enclosure_half_width
    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    chunks, have = [], 0
    while have < n:
        cand = (2 * sampler.random(max(2 * (n - have), 64)) - 1) * half
        inside_box = (np.abs(cand) < half).all(axis=1)
        cand = cand[inside_box]
        clear = shapely.distance(poly, shapely.points(cand)) >= CLEARANCE
        cand = cand[clear]
        chunks.append(cand)
        have += len(cand)
    return np.vstack(chunks)[:n]


def sample_point_cloud(spec: GeometrySpec, counts=DEFAULT_COUNTS, seed: int = 0,
                       T_cold: float = 0.0) -> PointCloud:
    """Build the point cloud and place sensors.

    Rows are ordered interior, outer wall, inner surface.  The interior starts
    with the 105 sensor-template points so the fixed sensors sit at identical
    coordinates in every geometry; the rest is a Halton fill.
    """
    N, M1, M2, M3 = _check_counts(counts)
    template = sensor_template(spec)
    fill = _interior_fill(spec, M1 - len(template), seed)
    interior = np.vstack([template, fill])
    outer = _perimeter_points(_square_vertices(spec.enclosure_half_width), M3)
    inner = _perimeter_points(polygon_vertices(spec), M2 - M3)
    coords = np.vstack([interior, outer, inner])

    cloud = PointCloud(
        coords=coords,
        idx_interior=np.arange(M1),
        idx_outer=np.arange(M1, M1 + M3),
        idx_inner=np.arange(M1 + M3, N),
        T_cold=T_cold,
        spec=spec,
    )
    cloud.idx_vel_sensors, cloud.idx_pt_sensors = place_sensors(cloud, spec)
    return cloud.validate()


def place_sensors(cloud: PointCloud, spec: GeometrySpec) -> tuple[np.ndarray, np.ndarray]:
    """Snap the template to distinct interior points and pick 25 surface points.

    Returns ``(idx_vel_sensors, idx_pt_sensors)`` where the second array is the
    first followed by the surface sensors.
    """
    interior_xy = cloud.coords[cloud.idx_interior]
    tree = cKDTree(interior_xy)
    used: set[int] = set()
    vel = []
    for target in sensor_template(spec):
        k = 8
        while True:
            _, nbrs = tree.query(target, k=min(k, len(interior_xy)))
            choice = next((int(j) for j in np.atleast_1d(nbrs) if int(j) not in used), None)
            if choice is not None:
                break
            if k >= len(interior_xy):
                raise ConfigurationError("not enough interior points to place sensors")
            k *= 4
        used.add(choice)
        vel.append(int(cloud.idx_interior[choice]))

    n_inner = len(cloud.idx_inner)
    picks = np.round(np.arange(N_SURFACE_SENSORS) * n_inner / N_SURFACE_SENSORS).astype(int)
    surface = cloud.idx_inner[picks]
    vel = np.asarray(vel, dtype=int)
    return vel, np.concatenate([vel, surface]).astype(int)


CLOUD_COLUMNS = ("x", "y", "role", "vel_sensor", "pt_sensor")
CLOUD_COLUMN_DOC = (
    "x, y: coordinates in m; role: 0 interior, 1 outer wall, 2 inner surface; "
    "vel_sensor / pt_sensor: 1-based sensor order, 0 if not a sensor"
)


def write_cloud_file(path, cloud: PointCloud) -> None:
    n = len(cloud.coords)
    role = np.zeros(n, dtype=int)
    role[cloud.idx_outer] = ROLE_OUTER
    role[cloud.idx_inner] = ROLE_INNER
    vel = np.zeros(n, dtype=int)
    vel[cloud.idx_vel_sensors] = np.arange(1, len(cloud.idx_vel_sensors) + 1)
    pt = np.zeros(n, dtype=int)
    pt[cloud.idx_pt_sensors] = np.arange(1, len(cloud.idx_pt_sensors) + 1)
    lines = [f"# {' '.join(CLOUD_COLUMNS)}", f"# {CLOUD_COLUMN_DOC}", f"# T_cold {float(cloud.T_cold)!r}"]
    for (x, y), r, a, b in zip(cloud.coords, role, vel, pt):
        lines.append(f"{float(x)!r} {float(y)!r} {r} {a} {b}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cloud_file(path, spec: GeometrySpec | None = None) -> PointCloud:
    T_cold = 0.0
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            parts = line[1:].split()
            if parts[:1] == ["T_cold"]:
                T_cold = float(parts[1])
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != len(CLOUD_COLUMNS):
        raise ValueError(f"{path}: expected {len(CLOUD_COLUMNS)} columns, got {data.shape[1]}")
    role = data[:, 2].astype(int)
    vel_order = data[:, 3].astype(int)
    pt_order = data[:, 4].astype(int)

    def ordered(order):
        idx = np.flatnonzero(order)
        return idx[np.argsort(order[idx])]

    return PointCloud(
        coords=data[:, :2].copy(),
        idx_interior=np.flatnonzero(role == ROLE_INTERIOR),
        idx_outer=np.flatnonzero(role == ROLE_OUTER),
        idx_inner=np.flatnonzero(role == ROLE_INNER),
        idx_vel_sensors=ordered(vel_order),
        idx_pt_sensors=ordered(pt_order),
        T_cold=T_cold,
        spec=spec,
    ).validate()


def write_manifest(directory, entries: list[dict], counts, extra: dict | None = None) -> str:
    """Write ``manifest.json``; each entry carries id, shape, omega_deg, side_length, seed, cloud_file."""
    N, M1, M2, M3 = counts
    manifest = {
        "format": "pikan-dataset/1",
        "cloud_columns": list(CLOUD_COLUMNS),
        "cloud_column_doc": CLOUD_COLUMN_DOC,
        "field_columns": ["x", "y", "u", "v", "p", "T"],
        "counts": {"N": N, "M1": M1, "M2": M2, "M3": M3},
        "geometries": entries,
        **(extra or {}),
    }
    path = os.path.join(directory, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return path


def read_manifest(directory) -> dict:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "pikan-dataset/1":
        raise ValueError(f"{directory}: not a pikan dataset manifest")
    return manifest
