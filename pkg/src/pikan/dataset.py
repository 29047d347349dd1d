"""Assemble geometry datasets in memory or on disk.

A dataset directory holds ``manifest.json``, one cloud file per geometry and,
when the truth is known, one field file per geometry.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .fields import FieldSolution
from .geometry import (
    DEFAULT_COUNTS,
    GeometrySpec,
    PointCloud,
    generate_dataset_specs,
    read_cloud_file,
    read_manifest,
    sample_point_cloud,
    write_cloud_file,
    write_manifest,
)
from .groundtruth import ManufacturedCase, Observations, sample_truth, write_field_file

__all__ = ["Sample", "select_specs", "build_samples", "write_dataset", "load_dataset"]


@dataclass
class Sample:
    """One geometry: its cloud, the full truth (if known) and the loss targets."""

    id: int
    spec: GeometrySpec
    cloud: PointCloud
    truth: FieldSolution | None
    observations: Observations


def select_specs(ids=None, limit=None) -> list[tuple[int, GeometrySpec]]:
    """Pick ``(id, spec)`` pairs out of the 135-geometry table.

    ``ids`` selects explicit positions; ``limit`` keeps the first ``limit``
    of an evenly strided pass so small runs still mix the three shapes.
    """
    specs = generate_dataset_specs()
    if ids is not None:
        bad = [i for i in ids if not 0 <= i < len(specs)]
        if bad:
            raise ValueError(f"geometry ids out of range 0..{len(specs) - 1}: {bad}")
        return [(i, specs[i]) for i in ids]
    if limit is None or limit >= len(specs):
        return list(enumerate(specs))
    if limit < 1:
        raise ValueError("limit must be >= 1")
    stride = len(specs) // limit
    return [(i, specs[i]) for i in range(0, stride * limit, stride)]


def build_samples(selection, case: ManufacturedCase, counts=DEFAULT_COUNTS, seed: int = 0,
                  T_cold: float = 0.0) -> list[Sample]:
    out = []
    for gid, spec in selection:
        cloud = sample_point_cloud(spec, counts, seed=seed + gid, T_cold=T_cold)
        truth, obs = sample_truth(case, cloud)
        out.append(Sample(gid, spec, cloud, truth, obs))
    return out


def _cloud_name(gid: int) -> str:
    return f"cloud_{gid:03d}.txt"


def _field_name(gid: int) -> str:
    return f"fields_{gid:03d}.txt"


def write_dataset(directory, selection, counts=DEFAULT_COUNTS, seed: int = 0,
                  case: ManufacturedCase | None = None, T_cold: float = 0.0) -> str:
    """Sample and write every selected geometry; field files only when ``case`` is given."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for gid, spec in selection:
        cloud = sample_point_cloud(spec, counts, seed=seed + gid, T_cold=T_cold)
        write_cloud_file(os.path.join(directory, _cloud_name(gid)), cloud)
        entry = {"id": gid, "shape": spec.shape, "omega_deg": spec.omega_deg,
                 "side_length": spec.side_length, "seed": seed + gid,
                 "cloud_file": _cloud_name(gid)}
        if case is not None:
            truth, _ = sample_truth(case, cloud)
            write_field_file(os.path.join(directory, _field_name(gid)), cloud.coords, truth, gid)
            entry["field_file"] = _field_name(gid)
        entries.append(entry)
    extra = {"truth": case.name if case is not None else None, "T_cold": T_cold}
    return write_manifest(directory, entries, counts, extra)


def load_dataset(directory, truth, external_dir=None) -> list[Sample]:
    """Read a dataset directory back.

    ``truth`` is a :class:`ManufacturedCase` (targets recomputed on the fly)
    or ``None``, in which case ``external_dir`` must hold ``fields_NNN.txt``
    files from an external solver.
    """
    manifest = read_manifest(directory)
    samples = []
    for e in manifest["geometries"]:
        spec = GeometrySpec(e["shape"], float(e["omega_deg"]), float(e["side_length"]))
        cloud = read_cloud_file(os.path.join(directory, e["cloud_file"]), spec)
        if truth is not None:
            fields_, obs = sample_truth(truth, cloud)
        else:
            if external_dir is None:
                raise ValueError("either a manufactured case or an external field directory is needed")
            fields_, obs = sample_truth(os.path.join(external_dir, _field_name(e["id"])), cloud)
        samples.append(Sample(int(e["id"]), spec, cloud, fields_, obs))
    return samples
