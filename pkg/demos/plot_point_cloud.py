"""
Point clouds and sensors
========================

A geometry is the square [-1, 1]^2 with a regular polygon removed. Its cloud
has interior points, points on the outer wall and points on the polygon
surface; 105 interior sensors record velocity, and those plus 25 surface
sensors record pressure and temperature.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from pikan.geometry import GeometrySpec, circumradius, generate_dataset_specs, polygon_vertices, sample_point_cloud

out = os.environ.get("PIKAN_DEMO_OUT", "demo_output")
os.makedirs(out, exist_ok=True)

specs = generate_dataset_specs()
print(f"{len(specs)} geometries; first {specs[0].name}, last {specs[-1].name}")

spec = GeometrySpec("octagon", omega_deg=20.0)
print(f"octagon side {spec.side_length:.7f} m, circumradius {circumradius(spec):.7f} m")

cloud = sample_point_cloud(spec, seed=0)
print("cardinalities:", cloud.counts)

fig, ax = plt.subplots(figsize=(6, 6))
xy = cloud.coords
ax.scatter(*xy[cloud.idx_interior].T, s=1, c="0.7", label="interior")
ax.scatter(*xy[cloud.idx_outer].T, s=2, c="tab:blue", label="outer wall")
ax.scatter(*xy[cloud.idx_inner].T, s=2, c="tab:red", label="cylinder surface")
ax.scatter(*xy[cloud.idx_vel_sensors[:80]].T, marker="s", s=14, c="k", label="fixed sensors")
ax.scatter(*xy[cloud.idx_vel_sensors[80:]].T, marker="^", s=14, c="tab:green", label="ring sensors")
ax.scatter(*xy[cloud.idx_surface_sensors].T, marker="o", s=14, c="tab:orange", label="surface sensors")
poly = np.vstack([polygon_vertices(spec), polygon_vertices(spec)[:1]])
ax.plot(*poly.T, "r-", lw=0.8)
ax.set_aspect("equal")
ax.legend(loc="upper right", fontsize=7, markerscale=2)
fig.tight_layout()
fig.savefig(os.path.join(out, "point_cloud.png"), dpi=120)
