import numpy as np
import pytest
import torch

from pikan.geometry import PointCloud
from pikan.jacobi import JacobiParams
from pikan.network import VARIANTS, NetworkConfig

TINY_WIDTHS = ((4, 4), (4, 8), (8, 4, 4))


def tiny_config(variant="full_kan", degree=2, seed=0, alpha=-0.5, beta=-0.5):
    return NetworkConfig(variant=variant, ns_encoder=1.0, ns_decoder=1.0,
                         jacobi=JacobiParams(alpha, beta, degree), seed=seed,
                         base_widths=TINY_WIDTHS)


def random_cloud(n, batch=1, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return (torch.rand(batch, n, 2, generator=g, dtype=dtype) * 2 - 1)


def small_cloud() -> PointCloud:
    """Four points: two interior sensors, one outer-wall point, one inner-surface point."""
    coords = np.array([[0.5, 0.5], [-0.5, 0.2], [1.0, 0.0], [0.3, 0.0]])
    return PointCloud(
        coords=coords,
        idx_interior=np.array([0, 1]),
        idx_outer=np.array([2]),
        idx_inner=np.array([3]),
        idx_vel_sensors=np.array([0, 1]),
        idx_pt_sensors=np.array([0, 1, 3]),
    ).validate()


def stencils(model, ctx, coords, b, j, axis, h):
    """Five-point first and second derivatives of the per-point map at point j."""
    def at(delta):
        q = coords.clone()
        q[b, j, axis] += delta
        with torch.no_grad():
            return model.evaluate(q, ctx)[b, j]
    f = [at(k * h) for k in (-2, -1, 0, 1, 2)]
    first = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h)
    second = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h**2)
    return first, second


def converges_to(ad, fd_at, h, rtol):
    """FD at step h, refined to h/3 and h/10 if needed, must hit ad within rtol.

    Batch statistics over a handful of points can create sharp features where
    the nominal step is too coarse; refining shows the truncation error shrinks
    onto the autodiff value.
    """
    misses = []
    for step in (h, h / 3, h / 10):
        fd = fd_at(step)
        if abs(ad - fd) <= rtol * max(abs(fd), 1e-6):
            return
        misses.append(fd)
    raise AssertionError(f"autodiff {ad} vs finite differences {misses}")


@pytest.fixture(params=VARIANTS)
def variant(request):
    return request.param


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
