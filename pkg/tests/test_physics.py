import math

import numpy as np
import pytest
import sympy as sp
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_cloud
from pikan.fields import DERIVATIVE_NAMES, FieldDerivatives, FieldSolution
from pikan.groundtruth import Observations, hydrostatic_case, sample_truth, trigonometric_case
from pikan.physics import (
    LOSS_TERMS,
    DirectFieldAdapter,
    FluidParams,
    LossBreakdown,
    batched_pipn_loss,
    boussinesq_forcing,
    dimensionless,
    pde_residuals,
    pipn_loss,
    pointwise_residuals,
)

UNIT = FluidParams(rho=1, mu=1, kappa=1, cp=1, G=1, beta_exp=1, T_hot=1, T_cold=0, T_ref=0)


def zero_derivs(n):
    return FieldDerivatives(**{k: np.zeros(n) for k in DERIVATIVE_NAMES})


def test_default_fluid_gives_target_groups():
    ra, pr = dimensionless(FluidParams(), 2.0)
    assert ra == pytest.approx(1e5, rel=1e-14)
    assert pr == 1.0


def test_unit_groups_and_cubic_length():
    assert dimensionless(UNIT, 1.0) == (1.0, 1.0)
    ra, _ = dimensionless(FluidParams(), 4.0)
    assert ra == pytest.approx(8e5, rel=1e-14)


@pytest.mark.parametrize("kw", [{"rho": 0}, {"mu": -1}, {"T_hot": 0.0}])
def test_fluid_validation(kw):
    with pytest.raises(ValueError):
        FluidParams(**kw)


def test_forcing_examples():
    assert boussinesq_forcing(0.0, UNIT) == (0.0, 0.0)
    assert boussinesq_forcing(1.0, UNIT) == (0.0, 1.0)
    p = FluidParams(rho=1, G=1, beta_exp=2, T_ref=0)
    assert boussinesq_forcing(0.5, p) == (0.0, 1.0)


def test_hydrostatic_residuals_vanish():
    case = hydrostatic_case(0.7, FluidParams())
    x, y = np.random.default_rng(0).uniform(-1, 1, (2, 200))
    res = pde_residuals(case.fields(x, y), case.derivatives(x, y), FluidParams())
    assert all(r == 0 for r in res)


def test_divergence_two_gives_continuity_four():
    x, y = np.random.default_rng(1).uniform(-1, 1, (2, 50))
    z = np.zeros_like(x)
    d = zero_derivs(50)
    d.u_x[:] = 1.0
    d.v_y[:] = 1.0
    c, *_ = pde_residuals(FieldSolution(x, y, z, z), d, UNIT)
    assert c == 4.0


def test_point_count_mismatch():
    f = FieldSolution(*np.zeros((4, 5)))
    with pytest.raises(ValueError):
        pde_residuals(f, zero_derivs(6), UNIT)


def _symbolic_trig(params):
    x, y = sp.symbols("x y")
    psi = sp.sin(sp.pi * x) * sp.sin(sp.pi * y)
    u, v = sp.diff(psi, y), -sp.diff(psi, x)
    p = sp.cos(sp.pi * x) * sp.cos(sp.pi * y)
    T = sp.cos(sp.pi * x / 2) * sp.cos(sp.pi * y / 2)
    lap = lambda f: sp.diff(f, x, 2) + sp.diff(f, y, 2)  # noqa: E731
    rho, mu, kappa, cp = params.rho, params.mu, params.kappa, params.cp
    fy = rho * params.G * params.beta_exp * (T - params.T_ref)
    exprs = {
        "continuity": sp.diff(u, x) + sp.diff(v, y),
        "momentum_x": rho * (u * sp.diff(u, x) + v * sp.diff(u, y)) + sp.diff(p, x) - mu * lap(u),
        "momentum_y": rho * (u * sp.diff(v, x) + v * sp.diff(v, y)) + sp.diff(p, y) - mu * lap(v) - fy,
        "energy": rho * (u * sp.diff(T, x) + v * sp.diff(T, y)) - kappa / cp * lap(T),
    }
    derivs = {}
    for name, f in (("u", u), ("v", v), ("p", p), ("T", T)):
        derivs[f"{name}_x"], derivs[f"{name}_y"] = sp.diff(f, x), sp.diff(f, y)
        derivs[f"{name}_xx"], derivs[f"{name}_yy"] = sp.diff(f, x, 2), sp.diff(f, y, 2)
    as_fn = lambda e: sp.lambdify((x, y), e, "numpy")  # noqa: E731
    return ({k: as_fn(e) for k, e in exprs.items()},
            {k: as_fn(e) for k, e in derivs.items()},
            [as_fn(e) for e in (u, v, p, T)])


def _eval(fn, x):
    return np.broadcast_to(fn(x[0], x[1]), x[0].shape)


def test_trigonometric_case_against_symbolic_oracle():
    params = FluidParams()
    case = trigonometric_case(params)
    res, derivs, flds = _symbolic_trig(params)
    pts = np.random.default_rng(2).uniform(-1, 1, (2, 1000))

    got = case.fields(*pts)
    for name, fn in zip("uvpT", flds):
        np.testing.assert_allclose(got[name], _eval(fn, pts), rtol=0, atol=1e-12)
    d = case.derivatives(*pts)
    for name in DERIVATIVE_NAMES:
        np.testing.assert_allclose(getattr(d, name), _eval(derivs[name], pts), rtol=0, atol=1e-10)

    src = case.sources(*pts)
    assert np.abs(_eval(res["continuity"], pts)).max() < 1e-10
    for k, term in enumerate(("momentum_x", "momentum_y", "energy")):
        assert np.abs(_eval(res[term], pts) - src[:, k]).max() < 1e-10

    sym_d = FieldDerivatives(**{k: _eval(derivs[k], pts) for k in DERIVATIVE_NAMES})
    sym_f = FieldSolution(*(_eval(fn, pts) for fn in flds))
    assert max(pde_residuals(sym_f, sym_d, params, sources=src)) < 1e-20


def _zero_observations(cloud):
    n_in = len(cloud.idx_interior)
    return Observations(
        velocity=np.zeros((len(cloud.idx_vel_sensors), 2)),
        pressure=np.zeros(len(cloud.idx_pt_sensors)),
        temperature=np.zeros(len(cloud.idx_pt_sensors)),
        bc_velocity=cloud.bc_velocity,
        bc_temperature_outer=cloud.bc_temperature_outer,
        sources=np.zeros((n_in, 3)),
    )


def test_exact_solution_zero_loss():
    cloud = small_cloud()
    n = len(cloud.coords)
    z = np.zeros(n)
    lb = pipn_loss(FieldSolution(z, z, z, z), zero_derivs(n), cloud, _zero_observations(cloud), UNIT)
    assert lb.total == 0.0


def test_single_sensor_discrepancy():
    cloud = small_cloud()
    n = len(cloud.coords)
    u = np.zeros(n)
    u[cloud.idx_vel_sensors[0]] = 0.1
    z = np.zeros(n)
    lb = pipn_loss(FieldSolution(u, z, z, z), zero_derivs(n), cloud, _zero_observations(cloud), UNIT)
    assert lb.velocity_obs == pytest.approx(0.005, abs=1e-15)
    assert lb.total == pytest.approx(0.005, abs=1e-15)
    assert all(getattr(lb, t) == 0 for t in LOSS_TERMS if t != "velocity_obs")


def test_missing_observation_rejected():
    cloud = small_cloud()
    obs = _zero_observations(cloud)
    obs.pressure = obs.pressure[:-1]
    z = np.zeros(len(cloud.coords))
    with pytest.raises(ValueError):
        pipn_loss(FieldSolution(z, z, z, z), zero_derivs(len(z)), cloud, obs, UNIT)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), shift=st.floats(-100, 100))
def test_total_is_component_sum_and_pressure_shift(seed, shift):
    rng = np.random.default_rng(seed)
    cloud = small_cloud()
    n = len(cloud.coords)
    f = FieldSolution(*rng.normal(size=(4, n)))
    d = FieldDerivatives(**{k: rng.normal(size=n) for k in DERIVATIVE_NAMES})
    obs = _zero_observations(cloud)
    obs.velocity = rng.normal(size=obs.velocity.shape)
    obs.sources = rng.normal(size=obs.sources.shape)
    lb = pipn_loss(f, d, cloud, obs, FluidParams())
    assert abs(lb.total - sum(getattr(lb, t) for t in LOSS_TERMS)) <= 1e-12 * max(1, lb.total)
    assert all(getattr(lb, t) >= 0 for t in LOSS_TERMS)

    shifted = pipn_loss(FieldSolution(f.u, f.v, f.p + shift, f.T), d, cloud, obs, FluidParams())
    for t in LOSS_TERMS:
        if t != "pressure_obs":
            assert math.isclose(getattr(shifted, t), getattr(lb, t), rel_tol=1e-10, abs_tol=1e-10)


def test_loss_breakdown_mean():
    a = LossBreakdown(*range(9))
    b = LossBreakdown(*range(9, 18))
    m = LossBreakdown.mean([a, b])
    assert m.as_dict()["total"] == pytest.approx((a.total + b.total) / 2)
    with pytest.raises(ValueError):
        LossBreakdown.mean([])


@pytest.mark.parametrize("c", [0.0, 1.0, 0.3])
def test_hydrostatic_through_adapter(c):
    from pikan.geometry import GeometrySpec, sample_point_cloud

    params = FluidParams()
    case = hydrostatic_case(c, params)
    clouds = [sample_point_cloud(GeometrySpec("octagon", om), (256, 176, 80, 48), seed=0)
              for om in (5.0, 20.0)]
    obs = [sample_truth(case, cl)[1] for cl in clouds]
    coords = torch.as_tensor(np.stack([cl.coords for cl in clouds]))
    lb = batched_pipn_loss(DirectFieldAdapter(case), coords, clouds, obs, params)
    assert lb.total < 1e-10


def test_trigonometric_through_adapter():
    from pikan.geometry import GeometrySpec, sample_point_cloud

    params = FluidParams()
    case = trigonometric_case(params)
    cloud = sample_point_cloud(GeometrySpec("heptagon", 10.0), (256, 176, 80, 48), seed=1)
    obs = sample_truth(case, cloud)[1]
    coords = torch.as_tensor(cloud.coords[None])
    assert batched_pipn_loss(DirectFieldAdapter(case), coords, [cloud], [obs], params).total < 1e-10
    obs.sources = None
    assert batched_pipn_loss(DirectFieldAdapter(case), coords, [cloud], [obs], params).total > 1


def test_pointwise_residuals_torch_and_numpy_agree():
    rng = np.random.default_rng(5)
    f = FieldSolution(*rng.normal(size=(4, 10)))
    d = FieldDerivatives(**{k: rng.normal(size=10) for k in DERIVATIVE_NAMES})
    ft = FieldSolution(*(torch.as_tensor(a) for a in (f.u, f.v, f.p, f.T)))
    dt = FieldDerivatives(**{k: torch.as_tensor(v) for k, v in d.as_dict().items()})
    for a, b in zip(pointwise_residuals(f, d, FluidParams()), pointwise_residuals(ft, dt, FluidParams())):
        np.testing.assert_allclose(a, b.numpy(), rtol=1e-15, atol=0)
