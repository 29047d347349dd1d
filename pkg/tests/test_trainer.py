import json
import math

import numpy as np
import pytest
import torch

from conftest import tiny_config
from pikan.dataset import build_samples, select_specs
from pikan.fields import FieldSolution
from pikan.geometry import GeometrySpec, circumradius, sample_point_cloud
from pikan.groundtruth import hydrostatic_case, trigonometric_case
from pikan.network import build, load_checkpoint
from pikan.physics import LOSS_TERMS, DirectFieldAdapter, FluidParams
from pikan.trainer import (
    QUANTITIES,
    TrainConfig,
    TrainingDivergedError,
    UndefinedMetricError,
    error_table,
    format_error_table,
    read_history,
    relative_l2,
    surface_profile,
    train,
)

TINY_COUNTS = (160, 120, 40, 12)
PARAMS = FluidParams()


@pytest.fixture(scope="module")
def samples():
    return build_samples(select_specs(ids=[0, 50, 100]), trigonometric_case(PARAMS), TINY_COUNTS, seed=0)


def _data(samples):
    return [(s.cloud, s.observations) for s in samples]


def test_zero_epochs_returns_initial_state(samples):
    cfg = tiny_config("full_kan")
    ref = build(cfg, dtype=torch.float32)
    model, hist = train(_data(samples), TrainConfig(epochs=0, batch_size=2), cfg)
    assert len(hist) == 0 and hist.best_epoch is None
    for k, v in ref.state_dict().items():
        assert torch.equal(v, model.state_dict()[k]), k
    assert not model.training


def test_history_invariants_and_checkpoint(samples, tmp_path):
    ck, hp = tmp_path / "best.pt", tmp_path / "history.jsonl"
    tc = TrainConfig(epochs=6, batch_size=2, learning_rate=1e-3, checkpoint_path=str(ck),
                     history_path=str(hp), dtype="float64")
    model, hist = train(_data(samples), tc, tiny_config("hybrid_kan_enc_mlp_dec"), PARAMS)
    assert len(hist) == 6 and [r["epoch"] for r in hist.records] == list(range(1, 7))
    totals = hist.totals
    assert hist.best_loss == min(totals)
    assert hist.best_epoch == totals.index(min(totals)) + 1
    best = hist.running_best()
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    for r in hist.records:
        assert all(r[t] >= 0 for t in LOSS_TERMS)
        assert abs(sum(r[t] for t in LOSS_TERMS) - r["total"]) <= 1e-10 * max(1.0, r["total"])
        assert r["seconds"] > 0

    on_disk = read_history(hp)
    assert on_disk.records == json.loads(json.dumps(hist.records))
    assert on_disk.best_epoch == hist.best_epoch

    loaded, payload = load_checkpoint(ck)
    assert payload["epoch"] == hist.best_epoch and payload["best_loss"] == hist.best_loss
    coords = torch.as_tensor(samples[0].cloud.coords[None])
    with torch.no_grad():
        torch.testing.assert_close(loaded.eval()(coords), model(coords), rtol=0, atol=0)


def test_deterministic_reruns(samples):
    tc = TrainConfig(epochs=3, batch_size=2, seed=4)
    _, h1 = train(_data(samples), tc, tiny_config("full_kan", seed=1), PARAMS)
    _, h2 = train(_data(samples), tc, tiny_config("full_kan", seed=1), PARAMS)
    assert h1.totals == h2.totals


def test_loss_decreases_on_short_run(samples):
    tc = TrainConfig(epochs=25, batch_size=3, learning_rate=5e-3)
    _, h = train(_data(samples), tc, tiny_config("full_kan"), PARAMS)
    assert h.best_loss < h.totals[0]


def test_batch_size_larger_than_dataset(samples):
    with pytest.raises(ValueError):
        train(_data(samples), TrainConfig(epochs=1, batch_size=4), tiny_config())


def test_mixed_cloud_sizes_rejected(samples):
    other = build_samples(select_specs(ids=[1]), trigonometric_case(PARAMS), (170, 130, 40, 12))
    with pytest.raises(ValueError, match="share N"):
        train(_data(samples) + _data(other), TrainConfig(epochs=1, batch_size=1), tiny_config())


def test_divergence_reports_epoch_and_terms(samples):
    data = _data(samples)
    bad = data[1][1]
    obs = type(bad)(**{**bad.__dict__, "pressure": np.full_like(bad.pressure, np.inf)})
    data = [data[0], (data[1][0], obs), data[2]]
    with pytest.raises(TrainingDivergedError) as exc:
        train(data, TrainConfig(epochs=2, batch_size=1), tiny_config())
    assert exc.value.epoch == 1
    assert set(exc.value.breakdown) >= set(LOSS_TERMS)
    assert "pressure_obs" in str(exc.value)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(dtype="float16")
    tc = TrainConfig()
    assert (tc.learning_rate, tc.epochs, tc.batch_size) == (5e-4, 2500, 7)
    assert (tc.adam_beta1, tc.adam_beta2, tc.adam_eps) == (0.9, 0.999, 1e-8)


def test_relative_l2_examples():
    t = np.array([3.0, -4.0, 1.0])
    assert relative_l2(t, t) == 0.0
    assert relative_l2(np.zeros(3), t) == 1.0
    assert relative_l2([1, 1], [1, 0]) == 1.0
    assert relative_l2([9, 1, 1], [5, 1, 0], indices=[1, 2]) == 1.0
    with pytest.raises(UndefinedMetricError):
        relative_l2([1, 2], [0, 0])


class ScaledTruth:
    """Predicts ``truth * (1 + eps_g)`` per geometry, so every relative error is ``eps_g``."""

    dtype = torch.float64

    def __init__(self, clouds, truths, eps):
        self.lookup = {c.coords.tobytes(): t.as_array() * (1 + e) for c, t, e in zip(clouds, truths, eps)}

    def __call__(self, coords):
        return torch.stack([torch.as_tensor(self.lookup[c.numpy().tobytes()]) for c in coords])

    def eval(self):
        return self


def test_error_table_exact_adapter_is_zero(samples):
    case = trigonometric_case(PARAMS)
    out = error_table(DirectFieldAdapter(case), [s.cloud for s in samples], [s.truth for s in samples])
    for q in QUANTITIES:
        assert out["table"][q] == {"average": 0.0, "maximum": 0.0, "minimum": 0.0}
    assert len(out["per_geometry"]) == 3


def test_error_table_aggregation(samples):
    clouds, truths = [s.cloud for s in samples[:2]], [s.truth for s in samples[:2]]
    out = error_table(ScaledTruth(clouds, truths, [0.1, 0.3]), clouds, truths)
    u = out["table"]["u_V"]
    assert u["average"] == pytest.approx(0.2, abs=1e-12)
    assert u["maximum"] == pytest.approx(0.3, abs=1e-12)
    assert u["minimum"] == pytest.approx(0.1, abs=1e-12)
    for q in QUANTITIES:
        row = out["table"][q]
        assert row["minimum"] <= row["average"] <= row["maximum"]

    single = error_table(ScaledTruth(clouds[:1], truths[:1], [0.25]), clouds[:1], truths[:1])
    for q in QUANTITIES:
        row = single["table"][q]
        assert row["average"] == row["maximum"] == row["minimum"] == pytest.approx(0.25)


def test_error_table_missing_truth(samples):
    with pytest.raises(ValueError):
        error_table(DirectFieldAdapter(trigonometric_case(PARAMS)), [samples[0].cloud], [None])


def test_error_table_format_rows():
    table = {q: {"average": 1e-3, "maximum": 2e-3, "minimum": 5e-4} for q in QUANTITIES}
    text = format_error_table(table, {"Number of trainable parameters": 666880})
    lines = text.splitlines()
    assert len(lines) == 16
    assert lines[0] == "Average ||u~-u||_V/||u||_V\t1.00000E-03"
    assert lines[14].startswith("Minimum ||T~-T||_Gamma/||T||_Gamma")
    assert lines[15] == "Number of trainable parameters\t666880"


def test_surface_profile():
    spec = GeometrySpec("octagon", 0.0)
    cloud = sample_point_cloud(spec, seed=0)
    truth = FieldSolution.from_array(np.tile([0.0, 0.0, 0.0, 0.6], (5000, 1)))
    prof = surface_profile(truth, cloud)
    assert prof.shape == (168, 2)
    assert (prof[:, 1] == 0.6).all()
    assert prof[0, 0] == 0.0
    assert cloud.coords[cloud.idx_inner[0]] == pytest.approx([circumradius(spec), 0.0])
    assert (np.diff(prof[:, 0]) > 0).all() and prof[-1, 0] < 360


def test_surface_profile_hydrostatic_case():
    cloud = sample_point_cloud(GeometrySpec("nonagon", 31.0), TINY_COUNTS, seed=0)
    truth = hydrostatic_case(0.3, PARAMS).fields(*cloud.coords.T)
    prof = surface_profile(truth, cloud)
    assert np.allclose(prof[:, 1], 0.3) and math.isclose(prof[:, 0].min(), prof[0, 0])
