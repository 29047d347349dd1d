"""
Training a small model
======================

Three geometries, 256 points each, a quarter-width KAN with degree-2
Chebyshev edges. The truth is the trigonometric manufactured flow, so the
error table below measures how well the network recovers it from sensor
data and the equations.

Runs in a few minutes on a laptop CPU; set ``EPOCHS`` to shorten it.
"""

import os

import numpy as np

from pikan.dataset import build_samples, select_specs
from pikan.groundtruth import trigonometric_case
from pikan.jacobi import CHEBYSHEV_FIRST
from pikan.network import NetworkConfig
from pikan.physics import FluidParams
from pikan.trainer import (
    TrainConfig,
    error_table,
    format_error_table,
    predict_fields,
    run_rows,
    surface_profile,
    train,
)

out = os.environ.get("PIKAN_DEMO_OUT", "demo_output")
os.makedirs(out, exist_ok=True)
epochs = int(os.environ.get("EPOCHS", 300))

params = FluidParams()
samples = build_samples(select_specs(limit=3), trigonometric_case(params), counts=(256, 176, 80, 48))

net = NetworkConfig.uniform("full_kan", 0.25, jacobi=CHEBYSHEV_FIRST)
cfg = TrainConfig(epochs=epochs, batch_size=3, history_path=os.path.join(out, "history.jsonl"))


def progress(record):
    if record["epoch"] % 50 == 0:
        print(f"epoch {record['epoch']:4d}  loss {record['total']:.4e}")


model, history = train([(s.cloud, s.observations) for s in samples], cfg, net, params, on_epoch=progress)
print(f"best loss {history.best_loss:.4e} at epoch {history.best_epoch} "
      f"(epoch 1: {history.totals[0]:.4e})")

result = error_table(model, [s.cloud for s in samples], [s.truth for s in samples])
seconds = float(np.mean([r["seconds"] for r in history.records]))
print(format_error_table(result["table"], run_rows(history.best_loss, seconds, history.best_epoch,
                                                   model.param_count())))

# temperature around the cylinder of the first geometry
pred = predict_fields(model, [samples[0].cloud])[0]
prof = surface_profile(pred, samples[0].cloud)
ref = surface_profile(samples[0].truth, samples[0].cloud)
np.savetxt(os.path.join(out, "surface_T.txt"), np.column_stack([prof, ref[:, 1]]),
           header="theta_deg T_predicted T_truth")
