"""Command-line driver: ``pikan generate|train|evaluate|count-params --config FILE``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from dataclasses import asdict, fields
from importlib import resources

import jsonschema
import numpy as np
import yaml

from .dataset import load_dataset, select_specs, write_dataset
from .geometry import DEFAULT_COUNTS
from .groundtruth import IngestionError, make_case
from .network import ConfigurationError, NetworkConfig, load_checkpoint, param_breakdown, total_param_count
from .physics import DirectFieldAdapter, FluidParams
from .trainer import (
    TrainConfig,
    TrainingDivergedError,
    error_table,
    format_error_table,
    predict_fields,
    read_history,
    run_rows,
    surface_profile,
    train,
    write_history,
)

log = logging.getLogger("pikan")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_INGESTION, EXIT_DIVERGED = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAILURE):
        super().__init__(message)
        self.code = code


def load_schema() -> dict:
    return json.loads(resources.files("pikan").joinpath("config_schema.json").read_text())


def load_config(path) -> tuple[dict, str]:
    """Parse and validate a YAML config; returns ``(config, raw_text)``."""
    try:
        with open(path) as fh:
            raw = fh.read()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_CONFIG) from None
    try:
        cfg = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise CliError(f"{path}: invalid YAML: {exc}", EXIT_CONFIG) from None
    if not isinstance(cfg, dict):
        raise CliError(f"{path}: top level must be a mapping", EXIT_CONFIG)
    if isinstance(cfg.get("schema_version"), (int, float)):
        cfg["schema_version"] = str(cfg["schema_version"])
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(f"{path}: schema violation at {where}: {exc.message}", EXIT_CONFIG) from None
    return cfg, raw


def network_config(cfg: dict) -> NetworkConfig:
    net = dict(cfg.get("network", {}))
    ns = net.pop("ns", None)
    if ns is not None:
        net.setdefault("ns_encoder", ns)
        net.setdefault("ns_decoder", ns)
    try:
        return NetworkConfig.from_dict(net)
    except (ConfigurationError, ValueError, TypeError) as exc:
        raise CliError(f"network: {exc}", EXIT_CONFIG) from None


def fluid_params(cfg: dict) -> FluidParams:
    try:
        return FluidParams(**cfg.get("fluid", {}))
    except ValueError as exc:
        raise CliError(f"fluid: {exc}", EXIT_CONFIG) from None


def _counts(cfg: dict) -> tuple[int, int, int, int]:
    c = cfg.get("dataset", {}).get("counts")
    return DEFAULT_COUNTS if c is None else (c["N"], c["M1"], c["M2"], c["M3"])


def _case(cfg: dict, params: FluidParams):
    truth = cfg.get("truth", {"case": "trigonometric"})
    if "case" not in truth:
        return None
    kw = {"c": truth["c"]} if "c" in truth else {}
    return make_case(truth["case"], params, **kw)


class Run:
    """Resolved paths for one invocation."""

    def __init__(self, cfg: dict, out: str | None):
        self.cfg = cfg
        self.out = out or cfg.get("output_dir") or "pikan_run"
        self.dataset_dir = cfg.get("dataset", {}).get("dir") or os.path.join(self.out, "dataset")

    def path(self, *parts) -> str:
        return os.path.join(self.out, *parts)

    def prepare(self, config_path: str) -> None:
        try:
            os.makedirs(self.out, exist_ok=True)
            shutil.copyfile(config_path, self.path("config.yaml"))
        except OSError as exc:
            raise CliError(f"cannot write to {self.out}: {exc}") from None


def cmd_generate(run: Run) -> int:
    cfg = run.cfg
    ds = cfg.get("dataset", {})
    params = fluid_params(cfg)
    selection = select_specs(ids=ds.get("ids"), limit=ds.get("limit"))
    try:
        write_dataset(run.dataset_dir, selection, _counts(cfg), seed=ds.get("seed", 0),
                      case=_case(cfg, params), T_cold=params.T_cold)
    except ConfigurationError as exc:
        raise CliError(f"dataset: {exc}", EXIT_CONFIG) from None
    except OSError as exc:
        raise CliError(f"cannot write dataset to {run.dataset_dir}: {exc}") from None
    print(f"wrote {len(selection)} geometries to {run.dataset_dir}")
    return EXIT_OK


def _load_samples(run: Run, params: FluidParams):
    if not os.path.exists(os.path.join(run.dataset_dir, "manifest.json")):
        raise CliError(f"no dataset at {run.dataset_dir}; run `pikan generate` first", EXIT_CONFIG)
    external = run.cfg.get("truth", {}).get("external_dir")
    try:
        return load_dataset(run.dataset_dir, _case(run.cfg, params), external_dir=external)
    except (IngestionError, FileNotFoundError) as exc:
        raise CliError(f"ingestion failed: {exc}", EXIT_INGESTION) from None


def _train_config(cfg: dict, run: Run) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    tc = {k: v for k, v in cfg.get("training", {}).items() if k in known}
    try:
        return TrainConfig(**tc, checkpoint_path=run.path("checkpoint.pt"),
                           history_path=run.path("history.jsonl"))
    except ValueError as exc:
        raise CliError(f"training: {exc}", EXIT_CONFIG) from None


def cmd_train(run: Run) -> int:
    params = fluid_params(run.cfg)
    net = network_config(run.cfg)
    samples = _load_samples(run, params)
    tc = _train_config(run.cfg, run)
    if tc.batch_size > len(samples):
        raise CliError(f"batch_size {tc.batch_size} exceeds the {len(samples)} geometries", EXIT_CONFIG)
    data = [(s.cloud, s.observations) for s in samples]
    try:
        model, history = train(data, tc, net, params)
    except TrainingDivergedError as exc:
        with open(run.path("divergence.json"), "w") as fh:
            json.dump({"epoch": exc.epoch, "breakdown": exc.breakdown}, fh, indent=2)
        raise CliError(str(exc), EXIT_DIVERGED) from None
    summary = {
        "best_epoch": history.best_epoch,
        "best_loss": history.best_loss if history.records else None,
        "epochs": len(history),
        "param_count": total_param_count(net),
        "geometries": [s.id for s in samples],
        "network": net.to_dict(),
        "training": asdict(tc),
        "mean_epoch_seconds": float(np.mean([r["seconds"] for r in history.records])) if history.records else None,
    }
    if not history.records:
        write_history(run.path("history.jsonl"), history)
    with open(run.path("summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(f"best loss {summary['best_loss']} at epoch {summary['best_epoch']}; "
          f"{summary['param_count']} parameters")
    return EXIT_OK


def _write_columns(path, header: str, columns) -> None:
    np.savetxt(path, np.column_stack(columns), header=header, fmt="%.10e")


def _plot(path, x, ys: dict, xlabel: str, ylabel: str, logy=False) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, y in ys.items():
        ax.plot(x, y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(ys) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_evaluate(run: Run, checkpoint: str | None) -> int:
    cfg = run.cfg
    params = fluid_params(cfg)
    ev = cfg.get("evaluate", {})
    samples = _load_samples(run, params)
    if ev.get("model", "checkpoint") == "direct":
        case = _case(cfg, params)
        if case is None:
            raise CliError("the direct-field model needs a manufactured truth case", EXIT_CONFIG)
        model, label, extra = DirectFieldAdapter(case), "direct", {}
    else:
        ck = checkpoint or run.path("checkpoint.pt")
        try:
            model, payload = load_checkpoint(ck)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot load checkpoint {ck}: {exc}", EXIT_CONFIG) from None
        expected = network_config(cfg)
        if model.config != expected:
            raise CliError(f"checkpoint network {model.config} does not match the config {expected}",
                           EXIT_CONFIG)
        label = "network"
        summary = {}
        if os.path.exists(run.path("summary.json")):
            with open(run.path("summary.json")) as fh:
                summary = json.load(fh)
        extra = run_rows(summary.get("best_loss"), summary.get("mean_epoch_seconds"),
                         summary.get("best_epoch"), model.param_count())

    result = error_table(model, [s.cloud for s in samples], [s.truth for s in samples])
    result["geometries"] = [s.id for s in samples]
    result["model"] = label
    with open(run.path("error_table.json"), "w") as fh:
        json.dump(result, fh, indent=2)
    with open(run.path("error_table.txt"), "w") as fh:
        fh.write(format_error_table(result["table"], extra))

    plots = ev.get("plots", True)
    wanted = ev.get("profile_ids")
    chosen = [s for s in samples if wanted is None or s.id in wanted]
    if wanted is None:
        chosen = chosen[:3]
    preds = predict_fields(model, [s.cloud for s in chosen])
    for s, pred in zip(chosen, preds):
        p = surface_profile(pred, s.cloud)
        t = surface_profile(s.truth, s.cloud)
        stem = run.path(f"profile_{s.id:03d}")
        _write_columns(stem + ".txt", "theta_deg T_predicted", [p[:, 0], p[:, 1]])
        _write_columns(stem + "_truth.txt", "theta_deg T_truth", [t[:, 0], t[:, 1]])
        if plots:
            _plot(stem + ".png", p[:, 0], {"predicted": p[:, 1], "truth": t[:, 1]}, "theta [deg]", "T [K]")

    hist_path = run.path("history.jsonl")
    if os.path.exists(hist_path):
        hist = read_history(hist_path)
        if hist.records:
            epochs = [r["epoch"] for r in hist.records]
            _write_columns(run.path("loss.txt"), "epoch total_loss", [epochs, hist.totals])
            if plots:
                _plot(run.path("loss.png"), epochs, {"total": hist.totals}, "epoch", "loss", logy=True)

    print(format_error_table(result["table"], extra), end="")
    return EXIT_OK


def cmd_count_params(run: Run) -> int:
    net = network_config(run.cfg)
    print(f"{'#':>3} {'stage':<8} {'kind':<4} {'in':>5} {'out':>5} {'weights':>9} {'norm':>6} {'total':>9}")
    for r in param_breakdown(net):
        print(f"{r['index']:>3} {r['stage']:<8} {r['kind']:<4} {r['d_input']:>5} {r['d_output']:>5} "
              f"{r['weights']:>9} {r['norm']:>6} {r['total']:>9}")
    print(total_param_count(net))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pikan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("generate", "sample point clouds (and manufactured truth) into a dataset directory"),
        ("train", "train a network on a generated dataset"),
        ("evaluate", "error table, surface profiles and plots for a checkpoint"),
        ("count-params", "print the per-layer and total parameter count"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--checkpoint", help="checkpoint file (evaluate; default OUT/checkpoint.pt)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("PIKAN_THREADS")
    if threads:
        import torch

        torch.set_num_threads(max(1, int(threads)))
    try:
        cfg, _ = load_config(args.config)
        run = Run(cfg, args.out)
        run.prepare(args.config)
        if args.command == "generate":
            return cmd_generate(run)
        if args.command == "train":
            return cmd_train(run)
        if args.command == "evaluate":
            return cmd_evaluate(run, args.checkpoint)
        return cmd_count_params(run)
    except CliError as exc:
        print(f"pikan {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
