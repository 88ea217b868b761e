"""Command-line interface.

Every subcommand takes an optional ``--config`` JSON document; explicit
flags override its fields. The resolved configuration is written to
``<out>/config.json`` and a ``manifest.json`` records input/output hashes
and the wall time. Exit codes: 0 success, 1 data or usage errors,
2 numerical failures.
"""

from __future__ import annotations

import copy
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import io as fio
from .design import GridMapStack, compute_efp, select_doe
from .errors import DataError, NumericalError, ParameterError
from .gp import (LooConfig, OptimizerConfig, default_hyperparameters, fit_ml, loo,
                 pooled_variance, predict)
from .kernels import KernelKind
from .metrics import category_proportions, metric_report
from .synth import (COASTAL_POINTS_OF_INTEREST, CoastalConfig, coastal_inputs,
                    coastal_maps, gen_inputs, gen_maps, nearest_indices, preset_forecast,
                    preset_multioutput)

logger = logging.getLogger("spatfgp")

OPTIMIZER_DEFAULTS = {"max_evaluations": 600, "restarts": 3, "seed": 0, "tol": 1e-4}

DEFAULTS = {
    "synth": {"preset": "multioutput", "seed": 0, "out": None, "dense_format": False,
              "n_scenarios": None, "n_channels": None, "n_times": None, "grid_size": None,
              "overrides": {}},
    "fit": {"data": None, "out": None, "doe": None, "path": "auto", "functional_kind": "matern52",
            "spatial_kind": "matern52", "inertia_target": 0.999, "noise_variance": 0.0,
            "optimizer": OPTIMIZER_DEFAULTS},
    "predict": {"model": None, "inputs": None, "out": None, "scenarios": None, "locations": None,
                "clamp": True},
    "loo": {"data": None, "out": None, "doe": None, "reuse_hyperparameters": False, "clamp": True,
            "c_levels": [1.0, 2.0, 3.0], "workers": 1, "functional_kind": "matern52",
            "spatial_kind": "matern52", "inertia_target": 0.999, "pooled_variance": None,
            "optimizer": OPTIMIZER_DEFAULTS},
    "doe": {"data": None, "out": None, "kappa1": 50, "kappa2": 50, "efp_split": 0.4,
            "mandatory": [], "wet_threshold": 0.0, "seed": 0},
    "metrics": {"truth": None, "predictions": None, "out": None, "c_levels": [1.0, 2.0, 3.0],
                "pooled_variance": None},
}


def resolve_config(command: str, config_path, flags: dict) -> dict:
    """Defaults, then the JSON document, then explicit flags."""
    cfg = copy.deepcopy(DEFAULTS[command])
    if config_path is not None:
        doc = fio.read_json(config_path)
        unknown = set(doc) - set(cfg)
        if unknown:
            raise ParameterError(f"{config_path}: unknown {command} config keys {sorted(unknown)}")
        for k, v in doc.items():
            if isinstance(cfg[k], dict) and isinstance(v, dict):
                cfg[k] = {**cfg[k], **v}
            else:
                cfg[k] = v
    for k, v in flags.items():
        if v is None:
            continue
        if "." in k:
            outer, inner = k.split(".", 1)
            cfg[outer] = {**cfg[outer], inner: v}
        else:
            cfg[k] = v
    missing = [k for k in ("out", "data", "model", "truth", "predictions", "inputs")
               if k in cfg and cfg[k] is None and not (command == "predict" and k == "inputs")]
    if missing:
        raise ParameterError(f"{command}: missing required setting(s) {missing}")
    return cfg


def _start(command, cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    fio.write_json(out / "config.json", {"command": command, **cfg})
    return out, time.perf_counter()


def _finish(out: Path, command: str, t0: float, inputs: dict, seed=None):
    outputs = {p.relative_to(out).as_posix(): fio.sha256_file(p)
               for p in sorted(out.rglob("*")) if p.is_file() and p.name != "manifest.json"}
    fio.write_json(out / "manifest.json", {
        "command": command,
        "version": __version__,
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "wall_time_s": time.perf_counter() - t0,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    })


def _optimizer(cfg) -> OptimizerConfig:
    o = cfg["optimizer"]
    return OptimizerConfig(max_evaluations=int(o["max_evaluations"]), restarts=int(o["restarts"]),
                           seed=int(o["seed"]), tol=float(o["tol"]))


def _read_doe(path, ds: fio.Dataset):
    if path is None:
        return None
    header, rows = fio._read_rows(path)
    if not header or header[0] != "location_id":
        raise DataError(f"{path}: line 1: first column must be location_id")
    pos = {l: i for i, l in enumerate(ds.location_ids)}
    idx = []
    for i, row in enumerate(rows, start=2):
        if row[0] not in pos:
            raise DataError(f"{path}: line {i}: unknown location id {row[0]!r}")
        idx.append(pos[row[0]])
    return np.asarray(idx, dtype=int)


def _input_hashes(*paths) -> dict:
    out = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.rglob("*.csv")) + sorted(p.glob("*.json")):
                out[str(f)] = fio.sha256_file(f)
        elif p.exists():
            out[str(p)] = fio.sha256_file(p)
    return out


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Emulate spatial maps driven by functional inputs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command("synth")
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--preset", type=click.Choice(["multioutput", "forecast", "coastal"]))
@click.option("--seed", type=int)
@click.option("--n-scenarios", type=int)
@click.option("--n-channels", type=int)
@click.option("--n-times", type=int)
@click.option("--grid-size", type=int, help="Side of the square location grid.")
@click.option("--dense-format/--long-format", default=None)
@click.option("--out", type=click.Path(file_okay=False))
def cmd_synth(config_path, preset, seed, n_scenarios, n_channels, n_times, grid_size, dense_format, out):
    """Generate a synthetic dataset."""
    cfg = resolve_config("synth", config_path, dict(
        preset=preset, seed=seed, n_scenarios=n_scenarios, n_channels=n_channels,
        n_times=n_times, grid_size=grid_size, dense_format=dense_format, out=out))
    out, t0 = _start("synth", cfg)
    over = dict(cfg["overrides"])
    for key in ("n_scenarios", "n_channels", "n_times"):
        if cfg[key] is not None:
            over[key] = int(cfg[key])
    if cfg["grid_size"] is not None:
        over["grid_shape"] = (int(cfg["grid_size"]),) * 2
    seed = int(cfg["seed"])
    if cfg["preset"] == "coastal":
        over.pop("n_channels", None)
        if "grid_shape" in over:
            over["grid_shape"] = tuple(over["grid_shape"])
        cc = CoastalConfig(seed=seed, **over)
        inputs = coastal_inputs(cc)
        stack = coastal_maps(inputs, cc)
        resolved = cc.to_dict()
    else:
        make = preset_forecast if cfg["preset"] == "forecast" else preset_multioutput
        sc = make(seed, **{k: (tuple(v) if isinstance(v, list) else v) for k, v in over.items()})
        inputs = gen_inputs(sc)
        stack = gen_maps(inputs, sc.locations(), sc.map_hyperparameters(), seed=seed)
        resolved = sc.to_dict()
    fio.write_dataset(out, inputs, stack.locations, stack.values, dense=bool(cfg["dense_format"]))
    fio.write_json(out / "generator.json", resolved)
    _finish(out, "synth", t0, {}, seed)
    click.echo(f"wrote {inputs.n_scenarios} scenarios x {stack.locations.shape[0]} locations to {out}")


@cli.command("fit")
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--data", type=click.Path(file_okay=False))
@click.option("--doe", type=click.Path(dir_okay=False), help="CSV whose first column lists location ids.")
@click.option("--path", type=click.Choice(["auto", "kron", "dense"]))
@click.option("--functional-kind", type=click.Choice([k.value for k in KernelKind]))
@click.option("--spatial-kind", type=click.Choice([k.value for k in KernelKind]))
@click.option("--inertia-target", type=float)
@click.option("--noise-variance", type=float)
@click.option("--max-evaluations", type=int)
@click.option("--restarts", type=int)
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(file_okay=False))
def cmd_fit(config_path, data, doe, path, functional_kind, spatial_kind, inertia_target,
            noise_variance, max_evaluations, restarts, seed, out):
    """Fit hyperparameters by maximum likelihood."""
    cfg = resolve_config("fit", config_path, {
        "data": data, "doe": doe, "path": path, "functional_kind": functional_kind,
        "spatial_kind": spatial_kind, "inertia_target": inertia_target,
        "noise_variance": noise_variance, "optimizer.max_evaluations": max_evaluations,
        "optimizer.restarts": restarts, "optimizer.seed": seed, "out": out})
    out, t0 = _start("fit", cfg)
    ds = fio.read_dataset(cfg["data"])
    loc_idx = _read_doe(cfg["doe"], ds)
    sub = ds.observations if loc_idx is None else ds.observations[:, loc_idx]
    mode = cfg["path"]
    if mode == "auto":
        mode = "kron" if np.all(np.isfinite(sub)) and cfg["noise_variance"] == 0 else "dense"
    if mode == "kron":
        training = fio.tensor_training(ds, loc_idx, cfg["inertia_target"])
    else:
        training = fio.dense_training(ds, loc_idx, cfg["inertia_target"], cfg["noise_variance"])
    init = default_hyperparameters(training, KernelKind.parse(cfg["functional_kind"]),
                                   KernelKind.parse(cfg["spatial_kind"]))
    model = fit_ml(training, init, _optimizer(cfg))
    ref = {"data": fio.relpath(cfg["data"], out), "files": ds.files(),
           "location_index": None if loc_idx is None else [int(i) for i in loc_idx]}
    fio.save_model(out / "model.json", model, ref)
    d = model.diagnostics
    fio.write_json(out / "fit_report.json", {
        "path": model.path,
        "log_likelihood": d.log_likelihood,
        "hyperparameters": model.hyperparameters.to_dict(),
        "n_observations": training.n_observations,
        "n_evaluations": d.n_evaluations,
        "converged": d.converged,
        "restarts": d.restarts,
        "p_vector": training.projected.p_vector,
    })
    _finish(out, "fit", t0, _input_hashes(cfg["data"], cfg["doe"]), cfg["optimizer"]["seed"])
    click.echo(f"log-likelihood {d.log_likelihood:.6f} ({model.path} path)")


@cli.command("predict")
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--model", type=click.Path(dir_okay=False))
@click.option("--inputs", type=click.Path(file_okay=False),
              help="Dataset directory holding the query scenarios (default: training data).")
@click.option("--scenario", "scenarios", multiple=True, help="Scenario id to predict (repeatable).")
@click.option("--locations", type=click.Path(dir_okay=False))
@click.option("--clamp/--no-clamp", default=None)
@click.option("--out", type=click.Path(file_okay=False))
def cmd_predict(config_path, model, inputs, scenarios, locations, clamp, out):
    """Forecast whole maps for query scenarios."""
    cfg = resolve_config("predict", config_path, dict(
        model=model, inputs=inputs, scenarios=list(scenarios) or None, locations=locations,
        clamp=clamp, out=out))
    out, t0 = _start("predict", cfg)
    fitted = fio.load_model(cfg["model"])
    doc = fio.read_json(cfg["model"])
    data_root = Path(cfg["inputs"]) if cfg["inputs"] else (Path(cfg["model"]).parent / doc["training"]["data"])
    desc = fio.read_json(data_root / "dataset.json")
    query, sids = fio.read_inputs(data_root, desc["channels"], desc["inputs_dir"])
    if cfg["locations"]:
        lids, loc = fio.read_locations(cfg["locations"])
    else:
        all_ids, all_loc = fio.read_locations(data_root / desc["locations"])
        idx = doc["training"].get("location_index")
        idx = range(len(all_ids)) if idx is None else idx
        lids, loc = [all_ids[i] for i in idx], all_loc[list(idx)]
    wanted = cfg["scenarios"] or sids
    pos = {s: i for i, s in enumerate(sids)}
    rows = []
    for s in wanted:
        if s not in pos:
            raise DataError(f"scenario {s!r} not found in {data_root}")
        pred = predict(fitted, query.subset([pos[s]]), loc, clamp=bool(cfg["clamp"]))
        for j, lid in enumerate(lids):
            rows.append([s, lid, float(loc[j, 0]), float(loc[j, 1]), float(pred.mean[j]),
                         float(pred.sd[j]), int(pred.clamped[j])])
    fio.write_csv(out / "predictions.csv",
                  ["scenario_id", "location_id", "x1", "x2", "mean", "sd", "clamped"], rows)
    _finish(out, "predict", t0, _input_hashes(cfg["model"], cfg["inputs"], cfg["locations"]))
    click.echo(f"wrote {len(rows)} predictions")


@cli.command("loo")
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--data", type=click.Path(file_okay=False))
@click.option("--doe", type=click.Path(dir_okay=False))
@click.option("--reuse-hyperparameters/--refit", default=None)
@click.option("--clamp/--no-clamp", default=None)
@click.option("--workers", type=int)
@click.option("--max-evaluations", type=int)
@click.option("--restarts", type=int)
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(file_okay=False))
def cmd_loo(config_path, data, doe, reuse_hyperparameters, clamp, workers, max_evaluations,
            restarts, seed, out):
    """Leave-one-scenario-out cross-validation."""
    cfg = resolve_config("loo", config_path, {
        "data": data, "doe": doe, "reuse_hyperparameters": reuse_hyperparameters, "clamp": clamp,
        "workers": workers, "optimizer.max_evaluations": max_evaluations,
        "optimizer.restarts": restarts, "optimizer.seed": seed, "out": out})
    out, t0 = _start("loo", cfg)
    ds = fio.read_dataset(cfg["data"])
    loc_idx = _read_doe(cfg["doe"], ds)
    training = fio.tensor_training(ds, loc_idx, cfg["inertia_target"])
    pv = cfg["pooled_variance"]
    if pv is None:
        pv = pooled_variance(ds.observations) if ds.complete else pooled_variance(training.observations)
    lc = LooConfig(reuse_hyperparameters=bool(cfg["reuse_hyperparameters"]), clamp=bool(cfg["clamp"]),
                   c_levels=tuple(float(c) for c in cfg["c_levels"]), optimizer=_optimizer(cfg),
                   functional_kind=KernelKind.parse(cfg["functional_kind"]),
                   spatial_kind=KernelKind.parse(cfg["spatial_kind"]),
                   pooled_variance=pv, workers=int(cfg["workers"]))
    res = loo(training, lc)
    levels = lc.c_levels
    fold_rows, pred_rows = [], []
    lids = ds.location_ids if loc_idx is None else [ds.location_ids[i] for i in loc_idx]
    for f in res.folds:
        sid = ds.scenario_ids[f.index]
        if f.metrics is None:
            fold_rows.append([f.index, sid, "", "", ""] + [""] * len(levels) + [f.error])
            continue
        m = f.metrics
        fold_rows.append([f.index, sid, m.rmse, "" if m.q2 is None else m.q2,
                          "" if m.q2_pooled is None else m.q2_pooled]
                         + [m.ca[c] for c in levels] + [""])
        for j, lid in enumerate(lids):
            pred_rows.append([sid, lid, float(training.observations[f.index, j]),
                              float(f.prediction.mean[j]), float(f.prediction.sd[j]),
                              int(f.prediction.clamped[j])])
    fio.write_csv(out / "loo_folds.csv", ["fold", "scenario_id", "rmse", "q2", "q2_pooled"]
                  + [f"ca_{c:g}" for c in levels] + ["error"], fold_rows)
    fio.write_csv(out / "loo_predictions.csv",
                  ["scenario_id", "location_id", "truth", "mean", "sd", "clamped"], pred_rows)
    fio.write_json(out / "loo_summary.json", res.summary())
    _finish(out, "loo", t0, _input_hashes(cfg["data"], cfg["doe"]), cfg["optimizer"]["seed"])
    s = res.summary()
    click.echo(f"median Q2 {s['median_q2']:.4f}, median pooled Q2 {s['median_q2_pooled']:.4f}")


@cli.command("doe")
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--data", type=click.Path(file_okay=False))
@click.option("--kappa1", type=int)
@click.option("--kappa2", type=int)
@click.option("--efp-split", type=float)
@click.option("--mandatory", multiple=True, help="Location id that must be selected (repeatable).")
@click.option("--coastal-points", is_flag=True, default=False,
              help="Add the locations nearest the built-in coastal points of interest as mandatory.")
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(file_okay=False))
def cmd_doe(config_path, data, kappa1, kappa2, efp_split, mandatory, coastal_points, seed, out):
    """EFP-stratified spatial design from a stack of maps."""
    cfg = resolve_config("doe", config_path, dict(
        data=data, kappa1=kappa1, kappa2=kappa2, efp_split=efp_split,
        mandatory=list(mandatory) or None, seed=seed, out=out))
    out, t0 = _start("doe", cfg)
    ds = fio.read_dataset(cfg["data"])
    if not ds.complete:
        raise DataError("EFP needs every map observed at every location")
    stack = GridMapStack(ds.locations, ds.observations)
    efp = compute_efp(stack, float(cfg["wet_threshold"]))
    pos = {l: i for i, l in enumerate(ds.location_ids)}
    mand = []
    for lid in cfg["mandatory"]:
        if str(lid) not in pos:
            raise DataError(f"mandatory location {lid!r} not in {cfg['data']}")
        mand.append(pos[str(lid)])
    if coastal_points:
        mand += [int(i) for i in nearest_indices(ds.locations, COASTAL_POINTS_OF_INTEREST)]
    res = select_doe(ds.locations, efp, int(cfg["kappa1"]), int(cfg["kappa2"]),
                     float(cfg["efp_split"]), mand, int(cfg["seed"]))
    fio.write_csv(out / "efp.csv", ["location_id", "x1", "x2", "efp"],
                  ([lid, float(ds.locations[i, 0]), float(ds.locations[i, 1]), float(efp[i])]
                   for i, lid in enumerate(ds.location_ids)))
    fio.write_csv(out / "doe.csv", ["location_id", "x1", "x2", "efp", "label"],
                  ([ds.location_ids[i], float(ds.locations[i, 0]), float(ds.locations[i, 1]),
                    float(efp[i]), int(lab)] for i, lab in zip(res.indices, res.labels)))
    _finish(out, "doe", t0, _input_hashes(cfg["data"]), cfg["seed"])
    click.echo(f"selected {res.size} locations")


@cli.command("metrics")
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--truth", type=click.Path(dir_okay=False), help="Observation CSV (long or dense).")
@click.option("--predictions", type=click.Path(dir_okay=False), help="CSV with scenario_id, location_id, mean[, sd].")
@click.option("--pooled-variance", type=float)
@click.option("--out", type=click.Path(file_okay=False))
def cmd_metrics(config_path, truth, predictions, pooled_variance, out):
    """Recompute indicators from truth and prediction files."""
    cfg = resolve_config("metrics", config_path, dict(
        truth=truth, predictions=predictions, pooled_variance=pooled_variance, out=out))
    out, t0 = _start("metrics", cfg)
    t_s, t_l, t_v = fio.read_observations(cfg["truth"])
    truth_map = {(s, l): v for s, l, v in zip(t_s, t_l, t_v)}
    header, rows = fio._read_rows(cfg["predictions"])
    for col in ("scenario_id", "location_id", "mean"):
        if col not in header:
            raise DataError(f"{cfg['predictions']}: line 1: missing column {col!r}")
    ci = {c: header.index(c) for c in header}
    has_sd = "sd" in ci
    y, mu, sd = [], [], []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{cfg['predictions']}: line {i}: expected {len(header)} fields, found {len(row)}")
        key = (row[ci["scenario_id"]], row[ci["location_id"]])
        if key not in truth_map:
            raise DataError(f"{cfg['predictions']}: line {i}: no truth value for {key}")
        y.append(truth_map[key])
        mu.append(fio._float(cfg["predictions"], i, row[ci["mean"]], "mean"))
        if has_sd:
            sd.append(fio._float(cfg["predictions"], i, row[ci["sd"]], "sd"))
    y, mu = np.asarray(y), np.asarray(mu)
    rep = metric_report(y, mu, np.asarray(sd) if has_sd else None,
                        tuple(float(c) for c in cfg["c_levels"]), cfg["pooled_variance"])
    result = rep.to_dict()
    if np.all(y >= 0):
        result["category_proportions"] = {
            "truth": category_proportions(y).tolist(),
            "predicted": category_proportions(np.maximum(mu, 0.0)).tolist(),
        }
    fio.write_json(out / "metrics.json", result)
    _finish(out, "metrics", t0, _input_hashes(cfg["truth"], cfg["predictions"]))
    click.echo(json.dumps(result, sort_keys=True))


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    try:
        cli.main(args=argv, prog_name="spatfgp", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
