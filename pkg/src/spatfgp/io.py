"""Plain-text file formats: CSV data files, JSON configs, manifests and model documents.

Dataset directory layout::

    dataset.json            channel order, file names, observation format
    inputs/<channel>.csv    scenario_id, then one column per time stamp
    locations.csv           location_id, x1, x2
    observations.csv        long (scenario_id, location_id, value) or dense
                            (scenario_id, then one column per location_id)

Every float is written with 17 significant digits so values round-trip
exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalConsistencyError, ShapeError
from .funspace import PcaBasis, ScenarioInputs, fit_projection, project_inputs
from .gp import (DenseTrainingSet, FitDiagnostics, FittedModel, Hyperparameters,
                 TensorTrainingSet)

FLOAT_FMT = ".17g"
MODEL_FORMAT = "spatfgp-model"
MODEL_VERSION = 1
LIKELIHOOD_CHECK_RTOL = 1e-8


def fmt(x) -> str:
    return format(float(x), FLOAT_FMT)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _read_rows(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows[0], rows[1:]


def _float(path, line, text, what="value"):
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}: line {line}: cannot parse {what} {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{path}: line {line}: non-finite {what}")
    return v


def _check_width(path, line, row, width):
    if len(row) != width:
        raise DataError(f"{path}: line {line}: expected {width} fields, found {len(row)}")


# ---------------------------------------------------------------------------
# individual files


def write_channel(path, scenario_ids, grid, curves) -> None:
    write_csv(path, ["scenario_id"] + [fmt(t) for t in grid],
              ([sid] + [float(v) for v in row] for sid, row in zip(scenario_ids, curves)))


def read_channel(path):
    """Returns ``(scenario_ids, grid, curves)`` with curves R x tau."""
    header, rows = _read_rows(path)
    if len(header) < 3 or header[0] != "scenario_id":
        raise DataError(f"{path}: line 1: header must be scenario_id followed by time stamps")
    grid = np.array([_float(path, 1, t, "time stamp") for t in header[1:]])
    ids, curves = [], []
    for i, row in enumerate(rows, start=2):
        _check_width(path, i, row, len(header))
        ids.append(row[0])
        curves.append([_float(path, i, v) for v in row[1:]])
    if not ids:
        raise DataError(f"{path}: no scenario rows")
    return ids, grid, np.array(curves)


def write_locations(path, locations, ids=None) -> None:
    loc = np.asarray(locations, dtype=float)
    ids = range(loc.shape[0]) if ids is None else ids
    write_csv(path, ["location_id", "x1", "x2"], ([i, float(a), float(b)] for i, (a, b) in zip(ids, loc)))


def read_locations(path):
    header, rows = _read_rows(path)
    if header != ["location_id", "x1", "x2"]:
        raise DataError(f"{path}: line 1: header must be location_id,x1,x2")
    ids, xy = [], []
    for i, row in enumerate(rows, start=2):
        _check_width(path, i, row, 3)
        ids.append(row[0])
        xy.append([_float(path, i, row[1], "x1"), _float(path, i, row[2], "x2")])
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate location ids")
    return ids, np.array(xy).reshape(-1, 2)


def write_observations(path, scenario_ids, location_ids, values, dense: bool = False) -> None:
    Y = np.asarray(values, dtype=float)
    if dense:
        if not np.all(np.isfinite(Y)):
            raise DataError("dense observation files cannot hold unobserved pairs; use the long format")
        write_csv(path, ["scenario_id"] + [str(l) for l in location_ids],
                  ([sid] + [float(v) for v in row] for sid, row in zip(scenario_ids, Y)))
    else:
        write_csv(path, ["scenario_id", "location_id", "value"],
                  ([sid, lid, float(Y[r, s])] for r, sid in enumerate(scenario_ids)
                   for s, lid in enumerate(location_ids) if np.isfinite(Y[r, s])))


def read_observations(path):
    """Returns ``(scenario_ids, location_ids, values)`` as long-form triples."""
    header, rows = _read_rows(path)
    sids, lids, vals = [], [], []
    if header == ["scenario_id", "location_id", "value"]:
        for i, row in enumerate(rows, start=2):
            _check_width(path, i, row, 3)
            sids.append(row[0])
            lids.append(row[1])
            vals.append(_float(path, i, row[2]))
    elif header and header[0] == "scenario_id" and len(header) > 1:
        cols = header[1:]
        for i, row in enumerate(rows, start=2):
            _check_width(path, i, row, len(header))
            for lid, v in zip(cols, row[1:]):
                sids.append(row[0])
                lids.append(lid)
                vals.append(_float(path, i, v))
    else:
        raise DataError(f"{path}: line 1: unrecognized observation header")
    return sids, lids, np.array(vals)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    inputs: ScenarioInputs
    scenario_ids: list
    location_ids: list
    locations: np.ndarray
    observations: np.ndarray          # R x S, NaN where a pair is not observed
    root: Path | None = None

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.observations)))

    def files(self) -> dict:
        """Relative path -> sha256 of every file the dataset was read from."""
        if self.root is None:
            return {}
        desc = read_json(self.root / "dataset.json")
        names = ["dataset.json", desc["locations"], desc["observations"]]
        names += [f"{desc['inputs_dir']}/{c}.csv" for c in desc["channels"]]
        return {n: sha256_file(self.root / n) for n in names}


def write_dataset(root, inputs: ScenarioInputs, locations, observations,
                  scenario_ids=None, location_ids=None, dense: bool = False) -> dict:
    """Write a dataset directory; returns the file hashes."""
    root = Path(root)
    R = inputs.n_scenarios
    loc = np.asarray(locations, dtype=float)
    sids = [str(i) for i in range(R)] if scenario_ids is None else [str(s) for s in scenario_ids]
    lids = [str(i) for i in range(loc.shape[0])] if location_ids is None else [str(l) for l in location_ids]
    Y = np.asarray(observations, dtype=float)
    if Y.shape != (R, loc.shape[0]):
        raise ShapeError(f"observations shape {Y.shape} does not match ({R}, {loc.shape[0]})")
    for i, ch in enumerate(inputs.channels):
        write_channel(root / "inputs" / f"{ch}.csv", sids, inputs.grid, inputs.curves[:, i])
    write_locations(root / "locations.csv", loc, lids)
    write_observations(root / "observations.csv", sids, lids, Y, dense=dense)
    write_json(root / "dataset.json", {
        "channels": list(inputs.channels),
        "inputs_dir": "inputs",
        "locations": "locations.csv",
        "observations": "observations.csv",
        "observation_format": "dense" if dense else "long",
    })
    return Dataset(inputs, sids, lids, loc, Y, root).files()


def read_inputs(root, channels, inputs_dir="inputs"):
    """Read one CSV per channel; returns ``(ScenarioInputs, scenario_ids)``."""
    root = Path(root)
    ids0 = grid0 = None
    curves = []
    for ch in channels:
        path = root / inputs_dir / f"{ch}.csv"
        ids, grid, c = read_channel(path)
        if ids0 is None:
            ids0, grid0 = ids, grid
        else:
            if ids != ids0:
                raise DataError(f"{path}: scenario ids differ from channel {channels[0]}")
            if grid.shape != grid0.shape or not np.allclose(grid, grid0, rtol=0, atol=1e-12):
                raise DataError(f"{path}: time grid differs from channel {channels[0]}")
        curves.append(c)
    return ScenarioInputs(tuple(channels), grid0, np.stack(curves, axis=1)), list(ids0)


def read_dataset(root) -> Dataset:
    root = Path(root)
    desc = read_json(root / "dataset.json")
    for key in ("channels", "inputs_dir", "locations", "observations"):
        if key not in desc:
            raise DataError(f"{root / 'dataset.json'}: missing key {key!r}")
    inputs, sids = read_inputs(root, desc["channels"], desc["inputs_dir"])
    lids, loc = read_locations(root / desc["locations"])
    obs_path = root / desc["observations"]
    o_s, o_l, vals = read_observations(obs_path)
    s_pos = {s: i for i, s in enumerate(sids)}
    l_pos = {l: i for i, l in enumerate(lids)}
    Y = np.full((len(sids), len(lids)), np.nan)
    for k, (s, l, v) in enumerate(zip(o_s, o_l, vals)):
        if s not in s_pos:
            raise DataError(f"{obs_path}: unknown scenario id {s!r} (entry {k + 1})")
        if l not in l_pos:
            raise DataError(f"{obs_path}: unknown location id {l!r} (entry {k + 1})")
        Y[s_pos[s], l_pos[l]] = v
    return Dataset(inputs, sids, lids, loc, Y, root)


def tensor_training(ds: Dataset, location_index=None, inertia_target: float = 0.999,
                    bases=None) -> TensorTrainingSet:
    idx = np.arange(len(ds.location_ids)) if location_index is None else np.asarray(location_index, dtype=int)
    Y = ds.observations[:, idx]
    if not np.all(np.isfinite(Y)):
        raise DataError("tensor path needs every scenario observed at every selected location")
    return TensorTrainingSet.build(ds.inputs, ds.locations[idx], Y, inertia_target, bases)


def dense_training(ds: Dataset, location_index=None, inertia_target: float = 0.999,
                   noise_variance: float = 0.0, bases=None) -> DenseTrainingSet:
    idx = np.arange(len(ds.location_ids)) if location_index is None else np.asarray(location_index, dtype=int)
    Y = ds.observations[:, idx]
    r, s = np.nonzero(np.isfinite(Y))
    proj = fit_projection(ds.inputs, inertia_target) if bases is None else project_inputs(bases, ds.inputs)
    return DenseTrainingSet(proj, r, ds.locations[idx][s], Y[r, s], noise_variance, ds.inputs)


# ---------------------------------------------------------------------------
# model documents


def model_document(model: FittedModel, training_ref: dict) -> dict:
    """JSON-ready description of a fitted model; factors are not stored."""
    tr = model.training
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "path": model.path,
        "hyperparameters": model.hyperparameters.to_dict(),
        "bases": [b.to_dict() for b in tr.projected.bases],
        "training": training_ref,
        "diagnostics": model.diagnostics.to_dict(),
        "log_likelihood": model.log_likelihood(),
    }
    if model.path == "dense":
        doc["noise_variance"] = tr.noise_variance
    return doc


def save_model(path, model: FittedModel, training_ref: dict) -> None:
    write_json(path, model_document(model, training_ref))


def load_model(path, data_root=None) -> FittedModel:
    """Rebuild a model from its document and the referenced training files.

    File hashes are checked, the factors are recomputed, and the likelihood
    is compared with the stored value.
    """
    path = Path(path)
    doc = read_json(path)
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a model document")
    ref = doc["training"]
    root = Path(data_root) if data_root is not None else (path.parent / ref["data"]).resolve()
    if not root.exists():
        root = Path(ref["data"])
    for name, digest in ref.get("files", {}).items():
        actual = sha256_file(root / name)
        if actual != digest:
            raise DataError(f"{root / name}: content hash differs from the model's training reference")
    ds = read_dataset(root)
    bases = [PcaBasis.from_dict(b) for b in doc["bases"]]
    loc_idx = ref.get("location_index")
    if doc["path"] == "kron":
        training = tensor_training(ds, loc_idx, bases=bases)
    else:
        training = dense_training(ds, loc_idx, noise_variance=doc.get("noise_variance", 0.0), bases=bases)
    hyp = Hyperparameters.from_dict(doc["hyperparameters"])
    d = doc["diagnostics"]
    diag = FitDiagnostics(d["log_likelihood"], d["n_evaluations"], d["converged"], d["restarts"])
    model = FittedModel.condition(hyp, training, diag)
    ll = model.log_likelihood()
    stored = doc["log_likelihood"]
    if not abs(ll - stored) <= LIKELIHOOD_CHECK_RTOL * max(1.0, abs(stored)):
        raise NumericalConsistencyError(
            f"{path}: recomputed log-likelihood {ll!r} differs from stored {stored!r}")
    return model


def relpath(target, start) -> str:
    return os.path.relpath(Path(target).resolve(), Path(start).resolve())


__all__ = [
    "Dataset", "dense_training", "load_model", "model_document",
    "read_channel", "read_dataset", "read_inputs", "read_json", "read_locations",
    "read_observations", "save_model", "sha256_file", "tensor_training", "write_channel",
    "write_csv", "write_dataset", "write_json", "write_locations", "write_observations",
]
