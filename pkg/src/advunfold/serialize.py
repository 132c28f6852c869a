"""Persistence: model/dataset JSON files and CSV result tables.

Floats in JSON round-trip losslessly (shortest repr); CSV values are
written with 17 significant digits.  All writes go through a temp file and
an atomic rename, so failures never leave partial outputs behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .data import Dataset
from .solvers import LayerParams, UnfoldedModel

__all__ = [
    "FileFormatError",
    "MODEL_SCHEMA_VERSION",
    "DATASET_SCHEMA_VERSION",
    "atomic_write_bytes",
    "atomic_write_text",
    "format_float",
    "load_dataset",
    "load_model",
    "save_dataset",
    "save_model",
    "write_csv",
    "write_json",
]

MODEL_SCHEMA_VERSION = 1
DATASET_SCHEMA_VERSION = 1


class FileFormatError(ValueError):
    """A persisted file failed validation; the message names the field."""


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_float(v: float) -> str:
    return f"{float(v):.17g}"


def write_csv(path, header: list[str], rows) -> None:
    """Write a CSV with the fixed header; floats at 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
        )
    atomic_write_text(path, buf.getvalue())


def write_json(path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

def save_model(model: UnfoldedModel, path) -> None:
    payload = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": model.kind,
        "T": model.T,
        "layers": [
            {
                "mu": layer.mu,
                "prox_tau": layer.prox_tau,
                "M": layer.M.tolist(),
                "B": layer.B.tolist(),
            }
            for layer in model.layers
        ],
        "s0": model.s0.tolist(),
    }
    if model.lam is not None:
        payload["lambda"] = model.lam
    write_json(path, payload)


def load_model(path) -> UnfoldedModel:
    raw = _load_json(path)
    _require(raw, "schema_version", path)
    if raw["schema_version"] != MODEL_SCHEMA_VERSION:
        raise FileFormatError(
            f"{path}: unsupported model schema_version {raw['schema_version']!r}"
        )
    for key in ("kind", "T", "layers", "s0"):
        _require(raw, key, path)
    kind = raw["kind"]
    if kind not in ("pgd", "admm"):
        raise FileFormatError(f"{path}: unknown model kind {kind!r}")
    layers_raw = raw["layers"]
    if not isinstance(layers_raw, list) or len(layers_raw) != raw["T"] or not layers_raw:
        raise FileFormatError(
            f"{path}: field 'layers' must hold T={raw['T']} layer objects"
        )
    layers = []
    for i, lr in enumerate(layers_raw):
        for key in ("mu", "prox_tau", "M", "B"):
            if key not in lr:
                raise FileFormatError(f"{path}: layer {i} is missing field {key!r}")
        try:
            layers.append(
                LayerParams(
                    mu=float(lr["mu"]),
                    prox_tau=float(lr["prox_tau"]),
                    M=np.asarray(lr["M"], dtype=np.float64),
                    B=np.asarray(lr["B"], dtype=np.float64),
                )
            )
        except (TypeError, ValueError) as exc:
            raise FileFormatError(f"{path}: layer {i} is malformed: {exc}") from exc
    try:
        return UnfoldedModel(
            kind=kind,
            layers=layers,
            s0=np.asarray(raw["s0"], dtype=np.float64),
            lam=float(raw["lambda"]) if "lambda" in raw else None,
        )
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

def save_dataset(dataset: Dataset, path) -> None:
    payload = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "seed": dataset.seed,
        "n": dataset.n,
        "m": dataset.m,
        "k": dataset.k,
        "noise_std": dataset.noise_std,
        "signal_std": dataset.signal_std,
        "A": dataset.a.tolist(),
        "pairs": [
            {"x": dataset.xs[i].tolist(), "s": dataset.ss[i].tolist()}
            for i in range(dataset.count)
        ],
    }
    write_json(path, payload)


def load_dataset(path) -> Dataset:
    raw = _load_json(path)
    _require(raw, "schema_version", path)
    if raw["schema_version"] != DATASET_SCHEMA_VERSION:
        raise FileFormatError(
            f"{path}: unsupported dataset schema_version {raw['schema_version']!r}"
        )
    for key in ("seed", "n", "m", "k", "noise_std", "signal_std", "A", "pairs"):
        _require(raw, key, path)
    n, m = int(raw["n"]), int(raw["m"])
    a = np.asarray(raw["A"], dtype=np.float64)
    if a.shape != (n, m):
        raise FileFormatError(f"{path}: field 'A' has shape {a.shape}, expected {(n, m)}")
    pairs = raw["pairs"]
    if not isinstance(pairs, list) or not pairs:
        raise FileFormatError(f"{path}: field 'pairs' must be a non-empty list")
    xs = np.empty((len(pairs), n))
    ss = np.empty((len(pairs), m))
    for i, pair in enumerate(pairs):
        for key in ("x", "s"):
            if key not in pair:
                raise FileFormatError(f"{path}: pair {i} is missing field {key!r}")
        x = np.asarray(pair["x"], dtype=np.float64)
        s = np.asarray(pair["s"], dtype=np.float64)
        if x.shape != (n,):
            raise FileFormatError(f"{path}: pair {i} field 'x' has shape {x.shape}, expected {(n,)}")
        if s.shape != (m,):
            raise FileFormatError(f"{path}: pair {i} field 's' has shape {s.shape}, expected {(m,)}")
        xs[i] = x
        ss[i] = s
    return Dataset(
        a=a,
        xs=xs,
        ss=ss,
        seed=int(raw["seed"]),
        k=int(raw["k"]),
        noise_std=float(raw["noise_std"]),
        signal_std=float(raw["signal_std"]),
    )


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FileFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise FileFormatError(f"{path}: top-level JSON value must be an object")
    return raw


def _require(raw: dict, key: str, path) -> None:
    if key not in raw:
        kind = "schema-version" if key == "schema_version" else "field"
        raise FileFormatError(f"{path}: missing {kind} {key!r}")
