"""On-disk formats: datasets, model checkpoints, CSV reports.

Every binary artifact is a pair `<stem>.json` + `<stem>.f64`: a manifest
describing shapes/metadata and a flat little-endian float64 payload. The
manifest JSON is emitted with sorted keys and no timestamps, so identical
inputs give byte-identical files (the determinism contract).

CSV files have a one-line header; floats carry 17 significant digits, which
round-trips IEEE doubles exactly.
"""

import json
import os

import numpy as np

from .errors import ConfigError, FormatError
from .models import NodalModel, PcfmlModel
from .nn import Mlp
from .datagen import Grid, TrainingDataset, TrajectorySet

FORMAT_VERSION = 1


def _write_pair(stem, manifest, payload):
    blob = json.dumps(manifest, sort_keys=True, indent=1)
    with open(stem + ".json", "w") as fh:
        fh.write(blob + "\n")
    with open(stem + ".f64", "wb") as fh:
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def _read_pair(stem):
    try:
        with open(stem + ".json") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest {stem}.json: {exc}") from exc
    if not isinstance(manifest, dict):
        raise FormatError(f"manifest {stem}.json is not an object")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"unknown format version {version!r} in {stem}.json "
            f"(expected {FORMAT_VERSION})"
        )
    with open(stem + ".f64", "rb") as fh:
        raw = fh.read()
    if len(raw) % 8:
        raise FormatError(f"{stem}.f64 length {len(raw)} is not a multiple of 8")
    return manifest, np.frombuffer(raw, dtype="<f8")


def _grid_to_json(grid):
    return {"dim": grid.dim, "points": grid.points.tolist()}


def _grid_from_json(obj):
    return Grid(int(obj["dim"]), np.asarray(obj["points"], dtype=np.float64))


def write_dataset(stem, d, seed=None):
    """Write a TrajectorySet or TrainingDataset as <stem>.json + <stem>.f64."""
    if isinstance(d, TrajectorySet):
        manifest = {
            "format_version": FORMAT_VERSION,
            "kind": "trajectories",
            "example_id": d.example_id,
            "n_traj": d.n_traj,
            "n_full": d.n_full,
            "n_time": d.n_steps + 1,
            "dt": d.dt,
            "sigma": 0.0 if d.clean else None,
            "clean": bool(d.clean),
            "grid": _grid_to_json(d.grid),
            "seed": seed,
        }
        payload = d.data
    elif isinstance(d, TrainingDataset):
        manifest = {
            "format_version": FORMAT_VERSION,
            "kind": "chunks",
            "example_id": d.example_id,
            "n_traj": d.n_traj,
            "n_full": d.n_full,
            "n_time": d.n_mem + d.n_rec,
            "n_mem": d.n_mem,
            "n_rec": d.n_rec,
            "dt": d.dt,
            "sigma": None if np.isnan(d.sigma) else float(d.sigma),
            "grid": _grid_to_json(d.grid),
            "seed": seed,
        }
        payload = d.chunks
    else:
        raise ConfigError(f"cannot serialize {type(d).__name__}")
    _write_pair(stem, manifest, payload)


def read_dataset(stem):
    manifest, flat = _read_pair(stem)
    try:
        kind = manifest["kind"]
        n_traj = int(manifest["n_traj"])
        n_full = int(manifest["n_full"])
        n_time = int(manifest["n_time"])
        dt = float(manifest["dt"])
        grid = _grid_from_json(manifest["grid"])
        example_id = manifest.get("example_id", "")
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"manifest {stem}.json is missing fields: {exc}") from exc
    expected = n_traj * n_full * n_time
    if flat.size != expected:
        raise FormatError(
            f"{stem}.f64 holds {flat.size} values, manifest promises {expected}"
        )
    data = flat.reshape(n_traj, n_full, n_time).copy()
    if kind == "trajectories":
        return TrajectorySet(grid, dt, n_time - 1, data,
                             clean=bool(manifest.get("clean", True)),
                             example_id=example_id)
    if kind == "chunks":
        sigma = manifest.get("sigma")
        return TrainingDataset(data, int(manifest["n_mem"]),
                               int(manifest["n_rec"]),
                               np.nan if sigma is None else float(sigma),
                               grid, dt=dt, example_id=example_id)
    raise FormatError(f"unknown dataset kind {kind!r} in {stem}.json")


# ------------------------------------------------------------ checkpoints


def _mlp_block_list(prefix, mlp):
    blocks = []
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        blocks.append((f"{prefix}w{i}", w))
        blocks.append((f"{prefix}b{i}", b))
    return blocks


def save_model(stem, model, extra=None):
    """Checkpoint: manifest + flat blocks, per layer weights before biases.

    Reduced models store p_in and p_out ahead of the MLP layers (for the
    constrained mode p_out is the tied transpose and is stored anyway so
    the payload layout is mode-independent).
    """
    if isinstance(model, PcfmlModel):
        blocks = [("p_in", model.p_in), ("p_out", np.asarray(model.p_out))]
        blocks += _mlp_block_list("m_", model.mlp)
        manifest = {
            "format_version": FORMAT_VERSION,
            "model": "pcfml",
            "mode": model.mode,
            "n_full": model.n_full,
            "n_red": model.n_red,
            "n_mem": model.n_mem,
            "project_skip": model.project_skip,
            "layer_sizes": list(model.mlp.layer_sizes),
        }
    elif isinstance(model, NodalModel):
        blocks = []
        for c, ch in enumerate(model.channels):
            blocks += _mlp_block_list(f"ch{c}_", ch)
        blocks += _mlp_block_list("asm_", model.assembly)
        manifest = {
            "format_version": FORMAT_VERSION,
            "model": "nodal",
            "n_full": model.n_full,
            "n_mem": model.n_mem,
            "layer_sizes": list(model.channels[0].layer_sizes),
        }
    else:
        raise ConfigError(f"cannot checkpoint {type(model).__name__}")
    manifest["blocks"] = [{"name": n, "shape": list(a.shape)} for n, a in blocks]
    if extra:
        manifest["extra"] = extra
    payload = np.concatenate([np.asarray(a).ravel() for _, a in blocks])
    _write_pair(stem, manifest, payload)


def _split_blocks(manifest, flat, stem):
    out = {}
    offset = 0
    for spec in manifest.get("blocks", []):
        shape = tuple(int(s) for s in spec["shape"])
        size = int(np.prod(shape)) if shape else 1
        if offset + size > flat.size:
            raise FormatError(f"{stem}.f64 shorter than declared blocks")
        out[spec["name"]] = flat[offset:offset + size].reshape(shape).copy()
        offset += size
    if offset != flat.size:
        raise FormatError(
            f"{stem}.f64 holds {flat.size} values, blocks declare {offset}"
        )
    return out


def _mlp_from_blocks(blocks, prefix, sizes):
    weights = []
    biases = []
    for i in range(len(sizes) - 1):
        try:
            weights.append(blocks[f"{prefix}w{i}"])
            biases.append(blocks[f"{prefix}b{i}"])
        except KeyError as exc:
            raise FormatError(f"checkpoint missing block {exc}") from None
    return Mlp(list(sizes), weights, biases)


def load_model(stem):
    manifest, flat = _read_pair(stem)
    blocks = _split_blocks(manifest, flat, stem)
    kind = manifest.get("model")
    sizes = [int(s) for s in manifest["layer_sizes"]]
    if kind == "pcfml":
        mode = manifest["mode"]
        p_in = blocks["p_in"]
        p_out = blocks["p_out"]
        if mode == "constrained":
            if not np.array_equal(p_out, p_in.T):
                raise FormatError(
                    f"{stem}: constrained checkpoint has p_out != p_in.T"
                )
            p_out = None  # rebuilt as a shared-storage view
        return PcfmlModel(mode, p_in, p_out, _mlp_from_blocks(blocks, "m_", sizes),
                          int(manifest["n_mem"]),
                          project_skip=bool(manifest["project_skip"]))
    if kind == "nodal":
        channels = [_mlp_from_blocks(blocks, f"ch{c}_", sizes) for c in range(5)]
        assembly = _mlp_from_blocks(blocks, "asm_", [5, 5, 1])
        return NodalModel(channels, assembly, int(manifest["n_mem"]))
    raise FormatError(f"unknown model kind {kind!r} in {stem}.json")


# ------------------------------------------------------------------- CSV


def format_float(x):
    return f"{x:.17g}"


def write_csv(path, header, columns):
    """Write named columns (equal-length 1-d arrays) as a simple CSV."""
    columns = [np.asarray(c) for c in columns]
    n = len(columns[0]) if columns else 0
    for c in columns:
        if len(c) != n:
            raise ConfigError("CSV columns must have equal lengths")
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            cells = []
            for c in columns:
                v = c[i]
                if isinstance(v, (str, np.str_)):
                    cells.append(str(v))
                elif np.issubdtype(np.asarray(v).dtype, np.integer):
                    cells.append(str(int(v)))
                else:
                    cells.append(format_float(float(v)))
            fh.write(",".join(cells) + "\n")


def read_csv_columns(path):
    """Inverse of write_csv for numeric files: dict of float columns."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = {name: np.empty(len(rows)) for name in header}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise FormatError(f"{path}: row {i} has {len(row)} cells")
        for name, cell in zip(header, row):
            cols[name][i] = float(cell)
    return cols


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
