"""Feature-dump and model container formats.

A feature dump is a directory holding one NPY v1.0 tensor per conv layer
(n x filters x h x w, little-endian float32, C order), an int64 labels
tensor, and a JSON manifest describing them.  Optional per-file SHA-256
checksums in the manifest are verified on read.  Toy model weights reuse
the same container idea: one NPY per array plus a JSON manifest.
All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .entropy import FeatureMatrix
from .errors import ChecksumMismatch, HeaderMismatch, ManifestMissing, TruncatedTensor
from .ordering import LayerFeatures
from .toynet import ConvLayer, ToyModel

DUMP_MANIFEST = "manifest.json"
MODEL_MANIFEST = "model.json"
FORMAT_VERSION = 1


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_npy(path: Path, arr: np.ndarray) -> str:
    """Write a C-order little-endian NPY v1.0 file; returns its SHA-256."""
    import io as _io

    buf = _io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0))
    payload = buf.getvalue()
    atomic_write_bytes(Path(path), payload)
    return hashlib.sha256(payload).hexdigest()


def read_npy(path: Path, expect_shape=None, expect_dtype=None) -> np.ndarray:
    """Read and validate one NPY v1.0 tensor.

    Raises HeaderMismatch when version, dtype, order, or shape disagree
    with expectations, TruncatedTensor when the payload is short.
    """
    path = Path(path)
    with open(path, "rb") as f:
        try:
            version = np.lib.format.read_magic(f)
        except ValueError as e:
            raise HeaderMismatch(f"{path.name}: {e}") from e
        if version != (1, 0):
            raise HeaderMismatch(f"{path.name}: NPY version {version}, expected (1, 0)")
        shape, fortran, dtype = np.lib.format.read_array_header_1_0(f)
        if fortran:
            raise HeaderMismatch(f"{path.name}: Fortran order not supported")
        if expect_dtype is not None and dtype != np.dtype(expect_dtype):
            raise HeaderMismatch(f"{path.name}: dtype {dtype}, expected {expect_dtype}")
        if expect_shape is not None and tuple(shape) != tuple(expect_shape):
            raise HeaderMismatch(f"{path.name}: shape {shape}, expected {tuple(expect_shape)}")
        payload = f.read()
    need = int(np.prod(shape)) * dtype.itemsize
    if len(payload) < need:
        raise TruncatedTensor(f"{path.name}: {len(payload)} bytes, need {need}")
    return np.frombuffer(payload[:need], dtype=dtype).reshape(shape).copy()


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_feature_dump(
    out_dir: Path,
    layer_tensors: list[np.ndarray],
    labels: np.ndarray,
    source: str = "toy",
) -> Path:
    """Write per-layer activation tensors (n, filters, h, w) and labels."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = len(labels)
    layers = []
    for i, tensor in enumerate(layer_tensors):
        if tensor.ndim != 4 or tensor.shape[0] != n:
            raise ValueError(f"layer {i + 1} tensor must be (n, filters, h, w) with n={n}")
        name = f"layer{i + 1:02d}.npy"
        digest = write_npy(out_dir / name, tensor.astype(np.float32))
        layers.append(
            {
                "layer_id": i + 1,
                "num_filters": int(tensor.shape[1]),
                "height": int(tensor.shape[2]),
                "width": int(tensor.shape[3]),
                "file": name,
                "sha256": digest,
            }
        )
    labels_digest = write_npy(out_dir / "labels.npy", np.asarray(labels, dtype=np.int64))
    manifest = {
        "format_version": FORMAT_VERSION,
        "source": source,
        "batch_size": int(n),
        "num_layers": len(layer_tensors),
        "labels_file": "labels.npy",
        "labels_sha256": labels_digest,
        "layers": layers,
    }
    atomic_write_text(out_dir / DUMP_MANIFEST, json.dumps(manifest, indent=2, sort_keys=True))
    return out_dir


def read_feature_dump(dump_dir: Path) -> tuple[list[LayerFeatures], np.ndarray]:
    """Load a feature dump back into per-layer feature matrices and labels.

    Shapes are validated against the manifest and SHA-256 checksums are
    verified when the manifest carries them.
    """
    dump_dir = Path(dump_dir)
    manifest_path = dump_dir / DUMP_MANIFEST
    if not manifest_path.exists():
        raise ManifestMissing(f"no {DUMP_MANIFEST} in {dump_dir}")
    manifest = json.loads(manifest_path.read_text())
    n = int(manifest["batch_size"])
    if len(manifest["layers"]) != int(manifest["num_layers"]):
        raise HeaderMismatch("manifest num_layers disagrees with its layer list")

    layers = []
    for entry in manifest["layers"]:
        path = dump_dir / entry["file"]
        if not path.exists():
            raise ManifestMissing(f"tensor file {entry['file']} missing")
        if entry.get("sha256") and _sha256_file(path) != entry["sha256"]:
            raise ChecksumMismatch(f"{entry['file']}: SHA-256 does not match manifest")
        shape = (n, entry["num_filters"], entry["height"], entry["width"])
        tensor = read_npy(path, expect_shape=shape, expect_dtype="<f4")
        flat = tensor.astype(np.float64).reshape(n, entry["num_filters"], -1)
        features = tuple(
            FeatureMatrix(flat[:, f, :], layer_id=entry["layer_id"], feature_index=f)
            for f in range(entry["num_filters"])
        )
        layers.append(LayerFeatures(layer_id=entry["layer_id"], features=features))

    labels_path = dump_dir / manifest["labels_file"]
    if not labels_path.exists():
        raise ManifestMissing(f"labels file {manifest['labels_file']} missing")
    if manifest.get("labels_sha256") and _sha256_file(labels_path) != manifest["labels_sha256"]:
        raise ChecksumMismatch("labels file SHA-256 does not match manifest")
    labels = read_npy(labels_path, expect_shape=(n,), expect_dtype="<i8")
    return layers, labels


# --- model container ---------------------------------------------------------


def save_model(model: ToyModel, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    layer_specs = []
    for i, layer in enumerate(model.conv_layers):
        arrays[f"conv{i}_w"] = layer.w
        arrays[f"conv{i}_b"] = layer.b
        spec = {"w": f"conv{i}_w", "b": f"conv{i}_b", "batch_norm": layer.bn is not None}
        if layer.bn:
            for key in ("gamma", "beta", "mean", "var"):
                arrays[f"conv{i}_bn_{key}"] = layer.bn[key]
                spec[f"bn_{key}"] = f"conv{i}_bn_{key}"
        layer_specs.append(spec)
    arrays["dense_w"] = model.dense_w
    arrays["dense_b"] = model.dense_b

    files = {}
    for name, arr in arrays.items():
        fname = f"{name}.npy"
        digest = write_npy(out_dir / fname, arr.astype(np.float64))
        files[name] = {"file": fname, "sha256": digest, "shape": list(arr.shape)}
    manifest = {
        "format_version": FORMAT_VERSION,
        "pool_after": list(model.pool_after),
        "conv_layers": layer_specs,
        "arrays": files,
    }
    atomic_write_text(out_dir / MODEL_MANIFEST, json.dumps(manifest, indent=2, sort_keys=True))
    return out_dir


def load_model(model_dir: Path) -> ToyModel:
    model_dir = Path(model_dir)
    manifest_path = model_dir / MODEL_MANIFEST
    if not manifest_path.exists():
        raise ManifestMissing(f"no {MODEL_MANIFEST} in {model_dir}")
    manifest = json.loads(manifest_path.read_text())

    def load(name: str) -> np.ndarray:
        entry = manifest["arrays"][name]
        return read_npy(model_dir / entry["file"], expect_shape=tuple(entry["shape"]),
                        expect_dtype="<f8")

    conv_layers = []
    for spec in manifest["conv_layers"]:
        bn = None
        if spec["batch_norm"]:
            bn = {key: load(spec[f"bn_{key}"]) for key in ("gamma", "beta", "mean", "var")}
        conv_layers.append(ConvLayer(load(spec["w"]), load(spec["b"]), bn))
    return ToyModel(
        conv_layers, load("dense_w"), load("dense_b"), tuple(manifest["pool_after"])
    )
