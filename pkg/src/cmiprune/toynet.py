"""Self-contained toy CNN: forward, backward, masking, and evaluation.

Everything runs on numpy so the pruning pipeline can be exercised end to
end on a desk CPU: convolution via sliding windows, optional per-channel
batch normalization, 2x2 max pooling, a dense head, and minibatch SGD with
momentum on softmax cross-entropy.  Filter masks can be applied either by
zeroing weights in place (shapes kept) or by actually removing channels
and resizing the following layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .entropy import FeatureMatrix
from .errors import (
    DivergenceDetected,
    LastLayerPruneAttempt,
    MaskShapeMismatch,
    ShapeMismatch,
)
from .ordering import LayerFeatures

BN_EPS = 1e-5
EVAL_CHUNK = 256


@dataclass
class LabeledDataset:
    """Image batch (n, c, h, w) with integer class labels."""

    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.labels) != len(self.images):
            raise ShapeMismatch("need images (n, c, h, w) with one label per image")
        if len(self.images) < 2:
            raise ShapeMismatch("need at least two samples")
        if self.labels.min() < 0:
            raise ValueError("labels must be non-negative class ids")

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class MaskSet:
    """Per-conv-layer boolean keep-vectors over output filters."""

    keep: list[np.ndarray]

    @classmethod
    def all_true(cls, filter_counts: list[int]) -> "MaskSet":
        return cls([np.ones(c, dtype=bool) for c in filter_counts])

    @classmethod
    def from_retained(cls, filter_counts: list[int], retained: dict[int, list[int]]) -> "MaskSet":
        """Build from {1-based layer id: retained filter indices}; absent layers keep all."""
        keep = []
        for i, count in enumerate(filter_counts):
            mask = np.ones(count, dtype=bool)
            if (i + 1) in retained:
                mask[:] = False
                mask[np.asarray(retained[i + 1], dtype=int)] = True
            keep.append(mask)
        return cls(keep)


class ConvLayer:
    """3x3 same-padding convolution with bias and optional batch norm."""

    def __init__(self, w: np.ndarray, b: np.ndarray, bn: dict | None = None):
        self.w = w  # (out, in, kh, kw)
        self.b = b
        self.bn = bn  # {"gamma", "beta", "mean", "var"} or None

    @property
    def out_channels(self) -> int:
        return self.w.shape[0]

    def copy(self) -> "ConvLayer":
        bn = {k: v.copy() for k, v in self.bn.items()} if self.bn else None
        return ConvLayer(self.w.copy(), self.b.copy(), bn)


def _im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """(n, c, h, w) -> (n, h*w, c*kh*kw) patches under same padding."""
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (n, c, h, w, kh, kw)
    n, c, h, w = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n, h * w, c * kh * kw)


def _col2im(dcols: np.ndarray, x_shape: tuple, kh: int, kw: int, pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    dcols = dcols.reshape(n, h, w, c, kh, kw)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + h, j : j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, pad : pad + h, pad : pad + w]


def conv_forward(x, layer: ConvLayer, pad: int = 1):
    n, c, h, w = x.shape
    kh, kw = layer.w.shape[2:]
    if layer.w.shape[1] != c:
        raise ShapeMismatch(f"conv expects {layer.w.shape[1]} input channels, got {c}")
    cols = _im2col(x, kh, kw, pad)
    out = cols @ layer.w.reshape(layer.out_channels, -1).T + layer.b
    out = out.transpose(0, 2, 1).reshape(n, layer.out_channels, h, w)
    return out, cols


def conv_backward(dout, cols, x_shape, layer: ConvLayer, pad: int = 1):
    n, _, h, w = x_shape
    kh, kw = layer.w.shape[2:]
    dflat = dout.reshape(n, layer.out_channels, h * w).transpose(0, 2, 1)
    dw = np.einsum("npo,npk->ok", dflat, cols).reshape(layer.w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dcols = dflat @ layer.w.reshape(layer.out_channels, -1)
    dx = _col2im(dcols, x_shape, kh, kw, pad)
    return dx, dw, db


def bn_forward(x, bn: dict, training: bool):
    if training:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
    else:
        mean, var = bn["mean"], bn["var"]
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = bn["gamma"][None, :, None, None] * xhat + bn["beta"][None, :, None, None]
    return out, (xhat, inv_std, mean, var)


def bn_backward(dout, x, cache, bn: dict):
    xhat, inv_std, mean, _ = cache
    m = x.shape[0] * x.shape[2] * x.shape[3]
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * bn["gamma"][None, :, None, None]
    xc = x - mean[None, :, None, None]
    dvar = (dxhat * xc).sum(axis=(0, 2, 3)) * -0.5 * inv_std**3
    dmean = -(dxhat.sum(axis=(0, 2, 3))) * inv_std + dvar * (-2.0 / m) * xc.sum(axis=(0, 2, 3))
    dx = (
        dxhat * inv_std[None, :, None, None]
        + (2.0 / m) * dvar[None, :, None, None] * xc
        + dmean[None, :, None, None] / m
    )
    return dx, dgamma, dbeta


def maxpool_forward(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"2x2 pooling needs even spatial dims, got {h}x{w}")
    windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(n, c, h // 2, w // 2, 4)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward(dout, arg, x_shape):
    n, c, h, w = x_shape
    dwin = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dwin.reshape(n, c, h, w)


def softmax_xent(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


class ToyModel:
    """Small conv stack with a dense head.

    conv_layers apply 3x3 same-padding convolution, optional batch norm,
    and ReLU; a 2x2 max pool follows each layer listed in pool_after
    (1-based).  The dense head maps the flattened final map to class
    logits.
    """

    def __init__(self, conv_layers: list[ConvLayer], dense_w, dense_b, pool_after=(1, 2)):
        self.conv_layers = conv_layers
        self.dense_w = dense_w  # (flat_dim, classes)
        self.dense_b = dense_b
        self.pool_after = tuple(pool_after)

    @classmethod
    def create(
        cls,
        input_shape=(1, 16, 16),
        conv_channels=(8, 16, 16),
        num_classes=3,
        batch_norm=False,
        pool_after=(1, 2),
        kernel=3,
        seed=0,
    ) -> "ToyModel":
        rng = np.random.default_rng(seed)
        c, h, w = input_shape
        layers = []
        for i, out_c in enumerate(conv_channels):
            scale = np.sqrt(2.0 / (c * kernel * kernel))  # He init
            wgt = rng.normal(0.0, scale, size=(out_c, c, kernel, kernel))
            bn = None
            if batch_norm:
                bn = {
                    "gamma": np.ones(out_c),
                    "beta": np.zeros(out_c),
                    "mean": np.zeros(out_c),
                    "var": np.ones(out_c),
                }
            layers.append(ConvLayer(wgt, np.zeros(out_c), bn))
            c = out_c
            if (i + 1) in pool_after:
                h, w = h // 2, w // 2
        flat = c * h * w
        dense_w = rng.normal(0.0, np.sqrt(1.0 / flat), size=(flat, num_classes))
        return cls(layers, dense_w, np.zeros(num_classes), pool_after)

    @property
    def num_layers(self) -> int:
        return len(self.conv_layers)

    @property
    def filter_counts(self) -> list[int]:
        return [layer.out_channels for layer in self.conv_layers]

    @property
    def num_classes(self) -> int:
        return self.dense_w.shape[1]

    def copy(self) -> "ToyModel":
        return ToyModel(
            [layer.copy() for layer in self.conv_layers],
            self.dense_w.copy(),
            self.dense_b.copy(),
            self.pool_after,
        )

    def parameter_count(self) -> int:
        """Trainable parameter count (weights, biases, BN scale/shift)."""
        total = self.dense_w.size + self.dense_b.size
        for layer in self.conv_layers:
            total += layer.w.size + layer.b.size
            if layer.bn:
                total += layer.bn["gamma"].size + layer.bn["beta"].size
        return int(total)

    # --- forward -----------------------------------------------------------

    def forward(self, x, training=False, keep_features=False, cache=None):
        feats = []
        for i, layer in enumerate(self.conv_layers):
            pre, cols = conv_forward(x, layer)
            if cache is not None:
                cache.append({"x_shape": x.shape, "cols": cols})
            if layer.bn:
                pre_bn = pre
                pre, bn_cache = bn_forward(pre, layer.bn, training)
                if cache is not None:
                    cache[-1].update(bn_in=pre_bn, bn_cache=bn_cache)
            act = np.maximum(pre, 0.0)
            if cache is not None:
                cache[-1]["pre"] = pre
            if keep_features:
                feats.append(act)
            x = act
            if (i + 1) in self.pool_after:
                x, arg = maxpool_forward(x)
                if cache is not None:
                    cache[-1].update(pool_arg=arg, pool_in_shape=act.shape)
        n = x.shape[0]
        flat = x.reshape(n, -1)
        if flat.shape[1] != self.dense_w.shape[0]:
            raise ShapeMismatch(
                f"dense head expects {self.dense_w.shape[0]} inputs, got {flat.shape[1]}"
            )
        logits = flat @ self.dense_w + self.dense_b
        if cache is not None:
            cache.append({"flat": flat, "last_shape": x.shape})
        return (logits, feats) if keep_features else logits

    def logits(self, x) -> np.ndarray:
        """Chunked inference pass."""
        outs = [self.forward(x[i : i + EVAL_CHUNK]) for i in range(0, len(x), EVAL_CHUNK)]
        return np.concatenate(outs, axis=0)


def activation_tensors(model: ToyModel, batch: LabeledDataset) -> list[np.ndarray]:
    """Raw per-layer activation maps (n, filters, h, w) for a batch.

    Maps are taken after activation (and batch norm when present), before
    pooling.
    """
    per_layer_chunks: list[list[np.ndarray]] = [[] for _ in model.conv_layers]
    for i in range(0, len(batch), EVAL_CHUNK):
        _, feats = model.forward(batch.images[i : i + EVAL_CHUNK], keep_features=True)
        for k, act in enumerate(feats):
            per_layer_chunks[k].append(act)
    return [np.concatenate(chunks, axis=0) for chunks in per_layer_chunks]


def forward_extract(model: ToyModel, batch: LabeledDataset) -> list[LayerFeatures]:
    """Per-layer, per-filter flattened post-activation maps for a batch.

    Each filter's h x w grid is flattened row-major into one sample row.
    """
    layers = []
    for k, act in enumerate(activation_tensors(model, batch)):
        n, filters = act.shape[:2]
        flat = act.reshape(n, filters, -1)
        features = [
            FeatureMatrix(flat[:, f, :], layer_id=k + 1, feature_index=f)
            for f in range(filters)
        ]
        layers.append(LayerFeatures(layer_id=k + 1, features=tuple(features)))
    return layers


def evaluate(model: ToyModel, data: LabeledDataset) -> float:
    """Argmax-logit classification accuracy in [0, 1]."""
    preds = model.logits(data.images).argmax(axis=1)
    return float(np.mean(preds == data.labels))


def apply_mask(model: ToyModel, masks: MaskSet, mode: str = "zero_weight") -> ToyModel:
    """Materialize filter masks on a copy of the model.

    zero_weight nulls the pruned filters' weights and biases, keeping all
    shapes and batch-norm state; actual removes the output channels, the
    matching input channels of the next conv layer, and the pruned
    channels' batch-norm parameters.  The final conv layer cannot be
    actually pruned: its channel layout feeds the dense head.
    """
    if mode not in ("zero_weight", "actual"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(masks.keep) != model.num_layers:
        raise MaskShapeMismatch(f"{len(masks.keep)} masks for {model.num_layers} layers")
    for i, (mask, layer) in enumerate(zip(masks.keep, model.conv_layers)):
        if mask.shape != (layer.out_channels,):
            raise MaskShapeMismatch(
                f"layer {i + 1}: mask length {mask.shape[0]} != {layer.out_channels} filters"
            )
    out = model.copy()
    if mode == "zero_weight":
        for mask, layer in zip(masks.keep, out.conv_layers):
            layer.w[~mask] = 0.0
            layer.b[~mask] = 0.0
        return out

    if not masks.keep[-1].all():
        raise LastLayerPruneAttempt("actual mode keeps the final conv layer intact")
    for i, (mask, layer) in enumerate(zip(masks.keep, out.conv_layers)):
        keep = np.flatnonzero(mask)
        layer.w = layer.w[keep]
        layer.b = layer.b[keep]
        if layer.bn:
            layer.bn = {k: v[keep] for k, v in layer.bn.items()}
        if i + 1 < out.num_layers:
            nxt = out.conv_layers[i + 1]
            nxt.w = nxt.w[:, keep, :, :]
    return out


def train(
    model: ToyModel,
    data: LabeledDataset,
    epochs: int = 20,
    lr: float = 0.01,
    momentum: float = 0.9,
    batch_size: int = 32,
    seed: int = 0,
) -> ToyModel:
    """Minibatch SGD with momentum on softmax cross-entropy.

    Returns a trained copy; deterministic under `seed`.  Raises
    DivergenceDetected the moment the loss goes NaN.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    model = model.copy()
    rng = np.random.default_rng(seed)
    params = _param_refs(model)
    velocity = [np.zeros_like(p) for _, _, p in params]
    n = len(data)
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            loss, grads = _loss_and_grads(model, data.images[idx], data.labels[idx])
            if not np.isfinite(loss):
                raise DivergenceDetected(f"loss became {loss}")
            for v, (_, _, p), g in zip(velocity, params, grads):
                v *= momentum
                v -= lr * g
                p += v
    return model


def _param_refs(model: ToyModel):
    """(owner, attr, array) triples for every trainable array, fixed order."""
    refs = []
    for layer in model.conv_layers:
        refs.append((layer, "w", layer.w))
        refs.append((layer, "b", layer.b))
        if layer.bn:
            refs.append((layer.bn, "gamma", layer.bn["gamma"]))
            refs.append((layer.bn, "beta", layer.bn["beta"]))
    refs.append((model, "dense_w", model.dense_w))
    refs.append((model, "dense_b", model.dense_b))
    return refs


def _loss_and_grads(model: ToyModel, images, labels):
    cache: list[dict] = []
    logits = model.forward(images, training=True, cache=cache)
    loss, dlogits = softmax_xent(logits, labels)

    head = cache.pop()
    grads_tail = [head["flat"].T @ dlogits, dlogits.sum(axis=0)]
    dx = (dlogits @ model.dense_w.T).reshape(head["last_shape"])

    grads_conv = []
    for i in range(model.num_layers - 1, -1, -1):
        layer = model.conv_layers[i]
        c = cache[i]
        if (i + 1) in model.pool_after:
            dx = maxpool_backward(dx, c["pool_arg"], c["pool_in_shape"])
        dx = dx * (c["pre"] > 0)
        layer_grads = []
        if layer.bn:
            dx, dgamma, dbeta = bn_backward(dx, c["bn_in"], c["bn_cache"], layer.bn)
            layer_grads = [dgamma, dbeta]
        dx, dw, db = conv_backward(dx, c["cols"], c["x_shape"], layer)
        grads_conv = [dw, db, *layer_grads] + grads_conv

    # update running batch-norm statistics (not part of the gradient)
    for i, layer in enumerate(model.conv_layers):
        if layer.bn:
            _, _, mean, var = cache[i]["bn_cache"]
            layer.bn["mean"] = 0.9 * layer.bn["mean"] + 0.1 * mean
            layer.bn["var"] = 0.9 * layer.bn["var"] + 0.1 * var

    return loss, grads_conv + grads_tail


# --- synthetic data ----------------------------------------------------------


def synthetic_dataset(
    n: int, num_classes: int = 3, image_size: int = 16, noise: float = 0.25, seed: int = 0
) -> LabeledDataset:
    """Seeded 16x16 grayscale classes: bars at three orientations plus blobs.

    Class 0 draws horizontal bars, 1 vertical bars, 2 diagonal stripes,
    3 soft blobs; every image gets Gaussian pixel noise.
    """
    if not 2 <= num_classes <= 4:
        raise ValueError("num_classes must be between 2 and 4")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=n)
    images = rng.normal(0.0, noise, size=(n, 1, image_size, image_size))
    coords = np.arange(image_size)
    for i, cls in enumerate(labels):
        img = images[i, 0]
        if cls in (0, 1):
            row = rng.integers(1, image_size - 2)
            thick = rng.integers(1, 3)
            sl = slice(row, min(row + thick, image_size - 1))
            if cls == 0:
                img[sl, :] += 1.0
            else:
                img[:, sl] += 1.0
        elif cls == 2:
            offset = rng.integers(-image_size // 2, image_size // 2)
            for r in coords:
                c = r + offset
                if 0 <= c < image_size:
                    img[r, c] += 1.0
                    if c + 1 < image_size:
                        img[r, c + 1] += 1.0
        else:
            cy, cx = rng.integers(3, image_size - 3, size=2)
            yy, xx = np.meshgrid(coords, coords, indexing="ij")
            img += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 6.0)
    return LabeledDataset(images, labels)
