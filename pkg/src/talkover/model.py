"""Interruption classifier: learnable layer-weighted sum over embedding
layers, attention pooling of the frame axis, and a feed-forward head,
trained with mini-batch SGD on cross-entropy.

All math is plain numpy in float64 with exact analytic gradients; the
finite-difference suite in the tests checks every parameter group.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FeatureProfileError, ModelError, TrainingDivergedError
from .features import LayeredEmbedding

CLASSES = ("backchannel", "failed_interruption", "interruption", "laughter")
N_CLASSES = len(CLASSES)
HEAD_WIDTHS = (512, 512, 128, 32, 4)
LEAKY_SLOPE = 0.01

CHANNELS_BOTH = "2"
CHANNELS_RIGHT = "right"


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of integer labels under (B, K) probs."""
    picked = probs[np.arange(len(labels)), labels]
    return float(np.mean(-np.log(picked)))


@dataclass
class LayerWeights:
    """Learnable mixing of embedding layers; softmax keeps the effective
    weights a convex combination."""

    logits: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return softmax(np.asarray(self.logits, dtype=np.float64))


@dataclass
class AttentionPooler:
    """Frame-scoring template; one weight per feature dimension."""

    w: np.ndarray


@dataclass
class FeedForwardHead:
    """Affine stack with LeakyReLU between layers and none after the last."""

    weights: list  # (out, in) matrices
    biases: list   # (out,) vectors

    @property
    def widths(self) -> tuple:
        return tuple(w.shape[0] for w in self.weights)


@dataclass(frozen=True)
class FeatureSpec:
    """What the model expects to be fed.

    kind: "emb" for layered embeddings, "matrix" for plain (d, M)
    feature matrices. input_dim is the stacked feature dimension d;
    layers is the embedding layer count (None for matrix features).
    """

    kind: str
    input_dim: int
    frames: int | None = None
    profile: str | None = None
    channels: str = CHANNELS_BOTH
    layers: int | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "input_dim": self.input_dim, "frames": self.frames,
                "profile": self.profile, "channels": self.channels, "layers": self.layers}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(kind=d["kind"], input_dim=int(d["input_dim"]),
                   frames=d.get("frames"), profile=d.get("profile"),
                   channels=d.get("channels", CHANNELS_BOTH),
                   layers=d.get("layers"))


@dataclass
class InterruptionModel:
    feature_spec: FeatureSpec
    layer_weights: LayerWeights | None
    pooler: AttentionPooler
    head: FeedForwardHead


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0015
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    patience: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Gradients:
    layer_logits: np.ndarray | None
    pooler_w: np.ndarray
    head_weights: list
    head_biases: list


def feature_spec_of(features, channels: str = CHANNELS_BOTH) -> FeatureSpec:
    """Derive the input contract from one sample."""
    if isinstance(features, LayeredEmbedding):
        p = features.profile
        return FeatureSpec("emb", p.stacked_dim, p.frames, p.name, channels, p.layers)
    arr = np.asarray(features)
    if arr.ndim != 2:
        raise FeatureProfileError("matrix features must be 2-D (d, M)")
    return FeatureSpec("matrix", arr.shape[0], arr.shape[1], None, channels)


def build_model(spec: FeatureSpec, rng: np.random.Generator,
                head_widths: tuple = HEAD_WIDTHS) -> InterruptionModel:
    """Fresh model: Glorot-uniform head, zero biases, zero pooler template
    (uniform pooling at start), zero layer logits (uniform layer mix)."""
    if head_widths[-1] != N_CLASSES:
        raise ModelError("head must end in %d classes" % N_CLASSES)
    if spec.channels not in (CHANNELS_BOTH, CHANNELS_RIGHT):
        raise ModelError("unknown channels mode %r" % spec.channels)
    if spec.channels == CHANNELS_RIGHT and spec.input_dim % 2:
        raise ModelError("right-channel masking needs an even feature dim")

    layer_weights = None
    if spec.kind == "emb":
        if not spec.layers:
            raise ModelError("embedding feature spec needs a layer count")
        layer_weights = LayerWeights(np.zeros(spec.layers))

    weights, biases = [], []
    fan_in = spec.input_dim
    for width in head_widths:
        bound = np.sqrt(6.0 / (fan_in + width))
        weights.append(rng.uniform(-bound, bound, size=(width, fan_in)))
        biases.append(np.zeros(width))
        fan_in = width
    return InterruptionModel(spec, layer_weights, AttentionPooler(np.zeros(spec.input_dim)),
                             FeedForwardHead(weights, biases))


def layer_sum(emb: LayeredEmbedding, weights: LayerWeights) -> np.ndarray:
    """Softmax-weighted sum over layers, channels stacked on the feature
    axis: rows [0, d0) left channel, rows [d0, 2*d0) right."""
    w = weights.weights
    if len(w) != emb.profile.layers:
        raise FeatureProfileError(
            "got %d layer weights for %d layers" % (len(w), emb.profile.layers))
    mixed = np.einsum("l,cldm->cdm", w, emb.data.astype(np.float64, copy=False))
    return mixed.reshape(-1, emb.profile.frames)


def attention_pool(H: np.ndarray, pooler: AttentionPooler) -> np.ndarray:
    """Softmax frame weighting: scores W.H, weights Q, pooled U = H.Q^T."""
    H = np.asarray(H, dtype=np.float64)
    if not np.all(np.isfinite(H)):
        raise ModelError("non-finite feature matrix")
    if H.shape[0] != len(pooler.w):
        raise FeatureProfileError(
            "template length %d vs feature dim %d" % (len(pooler.w), H.shape[0]))
    q = softmax(pooler.w @ H)
    return H @ q


def _check_features(model: InterruptionModel, features) -> None:
    spec = model.feature_spec
    got = feature_spec_of(features, spec.channels)
    if (got.kind, got.input_dim, got.frames, got.profile, got.layers) != (
            spec.kind, spec.input_dim, spec.frames, spec.profile, spec.layers):
        raise FeatureProfileError(
            "model expects %s, got %s" % (spec.to_dict(), got.to_dict()))


def _batch_h(model: InterruptionModel, batch_features) -> np.ndarray:
    """Stack a batch into H of shape (B, d, M), layer-mixed and masked."""
    spec = model.feature_spec
    if spec.kind == "emb":
        stacked = np.stack([f.data for f in batch_features])  # (B, C, L, d0, M)
        w = model.layer_weights.weights
        H = np.einsum("l,bcldm->bcdm", w, stacked.astype(np.float64, copy=False))
        H = H.reshape(len(batch_features), spec.input_dim, -1)
    else:
        H = np.stack([np.asarray(f, dtype=np.float64) for f in batch_features])
    if spec.channels == CHANNELS_RIGHT:
        H = H.copy()
        H[:, : spec.input_dim // 2, :] = 0.0
    return H


def _head_forward(head: FeedForwardHead, U: np.ndarray):
    """Batched head pass; returns (logits, preactivations, activations)."""
    zs, acts = [], [U]
    a = U
    for i, (W, b) in enumerate(zip(head.weights, head.biases)):
        z = a @ W.T + b
        zs.append(z)
        if i < len(head.weights) - 1:
            a = np.where(z > 0, z, LEAKY_SLOPE * z)
            acts.append(a)
    return zs[-1], zs, acts


def _forward_pass(model: InterruptionModel, batch_features):
    """Shared forward used by inference and backprop."""
    H = _batch_h(model, batch_features)
    scores = np.einsum("d,bdm->bm", model.pooler.w, H)
    Q = softmax(scores, axis=1)
    U = np.einsum("bdm,bm->bd", H, Q)
    logits, zs, acts = _head_forward(model.head, U)
    probs = softmax(logits, axis=1)
    return H, Q, U, zs, acts, probs


def forward(model: InterruptionModel, features) -> np.ndarray:
    """Class probabilities for a single sample; sums to 1."""
    _check_features(model, features)
    return _forward_pass(model, [features])[-1][0]


def forward_batch(model: InterruptionModel, features_list) -> np.ndarray:
    if not features_list:
        raise ModelError("empty batch")
    _check_features(model, features_list[0])
    return _forward_pass(model, features_list)[-1]


def _loss_and_grads(model: InterruptionModel, batch_features, labels):
    """Mean cross-entropy and its exact gradients for one mini-batch."""
    B = len(batch_features)
    labels = np.asarray(labels)
    H, Q, U, zs, acts, probs = _forward_pass(model, batch_features)
    loss = cross_entropy(probs, labels)

    dz = probs.copy()
    dz[np.arange(B), labels] -= 1.0
    dz /= B

    head = model.head
    d_weights = [None] * len(head.weights)
    d_biases = [None] * len(head.biases)
    for i in range(len(head.weights) - 1, -1, -1):
        d_weights[i] = dz.T @ acts[i]
        d_biases[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ head.weights[i]
            dz = da * np.where(zs[i - 1] > 0, 1.0, LEAKY_SLOPE)
    g = dz @ head.weights[0]  # (B, d) gradient w.r.t. pooled U

    dQ = np.einsum("bdm,bd->bm", H, g)
    dS = Q * (dQ - np.sum(dQ * Q, axis=1, keepdims=True))
    d_pooler = np.einsum("bdm,bm->d", H, dS)
    dH = g[:, :, None] * Q[:, None, :] + model.pooler.w[None, :, None] * dS[:, None, :]

    spec = model.feature_spec
    d_logits = None
    if spec.kind == "emb":
        if spec.channels == CHANNELS_RIGHT:
            dH = dH.copy()
            dH[:, : spec.input_dim // 2, :] = 0.0
        stacked = np.stack([f.data for f in batch_features]).astype(np.float64, copy=False)
        d0 = spec.input_dim // stacked.shape[1]
        dH_c = dH.reshape(B, stacked.shape[1], d0, -1)
        dw = np.einsum("bcdm,bcldm->l", dH_c, stacked)
        w = model.layer_weights.weights
        d_logits = w * (dw - np.sum(dw * w))

    return loss, Gradients(d_logits, d_pooler, d_weights, d_biases)


def gradients(model: InterruptionModel, batch_features, labels) -> Gradients:
    """Exact analytic gradients of mean cross-entropy over the batch."""
    if not batch_features:
        raise ModelError("empty batch")
    _check_features(model, batch_features[0])
    loss, grads = _loss_and_grads(model, batch_features, labels)
    if not np.isfinite(loss):
        raise TrainingDivergedError("non-finite loss in gradient computation")
    return grads


def _apply_sgd(model: InterruptionModel, grads: Gradients, lr: float) -> None:
    if grads.layer_logits is not None:
        model.layer_weights.logits = model.layer_weights.logits - lr * grads.layer_logits
    model.pooler.w = model.pooler.w - lr * grads.pooler_w
    for i in range(len(model.head.weights)):
        model.head.weights[i] = model.head.weights[i] - lr * grads.head_weights[i]
        model.head.biases[i] = model.head.biases[i] - lr * grads.head_biases[i]


def _snapshot(model: InterruptionModel):
    logits = None if model.layer_weights is None else model.layer_weights.logits.copy()
    return (logits, model.pooler.w.copy(),
            [w.copy() for w in model.head.weights],
            [b.copy() for b in model.head.biases])


def _restore(model: InterruptionModel, snap) -> None:
    logits, pooler_w, weights, biases = snap
    if logits is not None:
        model.layer_weights.logits = logits
    model.pooler.w = pooler_w
    model.head.weights = weights
    model.head.biases = biases


def evaluate_loss(model: InterruptionModel, dataset) -> float:
    """Mean cross-entropy over a labeled dataset, in inference mode."""
    feats = [f for f, _ in dataset]
    labels = np.asarray([y for _, y in dataset])
    probs = forward_batch(model, feats)
    return cross_entropy(probs, labels)


@dataclass
class TrainResult:
    model: InterruptionModel
    train_loss: list
    val_loss: list
    stopped_epoch: int


def train(dataset, config: TrainConfig = TrainConfig(), val_dataset=None,
          channels: str = CHANNELS_BOTH,
          head_widths: tuple = HEAD_WIDTHS) -> TrainResult:
    """Mini-batch SGD on mean cross-entropy.

    dataset is a sequence of (features, class_index) pairs with one
    shared feature contract. Per-epoch train loss is the mean of the
    batch losses seen that epoch; when a validation set is given, the
    best-validation parameters are restored at the end (early stopping
    with the configured patience). Deterministic for a fixed seed.
    """
    dataset = list(dataset)
    if not dataset:
        raise ModelError("empty training dataset")
    for _, y in dataset:
        if not 0 <= y < N_CLASSES:
            raise ModelError("label index %r outside the %d-class set" % (y, N_CLASSES))

    rng = np.random.default_rng(config.seed)
    spec = feature_spec_of(dataset[0][0], channels)
    model = build_model(spec, rng, head_widths)

    features = [f for f, _ in dataset]
    labels = [y for _, y in dataset]
    n = len(dataset)
    train_curve, val_curve = [], []
    best = (np.inf, None, -1)
    stopped = config.epochs

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo: lo + config.batch_size]
            batch = [features[i] for i in idx]
            batch_labels = [labels[i] for i in idx]
            loss, grads = _loss_and_grads(model, batch, batch_labels)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    "non-finite loss at epoch %d step %d (lr=%g)"
                    % (epoch, lo // config.batch_size, config.learning_rate))
            _apply_sgd(model, grads, config.learning_rate)
            batch_losses.append(loss)
        train_curve.append(float(np.mean(batch_losses)))

        if val_dataset:
            v = evaluate_loss(model, val_dataset)
            val_curve.append(v)
            if v < best[0]:
                best = (v, _snapshot(model), epoch)
            elif epoch - best[2] >= config.patience:
                stopped = epoch + 1
                break

    if val_dataset and best[1] is not None:
        _restore(model, best[1])
    return TrainResult(model, train_curve, val_curve, stopped)


_CKPT_MAGIC = b"TOM1"
_CKPT_VERSION = 1


def save_model(model: InterruptionModel, path) -> None:
    """Versioned binary checkpoint: JSON header then little-endian
    float32 parameter blocks in declaration order."""
    blocks = []
    if model.layer_weights is not None:
        blocks.append(("layer_logits", model.layer_weights.logits))
    blocks.append(("pooler_w", model.pooler.w))
    for i, (w, b) in enumerate(zip(model.head.weights, model.head.biases)):
        blocks.append(("head_w%d" % i, w))
        blocks.append(("head_b%d" % i, b))

    header = {
        "feature_spec": model.feature_spec.to_dict(),
        "head_widths": list(model.head.widths),
        "blocks": [[name, list(arr.shape)] for name, arr in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC + struct.pack("<II", _CKPT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path) -> InterruptionModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CKPT_MAGIC:
            raise ModelError("%s: not a model checkpoint" % path)
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != _CKPT_VERSION:
            raise ModelError("%s: unsupported checkpoint version %d" % (path, version))
        header = json.loads(fh.read(header_len).decode())
        arrays = {}
        for name, shape in header["blocks"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise ModelError("%s: truncated parameter block %r" % (path, name))
            arrays[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)

    spec = FeatureSpec.from_dict(header["feature_spec"])
    layer_weights = None
    if "layer_logits" in arrays:
        layer_weights = LayerWeights(arrays["layer_logits"])
    n_layers = len(header["head_widths"])
    head = FeedForwardHead([arrays["head_w%d" % i] for i in range(n_layers)],
                           [arrays["head_b%d" % i] for i in range(n_layers)])
    return InterruptionModel(spec, layer_weights, AttentionPooler(arrays["pooler_w"]), head)
