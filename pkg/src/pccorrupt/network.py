"""A small permutation-invariant point classifier, written out by hand.

Shared per-point linear layers (3 -> 64 -> 128 -> 256, each with batch norm
and ReLU), a global max pool over points, then a 256 -> 128 -> C head.  The
forward pass is pure; batch-norm running statistics are updated explicitly
by the training loop from values the forward pass reports.  The backward
pass produces exact analytic gradients for every parameter and for the
input points, which is what the projected-gradient attack consumes.

Everything is float64.  Batch statistics use the biased variance (divide
by N), both for normalization and for the running-average update.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .augmentation import LabeledCloud, MixSpec, apply_mix
from .geometry import PointCloud

# small eps keeps the normalized batch variance within ~eps/sigma^2 of 1
# even for low-variance features; float64 tolerates the wide dynamic range
BN_EPS = 1e-8
BN_MOMENTUM = 0.1
CHECKPOINT_MAGIC = b"TPN1"

_MODES = ("train", "eval", "adapt")


class StaleCacheError(RuntimeError):
    """The activation cache does not belong to this network state."""


@dataclass
class BnParams:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def create(cls, width: int):
        return cls(
            gamma=np.ones(width),
            beta=np.zeros(width),
            mean=np.zeros(width),
            var=np.ones(width),
        )


@dataclass
class NetworkState:
    point_weights: list[np.ndarray]
    point_bns: list[BnParams]
    head_weight: np.ndarray
    head_bn: BnParams
    out_weight: np.ndarray
    out_bias: np.ndarray
    version: int = 0

    @classmethod
    def create(
        cls,
        n_classes: int,
        point_dims: tuple[int, ...] = (64, 128, 256),
        head_dim: int = 128,
        seed: int = 0,
    ) -> "NetworkState":
        if n_classes < 2:
            raise ValueError("need at least 2 classes")
        rng = _rng.stream(seed, 0x6E6574)  # distinct stream for init draws
        weights, bns = [], []
        fan_in = 3
        for width in point_dims:
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, fan_in)))
            bns.append(BnParams.create(width))
            fan_in = width
        head_w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(head_dim, fan_in))
        out_w = rng.normal(0.0, np.sqrt(2.0 / head_dim), size=(n_classes, head_dim))
        return cls(
            point_weights=weights,
            point_bns=bns,
            head_weight=head_w,
            head_bn=BnParams.create(head_dim),
            out_weight=out_w,
            out_bias=np.zeros(n_classes),
        )

    @property
    def n_classes(self) -> int:
        return len(self.out_bias)

    @property
    def point_dims(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.point_weights)

    @property
    def head_dim(self) -> int:
        return self.head_weight.shape[0]

    def copy(self) -> "NetworkState":
        return copy.deepcopy(self)

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable tensors, in a fixed declared order."""
        params = {}
        for i, (w, bn) in enumerate(zip(self.point_weights, self.point_bns)):
            params[f"point{i}.w"] = w
            params[f"point{i}.bn.gamma"] = bn.gamma
            params[f"point{i}.bn.beta"] = bn.beta
        params["head.w"] = self.head_weight
        params["head.bn.gamma"] = self.head_bn.gamma
        params["head.bn.beta"] = self.head_bn.beta
        params["out.w"] = self.out_weight
        params["out.b"] = self.out_bias
        return params

    def running_stats(self) -> dict[str, np.ndarray]:
        stats = {}
        for i, bn in enumerate(self.point_bns):
            stats[f"point{i}.bn.mean"] = bn.mean
            stats[f"point{i}.bn.var"] = bn.var
        stats["head.bn.mean"] = self.head_bn.mean
        stats["head.bn.var"] = self.head_bn.var
        return stats

    def _bn_layers(self) -> list[BnParams]:
        return [*self.point_bns, self.head_bn]

    def touch(self):
        self.version += 1

    def set_running_stats(self, stats: dict[str, np.ndarray]):
        current = self.running_stats()
        for name, value in stats.items():
            if name not in current:
                raise KeyError(f"unknown statistic {name!r}")
            current[name][...] = value
        self.touch()


# ---------------------------------------------------------------------------
# forward / backward


def pack_batch(clouds) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate variable-size clouds into (points, offsets)."""
    arrays = []
    for c in clouds:
        pts = c.points if isinstance(c, PointCloud) else np.asarray(c, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("each cloud must have shape (n, 3)")
        if len(pts) == 0:
            raise ValueError("empty cloud in batch")
        arrays.append(pts.astype(np.float64, copy=False))
    offsets = np.zeros(len(arrays) + 1, dtype=np.int64)
    np.cumsum([len(a) for a in arrays], out=offsets[1:])
    return np.concatenate(arrays, axis=0), offsets


def _bn_forward(z, bn: BnParams, batch_stats: bool):
    if batch_stats:
        mean = z.mean(axis=0)
        var = z.var(axis=0)  # biased
    else:
        mean, var = bn.mean, bn.var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    x_hat = (z - mean) * inv_std
    return bn.gamma * x_hat + bn.beta, x_hat, mean, var, inv_std


def forward(state: NetworkState, clouds, mode: str = "eval"):
    """Run the classifier; returns (logits, cache).

    train/adapt modes normalize with current-batch statistics and report the
    momentum-updated running statistics in cache["new_stats"] without
    touching the state.  eval mode uses the stored running statistics.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}")
    x, offsets = pack_batch(clouds)
    batch_stats = mode in ("train", "adapt")
    n_batch = len(offsets) - 1

    cache = {
        "state": state,
        "version": state.version,
        "mode": mode,
        "offsets": offsets,
        "x": x,
        "layers": [],
        "new_stats": {},
        "batch_stats": {},
    }

    h = x
    for i, (w, bn) in enumerate(zip(state.point_weights, state.point_bns)):
        z = h @ w.T
        y, x_hat, mean, var, inv_std = _bn_forward(z, bn, batch_stats)
        relu_mask = y > 0
        cache["layers"].append(
            {"input": h, "x_hat": x_hat, "inv_std": inv_std, "relu_mask": relu_mask}
        )
        if batch_stats:
            cache["batch_stats"][f"point{i}.bn.mean"] = mean
            cache["batch_stats"][f"point{i}.bn.var"] = var
            cache["new_stats"][f"point{i}.bn.mean"] = (
                (1 - BN_MOMENTUM) * bn.mean + BN_MOMENTUM * mean
            )
            cache["new_stats"][f"point{i}.bn.var"] = (
                (1 - BN_MOMENTUM) * bn.var + BN_MOMENTUM * var
            )
        h = np.where(relu_mask, y, 0.0)

    # global max pool per cloud; first index wins ties
    feat_dim = h.shape[1]
    pooled = np.empty((n_batch, feat_dim))
    argmax_rows = np.empty((n_batch, feat_dim), dtype=np.int64)
    for s in range(n_batch):
        seg = h[offsets[s] : offsets[s + 1]]
        local = seg.argmax(axis=0)
        argmax_rows[s] = offsets[s] + local
        pooled[s] = seg[local, np.arange(feat_dim)]
    cache["pooled_input"] = h
    cache["pooled"] = pooled
    cache["argmax_rows"] = argmax_rows

    z4 = pooled @ state.head_weight.T
    y4, x_hat4, mean4, var4, inv_std4 = _bn_forward(z4, state.head_bn, batch_stats)
    relu4 = y4 > 0
    cache["head"] = {"x_hat": x_hat4, "inv_std": inv_std4, "relu_mask": relu4}
    if batch_stats:
        cache["batch_stats"]["head.bn.mean"] = mean4
        cache["batch_stats"]["head.bn.var"] = var4
        cache["new_stats"]["head.bn.mean"] = (
            (1 - BN_MOMENTUM) * state.head_bn.mean + BN_MOMENTUM * mean4
        )
        cache["new_stats"]["head.bn.var"] = (
            (1 - BN_MOMENTUM) * state.head_bn.var + BN_MOMENTUM * var4
        )
    h4 = np.where(relu4, y4, 0.0)
    cache["h4"] = h4

    logits = h4 @ state.out_weight.T + state.out_bias
    return logits, cache


def _bn_backward(dy, layer_cache, bn: BnParams, batch_stats: bool):
    x_hat = layer_cache["x_hat"]
    inv_std = layer_cache["inv_std"]
    dgamma = (dy * x_hat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    if batch_stats:
        n = len(dy)
        dz = (bn.gamma * inv_std) * (
            dy - dy.mean(axis=0) - x_hat * (dy * x_hat).sum(axis=0) / n
        )
    else:
        dz = dy * bn.gamma * inv_std
    return dz, dgamma, dbeta


def backward(state: NetworkState, cache: dict, grad_logits: np.ndarray):
    """Exact gradients of a scalar loss given d(loss)/d(logits).

    Returns (param_grads, point_grads) where point_grads matches the
    concatenated (total_points, 3) layout of the forward batch.
    """
    if cache.get("state") is not state or cache.get("version") != state.version:
        raise StaleCacheError("activation cache does not match this state")
    batch_stats = cache["mode"] in ("train", "adapt")
    grads: dict[str, np.ndarray] = {}

    h4 = cache["h4"]
    grads["out.w"] = grad_logits.T @ h4
    grads["out.b"] = grad_logits.sum(axis=0)
    dh4 = grad_logits @ state.out_weight

    dy4 = np.where(cache["head"]["relu_mask"], dh4, 0.0)
    dz4, dg4, db4 = _bn_backward(dy4, cache["head"], state.head_bn, batch_stats)
    grads["head.bn.gamma"] = dg4
    grads["head.bn.beta"] = db4
    grads["head.w"] = dz4.T @ cache["pooled"]
    dpooled = dz4 @ state.head_weight

    # route pooled gradient back to each feature's winning point
    h = cache["pooled_input"]
    dh = np.zeros_like(h)
    feat_cols = np.arange(h.shape[1])
    np.add.at(dh, (cache["argmax_rows"], feat_cols[None, :]), dpooled)

    for i in range(len(state.point_weights) - 1, -1, -1):
        layer = cache["layers"][i]
        bn = state.point_bns[i]
        dy = np.where(layer["relu_mask"], dh, 0.0)
        dz, dgamma, dbeta = _bn_backward(dy, layer, bn, batch_stats)
        grads[f"point{i}.bn.gamma"] = dgamma
        grads[f"point{i}.bn.beta"] = dbeta
        grads[f"point{i}.w"] = dz.T @ layer["input"]
        dh = dz @ state.point_weights[i]

    return grads, dh


# ---------------------------------------------------------------------------
# losses


def smooth_targets(labels, n_classes: int, smoothing: float) -> np.ndarray:
    """Label smoothing as an affine map on (soft or one-hot) target rows."""
    if not 0.0 <= smoothing < 1.0:
        raise ValueError("smoothing must be in [0, 1)")
    labels = np.asarray(labels)
    if labels.ndim == 1 and np.issubdtype(labels.dtype, np.integer):
        if ((labels < 0) | (labels >= n_classes)).any():
            raise ValueError("class index out of range")
        t = np.eye(n_classes)[labels]
    else:
        t = np.asarray(labels, dtype=np.float64)
        if t.ndim == 1:
            t = t[None, :]
        if t.shape[1] != n_classes:
            raise ValueError("target width does not match class count")
    if smoothing == 0.0:
        return t
    floor = smoothing / (n_classes - 1)
    return (1.0 - smoothing - floor) * t + floor


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_smoothed_ce(logits: np.ndarray, labels, smoothing: float = 0.2):
    """Mean smoothed cross-entropy and its gradient w.r.t. the logits.

    labels may be integer class indices or soft target rows; soft targets
    are passed through the same smoothing map.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    n, c = logits.shape
    targets = smooth_targets(labels, c, smoothing)
    if len(targets) != n:
        raise ValueError("batch size mismatch between logits and labels")
    log_p = _log_softmax(logits)
    loss = float(-(targets * log_p).sum() / n)
    grad = (np.exp(log_p) - targets) / n
    return loss, grad


def loss_entropy(logits: np.ndarray):
    """Mean softmax entropy and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    n = len(logits)
    log_p = _log_softmax(logits)
    p = np.exp(log_p)
    ent = -(p * log_p).sum(axis=1)
    grad = -p * (log_p + ent[:, None]) / n
    return float(ent.mean()), grad


# ---------------------------------------------------------------------------
# optimizer and training


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m += (1 - self.beta1) * (g - m)
            v += (1 - self.beta2) * (g * g - v)
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    smoothing: float = 0.2
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    plateau_min_delta: float = 1e-4
    augment: bool = True
    mix: str = "none"
    mix_lam: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        raw = json.loads(text)
        if "augmentation" in raw:
            raw["mix"] = raw.pop("augmentation")
        if "lambda" in raw:
            raw["mix_lam"] = raw.pop("lambda")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown training-config fields: {sorted(unknown)}")
        return cls(**raw)


def _default_augment(points: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    scale = rng.uniform(2.0 / 3.0, 3.0 / 2.0)
    shift = rng.uniform(-0.2, 0.2, size=3)
    return points * scale + shift


def _evaluate(state, samples, smoothing):
    """Mean eval-mode loss and accuracy over labeled samples."""
    total_loss, correct = 0.0, 0
    batch = 32
    for start in range(0, len(samples), batch):
        chunk = samples[start : start + batch]
        logits, _ = forward(state, [s.cloud for s in chunk], mode="eval")
        targets = np.stack([s.label for s in chunk])
        loss, _ = loss_smoothed_ce(logits, targets, smoothing)
        total_loss += loss * len(chunk)
        correct += int(
            (logits.argmax(axis=1) == targets.argmax(axis=1)).sum()
        )
    return total_loss / len(samples), correct / len(samples)


def train(
    state: NetworkState,
    train_set: list[LabeledCloud],
    config: TrainConfig,
    val_set: list[LabeledCloud] | None = None,
):
    """Adam training with the plateau learning-rate rule and best-val snapshot.

    Returns (best_state, history); history holds one dict per epoch with
    train_loss, val_loss, val_acc and the lr in force.
    """
    if len(train_set) < config.batch_size:
        raise ValueError("dataset smaller than one batch")
    if len({int(s.label.argmax()) for s in train_set}) < 2:
        raise ValueError("need at least 2 classes present in the training set")

    rng = _rng.stream(config.seed, 0x747261696E)
    if val_set is None:
        order = rng.permutation(len(train_set))
        n_val = max(1, len(train_set) // 10)
        val_set = [train_set[i] for i in order[:n_val]]
        train_set = [train_set[i] for i in order[n_val:]]

    state = state.copy()
    adam = AdamState(config.lr, config.beta1, config.beta2, config.adam_eps)
    best_loss, _ = _evaluate(state, val_set, config.smoothing)
    best_state = state.copy()
    stall = 0
    history = []

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        epoch_loss, n_seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            samples = [train_set[i] for i in idx]
            if config.mix != "none" and len(samples) > 1:
                partners = rng.permutation(len(samples))
                spec = MixSpec(lam=config.mix_lam, seed=config.seed)
                samples = [
                    apply_mix(config.mix, s, samples[partners[j]], spec, rng=rng)
                    for j, s in enumerate(samples)
                ]
            clouds = [s.cloud.points for s in samples]
            if config.augment:
                clouds = [_default_augment(c, rng) for c in clouds]
            targets = np.stack([s.label for s in samples])

            logits, cache = forward(state, clouds, mode="train")
            loss, dlogits = loss_smoothed_ce(logits, targets, config.smoothing)
            grads, _ = backward(state, cache, dlogits)
            adam.step(state.parameters(), grads)
            state.set_running_stats(cache["new_stats"])
            epoch_loss += loss * len(samples)
            n_seen += len(samples)

        val_loss, val_acc = _evaluate(state, val_set, config.smoothing)
        lr_now = adam.lr
        if val_loss < best_loss - config.plateau_min_delta:
            best_loss = val_loss
            best_state = state.copy()
            stall = 0
        else:
            stall += 1
            if stall >= config.plateau_patience:
                lr_now = adam.lr * config.plateau_factor
                adam.lr = lr_now
                stall = 0
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / n_seen,
                "val_loss": val_loss,
                "val_acc": val_acc,
                "lr": lr_now,
            }
        )
    return best_state, history


def predict(state: NetworkState, clouds) -> np.ndarray:
    logits, _ = forward(state, clouds, mode="eval")
    return logits.argmax(axis=1)


# ---------------------------------------------------------------------------
# the point-shifting attack


@dataclass(frozen=True)
class PgdConfig:
    epsilon: float = 0.05
    alpha: float = 0.01
    steps: int = 7
    smoothing: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= self.epsilon:
            raise ValueError("need 0 < alpha <= epsilon")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def pgd_attack(
    state: NetworkState,
    cloud: PointCloud,
    label: int,
    config: PgdConfig,
    rng: np.random.Generator,
) -> PointCloud:
    """Iterated signed-gradient point shifting inside an l-inf ball.

    Starts from uniform noise in [-eps, eps], ascends the classification
    loss with eval-mode (frozen) statistics, and projects back onto the
    ball around the original points after every step.
    """
    base = cloud.points
    x = base + rng.uniform(-config.epsilon, config.epsilon, size=base.shape)
    lo, hi = base - config.epsilon, base + config.epsilon
    for _ in range(config.steps):
        logits, cache = forward(state, [x], mode="eval")
        _, dlogits = loss_smoothed_ce(logits, np.array([label]), config.smoothing)
        _, dpoints = backward(state, cache, dlogits)
        x = np.clip(x + config.alpha * np.sign(dpoints), lo, hi)
    return PointCloud(x)


# ---------------------------------------------------------------------------
# test-time adaptation


def _batch_norm_stats(state: NetworkState, clouds) -> dict[str, np.ndarray]:
    _, cache = forward(state, clouds, mode="adapt")
    return cache["batch_stats"]


def bn_adapt(state: NetworkState, clouds, blend: float = 1.0) -> NetworkState:
    """Re-estimate batch-norm statistics from one batch; weights untouched.

    blend=1 replaces the running statistics outright; smaller values mix
    batch and running statistics.
    """
    if not 0.0 < blend <= 1.0:
        raise ValueError("blend must be in (0, 1]")
    if len(clouds) < 2:
        raise ValueError("need a batch of at least 2 clouds")
    adapted = state.copy()
    batch = _batch_norm_stats(adapted, clouds)
    running = adapted.running_stats()
    merged = {
        name: blend * batch[name] + (1.0 - blend) * running[name] for name in batch
    }
    adapted.set_running_stats(merged)
    return adapted


@dataclass(frozen=True)
class TentConfig:
    lr: float = 1e-3
    steps: int = 1

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


_TENT_PARAM_SUFFIXES = (".bn.gamma", ".bn.beta")


def tent_adapt(state: NetworkState, clouds, config: TentConfig | None = None) -> NetworkState:
    """Entropy-minimizing test-time adaptation.

    Normalization statistics come from the adaptation batch itself; then
    `steps` Adam updates are applied to the batch-norm scale/shift
    parameters only, minimizing the mean softmax entropy of the batch.
    Every other parameter is left bit-identical.
    """
    if len(clouds) < 2:
        raise ValueError("need a batch of at least 2 clouds")
    config = config or TentConfig()
    adapted = state.copy()
    affine = {
        name: p
        for name, p in adapted.parameters().items()
        if name.endswith(_TENT_PARAM_SUFFIXES)
    }
    adam = AdamState(lr=config.lr)
    for _ in range(config.steps):
        logits, cache = forward(adapted, clouds, mode="adapt")
        _, dlogits = loss_entropy(logits)
        grads, _ = backward(adapted, cache, dlogits)
        if config.lr > 0:
            adam.step(affine, {name: grads[name] for name in affine})
            adapted.touch()
    # store the batch statistics seen under the final scale/shift values, so
    # a later eval-mode pass reproduces the adapted forward exactly
    adapted.set_running_stats(_batch_norm_stats(adapted, clouds))
    return adapted


# ---------------------------------------------------------------------------
# checkpoint container


def _tensor_entries(state: NetworkState):
    entries = []
    for i, (w, bn) in enumerate(zip(state.point_weights, state.point_bns)):
        entries.append((f"point{i}.w", w))
        entries.append((f"point{i}.bn.gamma", bn.gamma))
        entries.append((f"point{i}.bn.beta", bn.beta))
        entries.append((f"point{i}.bn.mean", bn.mean))
        entries.append((f"point{i}.bn.var", bn.var))
    entries.append(("head.w", state.head_weight))
    entries.append(("head.bn.gamma", state.head_bn.gamma))
    entries.append(("head.bn.beta", state.head_bn.beta))
    entries.append(("head.bn.mean", state.head_bn.mean))
    entries.append(("head.bn.var", state.head_bn.var))
    entries.append(("out.w", state.out_weight))
    entries.append(("out.b", state.out_bias))
    return entries


def save_checkpoint(
    state: NetworkState,
    path,
    class_names: list[str] | None = None,
    config_digest: str | None = None,
) -> None:
    """Write magic + length-prefixed JSON metadata + float64 LE tensors."""
    entries = _tensor_entries(state)
    meta = {
        "format": CHECKPOINT_MAGIC.decode(),
        "point_dims": list(state.point_dims),
        "head_dim": state.head_dim,
        "n_classes": state.n_classes,
        "class_names": class_names,
        "config_digest": config_digest,
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in entries],
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in entries:
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (state, metadata)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic bytes)")
    (meta_len,) = struct.unpack("<I", data[4:8])
    try:
        meta = json.loads(data[8 : 8 + meta_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"corrupt checkpoint metadata: {exc}") from None
    state = NetworkState.create(
        meta["n_classes"],
        point_dims=tuple(meta["point_dims"]),
        head_dim=meta["head_dim"],
    )
    offset = 8 + meta_len
    declared = {e["name"]: tuple(e["shape"]) for e in meta["tensors"]}
    for name, tensor in _tensor_entries(state):
        shape = declared.get(name)
        if shape != tensor.shape:
            raise ValueError(f"checkpoint tensor {name!r} has shape {shape}, "
                             f"expected {tensor.shape}")
        size = tensor.size * 8
        raw = data[offset : offset + size]
        if len(raw) != size:
            raise ValueError("checkpoint truncated")
        tensor[...] = np.frombuffer(raw, dtype="<f8").reshape(tensor.shape)
        offset += size
    if offset != len(data):
        raise ValueError("trailing bytes after checkpoint tensors")
    state.touch()
    return state, meta
