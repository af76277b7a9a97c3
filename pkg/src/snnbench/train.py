"""Training loop: time-averaged cross-entropy, the gradient-aware auxiliary
loss, Adam with step decay, early stopping on validation accuracy, per-layer
gradient-norm logging, and binary checkpoints.

The auxiliary loss L_GA = lambda * sum_l (1 - g_l / (g_l + eps)) penalizes
layers whose cross-entropy gradient norm g_l collapses. Differentiating it
needs second-order information, so two modes ship: ``monitor`` logs the value
and lets parameters follow the cross-entropy gradient alone, and ``exact``
adds the true second-order term computed as a Hessian-vector product via
central differences of first-order gradients.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .arch import Network, arch_from_text, arch_to_text, build
from .metrics import evaluate
from .tensor import GradientError, Tensor

CHECKPOINT_MAGIC = b"SNNW"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 0.001
    decay_factor: float = 0.1
    decay_epochs: tuple = (50, 100)
    batch_size: int = 12
    max_epochs: int = 120
    patience: int = 10
    seed: int = 42
    ga_lambda: float = 0.1
    epsilon: float = 1e-8
    time_steps: int = 4
    ga_mode: str = "monitor"
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0.0 < self.decay_factor < 1.0):
            raise ValueError(f"decay_factor must be in (0,1), got {self.decay_factor}")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("patience, batch_size and max_epochs must be >= 1")
        if self.time_steps < 1:
            raise ValueError(f"time_steps must be >= 1, got {self.time_steps}")
        if self.ga_lambda < 0:
            raise ValueError(f"lambda must be >= 0, got {self.ga_lambda}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.ga_mode not in ("monitor", "exact"):
            raise ValueError(f"ga_mode must be monitor or exact, got {self.ga_mode!r}")


@dataclass
class LossBreakdown:
    ce: float
    ga: float
    total: float
    per_layer_grad_norms: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of softmax(logits); differentiable."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise T.ShapeError(
            f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(
            f"labels must lie in [0, {c}), got range "
            f"[{labels.min()}, {labels.max()}]")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    denom = ez.sum(axis=1, keepdims=True)
    logp = (z - zmax) - np.log(denom)
    loss = np.asarray(-logp[np.arange(n), labels].mean(dtype=np.float32)).reshape(())
    probs = ez / denom

    def backward_fn(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        return (d * (np.float32(g.reshape(())) / np.float32(n)),)

    return T.record_op("cross_entropy", (logits,), loss, backward_fn)


def mean_over_steps(logits_steps) -> Tensor:
    acc = logits_steps[0]
    for step_logits in logits_steps[1:]:
        acc = T.add(acc, step_logits, name="logit_sum")
    if len(logits_steps) > 1:
        acc = T.affine(acc, 1.0 / len(logits_steps), 0.0, name="logit_mean")
    return acc


def ce_loss_over_time(logits_steps, labels) -> Tensor:
    """Softmax cross-entropy of the time-averaged logits."""
    if not logits_steps:
        raise ValueError("need at least one time step of logits")
    return cross_entropy(mean_over_steps(logits_steps), labels)


def _norm_values(per_layer_grad_norms):
    values = []
    for item in per_layer_grad_norms:
        values.append(float(item[1]) if isinstance(item, tuple) else float(item))
    return values


def ga_loss(per_layer_grad_norms, ga_lambda: float, epsilon: float) -> float:
    """lambda * sum_l (1 - g_l/(g_l + eps)); each summand lies in (0, 1]."""
    total = 0.0
    for g in _norm_values(per_layer_grad_norms):
        if g < 0:
            raise ValueError(f"gradient norms must be >= 0, got {g}")
        total += 1.0 - g / (g + epsilon)
    return ga_lambda * total


def total_loss(ce: float, ga: float) -> float:
    return ce + ga


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

class AdamState:
    """First/second moment buffers keyed by parameter identity."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[int, np.ndarray] = {}
        self.v: dict[int, np.ndarray] = {}


def adam_step(params, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update over ``params`` in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p in params:
        g = p.grad
        if g is None:
            continue
        if np.isnan(g).any():
            raise GradientError(f"NaN gradient in parameter '{p.name}'")
        key = id(p)
        m = state.m.get(key)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        else:
            v = state.v[key]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[key] = m
        state.v[key] = v
        m_hat = m / np.float32(bc1)
        v_hat = v / np.float32(bc2)
        p.data = p.data - np.float32(lr) * m_hat / (np.sqrt(v_hat) + np.float32(state.eps))


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """Step decay: the base rate shrinks by decay_factor at each decay epoch."""
    hits = sum(1 for d in config.decay_epochs if d <= epoch)
    return config.lr * (config.decay_factor ** hits)


def early_stop_check(val_history, patience: int) -> bool:
    """True once the best value is ``patience`` epochs old (ties don't count
    as improvement)."""
    if not val_history:
        return False
    best_idx = 0
    best = val_history[0]
    for i, v in enumerate(val_history):
        if v > best:
            best = v
            best_idx = i
    return (len(val_history) - 1 - best_idx) >= patience


def log_grad_norms(network: Network):
    """Per-conv-layer L2 norm of the weight gradient, in build order."""
    norms = []
    for layer in network.conv_layers():
        g = layer.weight.grad
        if g is None:
            raise GradientError(
                f"gradient norms requested before backward (layer '{layer.name}')")
        norms.append((layer.name, float(np.sqrt(np.sum(g.astype(np.float64) ** 2)))))
    return norms


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(network: Network, path: str) -> None:
    """Binary dump: magic, version, arch text, then raw f32 tensors in build order."""
    arch_bytes = arch_to_text(network.spec).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(arch_bytes)))
        f.write(arch_bytes)
        for p in network.parameters():
            dims = p.data.shape
            f.write(struct.pack("<I", len(dims)))
            f.write(struct.pack(f"<{len(dims)}I", *dims))
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


class _Cursor:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValueError(f"{self.path}: truncated checkpoint "
                             f"(wanted {n} bytes at offset {self.pos})")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: str) -> Network:
    """Rebuild the network described in the file and restore its weights."""
    with open(path, "rb") as f:
        blob = f.read()
    cur = _Cursor(blob, path)
    magic = cur.take(4)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
    version = cur.u32()
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    arch_text = cur.take(cur.u32()).decode("utf-8")
    network = build(arch_from_text(arch_text))
    for p in network.parameters():
        rank = cur.u32()
        dims = tuple(cur.u32() for _ in range(rank))
        if dims != p.data.shape:
            raise ValueError(f"{path}: tensor shape {dims} does not match "
                             f"expected {p.data.shape} for '{p.name}'")
        count = int(np.prod(dims)) if dims else 1
        p.data = np.frombuffer(cur.take(count * 4), dtype="<f4").reshape(dims).copy()
    if cur.pos != len(blob):
        raise ValueError(f"{path}: {len(blob) - cur.pos} trailing bytes after tensors")
    return network


# ---------------------------------------------------------------------------
# exact gradient-aware mode (Hessian-vector product by finite differences)
# ---------------------------------------------------------------------------

def _ce_weight_grads(network: Network, images: np.ndarray, labels: np.ndarray,
                     smooth: bool) -> dict:
    """Fresh cross-entropy weight gradients at the network's current weights."""
    params = network.parameters()
    saved = [p.grad for p in params]
    with T.recording() as tape:
        fwd = network.forward(images, smooth=smooth)
        loss = ce_loss_over_time(fwd.logits_steps, labels)
        for p in params:
            p.grad = None
        T.backward(tape, loss)
        grads = {id(layer.weight): layer.weight.grad.copy()
                 for layer in network.conv_layers()}
    for p, g in zip(params, saved):
        p.grad = g
    return grads


def apply_exact_ga(network: Network, images: np.ndarray, labels: np.ndarray,
                   ga_lambda: float, epsilon: float, smooth: bool = False,
                   step_scale: float = 1e-3) -> None:
    """Add the second-order gradient of L_GA onto the existing weight grads.

    With g_l = ||v_l|| (v_l the cross-entropy gradient of layer l's weights),
    dL_GA/dtheta = H @ u where u places -lambda*eps/((g_l+eps)^2 * g_l) * v_l
    in each layer's slot. The product is evaluated as a central difference of
    cross-entropy gradients along u. Layers with vanishing g_l are skipped
    (their summand sits at its maximum and has no defined direction).
    """
    weights = [layer.weight for layer in network.conv_layers()]
    direction = {}
    sq_norm = 0.0
    for w in weights:
        if w.grad is None:
            raise GradientError("exact GA mode needs the cross-entropy backward first")
        v = w.grad.astype(np.float64)
        g = float(np.sqrt(np.sum(v * v)))
        if g < 1e-12:
            continue
        coeff = -ga_lambda * epsilon / ((g + epsilon) ** 2 * g)
        u = coeff * v
        direction[id(w)] = u
        sq_norm += float(np.sum(u * u))
    if not direction or sq_norm == 0.0:
        return
    h = step_scale / np.sqrt(sq_norm)

    saved = {id(w): w.data.copy() for w in weights}
    for w in weights:
        if id(w) in direction:
            w.data = (saved[id(w)] + h * direction[id(w)]).astype(np.float32)
    plus = _ce_weight_grads(network, images, labels, smooth)
    for w in weights:
        if id(w) in direction:
            w.data = (saved[id(w)] - h * direction[id(w)]).astype(np.float32)
    minus = _ce_weight_grads(network, images, labels, smooth)
    for w in weights:
        w.data = saved[id(w)]
        hvp = (plus[id(w)].astype(np.float64) - minus[id(w)].astype(np.float64)) / (2.0 * h)
        w.grad = (w.grad + hvp.astype(np.float32))


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    ce: float
    ga: float
    val_acc: float
    firing_rate: float
    train_acc: float
    grad_norms: list


@dataclass
class TrainResult:
    history: list
    best_val_acc: float
    best_epoch: int
    final_train_acc: float
    epochs_run: int
    stop_reason: str
    network: Network


def predict(network: Network, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Class predictions from the time-averaged logits, inference mode."""
    out = np.empty(images.shape[0], dtype=np.int64)
    for lo in range(0, images.shape[0], batch_size):
        chunk = images[lo:lo + batch_size]
        fwd = network.forward(chunk)
        out[lo:lo + chunk.shape[0]] = np.argmax(mean_over_steps(fwd.logits_steps).data, axis=1)
    return out


def train_network(network: Network, train_images: np.ndarray, train_labels: np.ndarray,
                  val_images: np.ndarray, val_labels: np.ndarray,
                  config: TrainConfig, out_dir=None) -> TrainResult:
    """Run the full regimen and restore the best-validation weights at the end."""
    params = network.parameters()
    adam = AdamState()
    rng = np.random.default_rng(config.seed)
    n = train_images.shape[0]
    class_count = network.spec.num_classes

    history: list[EpochLog] = []
    val_history: list[float] = []
    best_val = -1.0
    best_epoch = -1
    best_weights = None
    stop_reason = "max-epochs"

    for epoch in range(config.max_epochs):
        lr = lr_at_epoch(epoch, config)
        perm = rng.permutation(n)
        ce_sum = ga_sum = loss_sum = rate_sum = 0.0
        correct = 0
        batches = 0
        last_norms: list = []
        for lo in range(0, n, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            xb = train_images[idx]
            yb = train_labels[idx]
            with T.recording() as tape:
                fwd = network.forward(xb)
                ce_t = ce_loss_over_time(fwd.logits_steps, yb)
                for p in params:
                    p.grad = None
                T.backward(tape, ce_t)
            norms = log_grad_norms(network)
            ga_val = ga_loss(norms, config.ga_lambda, config.epsilon)
            if config.ga_mode == "exact":
                apply_exact_ga(network, xb, yb, config.ga_lambda, config.epsilon)
            adam_step(params, adam, lr)

            preds = np.argmax(mean_over_steps(fwd.logits_steps).data, axis=1)
            correct += int((preds == yb).sum())
            ce_val = ce_t.item()
            ce_sum += ce_val
            ga_sum += ga_val
            loss_sum += total_loss(ce_val, ga_val)
            rate_sum += fwd.stats.firing_rate
            last_norms = norms
            batches += 1

        val_preds = predict(network, val_images, max(config.batch_size, 64))
        val_acc = evaluate(val_preds, val_labels, class_count).accuracy
        val_history.append(val_acc)
        entry = EpochLog(
            epoch=epoch, lr=lr,
            train_loss=loss_sum / batches, ce=ce_sum / batches, ga=ga_sum / batches,
            val_acc=val_acc, firing_rate=rate_sum / batches,
            train_acc=correct / n, grad_norms=last_norms)
        history.append(entry)

        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_weights = [p.data.copy() for p in params]
        if early_stop_check(val_history, config.patience):
            stop_reason = "early-stop"
            break

    if best_weights is not None:
        for p, w in zip(params, best_weights):
            p.data = w

    result = TrainResult(
        history=history, best_val_acc=best_val, best_epoch=best_epoch,
        final_train_acc=history[-1].train_acc if history else 0.0,
        epochs_run=len(history), stop_reason=stop_reason, network=network)
    if out_dir is not None:
        write_logs(result, out_dir)
    return result


def write_logs(result: TrainResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "train_log.csv"), "w", encoding="utf-8") as f:
        f.write("epoch,lr,train_loss,ce,ga,val_acc,firing_rate\n")
        for e in result.history:
            f.write(f"{e.epoch},{e.lr!r},{e.train_loss!r},{e.ce!r},{e.ga!r},"
                    f"{e.val_acc!r},{e.firing_rate!r}\n")
        f.write(f"# stop={result.stop_reason} best_epoch={result.best_epoch}\n")
    with open(os.path.join(out_dir, "grad_norms.csv"), "w", encoding="utf-8") as f:
        f.write("epoch,layer,grad_norm\n")
        for e in result.history:
            for layer, norm in e.grad_norms:
                f.write(f"{e.epoch},{layer},{norm!r}\n")
