"""One-hidden-layer ReLU classifier trained with plain minibatch SGD.

Every teacher and student in the simulation is a :class:`DenseNetwork`.
Networks are immutable values: training returns a new network and never
touches its input.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

_MAGIC = b"OWDLNET\0"
_FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    temperature: float = 2.0
    alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class DenseNetwork:
    """input -> ReLU hidden -> logits. Parameter arrays are read-only."""

    layer_dims: tuple[int, int, int]
    weights: tuple[np.ndarray, np.ndarray]
    biases: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"layer_dims must be 3 positive ints, got {self.layer_dims}")
        object.__setattr__(self, "layer_dims", dims)
        ws = tuple(np.array(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.array(b, dtype=np.float64) for b in self.biases)
        expect_w = [(dims[0], dims[1]), (dims[1], dims[2])]
        expect_b = [(dims[1],), (dims[2],)]
        if [w.shape for w in ws] != expect_w or [b.shape for b in bs] != expect_b:
            raise ValueError("parameter shapes do not match layer_dims")
        for a in ws + bs:
            if not np.all(np.isfinite(a)):
                raise ValueError("network parameters must be finite")
            a.flags.writeable = False
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def num_classes(self) -> int:
        return self.layer_dims[2]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    def parameters(self) -> list[np.ndarray]:
        return [self.weights[0], self.biases[0], self.weights[1], self.biases[1]]

    def same_parameters(self, other: "DenseNetwork") -> bool:
        return self.layer_dims == other.layer_dims and all(
            np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters())
        )

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(to_bytes(self)).hexdigest()


def _from_params(dims, params) -> DenseNetwork:
    w1, b1, w2, b2 = params
    return DenseNetwork(dims, (w1, w2), (b1, b2))


def init_network(layer_dims: Sequence[int], seed: int) -> DenseNetwork:
    """Glorot-uniform weights, zero biases."""
    n, h, c = (int(d) for d in layer_dims)
    rng = np.random.default_rng(seed)
    a1 = np.sqrt(6.0 / (n + h))
    a2 = np.sqrt(6.0 / (h + c))
    w1 = rng.uniform(-a1, a1, size=(n, h))
    w2 = rng.uniform(-a2, a2, size=(h, c))
    return DenseNetwork((n, h, c), (w1, w2), (np.zeros(h), np.zeros(c)))


def zero_network(layer_dims: Sequence[int]) -> DenseNetwork:
    n, h, c = (int(d) for d in layer_dims)
    return DenseNetwork((n, h, c), (np.zeros((n, h)), np.zeros((h, c))), (np.zeros(h), np.zeros(c)))


def forward(net: DenseNetwork, x) -> np.ndarray:
    """Logits for a single input (1-D) or a batch (2-D, one row per input)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim or x.ndim not in (1, 2):
        raise ValueError(f"expected input of dim {net.input_dim}, got shape {x.shape}")
    hidden = np.maximum(x @ net.weights[0] + net.biases[0], 0.0)
    return hidden @ net.weights[1] + net.biases[1]


def softmax_temp(logits, tau: float = 1.0) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(logits, dtype=np.float64) / tau
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def check_probability_map(p, atol: float = 1e-6) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probability map must be a finite non-negative vector")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"probability map sums to {p.sum()}, not 1")
    return p


def temper(probs, tau: float) -> np.ndarray:
    """Re-temper a tau=1 probability map: softmax(log p / tau)."""
    logp = np.log(np.maximum(np.asarray(probs, dtype=np.float64), 1e-300))
    return softmax_temp(logp, tau)


# --- loss and backprop -------------------------------------------------------


def _loss_and_grads(params, x, y, soft_t, has_soft, tau, alpha):
    """Mean loss over the batch and gradients w.r.t. (w1, b1, w2, b2).

    soft_t holds teacher maps already tempered at tau; rows with has_soft False
    are trained on plain cross-entropy.
    """
    w1, b1, w2, b2 = params
    n = x.shape[0]
    z1 = x @ w1 + b1
    h = np.maximum(z1, 0.0)
    z2 = h @ w2 + b2

    zmax = z2.max(axis=1, keepdims=True)
    shifted = z2 - zmax
    lse = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - lse[:, None]
    p = np.exp(logp)
    rows = np.arange(n)
    ce = -logp[rows, y]

    dz = p.copy()
    dz[rows, y] -= 1.0

    if has_soft is not None and alpha > 0 and np.any(has_soft):
        s = z2 / tau
        s = s - s.max(axis=1, keepdims=True)
        logq = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
        q = np.exp(logq)
        with np.errstate(divide="ignore", invalid="ignore"):
            kl_terms = np.where(soft_t > 0, soft_t * (np.log(np.where(soft_t > 0, soft_t, 1.0)) - logq), 0.0)
        kl = kl_terms.sum(axis=1)
        per_sample = np.where(has_soft, alpha * tau * tau * kl + (1 - alpha) * ce, ce)
        scale = np.where(has_soft, 1 - alpha, 1.0)[:, None]
        dz = scale * dz + np.where(has_soft[:, None], alpha * tau * (q - soft_t), 0.0)
    else:
        per_sample = ce

    dz /= n
    dw2 = h.T @ dz
    db2 = dz.sum(axis=0)
    dh = dz @ w2.T
    dz1 = dh * (z1 > 0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return float(per_sample.mean()), [dw1, db1, dw2, db2]


def _stack(dataset, num_classes: int, tau: float | None):
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    x = np.stack([np.asarray(s.x, dtype=np.float64) for s in dataset])
    y = np.array([int(s.y) for s in dataset], dtype=np.int64)
    if y.min() < 0 or y.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    if tau is None:
        return x, y, None, None
    has_soft = np.array([s.soft_label is not None for s in dataset])
    soft = np.zeros((len(dataset), num_classes))
    for i, s in enumerate(dataset):
        if s.soft_label is not None:
            soft[i] = temper(check_probability_map(s.soft_label), tau)
    return x, y, soft, has_soft


@dataclass
class FitResult:
    net: DenseNetwork
    epoch_losses: list[float] = field(default_factory=list)


def fit_arrays(net, x, y, soft_t, has_soft, cfg: TrainConfig) -> FitResult:
    params = [p.copy() for p in net.parameters()]
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            st = soft_t[idx] if soft_t is not None else None
            hs = has_soft[idx] if has_soft is not None else None
            loss, grads = _loss_and_grads(params, x[idx], y[idx], st, hs, cfg.temperature, cfg.alpha)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {start}")
            total += loss * len(idx)
            for p, g in zip(params, grads):
                p -= cfg.learning_rate * g
        losses.append(total / n)
    if losses[-1] > losses[0]:
        log.warning("final epoch loss %.4f exceeds first epoch loss %.4f", losses[-1], losses[0])
    return FitResult(_from_params(net.layer_dims, params), losses)


def train_supervised(net: DenseNetwork, dataset, cfg: TrainConfig) -> DenseNetwork:
    """Cross-entropy on hard labels. ``dataset`` items need ``.x`` and ``.y``."""
    x, y, _, _ = _stack(dataset, net.num_classes, None)
    return fit_arrays(net, x, y, None, None, cfg).net


def distill(student: DenseNetwork, transfer_set, cfg: TrainConfig) -> DenseNetwork:
    """Hinton-style distillation.

    Samples carrying a ``soft_label`` get
    ``alpha * tau**2 * KL(teacher_tau || student_tau) + (1 - alpha) * CE``;
    samples without one get plain CE on their hard label.
    """
    x, y, soft, has_soft = _stack(transfer_set, student.num_classes, cfg.temperature)
    return fit_arrays(student, x, y, soft, has_soft, cfg).net


def predict(net: DenseNetwork, x) -> np.ndarray:
    """Top-1 class per row; ties go to the lowest index."""
    return np.argmax(forward(net, np.atleast_2d(x)), axis=1)


def accuracy(net: DenseNetwork, dataset) -> float:
    x = np.stack([s.x for s in dataset])
    y = np.array([s.y for s in dataset])
    return float(np.mean(predict(net, x) == y))


# --- numerical self-check ----------------------------------------------------


def loss_and_grads(net: DenseNetwork, sample, cfg: TrainConfig | None = None):
    cfg = cfg or TrainConfig()
    x, y, soft, has_soft = _stack([sample], net.num_classes, cfg.temperature)
    return _loss_and_grads([p.copy() for p in net.parameters()], x, y, soft, has_soft, cfg.temperature, cfg.alpha)


GradFn = Callable[[list, np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, float], tuple]


def gradient_check(
    net: DenseNetwork,
    sample,
    cfg: TrainConfig | None = None,
    num_checks: int = 60,
    step: float = 1e-4,
    seed: int = 0,
    grad_fn: GradFn = _loss_and_grads,
) -> float:
    """Max relative error between backprop and central finite differences.

    Checks ``num_checks`` randomly chosen scalar parameters. ``grad_fn`` exists
    so tests can inject a broken backprop.
    """
    cfg = cfg or TrainConfig()
    x, y, soft, has_soft = _stack([sample], net.num_classes, cfg.temperature)
    params = [p.copy() for p in net.parameters()]
    _, grads = grad_fn(params, x, y, soft, has_soft, cfg.temperature, cfg.alpha)

    rng = np.random.default_rng(seed)
    sizes = np.array([p.size for p in params])
    picks = rng.choice(sizes.sum(), size=min(num_checks, sizes.sum()), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = np.unravel_index(flat - offsets[k], params[k].shape)
        orig = params[k][idx]
        params[k][idx] = orig + step
        up, _ = _loss_and_grads(params, x, y, soft, has_soft, cfg.temperature, cfg.alpha)
        params[k][idx] = orig - step
        down, _ = _loss_and_grads(params, x, y, soft, has_soft, cfg.temperature, cfg.alpha)
        params[k][idx] = orig
        numeric = (up - down) / (2 * step)
        analytic = grads[k][idx]
        denom = max(abs(numeric) + abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


# --- snapshot format ---------------------------------------------------------
# magic(8) | version u32 | dims 3*u32 | w1 b1 w2 b2 as little-endian f64, row-major


def to_bytes(net: DenseNetwork) -> bytes:
    head = _MAGIC + struct.pack("<I3I", _FORMAT_VERSION, *net.layer_dims)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.parameters())
    return head + body


def from_bytes(blob: bytes) -> DenseNetwork:
    if blob[:8] != _MAGIC:
        raise ValueError("not a network snapshot")
    version, n, h, c = struct.unpack_from("<I3I", blob, 8)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    shapes = [(n, h), (h,), (h, c), (c,)]
    pos = 8 + 16
    params = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
        params.append(arr.astype(np.float64))
        pos += 8 * count
    if pos != len(blob):
        raise ValueError("trailing bytes in network snapshot")
    return _from_params((n, h, c), params)
