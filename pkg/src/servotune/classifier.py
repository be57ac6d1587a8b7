"""Limit-cycle classifier: feature extraction, the sensitivity-weighted
softmax, and a two-hidden-layer network trained with ADAM.

The waveform features are gain- and phase-invariant by construction
(amplitude normalization plus alignment to the positive-going zero crossing),
so the network discriminates shape, relative bias and period, which is all
the switching-phase test exposes about the process.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cycles import WAVEFORM_SAMPLES, LimitCycle
from .grid import ProcessGrid


def preprocess(cycle: LimitCycle, include_control: bool = False,
               noise_ratio: float = 0.0) -> np.ndarray:
    """Feature vector: aligned unit waveform, relative bias, log period, and
    the relative measurement-noise level the oscillation was recorded at.

    The noise ratio conditions the classifier on the known test noise: the
    protected relay's realized period and waveform shift systematically with
    the noise amplitude, and the correction terms make that amplitude an
    observable of the test itself.
    """
    w = cycle.error_waveform - cycle.bias
    peak = float(np.max(np.abs(w)))
    if peak <= 0.0:
        raise ValueError("cycle has zero amplitude after bias removal")
    w = w / peak
    n = w.size
    # positive-going zero crossing following the waveform minimum
    start = int(np.argmin(w))
    shift = None
    for k in range(n):
        i = (start + k) % n
        j = (i + 1) % n
        if w[i] <= 0.0 < w[j]:
            frac = -w[i] / (w[j] - w[i])
            shift = i + frac
            break
    if shift is None:
        raise ValueError("no zero crossing found in cycle waveform")
    idx = (shift + np.arange(n)) % n
    lo = np.floor(idx).astype(int) % n
    hi = (lo + 1) % n
    fr = idx - np.floor(idx)
    aligned = w[lo] * (1.0 - fr) + w[hi] * fr
    feats = [aligned, [cycle.bias / peak, math.log(cycle.period), noise_ratio]]
    if include_control:
        u = cycle.control_waveform
        u_peak = max(float(np.max(np.abs(u))), 1e-12)
        feats.insert(1, (u[lo] * (1.0 - fr) + u[hi] * fr) / u_peak)
    return np.concatenate([np.asarray(f, dtype=float) for f in feats])


def feature_length(include_control: bool = False) -> int:
    return WAVEFORM_SAMPLES * (2 if include_control else 1) + 3


# ---------------------------------------------------------------------------
# sensitivity-weighted softmax
# ---------------------------------------------------------------------------

J_CAP = 500.0      # destabilizing pairs enter the loss with this weight, percent

# the loss weights logits with fractional sensitivity (percent / 100); raw
# percent values in the exponent saturate the softmax beyond recovery
J_LOSS_SCALE = 0.01


def modified_softmax(logits: np.ndarray, j_row: np.ndarray) -> np.ndarray:
    """p_i = exp(J_il * a_i) / sum_j exp(J_jl * a_j), overflow-guarded."""
    z = np.minimum(j_row, J_CAP) * logits
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def modified_softmax_loss(logits: np.ndarray, j_row: np.ndarray,
                          label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of the weighted softmax and its exact logit gradient.

    The gradient is J_il * (p_i - y_i); the true-class row weight is zero by
    construction (J_ll = 0), so the true logit receives no direct push.
    """
    p = modified_softmax(logits, j_row)
    loss = -math.log(max(p[label], 1e-300))
    y = np.zeros_like(p)
    y[label] = 1.0
    grad = np.minimum(j_row, J_CAP) * (p - y)
    return loss, grad


# ---------------------------------------------------------------------------
# network
# ---------------------------------------------------------------------------

HIDDEN_SIZES = (3000, 1000)


@dataclass
class MlpModel:
    """Feed-forward rectifier network; weights[i] maps layer i to i+1.

    Inputs are standardized with the training-set statistics carried by the
    model, so callers always pass raw feature vectors.
    """

    weights: list
    biases: list
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None

    def __post_init__(self):
        for w in self.weights:
            if not np.all(np.isfinite(w)):
                raise ValueError("non-finite network weights")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if self.feature_mean is not None:
            h = (h - self.feature_mean) / self.feature_scale
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                np.maximum(h, 0.0, out=h)
        return h[0] if np.ndim(x) == 1 else h

    def save(self, path) -> None:
        doc = {"layer_sizes": self.layer_sizes,
               "weights": [w.ravel().tolist() for w in self.weights],
               "biases": [b.tolist() for b in self.biases],
               "feature_mean": None if self.feature_mean is None else self.feature_mean.tolist(),
               "feature_scale": None if self.feature_scale is None else self.feature_scale.tolist()}
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path) -> "MlpModel":
        with open(path) as fh:
            doc = json.load(fh)
        sizes = doc["layer_sizes"]
        ws = [np.asarray(w, dtype=float).reshape(sizes[i], sizes[i + 1])
              for i, w in enumerate(doc["weights"])]
        bs = [np.asarray(b, dtype=float) for b in doc["biases"]]
        fm = doc.get("feature_mean")
        fs = doc.get("feature_scale")
        return cls(ws, bs,
                   None if fm is None else np.asarray(fm, dtype=float),
                   None if fs is None else np.asarray(fs, dtype=float))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 12
    batch_size: int = 64
    rng_seed: int = 0
    hidden_sizes: tuple = HIDDEN_SIZES
    # weight of the expected-sensitivity-cost term on top of cross entropy;
    # this is what steers residual confusion toward low-cost neighbors
    j_weight: float = 1.0
    # standard deviation of per-batch feature jitter (in standardized units),
    # a cheap regularizer against memorizing individual noise draws
    input_jitter: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("at least one epoch required")


@dataclass
class TrainLogEntry:
    epoch: int
    loss: float
    accuracy: float
    mean_j_cost: float


def train(features: np.ndarray, labels: np.ndarray, j_matrix: np.ndarray,
          cfg: TrainConfig | None = None, log: list | None = None) -> MlpModel:
    """Fit the classifier with ADAM on the sensitivity-aware loss.

    The loss is cross entropy plus the expected sensitivity cost of the
    predictive distribution, sum_i J_il * q_i, so residual confusion is
    steered toward classes that barely degrade the closed loop.  Training is
    deterministic for a fixed seed; a diverging loss raises.
    """
    if cfg is None:
        cfg = TrainConfig()
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("empty training set")
    n_classes = j_matrix.shape[0]
    if y.max() >= n_classes:
        raise ValueError("label outside the grid's class range")
    j_pct = np.minimum(np.nan_to_num(j_matrix, posinf=J_CAP), J_CAP)
    j_w = j_pct * J_LOSS_SCALE * cfg.j_weight

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale < 1e-9] = 1.0
    x = (x - mean) / scale

    rng = np.random.default_rng(cfg.rng_seed)
    sizes = [x.shape[1], *cfg.hidden_sizes, n_classes]
    ws = [rng.standard_normal((a, b)) * math.sqrt(2.0 / a)
          for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros(b) for b in sizes[1:]]
    m_w = [np.zeros_like(w) for w in ws]
    v_w = [np.zeros_like(w) for w in ws]
    m_b = [np.zeros_like(b) for b in bs]
    v_b = [np.zeros_like(b) for b in bs]
    step = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        total_loss = 0.0
        for lo in range(0, order.size, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            if cfg.input_jitter > 0.0:
                xb = xb + rng.standard_normal(xb.shape) * cfg.input_jitter
            # forward
            acts = [xb]
            h = xb
            for i in range(len(ws) - 1):
                h = np.maximum(h @ ws[i] + bs[i], 0.0)
                acts.append(h)
            logits = h @ ws[-1] + bs[-1]
            z = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(z)
            q = e / e.sum(axis=1, keepdims=True)
            rows = np.arange(yb.size)
            jb = j_w[yb]                          # per-example cost row
            cost = (jb * q).sum(axis=1)
            picked = q[rows, yb]
            total_loss += float((-np.log(np.maximum(picked, 1e-300)) + cost).sum())
            hot = np.zeros_like(q)
            hot[rows, yb] = 1.0
            # d/da of [-log q_l + sum_i jb_i q_i]
            g = (q - hot + q * (jb - cost[:, None])) / yb.size
            # backward
            grads_w = [None] * len(ws)
            grads_b = [None] * len(ws)
            d = g
            for i in range(len(ws) - 1, -1, -1):
                grads_w[i] = acts[i].T @ d
                grads_b[i] = d.sum(axis=0)
                if i > 0:
                    d = (d @ ws[i].T) * (acts[i] > 0.0)
            # ADAM
            step += 1
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            for i in range(len(ws)):
                m_w[i] = cfg.beta1 * m_w[i] + (1 - cfg.beta1) * grads_w[i]
                v_w[i] = cfg.beta2 * v_w[i] + (1 - cfg.beta2) * grads_w[i] ** 2
                ws[i] -= cfg.learning_rate * (m_w[i] / c1) / (np.sqrt(v_w[i] / c2) + cfg.epsilon)
                m_b[i] = cfg.beta1 * m_b[i] + (1 - cfg.beta1) * grads_b[i]
                v_b[i] = cfg.beta2 * v_b[i] + (1 - cfg.beta2) * grads_b[i] ** 2
                bs[i] -= cfg.learning_rate * (m_b[i] / c1) / (np.sqrt(v_b[i] / c2) + cfg.epsilon)
        if not math.isfinite(total_loss):
            raise RuntimeError(f"training diverged at epoch {epoch}")
        if log is not None:
            model = MlpModel(ws, bs)
            pred = np.argmax(model.forward(x), axis=1)
            acc = float(np.mean(pred == y))
            jc = float(np.mean(j_pct[y, pred]))
            log.append(TrainLogEntry(epoch, total_loss / x.shape[0], acc, jc))
    return MlpModel(ws, bs, mean, scale)


def classify(model: MlpModel, cycle: LimitCycle, grid: ProcessGrid | None = None,
             include_control: bool = False,
             noise_ratio: float = 0.0) -> tuple[int, np.ndarray]:
    """Predicted class index and a confidence vector.

    The confidence applies the weighted softmax using the predicted class's
    sensitivity row (the true row is unknown at inference time).
    """
    logits = model.forward(preprocess(cycle, include_control, noise_ratio))
    idx = int(np.argmax(logits))
    if grid is not None and grid.j_matrix is not None:
        probs = modified_softmax(logits, np.nan_to_num(grid.j_row(idx), posinf=J_CAP))
    else:
        z = logits - logits.max()
        probs = np.exp(z) / np.exp(z).sum()
    return idx, probs


def training_log_to_csv(log: list, path) -> None:
    data = np.array([[e.epoch, e.loss, e.accuracy, e.mean_j_cost] for e in log])
    np.savetxt(path, data, delimiter=",", comments="",
               header="epoch,loss,accuracy,mean_j_cost")
