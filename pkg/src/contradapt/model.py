"""A small ReLU MLP with explicit forward/backward passes.

Layout: input -> ReLU hidden stack -> linear bottleneck -> linear logits.
The bottleneck and logits activations are the two tapped layers where
external discrepancy gradients can be injected during the backward pass.
Everything is plain float64 numpy; no autodiff framework is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TAPPED_LAYERS = ("bottleneck", "logits")
_LOG_EPS = 1e-12
CHECKPOINT_HEADER = "contradapt-checkpoint v1"


@dataclass
class ModelParams:
    """Weights and biases; also reused as the container for gradients/velocity."""

    hidden_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    bottleneck_weight: np.ndarray
    bottleneck_bias: np.ndarray
    logits_weight: np.ndarray
    logits_bias: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed traversal order."""
        out: list[np.ndarray] = []
        for w, b in zip(self.hidden_weights, self.hidden_biases):
            out.extend((w, b))
        out.extend((self.bottleneck_weight, self.bottleneck_bias))
        out.extend((self.logits_weight, self.logits_bias))
        return out

    @property
    def in_dim(self) -> int:
        first = self.hidden_weights[0] if self.hidden_weights else self.bottleneck_weight
        return first.shape[0]

    @property
    def n_classes(self) -> int:
        return self.logits_weight.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            hidden_weights=[w.copy() for w in self.hidden_weights],
            hidden_biases=[b.copy() for b in self.hidden_biases],
            bottleneck_weight=self.bottleneck_weight.copy(),
            bottleneck_bias=self.bottleneck_bias.copy(),
            logits_weight=self.logits_weight.copy(),
            logits_bias=self.logits_bias.copy(),
        )


@dataclass
class FeatureStack:
    """Cached activations of one forward pass."""

    inputs: np.ndarray
    hidden: list[np.ndarray]
    bottleneck: np.ndarray
    logits: np.ndarray
    probs: np.ndarray

    def tapped(self) -> dict[str, np.ndarray]:
        return {"bottleneck": self.bottleneck, "logits": self.logits}


@dataclass(frozen=True)
class LrSchedule:
    """Inverse-decay learning rate: eta(p) = eta0 / (1 + a * p) ** b.

    ``p`` is training progress ``step / total_steps`` in [0, 1];  per-group
    multipliers scale the rate for the matching parameter block.
    """

    eta0: float = 1e-3
    a: float = 10.0
    b: float = 0.75
    momentum: float = 0.9
    total_steps: int = 1000
    hidden_lr_mult: float = 1.0
    bottleneck_lr_mult: float = 1.0
    logits_lr_mult: float = 10.0

    def __post_init__(self) -> None:
        if self.eta0 <= 0 or self.a <= 0 or self.b <= 0:
            raise ValueError("eta0, a, b must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")

    def eta_at(self, p: float) -> float:
        if not 0.0 <= p <= 1.0:
            raise ValueError("progress must lie in [0, 1]")
        return self.eta0 / (1.0 + self.a * p) ** self.b


def init_params(
    rng: np.random.Generator,
    in_dim: int,
    hidden_sizes,
    bottleneck_dim: int,
    n_classes: int,
) -> ModelParams:
    """Symmetric uniform fan-in init (weights ~ U(+-1/sqrt(fan_in)), zero biases)."""
    if in_dim < 1 or bottleneck_dim < 1 or n_classes < 2:
        raise ValueError("need in_dim >= 1, bottleneck_dim >= 1, n_classes >= 2")
    sizes = [int(h) for h in hidden_sizes]
    if any(h < 1 for h in sizes):
        raise ValueError("hidden sizes must be >= 1")

    def _layer(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)

    hidden_w, hidden_b = [], []
    width = in_dim
    for h in sizes:
        w, b = _layer(width, h)
        hidden_w.append(w)
        hidden_b.append(b)
        width = h
    bw, bb = _layer(width, bottleneck_dim)
    lw, lb = _layer(bottleneck_dim, n_classes)
    return ModelParams(hidden_w, hidden_b, bw, bb, lw, lb)


def zeros_like_params(params: ModelParams) -> ModelParams:
    return ModelParams(
        hidden_weights=[np.zeros_like(w) for w in params.hidden_weights],
        hidden_biases=[np.zeros_like(b) for b in params.hidden_biases],
        bottleneck_weight=np.zeros_like(params.bottleneck_weight),
        bottleneck_bias=np.zeros_like(params.bottleneck_bias),
        logits_weight=np.zeros_like(params.logits_weight),
        logits_bias=np.zeros_like(params.logits_bias),
    )


init_velocity = zeros_like_params


def add_params_(dst: ModelParams, src: ModelParams) -> ModelParams:
    """In-place elementwise accumulation of one gradient container into another."""
    for d, s in zip(dst.arrays(), src.arrays()):
        d += s
    return dst


def forward(params: ModelParams, inputs) -> FeatureStack:
    """Run the network, caching every activation needed for backward."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2:
        raise ValueError("inputs must be a 2-d array (n, d)")
    if x.shape[1] != params.in_dim:
        raise ValueError(f"input width {x.shape[1]} != model width {params.in_dim}")
    hidden: list[np.ndarray] = []
    h = x
    for w, b in zip(params.hidden_weights, params.hidden_biases):
        h = np.maximum(h @ w + b, 0.0)
        hidden.append(h)
    bottleneck = h @ params.bottleneck_weight + params.bottleneck_bias
    logits = bottleneck @ params.logits_weight + params.logits_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return FeatureStack(inputs=x, hidden=hidden, bottleneck=bottleneck, logits=logits, probs=probs)


def _check_labels(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    y = np.asarray(labels, dtype=int)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise ValueError("probs must be a nonempty (n, M) array")
    if y.shape != (probs.shape[0],):
        raise ValueError("one label per row required")
    if y.size and (y.min() < 0 or y.max() >= probs.shape[1]):
        raise ValueError("labels outside [0, n_classes)")
    return y


def cross_entropy(probs, labels) -> float:
    """Mean negative log-likelihood; log arguments are clamped at 1e-12."""
    p = np.asarray(probs, dtype=float)
    y = _check_labels(p, labels)
    picked = p[np.arange(p.shape[0]), y]
    return float(-np.mean(np.log(np.maximum(picked, _LOG_EPS))))


def cross_entropy_grad(probs, labels) -> np.ndarray:
    """Gradient of mean CE w.r.t. logits: (softmax - onehot) / n."""
    p = np.asarray(probs, dtype=float)
    y = _check_labels(p, labels)
    g = p.copy()
    g[np.arange(p.shape[0]), y] -= 1.0
    return g / p.shape[0]


def backward(
    params: ModelParams,
    stack: FeatureStack,
    logits_grad: np.ndarray | None = None,
    tap_grads: dict[str, np.ndarray] | None = None,
    beta: float = 1.0,
) -> ModelParams:
    """Reverse-mode gradients for one cached forward pass.

    ``logits_grad`` is the classification-loss gradient at the logits;
    ``tap_grads`` maps tapped layer names to externally computed feature
    gradients which enter scaled by ``beta``.  Either may be omitted.
    Returns a ModelParams-shaped container of parameter gradients.
    """
    taps = tap_grads or {}
    unknown = set(taps) - set(TAPPED_LAYERS)
    if unknown:
        raise ValueError(f"unknown tap layers {sorted(unknown)}")
    d_logits = np.zeros_like(stack.logits)
    if logits_grad is not None:
        lg = np.asarray(logits_grad, dtype=float)
        if lg.shape != stack.logits.shape:
            raise ValueError("logits_grad shape mismatch")
        d_logits += lg
    if "logits" in taps:
        tg = np.asarray(taps["logits"], dtype=float)
        if tg.shape != stack.logits.shape:
            raise ValueError("logits tap gradient shape mismatch")
        d_logits += beta * tg
    grads = zeros_like_params(params)
    grads.logits_weight[:] = stack.bottleneck.T @ d_logits
    grads.logits_bias[:] = d_logits.sum(axis=0)
    d_bottleneck = d_logits @ params.logits_weight.T
    if "bottleneck" in taps:
        tg = np.asarray(taps["bottleneck"], dtype=float)
        if tg.shape != stack.bottleneck.shape:
            raise ValueError("bottleneck tap gradient shape mismatch")
        d_bottleneck = d_bottleneck + beta * tg
    last_hidden = stack.hidden[-1] if stack.hidden else stack.inputs
    grads.bottleneck_weight[:] = last_hidden.T @ d_bottleneck
    grads.bottleneck_bias[:] = d_bottleneck.sum(axis=0)
    d_h = d_bottleneck @ params.bottleneck_weight.T
    for i in range(len(params.hidden_weights) - 1, -1, -1):
        d_pre = d_h * (stack.hidden[i] > 0.0)
        below = stack.hidden[i - 1] if i > 0 else stack.inputs
        grads.hidden_weights[i][:] = below.T @ d_pre
        grads.hidden_biases[i][:] = d_pre.sum(axis=0)
        d_h = d_pre @ params.hidden_weights[i].T
    return grads


def _lr_multipliers(params: ModelParams, schedule: LrSchedule) -> list[float]:
    mults = [schedule.hidden_lr_mult] * (2 * len(params.hidden_weights))
    mults += [schedule.bottleneck_lr_mult] * 2
    mults += [schedule.logits_lr_mult] * 2
    return mults


def sgd_step(
    params: ModelParams,
    grads: ModelParams,
    velocity: ModelParams,
    schedule: LrSchedule,
    step: int,
) -> float:
    """One momentum-SGD update in place: v <- mu v + g;  theta <- theta - eta_p v.

    Returns the base learning rate used.  Raises on non-finite gradients or
    parameters ("divergence").
    """
    if not 0 <= step < schedule.total_steps:
        raise ValueError(f"step {step} outside schedule of {schedule.total_steps} steps")
    for g in grads.arrays():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"divergence: non-finite gradient at step {step}")
    eta = schedule.eta_at(step / schedule.total_steps)
    for theta, g, v, mult in zip(
        params.arrays(), grads.arrays(), velocity.arrays(), _lr_multipliers(params, schedule)
    ):
        v *= schedule.momentum
        v += g
        theta -= (eta * mult) * v
        if not np.all(np.isfinite(theta)):
            raise ValueError(f"divergence: non-finite parameters at step {step}")
    return eta


def params_to_vector(params: ModelParams) -> np.ndarray:
    return np.concatenate([a.ravel() for a in params.arrays()])


def vector_to_params(vec: np.ndarray, template: ModelParams) -> ModelParams:
    out = zeros_like_params(template)
    if vec.size != sum(a.size for a in out.arrays()):
        raise ValueError("vector length does not match parameter count")
    offset = 0
    for a in out.arrays():
        a[:] = vec[offset : offset + a.size].reshape(a.shape)
        offset += a.size
    return out


def _named_arrays(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    named: list[tuple[str, np.ndarray]] = []
    for i, (w, b) in enumerate(zip(params.hidden_weights, params.hidden_biases)):
        named.append((f"hidden.{i}.weight", w))
        named.append((f"hidden.{i}.bias", b))
    named.append(("bottleneck.weight", params.bottleneck_weight))
    named.append(("bottleneck.bias", params.bottleneck_bias))
    named.append(("logits.weight", params.logits_weight))
    named.append(("logits.bias", params.logits_bias))
    return named


def save_checkpoint(params: ModelParams, path) -> None:
    """Write a flat text checkpoint: name + shape header, then row-major values.

    Floats are rendered with 17 significant digits so reloads are exact.
    """
    lines = [CHECKPOINT_HEADER]
    for name, arr in _named_arrays(params):
        mat = arr.reshape(1, -1) if arr.ndim == 1 else arr
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        for row in mat:
            lines.append(" ".join(f"{v:.17g}" for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ModelParams:
    """Inverse of save_checkpoint; validates the layer inventory."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ValueError(f"{path}: not a recognized checkpoint file")
    entries: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) != 3:
            raise ValueError(f"{path}: malformed header at line {i + 1}")
        name, rows, cols = parts[0], int(parts[1]), int(parts[2])
        block = lines[i + 1 : i + 1 + rows]
        if len(block) != rows:
            raise ValueError(f"{path}: truncated block for {name}")
        mat = np.array([[float(v) for v in row.split()] for row in block])
        if mat.shape != (rows, cols):
            raise ValueError(f"{path}: shape mismatch for {name}")
        entries[name] = mat
        i += 1 + rows

    def _take(name, flat=False):
        if name not in entries:
            raise ValueError(f"{path}: missing array {name}")
        arr = entries.pop(name)
        return arr[0] if flat else arr

    hidden_w, hidden_b = [], []
    j = 0
    while f"hidden.{j}.weight" in entries:
        hidden_w.append(_take(f"hidden.{j}.weight"))
        hidden_b.append(_take(f"hidden.{j}.bias", flat=True))
        j += 1
    params = ModelParams(
        hidden_weights=hidden_w,
        hidden_biases=hidden_b,
        bottleneck_weight=_take("bottleneck.weight"),
        bottleneck_bias=_take("bottleneck.bias", flat=True),
        logits_weight=_take("logits.weight"),
        logits_bias=_take("logits.bias", flat=True),
    )
    if entries:
        raise ValueError(f"{path}: unexpected arrays {sorted(entries)}")
    return params
