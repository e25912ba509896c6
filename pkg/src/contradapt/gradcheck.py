"""Finite-difference verification of every analytic gradient path.

Each check compares an analytic gradient against central differences of the
matching scalar loss.  Errors are normalized by the largest gradient
magnitude in the instance, which keeps the measure meaningful when
individual entries are near zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discrepancy import LabeledBatch, cdd, cdd_grad
from .kernels import KernelSpec, kernel_matrix, kernel_matrix_grad, uniform_spec
from .model import (
    add_params_,
    backward,
    cross_entropy,
    cross_entropy_grad,
    forward,
    init_params,
    params_to_vector,
    vector_to_params,
    zeros_like_params,
)

DEFAULT_STEP = 1e-5


@dataclass(frozen=True)
class ComponentReport:
    name: str
    n_instances: int
    max_rel_error: float
    rtol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.rtol


def central_difference(fn, x: np.ndarray, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central finite differences of scalar ``fn`` at ``x``, entry by entry."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    base = x.copy()
    for i in range(x.size):
        idx = np.unravel_index(i, x.shape)
        orig = base[idx]
        base[idx] = orig + step
        hi = fn(base)
        base[idx] = orig - step
        lo = fn(base)
        base[idx] = orig
        flat[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_gradient_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - f| scaled by the largest magnitude present in either gradient."""
    a = np.asarray(analytic, dtype=float)
    f = np.asarray(numeric, dtype=float)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(f), initial=0.0)), 1e-12)
    return float(np.max(np.abs(a - f), initial=0.0) / scale)


def _random_spec(rng: np.random.Generator) -> KernelSpec:
    k = int(rng.integers(1, 4))
    return uniform_spec(np.exp(rng.uniform(-1.0, 1.5, size=k)))


def check_kernel_gradients(
    n_instances: int = 12, seed: int = 0, rtol: float = 1e-4, step: float = DEFAULT_STEP
) -> ComponentReport:
    """FD-check kernel_matrix_grad on random inputs and upstream weights."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        spec = _random_spec(rng)
        n_a, n_b, d = rng.integers(1, 5), rng.integers(1, 5), rng.integers(1, 4)
        a = rng.normal(size=(n_a, d))
        b = rng.normal(size=(n_b, d))
        up = rng.normal(size=(n_a, n_b))
        grad_a, grad_b = kernel_matrix_grad(spec, a, b, up)
        fd_a = central_difference(lambda m: float(np.sum(up * kernel_matrix(spec, m, b))), a, step)
        fd_b = central_difference(lambda m: float(np.sum(up * kernel_matrix(spec, a, m))), b, step)
        worst = max(
            worst,
            relative_gradient_error(grad_a, fd_a),
            relative_gradient_error(grad_b, fd_b),
        )
    return ComponentReport("kernel_matrix_grad", n_instances, worst, rtol)


def _random_batch(rng: np.random.Generator, n_layers: int):
    n_classes = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, 4)) for _ in range(n_layers)]
    src_labels = np.concatenate(
        [np.full(rng.integers(1, 4), c) for c in range(n_classes)]
    )
    tgt_labels = np.concatenate(
        [np.full(rng.integers(1, 4), c) for c in range(n_classes)]
    )
    src = [rng.normal(size=(src_labels.size, d)) for d in dims]
    tgt = [rng.normal(size=(tgt_labels.size, d)) for d in dims]
    batch = LabeledBatch(
        source_features=src,
        target_features=tgt,
        source_labels=src_labels,
        target_labels=tgt_labels,
        class_set=tuple(range(n_classes)),
    )
    specs = [_random_spec(rng) for _ in range(n_layers)]
    return specs, batch


def check_cdd_gradients(
    n_instances: int = 12, seed: int = 1, rtol: float = 1e-4, step: float = DEFAULT_STEP
) -> ComponentReport:
    """FD-check cdd_grad across every layer's source and target features."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        specs, batch = _random_batch(rng, n_layers=1 + i % 2)
        intra_only = bool(rng.integers(0, 2)) and i % 3 == 0
        grads = cdd_grad(specs, batch, intra_only=intra_only)
        for layer, (gs, gt) in enumerate(grads):
            def loss_s(m, layer=layer):
                feats = [f if k != layer else m for k, f in enumerate(batch.source_features)]
                b = LabeledBatch(feats, batch.target_features, batch.source_labels,
                                 batch.target_labels, batch.class_set)
                return cdd(specs, b, intra_only=intra_only).total

            def loss_t(m, layer=layer):
                feats = [f if k != layer else m for k, f in enumerate(batch.target_features)]
                b = LabeledBatch(batch.source_features, feats, batch.source_labels,
                                 batch.target_labels, batch.class_set)
                return cdd(specs, b, intra_only=intra_only).total

            fd_s = central_difference(loss_s, batch.source_features[layer], step)
            fd_t = central_difference(loss_t, batch.target_features[layer], step)
            worst = max(
                worst,
                relative_gradient_error(gs, fd_s),
                relative_gradient_error(gt, fd_t),
            )
    return ComponentReport("cdd_grad", n_instances, worst, rtol)


def composite_loss_and_grads(params, specs, beta, ce_inputs, ce_labels,
                             src_inputs, src_labels, tgt_inputs, tgt_labels, class_set):
    """Classification CE plus beta * discrepancy through the network.

    Returns the scalar loss and the summed analytic parameter gradients, the
    same composition the trainer applies at each step.
    """
    stack_ce = forward(params, ce_inputs)
    stack_s = forward(params, src_inputs)
    stack_t = forward(params, tgt_inputs)
    batch = LabeledBatch(
        source_features=[stack_s.bottleneck, stack_s.logits],
        target_features=[stack_t.bottleneck, stack_t.logits],
        source_labels=src_labels,
        target_labels=tgt_labels,
        class_set=class_set,
    )
    value = cdd(specs, batch)
    loss = cross_entropy(stack_ce.probs, ce_labels) + beta * value.total
    grads = zeros_like_params(params)
    add_params_(grads, backward(params, stack_ce,
                                logits_grad=cross_entropy_grad(stack_ce.probs, ce_labels)))
    layer_grads = cdd_grad(specs, batch)
    add_params_(grads, backward(params, stack_s, beta=beta,
                                tap_grads={"bottleneck": layer_grads[0][0],
                                           "logits": layer_grads[1][0]}))
    add_params_(grads, backward(params, stack_t, beta=beta,
                                tap_grads={"bottleneck": layer_grads[0][1],
                                           "logits": layer_grads[1][1]}))
    return loss, grads


def check_composite_gradients(
    n_instances: int = 8, seed: int = 2, rtol: float = 1e-4, step: float = DEFAULT_STEP
) -> ComponentReport:
    """FD-check the full composite loss over every parameter of a tiny net."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        d = int(rng.integers(2, 4))
        n_classes = int(rng.integers(2, 4))
        params = init_params(rng, d, hidden_sizes=(4,), bottleneck_dim=3, n_classes=n_classes)
        specs = [uniform_spec((0.5, 2.0)), uniform_spec((1.0,))]
        beta = float(rng.uniform(0.1, 0.6))
        ce_inputs = rng.normal(size=(3, d))
        ce_labels = rng.integers(0, n_classes, size=3)
        src_labels = np.repeat(np.arange(n_classes), 2)
        tgt_labels = np.repeat(np.arange(n_classes), 2)
        src_inputs = rng.normal(size=(src_labels.size, d))
        tgt_inputs = rng.normal(size=(tgt_labels.size, d))
        class_set = tuple(range(n_classes))
        loss_args = (ce_inputs, ce_labels, src_inputs, src_labels,
                     tgt_inputs, tgt_labels, class_set)
        _, grads = composite_loss_and_grads(params, specs, beta, *loss_args)

        def loss_at(vec):
            p = vector_to_params(vec, params)
            return composite_loss_and_grads(p, specs, beta, *loss_args)[0]

        fd = central_difference(loss_at, params_to_vector(params), step)
        worst = max(worst, relative_gradient_error(params_to_vector(grads), fd))
    return ComponentReport("composite_loss_grad", n_instances, worst, rtol)


def run_all(seed: int = 0, rtol: float = 1e-4, step: float = DEFAULT_STEP,
            instances: tuple[int, int, int] = (12, 12, 8)) -> list[ComponentReport]:
    """Run all three components (>= 30 instances total by default)."""
    n_kernel, n_cdd, n_composite = instances
    return [
        check_kernel_gradients(n_kernel, seed=seed, rtol=rtol, step=step),
        check_cdd_gradients(n_cdd, seed=seed + 1, rtol=rtol, step=step),
        check_composite_gradients(n_composite, seed=seed + 2, rtol=rtol, step=step),
    ]
