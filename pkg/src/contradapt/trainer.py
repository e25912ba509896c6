"""Alternating training loop: cluster target features, filter ambiguous
samples, then interleave class-aware discrepancy steps with classification
steps.

Each outer loop freezes the target pseudo-labels produced by spherical
k-means (initialized from labeled source class centers) and runs K
parameter updates.  Per step the composite gradient is

    grad = grad(source CE) + beta * grad(contrastive discrepancy)

with the discrepancy gradients injected at the bottleneck and logits taps.
Ablation variants swap out individual ingredients; see ``METHODS``.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import filter_targets, source_class_centers, spherical_kmeans
from .data import Dataset
from .discrepancy import LabeledBatch, cdd, cdd_grad
from .kernels import median_kernel_spec
from .model import (
    LrSchedule,
    ModelParams,
    add_params_,
    backward,
    cross_entropy,
    cross_entropy_grad,
    forward,
    init_params,
    init_velocity,
    sgd_step,
    zeros_like_params,
)
from .sampling import BatchPlan, class_aware_batch, draw, uniform_source_batch

log = logging.getLogger(__name__)

METHODS = (
    "source-only",  # classification on source batches only
    "can",          # full method: clustering, filtering, class-aware discrepancy
    "intra-only",   # discrepancy keeps the same-class term, drops the cross-class term
    "no-ao",        # pseudo-labels from instantaneous predictions instead of clustering
    "no-cas",       # class-agnostic discrepancy batches; missing pairs renormalized away
    "pseudo0",      # cluster once at loop 0, then fixed pseudo-label target CE + source CE
    "pseudo1",      # re-cluster each loop, pseudo-label target CE + source CE, no discrepancy
)

_CDD_METHODS = ("can", "intra-only", "no-ao", "no-cas")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one run; everything needed for exact reproduction."""

    method: str = "can"
    seed: int = 0
    loops: int = 20
    steps_per_loop: int = 50
    beta: float = 0.3
    d0: float = 0.05
    n0: int = 3
    classes_per_batch: int = 3
    per_class_source: int = 8
    per_class_target: int = 8
    ce_batch_size: int = 32
    eta0: float = 1e-3
    lr_a: float = 10.0
    lr_b: float = 0.75
    momentum: float = 0.9
    logits_lr_mult: float = 10.0
    hidden_sizes: tuple[int, ...] = (64, 64)
    bottleneck_dim: int = 16
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    bandwidth_multipliers: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    probe_per_class: int = 8

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.loops < 0 or self.steps_per_loop < 1:
            raise ValueError("need loops >= 0 and steps_per_loop >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.0 <= self.d0 <= 1.0 or self.n0 < 0:
            raise ValueError("need d0 in [0, 1] and n0 >= 0")
        if self.probe_per_class < 1:
            raise ValueError("probe_per_class must be >= 1")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(
            self, "bandwidth_multipliers", tuple(float(m) for m in self.bandwidth_multipliers)
        )

    @property
    def total_steps(self) -> int:
        return max(self.loops * self.steps_per_loop, 1)

    def schedule(self) -> LrSchedule:
        return LrSchedule(
            eta0=self.eta0,
            a=self.lr_a,
            b=self.lr_b,
            momentum=self.momentum,
            total_steps=self.total_steps,
            logits_lr_mult=self.logits_lr_mult,
        )

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["hidden_sizes"] = list(self.hidden_sizes)
        out["bandwidth_multipliers"] = list(self.bandwidth_multipliers)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        kwargs = dict(obj)
        for key in ("hidden_sizes", "bandwidth_multipliers"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass
class LoopMetrics:
    """Per-loop record.  ``record()`` is the serialized form; it omits the
    wall time so repeated runs emit byte-identical streams."""

    loop: int
    ce_loss: float
    cdd_estimate: float | None
    cdd_g: float | None
    target_accuracy: float | None
    clustering_accuracy: float | None
    n_kept: int
    n_kept_classes: int
    learning_rate: float
    wall_time_s: float = 0.0

    def record(self) -> dict:
        return {
            "loop": self.loop,
            "ce_loss": self.ce_loss,
            "cdd_estimate": self.cdd_estimate,
            "cdd_g": self.cdd_g,
            "target_accuracy": self.target_accuracy,
            "clustering_accuracy": self.clustering_accuracy,
            "n_kept": self.n_kept,
            "n_kept_classes": self.n_kept_classes,
            "learning_rate": self.learning_rate,
        }


@dataclass
class EvalResult:
    accuracy: float
    per_class: dict[int, float]
    mean_class_accuracy: float


@dataclass
class _PseudoLabels:
    assignments: np.ndarray
    kept_indices: np.ndarray
    kept_classes: tuple[int, ...]


@dataclass
class _ProbeBatch:
    """Fixed ground-truth-labeled batch used only for the diagnostic discrepancy."""

    source_indices: np.ndarray
    source_labels: np.ndarray
    target_indices: np.ndarray
    target_labels: np.ndarray
    classes: tuple[int, ...]


@dataclass
class TrainState:
    """Everything run_loop needs; mutated in place as training advances."""

    params: ModelParams
    velocity: ModelParams
    plan: BatchPlan
    source: Dataset
    target: Dataset
    n_classes: int
    probe: _ProbeBatch | None
    step: int = 0
    loop: int = 0
    pseudo0_cache: _PseudoLabels | None = None


@dataclass
class TrainResult:
    params: ModelParams
    metrics: list[LoopMetrics]
    summary: dict


def evaluate(params: ModelParams, dataset: Dataset) -> EvalResult:
    """Accuracy of argmax-logit predictions (ties resolve to the lowest id)."""
    if not dataset.labeled:
        raise ValueError("dataset has no ground-truth labels")
    preds = predict(params, dataset.features)
    correct = preds == dataset.labels
    per_class: dict[int, float] = {}
    for c in range(int(dataset.labels.max()) + 1):
        mask = dataset.labels == c
        if mask.any():
            per_class[c] = float(correct[mask].mean())
    return EvalResult(
        accuracy=float(correct.mean()),
        per_class=per_class,
        mean_class_accuracy=float(np.mean(list(per_class.values()))),
    )


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return np.argmax(forward(params, features).logits, axis=1)


def _build_probe(rng: np.random.Generator, source: Dataset, target: Dataset,
                 n_classes: int, per_class: int) -> _ProbeBatch | None:
    if not target.labeled:
        return None
    src_parts, tgt_parts = [], []
    for c in range(n_classes):
        src_pool = np.nonzero(source.labels == c)[0]
        tgt_pool = np.nonzero(target.labels == c)[0]
        if src_pool.size == 0 or tgt_pool.size == 0:
            return None
        src_parts.append(draw(rng, src_pool, per_class))
        tgt_parts.append(draw(rng, tgt_pool, per_class))
    labels = np.repeat(np.arange(n_classes), per_class)
    return _ProbeBatch(
        source_indices=np.concatenate(src_parts),
        source_labels=labels,
        target_indices=np.concatenate(tgt_parts),
        target_labels=labels.copy(),
        classes=tuple(range(n_classes)),
    )


def _tapped_layers(stack) -> list[np.ndarray]:
    return [stack.bottleneck, stack.logits]


def _layer_specs(config: TrainConfig, source_layers, target_layers):
    return [
        median_kernel_spec(s, t, multipliers=config.bandwidth_multipliers)
        for s, t in zip(source_layers, target_layers)
    ]


def _cdd_g(state: TrainState, config: TrainConfig) -> float | None:
    """Diagnostic discrepancy on the fixed probe batch with true target labels.

    Read-only with respect to training: nothing computed here feeds back
    into parameters or random streams.
    """
    probe = state.probe
    if probe is None:
        return None
    stack_s = forward(state.params, state.source.features[probe.source_indices])
    stack_t = forward(state.params, state.target.features[probe.target_indices])
    src_layers, tgt_layers = _tapped_layers(stack_s), _tapped_layers(stack_t)
    batch = LabeledBatch(
        source_features=src_layers,
        target_features=tgt_layers,
        source_labels=probe.source_labels,
        target_labels=probe.target_labels,
        class_set=probe.classes,
    )
    specs = _layer_specs(config, src_layers, tgt_layers)
    return float(cdd(specs, batch).total)


def _cluster_target(state: TrainState, config: TrainConfig) -> _PseudoLabels:
    phi_source = forward(state.params, state.source.features).bottleneck
    centers = source_class_centers(phi_source, state.source.labels, state.n_classes)
    phi_target = forward(state.params, state.target.features).bottleneck
    cstate = spherical_kmeans(
        phi_target, centers, max_iters=config.kmeans_max_iters, tol=config.kmeans_tol
    )
    fres = filter_targets(cstate, d0=config.d0, n0=config.n0)
    return _PseudoLabels(
        assignments=cstate.assignments,
        kept_indices=fres.kept_indices,
        kept_classes=fres.kept_classes,
    )


def _discrepancy_grads(state: TrainState, config: TrainConfig, specs_box: list,
                       pseudo: _PseudoLabels | None, grads: ModelParams) -> float | None:
    """One step's discrepancy contribution; returns the batch value (or None).

    ``specs_box`` is a single-element list caching the kernel specs frozen at
    the first batch of the current loop.
    """
    method = config.method
    src, tgt = state.source, state.target
    intra_only = method == "intra-only"
    if method in ("can", "intra-only"):
        if pseudo is None or not pseudo.kept_classes:
            return None
        cas = class_aware_batch(
            state.plan,
            src.labels,
            pseudo.kept_indices,
            pseudo.assignments[pseudo.kept_indices],
            pseudo.kept_classes,
        )
        src_idx, tgt_idx = cas.source_indices, cas.target_indices
        src_labels, tgt_labels = cas.source_labels, cas.target_labels
        class_set = cas.classes
        skip_missing = False
    elif method == "no-ao":
        preds = predict(state.params, tgt.features)
        eligible = np.unique(preds)
        cas = class_aware_batch(
            state.plan, src.labels, np.arange(tgt.n), preds, eligible
        )
        src_idx, tgt_idx = cas.source_indices, cas.target_indices
        src_labels, tgt_labels = cas.source_labels, cas.target_labels
        class_set = cas.classes
        skip_missing = False
    elif method == "no-cas":
        if pseudo is None or pseudo.kept_indices.size == 0:
            return None
        n_src = config.classes_per_batch * config.per_class_source
        n_tgt = config.classes_per_batch * config.per_class_target
        src_idx = draw(state.plan.cas_rng, np.arange(src.n), n_src)
        tgt_idx = draw(state.plan.cas_rng, pseudo.kept_indices, n_tgt)
        src_labels = src.labels[src_idx]
        tgt_labels = pseudo.assignments[tgt_idx]
        class_set = tuple(sorted(set(src_labels.tolist()) | set(tgt_labels.tolist())))
        skip_missing = True
    else:
        return None
    stack_s = forward(state.params, src.features[src_idx])
    stack_t = forward(state.params, tgt.features[tgt_idx])
    src_layers, tgt_layers = _tapped_layers(stack_s), _tapped_layers(stack_t)
    if not specs_box:
        specs_box.append(_layer_specs(config, src_layers, tgt_layers))
    specs = specs_box[0]
    batch = LabeledBatch(
        source_features=src_layers,
        target_features=tgt_layers,
        source_labels=src_labels,
        target_labels=tgt_labels,
        class_set=class_set,
    )
    value = cdd(specs, batch, intra_only=intra_only, skip_missing_pairs=skip_missing)
    if config.beta > 0.0:
        layer_grads = cdd_grad(specs, batch, intra_only=intra_only, skip_missing_pairs=skip_missing)
        taps_s = {"bottleneck": layer_grads[0][0], "logits": layer_grads[1][0]}
        taps_t = {"bottleneck": layer_grads[0][1], "logits": layer_grads[1][1]}
        add_params_(grads, backward(state.params, stack_s, tap_grads=taps_s, beta=config.beta))
        add_params_(grads, backward(state.params, stack_t, tap_grads=taps_t, beta=config.beta))
    return float(value.total)


def run_loop(state: TrainState, config: TrainConfig) -> LoopMetrics:
    """One outer loop: refresh pseudo-labels, then K composite updates."""
    t0 = time.perf_counter()
    method = config.method
    schedule = config.schedule()
    src, tgt = state.source, state.target

    pseudo: _PseudoLabels | None = None
    if method in ("can", "intra-only", "no-cas", "pseudo1"):
        pseudo = _cluster_target(state, config)
    elif method == "pseudo0":
        if state.pseudo0_cache is None:
            state.pseudo0_cache = _cluster_target(state, config)
        pseudo = state.pseudo0_cache

    clustering_accuracy: float | None = None
    n_kept = 0
    n_kept_classes = 0
    if pseudo is not None:
        n_kept = int(pseudo.kept_indices.size)
        n_kept_classes = len(pseudo.kept_classes)
        if tgt.labeled:
            clustering_accuracy = float(np.mean(pseudo.assignments == tgt.labels))
        if n_kept_classes == 0 and method in _CDD_METHODS:
            log.warning(
                "loop %d: no classes pass the filter; running classification-only steps",
                state.loop,
            )
    elif method == "no-ao" and tgt.labeled:
        clustering_accuracy = float(np.mean(predict(state.params, tgt.features) == tgt.labels))

    cdd_g = _cdd_g(state, config)
    lr_start = schedule.eta_at(state.step / schedule.total_steps)

    specs_box: list = []  # kernel specs frozen at this loop's first batch
    ce_values: list[float] = []
    cdd_values: list[float] = []
    for _ in range(config.steps_per_loop):
        grads = zeros_like_params(state.params)
        if method in _CDD_METHODS:
            value = _discrepancy_grads(state, config, specs_box, pseudo, grads)
            if value is not None:
                cdd_values.append(value)
        elif method in ("pseudo0", "pseudo1") and pseudo is not None and n_kept > 0:
            t_idx = draw(state.plan.cas_rng, pseudo.kept_indices, config.ce_batch_size)
            stack_pt = forward(state.params, tgt.features[t_idx])
            pseudo_labels = pseudo.assignments[t_idx]
            add_params_(
                grads,
                backward(
                    state.params,
                    stack_pt,
                    logits_grad=cross_entropy_grad(stack_pt.probs, pseudo_labels),
                ),
            )
        ce_idx = uniform_source_batch(state.plan, src.n)
        stack_ce = forward(state.params, src.features[ce_idx])
        ce_labels = src.labels[ce_idx]
        ce_values.append(cross_entropy(stack_ce.probs, ce_labels))
        add_params_(
            grads,
            backward(
                state.params, stack_ce, logits_grad=cross_entropy_grad(stack_ce.probs, ce_labels)
            ),
        )
        sgd_step(state.params, grads, state.velocity, schedule, state.step)
        state.step += 1

    target_accuracy = evaluate(state.params, tgt).accuracy if tgt.labeled else None
    metrics = LoopMetrics(
        loop=state.loop,
        ce_loss=float(np.mean(ce_values)),
        cdd_estimate=float(np.mean(cdd_values)) if cdd_values else None,
        cdd_g=cdd_g,
        target_accuracy=target_accuracy,
        clustering_accuracy=clustering_accuracy,
        n_kept=n_kept,
        n_kept_classes=n_kept_classes,
        learning_rate=lr_start,
        wall_time_s=time.perf_counter() - t0,
    )
    state.loop += 1
    return metrics


def _check_datasets(source: Dataset, target: Dataset) -> int:
    if source.domain != "source" or target.domain != "target":
        raise ValueError("pass datasets with domain tags 'source' and 'target'")
    if not source.labeled:
        raise ValueError("source dataset must be fully labeled")
    if source.dim != target.dim:
        raise ValueError("source and target feature widths differ")
    n_classes = source.n_classes()
    counts = np.bincount(source.labels, minlength=n_classes)
    if (counts == 0).any():
        raise ValueError("every class needs at least one source sample")
    if target.labeled and target.labels.max() >= n_classes:
        raise ValueError("target labels outside the source class range")
    if n_classes < 2:
        raise ValueError("need at least two classes")
    return n_classes


def train(
    config: TrainConfig,
    source: Dataset,
    target: Dataset,
    init: ModelParams | None = None,
    metrics_writer=None,
) -> TrainResult:
    """Run ``config.loops`` outer loops and summarize the final model.

    Args:
        init: optional warm-start parameters (copied, never mutated).
        metrics_writer: optional callable invoked with each LoopMetrics as
            soon as its loop finishes.
    """
    n_classes = _check_datasets(source, target)
    seq_init, seq_cas, seq_ce, seq_probe = np.random.SeedSequence(config.seed).spawn(4)
    if init is not None:
        if init.in_dim != source.dim or init.n_classes != n_classes:
            raise ValueError("warm-start parameters do not match the data")
        params = init.copy()
    else:
        params = init_params(
            np.random.default_rng(seq_init),
            in_dim=source.dim,
            hidden_sizes=config.hidden_sizes,
            bottleneck_dim=config.bottleneck_dim,
            n_classes=n_classes,
        )
    plan = BatchPlan(
        cas_rng=np.random.default_rng(seq_cas),
        ce_rng=np.random.default_rng(seq_ce),
        classes_per_batch=config.classes_per_batch,
        per_class_source=config.per_class_source,
        per_class_target=config.per_class_target,
        ce_batch_size=config.ce_batch_size,
    )
    probe = _build_probe(
        np.random.default_rng(seq_probe), source, target, n_classes, config.probe_per_class
    )
    state = TrainState(
        params=params,
        velocity=init_velocity(params),
        plan=plan,
        source=source,
        target=target,
        n_classes=n_classes,
        probe=probe,
    )
    t0 = time.perf_counter()
    metrics: list[LoopMetrics] = []
    for _ in range(config.loops):
        m = run_loop(state, config)
        metrics.append(m)
        if metrics_writer is not None:
            metrics_writer(m)
    final_eval = evaluate(state.params, target) if target.labeled else None
    summary = {
        "method": config.method,
        "seed": config.seed,
        "loops_run": len(metrics),
        "steps_run": state.step,
        "final_target_accuracy": final_eval.accuracy if final_eval else None,
        "per_class_accuracy": (
            {str(c): v for c, v in sorted(final_eval.per_class.items())} if final_eval else None
        ),
        "mean_class_accuracy": final_eval.mean_class_accuracy if final_eval else None,
        "final_cdd_g": _cdd_g(state, config),
        "final_ce_loss": metrics[-1].ce_loss if metrics else None,
        "wall_time_s": time.perf_counter() - t0,
    }
    return TrainResult(params=state.params, metrics=metrics, summary=summary)
