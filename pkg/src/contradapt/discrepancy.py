"""Kernel two-sample discrepancies: plain MMD and its class-conditional,
contrastive refinement.

The contrastive objective compares mask-weighted kernel means.  For an
ordered class pair ``(c1, c2)``,

    D(c1, c2) = e1 + e2 - 2 * e3

with ``e1`` the mean kernel value over source pairs labeled ``c1`` (self
pairs included), ``e2`` the same over target pairs labeled ``c2``, and
``e3`` the mean over cross-domain pairs ``(c1, c2)``.  Denominators are the
mask sums, i.e. class-count products.  Aggregating over the classes present
in a batch:

    total = mean_c D(c, c)  -  mean_{c != c'} D(c, c')

so same-class alignment is pulled down while cross-class separation is
pushed up.  Multi-layer inputs sum the per-layer totals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, kernel_matrix, kernel_matrix_grad


@dataclass
class LabeledBatch:
    """Per-layer features plus labels for one source/target mini-batch.

    Attributes:
        source_features: one ``(n_s, d_l)`` array per tapped layer.
        target_features: one ``(n_t, d_l)`` array per tapped layer.
        source_labels: ``(n_s,)`` integer ground-truth labels.
        target_labels: ``(n_t,)`` integer pseudo-labels.
        class_set: sorted class ids the batch is evaluated over.
    """

    source_features: list[np.ndarray]
    target_features: list[np.ndarray]
    source_labels: np.ndarray
    target_labels: np.ndarray
    class_set: tuple[int, ...]

    def __post_init__(self) -> None:
        self.source_features = [np.asarray(f, dtype=float) for f in self.source_features]
        self.target_features = [np.asarray(f, dtype=float) for f in self.target_features]
        self.source_labels = np.asarray(self.source_labels, dtype=int)
        self.target_labels = np.asarray(self.target_labels, dtype=int)
        self.class_set = tuple(sorted(int(c) for c in self.class_set))
        if len(self.class_set) != len(set(self.class_set)):
            raise ValueError("class_set holds duplicate ids")
        if not self.source_features or len(self.source_features) != len(self.target_features):
            raise ValueError("source and target need the same nonzero layer count")
        n_s, n_t = self.source_labels.shape[0], self.target_labels.shape[0]
        for s, t in zip(self.source_features, self.target_features):
            if s.ndim != 2 or t.ndim != 2:
                raise ValueError("layer features must be 2-d arrays")
            if s.shape[0] != n_s or t.shape[0] != n_t:
                raise ValueError("layer row counts disagree with label counts")

    def validate(self, require_both_domains: bool = True) -> None:
        """Check label/class consistency; optionally demand two-sided coverage."""
        classes = set(self.class_set)
        present = set(self.source_labels.tolist()) | set(self.target_labels.tolist())
        if not present <= classes:
            raise ValueError(f"labels {sorted(present - classes)} outside class_set")
        if require_both_domains:
            for c in self.class_set:
                if not (self.source_labels == c).any() or not (self.target_labels == c).any():
                    raise ValueError("empty class pair")


@dataclass
class CddValue:
    """Aggregate contrastive discrepancy of a batch.

    ``total == intra - inter`` holds per layer and in aggregate.  ``per_pair``
    maps ordered class pairs to their discrepancy averaged over layers, so
    each entry stays inside ``[-2, 2]``.
    """

    total: float
    intra: float
    inter: float
    per_pair: dict[tuple[int, int], float] = field(default_factory=dict)
    per_layer: list[tuple[float, float, float]] = field(default_factory=list)


def mmd_squared(spec: KernelSpec, source, target) -> float:
    """Biased empirical squared MMD between two row sets (diagonals included)."""
    s = np.asarray(source, dtype=float)
    t = np.asarray(target, dtype=float)
    if s.size == 0 or t.size == 0:
        raise ValueError("empty domain in MMD")
    k_ss = kernel_matrix(spec, s, s)
    k_tt = kernel_matrix(spec, t, t)
    k_st = kernel_matrix(spec, s, t)
    return float(k_ss.mean() + k_tt.mean() - 2.0 * k_st.mean())


def class_mask(y: int, y_prime: int, c: int, c_prime: int) -> int:
    """1 iff ``y == c`` and ``y_prime == c_prime``, else 0."""
    return 1 if (y == c and y_prime == c_prime) else 0


def class_pair_discrepancy(
    spec: KernelSpec, batch: LabeledBatch, layer: int, c1: int, c2: int
) -> tuple[float, float, float, float]:
    """Discrepancy of one ordered class pair at one layer.

    Returns:
        ``(value, e1, e2, e3)`` where ``value = e1 + e2 - 2 * e3``.

    Raises:
        ValueError: if either mask selects no samples ("empty class pair").
    """
    s = batch.source_features[layer]
    t = batch.target_features[layer]
    in_c1 = batch.source_labels == c1
    in_c2 = batch.target_labels == c2
    if not in_c1.any() or not in_c2.any():
        raise ValueError("empty class pair")
    e1 = float(kernel_matrix(spec, s[in_c1], s[in_c1]).mean())
    e2 = float(kernel_matrix(spec, t[in_c2], t[in_c2]).mean())
    e3 = float(kernel_matrix(spec, s[in_c1], t[in_c2]).mean())
    return e1 + e2 - 2.0 * e3, e1, e2, e3


def _specs_for(batch: LabeledBatch, specs) -> list[KernelSpec]:
    if isinstance(specs, KernelSpec):
        return [specs] * len(batch.source_features)
    out = list(specs)
    if len(out) != len(batch.source_features):
        raise ValueError("one KernelSpec required per layer")
    return out


def _layer_tables(spec, s, t, ms, mt, ns, nt):
    """Per-class kernel means E1, E2 (vectors) and E3 (matrix), zero where undefined."""
    k_ss = kernel_matrix(spec, s, s)
    k_tt = kernel_matrix(spec, t, t)
    k_st = kernel_matrix(spec, s, t)
    ns_safe = np.where(ns > 0, ns, 1.0)
    nt_safe = np.where(nt > 0, nt, 1.0)
    e1 = np.einsum("ic,ij,jc->c", ms, k_ss, ms) / ns_safe**2
    e2 = np.einsum("ic,ij,jc->c", mt, k_tt, mt) / nt_safe**2
    e3 = (ms.T @ k_st @ mt) / np.outer(ns_safe, nt_safe)
    return e1, e2, e3


def _pair_setup(batch: LabeledBatch, skip_missing_pairs: bool, intra_only: bool):
    """Masks, counts, and averaging weights shared by value and gradient paths."""
    batch.validate(require_both_domains=not skip_missing_pairs)
    classes = np.asarray(batch.class_set, dtype=int)
    ms = (batch.source_labels[:, None] == classes[None, :]).astype(float)
    mt = (batch.target_labels[:, None] == classes[None, :]).astype(float)
    ns = ms.sum(axis=0)
    nt = mt.sum(axis=0)
    estimable = (ns > 0)[:, None] & (nt > 0)[None, :]
    eye = np.eye(len(classes), dtype=bool)
    intra_mask = estimable & eye
    inter_mask = estimable & ~eye
    if intra_only:
        inter_mask = np.zeros_like(inter_mask)
    return classes, ms, mt, ns, nt, intra_mask, inter_mask


def cdd(
    specs,
    batch: LabeledBatch,
    intra_only: bool = False,
    skip_missing_pairs: bool = False,
) -> CddValue:
    """Contrastive discrepancy of a batch, summed over layers.

    Args:
        specs: one KernelSpec per layer, or a single spec reused everywhere.
        batch: features and labels; with ``skip_missing_pairs`` the batch may
            cover a class on one side only and the affected pairs drop out of
            renormalized averages, otherwise one-sided classes raise.
        intra_only: drop the cross-class term (``inter`` reported as 0).
    """
    layer_specs = _specs_for(batch, specs)
    classes, ms, mt, ns, nt, intra_mask, inter_mask = _pair_setup(
        batch, skip_missing_pairs, intra_only
    )
    n_intra = int(intra_mask.sum())
    n_inter = int(inter_mask.sum())
    per_layer: list[tuple[float, float, float]] = []
    pair_sum = np.zeros((len(classes), len(classes)))
    for spec, s, t in zip(layer_specs, batch.source_features, batch.target_features):
        e1, e2, e3 = _layer_tables(spec, s, t, ms, mt, ns, nt)
        d = e1[:, None] + e2[None, :] - 2.0 * e3
        intra = float(d[intra_mask].sum() / n_intra) if n_intra else 0.0
        inter = float(d[inter_mask].sum() / n_inter) if n_inter else 0.0
        per_layer.append((intra, inter, intra - inter))
        pair_sum += d
    n_layers = len(layer_specs)
    per_pair: dict[tuple[int, int], float] = {}
    for i, c1 in enumerate(classes):
        for j, c2 in enumerate(classes):
            if intra_mask[i, j] or inter_mask[i, j]:
                per_pair[(int(c1), int(c2))] = float(pair_sum[i, j] / n_layers)
    intra_total = sum(v[0] for v in per_layer)
    inter_total = sum(v[1] for v in per_layer)
    return CddValue(
        total=intra_total - inter_total,
        intra=intra_total,
        inter=inter_total,
        per_pair=per_pair,
        per_layer=per_layer,
    )


def cdd_grad(
    specs,
    batch: LabeledBatch,
    intra_only: bool = False,
    skip_missing_pairs: bool = False,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradients of ``cdd(...).total`` w.r.t. every layer's features.

    Returns:
        One ``(grad_source, grad_target)`` pair per layer, shaped like the
        corresponding feature arrays.
    """
    layer_specs = _specs_for(batch, specs)
    classes, ms, mt, ns, nt, intra_mask, inter_mask = _pair_setup(
        batch, skip_missing_pairs, intra_only
    )
    n_intra = int(intra_mask.sum())
    n_inter = int(inter_mask.sum())
    # Weight of each ordered pair inside the total.
    w = np.zeros((len(classes), len(classes)))
    if n_intra:
        w[intra_mask] = 1.0 / n_intra
    if n_inter:
        w[inter_mask] = -1.0 / n_inter
    ns_safe = np.where(ns > 0, ns, 1.0)
    nt_safe = np.where(nt > 0, nt, 1.0)
    # e1 of class c1 enters every pair in its row, e2 of c2 every pair in its
    # column; collapsing those sums gives block-constant upstream matrices.
    row_w = w.sum(axis=1)
    col_w = w.sum(axis=0)
    u_ss = (ms * (row_w / ns_safe**2)[None, :]) @ ms.T
    u_tt = (mt * (col_w / nt_safe**2)[None, :]) @ mt.T
    u_st = -2.0 * (ms @ (w / np.outer(ns_safe, nt_safe)) @ mt.T)
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for spec, s, t in zip(layer_specs, batch.source_features, batch.target_features):
        ga_ss, gb_ss = kernel_matrix_grad(spec, s, s, u_ss)
        ga_tt, gb_tt = kernel_matrix_grad(spec, t, t, u_tt)
        ga_st, gb_st = kernel_matrix_grad(spec, s, t, u_st)
        grads.append((ga_ss + gb_ss + ga_st, ga_tt + gb_tt + gb_st))
    return grads
