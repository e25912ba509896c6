"""Spherical k-means over target features plus the ambiguity filter.

Distances are cosine dissimilarities, dist(a, b) = (1 - cos(a, b)) / 2, so
they live in [0, 1].  Cluster ids double as class ids because the centers
are initialized from labeled source class means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_NORM_EPS = 1e-12


@dataclass
class ClusterState:
    """Result of one spherical k-means run.

    ``assignments[i]`` is the arg-min center for sample ``i`` under the final
    centers (ties broken toward the lowest class id), and ``dissimilarities``
    holds the matching distances.  ``objective_trace`` records the summed
    assigned dissimilarity after every assignment pass.
    """

    centers: np.ndarray
    assignments: np.ndarray
    dissimilarities: np.ndarray
    iterations_run: int
    converged: bool
    objective_trace: tuple[float, ...] = ()


@dataclass
class FilterResult:
    """Confidently clustered target samples and sufficiently covered classes."""

    kept_indices: np.ndarray
    kept_classes: tuple[int, ...]
    per_class_counts: dict[int, int]


def _unit_rows(x: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; rows below the norm guard collapse to zero."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    out = x / np.where(norms > _NORM_EPS, norms, 1.0)
    out[norms[:, 0] <= _NORM_EPS] = 0.0
    return out


def cosine_dissimilarity(a, b) -> float:
    """(1 - cos(a, b)) / 2 with zero-norm inputs pinned to 0.5."""
    ua = _unit_rows(np.asarray(a, dtype=float).reshape(1, -1))
    ub = _unit_rows(np.asarray(b, dtype=float).reshape(1, -1))
    if ua.shape != ub.shape:
        raise ValueError("vectors must share one length")
    return float(np.clip(0.5 * (1.0 - ua @ ub.T), 0.0, 1.0)[0, 0])


def _pairwise_dissimilarity(unit_x: np.ndarray, unit_c: np.ndarray) -> np.ndarray:
    return np.clip(0.5 * (1.0 - unit_x @ unit_c.T), 0.0, 1.0)


def source_class_centers(features, labels, n_classes: int) -> np.ndarray:
    """Per-class sums of unit feature vectors, re-normalized to unit length.

    Raises:
        ValueError: if some class id in ``range(n_classes)`` has no sample.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("features must be (n, d) with one label per row")
    counts = np.bincount(y, minlength=n_classes)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError("labels outside [0, n_classes)")
    if (counts == 0).any():
        missing = [c for c in range(n_classes) if counts[c] == 0]
        raise ValueError(f"uncovered class ids {missing}")
    unit = _unit_rows(x)
    centers = np.zeros((n_classes, x.shape[1]))
    np.add.at(centers, y, unit)
    return _unit_rows(centers)


def spherical_kmeans(
    target_features,
    init_centers,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> ClusterState:
    """Alternate argmin assignment and mean-direction updates until stable.

    Convergence is reached when assignments repeat or no center moves by at
    least ``tol`` in cosine dissimilarity; empty clusters retain their
    previous center.  The returned assignments are always consistent with
    the returned centers.
    """
    x = np.asarray(target_features, dtype=float)
    centers = _unit_rows(np.array(init_centers, dtype=float))
    if x.ndim != 2 or centers.ndim != 2 or x.shape[1] != centers.shape[1]:
        raise ValueError("features and centers must be 2-d with equal width")
    if x.shape[0] == 0 or centers.shape[0] == 0:
        raise ValueError("need at least one sample and one center")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    unit_x = _unit_rows(x)
    n, m = x.shape[0], centers.shape[0]
    trace: list[float] = []
    prev: np.ndarray | None = None
    assignments = np.zeros(n, dtype=int)
    assigned_diss = np.zeros(n)
    converged = False
    iterations = max_iters

    def _assign(cs):
        diss = _pairwise_dissimilarity(unit_x, cs)
        a = np.argmin(diss, axis=1)  # argmin takes the lowest id on ties
        d = diss[np.arange(n), a]
        trace.append(float(d.sum()))
        return a, d

    for it in range(1, max_iters + 1):
        assignments, assigned_diss = _assign(centers)
        if prev is not None and np.array_equal(assignments, prev):
            iterations, converged = it, True
            break
        if it == max_iters:
            iterations, converged = it, False
            break
        prev = assignments
        sums = np.zeros_like(centers)
        np.add.at(sums, assignments, unit_x)
        occupied = np.bincount(assignments, minlength=m) > 0
        new_centers = _unit_rows(sums)
        new_centers[~occupied] = centers[~occupied]
        movement = float(
            np.max(np.clip(0.5 * (1.0 - np.sum(centers * new_centers, axis=1)), 0.0, 1.0))
        )
        centers = new_centers
        if movement < tol:
            # Final verification pass so state stays self-consistent.
            assignments, assigned_diss = _assign(centers)
            iterations, converged = it, True
            break

    return ClusterState(
        centers=centers,
        assignments=assignments,
        dissimilarities=assigned_diss,
        iterations_run=iterations,
        converged=converged,
        objective_trace=tuple(trace),
    )


def filter_targets(state: ClusterState, d0: float = 0.05, n0: int = 3) -> FilterResult:
    """Keep samples with dissimilarity strictly below ``d0``, then classes with
    strictly more than ``n0`` of them; kept samples are restricted to kept classes."""
    if not 0.0 <= d0 <= 1.0:
        raise ValueError("d0 must lie in [0, 1]")
    if n0 < 0:
        raise ValueError("n0 must be >= 0")
    m = state.centers.shape[0]
    close = state.dissimilarities < d0
    counts = np.bincount(state.assignments[close], minlength=m)
    kept_classes = tuple(int(c) for c in range(m) if counts[c] > n0)
    mask = close & np.isin(state.assignments, kept_classes)
    return FilterResult(
        kept_indices=np.nonzero(mask)[0],
        kept_classes=kept_classes,
        per_class_counts={c: int(counts[c]) for c in range(m)},
    )
