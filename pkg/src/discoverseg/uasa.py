"""Assignment of discovered unknown segments to automatically estimated classes.

Unknown segments are summarized by the mean of their frame embeddings. The
number of unknown classes K is estimated on training-set means by fitting
diagonal-covariance Gaussian mixtures for increasing K and keeping the one
with the lowest BIC; a K-means pass over the same means then yields the
centroids used to label segments by nearest-centroid lookup. Centroids are
frozen after fitting; test-time means never update them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .core import Interval

VAR_FLOOR = 1e-6
EM_TOL = 1e-6
EM_MAX_ITER = 200
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class SegmentMean:
    """Mean embedding of one segment, with its provenance."""

    mean: np.ndarray
    source: tuple[str, Interval]


@dataclass(frozen=True)
class GmmModel:
    k: int
    weights: np.ndarray  # (k,) on the simplex
    means: np.ndarray  # (k, D)
    variances: np.ndarray  # (k, D), diagonal covariances, floored
    loglik: float
    loglik_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if np.any(self.variances < VAR_FLOOR - 1e-15):
            raise ValueError("variance below floor")


@dataclass(frozen=True)
class UasaModel:
    k: int
    centroids: np.ndarray  # (k, D)
    gmm: GmmModel
    seed: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("non-finite centroid")


def segment_means(
    embeddings: np.ndarray, segments: list[Interval], video_id: str = ""
) -> list[SegmentMean]:
    """Arithmetic mean of the frame embeddings inside each segment."""
    emb = np.asarray(embeddings, dtype=np.float64)
    out = []
    for iv in segments:
        if iv.end > emb.shape[0]:
            raise ValueError(f"segment {iv} outside the video")
        out.append(SegmentMean(emb[iv.start : iv.end].mean(axis=0), (video_id, iv)))
    return out


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ seeding; identical points degrade to the first point."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            centers[i] = points[0]
            continue
        idx = int(rng.choice(n, p=closest / total))
        centers[i] = points[idx]
        closest = np.minimum(closest, ((points - centers[i]) ** 2).sum(axis=1))
    return centers


def _log_gaussian(points: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """(n, k) log densities of diagonal Gaussians."""
    diff2 = (points[:, None, :] - means[None, :, :]) ** 2
    return -0.5 * (
        np.log(2.0 * np.pi * variances)[None, :, :] + diff2 / variances[None, :, :]
    ).sum(axis=2)


def fit_gmm(points: np.ndarray, k: int, seed: int = 42) -> GmmModel:
    """EM for a diagonal-covariance mixture of ``k`` Gaussians.

    Means start from seeded k-means++, weights uniform, variances at the
    per-dimension sample variance. Stops when the total log-likelihood
    improves by less than ``1e-6`` or after 200 iterations. Variances are
    floored at ``1e-6`` so degenerate (e.g. all-identical) inputs stay
    well-defined.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be an n x D matrix")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError("more components than points")
    rng = np.random.default_rng(seed)

    means = _kmeanspp_init(points, k, rng)
    weights = np.full(k, 1.0 / k)
    variances = np.maximum(points.var(axis=0), VAR_FLOOR)
    variances = np.tile(variances, (k, 1))

    history: list[float] = []
    for _ in range(EM_MAX_ITER):
        log_prob = _log_gaussian(points, means, variances) + np.log(weights)
        log_norm = logsumexp(log_prob, axis=1)
        loglik = float(log_norm.sum())
        resp = np.exp(log_prob - log_norm[:, None])

        if history and loglik - history[-1] < EM_TOL:
            history.append(loglik)
            break
        history.append(loglik)

        mass = resp.sum(axis=0) + 1e-300
        weights = mass / n
        weights = weights / weights.sum()
        means = (resp.T @ points) / mass[:, None]
        diff2 = (points[:, None, :] - means[None, :, :]) ** 2
        variances = np.maximum(
            (resp[:, :, None] * diff2).sum(axis=0) / mass[:, None], VAR_FLOOR
        )

    return GmmModel(k, weights, means, variances, history[-1], tuple(history))


def bic(model: GmmModel, n: int) -> float:
    """``p * ln(n) - 2 * loglik`` with p = k*D means + k*D variances + (k-1) weights."""
    if n <= 0:
        raise ValueError("n must be positive")
    dim = model.means.shape[1]
    p = model.k * dim * 2 + (model.k - 1)
    return p * np.log(n) - 2.0 * model.loglik


def _degenerate_model(points: np.ndarray) -> GmmModel:
    mean = points.mean(axis=0, keepdims=True)
    var = np.maximum(points.var(axis=0, keepdims=True), VAR_FLOOR)
    loglik = float(_log_gaussian(points, mean, var).sum())
    return GmmModel(1, np.ones(1), mean, var, loglik, (loglik,))


def estimate_k(
    points: np.ndarray,
    k_min: int = 1,
    k_max: int | None = None,
    seed: int = 42,
) -> tuple[int, GmmModel]:
    """Lowest-BIC component count over ``k_min..k_max`` (ties to smaller k).

    ``k_max`` defaults to ``min(20, n - 1)``; with fewer than two points the
    answer is fixed at one component.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        if n == 0:
            raise ValueError("no points")
        return 1, _degenerate_model(points)
    if k_max is None:
        k_max = min(20, n - 1)
    k_max = min(k_max, n)
    best: tuple[float, int, GmmModel] | None = None
    for k in range(k_min, k_max + 1):
        model = fit_gmm(points, k, seed)
        score = bic(model, n)
        if best is None or score < best[0]:
            best = (score, k, model)
    assert best is not None
    return best[1], best[2]


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 42,
    init: np.ndarray | None = None,
    collect_sse: bool = False,
):
    """Lloyd's algorithm from seeded k-means++ (or explicit ``init`` centers).

    Runs until the assignment is stable or 300 iterations; a cluster left
    empty is re-seeded to the point farthest from its current centroid.
    Returns ``(centroids, assignment)``, plus the per-iteration SSE trail
    when ``collect_sse`` is set.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < k:
        raise ValueError("more clusters than points")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(points, k, rng) if init is None else np.array(init, dtype=np.float64)
    if centers.shape != (k, points.shape[1]):
        raise ValueError("init centers have the wrong shape")

    assignment = np.full(n, -1, dtype=np.int64)
    sse_trail: list[float] = []
    for _ in range(KMEANS_MAX_ITER):
        dist2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignment = dist2.argmin(axis=1)
        for j in range(k):
            if not np.any(new_assignment == j):
                # steal the point sitting farthest from its own centroid
                farthest = int(dist2[np.arange(n), new_assignment].argmax())
                new_assignment[farthest] = j
        if collect_sse:
            sse_trail.append(float(((points - centers[new_assignment]) ** 2).sum()))
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(k):
            centers[j] = points[assignment == j].mean(axis=0)

    if collect_sse:
        return centers, assignment, sse_trail
    return centers, assignment


def fit_uasa(
    train_means: list[SegmentMean],
    seed: int = 42,
    k_max: int | None = None,
    init_from_gmm: bool = False,
) -> UasaModel:
    """Estimate K on training segment means, then cluster them with K-means.

    ``init_from_gmm`` starts Lloyd's iterations from the selected mixture's
    means instead of an independent k-means++ seeding.
    """
    if not train_means:
        raise ValueError("no training segment means")
    points = np.stack([m.mean for m in train_means])
    k, gmm = estimate_k(points, k_max=k_max, seed=seed)
    if points.shape[0] == 1:
        centroids = points.copy()
    else:
        init = gmm.means if init_from_gmm else None
        centroids, _ = kmeans(points, k, seed=seed, init=init)
    return UasaModel(k, centroids, gmm, seed)


def assign_segments(model: UasaModel, means: list[SegmentMean]) -> np.ndarray:
    """Index of the Euclidean-nearest centroid per mean (ties to smaller index)."""
    if not means:
        return np.empty(0, dtype=np.int64)
    points = np.stack([m.mean for m in means])
    if points.shape[1] != model.centroids.shape[1]:
        raise ValueError(
            f"dimension mismatch: means are {points.shape[1]}-d, "
            f"centroids are {model.centroids.shape[1]}-d"
        )
    dist2 = ((points[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    return dist2.argmin(axis=1)


# ---------------------------------------------------------------------------
# model serialization: "k D seed" header, then k centroid rows, the mixture
# weights row, k mixture mean rows, k mixture variance rows, and the fitted
# log-likelihood; all decimals with 9 significant digits.


def _fmt_row(values: np.ndarray) -> str:
    return " ".join(f"{v:.9g}" for v in values)


def save_uasa_model(path: str | Path, model: UasaModel) -> None:
    lines = [f"{model.k} {model.centroids.shape[1]} {model.seed}"]
    lines += [_fmt_row(row) for row in model.centroids]
    lines.append(_fmt_row(model.gmm.weights))
    lines += [_fmt_row(row) for row in model.gmm.means]
    lines += [_fmt_row(row) for row in model.gmm.variances]
    lines.append(f"{model.gmm.loglik:.9g}")
    tmp = Path(path).with_name(Path(path).name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", "utf-8")
    tmp.replace(path)


def load_uasa_model(path: str | Path) -> UasaModel:
    lines = [l for l in Path(path).read_text("utf-8").splitlines() if l.strip()]
    k, dim, seed = (int(v) for v in lines[0].split())
    expected = 1 + k + 1 + k + k + 1
    if len(lines) != expected:
        raise ValueError(f"model file has {len(lines)} lines, expected {expected}")
    rows = [np.array([float(v) for v in line.split()]) for line in lines[1:]]
    centroids = np.stack(rows[:k])
    weights = rows[k]
    means = np.stack(rows[k + 1 : 2 * k + 1])
    variances = np.stack(rows[2 * k + 1 : 3 * k + 1])
    loglik = float(rows[3 * k + 1][0])
    if centroids.shape != (k, dim):
        raise ValueError("centroid block has the wrong shape")
    gmm = GmmModel(k, weights / weights.sum(), means, np.maximum(variances, VAR_FLOOR), loglik)
    return UasaModel(k, centroids, gmm, seed)
