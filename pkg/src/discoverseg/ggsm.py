"""Granularity-guided segmentation of a video from its frame embeddings.

Frames start as singleton clusters and are merged agglomeratively under a
farthest-point (complete-linkage) criterion, restricted to temporally
adjacent clusters so that every level of the hierarchy is a partition of
``[0, T)`` into contiguous intervals. Partitions are scored against the
temporal spans of known actions with a length-balanced interval IoU, and the
best-scoring level fixes the granularity at which unknown regions are split.

The cluster distance is ``D(S, V) = max_{s in S, v in V} ||s - v||`` and is
maintained incrementally via ``D(A u B, C) = max(D(A, C), D(B, C))``, which
also makes merge heights non-decreasing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import FrameLabeling, Interval, Proposal, Segment


@dataclass(frozen=True)
class Merge:
    """One agglomeration step: the two adjacent extents joined and at what height."""

    height: float
    left: Interval
    right: Interval


@dataclass(frozen=True)
class MergeTree:
    """The full sequence of ``T - 1`` adjacent merges over one video."""

    merges: tuple[Merge, ...]
    n_frames: int

    def __post_init__(self) -> None:
        if len(self.merges) != self.n_frames - 1:
            raise ValueError("a merge tree must contain exactly T - 1 merges")


@dataclass(frozen=True)
class GgsmConfig:
    alpha: float = 0.001
    max_levels: int = 100
    stride: int = 1
    tie_break: str = "leftmost"

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.tie_break != "leftmost":
            raise ValueError("only the 'leftmost' tie-break rule is implemented")


def build_merge_tree(embeddings: np.ndarray) -> MergeTree:
    """Contiguity-constrained complete-linkage clustering of the frames.

    At every step the temporally adjacent cluster pair with the smallest
    farthest-point Euclidean distance is merged; equal distances resolve to
    the leftmost pair.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 1:
        raise ValueError("embeddings must be a non-empty T x D matrix")
    if not np.all(np.isfinite(emb)):
        raise ValueError("non-finite embedding")
    n = emb.shape[0]
    if n == 1:
        return MergeTree((), 1)

    dist = cdist(emb, emb)
    reps = list(range(n))  # distance-matrix row owned by each active cluster
    extents: list[tuple[int, int]] = [(i, i + 1) for i in range(n)]
    adj = [dist[i, i + 1] for i in range(n - 1)]

    merges: list[Merge] = []
    for _ in range(n - 1):
        j = min(range(len(adj)), key=adj.__getitem__)
        height = adj[j]
        left, right = extents[j], extents[j + 1]
        merges.append(Merge(float(height), Interval(*left), Interval(*right)))

        ra, rb = reps[j], reps[j + 1]
        np.maximum(dist[ra], dist[rb], out=dist[ra])
        dist[:, ra] = dist[ra]
        extents[j] = (left[0], right[1])
        del extents[j + 1]
        del reps[j + 1]
        del adj[j]
        if j > 0:
            adj[j - 1] = dist[reps[j - 1], ra]
        if j < len(adj):
            adj[j] = dist[ra, reps[j + 1]]

    return MergeTree(tuple(merges), n)


def proposal_at_level(tree: MergeTree, k: int) -> Proposal:
    """The partition into exactly ``k`` intervals, i.e. after ``T - k`` merges."""
    n = tree.n_frames
    if not 1 <= k <= n:
        raise ValueError(f"level {k} outside 1..{n}")
    removed = np.zeros(n + 1, dtype=bool)
    for merge in tree.merges[: n - k]:
        removed[merge.left.end] = True
    cuts = [0] + [b for b in range(1, n) if not removed[b]] + [n]
    return Proposal(tuple(Interval(s, e) for s, e in zip(cuts, cuts[1:])))


def _interval_array(intervals) -> np.ndarray:
    return np.asarray([(iv.start, iv.end) for iv in intervals], dtype=np.float64)


def _pair_scores(p: np.ndarray, g: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """(balanced IoU, raw overlap) matrices between two interval arrays."""
    inter = np.minimum(p[:, None, 1], g[None, :, 1]) - np.maximum(p[:, None, 0], g[None, :, 0])
    inter = np.maximum(inter, 0.0)
    hull = np.maximum(p[:, None, 1], g[None, :, 1]) - np.minimum(p[:, None, 0], g[None, :, 0])
    iou = inter / hull
    lengths_p = p[:, 1] - p[:, 0]
    lengths_g = g[:, 1] - g[:, 0]
    balance = np.exp(-alpha * np.abs(lengths_p[:, None] - lengths_g[None, :]))
    return np.where(inter > 0, iou * balance, 0.0), inter


def score_proposal(proposal: Proposal, known: list[Interval], alpha: float) -> float:
    """Mean length-balanced IoU over all proposal x known interval pairs."""
    if not known:
        raise ValueError("no reference segments")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    scores, _ = _pair_scores(_interval_array(proposal.intervals), _interval_array(known), alpha)
    return float(scores.sum() / (len(proposal) * len(known)))


def select_proposal(
    tree: MergeTree, known: list[Interval], config: GgsmConfig
) -> tuple[Proposal, float]:
    """Highest-scoring partition among levels ``1..min(T, max_levels)``.

    Ties resolve toward the coarser level (smaller k).
    """
    if not known:
        raise ValueError("no reference segments")
    best: tuple[Proposal, float] | None = None
    for k in range(1, min(tree.n_frames, config.max_levels) + 1):
        proposal = proposal_at_level(tree, k)
        score = score_proposal(proposal, known, config.alpha)
        if best is None or score > best[1]:
            best = (proposal, score)
    assert best is not None
    return best


def _upsample(proposal: Proposal, stride: int, n_frames: int) -> Proposal:
    if stride == 1:
        return proposal
    cuts = [0] + [min(iv.end * stride, n_frames) for iv in proposal.intervals]
    return Proposal(tuple(Interval(s, e) for s, e in zip(cuts, cuts[1:])))


def select_refinement_level(
    tree: MergeTree,
    known: list[Interval],
    config: GgsmConfig,
    stride: int = 1,
    n_frames: int | None = None,
) -> tuple[Proposal, float]:
    """Granularity selection used when unknown regions must be refined.

    Scores each level like :func:`score_proposal` but counts only proposal
    intervals that overlap at least one known span; intervals lying entirely
    in unknown regions neither add to the sum nor inflate the normalizer, so
    the chosen cut is driven purely by how well the known spans are
    reproduced. Ties resolve toward the finest level, which carries the
    known-region cut height into the unknown regions instead of collapsing
    them. On videos fully tiled by known spans every interval overlaps a
    span and the score equals :func:`score_proposal` exactly.
    """
    if not known:
        raise ValueError("no reference segments")
    if n_frames is None:
        n_frames = tree.n_frames * stride
    g = _interval_array(known)
    best: tuple[Proposal, float] | None = None
    for k in range(1, min(tree.n_frames, config.max_levels) + 1):
        proposal = _upsample(proposal_at_level(tree, k), stride, n_frames)
        scores, inter = _pair_scores(_interval_array(proposal.intervals), g, config.alpha)
        overlapping = (inter > 0).any(axis=1)
        m = int(overlapping.sum())
        score = float(scores[overlapping].sum() / (m * len(known))) if m else 0.0
        if best is None or score >= best[1]:
            best = (proposal, score)
    assert best is not None
    return best


def cut_by_largest_gap(tree: MergeTree, stride: int = 1, n_frames: int | None = None) -> Proposal:
    """Fallback cut when no known spans exist: split at the largest height gap.

    Merge heights are non-decreasing; the partition kept is the one right
    before the largest jump between consecutive heights. Fewer than two
    merges leave everything in one interval.
    """
    if n_frames is None:
        n_frames = tree.n_frames * stride
    if len(tree.merges) < 2:
        return _upsample(proposal_at_level(tree, 1), stride, n_frames)
    heights = [m.height for m in tree.merges]
    gaps = [b - a for a, b in zip(heights, heights[1:])]
    j = max(range(len(gaps)), key=gaps.__getitem__)
    return _upsample(proposal_at_level(tree, tree.n_frames - (j + 1)), stride, n_frames)


def majority_vote(proposal: Proposal, frame_labels: FrameLabeling) -> list[Segment]:
    """Label each interval with its most frequent frame label (ties: smallest id)."""
    if proposal.n_frames != len(frame_labels):
        raise ValueError("proposal and labeling cover different frame counts")
    labels = frame_labels.labels
    segments = []
    for iv in proposal.intervals:
        counts = np.bincount(labels[iv.start : iv.end])
        segments.append(Segment(iv, int(counts.argmax())))
    return segments


def discover_unknown_segments(
    embeddings: np.ndarray,
    frame_labels: FrameLabeling,
    known: list[Interval],
    config: GgsmConfig = GgsmConfig(),
) -> tuple[Proposal, list[Segment]]:
    """Re-segment a video at the granularity of its known spans.

    Builds the merge tree (optionally on a strided subsequence), picks the
    refinement level against ``known``, and majority-votes each interval.
    Segments whose majority label is UNK are the discovered unknown
    segments; the rest carry their majority known label. Without any known
    span the cut falls back to the largest merge-height gap.
    """
    emb = np.asarray(embeddings)
    n = emb.shape[0]
    if n != len(frame_labels):
        raise ValueError("embeddings and labels cover different frame counts")
    sub = emb[:: config.stride]
    tree = build_merge_tree(sub)
    if known:
        proposal, _ = select_refinement_level(tree, known, config, config.stride, n)
    else:
        warnings.warn("no known spans; falling back to the largest-gap cut")
        proposal = cut_by_largest_gap(tree, config.stride, n)
    return proposal, majority_vote(proposal, frame_labels)
