"""Foundational types for frame intervals, labelings and interval IoU.

Conventions used throughout the package:

* Intervals are half-open ``[start, end)`` over integer frame indices, so
  lengths, unions and partitions are exact integers.
* A label space is ``known classes | UNK | discovered classes`` with dense,
  stable ids: known ids ``0..n_known-1``, the single UNK id ``n_known``, and
  discovered ids appended after it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import math

import numpy as np

UNK_NAME = "UNK"


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open frame interval ``[start, end)``; never empty."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError(f"interval start must be >= 0, got {self.start}")
        if self.end <= self.start:
            raise ValueError(f"empty interval [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class LabelSpace:
    """Known class names, the UNK class, and any discovered class names.

    ``unk_id`` is always ``len(known)`` so ``id >= unk_id`` means "not a
    known class". Discovered ids follow UNK.
    """

    known: tuple[str, ...]
    discovered: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        names = list(self.known) + [UNK_NAME] + list(self.discovered)
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique (and must not shadow UNK)")

    @property
    def unk_id(self) -> int:
        return len(self.known)

    @property
    def n_classes(self) -> int:
        return len(self.known) + 1 + len(self.discovered)

    def is_known(self, label_id: int) -> bool:
        return 0 <= label_id < self.unk_id

    def discovered_id(self, index: int) -> int:
        if not 0 <= index < len(self.discovered):
            raise ValueError(f"no discovered class with index {index}")
        return self.unk_id + 1 + index

    def name_of(self, label_id: int) -> str:
        if label_id < 0 or label_id >= self.n_classes:
            raise ValueError(f"label id {label_id} outside the space")
        if label_id < self.unk_id:
            return self.known[label_id]
        if label_id == self.unk_id:
            return UNK_NAME
        return self.discovered[label_id - self.unk_id - 1]

    def id_of(self, name: str) -> int:
        if name == UNK_NAME:
            return self.unk_id
        try:
            return self.known.index(name)
        except ValueError:
            pass
        try:
            return self.unk_id + 1 + self.discovered.index(name)
        except ValueError:
            raise ValueError(f"unknown class name {name!r}") from None

    def with_discovered(self, n: int) -> "LabelSpace":
        """Space extended with ``UNK_1 .. UNK_n`` discovered classes."""
        return LabelSpace(self.known, tuple(f"{UNK_NAME}_{j + 1}" for j in range(n)))


@dataclass(frozen=True)
class FrameLabeling:
    """Per-frame label ids over a :class:`LabelSpace`."""

    labels: np.ndarray
    space: LabelSpace

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("empty sequence")
        if labels.min() < 0 or labels.max() >= self.space.n_classes:
            raise ValueError("label id outside the label space")

    def __len__(self) -> int:
        return int(self.labels.size)


@dataclass(frozen=True)
class Segment:
    """A labeled interval."""

    interval: Interval
    label: int


@dataclass(frozen=True)
class Proposal:
    """Sorted, gap-free partition of ``[0, T)`` into contiguous intervals."""

    intervals: tuple[Interval, ...]

    def __post_init__(self) -> None:
        if not self.intervals:
            raise ValueError("a proposal must contain at least one interval")
        if self.intervals[0].start != 0:
            raise ValueError("proposal must start at frame 0")
        for prev, cur in zip(self.intervals, self.intervals[1:]):
            if cur.start != prev.end:
                raise ValueError("proposal intervals must tile the video without gaps")

    @property
    def n_frames(self) -> int:
        return self.intervals[-1].end

    def __len__(self) -> int:
        return len(self.intervals)


def segments_from_labels(labeling: FrameLabeling) -> list[Segment]:
    """Maximal runs of identical labels, in temporal order.

    Adjacent same-label segments cannot occur in the output (runs are
    maximal), making this the canonical inverse of :func:`labels_from_segments`.
    """
    labels = labeling.labels
    if labels.size == 0:
        raise ValueError("empty sequence")
    boundaries = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [labels.size]))
    return [
        Segment(Interval(int(s), int(e)), int(labels[s])) for s, e in zip(starts, ends)
    ]


def labels_from_segments(
    segments: Sequence[Segment], n_frames: int, space: LabelSpace
) -> FrameLabeling:
    """Inverse of :func:`segments_from_labels` for a valid partition of ``[0, T)``."""
    if not segments:
        raise ValueError("invalid partition: no segments")
    labels = np.empty(n_frames, dtype=np.int64)
    cursor = 0
    for seg in segments:
        if seg.interval.start != cursor:
            raise ValueError("invalid partition: gap or overlap at frame %d" % cursor)
        labels[seg.interval.start : seg.interval.end] = seg.label
        cursor = seg.interval.end
    if cursor != n_frames:
        raise ValueError("invalid partition: segments do not cover [0, T)")
    return FrameLabeling(labels, space)


def iou_unbalanced(a: Interval, b: Interval) -> float:
    """Interval IoU with the hull span as denominator.

    ``max(0, min(f_a, f_b) - max(s_a, s_b)) / (max(f_a, f_b) - min(s_a, s_b))``
    """
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    hull = max(a.end, b.end) - min(a.start, b.start)
    return inter / hull


def iou_balanced(a: Interval, b: Interval, alpha: float) -> float:
    """Interval IoU damped by ``exp(-alpha * |len(a) - len(b)|)``.

    The balancing factor prefers pairs of similar length among overlapping,
    imperfectly aligned intervals; ``alpha = 0`` disables it.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    unbal = iou_unbalanced(a, b)
    if unbal == 0.0:
        return 0.0
    return unbal * math.exp(-alpha * abs(a.length - b.length))


def intervals_of_label(labeling: FrameLabeling, label_id: int) -> list[Interval]:
    """Maximal runs carrying ``label_id``."""
    return [s.interval for s in segments_from_labels(labeling) if s.label == label_id]


def known_intervals(labeling: FrameLabeling) -> list[Interval]:
    """Maximal runs of known-class frames (any known label, runs split per class)."""
    return [
        s.interval
        for s in segments_from_labels(labeling)
        if labeling.space.is_known(s.label)
    ]
