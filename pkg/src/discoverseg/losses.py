"""Training losses as pure numerical functions returning value and gradient.

Nothing here trains a network: the functions exist so an external trainer
can plug them in, and so the formulas are testable against finite
differences. Randomized sampling (positives/negatives of the contrastive
loss) is driven entirely by the config seed, making every value
reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Interval


@dataclass(frozen=True)
class ContrastiveConfig:
    """Sampling and temperature knobs for the unknown-segment contrastive loss.

    Positives are drawn from a Gaussian over frame offsets, truncated at
    ``trunc * sigma_pos`` frames and restricted to the anchor's segment;
    negatives are drawn uniformly (with replacement) from the frames of the
    same video outside that window.
    """

    tau: float = 0.4
    sigma_pos: float = 5.0
    trunc: float = 3.0
    n_neg: int = 32
    seed: int = 42

    def __post_init__(self) -> None:
        if self.tau <= 0 or self.sigma_pos <= 0 or self.trunc <= 0:
            raise ValueError("tau, sigma_pos and trunc must be positive")
        if self.n_neg < 1:
            raise ValueError("n_neg must be >= 1")


@dataclass(frozen=True)
class LossResult:
    value: float
    grad: np.ndarray

    def __post_init__(self) -> None:
        if not math.isfinite(self.value) or not np.all(np.isfinite(self.grad)):
            raise ValueError("non-finite loss or gradient")


def _cosine_with_grads(a: np.ndarray, b: np.ndarray):
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("degenerate embedding")
    cos = float(a @ b) / (na * nb)
    grad_a = b / (na * nb) - cos * a / (na * na)
    grad_b = a / (na * nb) - cos * b / (nb * nb)
    return cos, grad_a, grad_b


def contrastive_loss(
    embeddings: np.ndarray,
    unknown_segments: list[Interval],
    config: ContrastiveConfig = ContrastiveConfig(),
) -> LossResult:
    """InfoNCE-style loss over the frames of the unknown segments.

    Per anchor frame t:

        -log  exp(sim(e_t, e_pos)/tau) / sum_{k in {pos} u negs} exp(sim(e_t, e_k)/tau)

    with sim the cosine similarity, averaged over all anchors. Anchors are
    the frames of the given unknown segments; segments shorter than two
    frames cannot host a positive pair and are skipped with a warning. The
    gradient is taken with respect to every embedding row.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.size == 0:
        raise ValueError("embeddings must be a non-empty T x D matrix")
    n = emb.shape[0]
    rng = np.random.default_rng(config.seed)
    window = config.trunc * config.sigma_pos
    positions = np.arange(n)

    skipped = 0
    anchors: list[tuple[int, int, np.ndarray]] = []  # (anchor, positive, negatives)
    for seg in unknown_segments:
        if seg.end > n:
            raise ValueError(f"segment {seg} outside the video")
        if seg.length < 2:
            skipped += 1
            continue
        for t in range(seg.start, seg.end):
            inside = np.arange(seg.start, seg.end)
            offsets = inside - t
            candidates = inside[(offsets != 0) & (np.abs(offsets) <= window)]
            if candidates.size == 0:
                raise ValueError(
                    "positive window holds no frames; widen sigma_pos * trunc"
                )
            weights = np.exp(-((candidates - t) ** 2) / (2.0 * config.sigma_pos**2))
            pos = int(rng.choice(candidates, p=weights / weights.sum()))
            outside = positions[np.abs(positions - t) > window]
            if outside.size == 0:
                raise ValueError("no frames outside the positive window")
            negs = rng.choice(outside, size=config.n_neg, replace=True)
            anchors.append((t, pos, negs))

    if skipped:
        warnings.warn(f"skipped {skipped} unknown segment(s) shorter than 2 frames")
    if not anchors:
        raise ValueError("no usable anchor frames in the unknown segments")

    value = 0.0
    grad = np.zeros_like(emb)
    for t, pos, negs in anchors:
        others = [pos] + list(negs)
        sims = np.empty(len(others))
        grads_a = np.empty((len(others), emb.shape[1]))
        grads_b = np.empty((len(others), emb.shape[1]))
        for i, idx in enumerate(others):
            sims[i], grads_a[i], grads_b[i] = _cosine_with_grads(emb[t], emb[idx])
        scaled = sims / config.tau
        shift = scaled.max()
        lse = shift + math.log(np.exp(scaled - shift).sum())
        value += lse - scaled[0]
        softmax = np.exp(scaled - lse)
        coef = softmax / config.tau
        coef[0] -= 1.0 / config.tau
        grad[t] += coef @ grads_a
        for i, idx in enumerate(others):
            grad[idx] += coef[i] * grads_b[i]

    n_anchor = len(anchors)
    return LossResult(value / n_anchor, grad / n_anchor)


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> LossResult:
    """Mean frame-wise softmax cross-entropy; gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError("logits must be T x C with one target id per frame")
    n, c = logits.shape
    if targets.min() < 0 or targets.max() >= c:
        raise ValueError("target id outside 0..C-1")
    shift = logits.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    value = float((lse - logits[np.arange(n), targets]).mean())
    softmax = np.exp(logits - lse[:, None])
    softmax[np.arange(n), targets] -= 1.0
    return LossResult(value, softmax / n)


def truncated_mse(log_probs: np.ndarray, clip: float = 16.0) -> LossResult:
    """Truncated squared temporal difference of log-probabilities.

    Per cell, ``min(|delta|, sqrt(clip)) ** 2`` of the frame-to-frame
    difference, summed and divided by ``T * C`` (so ``clip`` caps the
    squared contribution; the raw difference is clipped at ``sqrt(clip)``,
    i.e. 4 for the default). The gradient is zero through clipped cells.
    """
    x = np.asarray(log_probs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("log_probs must be T x C with T >= 2")
    if clip <= 0:
        raise ValueError("clip must be positive")
    n, c = x.shape
    cap = math.sqrt(clip)
    delta = x[1:] - x[:-1]
    mag = np.abs(delta)
    clipped = mag >= cap
    value = float((np.minimum(mag, cap) ** 2).sum() / (n * c))
    inner = np.where(clipped, 0.0, 2.0 * delta / (n * c))
    grad = np.zeros_like(x)
    grad[1:] += inner
    grad[:-1] -= inner
    return LossResult(value, grad)


def combined_loss(backbone_value: float, contr_value: float, lam: float = 0.1) -> float:
    """Weighted sum of the backbone and contrastive loss values."""
    if not (math.isfinite(backbone_value) and math.isfinite(contr_value) and math.isfinite(lam)):
        raise ValueError("non-finite input")
    return backbone_value + lam * contr_value
