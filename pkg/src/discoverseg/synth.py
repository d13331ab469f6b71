"""Seeded synthetic benchmark generator with exact ground truth.

Videos are sequences of action segments. Class means live in D dimensions
with a guaranteed minimum mutual separation; frames are their class mean
plus isotropic Gaussian noise, the simplest model under which farthest-point
clustering and mixture-based class counting are provably adequate. Unknown
actions appear as runs separated by known segments, and a configurable
share of those runs chains two or more distinct unknown actions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FrameLabeling, LabelSpace, segments_from_labels
from .ingest import (
    KnownActionConfig,
    apply_known_config,
    write_embeddings,
    write_known_config,
    write_label_map,
    write_labels,
    write_manifest,
)

MAX_REJECTION_ATTEMPTS = 100_000


@dataclass(frozen=True)
class SynthConfig:
    n_videos: int = 20
    n_known: int = 13  # default class counts mirror a fine-grained kitchen dataset
    n_unknown: int = 6
    dim: int = 16
    frames_per_segment: tuple[int, int] = (30, 70)
    segments_per_video: tuple[int, int] = (7, 11)
    class_sep: float = 6.0
    noise_sigma: float = 1.0
    multi_unknown_frac: float = 1 / 3
    unknown_slot_prob: float = 0.4
    train_frac: float = 0.5
    seed: int = 42

    def __post_init__(self) -> None:
        if self.n_videos < 1 or self.n_known < 1 or self.n_unknown < 1 or self.dim < 1:
            raise ValueError("n_videos, n_known, n_unknown and dim must be >= 1")
        if self.frames_per_segment[0] < 1 or self.frames_per_segment[0] > self.frames_per_segment[1]:
            raise ValueError("frames_per_segment must be a valid (min, max) range")
        if self.segments_per_video[0] < 1 or self.segments_per_video[0] > self.segments_per_video[1]:
            raise ValueError("segments_per_video must be a valid (min, max) range")
        if self.class_sep <= 0:
            raise ValueError("class_sep must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.multi_unknown_frac <= 1.0:
            raise ValueError("multi_unknown_frac must lie in [0, 1]")
        if self.multi_unknown_frac > 0 and self.n_unknown < 2:
            raise ValueError("multi-action unknown runs need at least 2 unknown classes")
        if not 0.0 < self.unknown_slot_prob < 1.0:
            raise ValueError("unknown_slot_prob must lie in (0, 1)")
        if not 0.0 <= self.train_frac <= 1.0:
            raise ValueError("train_frac must lie in [0, 1]")


@dataclass(frozen=True)
class SynthVideo:
    video_id: str
    embeddings: np.ndarray  # (T, dim) float32
    gt: FrameLabeling  # over the raw space (all classes)
    observed: FrameLabeling  # over known + UNK
    split: str


@dataclass(frozen=True)
class SynthDataset:
    videos: list[SynthVideo]
    space: LabelSpace  # raw space: known names then unknown names
    known_config: KnownActionConfig
    class_means: np.ndarray


def _draw_class_means(rng: np.random.Generator, n: int, dim: int, sep: float) -> np.ndarray:
    # box radius grows with the class count so packing stays feasible in low dims
    radius = sep * max(2.0, 1.5 * n ** (1.0 / dim))
    means: list[np.ndarray] = []
    attempts = 0
    while len(means) < n:
        attempts += 1
        if attempts > MAX_REJECTION_ATTEMPTS:
            raise RuntimeError("cannot separate classes")
        candidate = rng.uniform(-radius, radius, dim)
        if all(np.linalg.norm(candidate - m) >= sep for m in means):
            means.append(candidate)
    return np.stack(means)


def _video_script(config: SynthConfig, rng: np.random.Generator) -> list[int]:
    """Class-id sequence of one video's segments (raw ids, knowns first)."""
    n_slots = int(rng.integers(config.segments_per_video[0], config.segments_per_video[1] + 1))
    kinds = []
    prev_unknown = False
    for _ in range(n_slots):
        unknown = (not prev_unknown) and rng.random() < config.unknown_slot_prob
        kinds.append("unknown" if unknown else "known")
        prev_unknown = unknown
    if "known" not in kinds:  # only possible for a single-slot video
        kinds[0] = "known"

    script: list[int] = []
    prev = -1
    for kind in kinds:
        if kind == "known":
            choices = [c for c in range(config.n_known) if c != prev]
            prev = int(rng.choice(choices))
            script.append(prev)
        else:
            n_actions = 1
            if rng.random() < config.multi_unknown_frac:
                n_actions = int(rng.integers(2, min(3, config.n_unknown) + 1))
            picks = rng.choice(config.n_unknown, size=n_actions, replace=False)
            for c in picks:
                prev = config.n_known + int(c)
                script.append(prev)
    return script


def generate_dataset(config: SynthConfig) -> SynthDataset:
    """Deterministically generate videos, labels and splits from the seed."""
    rng = np.random.default_rng(config.seed)
    n_classes = config.n_known + config.n_unknown
    class_means = _draw_class_means(rng, n_classes, config.dim, config.class_sep)

    known_names = tuple(f"act_{i:02d}" for i in range(config.n_known))
    unknown_names = tuple(f"unk_{i:02d}" for i in range(config.n_unknown))
    space = LabelSpace(known_names + unknown_names)
    known_config = KnownActionConfig(known_names)

    n_train = round(config.train_frac * config.n_videos)
    videos = []
    for v in range(config.n_videos):
        script = _video_script(config, rng)
        durations = rng.integers(
            config.frames_per_segment[0], config.frames_per_segment[1] + 1, len(script)
        )
        labels = np.repeat(np.asarray(script, dtype=np.int64), durations)
        frames = class_means[labels]
        if config.noise_sigma > 0:
            frames = frames + rng.normal(0.0, config.noise_sigma, frames.shape)
        gt = FrameLabeling(labels, space)
        videos.append(
            SynthVideo(
                video_id=f"vid{v:03d}",
                embeddings=frames.astype(np.float32),
                gt=gt,
                observed=apply_known_config(gt, known_config),
                split="train" if v < n_train else "test",
            )
        )
    return SynthDataset(videos, space, known_config, class_means)


def multi_unknown_fraction(dataset: SynthDataset) -> float:
    """Realized share of unknown runs containing two or more distinct actions."""
    runs = 0
    multi = 0
    n_known = len(dataset.known_config.known_names)
    for video in dataset.videos:
        segs = segments_from_labels(video.gt)
        run: list[int] = []
        for seg in segs + [None]:
            if seg is not None and seg.label >= n_known:
                run.append(seg.label)
            elif run:
                runs += 1
                multi += len(set(run)) > 1
                run = []
    return multi / runs if runs else 0.0


def write_dataset(dataset: SynthDataset, out_dir: str | Path) -> Path:
    """Write embeddings, labels, label map, known config and manifest; returns the manifest path."""
    out = Path(out_dir)
    (out / "embeddings").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    rows = []
    for video in dataset.videos:
        emb_rel = f"embeddings/{video.video_id}.emb"
        lab_rel = f"labels/{video.video_id}.txt"
        write_embeddings(out / emb_rel, video.embeddings)
        write_labels(out / lab_rel, video.gt)
        rows.append((video.video_id, emb_rel, lab_rel, video.split))
    mapping = {dataset.space.name_of(i): i for i in range(dataset.space.unk_id)}
    write_label_map(out / "label_map.txt", mapping)
    write_known_config(out / "known_config.txt", dataset.known_config)
    manifest_path = out / "manifest.tsv"
    write_manifest(manifest_path, rows)
    return manifest_path
