"""Readers and writers for every on-disk artifact the toolkit touches.

File formats (all declared here, all bit-exact and reject-on-doubt):

* embeddings  -- binary: magic ``EMB1``, uint32-LE ``T``, uint32-LE ``D``,
  then ``T*D`` float32-LE values row-major. A plain-text fallback (one frame
  per line, ``D`` space-separated decimals) is auto-detected when the magic
  is absent.
* labels      -- UTF-8, LF newlines, one class name per line.
* label map   -- ``name<space>id`` per line; ids must be dense ``0..n-1``.
* known config-- one known class name per line.
* manifest    -- ``video_id<TAB>emb_path<TAB>label_path<TAB>split`` per line,
  split is ``train`` or ``test``; relative paths resolve against the
  manifest's directory.
* report      -- ``metric.scope=value`` per line, 4 decimal places,
  lexicographic key order; absent metrics are written as ``n/a``.

Writers go through a write-temp-then-rename step so concurrent readers never
observe partial files.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FrameLabeling, LabelSpace

EMBEDDING_MAGIC = b"EMB1"


@dataclass(frozen=True)
class ManifestEntry:
    video_id: str
    embedding_path: Path
    label_path: Path
    split: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def videos(self, split: str | None = None) -> list[ManifestEntry]:
        if split is None:
            return list(self.entries)
        return [e for e in self.entries if e.split == split]


@dataclass(frozen=True)
class KnownActionConfig:
    """Ordered known-class names; order fixes the ids of the observed space."""

    known_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.known_names:
            raise ValueError("known-action config is empty")
        if len(set(self.known_names)) != len(self.known_names):
            raise ValueError("duplicate names in known-action config")


def _atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _atomic_write_text(path: str | Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# embeddings


def write_embeddings(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError("empty sequence")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("non-finite embedding")
    data = np.ascontiguousarray(matrix, dtype="<f4")
    header = EMBEDDING_MAGIC + struct.pack("<II", data.shape[0], data.shape[1])
    _atomic_write_bytes(path, header + data.tobytes())


def read_embeddings(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] == EMBEDDING_MAGIC:
        if len(raw) < 12:
            raise ValueError(f"truncated file: {path}")
        n_frames, dim = struct.unpack("<II", raw[4:12])
        if n_frames == 0 or dim == 0:
            raise ValueError("empty sequence")
        payload = raw[12:]
        if len(payload) != n_frames * dim * 4:
            raise ValueError(f"truncated file: {path}")
        matrix = np.frombuffer(payload, dtype="<f4").reshape(n_frames, dim)
    else:
        matrix = _parse_text_embeddings(raw, path)
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"non-finite embedding in {path}")
    return matrix.astype(np.float32, copy=False)


def _parse_text_embeddings(raw: bytes, path: str | Path) -> np.ndarray:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ValueError(f"unrecognized format: {path}") from None
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError:
            raise ValueError(f"unrecognized format: {path} (line {lineno})") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ValueError(f"truncated file: {path} (line {lineno})")
        rows.append(values)
    if not rows or width == 0:
        raise ValueError("empty sequence")
    return np.asarray(rows, dtype=np.float32)


# ---------------------------------------------------------------------------
# labels and label maps


def read_label_map(path: str | Path) -> dict[str, int]:
    mapping: dict[str, int] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"bad label-map line {lineno} in {path}")
        name, id_str = parts
        if name in mapping:
            raise ValueError(f"duplicate name {name!r} at line {lineno} in {path}")
        mapping[name] = int(id_str)
    if not mapping:
        raise ValueError(f"empty label map: {path}")
    ids = sorted(mapping.values())
    if ids != list(range(len(ids))):
        raise ValueError(f"label-map ids must be dense 0..n-1 in {path}")
    return mapping


def write_label_map(path: str | Path, mapping: dict[str, int]) -> None:
    lines = [f"{name} {mapping[name]}" for name in sorted(mapping, key=mapping.get)]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def space_from_label_map(mapping: dict[str, int]) -> LabelSpace:
    """Raw dataset space: every mapped name is a 'known' class, UNK unused."""
    names = sorted(mapping, key=mapping.get)
    return LabelSpace(tuple(names))


def read_labels(path: str | Path, space: LabelSpace) -> FrameLabeling:
    ids = []
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        name = line.strip()
        if not name:
            continue
        try:
            ids.append(space.id_of(name))
        except ValueError:
            raise ValueError(f"unknown label at line {lineno} in {path}") from None
    if not ids:
        raise ValueError(f"empty label file: {path}")
    return FrameLabeling(np.asarray(ids, dtype=np.int64), space)


def write_labels(path: str | Path, labeling: FrameLabeling) -> None:
    names = [labeling.space.name_of(int(i)) for i in labeling.labels]
    _atomic_write_text(path, "\n".join(names) + "\n")


# ---------------------------------------------------------------------------
# known-action config


def read_known_config(path: str | Path) -> KnownActionConfig:
    names = [
        line.strip()
        for line in Path(path).read_text("utf-8").splitlines()
        if line.strip()
    ]
    return KnownActionConfig(tuple(names))


def write_known_config(path: str | Path, config: KnownActionConfig) -> None:
    _atomic_write_text(path, "\n".join(config.known_names) + "\n")


def observed_space(raw_space: LabelSpace, config: KnownActionConfig) -> LabelSpace:
    """The known + UNK space induced by a known-action config.

    Known classes keep the order of the raw space, so ids are stable
    regardless of config-file ordering.
    """
    raw_names = [raw_space.name_of(i) for i in range(raw_space.unk_id)]
    missing = set(config.known_names) - set(raw_names)
    if missing:
        raise ValueError(f"known-config names absent from the label map: {sorted(missing)}")
    return LabelSpace(tuple(n for n in raw_names if n in set(config.known_names)))


def apply_known_config(labeling: FrameLabeling, config: KnownActionConfig) -> FrameLabeling:
    """Relabel every class outside the config to the single UNK id."""
    src = labeling.space
    out_space = observed_space(src, config)
    translate = np.full(src.n_classes, out_space.unk_id, dtype=np.int64)
    for new_id in range(out_space.unk_id):
        translate[src.id_of(out_space.name_of(new_id))] = new_id
    return FrameLabeling(translate[labeling.labels], out_space)


# ---------------------------------------------------------------------------
# manifest


def read_manifest(path: str | Path) -> DatasetManifest:
    base = Path(path).parent
    entries = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"bad manifest line {lineno} in {path}")
        video_id, emb, lab, split = parts
        if split not in ("train", "test"):
            raise ValueError(f"bad split {split!r} at line {lineno} in {path}")
        if video_id in seen:
            raise ValueError(f"duplicate video id {video_id!r} at line {lineno}")
        seen.add(video_id)
        emb_path = base / emb if not Path(emb).is_absolute() else Path(emb)
        lab_path = base / lab if not Path(lab).is_absolute() else Path(lab)
        for p in (emb_path, lab_path):
            if not p.exists():
                raise FileNotFoundError(f"manifest references missing file: {p}")
        entries.append(ManifestEntry(video_id, emb_path, lab_path, split))
    if not entries:
        raise ValueError(f"empty manifest: {path}")
    return DatasetManifest(tuple(entries))


def write_manifest(path: str | Path, rows: list[tuple[str, str, str, str]]) -> None:
    lines = ["\t".join(row) for row in rows]
    _atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# reports


def write_report(path: str | Path, report: dict[str, float | None]) -> None:
    lines = []
    for key in sorted(report):
        value = report[key]
        lines.append(f"{key}=n/a" if value is None else f"{key}={value:.4f}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_report(path: str | Path) -> dict[str, float | None]:
    report: dict[str, float | None] = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if not key or not value:
            raise ValueError(f"bad report line {lineno} in {path}")
        report[key] = None if value == "n/a" else float(value)
    return report
