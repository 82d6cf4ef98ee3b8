"""Binary on-disk formats: dataset splits and model checkpoints.

Dataset split layout (one directory per split):
  <split>/manifest.txt          one video id per line
  <split>/<vid>.feat            "JDFT" header + f32 LE row-major matrix
  <split>/<vid>.lbl             "JDLB" header + {0,1} bytes row-major

Both headers are 16 bytes: 4-byte magic, u32 num_frames, u32 num_cols,
u32 reserved (zero), all little-endian.

Checkpoint: "JDCK", u32 format version, length-prefixed key-value config
text, then named f32 tensors until EOF (u16 name length, name bytes,
u8 rank, u32 dims, f32 LE data). Round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, VersionMismatchError
from .synth_data import EventTimeline, FeatureSequence

_HEADER = struct.Struct("<4sIII")
FEATURE_MAGIC = b"JDFT"
LABEL_MAGIC = b"JDLB"
CHECKPOINT_MAGIC = b"JDCK"
CHECKPOINT_VERSION = 1


def _write_matrix(path: Path, magic: bytes, matrix: np.ndarray, raw: bytes) -> None:
    header = _HEADER.pack(magic, matrix.shape[0], matrix.shape[1], 0)
    path.write_bytes(header + raw)


def _read_header(data: bytes, magic: bytes, path) -> tuple[int, int]:
    if len(data) < _HEADER.size:
        raise ConfigError(f"{path}: truncated header")
    got, rows, cols, _ = _HEADER.unpack_from(data)
    if got != magic:
        raise ConfigError(f"{path}: bad magic {got!r}, expected {magic!r}")
    return rows, cols


def write_features(path, seq: FeatureSequence) -> None:
    arr = np.ascontiguousarray(seq.features, dtype="<f4")
    _write_matrix(Path(path), FEATURE_MAGIC, arr, arr.tobytes())


def read_features(path) -> FeatureSequence:
    data = Path(path).read_bytes()
    rows, cols = _read_header(data, FEATURE_MAGIC, path)
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    if arr.size != rows * cols:
        raise ConfigError(f"{path}: payload size mismatch")
    return FeatureSequence(features=arr.reshape(rows, cols).astype(np.float32))


def write_labels(path, timeline: EventTimeline) -> None:
    arr = np.ascontiguousarray(timeline.labels, dtype=np.uint8)
    _write_matrix(Path(path), LABEL_MAGIC, arr, arr.tobytes())


def read_labels(path) -> EventTimeline:
    data = Path(path).read_bytes()
    rows, cols = _read_header(data, LABEL_MAGIC, path)
    arr = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if arr.size != rows * cols:
        raise ConfigError(f"{path}: payload size mismatch")
    labels = arr.reshape(rows, cols)
    if not np.isin(labels, (0, 1)).all():
        raise ConfigError(f"{path}: label entries outside {{0,1}}")
    return EventTimeline(labels=labels.copy())


def write_split(directory, pairs, prefix: str = "video") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = []
    for i, (seq, timeline) in enumerate(pairs):
        vid = f"{prefix}_{i:04d}"
        write_features(directory / f"{vid}.feat", seq)
        write_labels(directory / f"{vid}.lbl", timeline)
        ids.append(vid)
    (directory / "manifest.txt").write_text("".join(v + "\n" for v in ids))


def read_split(directory) -> list[tuple[FeatureSequence, EventTimeline]]:
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.exists():
        raise ConfigError(f"missing split manifest {manifest}")
    pairs = []
    for vid in manifest.read_text().splitlines():
        vid = vid.strip()
        if not vid:
            continue
        seq = read_features(directory / f"{vid}.feat")
        timeline = read_labels(directory / f"{vid}.lbl")
        if seq.num_frames != timeline.num_frames:
            raise ConfigError(f"{vid}: feature/label frame count mismatch")
        pairs.append((seq, timeline))
    return pairs


def write_dataset(root, train, test) -> None:
    write_split(Path(root) / "train", train)
    write_split(Path(root) / "test", test)


def read_dataset(root):
    return read_split(Path(root) / "train"), read_split(Path(root) / "test")


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(path, config_kv: dict, tensors: dict[str, np.ndarray]) -> None:
    """``tensors`` maps name -> float32 ndarray; written in dict order."""
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    from .config import format_kv

    cfg_bytes = format_kv(config_kv).encode("utf-8")
    chunks.append(struct.pack("<I", len(cfg_bytes)))
    chunks.append(cfg_bytes)
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise ConfigError(f"tensor name too long: {name!r}")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise VersionMismatchError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )
    (cfg_len,) = struct.unpack_from("<I", data, 8)
    offset = 12
    from .config import parse_kv_text

    config_kv = parse_kv_text(data[offset : offset + cfg_len].decode("utf-8"))
    offset += cfg_len
    tensors: dict[str, np.ndarray] = {}
    while offset < len(data):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", data, offset)
        offset += 1
        dims = struct.unpack_from(f"<{rank}I", data, offset)
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f4", offset=offset, count=count)
        offset += 4 * count
        tensors[name] = arr.reshape(dims).astype(np.float32)
    return config_kv, tensors
