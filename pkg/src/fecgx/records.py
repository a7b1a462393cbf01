"""Record and segment-batch file formats, plus fold splitting.

Records travel as either a line-oriented CSV (one header row, one row per
sample) or a flat binary (magic ``FREC``) with little-endian float32
samples. Segment batches use a parallel binary layout (magic ``FSEG``).
All writes are atomic: temp file then rename, so a failed run never leaves
a partial file behind.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ShapeError
from .signals import MultiSignal, SegmentBatch, Signal

__all__ = [
    "RecordFile", "FoldPlan", "read_record", "write_record", "make_folds",
    "write_fold_manifests", "save_segment_batch", "load_segment_batch",
    "RECORD_MAGIC", "SEGMENT_MAGIC",
]

RECORD_MAGIC = b"FREC"
SEGMENT_MAGIC = b"FSEG"
FORMAT_VERSION = 1


@dataclass
class RecordFile:
    """One recording: header metadata, per-channel samples, optional R-peak
    annotations (sample indices)."""

    record_id: str
    sample_rate_hz: float
    channel_labels: list[str]
    data: np.ndarray  # (channels, samples)
    annotations: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ShapeError("record data must be (channels, samples)")
        if len(self.channel_labels) != self.data.shape[0]:
            raise ShapeError("one label per channel required")
        if self.annotations is not None:
            self.annotations = np.asarray(self.annotations, dtype=np.int64)
            if self.annotations.size and (
                    np.any(np.diff(self.annotations) <= 0)
                    or self.annotations[0] < 0
                    or self.annotations[-1] >= self.data.shape[1]):
                raise ValueError("annotations must be sorted and in bounds")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def to_multisignal(self) -> MultiSignal:
        return MultiSignal([Signal(row, self.sample_rate_hz) for row in self.data])

    def channel(self, i=0) -> Signal:
        return Signal(self.data[i], self.sample_rate_hz)


def _atomic_write(path, payload: bytes):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".rec-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_record(rec: RecordFile, path, fmt: str = "bin"):
    """Serialize a record. BIN round-trips bit-exactly (float32 payload);
    CSV is value-exact to about 1e-6 (9 significant digits)."""
    if fmt == "bin":
        _atomic_write(path, _encode_bin(rec))
    elif fmt == "csv":
        _atomic_write(path, _encode_csv(rec))
    else:
        raise ValueError(f"unknown record format {fmt!r}")


def read_record(path, fmt: str | None = None) -> RecordFile:
    if fmt is None:
        fmt = "csv" if str(path).endswith(".csv") else "bin"
    with open(path, "rb") as fh:
        payload = fh.read()
    return _decode_csv(payload) if fmt == "csv" else _decode_bin(payload)


def _encode_csv(rec: RecordFile) -> bytes:
    header = f"# rate={rec.sample_rate_hz:g} channels={','.join(rec.channel_labels)}"
    header += f" id={rec.record_id}"
    if rec.annotations is not None:
        header += " annotations=" + ";".join(str(i) for i in rec.annotations)
    lines = [header]
    cols = rec.data.astype(np.float32)
    for j in range(rec.n_samples):
        lines.append(",".join(f"{cols[c, j]:.9g}" for c in range(rec.n_channels)))
    return ("\n".join(lines) + "\n").encode("ascii")


def _decode_csv(payload: bytes) -> RecordFile:
    text = payload.decode("ascii", errors="replace")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise FormatError("CSV record missing its '# rate=... channels=...' header")
    fields = {}
    for token in lines[0][1:].split():
        if "=" not in token:
            raise FormatError(f"malformed header token {token!r}")
        key, val = token.split("=", 1)
        fields[key] = val
    try:
        rate = float(fields["rate"])
        labels = fields["channels"].split(",")
    except KeyError as missing:
        raise FormatError(f"CSV header missing {missing}") from None
    annotations = None
    if "annotations" in fields and fields["annotations"]:
        annotations = np.array([int(v) for v in fields["annotations"].split(";")])
    rows = []
    for ln in lines[1:]:
        vals = ln.split(",")
        if len(vals) != len(labels):
            raise FormatError(
                f"row has {len(vals)} values for {len(labels)} channels")
        rows.append([float(v) for v in vals])
    if not rows:
        raise FormatError("CSV record has no sample rows")
    return RecordFile(fields.get("id", ""), rate, labels,
                      np.asarray(rows).T, annotations)


def _encode_bin(rec: RecordFile) -> bytes:
    out = bytearray()
    out += RECORD_MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    rid = rec.record_id.encode("utf-8")
    out += struct.pack("<I", len(rid)) + rid
    out += struct.pack("<dI", rec.sample_rate_hz, rec.n_channels)
    for label in rec.channel_labels:
        lb = label.encode("utf-8")
        out += struct.pack("<I", len(lb)) + lb
    ann = rec.annotations if rec.annotations is not None else np.empty(0, np.int64)
    out += struct.pack("<I", ann.size)
    out += ann.astype("<i8").tobytes()
    out += struct.pack("<Q", rec.n_samples)
    out += rec.data.T.astype("<f4").tobytes(order="C")  # channel-interleaved
    return bytes(out)


class _Reader:
    def __init__(self, payload: bytes):
        self.buf = payload
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("record file truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode_bin(payload: bytes) -> RecordFile:
    r = _Reader(payload)
    if r.take(4) != RECORD_MAGIC:
        raise FormatError("not a record file (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise FormatError(f"unknown record format version {version}")
    (rid_len,) = r.unpack("<I")
    rid = r.take(rid_len).decode("utf-8")
    rate, n_ch = r.unpack("<dI")
    labels = []
    for _ in range(n_ch):
        (lb_len,) = r.unpack("<I")
        labels.append(r.take(lb_len).decode("utf-8"))
    (n_ann,) = r.unpack("<I")
    ann = np.frombuffer(r.take(8 * n_ann), dtype="<i8").copy() if n_ann else None
    (n_samples,) = r.unpack("<Q")
    raw = r.take(4 * n_samples * n_ch)
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after record payload")
    data = np.frombuffer(raw, dtype="<f4").reshape(n_samples, n_ch).T
    return RecordFile(rid, rate, labels, data.astype(np.float64), ann)


def save_segment_batch(batch: SegmentBatch, path):
    out = bytearray()
    out += SEGMENT_MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    n, m, c = batch.data.shape
    out += struct.pack("<dBIII", batch.sample_rate_hz, int(batch.normalized),
                       n, m, c)
    out += np.packbits(batch.degenerate.astype(np.uint8)).tobytes()
    if batch.start_indices is not None:
        out += struct.pack("<I", n)
        out += batch.start_indices.astype("<i8").tobytes()
    else:
        out += struct.pack("<I", 0)
    out += batch.data.astype("<f4").tobytes(order="C")
    _atomic_write(path, bytes(out))


def load_segment_batch(path) -> SegmentBatch:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != SEGMENT_MAGIC:
        raise FormatError("not a segment batch file (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise FormatError(f"unknown segment batch version {version}")
    rate, normalized, n, m, c = r.unpack("<dBIII")
    flag_bytes = math.ceil(n * c / 8)
    flags = np.unpackbits(np.frombuffer(r.take(flag_bytes), np.uint8),
                          count=n * c).reshape(n, c).astype(bool)
    (n_starts,) = r.unpack("<I")
    starts = None
    if n_starts:
        starts = np.frombuffer(r.take(8 * n_starts), dtype="<i8").copy()
    data = np.frombuffer(r.take(4 * n * m * c), dtype="<f4")
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after segment batch payload")
    return SegmentBatch(data.reshape(n, m, c).astype(np.float64), rate,
                        normalized=bool(normalized), degenerate=flags,
                        start_indices=starts)


@dataclass
class FoldPlan:
    """Deterministic k-way partition; fold sizes differ by at most one."""

    k: int
    assignment: list[list[int]]
    seed: int

    def fold_indices(self, fold: int) -> list[int]:
        return self.assignment[fold]

    def train_indices(self, fold: int) -> list[int]:
        return sorted(i for f, members in enumerate(self.assignment)
                      for i in members if f != fold)


def make_folds(n_items: int, k: int = 5, seed: int = 0) -> FoldPlan:
    if n_items < k:
        raise ValueError(f"cannot split {n_items} items into {k} folds")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(n_items)
    assignment = [sorted(int(i) for i in order[f::k]) for f in range(k)]
    return FoldPlan(k=k, assignment=assignment, seed=seed)


def write_fold_manifests(plan: FoldPlan, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for f, members in enumerate(plan.assignment):
        path = os.path.join(out_dir, f"fold_{f}.txt")
        body = "\n".join(str(i) for i in members) + "\n"
        _atomic_write(path, body.encode("ascii"))
        paths.append(path)
    return paths
