"""Append-only event log with checkpoints.

Record framing on disk (one segment file per store, rolled by
``compact``):

    u32 body_length | u32 crc32(body) | body

where body is UTF-8 JSON ``{"seq": n, "t": time, "kind": k, "body": {...}}``.
Sequence numbers are dense and strictly increasing from 1. A checkpoint
is a JSON file ``checkpoint-<seq>.json`` holding a full state snapshot;
replay starts from the newest valid checkpoint and folds the tail.

The store may also run purely in memory (``path=None``) for tests and
throwaway scenario runs.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path
from typing import Callable, Iterator

from ..errors import CorruptRecord

_FRAME = struct.Struct("<II")


class LogRecord(dict):
    """A log record; plain dict with attribute sugar."""

    @property
    def seq(self) -> int:
        return self["seq"]

    @property
    def t(self) -> float:
        return self["t"]

    @property
    def kind(self) -> str:
        return self["kind"]

    @property
    def body(self) -> dict:
        return self["body"]


def encode_record(record: dict) -> bytes:
    body = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
    return _FRAME.pack(len(body), zlib.crc32(body)) + body


class EventStore:
    def __init__(self, path: str | Path | None = None, sync: bool = False,
                 checkpoint_every: int = 1000):
        self.path = Path(path) if path is not None else None
        self.sync = sync
        self.checkpoint_every = checkpoint_every
        self.records: list[LogRecord] = []
        self._seq = 0
        self._fh = None
        self._subscribers: list[Callable[[LogRecord], None]] = []
        self.checkpoint_provider: Callable[[], dict] | None = None
        if self.path is not None:
            self.path.mkdir(parents=True, exist_ok=True)
            self._segment_path = self.path / "log-000001.seg"
            self._load_existing()
            self._fh = open(self._segment_path, "ab")

    # -- write path ----------------------------------------------------

    def append(self, t: float, kind: str, body: dict) -> LogRecord:
        self._seq += 1
        record = LogRecord(seq=self._seq, t=t, kind=kind, body=body)
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(encode_record(record))
            self._fh.flush()
            if self.sync:
                os.fsync(self._fh.fileno())
        for fn in self._subscribers:
            fn(record)
        if (self.checkpoint_provider is not None
                and self._seq % self.checkpoint_every == 0):
            self.write_checkpoint()
        return record

    def subscribe(self, fn: Callable[[LogRecord], None]) -> None:
        self._subscribers.append(fn)

    def unsubscribe(self, fn: Callable[[LogRecord], None]) -> None:
        if fn in self._subscribers:
            self._subscribers.remove(fn)

    @property
    def last_seq(self) -> int:
        return self._seq

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    # -- read path -----------------------------------------------------

    def read(self, from_seq: int = 0, kinds: set[str] | None = None) -> Iterator[LogRecord]:
        for record in self.records:
            if record.seq <= from_seq:
                continue
            if kinds is not None and record.kind not in kinds:
                continue
            yield record

    def _load_existing(self) -> None:
        if not self._segment_path.exists():
            return
        for record in read_segment(self._segment_path):
            self.records.append(record)
            self._seq = record.seq

    # -- checkpoints -----------------------------------------------------

    def write_checkpoint(self) -> Path | None:
        """Persist the provider's snapshot; used by auto-checkpointing
        and the ``compact`` CLI subcommand."""
        if self.checkpoint_provider is None or self.path is None:
            return None
        snapshot = self.checkpoint_provider()
        out = self.path / f"checkpoint-{self._seq:08d}.json"
        tmp = out.with_suffix(".tmp")
        tmp.write_text(json.dumps({"seq": self._seq, "state": snapshot},
                                  sort_keys=True))
        os.replace(tmp, out)
        return out

    def latest_checkpoint(self) -> tuple[int, dict] | None:
        if self.path is None:
            return None
        candidates = sorted(self.path.glob("checkpoint-*.json"), reverse=True)
        for cand in candidates:
            try:
                data = json.loads(cand.read_text())
                return data["seq"], data["state"]
            except (json.JSONDecodeError, KeyError):
                continue
        return None


def read_segment(path: str | Path) -> Iterator[LogRecord]:
    """Decode one segment file, stopping with CorruptRecord at the first
    bad frame (truncation or checksum failure)."""
    raw = Path(path).read_bytes()
    offset = 0
    last_valid = 0
    expected_seq = None
    while offset < len(raw):
        if offset + _FRAME.size > len(raw):
            raise CorruptRecord("truncated frame header", last_valid)
        length, crc = _FRAME.unpack_from(raw, offset)
        body = raw[offset + _FRAME.size: offset + _FRAME.size + length]
        if len(body) < length:
            raise CorruptRecord("truncated record body", last_valid)
        if zlib.crc32(body) != crc:
            raise CorruptRecord("checksum mismatch", last_valid)
        record = LogRecord(json.loads(body.decode()))
        if expected_seq is not None and record.seq != expected_seq:
            raise CorruptRecord(f"sequence gap: expected {expected_seq}, got {record.seq}",
                                last_valid)
        expected_seq = record.seq + 1
        last_valid = record.seq
        yield record
        offset += _FRAME.size + length


def replay_records(path: str | Path, from_seq: int = 0,
                   strict: bool = True) -> tuple[list[LogRecord], int | None]:
    """Read all records after ``from_seq`` from a store directory.

    Returns (records, truncation_seq). With strict=False a corrupt tail
    stops the read and reports where instead of raising.
    """
    segment = Path(path) / "log-000001.seg"
    records: list[LogRecord] = []
    truncated_at = None
    try:
        for record in read_segment(segment):
            if record.seq > from_seq:
                records.append(record)
    except CorruptRecord as err:
        if strict:
            raise
        truncated_at = err.last_valid_seq
    return records, truncated_at
