"""Wire format for member telemetry frames.

Workloads hand their per-timestep grids to the manager as
length-prefixed binary frames over a local stream:

    u32 frame_length                 (bytes after this field)
    u16 member_id_length | member_id (UTF-8)
    u64 seq
    f64 sim_time
    u8  dtype                        (0 = uint8 cells, 1 = float64 cells)
    u16 height | u16 width
    cells, row-major

Real simulation codes would speak the same framing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

_LEN = struct.Struct("<I")
_HEAD = struct.Struct("<H")  # member id length
_META = struct.Struct("<Qd B HH")

DTYPE_U8 = 0
DTYPE_F64 = 1


@dataclass
class TelemetryFrame:
    member_id: str
    seq: int
    sim_time: float
    height: int
    width: int
    cells: list[float] | list[int]

    def __post_init__(self):
        if len(self.cells) != self.height * self.width:
            raise ValueError("cell payload does not match dimensions")


def encode_frame(frame: TelemetryFrame, dtype: int = DTYPE_U8) -> bytes:
    member = frame.member_id.encode()
    meta = _META.pack(frame.seq, frame.sim_time, dtype, frame.height, frame.width)
    if dtype == DTYPE_U8:
        payload = struct.pack(f"<{len(frame.cells)}B", *[int(c) for c in frame.cells])
    elif dtype == DTYPE_F64:
        payload = struct.pack(f"<{len(frame.cells)}d", *[float(c) for c in frame.cells])
    else:
        raise ValueError(f"unknown dtype {dtype}")
    body = _HEAD.pack(len(member)) + member + meta + payload
    return _LEN.pack(len(body)) + body


def decode_frame(data: bytes, offset: int = 0) -> tuple[TelemetryFrame, int]:
    """Decode one frame starting at ``offset``; returns (frame, next_offset)."""
    (length,) = _LEN.unpack_from(data, offset)
    start = offset + _LEN.size
    end = start + length
    if end > len(data):
        raise ValueError("truncated frame")
    (mlen,) = _HEAD.unpack_from(data, start)
    member_id = data[start + _HEAD.size:start + _HEAD.size + mlen].decode()
    meta_at = start + _HEAD.size + mlen
    seq, sim_time, dtype, height, width = _META.unpack_from(data, meta_at)
    cells_at = meta_at + _META.size
    n = height * width
    if dtype == DTYPE_U8:
        cells = list(struct.unpack_from(f"<{n}B", data, cells_at))
    elif dtype == DTYPE_F64:
        cells = list(struct.unpack_from(f"<{n}d", data, cells_at))
    else:
        raise ValueError(f"unknown dtype {dtype}")
    return TelemetryFrame(member_id=member_id, seq=seq, sim_time=sim_time,
                          height=height, width=width, cells=cells), end


def read_frames(data: bytes) -> Iterator[TelemetryFrame]:
    offset = 0
    while offset < len(data):
        frame, offset = decode_frame(data, offset)
        yield frame
