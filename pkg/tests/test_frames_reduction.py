import random

import pytest

from urgentfed.ensemble.frames import (
    DTYPE_F64, DTYPE_U8, TelemetryFrame, decode_frame, encode_frame, read_frames,
)
from urgentfed.ensemble.reduction import FrameBuffer, Pipeline, build_pipeline
from urgentfed.workloads.fire import BURNING, WindField, fire_step, single_ignition_grid


def frame(cells, w, h, member="m1", seq=1, t=10.0):
    return TelemetryFrame(member_id=member, seq=seq, sim_time=t,
                          height=h, width=w, cells=cells)


class TestFrameCodec:
    @pytest.mark.parametrize("dtype", [DTYPE_U8, DTYPE_F64])
    def test_roundtrip(self, dtype):
        rng = random.Random(4)
        cells = [rng.randint(0, 3) for _ in range(12)]
        original = frame(cells, 4, 3, member="ens1/m-02", seq=77, t=123.5)
        decoded, end = decode_frame(encode_frame(original, dtype))
        assert decoded == original
        assert end == len(encode_frame(original, dtype))

    def test_stream_of_frames(self):
        frames = [frame([i] * 4, 2, 2, seq=i) for i in range(5)]
        blob = b"".join(encode_frame(f) for f in frames)
        assert list(read_frames(blob)) == frames

    def test_truncated_rejected(self):
        blob = encode_frame(frame([1, 2, 3, 4], 2, 2))
        with pytest.raises(ValueError):
            decode_frame(blob[:-2])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            frame([1, 2, 3], 2, 2)


class TestReducers:
    def test_stride_takes_top_left_samples(self):
        w = h = 100
        cells = [y * w + x for y in range(h) for x in range(w)]
        pipe = build_pipeline([{"stride": 10}])
        out = pipe.apply(frame(cells, w, h))
        grid = out["grid"]
        assert grid["width"] == grid["height"] == 10
        for yy in range(10):
            for xx in range(10):
                assert grid["cells"][yy * 10 + xx] == (yy * 10) * w + (xx * 10)

    def test_stride_non_divisible(self):
        pipe = build_pipeline([{"stride": 2}])
        out = pipe.apply(frame(list(range(25)), 5, 5))
        assert out["grid"]["width"] == 3 and out["grid"]["height"] == 3

    def test_all_zero_summary(self):
        pipe = build_pipeline([{"summary": True},
                               {"cell_count": {"op": "eq", "value": 1, "as": "burning"}}])
        out = pipe.apply(frame([0] * 64, 8, 8))
        assert out["min"] == 0 and out["max"] == 0 and out["mean"] == 0
        assert out["burning"] == 0

    def test_burning_count_matches_direct_enumeration(self):
        grid = single_ignition_grid(20, 20, seed=11)
        wind = WindField("r", "S", 0.3)
        for _ in range(6):
            grid = fire_step(grid, wind, 0.5)
        pipe = build_pipeline([{"cell_count": {"op": "eq", "value": BURNING, "as": "burning"}}])
        out = pipe.apply(frame(list(grid.cells), 20, 20))
        direct = 0
        for c in grid.cells:
            if c == BURNING:
                direct += 1
        assert out["burning"] == direct

    @pytest.mark.parametrize("seed", range(10))
    def test_summary_matches_brute_force(self, seed):
        rng = random.Random(seed)
        w, h = rng.randint(1, 30), rng.randint(1, 30)
        cells = [rng.uniform(-100, 100) for _ in range(w * h)]
        out = build_pipeline([{"summary": True}]).apply(frame(cells, w, h))
        total = 0
        lo, hi = cells[0], cells[0]
        for c in cells:
            total += c
            lo = min(lo, c)
            hi = max(hi, c)
        assert out["min"] == lo and out["max"] == hi
        assert out["mean"] == total / len(cells)

    def test_unknown_reducer_rejected(self):
        with pytest.raises(ValueError):
            build_pipeline([{"fourier": 3}])


class TestFrameBuffer:
    def test_overflow_drops_oldest(self):
        buf = FrameBuffer(capacity=3)
        for i in range(5):
            buf.push(bytes([i]))
        assert buf.dropped_overflow == 2
        assert buf.drain() == [b"\x02", b"\x03", b"\x04"]
        assert buf.drain() == []
