"""Stub weather model: turns wind-vote observations into a WindField.

Stands in for a numerical forecast; it runs as a normal federated job
with a declared walltime so scheduling, escalation and chaining are all
exercised, but the result itself is a pure function of
(region, observations, seed).
"""

from __future__ import annotations

import random
import zlib

from .fire import WindField

_VOTE_ORDER = ("N", "E", "S", "W")


def weather_stub(region: str, observations: list[str] | None, seed: int = 0) -> WindField:
    votes = [v for v in (observations or []) if v in _VOTE_ORDER]
    if not votes:
        return WindField(region_id=region, direction="calm", strength=0.0)
    counts = {d: votes.count(d) for d in _VOTE_ORDER}
    top = max(counts.values())
    leaders = [d for d in _VOTE_ORDER if counts[d] == top]
    if len(leaders) == 1:
        direction = leaders[0]
    else:
        # stable tie-break: a reproducible draw keyed on all inputs
        digest = zlib.crc32(f"{seed}|{region}|{','.join(votes)}".encode())
        direction = random.Random(digest).choice(leaders)
    strength = round(top / len(votes), 6)
    return WindField(region_id=region, direction=direction, strength=min(1.0, strength))
