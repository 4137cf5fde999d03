"""Derived RNG streams.

Every randomized stage draws from its own stream derived from (seed, stage
code, ...), so stages never share state and adding work to one stage cannot
shift another stage's draws.
"""

from __future__ import annotations

import numpy as np

_U64 = (1 << 64) - 1

# Stage codes. Stable across releases: changing one changes every artifact
# produced under that seed.
STAGE_SAMPLER = 1
STAGE_WALKS = 2
STAGE_SKIPGRAM = 3
STAGE_MODEL_INIT = 4
STAGE_UNSEEN = 5
STAGE_SHUFFLE = 6
STAGE_FEATURIZE = 7
STAGE_SPLIT = 8
STAGE_DEMO_KG = 9
STAGE_WANDERJOIN = 10

SHAPE_CODES = {"star": 1, "path": 2, "flower": 3, "snowflake": 4}


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """A Generator seeded from ``seed`` plus a stream-identifying tuple."""
    return np.random.default_rng((seed & _U64, *[s & _U64 for s in stream]))
