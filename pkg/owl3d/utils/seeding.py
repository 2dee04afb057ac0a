"""
Counter-based random streams keyed by (master seed, stream name).

Every scene gets its own Philox stream so results do not depend on the order
in which scenes are processed or on how many workers process them.
"""
import hashlib

import numpy as np


def stream_key(master_seed: int, stream: str) -> int:
    digest = hashlib.sha256(f"{int(master_seed)}:{stream}".encode("utf-8")).digest()
    # Philox takes a 128-bit key
    return int.from_bytes(digest[:16], "little")


def stream_rng(master_seed: int, stream: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, stream)))


def scene_rng(master_seed: int, scene_id: str) -> np.random.Generator:
    return stream_rng(master_seed, f"scene/{scene_id}")
