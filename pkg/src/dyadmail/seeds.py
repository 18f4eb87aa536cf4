"""Named seed derivation so every random stream traces back to one run seed."""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *names) -> int:
    """A 63-bit seed determined by `seed` and the path of `names`."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode("ascii"))
    for n in names:
        h.update(b"/")
        h.update(str(n).encode("utf-8"))
    return int.from_bytes(h.digest(), "little") >> 1


def derive_rng(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *names))
