"""Counter-based, splittable random number helpers.

All randomness in the package flows through Philox generators seeded from a
SeedSequence, so chunked or parallel work reproduces bit-for-bit regardless
of how it is scheduled.
"""

import hashlib
from typing import List, Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


def seed_sequence(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    """
    Build a SeedSequence from a user seed plus optional integer keys.

    Args:
        seed: user seed, entropy list, or an existing SeedSequence
        *keys: extra words mixed into the entropy (instance hashes, stream ids)
    """
    if isinstance(seed, np.random.SeedSequence):
        if not keys:
            return seed
        return np.random.SeedSequence([*_entropy_words(seed.entropy), *keys],
                                      spawn_key=seed.spawn_key)
    if isinstance(seed, (int, np.integer)):
        return np.random.SeedSequence([int(seed), *keys])
    return np.random.SeedSequence([*map(int, seed), *keys])


def make_rng(seed: SeedLike, *keys: int) -> np.random.Generator:
    """Philox-backed Generator for the given seed and keys."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))


def spawn_seeds(seed: SeedLike, n: int) -> List[np.random.SeedSequence]:
    """Child SeedSequences (picklable, for process pools)."""
    return seed_sequence(seed).spawn(n)


def child_seed_int(ss: np.random.SeedSequence) -> int:
    """64-bit integer summarising a SeedSequence, for reporting."""
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def instance_hash(*arrays) -> int:
    """
    Stable 63-bit hash of numeric inputs.

    Used to derive per-instance QMC randomization from the user seed.
    """
    h = hashlib.blake2b(digest_size=8)
    for a in arrays:
        arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return int.from_bytes(h.digest(), "little") >> 1


def _entropy_words(entropy) -> List[int]:
    if entropy is None:
        return []
    if isinstance(entropy, (int, np.integer)):
        return [int(entropy)]
    return [int(e) for e in entropy]
