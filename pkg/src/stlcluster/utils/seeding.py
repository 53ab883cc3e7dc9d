"""Deterministic seed derivation.

Every random draw in the pipeline is keyed by (master seed, purpose, index) so
results do not depend on execution order or thread count.
"""

import zlib

import numpy as np
import torch

SEED_PURPOSES = (
    "clustering-instances",
    "trajopt",
    "xmeans",
    "classifier",
    "train-instances",
    "policy",
    "single-policy",
    "test-instances",
)


def derive_seed(master_seed: int, purpose: str, *indices: int) -> int:
    """Derive an independent 63-bit seed from a master seed.

    Args:
        master_seed: Run-level seed
        purpose: Stream name; distinct names give independent streams
        *indices: Further integer keys (instance index, restart, cluster...)

    Returns:
        Non-negative integer seed
    """
    purpose_key = zlib.crc32(purpose.encode())
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(purpose_key, *indices))
    state = sequence.generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def numpy_generator(seed: int) -> np.random.Generator:
    """Seeded numpy generator."""
    return np.random.default_rng(seed)


def torch_generator(seed: int) -> torch.Generator:
    """Seeded CPU torch generator, independent of the global RNG."""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator
