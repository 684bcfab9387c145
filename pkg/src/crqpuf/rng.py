"""Seed derivation for reproducible experiment substreams.

Every stage of an experiment draws from its own substream keyed by
(root seed, purpose tag, counter), so fan-out order or parallelism can
never change results.
"""
import numpy as np

# purpose tags; values are arbitrary but frozen (reports depend on them)
QGEN = 0x51
CHALLENGE = 0x52
ENROLL = 0x53
TRAIN = 0x54
HONEST = 0x55
IMPOSTOR_SEED = 0x56
IMPOSTOR = 0x57


def substream(root: int, tag: int, counter: int = 0) -> int:
    """Derive an independent 64-bit stream seed from (root, tag, counter)."""
    ss = np.random.SeedSequence([root, tag, counter])
    return int(ss.generate_state(1, np.uint64)[0])
