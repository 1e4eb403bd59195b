"""Reproducible counter-based random number streams.

Streams are numpy Philox generators keyed by a SHA-256 derivation of the
master seed and an arbitrary tuple of labels (experiment id, replica index,
purpose tag, ...).  The derivation is a stable pure function: the same
(master seed, labels) pair always yields the same stream, and distinct label
tuples yield statistically independent streams.  The exact construction is
part of the fixture contract:

    key = SHA-256("mdperc-v1|<master_seed>|<label_1>|<label_2>|...")
    stream = numpy Philox counter-based generator with that 256-bit key

Labels are rendered with repr() for ints and str() otherwise, joined with
'|'.  Changing this construction invalidates frozen fixtures.
"""

from __future__ import annotations

import hashlib

import numpy as np

_PREFIX = "mdperc-v1"


def stream_key(master_seed: int, *labels) -> np.ndarray:
    """Derive the 4x64-bit Philox key for a (master seed, labels) tuple."""
    parts = [_PREFIX, repr(int(master_seed))]
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            parts.append(repr(int(lab)))
        else:
            parts.append(str(lab))
    digest = hashlib.sha256("|".join(parts).encode("utf-8")).digest()
    return np.frombuffer(digest, dtype=np.uint64)


def seed_stream(master_seed: int, *labels) -> np.random.Generator:
    """Return the reproducible stream for a (master seed, labels) tuple.

    The first two 64-bit words of the digest form the Philox key, the last two
    the starting counter (high words zero).
    """
    words = stream_key(master_seed, *labels)
    counter = np.zeros(4, dtype=np.uint64)
    counter[:2] = words[2:]
    return np.random.Generator(np.random.Philox(key=words[:2], counter=counter))


def seed_descriptor(master_seed: int, *labels) -> str:
    """Opaque replayable token identifying a stream (stored in result rows)."""
    parts = [repr(int(master_seed))] + [str(lab) for lab in labels]
    return "|".join(parts)
