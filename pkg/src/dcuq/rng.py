"""Counter-based random streams.

Every random quantity is addressed by ``(seed, tag, index)``. A stream is a
Philox generator keyed by ``SeedSequence(seed, spawn_key=tag)``; element ``i``
of a stream is the ``i``-th double it produces. Because Philox is counter
based, any slice ``[start, stop)`` can be generated independently, so chunked
or parallel generation reproduces serial output bit-for-bit.

Tags in use::

    (0,)            prior samples (element i*dim + d is coordinate d of sample i)
    (1,)            rejection sampling uniforms
    (2, rep, M)     sub-sample selection for KDE-only sweeps
"""
import numpy as np

PRIOR_TAG = (0,)
REJECTION_TAG = (1,)
SUBSAMPLE_TAG = 2

_DOUBLES_PER_BLOCK = 4


def _stream(seed, tag):
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(tag))
    return np.random.Philox(key=ss.generate_state(2, np.uint64))


def uniforms(seed, tag, start, stop):
    """Elements ``[start, stop)`` of the stream ``(seed, tag)`` as doubles in [0, 1)."""
    if stop < start or start < 0:
        raise ValueError("invalid stream slice")
    bitgen = _stream(seed, tag)
    block, offset = divmod(start, _DOUBLES_PER_BLOCK)
    if block:
        bitgen.advance(block)
    gen = np.random.Generator(bitgen)
    return gen.random(offset + (stop - start))[offset:]


def chunked_uniforms(seed, tag, count, chunk=None):
    """Generate ``count`` stream elements, optionally in chunks of ``chunk``."""
    if not chunk or chunk >= count:
        return uniforms(seed, tag, 0, count)
    parts = [uniforms(seed, tag, a, min(a + chunk, count)) for a in range(0, count, chunk)]
    return np.concatenate(parts)
