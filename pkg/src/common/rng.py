# src/common/rng.py
"""Named random streams derived from a single master seed."""

import zlib
import logging
import numpy as np

logger = logging.getLogger(__name__)

STREAM_NAMES = ("plant", "init", "noise", "replay", "fisher", "montecarlo")


def stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def rng_stream(master_seed, name):
    """
    Generator for the sub-stream `name`.

    Derivation: SeedSequence(entropy=master_seed, spawn_key=(crc32(name),)), PCG64.
    Streams are independent of each other, so adding a consumer never shifts another.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(stream_key(name),))
    logger.debug(f"rng_stream({master_seed}, {name!r}) key={stream_key(name)}")
    return np.random.Generator(np.random.PCG64(seq))


def trial_stream(master_seed, name, index):
    """Per-trial stream: (master seed, name, trial index)."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(stream_key(name), int(index)))
    return np.random.Generator(np.random.PCG64(seq))


class RngStreams:
    """Bundle of named generators, optionally under a prefix such as 'proposed/'."""

    def __init__(self, master_seed, prefix=""):
        self.master_seed = int(master_seed)
        self.prefix = prefix
        self._streams = {name: rng_stream(master_seed, prefix + name) for name in STREAM_NAMES}

    def __getattr__(self, name):
        streams = self.__dict__.get("_streams", {})
        if name in streams:
            return streams[name]
        raise AttributeError(name)

    def get_state(self):
        return {name: g.bit_generator.state for name, g in self._streams.items()}

    def set_state(self, state):
        for name, s in state.items():
            self._streams[name].bit_generator.state = s
