"""
Seeded random streams.

Every stream is a counter-based Philox generator whose seed sequence is keyed
by (role, *key) under one master seed, so repetitions and realizations can be
drawn in any order or on any worker and still reproduce bit for bit.
"""
from dataclasses import dataclass
from enum import IntEnum
from typing import Tuple

import numpy as np


class StreamRole(IntEnum):
    FILTER = 0  # digital twin: initial ensemble and FBSDE solves
    TWIN = 1  # physical twin: initial state, model and observation noise
    SOLVER = 2  # stand-alone FBSDE solves
    CHECK = 3  # consistency checks


@dataclass(frozen=True)
class RngStreams:
    master_seed: int

    def __post_init__(self):
        if self.master_seed < 0:
            raise ValueError(f"master seed must be non-negative, got {self.master_seed}")

    def seed_sequence(self, *key: int, role: StreamRole = StreamRole.SOLVER) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=(int(role), *map(int, key)))

    def generator(self, *key: int, role: StreamRole = StreamRole.SOLVER) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence(*key, role=role)))

    def repetition(self, index: int) -> Tuple[np.random.Generator, np.random.Generator]:
        """(digital-twin stream, physical-twin stream) of one MPC repetition."""
        return (
            self.generator(index, role=StreamRole.FILTER),
            self.generator(index, role=StreamRole.TWIN),
        )


__all__ = ["StreamRole", "RngStreams"]
