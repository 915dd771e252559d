import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from markset.errors import DomainError

logger = logging.getLogger(__name__)

MAX_NODES = 2**22
GENERATOR = "philox"


@dataclass(frozen=True)
class GridSpec:
    """Regular grid on [0, extent)^d with ``nodes`` points per axis."""

    dimension: int
    extent: float
    spacing: float
    periodic: bool = True

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise DomainError(f"grids are 1-D or 2-D, got dimension {self.dimension}")
        if not (self.spacing > 0 and self.extent > 0):
            raise DomainError("extent and spacing must be positive")
        ratio = self.extent / self.spacing
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise DomainError(f"extent {self.extent} is not an integer multiple of spacing {self.spacing}")
        if round(ratio) < 1:
            raise DomainError("grid needs at least one node")
        if round(ratio) ** self.dimension > MAX_NODES:
            raise DomainError(f"grid exceeds the node limit of {MAX_NODES}")

    @classmethod
    def regular(cls, nodes: int, spacing: float, dimension: int = 1, periodic: bool = True) -> "GridSpec":
        return cls(dimension=dimension, extent=nodes * spacing, spacing=spacing, periodic=periodic)

    @property
    def nodes(self) -> int:
        """Nodes per axis."""
        return int(round(self.extent / self.spacing))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.nodes,) * self.dimension

    @property
    def size(self) -> int:
        return self.nodes**self.dimension

    def axis(self) -> np.ndarray:
        return np.arange(self.nodes) * self.spacing

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dimension)`` in C order."""
        if self.dimension == 1:
            return self.axis()[:, None]
        xx, yy = np.meshgrid(self.axis(), self.axis(), indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def lag_index(self, r: float) -> int:
        """Nearest whole number of spacings to the distance ``r``."""
        if r < 0:
            raise DomainError(f"lags are nonnegative, got {r}")
        return int(round(r / self.spacing))


@dataclass(frozen=True)
class RngSeed:
    """Root seed of a counter-based stream family.

    Replicate ``i`` draws from Philox keyed by SeedSequence(seed, spawn_key=(i,)),
    so each replicate is reproducible on its own, in any order and any process.
    """

    seed: int
    generator: str = GENERATOR

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.generator != GENERATOR:
            raise DomainError(f"only the {GENERATOR} generator is supported")

    def stream(self, replicate: int = 0) -> np.random.Generator:
        if replicate < 0:
            raise DomainError("replicate index must be nonnegative")
        sequence = np.random.SeedSequence(self.seed, spawn_key=(replicate,))
        return np.random.Generator(np.random.Philox(sequence))


def lag_distances(grid: GridSpec, embed: int) -> np.ndarray:
    """Distances from node 0 to every node of a periodic grid with ``embed`` nodes per axis."""
    k = np.arange(embed)
    k = np.minimum(k, embed - k) * grid.spacing
    if grid.dimension == 1:
        return k
    return np.hypot(k[:, None], k[None, :])


def dense_distances(grid: GridSpec) -> np.ndarray:
    """Euclidean distance matrix of a non-periodic grid."""
    coords = grid.coordinates()
    delta = coords[:, None, :] - coords[None, :, :]
    return np.sqrt(np.sum(delta**2, axis=-1))


def cells_within(radius: float, spacing: float, dimension: int) -> np.ndarray:
    """Boolean disk footprint of all offsets with length <= radius."""
    m = int(math.floor(radius / spacing + 1e-9))
    offsets = np.arange(-m, m + 1) * spacing
    if dimension == 1:
        return np.abs(offsets) <= radius + 1e-9 * spacing
    return np.hypot(offsets[:, None], offsets[None, :]) <= radius + 1e-9 * spacing
