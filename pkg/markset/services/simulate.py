"""
Marked-set realizations on regular grids.

Three generators: excursion sets of stationary Gaussian fields (circulant
embedding with a dense fallback), the 1-periodic triangle-mark model and the
segment-singleton model whose singletons carry no volume.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np
import pandas as pd
from scipy import linalg

from markset.core.covariance import CovarianceModel
from markset.errors import DomainError, EmbeddingError
from markset.services.grid import GridSpec, RngSeed, dense_distances, lag_distances

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4096
PSD_CLIP = 1e-10


@dataclass(eq=False)
class MarkedSetSample:
    """One discretized realization of a random marked closed set.

    ``marks`` holds NaN off the set. ``atomic`` flags member nodes standing in
    for zero-volume parts of the set (isolated points).
    """

    grid: GridSpec
    membership: np.ndarray
    marks: np.ndarray
    atomic: Optional[np.ndarray] = None
    model: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    replicate: int = 0

    def __post_init__(self):
        self.membership = np.asarray(self.membership, dtype=bool)
        self.marks = np.asarray(self.marks, dtype=float)
        if self.atomic is None:
            self.atomic = np.zeros(self.grid.shape, dtype=bool)
        self.atomic = np.asarray(self.atomic, dtype=bool)
        for name in ("membership", "marks", "atomic"):
            if getattr(self, name).shape != self.grid.shape:
                raise DomainError(f"{name} has shape {getattr(self, name).shape}, grid is {self.grid.shape}")
        if np.any(np.isfinite(self.marks) != self.membership):
            raise DomainError("marks must be defined exactly on member nodes")
        if np.any(self.atomic & ~self.membership):
            raise DomainError("atomic nodes must be members")

    @property
    def volume_members(self) -> np.ndarray:
        """Member nodes that carry volume."""
        return self.membership & ~self.atomic

    def member_fraction(self) -> float:
        return float(np.mean(self.volume_members))

    def mark_sums(self):
        """(sum of marks, count) over volume-carrying members."""
        keep = self.volume_members
        return float(np.sum(self.marks[keep])), int(np.count_nonzero(keep))

    def shifted(self, offset: int) -> "MarkedSetSample":
        """Periodic translation by ``offset`` nodes along every axis."""
        axes = tuple(range(self.grid.dimension))
        shift = (offset,) * self.grid.dimension
        return MarkedSetSample(
            grid=self.grid,
            membership=np.roll(self.membership, shift, axis=axes),
            marks=np.roll(self.marks, shift, axis=axes),
            atomic=np.roll(self.atomic, shift, axis=axes),
            model=dict(self.model),
            seed=self.seed,
            replicate=self.replicate,
        )

    def to_frame(self) -> pd.DataFrame:
        coords = self.grid.coordinates()
        data = {"x": coords[:, 0]}
        if self.grid.dimension == 2:
            data["y"] = coords[:, 1]
        data["member"] = self.membership.ravel()
        data["atomic"] = self.atomic.ravel()
        data["mark"] = self.marks.ravel()
        return pd.DataFrame(data)


class GaussianFieldSampler:
    """Centred unit-variance stationary Gaussian field on a grid.

    Periodic grids are sampled by circulant embedding of the wrapped
    covariance; other grids are embedded in a periodic grid twice as long.
    When the embedding has a negative eigenvalue beyond the clip level, a
    non-periodic grid with at most ``dense_limit`` nodes is factorized
    directly instead.
    """

    def __init__(
        self,
        grid: GridSpec,
        covariance: CovarianceModel,
        psd_clip: float = PSD_CLIP,
        dense_limit: int = DENSE_LIMIT,
    ):
        self.grid = grid
        self.covariance = covariance
        self.psd_clip = psd_clip
        self._amplitude = None
        self._factor = None

        embed = grid.nodes if grid.periodic else 2 * grid.nodes
        lam = np.fft.fftn(np.asarray(covariance(lag_distances(grid, embed)), dtype=float)).real
        min_lam, max_lam = float(lam.min()), float(lam.max())
        if min_lam >= -psd_clip * max(max_lam, 1.0):
            if min_lam < 0:
                logger.warning(f"clipping circulant eigenvalues down to {min_lam:.3e}")
            self._embed = embed
            self._amplitude = np.sqrt(np.clip(lam, 0.0, None) / lam.size)
            self.method = "circulant"
        elif not grid.periodic and grid.size <= dense_limit:
            logger.info(f"circulant embedding not nonnegative ({min_lam:.3e}); using dense factorization")
            self._factor = self._dense_factor()
            self.method = "dense"
        else:
            raise EmbeddingError(
                f"circulant embedding of {covariance.family} on {grid.shape} grid is not nonnegative",
                min_lam,
            )
        logger.debug(f"gaussian sampler ready: {self.method}, grid {grid.shape}")

    def _dense_factor(self) -> np.ndarray:
        cov = np.asarray(self.covariance(dense_distances(self.grid)), dtype=float)
        eigenvalues, eigenvectors = linalg.eigh(cov)
        lo, hi = float(eigenvalues[0]), float(eigenvalues[-1])
        if lo < -self.psd_clip * max(hi, 1.0):
            raise EmbeddingError("covariance matrix is not positive semidefinite", lo)
        if lo < 0:
            logger.warning(f"clipping covariance eigenvalues down to {lo:.3e}")
        return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        grid = self.grid
        if self._factor is not None:
            z = rng.standard_normal(grid.size)
            return (self._factor @ z).reshape(grid.shape)
        shape = self._amplitude.shape
        xi = rng.standard_normal((2,) + shape)
        y = np.fft.fftn(self._amplitude * (xi[0] + 1j * xi[1])).real
        return y[tuple(slice(0, grid.nodes) for _ in range(grid.dimension))].copy()


def sample_grf(
    grid: GridSpec, cov: CovarianceModel, seed: RngSeed, replicate: int = 0, psd_clip: float = PSD_CLIP
) -> np.ndarray:
    """One realization of the field for replicate ``replicate`` of ``seed``."""
    return GaussianFieldSampler(grid, cov, psd_clip=psd_clip).sample(seed.stream(replicate))


def excursion_sample(
    field_values: np.ndarray,
    t: float,
    grid: GridSpec,
    seed: Optional[int] = None,
    replicate: int = 0,
    model: Optional[Dict[str, Any]] = None,
) -> MarkedSetSample:
    """Excursion set {Z >= t} marked by the field itself."""
    values = np.asarray(field_values, dtype=float).reshape(grid.shape)
    member = values >= t
    return MarkedSetSample(
        grid=grid,
        membership=member,
        marks=np.where(member, values, np.nan),
        model={"kind": "excursion", "t": t, **(model or {})},
        seed=seed,
        replicate=replicate,
    )


# ---------------------------------------------------------------------------
# deterministic models with a random phase
# ---------------------------------------------------------------------------

def periodic_triangle_mark(u, p: float) -> np.ndarray:
    """Triangle mark at in-period offset ``u = (x - xi) mod 1``; NaN off the set."""
    u = np.asarray(u, dtype=float)
    rising = u < p / 2
    falling = (u >= p / 2) & (u <= p)
    return np.where(rising, u, np.where(falling, p - u, np.nan))


def periodic_triangle_sample(
    p: float, seed: RngSeed, replicate: int = 0, grid: Optional[GridSpec] = None
) -> MarkedSetSample:
    """Set Z + [xi, xi + p] with the 1-periodic triangle mark, xi ~ U[0, 1)."""
    if not 2.0 / 3.0 < p <= 1.0:
        raise DomainError(f"p must lie in (2/3, 1], got {p}")
    grid = grid or GridSpec.regular(2000, 1.0 / 2000)
    if grid.dimension != 1 or not grid.periodic:
        raise DomainError("periodic example needs a 1-D periodic grid")
    if abs(grid.extent - round(grid.extent)) > 1e-9 or round(grid.extent) < 1:
        raise DomainError("grid must cover a whole number of periods")
    if grid.spacing > p / 200 + 1e-15:
        raise DomainError(f"spacing {grid.spacing} does not resolve p/200 = {p / 200}")

    xi = float(seed.stream(replicate).uniform())
    u = np.mod(grid.axis() - xi, 1.0)
    marks = periodic_triangle_mark(u, p)
    return MarkedSetSample(
        grid=grid,
        membership=np.isfinite(marks),
        marks=marks,
        model={"kind": "periodic-triangle", "p": p, "xi": xi},
        seed=seed.seed,
        replicate=replicate,
    )


def periodic_triangle_cov(r, p: float):
    """Mark covariance of the triangle model; 1-periodic and symmetric."""
    if not 2.0 / 3.0 < p <= 1.0:
        raise DomainError(f"p must lie in (2/3, 1], got {p}")
    r = np.mod(np.asarray(r, dtype=float), 1.0)
    r = np.where(r > 0.5, 1.0 - r, r)
    q = 2 * p - 1
    near = (p**4 - 4 * p**3 * r - 12 * p**2 * r**2 + 48 * p * r**3 - 36 * r**4) / (48 * (p - r) ** 2)
    middle = (
        -3 * p**4 - 24 * p**3 * r + 12 * p**3 - 48 * p**2 * r**2 + 48 * p**2 * r - 12 * p**2
        + 64 * p * r**3 + 48 * p * r**2 - 48 * p * r + 8 * p - 32 * r**3 - 24 * r**2 + 24 * r - 4
    ) / (48 * q**2)
    far = -(
        4 * p**4 - 8 * p**3 + 6 * p**2 - 2 * p + 12 * r**4 - 24 * r**3 + 18 * r**2 - 6 * r + 1
    ) / (12 * q**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.select([r < 1 - p, r < p / 2], [near, middle], default=far)
    return float(out) if out.ndim == 0 else out


def periodic_triangle_cov_integral(p: float) -> float:
    """Integral of the triangle-model mark covariance over one period."""
    if not 2.0 / 3.0 < p <= 1.0:
        raise DomainError(f"p must lie in (2/3, 1], got {p}")
    q = 2 * p - 1
    poly = 409 * p**5 - 790 * p**4 + 565 * p**3 - 280 * p**2 + 120 * p - 24
    return 7.0 / 6.0 * p**3 * math.log(p / q) + poly / (120 * q**2)


def periodic_triangle_breakpoints(p: float):
    """Kinks of the covariance on [0, 1]."""
    return sorted({1 - p, p / 2, 0.5, 1 - p / 2, p})


def segment_singleton_sample(
    p: float,
    seed: RngSeed,
    replicate: int = 0,
    grid: Optional[GridSpec] = None,
    mark_rule: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> MarkedSetSample:
    """Segments [2z - p, 2z + p] plus singletons {2z + 1}, all shifted by xi ~ U[0, 2).

    Marks default to the distance to the boundary of the set, which is 0 on
    the singletons. ``mark_rule`` maps the in-period offset u in [0, 2) to a
    mark and replaces the default.
    """
    if not 0.0 < p < 1.0 / 3.0:
        raise DomainError(f"p must lie in (0, 1/3), got {p}")
    grid = grid or GridSpec.regular(800, 0.01)
    if grid.dimension != 1 or not grid.periodic:
        raise DomainError("segment-singleton model needs a 1-D periodic grid")
    periods = grid.extent / 2.0
    if abs(periods - round(periods)) > 1e-9 or round(periods) < 1:
        raise DomainError("grid must cover a whole number of periods of length 2")

    xi = float(seed.stream(replicate).uniform(0.0, 2.0))
    x = grid.axis()
    u = np.mod(x - xi, 2.0)
    to_centre = np.minimum(u, 2.0 - u)
    segment = to_centre <= p + 1e-12

    atomic = np.zeros(grid.nodes, dtype=bool)
    singles = np.mod(xi + 1.0 + 2.0 * np.arange(int(round(periods))), grid.extent)
    atomic[np.mod(np.rint(singles / grid.spacing).astype(int), grid.nodes)] = True
    atomic &= ~segment
    member = segment | atomic

    if mark_rule is None:
        values = np.where(segment, p - to_centre, 0.0)
    else:
        values = np.asarray(mark_rule(u), dtype=float)
    marks = np.where(member, values, np.nan)
    return MarkedSetSample(
        grid=grid,
        membership=member,
        marks=marks,
        atomic=atomic,
        model={"kind": "segment-singleton", "p": p, "xi": xi},
        seed=seed.seed,
        replicate=replicate,
    )
