"""
Empirical kappa_f estimates and the derived mark characteristics.

For each lag h and dilation radius eps the estimator is a ratio of sums over
node pairs (x, x + h) with both nodes in the (dilated) set:

    kappa_f(h) ~ sum f(Z_eps(x), Z_eps(x + h)) / #pairs

accumulated over all translations and all replicates. eps = 0 means no
dilation; isolated (atomic) nodes then carry no weight. Pair sums for all
lags come from FFT cross-correlations, zero-padded under minus-sampling.
Standard errors are delete-one jackknife errors over replicates.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Literal, Optional, Sequence

import numpy as np
from scipy import ndimage

from markset.core.gauss import SecondOrderValues
from markset.errors import DegenerateError, DomainError, NoPairsError
from markset.services.grid import GridSpec, cells_within
from markset.services.simulate import MarkedSetSample

logger = logging.getLogger(__name__)

# channels of the per-replicate pair sums
PAIRS, E_PLUS, E_MINUS, C, V_PLUS, V_MINUS = range(6)
N_CHANNELS = 6
F_TAGS = ("e", "c", "v")


@dataclass(frozen=True)
class EstimatorConfig:
    lags: Sequence[float]
    eps: Sequence[float] = (0.0,)
    replicates: Optional[int] = None
    edge_correction: Optional[Literal["periodic", "minus-sampling"]] = None

    def __post_init__(self):
        if not self.lags:
            raise DomainError("lag grid is empty")
        if any(r < 0 for r in self.lags):
            raise DomainError("lags must be nonnegative")
        if not self.eps:
            raise DomainError("need at least one dilation radius")
        if any(e < 0 for e in self.eps):
            raise DomainError("dilation radii must be nonnegative")
        if list(self.eps) != sorted(self.eps, reverse=True):
            raise DomainError("dilation radii must be listed in descending order")

    def edge_mode(self, grid: GridSpec) -> str:
        if self.edge_correction is None:
            return "periodic" if grid.periodic else "minus-sampling"
        if self.edge_correction == "periodic" and not grid.periodic:
            raise DomainError("periodic edge correction needs a periodic grid")
        return self.edge_correction

    def validate(self, grid: GridSpec) -> List[int]:
        """Check radii and lags against ``grid``; return lag indices."""
        for e in self.eps:
            if 0.0 < e < grid.spacing * (1 - 1e-9):
                raise DomainError(f"dilation radius {e} is below the grid spacing {grid.spacing}")
        indices = [grid.lag_index(r) for r in self.lags]
        limit = grid.nodes - 1 if self.edge_mode(grid) == "periodic" else grid.nodes // 2
        for r, k in zip(self.lags, indices):
            if k > limit:
                raise DomainError(f"lag {r} exceeds the admissible range for this grid and edge correction")
        return indices


@dataclass(frozen=True)
class KappaEstimate:
    f_tag: str
    r: float
    eps: float
    estimate: Optional[float]
    stderr: Optional[float]
    pairs: int

    @property
    def defined(self) -> bool:
        return self.pairs > 0 and self.estimate is not None


def dilated_mark_field(sample: MarkedSetSample, eps: float) -> np.ndarray:
    """Max of marks over the set within distance eps; NaN off the dilated set."""
    grid = sample.grid
    if eps < grid.spacing * (1 - 1e-9):
        raise DomainError(f"dilation radius {eps} is below the grid spacing {grid.spacing}")
    footprint = cells_within(eps, grid.spacing, grid.dimension)
    marks = np.where(sample.membership, sample.marks, -np.inf)
    mode = "wrap" if grid.periodic else "constant"
    dilated = ndimage.maximum_filter(marks, footprint=footprint, mode=mode, cval=-np.inf)
    return np.where(np.isfinite(dilated), dilated, np.nan)


def _weights_and_values(sample: MarkedSetSample, eps: float):
    if eps == 0.0:
        w = sample.volume_members
        a = np.where(w, sample.marks, 0.0)
    else:
        z = dilated_mark_field(sample, eps)
        w = np.isfinite(z)
        a = np.where(w, z, 0.0)
    return w.astype(float), a


def _lagged(a: np.ndarray, b: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    """sum_x a(x) b(x + k) for every lag k along ``axis``, summed over other axes."""
    n = a.shape[axis]
    size = n if periodic else 2 * n
    fa = np.fft.rfft(a, n=size, axis=axis)
    fb = np.fft.rfft(b, n=size, axis=axis)
    corr = np.fft.irfft(np.conj(fa) * fb, n=size, axis=axis)
    corr = np.take(corr, np.arange(n), axis=axis)
    other = tuple(i for i in range(a.ndim) if i != axis)
    return corr.sum(axis=other) if other else corr


def pair_sums(sample: MarkedSetSample, cfg: EstimatorConfig) -> np.ndarray:
    """Per-sample sums, shape (n_eps, n_lags, 6)."""
    grid = sample.grid
    indices = cfg.validate(grid)
    periodic = cfg.edge_mode(grid) == "periodic"
    out = np.zeros((len(cfg.eps), len(indices), N_CHANNELS))
    for i, eps in enumerate(cfg.eps):
        w, a = _weights_and_values(sample, eps)
        aw, a2w = a * w, a * a * w
        total = np.zeros((grid.nodes, N_CHANNELS))
        for axis in range(grid.dimension):
            total[:, PAIRS] += _lagged(w, w, axis, periodic)
            total[:, E_PLUS] += _lagged(aw, w, axis, periodic)
            total[:, E_MINUS] += _lagged(w, aw, axis, periodic)
            total[:, C] += _lagged(aw, aw, axis, periodic)
            total[:, V_PLUS] += _lagged(a2w, w, axis, periodic)
            total[:, V_MINUS] += _lagged(w, a2w, axis, periodic)
        total[:, PAIRS] = np.rint(total[:, PAIRS])
        out[i] = total[indices]
    return out


@dataclass
class PairSums:
    """Per-replicate sums, reduced in replicate order."""

    lags: List[float]
    eps: List[float]
    sums: np.ndarray  # (replicates, n_eps, n_lags, 6)
    marks: np.ndarray  # (replicates, 2): sum of marks, member count
    grid_lags: List[float] = field(default_factory=list)

    @classmethod
    def from_samples(cls, samples: Iterable[MarkedSetSample], cfg: EstimatorConfig) -> "PairSums":
        samples = list(samples)
        if not samples:
            raise DomainError("need at least one sample")
        sums = np.stack([pair_sums(s, cfg) for s in samples])
        marks = np.array([s.mark_sums() for s in samples], dtype=float)
        return cls.build(samples[0].grid, cfg, sums, marks)

    @classmethod
    def build(cls, grid: GridSpec, cfg: EstimatorConfig, sums: np.ndarray, marks: np.ndarray) -> "PairSums":
        grid_lags = [grid.lag_index(r) * grid.spacing for r in cfg.lags]
        return cls(lags=list(cfg.lags), eps=list(cfg.eps), sums=sums, marks=marks, grid_lags=grid_lags)

    @property
    def replicates(self) -> int:
        return self.sums.shape[0]

    def totals(self) -> np.ndarray:
        return self.sums.sum(axis=0)


def jackknife(statistic, sums: np.ndarray, *extra: np.ndarray):
    """Delete-one jackknife standard error of ``statistic(total, *extra_totals)``.

    ``sums`` and every array in ``extra`` have replicates on axis 0.
    """
    total = sums.sum(axis=0)
    extra_totals = [x.sum(axis=0) for x in extra]
    value = statistic(total, *extra_totals)
    n = sums.shape[0]
    if n < 2:
        return value, np.full(np.shape(value), np.nan)
    leave_out = np.array(
        [statistic(total - sums[i], *[t - x[i] for t, x in zip(extra_totals, extra)]) for i in range(n)]
    )
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(leave_out, axis=0)
        se = np.sqrt((n - 1) / n * np.nansum((leave_out - mean) ** 2, axis=0))
    return value, se


def _ratio(channel: int):
    def stat(total):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(total[..., PAIRS] > 0, total[..., channel] / total[..., PAIRS], np.nan)

    return stat


def estimate_kappa(
    samples, f_tag: str, cfg: EstimatorConfig, sums: Optional[PairSums] = None
) -> List[KappaEstimate]:
    """kappa_f estimates for every (eps, lag); e and v come at +r and -r.

    Raises NoPairsError when some lag has no joint-membership pairs at any eps.
    """
    if f_tag not in F_TAGS:
        raise DomainError(f"f_tag must be one of {F_TAGS}, got {f_tag!r}")
    sums = sums or PairSums.from_samples(samples, cfg)
    pairs = sums.totals()[..., PAIRS]
    empty = [r for j, r in enumerate(sums.lags) if np.all(pairs[:, j] == 0)]
    if empty:
        raise NoPairsError(f"no joint-membership pairs at lags {empty}", lags=empty)

    channels = {"e": [(E_PLUS, 1), (E_MINUS, -1)], "c": [(C, 1)], "v": [(V_PLUS, 1), (V_MINUS, -1)]}[f_tag]
    out: List[KappaEstimate] = []
    for channel, sign in channels:
        value, se = jackknife(_ratio(channel), sums.sums)
        for i, eps in enumerate(sums.eps):
            for j, r in enumerate(sums.grid_lags):
                n_pairs = int(pairs[i, j])
                defined = n_pairs > 0
                out.append(
                    KappaEstimate(
                        f_tag=f_tag,
                        r=sign * r,
                        eps=eps,
                        estimate=float(value[i, j]) if defined else None,
                        stderr=float(se[i, j]) if defined and math.isfinite(se[i, j]) else None,
                        pairs=n_pairs,
                    )
                )
    return out


def derive_characteristics(
    kappa_e_plus: float,
    kappa_e_minus: float,
    kappa_c: float,
    kappa_v_plus: float,
    kappa_v_minus: float,
    mean_mark: float,
    strict: bool = True,
) -> SecondOrderValues:
    """E, gamma, cov, cor and k_mm from the kappa values.

    With ``strict=False`` an undefined cor or k_mm becomes NaN instead of
    raising DegenerateError.
    """
    cov = kappa_c - kappa_e_plus * kappa_e_minus
    gamma = 0.5 * (kappa_v_plus + kappa_v_minus) - kappa_c
    var_plus = kappa_v_plus - kappa_e_plus**2
    var_minus = kappa_v_minus - kappa_e_minus**2
    if var_plus > 0 and var_minus > 0:
        cor = cov / math.sqrt(var_plus * var_minus)
    elif strict:
        raise DegenerateError("mark variance vanishes; correlation is undefined")
    else:
        cor = math.nan
    if mean_mark != 0:
        kmm = kappa_c / mean_mark**2
    elif strict:
        raise DegenerateError("mean mark is zero; k_mm is undefined")
    else:
        kmm = math.nan
    return SecondOrderValues(E=kappa_e_plus, cov=cov, gamma=gamma, cor=cor, kmm=kmm)


def _characteristics_array(total: np.ndarray, mark_total: np.ndarray) -> np.ndarray:
    """Vectorized derive_characteristics over (eps, lag); last axis E, cov, gamma, cor, kmm."""
    n = total[..., PAIRS]
    with np.errstate(divide="ignore", invalid="ignore"):
        e_p = total[..., E_PLUS] / n
        e_m = total[..., E_MINUS] / n
        c = total[..., C] / n
        v_p = total[..., V_PLUS] / n
        v_m = total[..., V_MINUS] / n
        m = mark_total[0] / mark_total[1] if mark_total[1] > 0 else np.nan
        cov = c - e_p * e_m
        var = (v_p - e_p**2) * (v_m - e_m**2)
        cor = np.where(var > 0, cov / np.sqrt(np.where(var > 0, var, 1.0)), np.nan)
        kmm = c / m**2 if m else np.full_like(c, np.nan)
    return np.stack([e_p, cov, 0.5 * (v_p + v_m) - c, cor, kmm], axis=-1)


@dataclass(frozen=True)
class CharacteristicEstimate:
    r: float
    eps: float
    pairs: int
    values: SecondOrderValues
    stderr: SecondOrderValues


def estimate_characteristics(sums: PairSums) -> List[CharacteristicEstimate]:
    """All five characteristics per (eps, lag) with jackknife errors."""
    value, se = jackknife(_characteristics_array, sums.sums, sums.marks)
    pairs = sums.totals()[..., PAIRS]
    out = []
    for i, eps in enumerate(sums.eps):
        for j, r in enumerate(sums.grid_lags):
            out.append(
                CharacteristicEstimate(
                    r=r,
                    eps=eps,
                    pairs=int(pairs[i, j]),
                    values=SecondOrderValues(*map(float, value[i, j])),
                    stderr=SecondOrderValues(*map(float, se[i, j])),
                )
            )
    return out


def mean_mark_estimate(sums: PairSums) -> float:
    total, count = sums.marks.sum(axis=0)
    if count == 0:
        raise DegenerateError("no volume-carrying member nodes")
    return float(total / count)


@dataclass(frozen=True)
class EpsilonLimit:
    eps: List[float]
    values: List[float]
    extrapolated: float
    degree: int
    trend: str

    @property
    def monotone(self) -> bool:
        return self.trend != "non-monotone"


def epsilon_limit_diagnostic(eps: Sequence[float], values: Sequence[float], tol: float = 1e-12) -> EpsilonLimit:
    """Polynomial extrapolation of an eps ladder to eps = 0 plus a trend flag.

    The trend describes how values move as eps shrinks: "decreasing",
    "increasing", "constant" or "non-monotone".
    """
    e = np.asarray(eps, dtype=float)
    v = np.asarray(values, dtype=float)
    if e.size < 3 or e.size != v.size:
        raise DomainError("need at least three (eps, value) pairs")
    if not np.all(np.isfinite(v)):
        raise DomainError("eps ladder contains undefined estimates")
    order = np.argsort(-e)
    e, v = e[order], v[order]
    steps = np.diff(v)
    scale = tol * max(1.0, float(np.max(np.abs(v))))
    if np.all(np.abs(steps) <= scale):
        trend = "constant"
    elif np.all(steps <= scale):
        trend = "decreasing"
    elif np.all(steps >= -scale):
        trend = "increasing"
    else:
        trend = "non-monotone"
        logger.warning(f"eps ladder is not monotone: {v.tolist()}")
    degree = min(2, e.size - 2)
    coeffs = np.polyfit(e, v, degree)
    return EpsilonLimit(
        eps=e.tolist(),
        values=v.tolist(),
        extrapolated=float(np.polyval(coeffs, 0.0)),
        degree=degree,
        trend=trend,
    )


def kappa_table(estimates: Iterable[KappaEstimate]) -> List[Dict[str, object]]:
    """Rows with columns kind, r, eps, estimate, stderr, pairs."""
    return [
        {
            "kind": f"kappa_{k.f_tag}",
            "r": k.r,
            "eps": k.eps,
            "estimate": k.estimate,
            "stderr": k.stderr,
            "pairs": k.pairs,
        }
        for k in estimates
    ]
