"""Per-trip behavioral factors: step-size law, daily energy budget, and motif weight.

All distances are kilometers and energies kilojoules unless a name says
otherwise. The gyration/exploration helpers are unit-agnostic: they return
values in whatever units the input coordinates use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, ParameterError, UnboundedMarginError

LN2 = math.log(2.0)

# Median daily personal travel energy, kJ. Long-run commuter studies put the
# bulk of daily expenditure at or below this value; it anchors the default
# exponential energy budget and is config-overridable.
DEFAULT_MEDIAN_ENERGY_KJ = 615.0

PTE_GRID_POINTS = 32768
PTE_SUPPORT_MULT = 40.0


@dataclass(frozen=True)
class LevyParams:
    """Location (mu) and scale (c) of the heavy-tailed single-trip distance law, km."""

    mu_km: float = 0.0
    c_km: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mu_km) and self.mu_km >= 0):
            raise ParameterError(f"levy mu must be >= 0 km, got {self.mu_km}")
        if not (math.isfinite(self.c_km) and self.c_km > 0):
            raise ParameterError(f"levy c must be > 0 km, got {self.c_km}")


def levy_pdf(r_km: float, params: LevyParams) -> float:
    """Density (1/km) of a single-trip distance r under the heavy-tailed step law.

    sqrt(c / 2pi) * exp(-c / (2(r - mu))) / (r - mu)^(3/2), defined for r > mu.
    """
    mu, c = params.mu_km, params.c_km
    if r_km <= mu:
        raise ParameterError(f"levy density requires r > mu ({mu} km), got {r_km}")
    dr = r_km - mu
    return math.sqrt(c / (2.0 * math.pi)) * math.exp(-c / (2.0 * dr)) / dr**1.5


def levy_cdf(r_km: float, params: LevyParams) -> float:
    """Closed-form CDF of the step law: erfc(sqrt(c / (2(r - mu))))."""
    if r_km <= params.mu_km:
        return 0.0
    return math.erfc(math.sqrt(params.c_km / (2.0 * (r_km - params.mu_km))))


# --- daily travel-energy distribution ---------------------------------------

# family name -> builder(median_kj) returning (pdf callable, support upper bound)
_PTE_FAMILIES: dict[str, Callable[[float], tuple[Callable[[float], float], float]]] = {}


def register_pte_family(name: str, builder: Callable[[float], tuple[Callable[[float], float], float]]) -> None:
    """Register a travel-energy density family for use via config.

    The builder maps a target median (kJ) to a (pdf, support_upper_kj) pair;
    the pdf must be calibrated so its median equals the target.
    """
    _PTE_FAMILIES[name] = builder


@dataclass(frozen=True, eq=False)
class PteDistribution:
    """Distribution of personal energy spent on travel per day.

    The default family is exponential with its median pinned to the
    615 kJ anchor; other families plug in through the registry and get a
    numerically integrated CDF grid. quantile() inverts the CDF and raises
    when the grid never reaches the requested probability.
    """

    family: str
    mean_energy_kj: float
    median_kj: float
    xs: np.ndarray = field(repr=False)
    pdf_grid: np.ndarray = field(repr=False)
    cdf_grid: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.xs, self.pdf_grid, self.cdf_grid):
            arr.setflags(write=False)
        if np.any(self.pdf_grid < 0):
            raise ParameterError("travel-energy density must be non-negative")
        if np.any(np.diff(self.cdf_grid) < 0):
            raise ParameterError("travel-energy CDF must be monotone")
        total = float(np.trapezoid(self.pdf_grid, self.xs))
        if abs(total - 1.0) > 1e-6:
            raise ParameterError(
                f"travel-energy density integrates to {total}, not 1 +- 1e-6; widen the support"
            )

    @classmethod
    def from_median(cls, median_kj: float = DEFAULT_MEDIAN_ENERGY_KJ, family: str = "exponential",
                    grid_points: int = PTE_GRID_POINTS) -> "PteDistribution":
        if not (math.isfinite(median_kj) and median_kj > 0):
            raise ParameterError(f"median energy must be > 0 kJ, got {median_kj}")
        if family == "exponential":
            lam = median_kj / LN2
            xs = np.linspace(0.0, PTE_SUPPORT_MULT * lam, grid_points)
            pdf = np.exp(-xs / lam) / lam
            cdf = -np.expm1(-xs / lam)
            return cls(family=family, mean_energy_kj=lam, median_kj=median_kj,
                       xs=xs, pdf_grid=pdf, cdf_grid=cdf)
        if family in _PTE_FAMILIES:
            pdf_fn, hi = _PTE_FAMILIES[family](median_kj)
            xs = np.linspace(0.0, hi, grid_points)
            pdf = np.array([pdf_fn(float(x)) for x in xs])
            dx = np.diff(xs)
            cdf = np.concatenate(([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * dx)))
            mean = float(np.trapezoid(pdf * xs, xs))
            return cls(family=family, mean_energy_kj=mean, median_kj=median_kj,
                       xs=xs, pdf_grid=pdf, cdf_grid=cdf)
        raise ParameterError(f"unknown travel-energy family '{family}'")

    def pdf(self, energy_kj: float) -> float:
        if energy_kj < 0:
            return 0.0
        if self.family == "exponential":
            lam = self.mean_energy_kj
            return math.exp(-energy_kj / lam) / lam
        return float(np.interp(energy_kj, self.xs, self.pdf_grid))

    def cdf(self, energy_kj: float) -> float:
        if energy_kj <= 0:
            return 0.0
        if self.family == "exponential":
            return -math.expm1(-energy_kj / self.mean_energy_kj)
        return float(np.interp(energy_kj, self.xs, self.cdf_grid))

    def survival(self, energy_kj: float) -> float:
        """P(daily energy budget >= energy_kj)."""
        if energy_kj <= 0:
            return 1.0
        if self.family == "exponential":
            return math.exp(-energy_kj / self.mean_energy_kj)
        return 1.0 - self.cdf(energy_kj)

    def quantile(self, p: float) -> float:
        if not 0.0 <= p < 1.0:
            raise ParameterError(f"quantile probability must be in [0, 1), got {p}")
        if self.family == "exponential":
            return -self.mean_energy_kj * math.log1p(-p)
        if p > self.cdf_grid[-1]:
            raise UnboundedMarginError(
                f"travel-energy CDF reaches only {self.cdf_grid[-1]:.8f} on its support; "
                f"cannot invert p={p}"
            )
        return float(np.interp(p, self.cdf_grid, self.xs))


def pte_density(energy_kj: float, dist: PteDistribution) -> float:
    """Density (1/kJ) of spending energy_kj on travel in one day."""
    if energy_kj < 0:
        raise ParameterError(f"energy must be >= 0 kJ, got {energy_kj}")
    return dist.pdf(energy_kj)


# --- modalities --------------------------------------------------------------


@dataclass(frozen=True)
class ModalityProfile:
    """One travel mode: personal energy per km, population share, cruise speed."""

    name: str
    energy_rate_kj_per_km: float
    share: float
    speed_km_h: float

    def __post_init__(self):
        if not self.name:
            raise ParameterError("modality needs a name")
        if not (math.isfinite(self.energy_rate_kj_per_km) and self.energy_rate_kj_per_km > 0):
            raise ParameterError(f"modality '{self.name}': energy rate must be > 0 kJ/km")
        if not 0.0 <= self.share <= 1.0:
            raise ParameterError(f"modality '{self.name}': share must be in [0, 1]")
        if not (math.isfinite(self.speed_km_h) and self.speed_km_h > 0):
            raise ParameterError(f"modality '{self.name}': speed must be > 0 km/h")


def validate_modality_shares(modalities: Sequence[ModalityProfile]) -> None:
    if not modalities:
        raise ParameterError("need at least one modality")
    names = [m.name for m in modalities]
    if len(set(names)) != len(names):
        raise ParameterError(f"duplicate modality names: {names}")
    total = math.fsum(m.share for m in modalities)
    if abs(total - 1.0) > 1e-9:
        raise ParameterError(f"modality shares sum to {total}, expected 1 +- 1e-9")


def daily_time_budget_h(dist: PteDistribution, modality: ModalityProfile) -> float:
    """Expected daily travel-time budget: mean energy over (rate * speed).

    Diagnostic only; reported per modality, not a trip factor.
    """
    return dist.mean_energy_kj / modality.energy_rate_kj_per_km / modality.speed_km_h


# --- visited-location geometry ----------------------------------------------

Location = tuple  # ((x, y), visit_count)


def _coords(loc) -> tuple[float, float]:
    point = loc[0]
    if hasattr(point, "x"):
        return float(point.x), float(point.y)
    return float(point[0]), float(point[1])


def radius_of_gyration(locations: Sequence[Location], k: int | None = None) -> float:
    """RMS distance of the k most-visited locations from their visit-weighted centroid.

    Weighs each squared offset by its visit count but normalizes by the
    number of locations considered (not by total visits). Returns the same
    units as the input coordinates.
    """
    if not locations:
        raise InputError("need at least one visited location")
    visits = [float(n) for _, n in locations]
    if any(n < 1 for n in visits):
        raise ParameterError("visit counts must be >= 1")
    if k is not None:
        if k < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        order = sorted(range(len(locations)), key=lambda i: (-visits[i], i))[:k]
    else:
        order = range(len(locations))
    pts = np.array([_coords(locations[i]) for i in order])
    n = np.array([visits[i] for i in order])
    centroid = (pts * n[:, None]).sum(axis=0) / n.sum()
    sq = ((pts - centroid) ** 2).sum(axis=1)
    return float(math.sqrt((n * sq).sum() / len(pts)))


def exploration_ratio(locations: Sequence[Location], k: int) -> float:
    """Gyration radius over the top-k locations divided by the full radius.

    Near 1 marks a returner (recurrent few places), near 0 an explorer whose
    spread is carried by rarely visited places. All-co-located degenerates
    to 1.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    full = radius_of_gyration(locations, None)
    if full == 0.0:
        return 1.0
    return radius_of_gyration(locations, k) / full


# --- motif weight -------------------------------------------------------------


@dataclass(frozen=True)
class MotifParams:
    """Returner/explorer mixture for the daily-pattern weight.

    w(s) = (1 - p_e) * s^gamma_r + p_e * (1 - s)^gamma_e. Returner-dominant
    by default; any replacement callable can be injected for calibration.
    """

    p_e: float = 0.2
    gamma_r: float = 2.0
    gamma_e: float = 2.0
    weight_fn: Callable[[float], float] | None = None

    def __post_init__(self):
        if not 0.0 < self.p_e < 1.0:
            raise ParameterError(f"p_e must be in (0, 1), got {self.p_e}")
        if self.gamma_r <= 0 or self.gamma_e <= 0:
            raise ParameterError("motif exponents must be > 0")


def motif_weight(s_k: float, params: MotifParams) -> float:
    """Weight in (0, 1] for a trip whose exploration ratio is s_k (clamped to [0, 1])."""
    s = min(1.0, max(0.0, s_k))
    if params.weight_fn is not None:
        w = float(params.weight_fn(s))
        if not 0.0 < w <= 1.0:
            raise ParameterError(f"custom motif weight must lie in (0, 1], got {w}")
        return w
    return (1.0 - params.p_e) * s**params.gamma_r + params.p_e * (1.0 - s) ** params.gamma_e


@dataclass(frozen=True)
class BehaviorModel:
    """Bundle of the behavioral factor models used while scoring trips."""

    levy: LevyParams = LevyParams()
    pte: PteDistribution = None
    motif: MotifParams = MotifParams()

    def __post_init__(self):
        if self.pte is None:
            object.__setattr__(self, "pte", PteDistribution.from_median())
