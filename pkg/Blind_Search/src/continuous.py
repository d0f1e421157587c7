"""
Scale-Invariant Blind Search on [0, 1]
Perturbation sizes d = exp(-p u), u uniform on [0, 1], so d has density
1/(p t) on [eps, 1] with precision p = ln(1/eps). The search minimizes
|x - x0|: one random sign per step, a candidate is accepted only if it
stays in [0, 1] and gets strictly closer to x0.
"""

import math
import logging
from dataclasses import dataclass
from multiprocessing import Pool
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .chain import DEFAULT_BLOCK_SIZE, chunk_bounds, run_generator, run_seed
from .errors import AllCensoredError


logger = logging.getLogger("BlindSearch.Continuous")

DEFAULT_X0 = 0.3
DEFAULT_MAX_STEPS = 10 ** 6
DEFAULT_EPS_LIST = tuple(2.0 ** -k for k in range(5, 13))
MAX_EPSILON = 0.25
SIGN_MODE = "single"            # one sign drawn per step, no second evaluation


@dataclass(frozen=True)
class ContinuousConfig:
    """Minimum perturbation size, optimum and step limit of one search."""
    epsilon: float
    x0: float = DEFAULT_X0
    max_steps: int = DEFAULT_MAX_STEPS

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 <= self.x0 <= 1.0:
            raise ValueError(f"x0 must lie in [0, 1], got {self.x0}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")

    @property
    def precision(self) -> float:
        """p = ln(1/eps)."""
        return -math.log(self.epsilon)


class ContinuousRunStats(NamedTuple):
    """
    One search. Every step is taken at distance >= 2 eps (the run stops on
    success), so step_count_total is also the number of halving-eligible steps.
    """
    steps_to_success: Optional[int]
    halving_events: int
    step_count_total: int
    succeeded: bool


def scale_from_uniform(p: float, u: Union[float, np.ndarray]):
    """d = exp(-p u); u = 0 gives 1, u = 1 gives eps = exp(-p)."""
    if not p > 0:
        raise ValueError(f"precision p must be positive, got {p}")
    return np.exp(-p * np.asarray(u)) if np.ndim(u) else math.exp(-p * u)


def sample_scale_invariant(p: float, rng: np.random.Generator, size: Optional[int] = None):
    """Draw perturbation sizes in [exp(-p), 1] with density 1/(p t)."""
    return scale_from_uniform(p, rng.random(size=size))


def simulate_continuous(
    cfg: ContinuousConfig,
    rng: np.random.Generator,
    block_size: int = DEFAULT_BLOCK_SIZE,
    distances: Optional[List[float]] = None,
) -> ContinuousRunStats:
    """
    One search from x uniform on [0, 1] until |x - x0| < 2 eps.

    A halving event is a step after which the distance is at most half the
    distance before it. When a list is passed as distances, it receives the
    starting distance and the distance after every step.
    """
    p = cfg.precision
    target = 2.0 * cfg.epsilon
    x = float(rng.random())
    distance = abs(x - cfg.x0)
    if distances is not None:
        distances.append(distance)
    if distance < target:
        return ContinuousRunStats(0, 0, 0, True)

    halvings = 0
    steps = 0
    sizes: List[float] = []
    signs: List[bool] = []
    pos = 0
    while steps < cfg.max_steps:
        if pos == len(sizes):
            sizes = sample_scale_invariant(p, rng, block_size).tolist()
            signs = (rng.random(block_size) < 0.5).tolist()
            pos = 0
        d = sizes[pos]
        candidate = x + d if signs[pos] else x - d
        pos += 1
        steps += 1

        before = distance
        if 0.0 <= candidate <= 1.0 and abs(candidate - cfg.x0) < distance:
            x = candidate
            distance = abs(candidate - cfg.x0)
        if distances is not None:
            distances.append(distance)
        if distance <= 0.5 * before:
            halvings += 1
        if distance < target:
            return ContinuousRunStats(steps, halvings, steps, True)

    return ContinuousRunStats(None, halvings, cfg.max_steps, False)


def distance_trajectory(cfg: ContinuousConfig, rng: np.random.Generator) -> List[float]:
    """Distances to x0 along one search, starting point first."""
    distances: List[float] = []
    simulate_continuous(cfg, rng, distances=distances)
    return distances


@dataclass
class PrecisionRow:
    """Statistics of all runs at one epsilon."""
    epsilon: float
    p: float
    mean_steps: float
    std_error: float
    halving_rate: float
    runs: int
    censored: int

    CSV_FIELDS = ("epsilon", "p", "mean_steps", "std_error", "halving_rate")

    def to_row(self) -> dict:
        return {name: getattr(self, name) for name in self.CSV_FIELDS}

    def to_dict(self) -> dict:
        data = self.to_row()
        data["runs"] = self.runs
        data["censored"] = self.censored
        return data


@dataclass
class ScalingFit:
    """
    Least-squares fits of mean steps against x = p log2(1/eps).

    coefficient: c in mean ~ c x, through the origin.
    slope, offset: a, b in mean ~ a x + b p, fitted on relative residuals.
    """
    coefficient: float
    slope: float
    offset: float
    max_relative_residual: float
    origin_max_relative_residual: float

    def to_dict(self) -> dict:
        return {
            "coefficient": self.coefficient,
            "slope": self.slope,
            "offset": self.offset,
            "max_relative_residual": self.max_relative_residual,
            "origin_max_relative_residual": self.origin_max_relative_residual,
        }


def fit_scaling(rows: Sequence[PrecisionRow]) -> ScalingFit:
    """Fit the precision table; needs at least one row with positive mean."""
    p = np.array([row.p for row in rows])
    y = np.array([row.mean_steps for row in rows])
    x = p * np.log2(1.0 / np.array([row.epsilon for row in rows]))

    coefficient = float(x @ y / (x @ x))
    origin_residual = float(np.max(np.abs(coefficient * x - y) / y))

    if len(rows) >= 2:
        design = np.column_stack((x / y, p / y))
        (slope, offset), *_ = np.linalg.lstsq(design, np.ones(len(rows)), rcond=None)
    else:
        slope, offset = coefficient, 0.0
    residual = float(np.max(np.abs(slope * x + offset * p - y) / y))

    return ScalingFit(
        coefficient=coefficient,
        slope=float(slope),
        offset=float(offset),
        max_relative_residual=residual,
        origin_max_relative_residual=origin_residual,
    )


def _run_chunk(task) -> List[ContinuousRunStats]:
    cfg, row_seed, lo, hi = task
    return [simulate_continuous(cfg, run_generator(row_seed, run)) for run in range(lo, hi)]


def run_precision_row(
    cfg: ContinuousConfig,
    runs: int,
    row_seed: int,
    workers: int = 1,
) -> PrecisionRow:
    """All runs at one epsilon; run i uses the generator of (row_seed, i)."""
    tasks = [(cfg, row_seed, lo, hi) for lo, hi in chunk_bounds(runs, workers)]
    if len(tasks) == 1:
        chunks = [_run_chunk(tasks[0])]
    else:
        with Pool(processes=len(tasks)) as pool:
            chunks = pool.map(_run_chunk, tasks)
    stats = [s for chunk in chunks for s in chunk]

    finished = np.array([s.steps_to_success for s in stats if s.succeeded], dtype=np.float64)
    censored = runs - len(finished)
    if len(finished) == 0:
        raise AllCensoredError(
            f"eps={cfg.epsilon:g}: all {runs} runs hit max_steps={cfg.max_steps}"
        )
    if censored:
        logger.warning(f"eps={cfg.epsilon:g}: {censored} of {runs} runs censored")

    total_steps = sum(s.step_count_total for s in stats)
    halvings = sum(s.halving_events for s in stats)
    std_error = 0.0
    if len(finished) > 1:
        std_error = float(np.std(finished, ddof=1)) / math.sqrt(len(finished))

    return PrecisionRow(
        epsilon=cfg.epsilon,
        p=cfg.precision,
        mean_steps=math.fsum(finished.tolist()) / len(finished),
        std_error=std_error,
        halving_rate=halvings / total_steps if total_steps else 0.0,
        runs=runs,
        censored=censored,
    )


def precision_scaling(
    eps_list: Sequence[float],
    runs: int,
    seed: int,
    workers: int = 1,
    x0: float = DEFAULT_X0,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> Tuple[List[PrecisionRow], ScalingFit]:
    """
    One row per epsilon plus the scaling fit over the table.

    Row r draws its run seeds from run_seed(seed, r), so the table does not
    depend on the worker count.

    Raises:
        ValueError: an epsilon outside (0, 1/4), or runs < 1
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    for eps in eps_list:
        if not 0.0 < eps < MAX_EPSILON:
            raise ValueError(f"epsilon must lie in (0, {MAX_EPSILON}), got {eps}")

    rows = []
    for index, eps in enumerate(eps_list):
        cfg = ContinuousConfig(epsilon=eps, x0=x0, max_steps=max_steps)
        logger.debug(f"precision row {index}: eps={eps:g}, p={cfg.precision:.4f}")
        rows.append(run_precision_row(cfg, runs, run_seed(seed, index), workers))
    return rows, fit_scaling(rows)
