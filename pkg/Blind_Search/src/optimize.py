"""
Distribution Optimizer
Exponentiated-gradient search for step distributions with small E(T),
over the full simplex on [1, n] and over the interval-mass family that
puts p_i on the single power of two 2^i.

The objective is the exact uniform-start expectation from the O(n^2)
dynamic program; gradients are forward differences on log-weights.
"""

import math
import logging
from dataclasses import asdict, dataclass, field, replace
from multiprocessing import Pool
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import softmax

from .bounds import bounds_report
from .dist import StepDistribution, from_spec, harmonic, make_custom, pow2, uniform
from .errors import CapExceededError
from .exact import DEFAULT_N_CAP, expected_times
from .potential import DROP_CONSTANT


logger = logging.getLogger("BlindSearch.Optimize")

OPTIMIZE_CAP = 4096             # one objective call is an O(n^2) DP
BASELINES = ("harmonic", "pow2", "uniform")


@dataclass
class OptimizerSettings:
    """Step schedule, finite differences and stopping rule."""
    iters: int = 200
    eta0: float = 0.5               # eta_t = eta0 / sqrt(1 + t)
    fd_step: float = 1e-4
    mu1_floor: float = 1e-9
    patience: int = 50
    rel_tol: float = 1e-6
    coords_per_iter: Optional[int] = 128    # None: full gradient every iteration
    workers: int = 1

    def __post_init__(self):
        if self.iters < 0:
            raise ValueError(f"iters must be >= 0, got {self.iters}")
        if self.eta0 <= 0 or self.fd_step <= 0:
            raise ValueError("eta0 and fd_step must be positive")
        if not 0 < self.mu1_floor < 1:
            raise ValueError(f"mu1_floor must lie in (0, 1), got {self.mu1_floor}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.coords_per_iter is not None and self.coords_per_iter < 1:
            raise ValueError(f"coords_per_iter must be >= 1, got {self.coords_per_iter}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


class TracePoint(NamedTuple):
    """Objective of the iterate after an update, and the best value so far."""
    iteration: int
    objective: float
    best: float


@dataclass
class OptimizeReport:
    """Result of one optimizer run."""
    family: str
    best_dist: StepDistribution
    best_value: float
    trace: List[TracePoint]
    baseline_values: Dict[str, float]
    iterations: int
    converged: bool
    seed: int
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    CSV_FIELDS = ("iteration", "objective", "best")

    def trace_rows(self) -> List[dict]:
        return [point._asdict() for point in self.trace]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.best_dist.n,
            "best_value": self.best_value,
            "best_weights": self.best_dist.weights.tolist(),
            "baseline_values": dict(self.baseline_values),
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "settings": asdict(self.settings),
            "trace": self.trace_rows(),
        }


def expected_value(n: int, weights: np.ndarray, n_cap: int = OPTIMIZE_CAP) -> float:
    """E(T) for a uniform start, as the average of T_1..T_n."""
    t = expected_times(make_custom(n, weights), n_cap)
    return math.fsum(t[1:].tolist()) / n


def _evaluate(task) -> float:
    n, weights, n_cap = task
    return expected_value(n, weights, n_cap)


def _power_positions(n: int) -> np.ndarray:
    """0-based indices of 2^0..2^L in a weight vector of length n."""
    levels = n.bit_length() - 1
    return np.array([(1 << i) - 1 for i in range(levels + 1)], dtype=np.int64)


class _ExpGradSearch:
    """
    Exponentiated gradient on the log-weights theta of a parameter vector.

    embed maps the parameter simplex into full weights on [1, n]; the
    parameter at index 0 is always mu(1).
    """

    def __init__(
        self,
        n: int,
        embed: Callable[[np.ndarray], np.ndarray],
        settings: OptimizerSettings,
        seed: int,
        n_cap: int,
        pool=None,
    ):
        self.n = n
        self.embed = embed
        self.settings = settings
        self.n_cap = n_cap
        self.rng = np.random.default_rng(seed)
        self.pool = pool
        self.best_value = math.inf
        self.best_weights: Optional[np.ndarray] = None

    def offer(self, value: float, weights: np.ndarray) -> None:
        """Keep weights if strictly better than everything seen so far."""
        if value < self.best_value:
            self.best_value = value
            self.best_weights = weights

    def evaluate(self, thetas: Sequence[np.ndarray]) -> List[float]:
        weights = [self.embed(softmax(theta)) for theta in thetas]
        tasks = [(self.n, w, self.n_cap) for w in weights]
        if self.pool is not None and len(tasks) > 1:
            values = self.pool.map(_evaluate, tasks)
        else:
            values = [_evaluate(task) for task in tasks]
        for value, w in zip(values, weights):
            self.offer(value, w)
        return values

    def apply_floor(self, theta: np.ndarray) -> np.ndarray:
        floor = self.settings.mu1_floor
        params = softmax(theta)
        if len(params) == 1 or params[0] >= floor:
            return theta
        rest = params[1:] * ((1.0 - floor) / params[1:].sum())
        with np.errstate(divide="ignore"):
            return np.log(np.concatenate(([floor], rest)))

    def run(self, start: np.ndarray):
        """
        Iterate from the parameter vector start.

        Returns:
            (trace, iterations, converged)
        """
        settings = self.settings
        with np.errstate(divide="ignore"):
            theta = self.apply_floor(np.log(start))
        value = self.evaluate([theta])[0]
        trace = [TracePoint(0, value, self.best_value)]
        search_best = [value]
        dim = len(theta)
        converged = dim == 1
        iterations = 0

        while iterations < settings.iters and not converged:
            coords = np.arange(dim)
            if settings.coords_per_iter is not None and settings.coords_per_iter < dim:
                coords = np.sort(self.rng.choice(dim, settings.coords_per_iter, replace=False))

            probes = []
            for i in coords:
                probe = theta.copy()
                probe[i] += settings.fd_step
                probes.append(probe)
            probe_values = np.array(self.evaluate(probes))

            gradient = np.zeros(dim)
            gradient[coords] = (probe_values - value) / settings.fd_step
            gradient[~np.isfinite(gradient)] = 0.0
            scale = float(np.max(np.abs(gradient)))
            if scale == 0.0:
                converged = True
                break

            eta = settings.eta0 / math.sqrt(1.0 + iterations)
            theta = self.apply_floor(theta - eta * gradient / scale)
            value = self.evaluate([theta])[0]
            iterations += 1

            search_best.append(min(search_best[-1], value, float(np.min(probe_values))))
            trace.append(TracePoint(iterations, value, self.best_value))
            if iterations % 10 == 0:
                logger.info(f"iteration {iterations}: objective {value:.6f}, best {self.best_value:.6f}")

            if len(search_best) > settings.patience:
                old = search_best[-1 - settings.patience]
                if old - search_best[-1] <= settings.rel_tol * old:
                    converged = True

        return trace, iterations, converged


def _check_size(n: int, n_cap: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > n_cap:
        raise CapExceededError(f"optimizer limited to n <= {n_cap}, got {n}")


def _baseline_values(n: int) -> Dict[str, np.ndarray]:
    constructors = {"harmonic": harmonic, "pow2": pow2, "uniform": uniform}
    return {name: constructors[name](n).weights for name in BASELINES}


def _optimize(
    family: str,
    n: int,
    start: np.ndarray,
    embed: Callable[[np.ndarray], np.ndarray],
    baselines: Dict[str, np.ndarray],
    eligible: Sequence[str],
    settings: OptimizerSettings,
    seed: int,
    n_cap: int,
) -> OptimizeReport:
    pool = Pool(processes=settings.workers) if settings.workers > 1 else None
    try:
        search = _ExpGradSearch(n, embed, settings, seed, n_cap, pool)
        baseline_values = {}
        for name, weights in baselines.items():
            baseline_values[name] = expected_value(n, weights, n_cap)
            if name in eligible:
                search.offer(baseline_values[name], weights)

        if settings.iters == 0:
            trace = [TracePoint(0, search.best_value, search.best_value)]
            iterations, converged = 0, False
        else:
            trace, iterations, converged = search.run(start)
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    best_dist = make_custom(n, search.best_weights, name=f"optimized-{family}")
    logger.info(
        f"{family} optimizer n={n}: best {search.best_value:.6f} after {iterations} "
        f"iteration(s), converged={converged}"
    )
    return OptimizeReport(
        family=family,
        best_dist=best_dist,
        best_value=search.best_value,
        trace=trace,
        baseline_values=baseline_values,
        iterations=iterations,
        converged=converged,
        seed=seed,
        settings=settings,
    )


def optimize_full_simplex(
    n: int,
    iters: int = 200,
    seed: int = 0,
    settings: Optional[OptimizerSettings] = None,
    n_cap: int = OPTIMIZE_CAP,
) -> OptimizeReport:
    """
    Search the whole simplex on [1, n], starting from harmonic(n).

    Every evaluated candidate, the named baselines included, competes for
    best_value, so best_value <= min(baselines) always holds. The seed picks
    the random coordinate subsets when coords_per_iter < n.

    Raises:
        CapExceededError: n above n_cap
    """
    _check_size(n, n_cap)
    settings = replace(settings or OptimizerSettings(), iters=iters)
    baselines = _baseline_values(n)
    return _optimize(
        family="full",
        n=n,
        start=baselines["harmonic"].copy(),
        embed=lambda params: params,
        baselines=baselines,
        eligible=BASELINES,
        settings=settings,
        seed=seed,
        n_cap=n_cap,
    )


def equal_mass_point(n: int) -> np.ndarray:
    """p_i = 1/L on I_0..I_{L-1} and p_L = 0; n = 1 gives (1)."""
    levels = n.bit_length() - 1
    if levels == 0:
        return np.ones(1)
    masses = np.full(levels + 1, 1.0 / levels)
    masses[levels] = 0.0
    return masses


def optimize_interval_weights(
    n: int,
    iters: int = 200,
    seed: int = 0,
    settings: Optional[OptimizerSettings] = None,
    n_cap: int = OPTIMIZE_CAP,
) -> OptimizeReport:
    """
    Search the masses p_0..p_L, each placed on the power of two 2^i.

    Starts from the equal-mass point with zero masses lifted to the mu(1)
    floor. Only members of the family compete for best_value; harmonic and
    uniform are reported for reference. iters = 0 returns the exact
    equal-mass point.
    """
    _check_size(n, n_cap)
    settings = replace(settings or OptimizerSettings(), iters=iters)
    positions = _power_positions(n)

    def embed(params: np.ndarray) -> np.ndarray:
        weights = np.zeros(n)
        weights[positions] = params
        return weights

    baselines = _baseline_values(n)
    equal = equal_mass_point(n)
    baselines["equal_mass"] = embed(equal)
    start = np.maximum(equal, settings.mu1_floor)
    start = start / start.sum()
    return _optimize(
        family="interval",
        n=n,
        start=start,
        embed=embed,
        baselines=baselines,
        eligible=("equal_mass",),
        settings=settings,
        seed=seed,
        n_cap=n_cap,
    )


@dataclass
class StrategyRow:
    """One strategy of a comparison table."""
    name: str
    e_value: float
    upper_bound: float
    lower_bound: Optional[float]

    CSV_FIELDS = ("name", "e_value", "upper_bound", "lower_bound")

    def to_row(self) -> dict:
        return asdict(self)

    def to_dict(self) -> dict:
        return asdict(self)


def compare_strategies(
    n: int,
    names: Sequence[str],
    C: float = DROP_CONSTANT,
    n_cap: int = DEFAULT_N_CAP,
) -> List[StrategyRow]:
    """
    Exact E with the dyadic upper bound and the potential lower bound
    Phi_0 / C for each dist spec in names, in the given order.

    Raises:
        UnknownStrategyError: a name does not parse
    """
    dists = [(name, from_spec(name, n)) for name in names]
    rows = []
    for name, dist in dists:
        report = bounds_report(dist, C=C, n_cap=n_cap, with_drop=False)
        rows.append(StrategyRow(
            name=name,
            e_value=report.e_value,
            upper_bound=report.upper_bound,
            lower_bound=report.lower_bound,
        ))
    return rows
