"""
Markov Chains R and S
Transition kernels of the token process R and of the deferred-decision
process S, single-run simulation, and parallel Monte Carlo estimation of
the expected absorption time.

Every run owns one generator seeded from (master_seed, run_index), so a
summary does not depend on how runs are spread over workers.
"""

import math
import logging
from enum import Enum
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve_triangular

from .dist import StepDistribution
from .errors import AllCensoredError, CapExceededError, OutOfRangeError


logger = logging.getLogger("BlindSearch.Chain")

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DEFAULT_BLOCK_SIZE = 64
ABSORPTION_CAP = 4096           # dense-ish sparse matrix, n^2/2 entries


class Process(Enum):
    """Which chain to run."""
    R = "R"     # token process, uniform start on [1, n]
    S = "S"     # deferred decisions, start n


@dataclass(frozen=True)
class TransitionRow:
    """Nonzero transition probabilities out of one state, targets ascending."""
    from_state: int
    targets: np.ndarray
    probabilities: np.ndarray

    @property
    def entries(self) -> List[Tuple[int, float]]:
        return list(zip(self.targets.tolist(), self.probabilities.tolist()))

    def total(self) -> float:
        return math.fsum(self.probabilities.tolist())

    def probability(self, to_state: int) -> float:
        hits = np.nonzero(self.targets == to_state)[0]
        return float(self.probabilities[hits[0]]) if len(hits) else 0.0


class RunOutcome(NamedTuple):
    """Result of one simulated run."""
    steps: int
    absorbed: bool


@dataclass
class SimSummary:
    """Monte Carlo estimate of the expected absorption time."""
    process: Process
    n: int
    runs: int
    mean: float
    std_error: float
    censored: int
    master_seed: int
    max_steps: int
    step_counts: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    CSV_FIELDS = ("process", "n", "runs", "mean", "std_error", "censored", "master_seed")

    @property
    def absorbed(self) -> int:
        return self.runs - self.censored

    def to_row(self) -> dict:
        return {
            "process": self.process.value,
            "n": self.n,
            "runs": self.runs,
            "mean": self.mean,
            "std_error": self.std_error,
            "censored": self.censored,
            "master_seed": self.master_seed,
        }

    def to_dict(self) -> dict:
        data = self.to_row()
        data["max_steps"] = self.max_steps
        if self.step_counts is not None:
            data["step_counts"] = self.step_counts.tolist()
        return data


# Kernels

def _check_state(dist: StepDistribution, state: int) -> None:
    if not 0 <= state <= dist.n:
        raise OutOfRangeError(f"state {state} outside [0, {dist.n}]")


def r_kernel(dist: StepDistribution, a: int) -> np.ndarray:
    """Dense probabilities p_{a,a'} for a' = 0..a under process R."""
    _check_state(dist, a)
    if a == 0:
        return np.ones(1)
    probs = np.empty(a + 1)
    probs[:a] = dist.mu_table[a:0:-1]          # a' = a - d
    probs[a] = max(0.0, 1.0 - dist.cdf_table[a])
    return probs


def s_kernel(dist: StepDistribution, s: int) -> np.ndarray:
    """
    Dense probabilities p_{s,s'} for s' = 0..s under process S:
    F(s)/s to 0, (mu(s'+1) + mu(s-s')) s'/s to 1 <= s' < s, 1 - F(s) to s.
    """
    _check_state(dist, s)
    if s == 0:
        return np.ones(1)
    mu = dist.mu_table
    probs = np.empty(s + 1)
    probs[0] = dist.cdf_table[s] / s
    probs[1:s] = (mu[2:s + 1] + mu[s - 1:0:-1]) * np.arange(1, s) / s
    probs[s] = max(0.0, 1.0 - dist.cdf_table[s])
    return probs


def _sparse_row(state: int, probs: np.ndarray) -> TransitionRow:
    targets = np.nonzero(probs > 0.0)[0]
    return TransitionRow(from_state=state, targets=targets, probabilities=probs[targets])


def r_transition_row(dist: StepDistribution, a: int) -> TransitionRow:
    """Transition row of process R out of state a."""
    return _sparse_row(a, r_kernel(dist, a))


def s_transition_row(dist: StepDistribution, s: int) -> TransitionRow:
    """Transition row of process S out of state s."""
    return _sparse_row(s, s_kernel(dist, s))


def absorption_times(dist: StepDistribution, process: Process, n_cap: int = ABSORPTION_CAP) -> np.ndarray:
    """
    Expected absorption time from every start state, by solving (I - P) x = 1
    over states 1..n. Both kernels only move downward, so I - P is lower
    triangular and the solve is a forward substitution.
    """
    n = dist.n
    if n > n_cap:
        raise CapExceededError(f"absorption solve limited to n <= {n_cap}, got {n}")
    times = np.zeros(n + 1)
    if not dist.mu1_positive:
        times[1:] = math.inf
        return times

    kernel = r_kernel if process == Process.R else s_kernel
    rows, cols, data = [], [], []
    for state in range(1, n + 1):
        probs = kernel(dist, state)
        lower = np.nonzero(probs[1:state] > 0.0)[0] + 1
        rows.append(np.full(len(lower), state - 1))
        cols.append(lower - 1)
        data.append(-probs[lower])
        rows.append([state - 1])
        cols.append([state - 1])
        data.append([1.0 - probs[state]])

    matrix = csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    times[1:] = spsolve_triangular(matrix, np.ones(n), lower=True)
    return times


# Seeding

def splitmix64(x: int) -> int:
    """One SplitMix64 output for state x."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def run_seed(master_seed: int, run_index: int) -> int:
    """64-bit seed of run run_index under master_seed."""
    return splitmix64(splitmix64(master_seed & MASK64) ^ (run_index & MASK64))


def run_generator(master_seed: int, run_index: int) -> np.random.Generator:
    """Independent generator for one run."""
    return np.random.Generator(np.random.PCG64(run_seed(master_seed, run_index)))


def default_max_steps(n: int) -> int:
    """10^6 * ceil(log2(n + 1))."""
    return 10 ** 6 * max(1, math.ceil(math.log2(n + 1)))


# Simulation

class _VariateStream:
    """Step sizes and case variates drawn from one generator in blocks."""

    __slots__ = ("_dist", "_rng", "_block", "_steps", "_step_pos", "_cases", "_case_pos")

    def __init__(self, dist: StepDistribution, rng: np.random.Generator, block_size: int):
        self._dist = dist
        self._rng = rng
        self._block = block_size
        self._steps: List[int] = []
        self._step_pos = 0
        self._cases: List[float] = []
        self._case_pos = 0

    def step(self) -> int:
        if self._step_pos == len(self._steps):
            self._steps = self._dist.sample(self._rng, self._block).tolist()
            self._step_pos = 0
        d = self._steps[self._step_pos]
        self._step_pos += 1
        return d

    def case(self) -> float:
        if self._case_pos == len(self._cases):
            self._cases = self._rng.random(self._block).tolist()
            self._case_pos = 0
        u = self._cases[self._case_pos]
        self._case_pos += 1
        return u


def _advance(process: Process, state: int, stream: _VariateStream) -> int:
    d = stream.step()
    if d > state:
        return state
    if process == Process.R:
        return state - d
    # Case split on the hidden position, thresholds (accept, finish, reject)
    x = stream.case() * state
    if x < state - d:
        return state - d
    if x < state - d + 1:
        return 0
    return d - 1


def _validate_run(dist: StepDistribution, start: int, max_steps: int) -> None:
    _check_state(dist, start)
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")


def simulate_run(
    dist: StepDistribution,
    process: Process,
    start: int,
    rng: np.random.Generator,
    max_steps: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> RunOutcome:
    """
    Simulate one run until state 0 or max_steps transitions.

    Returns:
        RunOutcome(steps, absorbed)
    """
    _validate_run(dist, start, max_steps)
    stream = _VariateStream(dist, rng, block_size)
    state = start
    steps = 0
    while state > 0 and steps < max_steps:
        state = _advance(process, state, stream)
        steps += 1
    return RunOutcome(steps, state == 0)


def trajectory(
    dist: StepDistribution,
    process: Process,
    start: int,
    rng: np.random.Generator,
    max_steps: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> List[int]:
    """States visited by one run, start included (debug helper)."""
    _validate_run(dist, start, max_steps)
    stream = _VariateStream(dist, rng, block_size)
    states = [start]
    while states[-1] > 0 and len(states) <= max_steps:
        states.append(_advance(process, states[-1], stream))
    return states


def simulate_indexed(
    dist: StepDistribution,
    process: Process,
    master_seed: int,
    run_index: int,
    max_steps: int,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> RunOutcome:
    """Run run_index of an experiment: R starts uniform on [1, n], S starts at n."""
    rng = run_generator(master_seed, run_index)
    if process == Process.R:
        start = int(rng.integers(1, dist.n + 1))
    else:
        start = dist.n
    return simulate_run(dist, process, start, rng, max_steps, block_size)


def _run_chunk(task) -> Tuple[np.ndarray, np.ndarray]:
    dist, process, master_seed, lo, hi, max_steps, block_size = task
    steps = np.empty(hi - lo, dtype=np.int64)
    absorbed = np.empty(hi - lo, dtype=bool)
    for offset, run_index in enumerate(range(lo, hi)):
        outcome = simulate_indexed(dist, process, master_seed, run_index, max_steps, block_size)
        steps[offset] = outcome.steps
        absorbed[offset] = outcome.absorbed
    return steps, absorbed


def chunk_bounds(runs: int, workers: int) -> List[Tuple[int, int]]:
    """Contiguous run-index ranges, one per worker."""
    edges = np.linspace(0, runs, min(workers, runs) + 1).astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def estimate_expectation(
    dist: StepDistribution,
    process: Process,
    runs: int,
    master_seed: int,
    workers: int = 1,
    max_steps: Optional[int] = None,
    block_size: int = DEFAULT_BLOCK_SIZE,
    keep_steps: bool = False,
) -> SimSummary:
    """
    Monte Carlo estimate of E(T) (process R) or E(T_S) (process S).

    Runs are split into contiguous index ranges across workers and
    reassembled in run-index order before any reduction.

    Args:
        dist: Step distribution
        process: Process.R or Process.S
        runs: Number of runs (>= 1)
        master_seed: Seed of the experiment
        workers: Worker processes (>= 1)
        max_steps: Censoring limit per run (default 10^6 * ceil(log2(n+1)))
        block_size: Variates drawn per generator call
        keep_steps: Keep per-run step counts in the summary

    Raises:
        AllCensoredError: No run was absorbed
    """
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if max_steps is None:
        max_steps = default_max_steps(dist.n)

    tasks = [
        (dist, process, master_seed, lo, hi, max_steps, block_size)
        for lo, hi in chunk_bounds(runs, workers)
    ]
    logger.debug(
        f"simulating {runs} runs of {process.value} on {dist.name}(n={dist.n}) "
        f"over {len(tasks)} worker(s)"
    )
    if len(tasks) == 1:
        results = [_run_chunk(tasks[0])]
    else:
        with Pool(processes=len(tasks)) as pool:
            results = pool.map(_run_chunk, tasks)

    steps = np.concatenate([r[0] for r in results])
    absorbed = np.concatenate([r[1] for r in results])
    absorbed_count = int(absorbed.sum())
    censored = runs - absorbed_count

    if absorbed_count == 0:
        raise AllCensoredError(
            f"all {runs} runs hit max_steps={max_steps} before absorption"
        )
    if censored:
        logger.warning(
            f"{censored} of {runs} runs censored at max_steps={max_steps}; "
            "mean is over absorbed runs only"
        )

    finished = steps[absorbed].astype(np.float64)
    mean = math.fsum(finished.tolist()) / absorbed_count
    std_error = 0.0
    if absorbed_count > 1:
        std_error = float(np.std(finished, ddof=1)) / math.sqrt(absorbed_count)

    return SimSummary(
        process=process,
        n=dist.n,
        runs=runs,
        mean=mean,
        std_error=std_error,
        censored=censored,
        master_seed=master_seed,
        max_steps=max_steps,
        step_counts=steps if keep_steps else None,
    )
