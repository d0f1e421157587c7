"""
Exact Expected Hitting Times
Dynamic-programming and closed-form evaluation of the expected number of
rounds until the token reaches 0, plus the dyadic upper bound.

Three routes to the same numbers:
- T_a by conditioning on the first step of process R (fixed start a)
- A^(s) for a uniform start on [1, s], from the first step of R
- B^(s) from the first step of the deferred-decision process S
All inner sums run in ascending index order through math.fsum.
"""

import math
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from .dist import StepDistribution, compensated_cumsum
from .errors import CapExceededError, Mu1ZeroError, OracleTooLargeError, OutOfRangeError


logger = logging.getLogger("BlindSearch.Exact")

DEFAULT_N_CAP = 32768           # O(n^2) work per profile
ORACLE_CAP = 20                 # 2^n - 1 chains in the closed form
CROSS_CHECK_TOLERANCE = 1e-9


@dataclass
class HittingProfile:
    """Per-state expected times T_a and uniform-start values A^(s)."""
    n: int
    t: np.ndarray               # T_0..T_n
    a_uniform: np.ndarray       # A^(0)..A^(n)
    e_value: float              # A^(n) = E_mu(T)
    finite: bool
    cross_check_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "e_value": self.e_value,
            "t": self.t.tolist(),
            "a_uniform": self.a_uniform.tolist(),
            "finite": self.finite,
        }


@dataclass
class DeferredTable:
    """Expected absorption times B^(s) of process S started in s."""
    n: int
    b: np.ndarray
    finite: bool

    def to_dict(self) -> dict:
        return {"n": self.n, "b": self.b.tolist(), "finite": self.finite}


def check_cap(n: int, n_cap: int) -> None:
    """Raise CapExceededError if n is above the O(n^2) cap."""
    if n > n_cap:
        raise CapExceededError(
            f"n = {n} exceeds the cap of {n_cap}; raise it with --n-cap-override"
        )


def _infinite_table(n: int) -> np.ndarray:
    table = np.full(n + 1, math.inf)
    table[0] = 0.0
    return table


def _relative_gap(x: np.ndarray, y: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(x), np.abs(y)), 1e-300)
    return float(np.max(np.abs(x - y) / scale)) if len(x) else 0.0


def expected_times(dist: StepDistribution, n_cap: int = DEFAULT_N_CAP) -> np.ndarray:
    """
    T_0..T_n for process R from a fixed start.

    T_0 = 0, T_a = (1 + sum_{1<=d<=a} mu(d) T_{a-d}) / F(a).
    Returns +inf for a >= 1 when mu(1) = 0.
    """
    check_cap(dist.n, n_cap)
    n = dist.n
    if not dist.mu1_positive:
        return _infinite_table(n)

    mu = dist.mu_table
    F = dist.cdf_table
    t = np.zeros(n + 1)
    for a in range(1, n + 1):
        t[a] = (1.0 + math.fsum(mu[1:a + 1] * t[a - 1::-1])) / F[a]
    return t


def hitting_profile(
    dist: StepDistribution,
    n_cap: int = DEFAULT_N_CAP,
    cross_check: bool = True,
) -> HittingProfile:
    """
    Exact hitting profile of process R.

    A^(s) is computed as the prefix average of T and, when cross_check is
    set, directly from the first-step recurrence for a uniform start on
    [1, s]. The largest relative gap between the two is recorded.

    Args:
        dist: Step distribution
        n_cap: Refuse n above this
        cross_check: Also run the direct A^(s) recurrence

    Returns:
        HittingProfile; infinite entries and finite=False when mu(1) = 0
    """
    n = dist.n
    logger.debug(f"hitting profile for {dist.name}(n={n}), cross_check={cross_check}")
    t = expected_times(dist, n_cap)

    if not dist.mu1_positive:
        logger.warning(f"{dist.name}(n={n}) has mu(1) = 0: E(T) is infinite")
        return HittingProfile(
            n=n, t=t, a_uniform=_infinite_table(n), e_value=math.inf, finite=False
        )

    sizes = np.arange(1, n + 1, dtype=np.float64)
    prefix = np.concatenate(([0.0], compensated_cumsum(t[1:]) / sizes))

    gap = 0.0
    a_uniform = prefix
    if cross_check:
        a_uniform = uniform_start_expectation(dist, n_cap)
        gap = _relative_gap(a_uniform[1:], prefix[1:])
        if gap > CROSS_CHECK_TOLERANCE:
            logger.warning(
                f"A^(s) routes disagree for {dist.name}(n={n}): relative gap {gap:.3e}"
            )

    return HittingProfile(
        n=n,
        t=t,
        a_uniform=a_uniform,
        e_value=float(a_uniform[n]),
        finite=True,
        cross_check_error=gap,
    )


def uniform_start_expectation(dist: StepDistribution, n_cap: int = DEFAULT_N_CAP) -> np.ndarray:
    """
    A^(0)..A^(n) straight from the first step of R with a uniform start on [1, s].

    A^(s) F(s) = 1 + sum_{1<=d<=s} mu(d) ((d-1)/s A^(d-1) + (s-d)/s A^(s-d))
    """
    check_cap(dist.n, n_cap)
    n = dist.n
    if not dist.mu1_positive:
        return _infinite_table(n)

    mu = dist.mu_table
    F = dist.cdf_table
    steps = np.arange(n + 1, dtype=np.float64)
    a = np.zeros(n + 1)
    for s in range(1, n + 1):
        d = steps[1:s + 1]
        branch = (d - 1.0) * a[0:s] + (s - d) * a[s - 1::-1]
        a[s] = (1.0 + math.fsum(mu[1:s + 1] * branch) / s) / F[s]
    return a


def deferred_expectation(dist: StepDistribution, n_cap: int = DEFAULT_N_CAP) -> DeferredTable:
    """
    B^(s) for process S from start s.

    B^(s) = (1 + sum_{1<=s'<s} (mu(s'+1) + mu(s-s')) (s'/s) B^(s')) / F(s)
    """
    check_cap(dist.n, n_cap)
    n = dist.n
    if not dist.mu1_positive:
        return DeferredTable(n=n, b=_infinite_table(n), finite=False)

    mu = dist.mu_table
    F = dist.cdf_table
    states = np.arange(n + 1, dtype=np.float64)
    b = np.zeros(n + 1)
    for s in range(1, n + 1):
        coef = (mu[2:s + 1] + mu[s - 1:0:-1]) * states[1:s] / s
        b[s] = (1.0 + math.fsum(coef * b[1:s])) / F[s]
    return DeferredTable(n=n, b=b, finite=True)


def closed_form_oracle(dist: StepDistribution, cap: int = ORACLE_CAP) -> float:
    """
    E_mu(T) from the sum over all increasing chains a_1 < ... < a_l in [1, n]:

        (1/n) sum  mu(a_2-a_1)...mu(a_l-a_{l-1}) / (F(a_1)...F(a_l))

    Chains are extended depth first; a zero step weight prunes the subtree.
    cap may lower the limit of n, never raise it above ORACLE_CAP.
    """
    n = dist.n
    limit = min(cap, ORACLE_CAP)
    if n > limit:
        raise OracleTooLargeError(f"closed form limited to n <= {limit}, got {n}")
    if not dist.mu1_positive:
        raise Mu1ZeroError("closed form needs mu(1) > 0")

    mu = dist.mu_table.tolist()
    F = dist.cdf_table.tolist()
    terms: List[float] = []
    stack = [(a, 1.0 / F[a]) for a in range(n, 0, -1)]
    while stack:
        last, product = stack.pop()
        terms.append(product)
        for nxt in range(last + 1, n + 1):
            step = mu[nxt - last]
            if step > 0.0:
                stack.append((nxt, product * step / F[nxt]))
    return math.fsum(terms) / n


def interval_masses(dist: StepDistribution) -> np.ndarray:
    """
    Masses p_0..p_L of the dyadic intervals I_i = [2^i, 2^(i+1)), I_L = [2^L, n].
    """
    n = dist.n
    levels = n.bit_length() - 1
    weights = dist.weights
    masses = []
    for i in range(levels + 1):
        lo = 1 << i
        hi = (1 << (i + 1)) - 1 if i < levels else n
        masses.append(math.fsum(weights[lo - 1:hi].tolist()))
    return np.array(masses)


def _dyadic_bound(masses: np.ndarray, level: int) -> float:
    # 3/p_0 + sum_{1 <= i <= level-1} 2/p_i
    needed = [3.0 / masses[0] if masses[0] > 0 else math.inf]
    for i in range(1, level):
        needed.append(2.0 / masses[i] if masses[i] > 0 else math.inf)
    if any(math.isinf(term) for term in needed):
        return math.inf
    return math.fsum(needed)


def upper_bound(dist: StepDistribution) -> float:
    """
    E_mu(T) <= 2/p_{L-1} + ... + 2/p_1 + 3/p_0; +inf when a needed p_i is 0.

    For L <= 1 the bound is 3/p_0 alone.
    """
    masses = interval_masses(dist)
    return _dyadic_bound(masses, len(masses) - 1)


def upper_bound_from(dist: StepDistribution, a: int) -> float:
    """Bound on T_a for a start a in I_j: 2/p_{j-1} + ... + 2/p_1 + 3/p_0."""
    if not 0 <= a <= dist.n:
        raise OutOfRangeError(f"a = {a} outside [0, {dist.n}]")
    if a == 0:
        return 0.0
    return _dyadic_bound(interval_masses(dist), a.bit_length() - 1)
