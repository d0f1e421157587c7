"""
Potential Function for the Deferred-Decision Process
sigma_a, phi_a = 1/(a sigma_a), Phi(s) = sum_{a<=s} phi_a, the exact
expected one-step potential drop of process S, and the lower bound
Phi(n)/C on the expected absorption time.
"""

import math
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .chain import s_kernel, s_transition_row
from .dist import StepDistribution, compensated_cumsum
from .errors import InvalidConstantError, Mu1ZeroError, OutOfRangeError
from .exact import DEFAULT_N_CAP, check_cap, interval_masses


logger = logging.getLogger("BlindSearch.Potential")

DROP_CONSTANT = 7.0             # 2 (jump to 0) + 5 (intermediate targets) + 0 (stay)
DELTA0_BOUND = 2.0
DELTA_MID_BOUND = 5.0
DEFAULT_PSI_C = 1.0 / math.sqrt(2.0)


@dataclass
class PotentialProfile:
    """
    Potential of every state.

    sigma[a-1] = sigma_a, phi[a-1] = phi_a, big_phi[s] = Phi(s) with Phi(0) = 0.
    psi[i] is the interval-level approximation 1 / sum_j p_j c^|j-i|.
    """
    n: int
    sigma: np.ndarray
    phi: np.ndarray
    big_phi: np.ndarray
    phi0: float
    psi: np.ndarray
    c: float = DEFAULT_PSI_C

    @property
    def big_psi(self) -> np.ndarray:
        """Psi_k = sum_{i<=k} psi_i."""
        return compensated_cumsum(self.psi)

    def interval_phi_sums(self) -> np.ndarray:
        """sum of phi_a over a in I_i, for i = 0..L."""
        levels = len(self.psi) - 1
        sums = []
        for i in range(levels + 1):
            lo = 1 << i
            hi = (1 << (i + 1)) - 1 if i < levels else self.n
            sums.append(math.fsum(self.phi[lo - 1:hi].tolist()))
        return np.array(sums)

    def psi_check(self) -> np.ndarray:
        """
        sum_{a in I_i} phi_a >= psi_i / (4c) for 0 <= i < L.
        Proven for c = 1/sqrt(2).
        """
        levels = len(self.psi) - 1
        return self.interval_phi_sums()[:levels] >= self.psi[:levels] / (4.0 * self.c)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "c": self.c,
            "phi0": self.phi0,
            "sigma": self.sigma.tolist(),
            "phi": self.phi.tolist(),
            "big_phi": self.big_phi.tolist(),
            "psi": self.psi.tolist(),
        }


@dataclass
class DropReport:
    """Exact expected potential drop per state and its two components."""
    n: int
    per_state_drop: np.ndarray          # index s-1
    per_state_delta0: np.ndarray        # Delta(s, 0)
    per_state_delta_mid: np.ndarray     # sum_{1<=x<s} Delta(s, x)
    max_drop: float

    CSV_FIELDS = ("s", "drop", "delta0", "delta_mid")

    @property
    def argmax_state(self) -> int:
        return int(np.argmax(self.per_state_drop)) + 1

    @property
    def max_delta0(self) -> float:
        return float(np.max(self.per_state_delta0))

    @property
    def max_delta_mid(self) -> float:
        return float(np.max(self.per_state_delta_mid))

    def within_bounds(self) -> bool:
        """Delta(s,0) < 2, middle sum < 5 and total <= 7 for every s."""
        return (
            self.max_delta0 < DELTA0_BOUND
            and self.max_delta_mid < DELTA_MID_BOUND
            and self.max_drop <= DROP_CONSTANT
        )

    def to_rows(self) -> List[dict]:
        return [
            {"s": s, "drop": drop, "delta0": d0, "delta_mid": mid}
            for s, drop, d0, mid in zip(
                range(1, self.n + 1),
                self.per_state_drop.tolist(),
                self.per_state_delta0.tolist(),
                self.per_state_delta_mid.tolist(),
            )
        ]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "max_drop": self.max_drop,
            "argmax_state": self.argmax_state,
            "per_state_drop": self.per_state_drop.tolist(),
            "per_state_delta0": self.per_state_delta0.tolist(),
            "per_state_delta_mid": self.per_state_delta_mid.tolist(),
        }


def potential_profile(dist: StepDistribution, c: float = DEFAULT_PSI_C) -> PotentialProfile:
    """
    Build the potential of dist.

    sigma_a = P(a)/sqrt(a) + sqrt(a) Q(a) with P(a) = sum_{d<=a} mu(d) sqrt(d)
    and Q(a) = sum_{d>a} mu(d)/sqrt(d), both as compensated prefix sums.

    Raises:
        Mu1ZeroError: mu(1) = 0 leaves sigma_a without a lower bound
    """
    if not dist.mu1_positive:
        raise Mu1ZeroError(f"{dist.name}(n={dist.n}): potential needs mu(1) > 0")
    if not 0.5 < c < 1.0:
        raise ValueError(f"psi constant c must lie in (1/2, 1), got {c}")

    n = dist.n
    a = np.arange(1, n + 1, dtype=np.float64)
    root = np.sqrt(a)
    weights = dist.weights

    below = compensated_cumsum(weights * root)
    above_from = compensated_cumsum((weights / root)[::-1])[::-1]    # sum over d >= a
    above = np.append(above_from[1:], 0.0)                           # sum over d > a

    sigma = below / root + root * above
    phi = 1.0 / (a * sigma)
    big_phi = np.concatenate(([0.0], compensated_cumsum(phi)))

    masses = interval_masses(dist)
    levels = np.arange(len(masses))
    decay = c ** np.abs(levels[:, None] - levels[None, :])
    psi = 1.0 / (decay @ masses)

    return PotentialProfile(
        n=n,
        sigma=sigma,
        phi=phi,
        big_phi=big_phi,
        phi0=float(big_phi[n]),
        psi=psi,
        c=c,
    )


def expected_drop(dist: StepDistribution, profile: PotentialProfile, s: int) -> float:
    """
    E(Phi_{t-1} - Phi_t | S_{t-1} = s), summed over the S transition row.

    F(s) >= mu(1) > 0 for a profile to exist, so some mass always leaves s.
    """
    if not 1 <= s <= dist.n:
        raise OutOfRangeError(f"s = {s} outside [1, {dist.n}]")
    row = s_transition_row(dist, s)
    big_phi = profile.big_phi
    return math.fsum(((big_phi[s] - big_phi[row.targets]) * row.probabilities).tolist())


def drop_bound_report(
    dist: StepDistribution,
    profile: Optional[PotentialProfile] = None,
    n_cap: int = DEFAULT_N_CAP,
) -> DropReport:
    """
    Expected drop for every state 1..n split into Delta(s, 0) and the middle
    sum over 1 <= x < s. O(n^2) over the S kernel.
    """
    if not dist.mu1_positive:
        raise Mu1ZeroError(f"{dist.name}(n={dist.n}): drop report needs mu(1) > 0")
    check_cap(dist.n, n_cap)
    profile = profile or potential_profile(dist)

    n = dist.n
    big_phi = profile.big_phi
    drop = np.empty(n)
    delta0 = np.empty(n)
    delta_mid = np.empty(n)
    for s in range(1, n + 1):
        contributions = (big_phi[s] - big_phi[:s + 1]) * s_kernel(dist, s)
        delta0[s - 1] = contributions[0]
        delta_mid[s - 1] = math.fsum(contributions[1:s].tolist())
        drop[s - 1] = math.fsum(contributions.tolist())

    report = DropReport(
        n=n,
        per_state_drop=drop,
        per_state_delta0=delta0,
        per_state_delta_mid=delta_mid,
        max_drop=float(np.max(drop)),
    )
    logger.debug(
        f"{dist.name}(n={n}): max drop {report.max_drop:.6f} at s={report.argmax_state}"
    )
    return report


def potential_lower_bound(
    dist: StepDistribution,
    C: float = DROP_CONSTANT,
    strict: bool = False,
    profile: Optional[PotentialProfile] = None,
    report: Optional[DropReport] = None,
) -> float:
    """
    Lower bound Phi_0 / C on E(T).

    Args:
        dist: Step distribution with mu(1) > 0
        C: Bound on the expected one-step drop (7 is always valid)
        strict: Refuse C below the computed maximum drop
        profile: Reuse an existing potential profile
        report: Reuse an existing drop report (strict mode)

    Raises:
        Mu1ZeroError, InvalidConstantError
    """
    if not C > 0:
        raise InvalidConstantError(f"C must be positive, got {C}")
    profile = profile or potential_profile(dist)
    if strict:
        report = report or drop_bound_report(dist, profile)
        if C < report.max_drop:
            raise InvalidConstantError(
                f"C = {C} is below the computed maximum drop {report.max_drop:.6f}"
            )
    return profile.phi0 / C
