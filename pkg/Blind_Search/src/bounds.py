"""
Bounds Report
Puts the exact expectation next to the dyadic upper bound and the
potential lower bound for one distribution, and sweeps n over powers of
two for the (log n)^2 scaling table.
"""

import math
import logging
from enum import Enum
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

from .dist import StepDistribution, from_spec
from .exact import DEFAULT_N_CAP, hitting_profile, interval_masses, upper_bound
from .potential import DROP_CONSTANT, drop_bound_report, potential_lower_bound, potential_profile


logger = logging.getLogger("BlindSearch.Bounds")

# Relative slack on the sandwich comparisons
SANDWICH_TOLERANCE = 1e-9


class Verdict(Enum):
    """Outcome of the lb <= E <= ub comparison."""
    SANDWICH_HOLDS = "lb <= E <= ub"
    LOWER_VIOLATED = "lb > E"
    UPPER_VIOLATED = "E > ub"
    INFINITE = "E = inf"


@dataclass
class BoundsReport:
    """Exact value, both bounds and the verdict for one distribution."""
    name: str
    n: int
    e_value: float
    upper_bound: float
    phi0: Optional[float]
    lower_bound: Optional[float]             # phi0 / C
    certified_lower_bound: Optional[float]   # phi0 / computed max drop
    max_drop: Optional[float]
    C: float
    interval_masses: np.ndarray
    verdict: Verdict

    CSV_FIELDS = (
        "name", "n", "lower_bound", "e_value", "upper_bound",
        "phi0", "max_drop", "certified_lower_bound", "verdict",
    )

    def to_row(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "lower_bound": self.lower_bound,
            "e_value": self.e_value,
            "upper_bound": self.upper_bound,
            "phi0": self.phi0,
            "max_drop": self.max_drop,
            "certified_lower_bound": self.certified_lower_bound,
            "verdict": self.verdict.value,
        }

    def to_dict(self) -> dict:
        data = self.to_row()
        data["C"] = self.C
        data["interval_masses"] = self.interval_masses.tolist()
        return data


def classify(lower: Optional[float], e_value: float, upper: float) -> Verdict:
    """Compare E with its two bounds; an infinite upper bound always holds."""
    if not math.isfinite(e_value):
        return Verdict.INFINITE
    slack = SANDWICH_TOLERANCE * max(1.0, e_value)
    if lower is not None and lower > e_value + slack:
        return Verdict.LOWER_VIOLATED
    if e_value > upper + slack:
        return Verdict.UPPER_VIOLATED
    return Verdict.SANDWICH_HOLDS


def bounds_report(
    dist: StepDistribution,
    C: float = DROP_CONSTANT,
    strict: bool = False,
    n_cap: int = DEFAULT_N_CAP,
    with_drop: bool = True,
) -> BoundsReport:
    """
    Build the bounds report of dist.

    Args:
        dist: Step distribution
        C: Drop constant for the lower bound Phi_0 / C
        strict: Refuse C below the computed maximum drop
        n_cap: Cap for the O(n^2) computations
        with_drop: Also compute the drop report (certified bound, max drop)

    For mu(1) = 0 the potential is undefined: lower bounds stay None and the
    verdict is INFINITE.
    """
    profile = hitting_profile(dist, n_cap=n_cap, cross_check=False)
    ub = upper_bound(dist)
    masses = interval_masses(dist)

    phi0 = lower = certified = max_drop = None
    if dist.mu1_positive:
        potential = potential_profile(dist)
        report = drop_bound_report(dist, potential, n_cap) if (with_drop or strict) else None
        phi0 = potential.phi0
        lower = potential_lower_bound(dist, C, strict=strict, profile=potential, report=report)
        if report is not None:
            max_drop = report.max_drop
            certified = phi0 / max_drop

    verdict = classify(lower, profile.e_value, ub)
    if verdict in (Verdict.LOWER_VIOLATED, Verdict.UPPER_VIOLATED):
        logger.error(
            f"{dist.name}(n={dist.n}): {verdict.value} "
            f"(lb={lower}, E={profile.e_value}, ub={ub})"
        )

    return BoundsReport(
        name=dist.name,
        n=dist.n,
        e_value=profile.e_value,
        upper_bound=ub,
        phi0=phi0,
        lower_bound=lower,
        certified_lower_bound=certified,
        max_drop=max_drop,
        C=C,
        interval_masses=masses,
        verdict=verdict,
    )


@dataclass
class ScalingRow:
    """One n of the scaling sweep."""
    n: int
    e_value: float
    phi0: float
    upper_bound: float
    lower_bound: float
    e_ratio: float          # E / (log2 n)^2
    phi0_ratio: float       # Phi_0 / (log2 n)^2

    CSV_FIELDS = ("n", "e_value", "phi0", "upper_bound", "lower_bound", "e_ratio", "phi0_ratio")

    def to_row(self) -> dict:
        return {name: getattr(self, name) for name in self.CSV_FIELDS}

    def to_dict(self) -> dict:
        return self.to_row()


def scaling_rows(
    kind: str,
    exps: Iterable[int],
    C: float = DROP_CONSTANT,
    n_cap: int = DEFAULT_N_CAP,
) -> List[ScalingRow]:
    """
    E, Phi_0 and both bounds for n = 2^k over the given exponents.

    The hitting profile skips its direct A^(s) route here, which halves the
    cost of the largest n.
    """
    rows = []
    for k in exps:
        n = 1 << k
        dist = from_spec(kind, n)
        logger.debug(f"scaling sweep: {dist.name} n=2^{k}")
        e_value = hitting_profile(dist, n_cap=n_cap, cross_check=False).e_value
        phi0 = potential_profile(dist).phi0
        squared = float(k * k)
        rows.append(ScalingRow(
            n=n,
            e_value=e_value,
            phi0=phi0,
            upper_bound=upper_bound(dist),
            lower_bound=phi0 / C,
            e_ratio=e_value / squared if squared else math.nan,
            phi0_ratio=phi0 / squared if squared else math.nan,
        ))
    return rows


def ratio_spread(rows: List[ScalingRow], field: str = "e_ratio", min_n: int = 1) -> float:
    """max/min of a ratio column over rows with n >= min_n."""
    values = [getattr(row, field) for row in rows if row.n >= min_n]
    if not values:
        return math.nan
    return max(values) / min(values)
