"""
Step Distributions for Blind Search
Construction, validation, querying and sampling of step-size distributions
mu on the discrete interval [1, n].

Named strategies:
- harmonic: mu(d) = 1/(d * H_n)
- pow2: equal weight on the powers of two below 2^L, L = floor(log2 n)
- uniform: mu(d) = 1/n
- adversarial: geometric weights mu(d) ~ B^(d-1), mass piled on large steps
"""

import json
import math
import logging
from enum import Enum, auto
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DistributionError,
    DistributionOverflowError,
    LengthMismatchError,
    NegativeWeightError,
    OutOfRangeError,
    UnknownStrategyError,
    WeightSumError,
    ZeroMassError,
)


logger = logging.getLogger("BlindSearch.Dist")

# Tolerances
WEIGHT_TOLERANCE = 1e-12        # |sum - 1| kept below this after construction
FILE_SUM_TOLERANCE = 1e-6       # files may be off by this much before rejection

# Smallest admissible adversarial mu(1); keeps expected times far below float max
LOG_MIN_WEIGHT = math.log(1e-200)

NAMED_STRATEGIES = ("harmonic", "pow2", "uniform", "adversarial")


class SamplerMode(Enum):
    """How draws from a distribution are produced."""
    INVERSE_CDF = auto()    # binary search on the CDF, O(log n)
    ALIAS = auto()          # Vose alias table, O(1)


def compensated_cumsum(values: Iterable[float]) -> np.ndarray:
    """Prefix sums with Neumaier compensation, in ascending index order."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty(len(values), dtype=np.float64)
    total = 0.0
    compensation = 0.0
    for i, value in enumerate(values.tolist()):
        t = total + value
        if abs(total) >= abs(value):
            compensation += (total - t) + value
        else:
            compensation += (value - t) + total
        total = t
        out[i] = total + compensation
    return out


def _build_alias_table(weights: np.ndarray):
    """Vose alias table for the given normalized weights."""
    n = len(weights)
    scaled = [w * n for w in weights.tolist()]
    prob = [0.0] * n
    alias = [0] * n

    small = [i for i, w in enumerate(scaled) if w < 1.0]
    large = [i for i, w in enumerate(scaled) if w >= 1.0]

    while small and large:
        l = small.pop()
        g = large.pop()

        alias[l] = g
        prob[l] = scaled[l]

        scaled[g] -= 1.0 - scaled[l]
        if scaled[g] < 1.0:
            small.append(g)
        else:
            large.append(g)

    heaviest = int(np.argmax(weights))
    for g in large:
        prob[g] = 1.0
        alias[g] = g
    # Leftovers from rounding; a zero-mass index must never be returned
    for l in small:
        if weights[l] > 0:
            prob[l] = 1.0
            alias[l] = l
        else:
            prob[l] = 0.0
            alias[l] = heaviest

    return np.array(prob), np.array(alias, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class StepDistribution:
    """
    Immutable step distribution mu on [1, n].

    weights[d-1] = mu(d) and cdf[a-1] = F(a). The 1-indexed views
    mu_table / cdf_table carry a leading zero so that mu_table[d] = mu(d)
    and cdf_table[0] = F(0) = 0.
    """
    n: int
    weights: np.ndarray
    cdf: np.ndarray
    mu1_positive: bool
    name: str = "custom"
    sampler: SamplerMode = SamplerMode.INVERSE_CDF
    mu_table: np.ndarray = field(init=False, repr=False)
    cdf_table: np.ndarray = field(init=False, repr=False)
    alias_prob: Optional[np.ndarray] = field(init=False, default=None, repr=False)
    alias_index: Optional[np.ndarray] = field(init=False, default=None, repr=False)
    last_support: int = field(init=False, default=0, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "mu_table", np.concatenate(([0.0], self.weights)))
        object.__setattr__(self, "cdf_table", np.concatenate(([0.0], self.cdf)))
        object.__setattr__(self, "last_support", int(np.flatnonzero(self.weights)[-1]))
        if self.sampler == SamplerMode.ALIAS:
            prob, alias = _build_alias_table(self.weights)
            object.__setattr__(self, "alias_prob", prob)
            object.__setattr__(self, "alias_index", alias)

        for name in ("weights", "cdf", "mu_table", "cdf_table", "alias_prob", "alias_index"):
            array = getattr(self, name)
            if array is not None:
                array.setflags(write=False)

    def F(self, a: int) -> float:
        """Cumulative mass F(a) = mu([1, a])."""
        return cdf(self, a)

    def quantile(self, u):
        """
        Inverse CDF: smallest d with F(d) > u.

        Zero-mass steps are never returned, so u -> 0+ gives d = 1
        whenever mu(1) > 0, and u at or past a rounded-down F(n) gives the
        largest d with positive mass.
        """
        index = np.searchsorted(self.cdf, u, side="right")
        index = np.minimum(index, self.last_support)
        return index + 1

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        """Draw step sizes; returns an int for size=None, else an int64 array."""
        if self.sampler == SamplerMode.ALIAS:
            slot = rng.integers(0, self.n, size=size)
            coin = rng.random(size=size)
            draw = np.where(coin < self.alias_prob[slot], slot, self.alias_index[slot]) + 1
        else:
            draw = self.quantile(rng.random(size=size))
        if size is None:
            return int(draw)
        return draw.astype(np.int64)

    def with_sampler(self, sampler: SamplerMode) -> "StepDistribution":
        """Same weights, different sampling method."""
        return StepDistribution(
            n=self.n,
            weights=self.weights.copy(),
            cdf=self.cdf.copy(),
            mu1_positive=self.mu1_positive,
            name=self.name,
            sampler=sampler,
        )

    def to_dict(self) -> dict:
        """Lossless dict in the distribution file format."""
        return {"n": self.n, "weights": self.weights.tolist()}

    def save(self, filepath: Union[str, Path]) -> None:
        """Write the distribution file (JSON)."""
        with open(filepath, "w") as f:
            json.dump(self.to_dict(), f)


def _normalize(weights: np.ndarray) -> np.ndarray:
    total = math.fsum(weights.tolist())
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        weights = weights / total
    return weights


def make_custom(
    n: int,
    raw_weights: Iterable[float],
    name: str = "custom",
    sampler: SamplerMode = SamplerMode.INVERSE_CDF,
) -> StepDistribution:
    """
    Build a distribution from nonnegative raw weights, renormalized to sum 1.

    Args:
        n: Domain size (>= 1)
        raw_weights: n nonnegative finite reals, index order d = 1..n
        name: Label carried into reports
        sampler: Sampling method used by sample()

    Raises:
        LengthMismatchError, NegativeWeightError, ZeroMassError
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DistributionError(f"n must be a positive integer, got {n!r}")
    weights = np.array(list(raw_weights), dtype=np.float64)
    if weights.ndim != 1 or len(weights) != n:
        raise LengthMismatchError(f"expected {n} weights, got {weights.size}")
    if not np.all(np.isfinite(weights)):
        raise NegativeWeightError("weights must be finite")
    if np.any(weights < 0):
        d = int(np.argmax(weights < 0)) + 1
        raise NegativeWeightError(f"mu({d}) = {weights[d - 1]} is negative")
    if not np.any(weights > 0):
        raise ZeroMassError("all weights are zero")

    weights = _normalize(weights)
    dist = StepDistribution(
        n=int(n),
        weights=weights,
        cdf=compensated_cumsum(weights),
        mu1_positive=bool(weights[0] > 0),
        name=name,
        sampler=sampler,
    )
    if not dist.mu1_positive:
        logger.debug(f"{name}(n={n}) has mu(1) = 0; expected hitting time is infinite")
    return dist


def harmonic(n: int, **kwargs) -> StepDistribution:
    """Harmonic distribution mu(d) = 1/(d * H_n)."""
    if n < 1:
        raise DistributionError(f"n must be >= 1, got {n}")
    d = np.arange(1, n + 1, dtype=np.float64)
    return make_custom(n, 1.0 / d, name="harmonic", **kwargs)


def pow2(n: int, **kwargs) -> StepDistribution:
    """
    Weight 1/L on each power of two 2^i, 0 <= i < L = floor(log2 n).

    For n = 1 the definition has empty support; mu(1) = 1 is used instead.
    """
    if n < 1:
        raise DistributionError(f"n must be >= 1, got {n}")
    weights = np.zeros(n)
    levels = n.bit_length() - 1
    if levels == 0:
        weights[0] = 1.0
    else:
        weights[[(1 << i) - 1 for i in range(levels)]] = 1.0 / levels
    return make_custom(n, weights, name="pow2", **kwargs)


def uniform(n: int, **kwargs) -> StepDistribution:
    """Uniform distribution mu(d) = 1/n."""
    if n < 1:
        raise DistributionError(f"n must be >= 1, got {n}")
    return make_custom(n, np.full(n, 1.0 / n), name="uniform", **kwargs)


def _adversarial_log_weights(n: int, log_base: float) -> np.ndarray:
    # log mu(d) = (d - n) ln B + ln(1 - 1/B) - ln(1 - B^-n)
    d = np.arange(1, n + 1, dtype=np.float64)
    return (
        (d - n) * log_base
        + math.log(-math.expm1(-log_base))
        - math.log(-math.expm1(-n * log_base))
    )


def _adversarial_log_mu1(n: int, log_base: float) -> float:
    return (
        (1 - n) * log_base
        + math.log(-math.expm1(-log_base))
        - math.log(-math.expm1(-n * log_base))
    )


def max_stable_base(n: int) -> float:
    """Largest base B whose adversarial mu(1) stays >= exp(LOG_MIN_WEIGHT)."""
    if n <= 1:
        return math.inf
    upper = (50.0 - LOG_MIN_WEIGHT) / (n - 1)
    root = brentq(
        lambda x: _adversarial_log_mu1(n, x) - LOG_MIN_WEIGHT,
        1e-12,
        upper,
        xtol=1e-15,
    )
    return math.exp(root) * (1.0 - 1e-12)


def adversarial_geometric(n: int, B: float, **kwargs) -> StepDistribution:
    """
    Geometric weights mu(d) = B^(d-1) (B-1) / (B^n - 1).

    Evaluated in log space. Raises DistributionOverflowError when mu(1)
    would fall below exp(LOG_MIN_WEIGHT); see max_stable_base().
    """
    if n < 1:
        raise DistributionError(f"n must be >= 1, got {n}")
    if not math.isfinite(B) or B <= 1.0:
        raise DistributionError(f"base B must be a finite real > 1, got {B}")
    if n == 1:
        return make_custom(1, [1.0], name="adversarial", **kwargs)

    log_base = math.log(B)
    log_weights = _adversarial_log_weights(n, log_base)
    if log_weights[0] < LOG_MIN_WEIGHT:
        raise DistributionOverflowError(
            f"adversarial(n={n}, B={B:g}) has log mu(1) = {log_weights[0]:.1f}; "
            f"use B <= {max_stable_base(n):.6g}"
        )
    return make_custom(n, np.exp(log_weights), name="adversarial", **kwargs)


def default_adversarial_base(n: int) -> float:
    """B = n^3 where representable, otherwise the largest stable base."""
    return min(float(n) ** 3, max_stable_base(n)) if n > 1 else 2.0


def cdf(dist: StepDistribution, a: int) -> float:
    """F(a) = sum of mu(d) for d <= a, with F(0) = 0."""
    if not 0 <= a <= dist.n:
        raise OutOfRangeError(f"a = {a} outside [0, {dist.n}]")
    return float(dist.cdf_table[a])


def sample(dist: StepDistribution, rng: np.random.Generator, size: Optional[int] = None):
    """Draw step sizes from dist using the caller's generator."""
    return dist.sample(rng, size)


def from_dict(data: Dict[str, Any], **kwargs) -> StepDistribution:
    """
    Parse the distribution file format.

    Accepted forms:
        {"n": <int>, "weights": [<float> x n]}
        {"n": <int>, "kind": "harmonic" | "pow2" | "uniform" | {"adversarial": {"B": <float>}}}
    """
    if not isinstance(data, dict) or "n" not in data:
        raise DistributionError("distribution must be an object with key 'n'")
    n = data["n"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise DistributionError(f"'n' must be a positive integer, got {n!r}")

    if "weights" in data:
        weights = data["weights"]
        if not isinstance(weights, list):
            raise DistributionError("'weights' must be a list")
        if len(weights) != n:
            raise LengthMismatchError(f"expected {n} weights, got {len(weights)}")
        try:
            values = [float(w) for w in weights]
        except (TypeError, ValueError) as e:
            raise NegativeWeightError(f"non-numeric weight: {e}") from e
        total = math.fsum(v for v in values if math.isfinite(v))
        if all(math.isfinite(v) and v >= 0 for v in values) and abs(total - 1.0) > FILE_SUM_TOLERANCE:
            if total == 0:
                raise ZeroMassError("all weights are zero")
            raise WeightSumError(f"weights sum to {total!r}, expected 1 within {FILE_SUM_TOLERANCE}")
        return make_custom(n, values, name=data.get("name", "custom"), **kwargs)

    kind = data.get("kind")
    if isinstance(kind, dict) and "adversarial" in kind:
        params = kind["adversarial"] or {}
        if "B" not in params:
            return adversarial_geometric(n, default_adversarial_base(n), **kwargs)
        return adversarial_geometric(n, float(params["B"]), **kwargs)
    if kind in ("harmonic", "pow2", "uniform"):
        return _CONSTRUCTORS[kind](n, **kwargs)
    raise UnknownStrategyError(f"unknown distribution kind {kind!r}")


def load_distribution(filepath: Union[str, Path], **kwargs) -> StepDistribution:
    """Read a distribution file."""
    try:
        with open(filepath, "r") as f:
            data = json.load(f)
    except OSError as e:
        raise DistributionError(f"cannot read distribution file {filepath}: {e}") from e
    except json.JSONDecodeError as e:
        raise DistributionError(f"invalid JSON in {filepath}: {e}") from e
    return from_dict(data, **kwargs)


def from_spec(spec: str, n: int, **kwargs) -> StepDistribution:
    """
    Parse a dist spec string.

    Grammar: harmonic | pow2 | uniform | adversarial | adversarial:B=<float> | file:<path>
    For file: the file's own n must match n unless n is None.
    """
    text = spec.strip()
    lowered = text.lower()

    if lowered.startswith("file:"):
        dist = load_distribution(text[5:], **kwargs)
        if n is not None and dist.n != n:
            raise LengthMismatchError(f"file has n={dist.n}, requested n={n}")
        return dist

    if n is None or n < 1:
        raise DistributionError(f"n must be a positive integer for '{spec}'")

    if lowered in ("harmonic", "pow2", "uniform"):
        return _CONSTRUCTORS[lowered](n, **kwargs)

    if lowered == "adversarial":
        return adversarial_geometric(n, default_adversarial_base(n), **kwargs)

    if lowered.startswith("adversarial:"):
        param = lowered.split(":", 1)[1].replace(" ", "")
        if not param.startswith("b="):
            raise UnknownStrategyError(f"expected adversarial:B=<float>, got '{spec}'")
        try:
            base = float(param[2:])
        except ValueError as e:
            raise UnknownStrategyError(f"bad base in '{spec}'") from e
        return adversarial_geometric(n, base, **kwargs)

    raise UnknownStrategyError(
        f"unknown strategy '{spec}'. Choose one of: harmonic, pow2, uniform, "
        "adversarial[:B=<float>], file:<path>"
    )


_CONSTRUCTORS = {
    "harmonic": harmonic,
    "pow2": pow2,
    "uniform": uniform,
}
