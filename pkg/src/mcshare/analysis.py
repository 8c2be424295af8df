"""Single-slot success analysis for contending transmitters.

Everything here treats one slot in isolation: M users each pick at most one of
N channels according to per-user access distributions, and a channel carries a
success exactly when one user picked it.  The module provides the closed-form
expected-success count, two independent exact oracles (direct enumeration and
an occupancy dynamic program), the optimizing symmetric access probability,
the re-rendezvous strategy value, and numeric verification reports for the
optimality and dominance claims.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import ConfigurationError, TractabilityError

ENUMERATION_GUARD = 10_000_000
EQUALITY_TOL = 1e-12


@dataclass(frozen=True)
class AccessDistribution:
    """Per-user channel selection probabilities over the N available channels.

    Entries may sum to less than one; the residual is the probability of not
    transmitting at all in the slot.
    """

    probabilities: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probabilities)
        object.__setattr__(self, "probabilities", probs)
        if not probs:
            raise ConfigurationError("access distribution needs at least one channel")
        for p in probs:
            if p < -EQUALITY_TOL or p > 1 + EQUALITY_TOL:
                raise ConfigurationError(f"probability {p} outside [0, 1]")
        if sum(probs) > 1 + EQUALITY_TOL:
            raise ConfigurationError("channel probabilities sum to more than 1")

    @property
    def num_channels(self) -> int:
        return len(self.probabilities)

    @property
    def abstain_probability(self) -> float:
        return max(0.0, 1.0 - sum(self.probabilities))


@dataclass(frozen=True)
class AccessMatrix:
    """One access distribution per contending user, all over the same channels."""

    columns: tuple[AccessDistribution, ...]

    def __post_init__(self):
        if not self.columns:
            raise ConfigurationError("access matrix needs at least one user")
        object.__setattr__(self, "columns", tuple(self.columns))
        n = self.columns[0].num_channels
        for col in self.columns:
            if col.num_channels != n:
                raise ConfigurationError("all access distributions must share one channel count")

    @property
    def num_users(self) -> int:
        return len(self.columns)

    @property
    def num_channels(self) -> int:
        return self.columns[0].num_channels

    def as_array(self) -> np.ndarray:
        """Channel-by-user probability array, shape (N, M)."""
        return np.array([col.probabilities for col in self.columns], dtype=float).T

    @classmethod
    def symmetric(cls, probabilities: Sequence[float], num_users: int) -> "AccessMatrix":
        """All users share one access distribution."""
        col = AccessDistribution(tuple(probabilities))
        return cls(columns=(col,) * num_users)

    @classmethod
    def rerendezvous_profile(cls, num_users: int, num_channels: int, holders: int) -> "AccessMatrix":
        """``holders`` users pinned to distinct channels 1..holders with
        probability one; the remaining users uniform over all channels."""
        if holders < 0 or holders > num_users:
            raise ConfigurationError("holders must be between 0 and the number of users")
        if holders > num_channels:
            raise ConfigurationError("cannot pin more holders than channels")
        cols = []
        for m in range(holders):
            probs = [0.0] * num_channels
            probs[m] = 1.0
            cols.append(AccessDistribution(tuple(probs)))
        uniform = AccessDistribution((1.0 / num_channels,) * num_channels)
        cols.extend([uniform] * (num_users - holders))
        return cls(columns=tuple(cols))


def expected_successes(matrix: AccessMatrix) -> float:
    """Expected number of channels carrying exactly one transmission.

    Sums, over channels and users, the probability that the user picks the
    channel while every other user stays off it.
    """
    a = matrix.as_array()
    n_ch, n_users = a.shape
    total = 0.0
    for n in range(n_ch):
        row = a[n]
        stay_off = 1.0 - row
        for m in range(n_users):
            p = row[m]
            if p == 0.0:
                continue
            others = np.prod(np.delete(stay_off, m))
            total += p * others
    return float(total)


def enumerate_expected_successes(matrix: AccessMatrix) -> float:
    """Exact expectation by brute force over every joint action.

    Each user either abstains or picks a channel; outcomes are weighted by the
    product of the users' individual probabilities and scored by the number of
    channels picked exactly once.  Independent of the closed-form expression;
    guarded to (N+1)^M <= 10^7 outcomes.
    """
    n_ch = matrix.num_channels
    n_users = matrix.num_users
    if (n_ch + 1) ** n_users > ENUMERATION_GUARD:
        raise TractabilityError(
            f"{(n_ch + 1) ** n_users} joint outcomes exceed the enumeration guard"
        )
    per_user = []
    for col in matrix.columns:
        per_user.append((col.abstain_probability,) + col.probabilities)
    total = 0.0
    counts = [0] * (n_ch + 1)
    for actions in itertools.product(range(n_ch + 1), repeat=n_users):
        prob = 1.0
        for m, act in enumerate(actions):
            prob *= per_user[m][act]
            if prob == 0.0:
                break
        if prob == 0.0:
            continue
        for c in range(1, n_ch + 1):
            counts[c] = 0
        for act in actions:
            if act:
                counts[act] += 1
        singles = sum(1 for c in range(1, n_ch + 1) if counts[c] == 1)
        total += prob * singles
    return total


def dp_expected_successes(matrix: AccessMatrix) -> float:
    """Exact expectation via a per-channel occupancy dynamic program.

    Users are absorbed one at a time while tracking the joint distribution of
    per-channel occupancy capped at two (empty / single / collided), which is
    sufficient to count singleton channels.  Gives the same value as the full
    enumeration but stays tractable for instances the guard refuses.
    """
    n_ch = matrix.num_channels
    states: dict[tuple[int, ...], float] = {(0,) * n_ch: 1.0}
    for col in matrix.columns:
        abstain = col.abstain_probability
        probs = col.probabilities
        nxt: dict[tuple[int, ...], float] = defaultdict(float)
        for state, weight in states.items():
            if abstain > 0.0:
                nxt[state] += weight * abstain
            for n, p in enumerate(probs):
                if p == 0.0:
                    continue
                if state[n] >= 2:
                    nxt[state] += weight * p
                else:
                    bumped = state[:n] + (state[n] + 1,) + state[n + 1:]
                    nxt[bumped] += weight * p
        states = nxt
    return float(sum(w * sum(1 for c in s if c == 1) for s, w in states.items()))


def symmetric_expected_successes(probabilities: Sequence[float], num_users: int) -> float:
    """Expected successes when every one of ``num_users`` users shares the
    given access distribution."""
    col = AccessDistribution(tuple(probabilities))
    m = int(num_users)
    if m < 1:
        raise ConfigurationError("need at least one user")
    return float(sum(m * p * (1.0 - p) ** (m - 1) for p in col.probabilities))


def optimal_symmetric_probability(num_users: int, num_channels: int) -> float:
    """Per-channel access probability that maximizes the symmetric expected
    success count: min{1/N, 1/M}."""
    if num_users < 1 or num_channels < 1:
        raise ConfigurationError("user and channel counts must be positive")
    return min(1.0 / num_channels, 1.0 / num_users)


def max_expected_successes(num_users: int, num_channels: int) -> float:
    """Maximum symmetric expected success count.

    N(1-1/M)^(M-1) when users outnumber channels, else M(1-1/N)^(M-1).
    """
    m, n = int(num_users), int(num_channels)
    if m < 1 or n < 1:
        raise ConfigurationError("user and channel counts must be positive")
    if m > n:
        return n * (1.0 - 1.0 / m) ** (m - 1)
    return m * (1.0 - 1.0 / n) ** (m - 1)


def _golden_section_max(f: Callable[[float], float], lo: float, hi: float,
                        tol: float = 1e-12) -> tuple[float, float]:
    """Maximize a unimodal function on [lo, hi] by golden-section search."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


@dataclass(frozen=True)
class SymmetricOptimumReport:
    num_users: int
    num_channels: int
    argmax_p: float
    max_value: float
    expected_p: float
    expected_value: float
    formula_match: bool


def verify_theorem1(num_users: int, num_channels: int,
                    grid_step: float = 1e-3) -> SymmetricOptimumReport:
    """Numerically locate the best common per-channel access probability and
    compare it against the closed-form optimum.

    A coarse grid over the feasible range [0, min(1, 1/N)] brackets the
    maximum, golden-section search refines it, and the report states whether
    the argmax lands within ``grid_step`` of min{1/N, 1/M} and the value
    within 1e-9 of the closed-form maximum.
    """
    m, n = int(num_users), int(num_channels)
    if m < 1 or n < 1:
        raise ConfigurationError("user and channel counts must be positive")
    p_max = min(1.0, 1.0 / n)

    def value(p: float) -> float:
        return n * m * p * (1.0 - p) ** (m - 1)

    steps = max(2, int(round(p_max / grid_step)))
    grid = np.linspace(0.0, p_max, steps + 1)
    values = [value(p) for p in grid]
    best = int(np.argmax(values))
    lo = grid[max(0, best - 1)]
    hi = grid[min(len(grid) - 1, best + 1)]
    argmax_p, max_value = _golden_section_max(value, float(lo), float(hi))
    expected_p = optimal_symmetric_probability(m, n)
    expected_value = max_expected_successes(m, n)
    match = (abs(argmax_p - expected_p) <= grid_step
             and abs(max_value - expected_value) <= 1e-9)
    return SymmetricOptimumReport(
        num_users=m, num_channels=n, argmax_p=argmax_p, max_value=max_value,
        expected_p=expected_p, expected_value=expected_value, formula_match=match,
    )


def rerendezvous_expected_successes(num_users: int, num_channels: int, holders: int) -> float:
    """Expected successes when ``holders`` users return deterministically to
    distinct channels and the rest access uniformly.

    Closed form: l(1-1/N)^(M-l) + (N-l) * ((M-l)/N) * (1-1/N)^(M-l-1),
    derived from first principles for the stated strategy profile (see
    rerendezvous_expected_successes_printed for the published variant).
    Valid for 2 <= M <= N (accepts M=1 as the trivial extension).
    """
    m, n, l = int(num_users), int(num_channels), int(holders)
    if m < 1 or n < 1:
        raise ConfigurationError("user and channel counts must be positive")
    if m > n:
        raise ConfigurationError("re-rendezvous analysis requires users <= channels")
    if l < 0 or l > m:
        raise ConfigurationError("holders must be between 0 and the number of users")
    q = 1.0 - 1.0 / n
    pinned = l * q ** (m - l)
    free = m - l
    if free == 0:
        return float(pinned)
    roaming = (n - l) * (free / n) * q ** (free - 1)
    return float(pinned + roaming)


def rerendezvous_expected_successes_printed(num_users: int, num_channels: int,
                                            holders: int) -> float:
    """The published closed form for the re-rendezvous profile, kept verbatim
    for comparison: l(1-1/N)^(N-l) + (N-l) * ((M-l)/N) * (1-1/N)^(N-l-1).

    It disagrees with the exact enumeration unless M = N; the corrected
    expression in rerendezvous_expected_successes is the one the oracles
    confirm.
    """
    m, n, l = int(num_users), int(num_channels), int(holders)
    if m < 1 or n < 1:
        raise ConfigurationError("user and channel counts must be positive")
    if l < 0 or l > m:
        raise ConfigurationError("holders must be between 0 and the number of users")
    q = 1.0 - 1.0 / n
    pinned = l * q ** (n - l)
    if n == l:
        return float(pinned)
    roaming = (n - l) * ((m - l) / n) * q ** (n - l - 1)
    return float(pinned + roaming)


@dataclass(frozen=True)
class RerendezvousGap:
    holders: int
    with_rerendezvous: float
    all_random: float

    @property
    def gap(self) -> float:
        return self.with_rerendezvous - self.all_random


@dataclass(frozen=True)
class RerendezvousDominanceReport:
    num_users: int
    num_channels: int
    gaps: tuple[RerendezvousGap, ...]
    all_nonnegative: bool
    equality_set: frozenset

    @property
    def strictly_positive_above_one(self) -> bool:
        return all(g.gap > EQUALITY_TOL for g in self.gaps if g.holders >= 2)


def verify_theorem2(num_users: int, num_channels: int,
                    oracle: Callable[[AccessMatrix], float] | None = None,
                    ) -> RerendezvousDominanceReport:
    """Check that returning to previously held channels never hurts.

    For every number of holders l in 0..M, evaluates the re-rendezvous
    profile and the all-uniform profile through an exact oracle (the
    occupancy dynamic program by default, which stays exact where the direct
    enumeration guard would trip) and reports the gaps.  Equality is expected
    exactly at l in {0, 1}.
    """
    m, n = int(num_users), int(num_channels)
    if m < 2 or m > n:
        raise ConfigurationError("dominance check requires 2 <= users <= channels")
    evaluate = oracle if oracle is not None else dp_expected_successes
    uniform = AccessMatrix.symmetric((1.0 / n,) * n, m)
    baseline = evaluate(uniform)
    gaps = []
    for l in range(m + 1):
        profile = AccessMatrix.rerendezvous_profile(m, n, l)
        gaps.append(RerendezvousGap(
            holders=l,
            with_rerendezvous=evaluate(profile),
            all_random=baseline,
        ))
    equality = frozenset(g.holders for g in gaps if abs(g.gap) < EQUALITY_TOL)
    nonneg = all(g.gap >= -EQUALITY_TOL for g in gaps)
    return RerendezvousDominanceReport(
        num_users=m, num_channels=n, gaps=tuple(gaps),
        all_nonnegative=nonneg, equality_set=equality,
    )


def _check_appendix_domain(num_users: int, num_channels: int) -> tuple[int, int]:
    m, n = int(num_users), int(num_channels)
    if n < 2:
        raise ConfigurationError("need at least two channels (log singularity below)")
    if m < 2 or m > n:
        raise ConfigurationError("gap analysis requires 2 <= users <= channels")
    return m, n


def appendix_f(num_users: int, num_channels: int, l: float) -> float:
    """Scaled gap between the re-rendezvous and all-random success counts as a
    function of the (real-valued) number of holders:
    f(l) = (MN + l^2 - Ml - l)/N - M(1-1/N)^l.  Zero at l = 0 and l = 1."""
    m, n = _check_appendix_domain(num_users, num_channels)
    q = 1.0 - 1.0 / n
    return (m * n + l * l - m * l - l) / n - m * q ** l


def appendix_f_prime(num_users: int, num_channels: int, l: float) -> float:
    """First derivative of appendix_f in l."""
    m, n = _check_appendix_domain(num_users, num_channels)
    q = 1.0 - 1.0 / n
    return (2.0 * l - m - 1.0) / n - m * q ** l * math.log(q)


def appendix_f_double_prime(num_users: int, num_channels: int, l: float) -> float:
    """Second derivative of appendix_f in l; positive for l >= 1 on the
    valid domain, which is what makes the dominance gap strictly grow."""
    m, n = _check_appendix_domain(num_users, num_channels)
    q = 1.0 - 1.0 / n
    return 2.0 / n - m * q ** l * math.log(q) ** 2
