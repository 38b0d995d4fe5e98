"""Monte Carlo checks of the failure bounds, plus an exact binomial oracle.

The forger is the i.i.d. guessing abstraction: each of the verifier's L bits
is guessed wrongly with probability P_e. The repudiation strategies are a
representative family (independent per-origin flips), so a sweep over them is
a falsification attempt, not a proof that no strategy beats the bound.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .channel import LinkParams
from .errors import ValidationError
from .protocol import PartyId, Role, run_distribution, sign, verify
from .rng import Seed, derive, generator
from .security import Thresholds, forge_bound, honest_abort_bound, repudiation_bound

# Trials per shard; fixed so results do not depend on the worker count.
SHARD_SIZE = 250_000


@dataclass(frozen=True)
class AttackOutcome:
    attack: str
    params: dict
    trials: int
    successes: int
    bound_value: float

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValidationError("successes must lie in [0, trials]")

    @property
    def frequency(self) -> float:
        return self.successes / self.trials

    @property
    def wilson_95(self) -> tuple:
        return wilson_interval(self.successes, self.trials)

    @property
    def wilson_upper_95(self) -> float:
        return self.wilson_95[1]

    @property
    def wilson_halfwidth(self) -> float:
        lo, hi = self.wilson_95
        return (hi - lo) / 2.0

    @property
    def within_bound(self) -> bool:
        """False only when the data demonstrate a violation at 95% confidence."""
        return self.wilson_95[0] <= self.bound_value

    def to_row(self) -> dict:
        return {
            "attack": self.attack,
            "params": ";".join(f"{k}={v!r}" for k, v in self.params.items()),
            "trials": self.trials,
            "successes": self.successes,
            "frequency": self.frequency,
            "wilson_upper_95": self.wilson_upper_95,
            "bound": self.bound_value,
            "result": "pass" if self.within_bound else "fail",
        }


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple:
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _tail_sum(n: int, p: float, lo: int, hi: int) -> float:
    """Sum of the Bin(n, p) pmf over ``lo <= j <= hi`` in the log domain."""
    lo, hi = max(lo, 0), min(hi, n)
    if lo > hi:
        return 0.0
    if p in (0.0, 1.0):
        mode = 0 if p == 0.0 else n
        return 1.0 if lo <= mode <= hi else 0.0
    log_p, log_q = math.log(p), math.log1p(-p)
    lg_n = math.lgamma(n + 1)
    logs = [
        lg_n - math.lgamma(j + 1) - math.lgamma(n - j + 1) + j * log_p + (n - j) * log_q
        for j in range(lo, hi + 1)
    ]
    peak = max(logs)
    total = math.fsum(math.exp(v - peak) for v in logs)
    return min(1.0, math.exp(peak) * total)


def _validate(n: int, p: float) -> None:
    if n < 0:
        raise ValidationError("n must be >= 0")
    if not 0 <= p <= 1:
        raise ValidationError("p must be in [0, 1]")


def exact_acceptance_probability(n: int, p: float, threshold_count: float) -> float:
    """``Pr[Binomial(n, p) < threshold_count]`` by direct summation of the pmf.

    Terms are accumulated in the log domain, so n in the tens of thousands is fine.
    """
    _validate(n, p)
    return _tail_sum(n, p, 0, math.ceil(threshold_count) - 1)


def exact_rejection_probability(n: int, p: float, threshold_count: float) -> float:
    """``Pr[Binomial(n, p) >= threshold_count]``, summed over the upper tail directly."""
    _validate(n, p)
    return _tail_sum(n, p, math.ceil(threshold_count), n)


def exact_repudiation_probability(
    L: int, q_bob_origin: float, q_charlie_origin: float, s_a: float, s_v: float
) -> float:
    """Exact repudiation probability for independent per-origin mismatch rates.

    Each recipient checks L/2 positions of each origin string, on disjoint
    halves, so his mismatch count is Bin(L/2, q_b) + Bin(L/2, q_c) and the two
    recipients' counts are independent.
    """
    half = L // 2
    pmf_b = _binomial_pmf(half, q_bob_origin)
    pmf_c = _binomial_pmf(half, q_charlie_origin)
    total = np.convolve(pmf_b, pmf_c)
    counts = np.arange(total.size)
    accept_direct = total[counts < L * s_a].sum()
    reject_forwarded = total[counts >= L * s_v].sum()
    return float(accept_direct * reject_forwarded)


def _binomial_pmf(n: int, p: float) -> np.ndarray:
    j = np.arange(n + 1)
    if p in (0.0, 1.0):
        out = np.zeros(n + 1)
        out[0 if p == 0.0 else n] = 1.0
        return out
    lg = np.array([math.lgamma(x + 1) for x in range(n + 1)])
    return np.exp(lg[n] - lg[j] - lg[n - j] + j * math.log(p) + (n - j) * math.log1p(-p))


def run_sharded(
    count_fn: Callable[[np.random.Generator, int], int],
    trials: int,
    seed: Seed,
    workers: int = 1,
) -> int:
    """Sum ``count_fn(rng, n)`` over fixed-size shards with per-shard seeds."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    shards = [
        (i, min(SHARD_SIZE, trials - start))
        for i, start in enumerate(range(0, trials, SHARD_SIZE))
    ]

    def run(shard):
        index, size = shard
        return count_fn(generator(seed, "shard", index), size)

    if workers <= 1:
        return sum(run(s) for s in shards)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(run, shards))


def simulate_honest_abort(
    e: float, L: int, s_a: float, trials: int, seed: Seed, workers: int = 1
) -> AttackOutcome:
    """Fraction of honest runs where the direct recipient sees at least L*s_a mismatches."""
    limit = L * s_a

    def count(rng, n):
        mismatches = rng.binomial(L, e, size=n)
        return int(np.count_nonzero(mismatches >= limit))

    return AttackOutcome(
        attack="honest_abort",
        params={"e": e, "L": L, "s_a": s_a},
        trials=trials,
        successes=run_sharded(count, trials, derive(seed, "honest_abort"), workers),
        bound_value=honest_abort_bound(L, s_a, e),
    )


def simulate_forge(
    P_e: float, L: int, s_v: float, trials: int, seed: Seed, workers: int = 1
) -> AttackOutcome:
    """Fraction of forgeries with fewer than L*s_v wrong guesses out of L."""
    if s_v > P_e:
        raise ValidationError("forging bound undefined: s_v exceeds P_e")
    limit = L * s_v

    def count(rng, n):
        wrong = rng.binomial(L, P_e, size=n)
        return int(np.count_nonzero(wrong < limit))

    return AttackOutcome(
        attack="forge",
        params={"P_e": P_e, "L": L, "s_v": s_v},
        trials=trials,
        successes=run_sharded(count, trials, derive(seed, "forge"), workers),
        bound_value=forge_bound(L, s_v, P_e),
    )


@dataclass(frozen=True)
class RepudiationStrategy:
    """Alice flips each declared bit of a given origin string with this probability."""

    p_bob_origin: float = 0.0
    p_charlie_origin: float = 0.0

    def combined_rates(self, e: float) -> tuple:
        def mix(p):
            return e * (1 - p) + (1 - e) * p

        return mix(self.p_bob_origin), mix(self.p_charlie_origin)


def simulate_repudiation(
    e: float,
    L: int,
    s_a: float,
    s_v: float,
    strategy: RepudiationStrategy,
    trials: int,
    seed: Seed,
    method: str = "counts",
    workers: int = 1,
) -> AttackOutcome:
    """Fraction of runs where Bob accepts at s_a and Charlie rejects the forwarded copy at s_v.

    ``method="protocol"`` runs the real distribution and messaging code per
    trial. ``method="counts"`` samples the four half-string mismatch counts
    directly, which has the same distribution because the partition is
    independent of the i.i.d. errors; use it for large trial counts.
    """
    if not s_a < s_v:
        raise ValidationError("repudiation needs s_a < s_v")
    if L % 2:
        raise ValidationError(f"cannot halve signature: L={L} is odd")
    if method == "protocol":
        successes = _repudiation_via_protocol(e, L, s_a, s_v, strategy, trials, seed)
    elif method == "counts":
        q_b, q_c = strategy.combined_rates(e)
        half = L // 2

        def count(rng, n):
            bob = rng.binomial(half, q_b, size=n) + rng.binomial(half, q_c, size=n)
            charlie = rng.binomial(half, q_b, size=n) + rng.binomial(half, q_c, size=n)
            return int(np.count_nonzero((bob < L * s_a) & (charlie >= L * s_v)))

        successes = run_sharded(count, trials, derive(seed, "repudiation"), workers)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return AttackOutcome(
        attack="repudiation",
        params={
            "e": e,
            "L": L,
            "s_a": s_a,
            "s_v": s_v,
            "p_bob": strategy.p_bob_origin,
            "p_charlie": strategy.p_charlie_origin,
        },
        trials=trials,
        successes=successes,
        bound_value=repudiation_bound(L, s_a, s_v),
    )


def _repudiation_via_protocol(e, L, s_a, s_v, strategy, trials, seed) -> int:
    link = LinkParams(qber_override=e)
    successes = 0
    for t in range(trials):
        trial_seed = derive(seed, "repudiation-protocol", t)
        dist = run_distribution(link, L, 1, trial_seed)
        declaration = sign(dist.alice, 0)
        rng = generator(trial_seed, "alice-cheat")
        for origin, p in (
            (PartyId.BOB, strategy.p_bob_origin),
            (PartyId.CHARLIE, strategy.p_charlie_origin),
        ):
            mask = rng.random(L) < p
            declaration = declaration.with_flips(origin, mask)
        bob = verify(declaration, dist.bob.keys[0], s_a, Role.DIRECT)
        if bob.accepted:
            charlie = verify(declaration, dist.charlie.keys[0], s_v, Role.FORWARDED)
            successes += not charlie.accepted
    return successes


def repudiation_grid(step: float = 0.05, top: float = 0.3) -> List[RepudiationStrategy]:
    values = np.round(np.arange(0.0, top + step / 2, step), 10)
    return [RepudiationStrategy(float(a), float(b)) for a, b in itertools.product(values, values)]


def sweep_repudiation(
    e: float,
    L: int,
    th: Thresholds,
    trials: int,
    seed: Seed,
    strategies: Optional[Sequence[RepudiationStrategy]] = None,
    workers: int = 1,
) -> List[AttackOutcome]:
    """Run every strategy of the grid; the caller takes the max frequency."""
    strategies = repudiation_grid() if strategies is None else strategies
    return [
        simulate_repudiation(e, L, th.s_a, th.s_v, s, trials, derive(seed, "grid", i), workers=workers)
        for i, s in enumerate(strategies)
    ]


def worst(outcomes: Iterable[AttackOutcome]) -> AttackOutcome:
    return max(outcomes, key=lambda o: o.frequency)
