"""Independent verification backends.

These deliberately avoid the analytic code paths they check: first-passage
rates are estimated by stochastic simulation of the jump chain, and cut
sets by exhaustive truth-table enumeration.  Randomness comes from numpy's
PCG64 generator with an explicit 64-bit seed, so estimates are bit
reproducible across platforms and releases of this package.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GhcftWarning, ResourceLimitError
from .model import CmcElement
from .qualitative import CutSetResult, FlattenedTree
from .quantitative import build_generator

BRUTE_FORCE_EVENT_CAP = 20
DEFAULT_MAX_JUMPS = 100_000


@dataclass(frozen=True)
class SimulationEstimate:
    """First-passage statistics from `runs` simulated trajectories.

    `mean_first_passage` averages the hitting times of the runs that hit
    the target before the censoring horizon; `rate_estimate` is its
    reciprocal and `std_error` the delta-method standard error of that
    rate.  Identical (model, seed, runs) inputs reproduce the estimate
    bit for bit.
    """

    runs: int
    hits: int
    censored: int
    mean_first_passage: float      # hours, nan if no run hit
    rate_estimate: float           # per hour, 0.0 if no run hit
    std_error: float               # per hour
    seed: int
    horizon: float

    def brackets(self, rate: float, sigmas: float = 3.0) -> bool:
        """Whether an analytic rate lies within `sigmas` standard errors."""
        return abs(rate - self.rate_estimate) <= sigmas * self.std_error


def default_horizon(cmc: CmcElement, ifm_rates=None) -> float:
    """Censoring horizon: 100 / (minimum nonzero effective rate), capped."""
    gen = build_generator(cmc, ifm_rates)
    off = gen.matrix.copy()
    np.fill_diagonal(off, 0.0)
    nonzero = off[off > 0]
    if nonzero.size == 0:
        return 1e12
    return min(100.0 / float(nonzero.min()), 1e12)


def simulate_first_passage(cmc: CmcElement,
                           ifm_rates=None,
                           target: str = "",
                           runs: int = 10 ** 5,
                           horizon: float | None = None,
                           seed: int = 0,
                           max_jumps: int = DEFAULT_MAX_JUMPS) -> SimulationEstimate:
    """Estimate the first-passage rate to `target` by simulation.

    Each run draws exponential holding times from the effective exit rates
    and jumps along the embedded chain until it hits the target, gets
    stuck in another absorbing state, or exceeds the horizon; the last two
    cases are censored.  Runs advance in lock step on numpy arrays, so
    10^5 runs on desk-scale chains take well under a second.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    gen = build_generator(cmc, ifm_rates)
    if horizon is None:
        horizon = default_horizon(cmc, ifm_rates)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    target_index = gen.index(target)

    n = len(gen.states)
    exit_rates = -np.diag(gen.matrix)
    jump_cdf = np.zeros((n, n))
    for i in range(n):
        if exit_rates[i] > 0:
            row = gen.matrix[i].copy()
            row[i] = 0.0
            jump_cdf[i] = np.cumsum(row / exit_rates[i])

    rng = np.random.Generator(np.random.PCG64(seed))
    state = np.full(runs, gen.initial_index, dtype=np.int64)
    clock = np.zeros(runs)
    hit_time = np.full(runs, np.nan)
    active = np.ones(runs, dtype=bool)
    if target_index == gen.initial_index:
        hit_time[:] = 0.0
        active[:] = False

    jumps = 0
    while active.any():
        if jumps >= max_jumps:
            warnings.warn(f"{int(active.sum())} runs exceeded {max_jumps} "
                          f"jumps and were censored", GhcftWarning,
                          stacklevel=2)
            break
        idx = np.nonzero(active)[0]
        rates = exit_rates[state[idx]]
        stuck = rates <= 0.0
        if stuck.any():
            active[idx[stuck]] = False
            idx = idx[~stuck]
            if idx.size == 0:
                break
            rates = exit_rates[state[idx]]
        clock[idx] += rng.exponential(1.0 / rates)
        timed_out = clock[idx] > horizon
        if timed_out.any():
            active[idx[timed_out]] = False
            idx = idx[~timed_out]
            if idx.size == 0:
                jumps += 1
                continue
        u = rng.random(idx.size)
        # row-wise searchsorted: the index with cdf[k-1] <= u < cdf[k]
        nxt = (jump_cdf[state[idx]] <= u[:, None]).sum(axis=1)
        state[idx] = np.minimum(nxt, n - 1)
        arrived = nxt == target_index
        if arrived.any():
            hit_time[idx[arrived]] = clock[idx[arrived]]
            active[idx[arrived]] = False
        jumps += 1

    hits = int(np.count_nonzero(~np.isnan(hit_time)))
    if hits == 0:
        warnings.warn(f"no run reached state {target!r} within the horizon; "
                      f"the rate estimate is 0", GhcftWarning, stacklevel=2)
        return SimulationEstimate(runs, 0, runs, math.nan, 0.0, 0.0,
                                  seed, horizon)
    samples = hit_time[~np.isnan(hit_time)]
    mean = float(samples.mean())
    if mean == 0.0:
        return SimulationEstimate(runs, hits, runs - hits, 0.0, math.inf, 0.0,
                                  seed, horizon)
    if hits > 1:
        sem = float(samples.std(ddof=1)) / math.sqrt(hits)
    else:
        sem = float("inf")
    rate = 1.0 / mean
    std_error = sem / mean ** 2  # delta method for 1/mean
    return SimulationEstimate(runs, hits, runs - hits, mean, rate, std_error,
                              seed, horizon)


def brute_force_cut_sets(tree: FlattenedTree,
                         cap: int = BRUTE_FORCE_EVENT_CAP) -> CutSetResult:
    """Exact minimal cut sets by enumerating all 2^n event assignments.

    The tree's Boolean function is evaluated for every assignment (as a
    vector over all bitmasks); a true assignment is a minimal cut set
    exactly when clearing any single present event makes it false, which
    suffices because AND/OR trees are monotone.
    """
    events = tree.event_ids
    n = len(events)
    if n > cap:
        raise ResourceLimitError(f"{n} basic events exceed the brute-force "
                                 f"cap of {cap}")
    bit = {event: i for i, event in enumerate(events)}
    masks = np.arange(1 << n, dtype=np.int64)

    values: dict[str, np.ndarray] = {}

    def value_of(node: str) -> np.ndarray:
        if node in values:
            return values[node]
        gate = tree.gate_map().get(node)
        if gate is None:
            result = (masks >> bit[node]) & 1 != 0
        else:
            columns = [value_of(ref) for ref in gate.inputs]
            if gate.kind.value == "and":
                result = np.logical_and.reduce(columns)
            else:
                result = np.logical_or.reduce(columns)
        values[node] = result
        return result

    top = value_of(tree.root)
    minimal = top.copy()
    for i in range(n):
        has_bit = (masks >> i) & 1 != 0
        # clearing a present event must falsify the top
        minimal &= ~has_bit | ~top[masks & ~np.int64(1 << i)]

    cut_sets = []
    for mask in np.nonzero(minimal)[0]:
        cut_sets.append(frozenset(events[i] for i in range(n)
                                  if mask & (1 << i)))
    return CutSetResult(tree.top_ref, tuple(cut_sets))
