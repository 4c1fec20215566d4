"""Quantitative analysis: CTMC numerics and compositional rate evaluation.

The state machine of a component is turned into a generator matrix with
input failure mode rates superposed onto the transitions they affect
(`build_generator`).  Output failure mode rates then come from one of

* `mttf_rate` - the reciprocal of the expected first-passage time to the
  error state, treating it as absorbing; for a pure series chain this is
  the reciprocal of the summed mean holding times,
* `steady_state_frequency` - the long-run rate of entering the error
  state, for states the chain leaves again through repair transitions,
* `transient_solve` - an L-stable implicit integrator (backward Euler with
  Richardson step doubling and adaptive step size) for the stiff
  Kolmogorov forward equations, also accepting time-varying input rates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import (AnalysisError, GhcftWarning, InvalidModelError,
                     MissionTimeRequiredError, NumericalError,
                     ResourceLimitError, SharedEventError)
from .model import (_UNMATCHED, CftElement, CmcElement, GateKind, RateKind,
                    SystemModel, detect_shared_events, effective_rate,
                    resolve_ifm_feeds, split_ref, topological_order,
                    validate_model)

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-8
    atol: float = 1e-12
    max_steps: int = 10 ** 6
    mission_time: float | None = None

    def __post_init__(self) -> None:
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.mission_time is not None and not self.mission_time > 0:
            raise ValueError("mission_time must be positive when given")


@dataclass(frozen=True, eq=False)
class GeneratorView:
    """A CTMC generator with effective (input-superposed) rates.

    `matrix[i, j]` is the effective rate from state i to state j for
    i != j; the diagonal is the negative row sum, so rows sum to zero.
    State indexing follows declaration order.  `cmc` and `ifm_rates`
    record how the view was built so transient analysis can re-assemble
    the matrix for time-varying inputs.
    """

    states: tuple[str, ...]
    initial: str
    matrix: np.ndarray
    cmc: CmcElement | None = None
    ifm_rates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.states)
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.shape != (n, n):
            raise ValueError(f"matrix shape {matrix.shape} does not match "
                             f"{n} states")
        off = matrix.copy()
        np.fill_diagonal(off, 0.0)
        if (off < 0).any():
            raise ValueError("off-diagonal generator entries must be >= 0")
        max_rate = float(off.max()) if n else 0.0
        if n and np.abs(matrix.sum(axis=1)).max() > 1e-12 * max(max_rate, 1.0):
            raise ValueError("generator rows must sum to zero")
        object.__setattr__(self, "matrix", matrix)
        if self.initial not in self.states:
            raise ValueError(f"initial state {self.initial!r} not in states")

    def index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise KeyError(state) from None

    @property
    def initial_index(self) -> int:
        return self.states.index(self.initial)


@dataclass(frozen=True)
class RateResult:
    """Computed occurrence rate of one top event."""

    top: str
    rate: float                    # per hour
    method: str
    mtbf: float                    # hours, 1/rate (inf when rate is 0)
    diagnostics: tuple[str, ...] = ()

    @property
    def fit(self) -> float:
        return self.rate / 1e-9


@dataclass(frozen=True, eq=False)
class TransientResult:
    """State probabilities at requested output times."""

    states: tuple[str, ...]
    times: np.ndarray              # shape (k,)
    probabilities: np.ndarray      # shape (k, n), rows sum to 1
    steps_accepted: int
    steps_rejected: int

    def at(self, time: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - time)))
        if not math.isclose(self.times[k], time, rel_tol=1e-12, abs_tol=0.0):
            raise KeyError(f"no output recorded at t={time!r}")
        return self.probabilities[k]


def build_generator(cmc: CmcElement,
                    ifm_rates: Mapping[str, float] | None = None) -> GeneratorView:
    """Assemble the generator matrix with effective transition rates.

    Every input failure mode referenced by a dependency must have a rate
    bound in `ifm_rates`; unconnected inports default to rate 0 and should
    be passed as such by the caller (evaluate_ghcft does).
    """
    rates = dict(ifm_rates or {})
    for ifm in cmc.ifms:
        rates.setdefault(ifm.id, 0.0)
    n = len(cmc.states)
    index = {s: i for i, s in enumerate(cmc.states)}
    matrix = np.zeros((n, n))
    for t in cmc.transitions:
        matrix[index[t.source], index[t.target]] = effective_rate(cmc, t, rates)
    np.fill_diagonal(matrix, 0.0)
    np.fill_diagonal(matrix, -matrix.sum(axis=1))
    return GeneratorView(cmc.states, cmc.initial, matrix, cmc, rates)


def _successors(matrix: np.ndarray, i: int) -> np.ndarray:
    row = matrix[i].copy()
    row[i] = 0.0
    return np.nonzero(row > 0)[0]


def _reachable(matrix: np.ndarray, start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        for j in _successors(matrix, stack.pop()):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return seen


def _can_reach(matrix: np.ndarray, target: int) -> set[int]:
    n = matrix.shape[0]
    preds: dict[int, list[int]] = {i: [] for i in range(n)}
    for i in range(n):
        for j in _successors(matrix, i):
            preds[int(j)].append(i)
    seen = {target}
    stack = [target]
    while stack:
        for i in preds[stack.pop()]:
            if i not in seen:
                seen.add(i)
                stack.append(i)
    return seen


def _solve_checked(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(a) if a.size else 0.0
    if not np.isfinite(cond):
        raise NumericalError(f"{what}: singular linear system "
                             f"(condition number {cond:.3e})")
    if cond > CONDITION_LIMIT:
        warnings.warn(f"{what}: ill-conditioned linear system "
                      f"(condition number {cond:.3e})", GhcftWarning,
                      stacklevel=3)
    try:
        return scipy.linalg.solve(a, b)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"{what}: {exc} (condition number {cond:.3e})") \
            from None


def hitting_probability(gen: GeneratorView, target: str) -> float:
    """Probability that the chain ever reaches `target` from the initial state."""
    t = gen.index(target)
    start = gen.initial_index
    if start == t:
        return 1.0
    matrix = gen.matrix
    can = _can_reach(matrix, t)
    if start not in can:
        return 0.0
    # embedded-chain hitting probabilities on states that can reach the target
    others = sorted(can - {t})
    pos = {s: k for k, s in enumerate(others)}
    m = len(others)
    a = np.eye(m)
    b = np.zeros(m)
    for k, s in enumerate(others):
        exit_rate = -matrix[s, s]
        if exit_rate <= 0:
            continue  # absorbing non-target: probability stays 0
        for j in _successors(matrix, s):
            p = matrix[s, j] / exit_rate
            if j == t:
                b[k] += p
            elif int(j) in pos:
                a[k, pos[int(j)]] -= p
            # successors that cannot reach the target contribute nothing
    h = _solve_checked(a, b, "hitting probability")
    return float(min(max(h[pos[start]], 0.0), 1.0))


def mttf_rate(gen: GeneratorView, target: str) -> float:
    """Rate as the reciprocal mean first-passage time to `target`.

    The target is treated as absorbing (its outgoing transitions are
    ignored).  The expected hitting times E on the transient states solve
    a dense linear system,

        exit(s) * E(s) - sum_u q(s, u) * E(u) = 1,

    and the result is 1 / E(initial).  When the target is unreachable, or
    reachable only with probability < 1 (the chain can be absorbed
    elsewhere first), the mean is infinite: the rate is 0 and a
    GhcftWarning explains why.
    """
    t = gen.index(target)
    start = gen.initial_index
    if start == t:
        raise AnalysisError("the initial state is the target error state; "
                            "its first-passage time is not defined")
    matrix = gen.matrix
    can = _can_reach(matrix, t)
    if start not in can:
        warnings.warn(f"error state {target!r} is unreachable from the "
                      f"initial state; rate is 0", GhcftWarning, stacklevel=2)
        return 0.0
    reachable = _reachable(matrix, start)
    transient = sorted((can & reachable) - {t})
    leaks = [s for s in transient
             if any(int(j) not in can for j in _successors(matrix, s))]
    if leaks:
        p_hit = hitting_probability(gen, target)
        warnings.warn(
            f"error state {target!r} is not almost surely reached (hit "
            f"probability {p_hit:.6g}); the mean first-passage time is "
            f"infinite and the rate is 0", GhcftWarning, stacklevel=2)
        return 0.0
    pos = {s: k for k, s in enumerate(transient)}
    m = len(transient)
    a = np.zeros((m, m))
    for k, s in enumerate(transient):
        a[k, k] = -matrix[s, s]
        for j in _successors(matrix, s):
            if int(j) in pos:
                a[k, pos[int(j)]] -= matrix[s, j]
    expected = _solve_checked(a, np.ones(m), "mean first-passage time")
    return 1.0 / float(expected[pos[start]])


def _recurrent_classes(matrix: np.ndarray, nodes: set[int]) -> list[set[int]]:
    """Strongly connected components of the subgraph with no outgoing edge."""
    order: list[int] = []
    seen: set[int] = set()
    for root in sorted(nodes):
        if root in seen:
            continue
        stack: list[tuple[int, int]] = [(root, 0)]
        seen.add(root)
        while stack:
            node, k = stack[-1]
            succ = [int(j) for j in _successors(matrix, node) if int(j) in nodes]
            if k < len(succ):
                stack[-1] = (node, k + 1)
                if succ[k] not in seen:
                    seen.add(succ[k])
                    stack.append((succ[k], 0))
            else:
                order.append(node)
                stack.pop()

    assign: dict[int, int] = {}
    label = 0
    for root in reversed(order):
        if root in assign:
            continue
        stack2 = [root]
        assign[root] = label
        while stack2:
            node = stack2.pop()
            for i in nodes:
                if node in (int(j) for j in _successors(matrix, i)) \
                        and i not in assign:
                    assign[i] = label
                    stack2.append(i)
        label += 1

    classes: dict[int, set[int]] = {}
    for node, lab in assign.items():
        classes.setdefault(lab, set()).add(node)
    recurrent = []
    for members in classes.values():
        if all(int(j) in members
               for s in members for j in _successors(matrix, s)):
            recurrent.append(members)
    return recurrent


def steady_state_frequency(gen: GeneratorView, target: str) -> float:
    """Long-run rate of entering `target`: sum over u of pi(u) * q(u, target).

    The stationary distribution pi solves the balance equations on the
    unique recurrent class of the reachable states; the chain must be
    irreducible there, or at least have `target` inside that class.
    """
    t = gen.index(target)
    matrix = gen.matrix
    reachable = _reachable(matrix, gen.initial_index)
    if t not in reachable:
        raise AnalysisError(f"error state {target!r} is unreachable from the "
                            f"initial state")
    recurrent = _recurrent_classes(matrix, reachable)
    if len(recurrent) != 1:
        raise AnalysisError(
            f"the chain has {len(recurrent)} recurrent classes on its "
            f"reachable states; no unique stationary distribution exists")
    rec = sorted(recurrent[0])
    if t not in rec:
        raise AnalysisError(
            f"error state {target!r} is transient (the chain leaves it for "
            f"good); use first-passage analysis (mttf_rate) instead")
    pos = {s: k for k, s in enumerate(rec)}
    m = len(rec)
    # pi Q = 0 restricted to the recurrent class, normalized to sum 1
    a = matrix[np.ix_(rec, rec)].T.copy()
    a[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    pi = _solve_checked(a, b, "stationary distribution")
    freq = 0.0
    for s in rec:
        if s != t:
            freq += float(pi[pos[s]]) * float(matrix[s, t])
    return freq


def series_path_rate(rates: Sequence[float]) -> float:
    """Rate of traversing a pure series chain: 1 / sum(1 / rate_i).

    Any zero rate means an infinite mean holding time, so the result is 0
    (with a GhcftWarning naming the offending stage).
    """
    if not rates:
        raise ValueError("at least one rate is required")
    for i, rate in enumerate(rates):
        if rate < 0:
            raise ValueError(f"rates must be nonnegative, got {rate!r}")
        if rate == 0.0:
            warnings.warn(f"series stage {i} has rate 0 (infinite mean "
                          f"duration); the path rate is 0", GhcftWarning,
                          stacklevel=2)
            return 0.0
    return 1.0 / math.fsum(1.0 / r for r in rates)


RateFn = Callable[[float], float]


def transient_solve(gen: GeneratorView,
                    ifm_rate_fns: Mapping[str, RateFn] | None = None,
                    t_end: float = 0.0,
                    cfg: SolverConfig | None = None,
                    times: Sequence[float] | None = None) -> TransientResult:
    """Integrate the Kolmogorov forward equations p'(t) = p(t) Q(t).

    Backward Euler with Richardson step doubling: each step is computed
    once with step h and once with two steps of h/2; the difference drives
    the adaptive step-size controller and the extrapolated combination
    2*p_half - p_full (second order) is advanced.  The scheme is L-stable,
    so stiff chains with rates spanning many orders of magnitude are fine.

    `ifm_rate_fns` optionally maps input failure mode ids to nonnegative
    functions of time, overriding the constant rates the view was built
    with (the view must then carry its source state machine).  Output
    vectors sum to 1 up to the linear-solver round-off and are clamped to
    [0, 1] entrywise.
    """
    cfg = cfg or SolverConfig()
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if times is None:
        out_times = [float(t_end)]
    else:
        out_times = sorted({float(t) for t in times})
        if not out_times or out_times[0] <= 0 or out_times[-1] > t_end:
            raise ValueError("output times must lie in (0, t_end]")

    if ifm_rate_fns:
        if gen.cmc is None:
            raise InvalidModelError("time-varying input rates require a "
                                    "generator built from a state machine")
        base = dict(gen.ifm_rates)

        def q_at(t: float) -> np.ndarray:
            rates = dict(base)
            for ifm_id, fn in ifm_rate_fns.items():
                value = float(fn(t))
                if value < 0:
                    raise ValueError(f"input rate function {ifm_id!r} returned "
                                     f"{value!r} at t={t!r}")
                rates[ifm_id] = value
            return build_generator(gen.cmc, rates).matrix
    else:
        constant = gen.matrix

        def q_at(t: float) -> np.ndarray:
            return constant

    n = len(gen.states)
    identity = np.eye(n)
    p = np.zeros(n)
    p[gen.initial_index] = 1.0

    max_rate = float(np.abs(np.diag(q_at(0.0))).max()) if n else 0.0
    h = min(t_end, 0.01 / max_rate) if max_rate > 0 else t_end
    h = max(h, t_end * 1e-9)

    outputs: list[np.ndarray] = []
    remaining = list(out_times)
    t = 0.0
    accepted = rejected = 0

    def be_step(p0: np.ndarray, t0: float, dt: float) -> np.ndarray:
        q = q_at(t0 + dt)
        return scipy.linalg.solve(identity - dt * q.T, p0)

    while remaining:
        boundary = remaining[0]
        clipped = boundary - t < h
        dt = min(h, boundary - t)
        full = be_step(p, t, dt)
        half = be_step(be_step(p, t, dt / 2.0), t + dt / 2.0, dt / 2.0)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(half), np.abs(p))
        err = float(np.max(np.abs(half - full) / scale))
        if err <= 1.0:
            p = 2.0 * half - full
            t = t + dt
            accepted += 1
            if math.isclose(t, boundary, rel_tol=1e-12, abs_tol=0.0) \
                    or t >= boundary:
                outputs.append(p.copy())
                remaining.pop(0)
        else:
            rejected += 1
        if accepted + rejected > cfg.max_steps:
            raise ResourceLimitError(
                f"transient solve exceeded max_steps={cfg.max_steps} "
                f"(t={t:.6g} of {t_end:.6g})")
        factor = 0.9 * err ** -0.5 if err > 0 else 5.0
        proposal = dt * min(5.0, max(0.2, factor))
        # a boundary-truncated accepted step must not shrink the working step
        h = max(h, proposal) if (clipped and err <= 1.0) else proposal
        if h < t_end * 1e-15:
            raise NumericalError("transient solve cannot reach the requested "
                                 "tolerance: step size underflow")

    probs = np.clip(np.vstack(outputs), 0.0, 1.0)
    return TransientResult(gen.states, np.asarray(out_times), probs,
                           accepted, rejected)


# ---------------------------------------------------------------------------
# compositional evaluation

_METHOD_MTTF = "mttf-reciprocal"
_METHOD_STEADY = "steady-state-frequency"


def _and_rate(input_rates: Sequence[float], mission_time: float | None,
              where: str) -> float:
    if mission_time is None:
        raise MissionTimeRequiredError(
            f"{where}: quantifying an AND gate needs a mission time "
            f"(an AND over rates alone is dimensionally unsound); set "
            f"SolverConfig.mission_time or pass --mission-time")
    q = 1.0
    for rate in input_rates:
        q *= -math.expm1(-rate * mission_time)
    if q >= 1.0:
        return math.inf
    return -math.log1p(-q) / mission_time


def _eval_cft(comp_id: str, cft: CftElement, ifm_rates: Mapping[str, float],
              cfg: SolverConfig) -> dict[str, float]:
    """Per-ofm rates of a Boolean element: OR adds rates, AND composes
    mission-time unavailabilities."""
    values: dict[str, float] = {}

    def node_rate(node_id: str) -> float:
        if node_id in values:
            return values[node_id]
        event = next((e for e in cft.basic_events if e.id == node_id), None)
        if event is not None:
            result = event.rate.value
        elif any(f.id == node_id for f in cft.ifms):
            result = ifm_rates.get(node_id, 0.0)
        else:
            gate = cft.gate(node_id)
            inputs = [node_rate(ref) for ref in gate.inputs]
            if gate.kind is GateKind.OR:
                result = math.fsum(inputs)
            else:
                result = _and_rate(inputs, cfg.mission_time,
                                   f"component {comp_id!r}, gate {node_id!r}")
        values[node_id] = result
        return result

    out: dict[str, float] = {}
    for ofm in cft.ofms:
        assert ofm.source is not None
        out[ofm.id] = node_rate(ofm.source)
    return out


def _eval_cmc(comp_id: str, cmc: CmcElement, ifm_rates: Mapping[str, float]) \
        -> tuple[dict[str, float], dict[str, str]]:
    """Per-ofm rates and the method used for each.

    An error state the chain can leave through a repair transition is a
    renewal point: its rate is the stationary entering frequency.  An
    error state with no outgoing repair is treated as absorbing and rated
    by reciprocal mean first-passage time.  An ofm bound to several error
    states gets the sum of the per-state rates.
    """
    gen = build_generator(cmc, ifm_rates)
    rates: dict[str, float] = {}
    methods: dict[str, str] = {}
    for ofm in cmc.ofms:
        total = 0.0
        used: list[str] = []
        for state in cmc.bound_states(ofm.id):
            repairable = any(t.rate.kind is RateKind.REPAIR
                             for t in cmc.outgoing(state))
            try:
                if repairable:
                    total += steady_state_frequency(gen, state)
                    method = _METHOD_STEADY
                else:
                    total += mttf_rate(gen, state)
                    method = _METHOD_MTTF
            except AnalysisError as exc:
                raise AnalysisError(f"component {comp_id!r}, failure mode "
                                    f"{ofm.id!r}: {exc}") from None
            if method not in used:
                used.append(method)
        rates[ofm.id] = total
        methods[ofm.id] = "+".join(used) if used else _METHOD_MTTF
    return rates, methods


def evaluate_ghcft(model: SystemModel, top: str,
                   cfg: SolverConfig | None = None) -> RateResult:
    """Occurrence rate of the top event by compositional evaluation.

    Components are evaluated in topological order, each consuming the
    output failure mode rates of its predecessors.  The model must be
    valid and free of shared-event violations for this top (a basic event
    feeding more than one state-machine inport, or a state-machine inport
    and a parallel Boolean path, cannot be analyzed quantitatively).
    """
    cfg = cfg or SolverConfig()
    report = validate_model(model)
    if report.errors:
        summary = "; ".join(f"{f.location}: {f.message}" for f in report.errors)
        raise InvalidModelError(f"model is not valid: {summary}")
    shared = detect_shared_events(model, top)
    if shared:
        detail = "; ".join(f"{d.event} via {', '.join(d.routes)}" for d in shared)
        raise SharedEventError(
            f"repeated events must enter through a single state-machine "
            f"inport that carries their whole influence on the top event; "
            f"violated by: {detail}")

    top_comp_id, top_ofm_id = split_ref(top)
    needed = _upstream_components(model, top_comp_id)
    feeds = resolve_ifm_feeds(model)

    diagnostics: list[str] = []
    ofm_rates: dict[tuple[str, str], float] = {}
    methods_used: list[str] = []

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GhcftWarning)
        for comp in topological_order(model):
            if comp.id not in needed:
                continue
            in_rates: dict[str, float] = {}
            for ifm in comp.flm.ifms:
                feed = feeds.get((comp.id, ifm.id))
                if feed is None or feed is _UNMATCHED:
                    in_rates[ifm.id] = 0.0
                else:
                    in_rates[ifm.id] = ofm_rates.get(feed, 0.0)
            if isinstance(comp.flm, CftElement):
                out = _eval_cft(comp.id, comp.flm, in_rates, cfg)
            else:
                out, cmc_methods = _eval_cmc(comp.id, comp.flm, in_rates)
                for method in cmc_methods.values():
                    for part in method.split("+"):
                        if part not in methods_used:
                            methods_used.append(part)
            for ofm_id, value in out.items():
                ofm_rates[(comp.id, ofm_id)] = value
    for warning in caught:
        if issubclass(warning.category, GhcftWarning):
            diagnostics.append(str(warning.message))

    key = (top_comp_id, top_ofm_id)
    if key not in ofm_rates:
        raise InvalidModelError(f"top event {top!r} does not name an existing "
                                f"output failure mode")
    rate = ofm_rates[key]
    method = "+".join(methods_used) if methods_used else "boolean-combination"
    mtbf = 1.0 / rate if rate > 0 else math.inf
    return RateResult(top=top, rate=rate, method=method, mtbf=mtbf,
                      diagnostics=tuple(diagnostics))


def _upstream_components(model: SystemModel, comp_id: str) -> set[str]:
    preds: dict[str, set[str]] = {}
    for conn in model.connections:
        preds.setdefault(conn.target_component, set()).add(conn.source_component)
    needed = {comp_id}
    stack = [comp_id]
    while stack:
        for prev in preds.get(stack.pop(), ()):
            if prev not in needed:
                needed.add(prev)
                stack.append(prev)
    return needed
