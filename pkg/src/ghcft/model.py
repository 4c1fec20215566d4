"""Domain model: systems of components whose failure logic is either a
component fault tree (CFT) or a component Markov chain (CMC).

All model values are immutable and normalized on construction (collections
are stored as canonically sorted tuples), so structural equality is plain
`==` and values can be shared freely across concurrent analyses.  The one
deliberate exception is `CmcElement.states`, which keeps declaration order
because it defines the state indexing used by the quantitative layer.
"""

from __future__ import annotations

import enum
import graphlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Union

from .errors import CyclicDependencyError, InvalidModelError, UnresolvedInputError

PER_HOUR_PER_FIT = 1e-9  # one FIT is one failure per 1e9 hours


class RateKind(enum.Enum):
    FAILURE = "failure"
    REPAIR = "repair"


class GateKind(enum.Enum):
    AND = "and"
    OR = "or"


@dataclass(frozen=True)
class Rate:
    """A constant transition intensity in events per hour.

    `value` is the canonical per-hour intensity used by every computation.
    When a rate was given in FIT, the original FIT figure is memoized so
    that `to_fit` returns it bit-exactly; a single float cannot round-trip
    through division and multiplication by 1e9 for all inputs.
    """

    value: float
    kind: RateKind = RateKind.FAILURE
    fit_origin: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.value, (int, float)) or isinstance(self.value, bool):
            raise TypeError(f"rate value must be a real number, got {self.value!r}")
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value) or self.value < 0.0:
            raise ValueError(f"rate must be finite and nonnegative, got {self.value!r}")
        if not isinstance(self.kind, RateKind):
            raise TypeError(f"rate kind must be a RateKind, got {self.kind!r}")

    @classmethod
    def from_fit(cls, fit: float, kind: RateKind = RateKind.FAILURE) -> "Rate":
        fit = float(fit)
        if not math.isfinite(fit) or fit < 0.0:
            raise ValueError(f"FIT value must be finite and nonnegative, got {fit!r}")
        return cls(fit * PER_HOUR_PER_FIT, kind, fit_origin=fit)

    def to_fit(self) -> float:
        if self.fit_origin is not None:
            return self.fit_origin
        return self.value / PER_HOUR_PER_FIT

    def scaled(self, factor: float) -> "Rate":
        return Rate(self.value * factor, self.kind)


@dataclass(frozen=True)
class BasicEvent:
    """An atomic failure cause with a constant occurrence rate."""

    id: str
    rate: Rate


@dataclass(frozen=True)
class Gate:
    id: str
    kind: GateKind
    inputs: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs", tuple(sorted(self.inputs)))


@dataclass(frozen=True)
class Ifm:
    """Input failure mode, bound to one inport of the owning component.

    `mode` names the output failure mode to match on the connected
    upstream outport; it defaults to the ifm's own id.
    """

    id: str
    inport: str
    mode: str | None = None

    @property
    def wanted_mode(self) -> str:
        return self.mode if self.mode is not None else self.id


@dataclass(frozen=True)
class Ofm:
    """Output failure mode, bound to one outport.

    In a CFT element, `source` names the node feeding the failure mode.
    In a CMC element the failure mode is fed by error states instead and
    `source` stays None.
    """

    id: str
    outport: str
    source: str | None = None


@dataclass(frozen=True)
class CftElement:
    """Boolean failure logic: a DAG of basic events and AND/OR gates."""

    basic_events: tuple[BasicEvent, ...] = ()
    gates: tuple[Gate, ...] = ()
    ifms: tuple[Ifm, ...] = ()
    ofms: tuple[Ofm, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "basic_events",
                           tuple(sorted(self.basic_events, key=lambda e: e.id)))
        object.__setattr__(self, "gates",
                           tuple(sorted(self.gates, key=lambda g: g.id)))
        object.__setattr__(self, "ifms",
                           tuple(sorted(self.ifms, key=lambda f: f.id)))
        object.__setattr__(self, "ofms",
                           tuple(sorted(self.ofms, key=lambda f: f.id)))

    def node_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.basic_events) + tuple(g.id for g in self.gates) \
            + tuple(f.id for f in self.ifms) + tuple(f.id for f in self.ofms)

    def gate(self, gate_id: str) -> Gate:
        for g in self.gates:
            if g.id == gate_id:
                return g
        raise KeyError(gate_id)

    def ofm(self, ofm_id: str) -> Ofm:
        for f in self.ofms:
            if f.id == ofm_id:
                return f
        raise KeyError(ofm_id)


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    rate: Rate

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class CmcElement:
    """A continuous-time Markov chain with failure-mode ports.

    Input failure modes add their rate onto the transitions listed in
    `input_deps`; error states listed in `output_deps` trigger output
    failure modes.  `states` keeps declaration order, which fixes the
    state indexing of the derived generator matrix.
    """

    states: tuple[str, ...]
    initial: str
    error_states: tuple[str, ...] = ()
    transitions: tuple[Transition, ...] = ()
    ifms: tuple[Ifm, ...] = ()
    ofms: tuple[Ofm, ...] = ()
    input_deps: tuple[tuple[str, tuple[str, str]], ...] = ()
    output_deps: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "error_states", tuple(sorted(self.error_states)))
        object.__setattr__(self, "transitions",
                           tuple(sorted(self.transitions, key=lambda t: t.key)))
        object.__setattr__(self, "ifms",
                           tuple(sorted(self.ifms, key=lambda f: f.id)))
        object.__setattr__(self, "ofms",
                           tuple(sorted(self.ofms, key=lambda f: f.id)))
        object.__setattr__(self, "input_deps",
                           tuple(sorted((i, (a, b)) for i, (a, b) in self.input_deps)))
        object.__setattr__(self, "output_deps",
                           tuple(sorted(self.output_deps)))

    def transition(self, source: str, target: str) -> Transition:
        for t in self.transitions:
            if t.source == source and t.target == target:
                return t
        raise KeyError((source, target))

    def deps_of(self, transition: Union[Transition, tuple[str, str]]) -> tuple[str, ...]:
        """Ids of the input failure modes the transition depends on."""
        key = transition.key if isinstance(transition, Transition) else tuple(transition)
        return tuple(ifm for ifm, tkey in self.input_deps if tkey == key)

    def bound_states(self, ofm_id: str) -> tuple[str, ...]:
        """Error states that trigger the given output failure mode."""
        return tuple(s for s, o in self.output_deps if o == ofm_id)

    def outgoing(self, state: str) -> tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.source == state)

    def ofm(self, ofm_id: str) -> Ofm:
        for f in self.ofms:
            if f.id == ofm_id:
                return f
        raise KeyError(ofm_id)


FailureLogic = Union[CftElement, CmcElement]


@dataclass(frozen=True)
class Component:
    id: str
    inports: tuple[str, ...] = ()
    outports: tuple[str, ...] = ()
    flm: FailureLogic = CftElement()

    def __post_init__(self) -> None:
        object.__setattr__(self, "inports", tuple(sorted(self.inports)))
        object.__setattr__(self, "outports", tuple(sorted(self.outports)))


@dataclass(frozen=True)
class Connection:
    """Directed information flow from `source_component.source_port`
    (an outport) to `target_component.target_port` (an inport)."""

    source_component: str
    source_port: str
    target_component: str
    target_port: str

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.source_component, self.source_port,
                self.target_component, self.target_port)


@dataclass(frozen=True)
class SystemModel:
    components: tuple[Component, ...] = ()
    connections: tuple[Connection, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "components",
                           tuple(sorted(self.components, key=lambda c: c.id)))
        object.__setattr__(self, "connections",
                           tuple(sorted(self.connections, key=lambda c: c.key)))

    def component(self, component_id: str) -> Component:
        for c in self.components:
            if c.id == component_id:
                return c
        raise KeyError(component_id)

    def has_component(self, component_id: str) -> bool:
        return any(c.id == component_id for c in self.components)


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    severity: Severity
    code: str
    message: str
    location: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def errors(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity is Severity.ERROR)

    @property
    def warnings(self) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.severity is Severity.WARNING)

    @property
    def ok(self) -> bool:
        return not self.findings


@dataclass(frozen=True)
class SharedEventDiagnostic:
    """A basic event whose influence reaches the top event along routes
    that quantitative analysis cannot combine.

    Each route is the first state-machine inport crossed on a path to the
    top, as "component.inport", or "direct" for a pure Boolean path."""

    event: str
    routes: tuple[str, ...]


# ---------------------------------------------------------------------------
# validation


def _check_cft(comp: Component, cft: CftElement, add) -> None:
    ids: dict[str, int] = {}
    for node_id in cft.node_ids():
        ids[node_id] = ids.get(node_id, 0) + 1
    for node_id, count in sorted(ids.items()):
        if count > 1:
            add(Severity.ERROR, "duplicate-node",
                f"node id {node_id!r} declared {count} times", f"{comp.id}.{node_id}")

    known = set(ids)
    feedable = {e.id for e in cft.basic_events} | {g.id for g in cft.gates} \
        | {f.id for f in cft.ifms}
    for gate in cft.gates:
        if not gate.inputs:
            add(Severity.ERROR, "gate-empty",
                f"gate {gate.id!r} has no inputs", f"{comp.id}.{gate.id}")
        for ref in gate.inputs:
            if ref not in feedable:
                add(Severity.ERROR, "unknown-node-ref",
                    f"gate {gate.id!r} input {ref!r} is not a basic event, "
                    f"gate, or input failure mode", f"{comp.id}.{gate.id}")
    for ifm in cft.ifms:
        if ifm.inport not in comp.inports:
            add(Severity.ERROR, "ifm-unknown-inport",
                f"input failure mode {ifm.id!r} bound to unknown inport "
                f"{ifm.inport!r}", f"{comp.id}.{ifm.id}")
    for ofm in cft.ofms:
        if ofm.outport not in comp.outports:
            add(Severity.ERROR, "ofm-unknown-outport",
                f"output failure mode {ofm.id!r} bound to unknown outport "
                f"{ofm.outport!r}", f"{comp.id}.{ofm.id}")
        if ofm.source is None:
            add(Severity.ERROR, "ofm-missing-source",
                f"output failure mode {ofm.id!r} has no feeding node",
                f"{comp.id}.{ofm.id}")
        elif ofm.source not in feedable:
            add(Severity.ERROR, "unknown-node-ref",
                f"output failure mode {ofm.id!r} fed by unknown node "
                f"{ofm.source!r}", f"{comp.id}.{ofm.id}")

    # cycle check over gate inputs
    sorter = graphlib.TopologicalSorter()
    for gate in cft.gates:
        sorter.add(gate.id, *[ref for ref in gate.inputs if ref in known])
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = " -> ".join(str(n) for n in exc.args[1])
        add(Severity.ERROR, "cft-cycle",
            f"failure logic contains a cycle: {cycle}", comp.id)


def _check_cmc(comp: Component, cmc: CmcElement, add) -> None:
    states = set(cmc.states)
    for state in sorted(states):
        if cmc.states.count(state) > 1:
            add(Severity.ERROR, "duplicate-state",
                f"state {state!r} declared more than once", f"{comp.id}.{state}")
    if cmc.initial not in states:
        add(Severity.ERROR, "unknown-state",
            f"initial state {cmc.initial!r} is not a declared state", comp.id)
    for state in cmc.error_states:
        if state not in states:
            add(Severity.ERROR, "unknown-state",
                f"error state {state!r} is not a declared state", f"{comp.id}.{state}")

    seen_pairs: set[tuple[str, str]] = set()
    for t in cmc.transitions:
        loc = f"{comp.id}.{t.source}->{t.target}"
        for endpoint in (t.source, t.target):
            if endpoint not in states:
                add(Severity.ERROR, "unknown-state",
                    f"transition endpoint {endpoint!r} is not a declared state", loc)
        if t.source == t.target:
            add(Severity.ERROR, "self-loop-transition",
                f"transition {t.source!r} -> {t.target!r} is a self loop", loc)
        if t.key in seen_pairs:
            add(Severity.ERROR, "duplicate-transition",
                f"more than one transition {t.source!r} -> {t.target!r} "
                f"(pre-sum parallel rates)", loc)
        seen_pairs.add(t.key)

    ifm_ids = set()
    for ifm in cmc.ifms:
        if ifm.id in ifm_ids:
            add(Severity.ERROR, "duplicate-node",
                f"input failure mode {ifm.id!r} declared more than once",
                f"{comp.id}.{ifm.id}")
        ifm_ids.add(ifm.id)
        if ifm.inport not in comp.inports:
            add(Severity.ERROR, "ifm-unknown-inport",
                f"input failure mode {ifm.id!r} bound to unknown inport "
                f"{ifm.inport!r}", f"{comp.id}.{ifm.id}")
    ofm_ids = set()
    for ofm in cmc.ofms:
        if ofm.id in ofm_ids:
            add(Severity.ERROR, "duplicate-node",
                f"output failure mode {ofm.id!r} declared more than once",
                f"{comp.id}.{ofm.id}")
        ofm_ids.add(ofm.id)
        if ofm.outport not in comp.outports:
            add(Severity.ERROR, "ofm-unknown-outport",
                f"output failure mode {ofm.id!r} bound to unknown outport "
                f"{ofm.outport!r}", f"{comp.id}.{ofm.id}")
        if ofm.source is not None:
            add(Severity.ERROR, "ofm-source-on-cmc",
                f"output failure mode {ofm.id!r} must be fed by error states, "
                f"not by node {ofm.source!r}", f"{comp.id}.{ofm.id}")

    for ifm_id, tkey in cmc.input_deps:
        loc = f"{comp.id}.{ifm_id}"
        if ifm_id not in ifm_ids:
            add(Severity.ERROR, "unknown-ifm-dep",
                f"dependency names undeclared input failure mode {ifm_id!r}", loc)
        if tkey not in seen_pairs:
            add(Severity.ERROR, "unknown-transition-dep",
                f"dependency of {ifm_id!r} names missing transition "
                f"{tkey[0]!r} -> {tkey[1]!r}", loc)

    bound_ofms = set()
    error_states = set(cmc.error_states)
    for state, ofm_id in cmc.output_deps:
        loc = f"{comp.id}.{ofm_id}"
        bound_ofms.add(ofm_id)
        if ofm_id not in ofm_ids:
            add(Severity.ERROR, "unknown-ofm-dep",
                f"binding names undeclared output failure mode {ofm_id!r}", loc)
        if state not in error_states:
            add(Severity.ERROR, "non-error-bound",
                f"output failure mode {ofm_id!r} bound to state {state!r}, "
                f"which is not an error state", loc)
    for ofm_id in sorted(ofm_ids - bound_ofms):
        add(Severity.ERROR, "ofm-unbound",
            f"output failure mode {ofm_id!r} is not bound to any error state",
            f"{comp.id}.{ofm_id}")

    # reachability warnings (valid states only, so indexing is safe)
    if cmc.initial in states:
        reachable = {cmc.initial}
        frontier = [cmc.initial]
        succ: dict[str, list[str]] = {}
        for t in cmc.transitions:
            succ.setdefault(t.source, []).append(t.target)
        while frontier:
            for nxt in succ.get(frontier.pop(), ()):
                if nxt not in reachable:
                    reachable.add(nxt)
                    frontier.append(nxt)
        for state in cmc.error_states:
            if state in states and state not in reachable:
                add(Severity.WARNING, "unreachable-error-state",
                    f"error state {state!r} is unreachable from the initial state",
                    f"{comp.id}.{state}")
        if cmc.initial in error_states and any(s == cmc.initial for s, _ in cmc.output_deps):
            add(Severity.WARNING, "initial-error-state",
                f"initial state {cmc.initial!r} is itself an error state bound "
                f"to an output failure mode", comp.id)


def validate_model(model: SystemModel) -> ValidationReport:
    """Check every structural invariant of the model.

    Violations are reported as findings, not raised; the report is empty
    exactly when the model is well formed.  Findings are ordered by
    location, code, and message, so the function is pure and idempotent.
    """
    findings: list[Finding] = []

    def add(severity: Severity, code: str, message: str, location: str) -> None:
        findings.append(Finding(severity, code, message, location))

    by_id: dict[str, int] = {}
    for comp in model.components:
        by_id[comp.id] = by_id.get(comp.id, 0) + 1
    for comp_id, count in sorted(by_id.items()):
        if count > 1:
            add(Severity.ERROR, "duplicate-component",
                f"component id {comp_id!r} declared {count} times", comp_id)

    for comp in model.components:
        if "." in comp.id:
            add(Severity.ERROR, "component-id-dot",
                f"component id {comp.id!r} must not contain '.' (it would make "
                f"qualified references ambiguous)", comp.id)
        ports: dict[str, int] = {}
        for port in comp.inports + comp.outports:
            ports[port] = ports.get(port, 0) + 1
        for port, count in sorted(ports.items()):
            if count > 1:
                add(Severity.ERROR, "duplicate-port",
                    f"port name {port!r} used {count} times", f"{comp.id}.{port}")
        if isinstance(comp.flm, CftElement):
            _check_cft(comp, comp.flm, add)
        else:
            _check_cmc(comp, comp.flm, add)

    inport_targets: dict[tuple[str, str], int] = {}
    for conn in model.connections:
        loc = (f"{conn.source_component}.{conn.source_port}->"
               f"{conn.target_component}.{conn.target_port}")
        ok = True
        for comp_id, port, ports_attr, code in (
                (conn.source_component, conn.source_port, "outports", "connection-not-outport"),
                (conn.target_component, conn.target_port, "inports", "connection-not-inport")):
            if not model.has_component(comp_id):
                add(Severity.ERROR, "unknown-component",
                    f"connection references unknown component {comp_id!r}", loc)
                ok = False
            elif port not in getattr(model.component(comp_id), ports_attr):
                kind = "outport" if ports_attr == "outports" else "inport"
                add(Severity.ERROR, code,
                    f"connection references {comp_id!r} port {port!r}, "
                    f"which is not an {kind}", loc)
                ok = False
        if conn.source_component == conn.target_component:
            add(Severity.ERROR, "self-connection",
                "a component cannot be connected to itself", loc)
            ok = False
        if ok:
            key = (conn.target_component, conn.target_port)
            inport_targets[key] = inport_targets.get(key, 0) + 1
    for (comp_id, port), count in sorted(inport_targets.items()):
        if count > 1:
            add(Severity.ERROR, "inport-multiply-connected",
                f"inport {comp_id}.{port} is the target of {count} connections",
                f"{comp_id}.{port}")

    try:
        topological_order(model)
    except CyclicDependencyError as exc:
        add(Severity.ERROR, "cyclic-dependency", str(exc), "system")

    # cross-component failure-mode matching (warnings only)
    for (comp_id, ifm_id), feed in sorted(resolve_ifm_feeds(model).items()):
        if feed is _UNMATCHED:
            add(Severity.WARNING, "unmatched-ifm",
                f"input failure mode {ifm_id!r} of {comp_id!r} has a connected "
                f"inport but no matching output failure mode upstream; it is "
                f"treated as never failing", f"{comp_id}.{ifm_id}")

    findings.sort(key=lambda f: (f.location, f.code, f.message))
    return ValidationReport(tuple(findings))


# ---------------------------------------------------------------------------
# rate assembly and ordering


def effective_rate(cmc: CmcElement,
                   transition: Union[Transition, tuple[str, str]],
                   ifm_rates: Mapping[str, float]) -> float:
    """Per-hour rate of a transition with its input failure modes added on.

    The effective rate is the transition's base rate plus the rate of every
    input failure mode it depends on.
    """
    if not isinstance(transition, Transition):
        transition = cmc.transition(*transition)
    total = transition.rate.value
    for ifm_id in cmc.deps_of(transition):
        if ifm_id not in ifm_rates:
            raise UnresolvedInputError(
                f"no rate bound for input failure mode {ifm_id!r} required by "
                f"transition {transition.source!r} -> {transition.target!r}")
        total += ifm_rates[ifm_id]
    return total


def topological_order(model: SystemModel) -> list[Component]:
    """Components ordered so every producer precedes its consumers.

    Ties are broken by component id, making the order deterministic.
    Raises CyclicDependencyError naming the cycle if the connection graph
    is not acyclic.
    """
    sorter = graphlib.TopologicalSorter()
    for comp in model.components:
        sorter.add(comp.id)
    for conn in model.connections:
        if model.has_component(conn.source_component) \
                and model.has_component(conn.target_component):
            sorter.add(conn.target_component, conn.source_component)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        raise CyclicDependencyError(tuple(str(n) for n in exc.args[1])) from None
    order: list[str] = []
    while sorter.is_active():
        ready = sorted(sorter.get_ready())
        order.extend(ready)
        sorter.done(*ready)
    return [model.component(comp_id) for comp_id in order]


# ---------------------------------------------------------------------------
# cross-component failure-mode resolution

# sentinel distinguishing "inport not connected" (None) from "connected but
# no matching output failure mode upstream"
_UNMATCHED = ("<unmatched>", "<unmatched>")


def resolve_ifm_feeds(model: SystemModel) \
        -> dict[tuple[str, str], tuple[str, str] | None]:
    """Map every (component, ifm) to the upstream (component, ofm) feeding it.

    Matching walks the connection of the ifm's inport to its source outport
    and picks the output failure mode whose id equals the ifm's wanted mode;
    if the outport carries exactly one output failure mode and the ifm does
    not name an explicit mode, that one matches regardless of id.  The value
    is None for unconnected inports and the _UNMATCHED sentinel when a
    connection exists but no failure mode matches.
    """
    conn_by_inport: dict[tuple[str, str], Connection] = {}
    for conn in model.connections:
        conn_by_inport[(conn.target_component, conn.target_port)] = conn

    feeds: dict[tuple[str, str], tuple[str, str] | None] = {}
    for comp in model.components:
        for ifm in comp.flm.ifms:
            conn = conn_by_inport.get((comp.id, ifm.inport))
            if conn is None or not model.has_component(conn.source_component):
                feeds[(comp.id, ifm.id)] = None
                continue
            source = model.component(conn.source_component)
            candidates = [f for f in source.flm.ofms
                          if f.outport == conn.source_port]
            match = [f for f in candidates if f.id == ifm.wanted_mode]
            if not match and ifm.mode is None and len(candidates) == 1:
                match = candidates
            if match:
                feeds[(comp.id, ifm.id)] = (source.id, match[0].id)
            else:
                feeds[(comp.id, ifm.id)] = _UNMATCHED
    return feeds


# ---------------------------------------------------------------------------
# state-machine path utilities


def simple_state_paths(cmc: CmcElement, target: str) -> tuple[tuple[Transition, ...], ...]:
    """All simple paths (no repeated state) from the initial state to `target`.

    Each path is the ordered tuple of transitions taken.  Paths are
    enumerated depth first with successors visited in state declaration
    order, so the result is deterministic.  Cyclic detours are excluded:
    a walk revisiting a state only repeats events of some simple path and
    can never contribute a new minimal cut set.
    """
    index = {s: i for i, s in enumerate(cmc.states)}
    succ: dict[str, list[Transition]] = {}
    for t in cmc.transitions:
        succ.setdefault(t.source, []).append(t)
    for lst in succ.values():
        lst.sort(key=lambda t: index.get(t.target, len(index)))

    paths: list[tuple[Transition, ...]] = []

    def walk(state: str, visited: set[str], trail: list[Transition]) -> None:
        if state == target:
            paths.append(tuple(trail))
            return
        for t in succ.get(state, ()):
            if t.target in visited:
                continue
            visited.add(t.target)
            trail.append(t)
            walk(t.target, visited, trail)
            trail.pop()
            visited.remove(t.target)

    walk(cmc.initial, {cmc.initial}, [])
    return tuple(paths)


# ---------------------------------------------------------------------------
# repeated-event restriction


def detect_shared_events(model: SystemModel, top: str) -> list[SharedEventDiagnostic]:
    """Find basic events violating the repeated-event restriction.

    A basic event is admissible quantitatively when either none of its
    paths to the top event cross a state-machine (CMC) inport, or all of
    them first cross the same single CMC inport (that inport then carries
    the event's whole influence).  Every other shape is reported: influence
    entering two distinct CMC inports, or entering a CMC inport while a
    parallel pure-Boolean path also reaches the top.

    `top` is a dotted "component.ofm" reference.  An empty list means the
    model is quantitatively analyzable for this top event.
    """
    graph, crossings, events = _influence_graph(model)
    top_comp, top_ofm = split_ref(top)
    top_node = (top_comp, f"ofm:{top_ofm}")
    if top_node not in graph:
        raise InvalidModelError(f"top event {top!r} does not name an existing "
                                f"output failure mode")

    # cone of influence: nodes that reach the top
    reverse: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for node, outs in graph.items():
        for nxt in outs:
            reverse.setdefault(nxt, []).append(node)
    cone = {top_node}
    frontier = [top_node]
    while frontier:
        for prev in reverse.get(frontier.pop(), ()):
            if prev not in cone:
                cone.add(prev)
                frontier.append(prev)

    diagnostics: list[SharedEventDiagnostic] = []
    for event_node, qualified_id in sorted(events.items(), key=lambda kv: kv[1]):
        if event_node not in cone:
            continue
        routes: set[str] = set()
        seen = {event_node}
        stack = [event_node]
        while stack:
            node = stack.pop()
            if node == top_node:
                routes.add("direct")
                continue
            for nxt in graph.get(node, ()):
                if nxt not in cone:
                    continue
                if nxt in crossings:
                    routes.add(crossings[nxt])
                    continue
                if nxt == top_node:
                    routes.add("direct")
                    continue
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        cmc_routes = routes - {"direct"}
        if cmc_routes and len(routes) > 1:
            diagnostics.append(
                SharedEventDiagnostic(qualified_id, tuple(sorted(routes))))
    return diagnostics


def _influence_graph(model: SystemModel):
    """Directed influence graph over (component, node) pairs.

    CMC internals are abstracted to ifm->ofm edges that exist exactly when
    some transition depending on the ifm lies on a simple path to an error
    state bound to the ofm.  CMC ifm nodes are marked as inport crossings.
    """
    graph: dict[tuple[str, str], set[tuple[str, str]]] = {}
    crossings: dict[tuple[str, str], str] = {}
    events: dict[tuple[str, str], str] = {}

    def edge(a: tuple[str, str], b: tuple[str, str]) -> None:
        graph.setdefault(a, set()).add(b)
        graph.setdefault(b, set())

    for comp in model.components:
        flm = comp.flm
        if isinstance(flm, CftElement):
            for event in flm.basic_events:
                events[(comp.id, event.id)] = f"{comp.id}.{event.id}"
                graph.setdefault((comp.id, event.id), set())
            for gate in flm.gates:
                for ref in gate.inputs:
                    edge((comp.id, ref), (comp.id, gate.id))
            for ofm in flm.ofms:
                graph.setdefault((comp.id, f"ofm:{ofm.id}"), set())
                if ofm.source is not None:
                    edge((comp.id, ofm.source), (comp.id, f"ofm:{ofm.id}"))
        else:
            transitions_to_state: dict[str, set[tuple[str, str]]] = {}
            for state in {s for s, _ in flm.output_deps}:
                on_paths: set[tuple[str, str]] = set()
                for path in simple_state_paths(flm, state):
                    on_paths.update(t.key for t in path)
                transitions_to_state[state] = on_paths
            for ifm in flm.ifms:
                crossings[(comp.id, f"ifm:{ifm.id}")] = f"{comp.id}.{ifm.inport}"
                graph.setdefault((comp.id, f"ifm:{ifm.id}"), set())
            for ofm in flm.ofms:
                graph.setdefault((comp.id, f"ofm:{ofm.id}"), set())
                for state in flm.bound_states(ofm.id):
                    reached = transitions_to_state.get(state, set())
                    for ifm_id, tkey in flm.input_deps:
                        if tkey in reached:
                            edge((comp.id, f"ifm:{ifm_id}"),
                                 (comp.id, f"ofm:{ofm.id}"))

    for (comp_id, ifm_id), feed in resolve_ifm_feeds(model).items():
        if feed is None or feed is _UNMATCHED:
            continue
        src_comp, src_ofm = feed
        target = model.component(comp_id)
        key = "ifm:" + ifm_id
        if isinstance(target.flm, CftElement):
            # CFT ifm nodes participate in gate wiring under their bare id
            key = ifm_id
        edge((src_comp, f"ofm:{src_ofm}"), (comp_id, key))
    return graph, crossings, events


def split_ref(ref: str) -> tuple[str, str]:
    """Split a dotted "component.name" reference at the first dot."""
    comp, sep, name = ref.partition(".")
    if not sep or not comp or not name:
        raise ValueError(f"expected a dotted component.name reference, got {ref!r}")
    return comp, name


def scale_rates(model: SystemModel, factor: float) -> SystemModel:
    """Return a copy of the model with every rate multiplied by `factor`."""
    comps = []
    for comp in model.components:
        flm = comp.flm
        if isinstance(flm, CftElement):
            flm = CftElement(
                basic_events=tuple(BasicEvent(e.id, e.rate.scaled(factor))
                                   for e in flm.basic_events),
                gates=flm.gates, ifms=flm.ifms, ofms=flm.ofms)
        else:
            flm = CmcElement(
                states=flm.states, initial=flm.initial,
                error_states=flm.error_states,
                transitions=tuple(Transition(t.source, t.target, t.rate.scaled(factor))
                                  for t in flm.transitions),
                ifms=flm.ifms, ofms=flm.ofms,
                input_deps=flm.input_deps, output_deps=flm.output_deps)
        comps.append(Component(comp.id, comp.inports, comp.outports, flm))
    return SystemModel(tuple(comps), model.connections)
