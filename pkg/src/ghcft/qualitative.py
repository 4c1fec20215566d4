"""Qualitative analysis: rewriting state machines into Boolean failure
logic, flattening a component model into one failure DAG, and extracting
minimal cut sets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .errors import (GhcftWarning, InvalidModelError, ResourceLimitError,
                     TransformError)
from .model import (_UNMATCHED, BasicEvent, CftElement, CmcElement, Component,
                    Gate, GateKind, Ofm, Rate, SystemModel, Transition,
                    resolve_ifm_feeds, simple_state_paths, split_ref)

DEFAULT_CUT_SET_CAP = 10 ** 6


@dataclass(frozen=True)
class FlattenedTree:
    """A single-top failure DAG over qualified basic events.

    Node ids are qualified as "component.node"; synthetic events derived
    from state transitions are named "component.t_<from>_<to>".  The root
    is the node feeding the requested top failure mode; it is an event id
    for degenerate one-node trees, otherwise a gate id.
    """

    top_ref: str
    root: str
    events: tuple[BasicEvent, ...] = ()
    gates: tuple[Gate, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "events",
                           tuple(sorted(self.events, key=lambda e: e.id)))
        object.__setattr__(self, "gates",
                           tuple(sorted(self.gates, key=lambda g: g.id)))

    @property
    def event_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.events)

    def gate_map(self) -> dict[str, Gate]:
        return {g.id: g for g in self.gates}

    def event_rates(self) -> dict[str, Rate]:
        return {e.id: e.rate for e in self.events}


@dataclass(frozen=True)
class CutSetResult:
    """Minimal cut sets of one top event, ordered by size then lexicographically."""

    top: str
    cut_sets: tuple[frozenset[str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "cut_sets",
            tuple(sorted(set(self.cut_sets),
                         key=lambda s: (len(s), tuple(sorted(s))))))

    def as_sorted_lists(self) -> tuple[tuple[str, ...], ...]:
        return tuple(tuple(sorted(s)) for s in self.cut_sets)


def enumerate_error_paths(cmc: CmcElement, error_state: str) \
        -> tuple[tuple[Transition, ...], ...]:
    """All simple paths from the initial state to `error_state`.

    The error state must be declared as one.  An unreachable error state
    yields an empty result and a GhcftWarning.
    """
    if error_state not in cmc.error_states:
        raise InvalidModelError(f"{error_state!r} is not an error state")
    paths = simple_state_paths(cmc, error_state)
    if not paths:
        warnings.warn(f"error state {error_state!r} is unreachable from the "
                      f"initial state", GhcftWarning, stacklevel=2)
    return paths


def transition_event_id(transition: Transition) -> str:
    return f"t_{transition.source}_{transition.target}"


def cmc_to_cft(cmc: CmcElement) -> CftElement:
    """Rewrite a state machine as Boolean failure logic.

    Every transition becomes a synthetic basic event carrying its base
    rate; a transition with input failure mode dependencies becomes an OR
    of its event and those failure modes.  Each output failure mode is fed,
    per simple path from the initial state to a bound error state, by an
    AND over the path's transition nodes, and by an OR over those ANDs when
    several paths exist.  One-input gates are elided.  Port bindings are
    preserved, so the result drops into the owning component unchanged.

    An output failure mode whose bound error states are all unreachable is
    fed by a synthetic rate-zero event "never_<ofm>" and a GhcftWarning is
    emitted.  An output failure mode bound to the initial state itself is
    rejected: Boolean failure logic cannot express an already-present
    failure.
    """
    events: dict[str, BasicEvent] = {}
    gates: dict[str, Gate] = {}
    used_ids = {f.id for f in cmc.ifms} | {f.id for f in cmc.ofms}

    def claim(node_id: str) -> str:
        if node_id in used_ids or node_id in events or node_id in gates:
            raise TransformError(
                f"synthetic node id {node_id!r} collides with an existing "
                f"failure mode or another synthetic node; rename the "
                f"conflicting state or failure mode")
        return node_id

    # step 1: one basic event per transition, OR-joined with its dependencies
    node_for: dict[tuple[str, str], str] = {}
    for t in cmc.transitions:
        event_id = claim(transition_event_id(t))
        events[event_id] = BasicEvent(event_id, t.rate)
        deps = cmc.deps_of(t)
        if deps:
            gate_id = claim(event_id + "_or")
            gates[gate_id] = Gate(gate_id, GateKind.OR, deps + (event_id,))
            node_for[t.key] = gate_id
        else:
            node_for[t.key] = event_id

    # step 2: per failure mode, AND over each path, OR over multiple paths
    path_nodes: dict[tuple[str, int], str] = {}

    def path_node(state: str, k: int, path: tuple[Transition, ...]) -> str:
        if (state, k) in path_nodes:
            return path_nodes[(state, k)]
        members = tuple(node_for[t.key] for t in path)
        if len(members) == 1:
            node = members[0]
        else:
            gate_id = claim(f"path_{state}_{k}_and")
            gates[gate_id] = Gate(gate_id, GateKind.AND, members)
            node = gate_id
        path_nodes[(state, k)] = node
        return node

    ofms: list[Ofm] = []
    for ofm in cmc.ofms:
        feeders: list[str] = []
        for state in cmc.bound_states(ofm.id):
            for k, path in enumerate(simple_state_paths(cmc, state)):
                if not path:
                    raise TransformError(
                        f"output failure mode {ofm.id!r} is bound to the "
                        f"initial state {state!r}; Boolean failure logic "
                        f"cannot express an always-present failure")
                feeders.append(path_node(state, k, path))
        if not feeders:
            warnings.warn(
                f"output failure mode {ofm.id!r} is bound only to unreachable "
                f"error states; feeding it with a never-occurring event",
                GhcftWarning, stacklevel=2)
            never_id = claim(f"never_{ofm.id}")
            events[never_id] = BasicEvent(never_id, Rate(0.0))
            feeders.append(never_id)
        if len(feeders) == 1:
            source = feeders[0]
        else:
            gate_id = claim(f"{ofm.id}_paths_or")
            gates[gate_id] = Gate(gate_id, GateKind.OR, tuple(feeders))
            source = gate_id
        ofms.append(Ofm(ofm.id, ofm.outport, source))

    return CftElement(tuple(events.values()), tuple(gates.values()),
                      cmc.ifms, tuple(ofms))


_FALSE = "<false>"


def flatten_ghcft(model: SystemModel, top: str, strict: bool = False) -> FlattenedTree:
    """Expand the component model into one failure DAG rooted at `top`.

    `top` names an output failure mode as "component.ofm".  State-machine
    elements are first rewritten with cmc_to_cft.  Input failure modes are
    replaced by the subtree feeding the matched upstream output failure
    mode; unconnected or unmatched ones are treated as never failing and
    pruned (with strict=True they raise instead).  Only the cone of
    influence of the top survives, basic-event ids are qualified by their
    component id, and one-input gates are elided.
    """
    top_comp_id, top_ofm_id = split_ref(top)
    if not model.has_component(top_comp_id):
        raise InvalidModelError(f"top event {top!r}: no component "
                                f"{top_comp_id!r} in the model")

    views: dict[str, CftElement] = {}

    def view(comp: Component) -> CftElement:
        if comp.id not in views:
            flm = comp.flm
            views[comp.id] = flm if isinstance(flm, CftElement) else cmc_to_cft(flm)
        return views[comp.id]

    try:
        top_ofm = view(model.component(top_comp_id)).ofm(top_ofm_id)
    except KeyError:
        raise InvalidModelError(
            f"top event {top!r}: component {top_comp_id!r} has no output "
            f"failure mode {top_ofm_id!r}") from None

    feeds = resolve_ifm_feeds(model)
    events: dict[str, BasicEvent] = {}
    gates: dict[str, Gate] = {}
    memo: dict[tuple[str, str], str] = {}

    def expand(comp_id: str, node_id: str) -> str:
        key = (comp_id, node_id)
        if key in memo:
            return memo[key]
        cft = views[comp_id]
        result = _FALSE
        event = next((e for e in cft.basic_events if e.id == node_id), None)
        ifm = next((f for f in cft.ifms if f.id == node_id), None)
        if event is not None:
            qid = f"{comp_id}.{node_id}"
            events[qid] = BasicEvent(qid, event.rate)
            result = qid
        elif ifm is not None:
            feed = feeds.get((comp_id, node_id))
            if feed is None or feed is _UNMATCHED:
                if strict:
                    raise InvalidModelError(
                        f"input failure mode {comp_id}.{node_id} has no "
                        f"upstream feed (strict mode)")
                result = _FALSE
            else:
                src_comp, src_ofm = feed
                source_node = view(model.component(src_comp)).ofm(src_ofm).source
                assert source_node is not None
                result = expand(src_comp, source_node)
        else:
            gate = cft.gate(node_id)
            expanded = [expand(comp_id, ref) for ref in gate.inputs]
            live = sorted(set(expanded) - {_FALSE})
            if gate.kind is GateKind.AND and _FALSE in expanded:
                result = _FALSE  # an AND with a never-failing input never fires
            elif not live:
                result = _FALSE
            elif len(live) == 1:
                result = live[0]
            else:
                qid = f"{comp_id}.{node_id}"
                gates[qid] = Gate(qid, gate.kind, tuple(live))
                result = qid
        memo[key] = result
        return result

    assert top_ofm.source is not None
    root = expand(top_comp_id, top_ofm.source)
    if root == _FALSE:
        warnings.warn(f"top event {top!r} can never occur; its whole subtree "
                      f"was pruned", GhcftWarning, stacklevel=2)
        never_id = f"{top_comp_id}.never_{top_ofm_id}"
        events[never_id] = BasicEvent(never_id, Rate(0.0))
        root = never_id

    return FlattenedTree(top_ref=top, root=root,
                         events=tuple(events.values()),
                         gates=tuple(gates.values()))


def minimal_cut_sets(tree: FlattenedTree,
                     cap: int = DEFAULT_CUT_SET_CAP) -> CutSetResult:
    """Complete and minimal cut sets of the flattened tree.

    Top-down expansion: starting from {root}, gates are repeatedly replaced
    by their inputs (AND merges into the set, OR forks one set per input)
    until only basic events remain; subsumption then removes supersets.  A
    set of events is a superset of some returned cut set exactly when it
    makes the top true.  The number of in-flight sets is capped.
    """
    gate_map = tree.gate_map()
    if tree.root not in gate_map and tree.root not in tree.event_rates():
        raise InvalidModelError(f"root node {tree.root!r} is not in the tree")

    finished: list[frozenset[str]] = []
    work: list[frozenset[str]] = [frozenset({tree.root})]
    while work:
        current = work.pop()
        gate_id = next((n for n in sorted(current) if n in gate_map), None)
        if gate_id is None:
            finished.append(current)
            continue
        rest = current - {gate_id}
        gate = gate_map[gate_id]
        if gate.kind is GateKind.AND:
            work.append(rest | set(gate.inputs))
        else:
            for ref in gate.inputs:
                work.append(rest | {ref})
        if len(work) + len(finished) > cap:
            raise ResourceLimitError(
                f"cut-set expansion exceeded the cap of {cap} intermediate "
                f"sets; raise the cap or simplify the model")

    return CutSetResult(tree.top_ref, tuple(_minimize(finished)))


def _minimize(sets: list[frozenset[str]]) -> list[frozenset[str]]:
    """Drop every set that is a superset of another (subsumption)."""
    unique = sorted(set(sets), key=len)
    kept: list[frozenset[str]] = []
    for candidate in unique:
        if not any(k <= candidate for k in kept):
            kept.append(candidate)
    return kept
