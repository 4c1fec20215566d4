"""Parsing and serialization of the `.ghcft` model interchange format.

The format is line oriented and block structured: every statement occupies
one line, blocks open with a trailing `{` and close with `}` on its own
line, and `#` starts a comment.  See docs/format.md for the grammar.

Serialization is canonical (sorted components and ports, fixed field
order, 17-significant-digit rates), so parse(serialize(doc)) == doc for
every valid document.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError
from .model import (BasicEvent, CftElement, CmcElement, Component, Connection,
                    Gate, GateKind, Ifm, Ofm, Rate, RateKind, SystemModel,
                    Transition)

FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.\-]*)
  | (?P<unit_h>/h)
  | (?P<lbrace>\{)
  | (?P<rbrace>\})
""", re.VERBOSE)

_ESCAPES = {"n": "\n", "t": "\t", '"': '"', "\\": "\\"}


@dataclass(frozen=True)
class ModelDocument:
    system: SystemModel
    format_version: int = FORMAT_VERSION
    metadata: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "metadata", tuple(sorted(self.metadata)))

    def meta(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.metadata:
            if k == key:
                return v
        return default


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize_line(text: str, line_no: int) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ParseError(f"unexpected character {text[pos]!r}",
                             line_no, pos + 1)
        kind = match.lastgroup or ""
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, match.group(), line_no, pos + 1))
        pos = match.end()
    return tokens


class _Lines:
    """Token lines with one-line lookahead and positioned errors."""

    def __init__(self, text: str):
        self.lines: list[list[_Token]] = []
        for i, raw in enumerate(text.split("\n"), start=1):
            tokens = _tokenize_line(raw, i)
            if tokens:
                self.lines.append(tokens)
        self.index = 0
        self.last_line = text.count("\n") + 1

    def peek(self) -> list[_Token] | None:
        if self.index < len(self.lines):
            return self.lines[self.index]
        return None

    def take(self) -> list[_Token]:
        line = self.peek()
        if line is None:
            raise ParseError("unexpected end of input", self.last_line, 1)
        self.index += 1
        return line


class _Line:
    """Cursor over the tokens of a single line."""

    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def line_no(self) -> int:
        return self.tokens[0].line

    def _end_column(self) -> int:
        last = self.tokens[-1]
        return last.column + len(last.text)

    def error(self, message: str) -> ParseError:
        if self.pos < len(self.tokens):
            tok = self.tokens[self.pos]
            return ParseError(message + f", found {tok.text!r}", tok.line, tok.column)
        return ParseError(message + ", found end of line",
                          self.line_no, self._end_column())

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            raise self.error(f"expected {what}")
        self.pos += 1
        return tok

    def keyword(self, word: str) -> _Token:
        tok = self.peek()
        if tok is None or tok.kind != "ident" or tok.text != word:
            raise self.error(f"expected {word!r}")
        self.pos += 1
        return tok

    def opt_keyword(self, word: str) -> bool:
        tok = self.peek()
        if tok is not None and tok.kind == "ident" and tok.text == word:
            self.pos += 1
            return True
        return False

    def ident(self, what: str, allow_dot: bool = True) -> _Token:
        tok = self.take("ident", what)
        if not allow_dot and "." in tok.text:
            raise ParseError(f"{what} {tok.text!r} must not contain '.'",
                             tok.line, tok.column)
        return tok

    def name(self, what: str) -> _Token:
        """An identifier or a bare number (state names may be numeric)."""
        tok = self.peek()
        if tok is None or tok.kind not in ("ident", "number"):
            raise self.error(f"expected {what}")
        self.pos += 1
        return tok

    def finish(self) -> None:
        if not self.done():
            raise self.error("expected end of line")


def _parse_rate(line: _Line, kind: RateKind) -> Rate:
    tok = line.take("number", "a rate value")
    value = float(tok.text)
    unit = line.peek()
    fit = False
    if unit is not None:
        if unit.kind == "unit_h":
            line.pos += 1
        elif unit.kind == "ident" and unit.text.lower() in ("fit", "per1e9h"):
            line.pos += 1
            fit = True
    try:
        if fit:
            return Rate.from_fit(value, kind)
        return Rate(value, kind)
    except ValueError as exc:
        raise ParseError(str(exc), tok.line, tok.column) from None


def _open_block(line: _Line) -> None:
    line.take("lbrace", "'{'")
    line.finish()


def _is_close(tokens: list[_Token]) -> bool:
    return len(tokens) == 1 and tokens[0].kind == "rbrace"


class _Parser:
    def __init__(self, text: str):
        self.lines = _Lines(text)

    def document(self) -> ModelDocument:
        header = self.lines.peek()
        if header is None:
            raise ParseError("expected 'ghcft <version>' header", 1, 1)
        line = _Line(self.lines.take())
        line.keyword("ghcft")
        vtok = line.take("number", "a format version")
        try:
            version = int(vtok.text)
        except ValueError:
            raise ParseError(f"format version must be an integer, got {vtok.text!r}",
                             vtok.line, vtok.column) from None
        if version != FORMAT_VERSION:
            raise ParseError(f"unsupported format version {version} "
                             f"(this reader understands {FORMAT_VERSION})",
                             vtok.line, vtok.column)
        line.finish()

        metadata: list[tuple[str, str]] = []
        components: list[Component] = []
        connections: list[Connection] = []
        seen_meta = False
        seen_connections = False
        comp_ids: set[str] = set()

        while self.lines.peek() is not None:
            line = _Line(self.lines.take())
            head = line.peek()
            assert head is not None
            if head.kind != "ident":
                raise line.error("expected 'meta', 'component', or 'connections'")
            if head.text == "meta":
                if seen_meta:
                    raise ParseError("duplicate meta block", head.line, head.column)
                seen_meta = True
                line.pos += 1
                _open_block(line)
                metadata = self._meta_block()
            elif head.text == "component":
                comp = self._component(line)
                if comp.id in comp_ids:
                    raise ParseError(f"duplicate component id {comp.id!r}",
                                     head.line, head.column)
                comp_ids.add(comp.id)
                components.append(comp)
            elif head.text == "connections":
                if seen_connections:
                    raise ParseError("duplicate connections block",
                                     head.line, head.column)
                seen_connections = True
                line.pos += 1
                _open_block(line)
                connections = self._connections_block()
            else:
                raise line.error("expected 'meta', 'component', or 'connections'")

        keys = [k for k, _ in metadata]
        for key in keys:
            if keys.count(key) > 1:
                raise ParseError(f"duplicate metadata key {key!r}", 1, 1)
        return ModelDocument(
            system=SystemModel(tuple(components), tuple(connections)),
            format_version=version,
            metadata=tuple(metadata))

    def _meta_block(self) -> list[tuple[str, str]]:
        entries: list[tuple[str, str]] = []
        while True:
            tokens = self.lines.take()
            if _is_close(tokens):
                return entries
            line = _Line(tokens)
            key = line.ident("a metadata key")
            value = line.take("string", "a quoted string value")
            line.finish()
            entries.append((key.text, _unquote(value)))

    def _component(self, line: _Line) -> Component:
        line.keyword("component")
        cid = line.ident("component id", allow_dot=False)
        _open_block(line)

        inports: list[str] = []
        outports: list[str] = []
        flm = None
        while True:
            tokens = self.lines.take()
            if _is_close(tokens):
                break
            line = _Line(tokens)
            head = line.peek()
            assert head is not None
            if line.opt_keyword("inport"):
                port = line.ident("inport name", allow_dot=False)
                line.finish()
                self._add_port(port, inports, outports)
                inports.append(port.text)
            elif line.opt_keyword("outport"):
                port = line.ident("outport name", allow_dot=False)
                line.finish()
                self._add_port(port, inports, outports)
                outports.append(port.text)
            elif line.opt_keyword("cft"):
                if flm is not None:
                    raise ParseError("component already has a failure logic model",
                                     head.line, head.column)
                _open_block(line)
                flm = self._cft_block(cid.text)
            elif line.opt_keyword("cmc"):
                if flm is not None:
                    raise ParseError("component already has a failure logic model",
                                     head.line, head.column)
                _open_block(line)
                flm = self._cmc_block(cid.text)
            else:
                raise line.error("expected 'inport', 'outport', 'cft', or 'cmc'")
        if flm is None:
            raise ParseError(f"component {cid.text!r} declares no 'cft' or "
                             f"'cmc' block", cid.line, cid.column)
        return Component(cid.text, tuple(inports), tuple(outports), flm)

    @staticmethod
    def _add_port(port: _Token, inports: list[str], outports: list[str]) -> None:
        if port.text in inports or port.text in outports:
            raise ParseError(f"duplicate port name {port.text!r}",
                             port.line, port.column)

    def _cft_block(self, comp_id: str) -> CftElement:
        events: list[BasicEvent] = []
        gates: list[Gate] = []
        ifms: list[Ifm] = []
        ofms: list[Ofm] = []
        node_ids: set[str] = set()

        def claim(tok: _Token) -> str:
            if tok.text in node_ids:
                raise ParseError(f"duplicate node id {tok.text!r} in component "
                                 f"{comp_id!r}", tok.line, tok.column)
            node_ids.add(tok.text)
            return tok.text

        while True:
            tokens = self.lines.take()
            if _is_close(tokens):
                break
            line = _Line(tokens)
            if line.opt_keyword("basic"):
                name = claim(line.ident("basic event id"))
                line.keyword("rate")
                rate = _parse_rate(line, RateKind.FAILURE)
                line.finish()
                events.append(BasicEvent(name, rate))
            elif line.opt_keyword("gate"):
                name = claim(line.ident("gate id"))
                kind_tok = line.ident("gate kind 'and' or 'or'")
                if kind_tok.text not in ("and", "or"):
                    raise ParseError(f"unknown gate kind {kind_tok.text!r} "
                                     f"(only 'and' and 'or' are supported)",
                                     kind_tok.line, kind_tok.column)
                inputs = []
                while not line.done():
                    inputs.append(line.ident("a gate input id").text)
                if not inputs:
                    raise line.error("expected at least one gate input")
                gates.append(Gate(name, GateKind(kind_tok.text), tuple(inputs)))
            elif line.opt_keyword("ifm"):
                name = claim(line.ident("input failure mode id"))
                line.keyword("inport")
                port = line.ident("inport name", allow_dot=False)
                mode = None
                if line.opt_keyword("mode"):
                    mode = line.ident("a failure mode id").text
                line.finish()
                ifms.append(Ifm(name, port.text, mode))
            elif line.opt_keyword("ofm"):
                name = claim(line.ident("output failure mode id"))
                line.keyword("outport")
                port = line.ident("outport name", allow_dot=False)
                line.keyword("from")
                source = line.ident("a feeding node id")
                line.finish()
                ofms.append(Ofm(name, port.text, source.text))
            else:
                raise line.error("expected 'basic', 'gate', 'ifm', or 'ofm'")
        return CftElement(tuple(events), tuple(gates), tuple(ifms), tuple(ofms))

    def _cmc_block(self, comp_id: str) -> CmcElement:
        states: list[str] = []
        initial: _Token | None = None
        error_states: list[str] = []
        transitions: list[Transition] = []
        ifms: list[Ifm] = []
        ofms: list[Ofm] = []
        input_deps: list[tuple[str, tuple[str, str]]] = []
        output_deps: list[tuple[str, str]] = []
        fm_ids: set[str] = set()

        def claim_fm(tok: _Token) -> str:
            if tok.text in fm_ids:
                raise ParseError(f"duplicate failure mode id {tok.text!r} in "
                                 f"component {comp_id!r}", tok.line, tok.column)
            fm_ids.add(tok.text)
            return tok.text

        while True:
            tokens = self.lines.take()
            if _is_close(tokens):
                break
            line = _Line(tokens)
            if line.opt_keyword("states"):
                if states:
                    raise line.error("duplicate 'states' line")
                while not line.done():
                    tok = line.name("a state name")
                    if tok.text in states:
                        raise ParseError(f"duplicate state {tok.text!r}",
                                         tok.line, tok.column)
                    states.append(tok.text)
                if not states:
                    raise line.error("expected at least one state")
            elif line.opt_keyword("initial"):
                if initial is not None:
                    raise line.error("duplicate 'initial' line")
                initial = line.name("the initial state")
                line.finish()
            elif line.opt_keyword("error"):
                while not line.done():
                    tok = line.name("an error state name")
                    if tok.text in error_states:
                        raise ParseError(f"duplicate error state {tok.text!r}",
                                         tok.line, tok.column)
                    error_states.append(tok.text)
            elif line.opt_keyword("transition"):
                src = line.name("a source state")
                dst = line.name("a target state")
                kind = RateKind.FAILURE
                if line.opt_keyword("repair"):
                    kind = RateKind.REPAIR
                else:
                    line.opt_keyword("failure")
                line.keyword("rate")
                rate = _parse_rate(line, kind)
                line.finish()
                if any(t.source == src.text and t.target == dst.text
                       for t in transitions):
                    raise ParseError(f"duplicate transition {src.text!r} -> "
                                     f"{dst.text!r}", src.line, src.column)
                transitions.append(Transition(src.text, dst.text, rate))
            elif line.opt_keyword("ifm"):
                name = claim_fm(line.ident("input failure mode id"))
                line.keyword("inport")
                port = line.ident("inport name", allow_dot=False)
                mode = None
                if line.opt_keyword("mode"):
                    mode = line.ident("a failure mode id").text
                line.finish()
                ifms.append(Ifm(name, port.text, mode))
            elif line.opt_keyword("ofm"):
                name = claim_fm(line.ident("output failure mode id"))
                line.keyword("outport")
                port = line.ident("outport name", allow_dot=False)
                line.finish()
                ofms.append(Ofm(name, port.text, None))
            elif line.opt_keyword("depends"):
                ifm = line.ident("an input failure mode id")
                src = line.name("a source state")
                dst = line.name("a target state")
                line.finish()
                entry = (ifm.text, (src.text, dst.text))
                if entry in input_deps:
                    raise ParseError("duplicate dependency", ifm.line, ifm.column)
                input_deps.append(entry)
            elif line.opt_keyword("binds"):
                state = line.name("an error state")
                ofm = line.ident("an output failure mode id")
                line.finish()
                entry = (state.text, ofm.text)
                if entry in output_deps:
                    raise ParseError("duplicate binding", state.line, state.column)
                output_deps.append(entry)
            else:
                raise line.error("expected 'states', 'initial', 'error', "
                                 "'transition', 'ifm', 'ofm', 'depends', or 'binds'")

        if not states:
            raise ParseError(f"cmc of component {comp_id!r} declares no states",
                             self.lines.last_line, 1)
        if initial is None:
            raise ParseError(f"cmc of component {comp_id!r} declares no initial "
                             f"state", self.lines.last_line, 1)
        return CmcElement(tuple(states), initial.text, tuple(error_states),
                          tuple(transitions), tuple(ifms), tuple(ofms),
                          tuple(input_deps), tuple(output_deps))

    def _connections_block(self) -> list[Connection]:
        connections: list[Connection] = []
        seen: set[tuple[str, str, str, str]] = set()
        while True:
            tokens = self.lines.take()
            if _is_close(tokens):
                return connections
            line = _Line(tokens)
            src = line.ident("an outport reference 'component.port'")
            line.keyword("to")
            dst = line.ident("an inport reference 'component.port'")
            line.finish()
            conn = Connection(*_split_port_ref(src), *_split_port_ref(dst))
            if conn.key in seen:
                raise ParseError("duplicate connection", src.line, src.column)
            seen.add(conn.key)
            connections.append(conn)


def _split_port_ref(tok: _Token) -> tuple[str, str]:
    comp, sep, port = tok.text.partition(".")
    if not sep or not comp or not port or "." in port:
        raise ParseError(f"expected a 'component.port' reference, got {tok.text!r}",
                         tok.line, tok.column)
    return comp, port


def _unquote(tok: _Token) -> str:
    body = tok.text[1:-1]
    out: list[str] = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 1
            if i >= len(body):
                raise ParseError("dangling escape in string", tok.line, tok.column)
            out.append(_ESCAPES.get(body[i], body[i]))
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def parse_model(text: str) -> ModelDocument:
    """Parse a `.ghcft` document.

    Syntax problems raise ParseError with a line:column position; semantic
    validation is validate_model's job.
    """
    return _Parser(text).document()


# ---------------------------------------------------------------------------
# serialization


def _quote(value: str) -> str:
    out = value.replace("\\", "\\\\").replace('"', '\\"')
    out = out.replace("\n", "\\n").replace("\t", "\\t")
    return f'"{out}"'


def _format_rate(rate: Rate, fit_display: bool) -> str:
    kind = "repair " if rate.kind is RateKind.REPAIR else ""
    if fit_display:
        fit = rate.to_fit()
        if Rate.from_fit(fit, rate.kind).value == rate.value:
            if fit == int(fit) and abs(fit) < 1e15:
                return f"{kind}rate {int(fit)} FIT"
            return f"{kind}rate {fit:.16e} FIT"
    return f"{kind}rate {rate.value:.16e} /h"


def serialize_model(doc: ModelDocument) -> str:
    """Render a document in canonical form.

    Rates print with 17 significant digits so every float round-trips
    exactly.  When the document carries metadata `units "fit"`, rates that
    convert losslessly are printed in FIT instead.
    """
    fit_display = (doc.meta("units") or "").lower() == "fit"
    out: list[str] = [f"ghcft {doc.format_version}"]

    if doc.metadata:
        out.append("")
        out.append("meta {")
        for key, value in doc.metadata:
            out.append(f"  {key} {_quote(value)}")
        out.append("}")

    for comp in doc.system.components:
        out.append("")
        out.append(f"component {comp.id} {{")
        for port in comp.inports:
            out.append(f"  inport {port}")
        for port in comp.outports:
            out.append(f"  outport {port}")
        flm = comp.flm
        if isinstance(flm, CftElement):
            out.append("  cft {")
            for event in flm.basic_events:
                out.append(f"    basic {event.id} "
                           f"{_format_rate(event.rate, fit_display)}")
            for gate in flm.gates:
                inputs = " ".join(gate.inputs)
                out.append(f"    gate {gate.id} {gate.kind.value} {inputs}")
            for ifm in flm.ifms:
                mode = f" mode {ifm.mode}" if ifm.mode is not None else ""
                out.append(f"    ifm {ifm.id} inport {ifm.inport}{mode}")
            for ofm in flm.ofms:
                out.append(f"    ofm {ofm.id} outport {ofm.outport} "
                           f"from {ofm.source}")
            out.append("  }")
        else:
            out.append("  cmc {")
            out.append("    states " + " ".join(flm.states))
            out.append(f"    initial {flm.initial}")
            if flm.error_states:
                out.append("    error " + " ".join(flm.error_states))
            for t in flm.transitions:
                out.append(f"    transition {t.source} {t.target} "
                           f"{_format_rate(t.rate, fit_display)}")
            for ifm in flm.ifms:
                mode = f" mode {ifm.mode}" if ifm.mode is not None else ""
                out.append(f"    ifm {ifm.id} inport {ifm.inport}{mode}")
            for ofm in flm.ofms:
                out.append(f"    ofm {ofm.id} outport {ofm.outport}")
            for ifm_id, (src, dst) in flm.input_deps:
                out.append(f"    depends {ifm_id} {src} {dst}")
            for state, ofm_id in flm.output_deps:
                out.append(f"    binds {state} {ofm_id}")
            out.append("  }")
        out.append("}")

    if doc.system.connections:
        out.append("")
        out.append("connections {")
        for conn in doc.system.connections:
            out.append(f"  {conn.source_component}.{conn.source_port} to "
                       f"{conn.target_component}.{conn.target_port}")
        out.append("}")

    out.append("")
    return "\n".join(out)
