"""Reader and canonical writer for ``.qwp`` protocol files.

One statement per line, ``#`` starts a comment::

    qwp 1
    system <name>:<dim>
    basis <bname> on <name> = [<label>: <c>, <c>, ...; <label>: ...]
    prepare <name> <label> | prepare <name> [<c>, <c>, ...]
    measure <target> in <bname> record <observer> [using <bname>]
    catmeasure <agent> in <bname> record <observer> [using <bname>]
    collapse <target> in <bname>
    report <name>... in <bname>...
    actual <prepare|measure|catmeasure|collapse statement>

A component ``<c>`` is a real number or a ``(re,im)`` pair; numbers are decimal
literals or ``1/sqrt2`` / ``1/sqrt8``, optionally signed.  Without ``using``
the observer records in the first basis declared on it.  ``actual`` lines
describe what really happened before the prepared state, for predictions.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from math import sqrt
from pathlib import Path

import numpy as np

from .measurement import ObserverRegister
from .scenarios import (
    CatalyticPremeasure,
    Collapse,
    Premeasure,
    Prepare,
    Protocol,
    ProtocolError,
    Report,
)
from .statevec import Basis, LayoutError, SystemLayout

VERSION = "1"
DATA_DIR = Path(__file__).parent / "data"
BUILTIN = ("cat", "dog", "pet")


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    kind: str  # lex | syntax | semantic
    message: str

    def __str__(self) -> str:
        return f"{self.span.line}:{self.span.column}: {self.kind} error: {self.message}"


class ProtocolSyntaxError(ValueError):
    """Raised by :func:`parse_strict` with every error found in the input."""

    def __init__(self, errors: list[ParseError]):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<num>[+-]?(?:1/sqrt[28]|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[:,;()\[\]=])
    """,
    re.VERBOSE,
)

_SYSTEM_LINE = re.compile(r"[ \t]*system\b", re.IGNORECASE)
_SPECIAL = {"1/sqrt2": 1 / sqrt(2), "1/sqrt8": 1 / sqrt(8)}
_KEYWORDS = {"qwp", "system", "basis", "on", "prepare", "measure", "catmeasure",
             "record", "using", "in", "collapse", "report", "actual"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.line, self.col, len(self.text))

    @property
    def word(self) -> str:
        return self.text.lower() if self.kind == "ident" else self.text


def _number(text: str) -> float:
    sign = -1.0 if text.startswith("-") else 1.0
    body = text.lstrip("+-")
    return sign * _SPECIAL[body] if body in _SPECIAL else float(text)


class _Skip(Exception):
    """Statement dropped; its error (if any) is already recorded."""


class _Parser:
    def __init__(self, text: str):
        self.errors: list[ParseError] = []
        self.systems: list[tuple[str, int]] = []
        self.bad_systems: set[str] = set()
        self.bases: dict[str, Basis] = {}
        self.bad_bases: set[str] = set()
        self.steps: list = []
        self.history: list = []
        self.header_seen = False
        # a broken system line already has its own error
        self.system_attempted = False
        self.lines = text.splitlines()

    # -- plumbing -----------------------------------------------------------
    def error(self, span: SourceSpan, kind: str, message: str):
        self.errors.append(ParseError(span, kind, message))
        raise _Skip

    def lex(self, lineno: int, line: str) -> list[_Tok]:
        code = line.split("#", 1)[0]
        toks, pos = [], 0
        while pos < len(code):
            m = _TOKEN.match(code, pos)
            if m is None:
                self.error(SourceSpan(lineno, pos + 1, 1), "lex", f"unexpected character {code[pos]!r}")
            if m.lastgroup != "ws":
                toks.append(_Tok(m.lastgroup, m.group(), lineno, pos + 1))
            pos = m.end()
        return toks

    def run(self) -> Protocol | list[ParseError]:
        for lineno, line in enumerate(self.lines, 1):
            if _SYSTEM_LINE.match(line):
                self.system_attempted = True
            try:
                toks = self.lex(lineno, line)
                if toks:
                    self.statement(_Cursor(self, toks, lineno, len(line)))
            except _Skip:
                pass
        if not self.system_attempted:
            self.errors.append(ParseError(SourceSpan(1, 1, 0), "semantic", "no system declaration"))
        if self.errors:
            return self.errors
        try:
            return Protocol(SystemLayout(tuple(self.systems)), self.bases, tuple(self.steps), tuple(self.history))
        except (ProtocolError, LayoutError) as exc:
            return [ParseError(SourceSpan(1, 1, 0), "semantic", str(exc))]

    # -- statements ---------------------------------------------------------
    def statement(self, c: "_Cursor"):
        head = c.peek()
        kw = head.word if head.kind == "ident" else ""
        if not self.header_seen:
            if kw != "qwp":
                self.header_seen = True
                self.errors.append(ParseError(head.span, "syntax", f"missing 'qwp {VERSION}' header line"))
            else:
                self.header_seen = True
                c.next()
                v = c.expect("num", "version number")
                c.end()
                if v.text != VERSION:
                    self.error(v.span, "semantic", f"unsupported qwp version {v.text}")
                return
        if kw == "qwp":
            self.error(head.span, "syntax", "header must be the first statement")
        if kw == "system":
            return self.system(c)
        if kw == "basis":
            return self.basis(c)
        if kw == "actual":
            c.next()
            nxt = c.peek()
            if nxt.word not in ("prepare", "measure", "catmeasure", "collapse"):
                self.error(nxt.span, "syntax", "'actual' must be followed by prepare, measure, catmeasure or collapse")
            return self.step(c, self.history)
        if kw in ("prepare", "measure", "catmeasure", "collapse", "report"):
            return self.step(c, self.steps)
        self.error(head.span, "syntax", f"unknown statement {head.text!r}")

    def system(self, c: "_Cursor"):
        c.next()
        name = c.name()
        c.expect_punct(":")
        dim_tok = c.expect("num", "dimension")
        c.end()
        if self.bases or self.steps or self.history:
            self.bad_systems.add(name.text)
            self.error(name.span, "semantic", "system declarations must precede bases and steps")
        if not re.fullmatch(r"\d+", dim_tok.text) or int(dim_tok.text) < 2:
            self.bad_systems.add(name.text)
            self.error(dim_tok.span, "semantic", f"dimension must be an integer >= 2, got {dim_tok.text}")
        if name.text in self.declared or name.text in self.bad_systems:
            self.error(name.span, "semantic", f"subsystem {name.text!r} declared twice")
        self.systems.append((name.text, int(dim_tok.text)))

    @property
    def declared(self) -> dict[str, int]:
        return dict(self.systems)

    def basis(self, c: "_Cursor"):
        c.next()
        bname = c.name()
        c.keyword("on")
        sub = c.name()
        c.expect_punct("=")
        c.expect_punct("[")
        rows: list[tuple[_Tok, list[complex]]] = []
        while True:
            label = c.label()
            c.expect_punct(":")
            comps = c.components(stop=(";", "]"))
            rows.append((label, comps))
            sep = c.expect("punct", "';' or ']'")
            if sep.text == "]":
                break
            if sep.text != ";":
                self.error(sep.span, "syntax", f"expected ';' or ']', got {sep.text!r}")
        c.end()
        if bname.text in self.bases or bname.text in self.bad_bases:
            self.error(bname.span, "semantic", f"basis {bname.text!r} declared twice")
        self.bad_bases.add(bname.text)  # cleared on success
        self.subsystem(sub)
        dim = self.declared[sub.text]
        for label, comps in rows:
            if len(comps) != dim:
                self.error(label.span, "semantic", f"vector {label.text!r} has {len(comps)} components, {sub.text!r} has dimension {dim}")
        if len(rows) != dim:
            self.error(bname.span, "semantic", f"basis {bname.text!r} has {len(rows)} vectors, {sub.text!r} has dimension {dim}")
        try:
            b = Basis(bname.text, sub.text, tuple(l.text for l, _ in rows), np.array([v for _, v in rows]))
        except LayoutError as exc:
            self.error(bname.span, "semantic", str(exc))
        self.bad_bases.discard(bname.text)
        self.bases[bname.text] = b

    def subsystem(self, tok: _Tok):
        if tok.text in self.bad_systems:
            raise _Skip
        if tok.text not in self.declared:
            self.error(tok.span, "semantic", f"undeclared subsystem {tok.text!r}")

    def basis_ref(self, tok: _Tok, on: str) -> Basis:
        if tok.text in self.bad_bases:
            raise _Skip
        if tok.text not in self.bases:
            self.error(tok.span, "semantic", f"undeclared basis {tok.text!r}")
        b = self.bases[tok.text]
        if b.subsystem != on:
            self.error(tok.span, "semantic", f"basis {tok.text!r} is declared on {b.subsystem!r}, not {on!r}")
        return b

    def step(self, c: "_Cursor", into: list):
        kw_tok = c.next()
        kw = kw_tok.word
        if kw == "prepare":
            sub = c.name()
            if c.peek().text == "[":
                c.next()
                comps = c.components(stop=("]",))
                c.expect_punct("]")
                label = None
            else:
                label, comps = c.label(), None
            c.end()
            self.subsystem(sub)
            if any(not isinstance(s, Prepare) for s in into):
                self.error(kw_tok.span, "semantic", "prepare must come before all other steps")
            if comps is None:
                vec = self.lookup_label(sub, label)
            else:
                if len(comps) != self.declared[sub.text]:
                    self.error(sub.span, "semantic", f"vector has {len(comps)} components, {sub.text!r} has dimension {self.declared[sub.text]}")
                if not any(comps):
                    self.error(sub.span, "semantic", "prepared vector is zero")
                vec = tuple(comps)
            into.append(Prepare(sub.text, vec, None if label is None else label.text))
        elif kw in ("measure", "catmeasure"):
            target = c.name()
            c.keyword("in")
            btok = c.name()
            c.keyword("record")
            obs = c.name()
            using = None
            if not c.at_end():
                c.keyword("using")
                using = c.name()
            c.end()
            self.subsystem(target)
            self.subsystem(obs)
            basis = self.basis_ref(btok, target.text)
            if obs.text == target.text:
                self.error(obs.span, "semantic", f"{obs.text!r} cannot record its own measurement")
            if using is None:
                reg = next((b for b in self.bases.values() if b.subsystem == obs.text), None)
                if reg is None:
                    self.error(obs.span, "semantic", f"observer {obs.text!r} has no declared basis to record in")
            else:
                reg = self.basis_ref(using, obs.text)
            if reg.dim < basis.dim:
                self.error(obs.span, "semantic", f"register {reg.name!r} has {reg.dim} states, {basis.dim} outcomes needed")
            register = ObserverRegister.standard(reg, basis.dim)
            cls = Premeasure if kw == "measure" else CatalyticPremeasure
            into.append(cls(target.text, basis, register))
        elif kw == "collapse":
            target = c.name()
            c.keyword("in")
            btok = c.name()
            c.end()
            self.subsystem(target)
            into.append(Collapse(target.text, self.basis_ref(btok, target.text)))
        else:  # report
            names = [c.name()]
            while c.peek().word != "in":
                names.append(c.name())
            c.keyword("in")
            btoks = [c.name()]
            while not c.at_end():
                btoks.append(c.name())
            if len(names) != len(btoks):
                self.error(kw_tok.span, "semantic", f"report lists {len(names)} subsystems but {len(btoks)} bases")
            seen = set()
            for n in names:
                self.subsystem(n)
                if n.text in seen:
                    self.error(n.span, "semantic", f"subsystem {n.text!r} reported twice")
                seen.add(n.text)
            bases = tuple(self.basis_ref(b, n.text) for n, b in zip(names, btoks))
            into.append(Report(tuple(n.text for n in names), bases))

    def lookup_label(self, sub: _Tok, label: _Tok) -> tuple[complex, ...]:
        found = [b.vector(label.text) for b in self.bases.values()
                 if b.subsystem == sub.text and label.text in b.labels]
        if not found:
            self.error(label.span, "semantic", f"no basis on {sub.text!r} has a vector labelled {label.text!r}")
        if any(not np.array_equal(found[0], f) for f in found[1:]):
            self.error(label.span, "semantic", f"label {label.text!r} names different vectors on {sub.text!r}")
        return tuple(complex(z) for z in found[0])


class _Cursor:
    def __init__(self, parser: _Parser, toks: list[_Tok], line: int, width: int):
        self.p, self.toks, self.i = parser, toks, 0
        self.eol = _Tok("eol", "", line, width + 1)

    def peek(self) -> _Tok:
        return self.toks[self.i] if self.i < len(self.toks) else self.eol

    def next(self) -> _Tok:
        t = self.peek()
        if t.kind == "eol":
            self.p.error(t.span, "syntax", "unexpected end of line")
        self.i += 1
        return t

    def at_end(self) -> bool:
        return self.i >= len(self.toks)

    def end(self):
        if not self.at_end():
            t = self.peek()
            self.p.error(t.span, "syntax", f"unexpected {t.text!r}")

    def expect(self, kind: str, what: str) -> _Tok:
        t = self.peek()
        if t.kind != kind:
            self.p.error(t.span, "syntax", f"expected {what}, got {t.text or 'end of line'!r}")
        return self.next()

    def expect_punct(self, ch: str) -> _Tok:
        t = self.peek()
        if t.text != ch:
            self.p.error(t.span, "syntax", f"expected {ch!r}, got {t.text or 'end of line'!r}")
        return self.next()

    def keyword(self, kw: str) -> _Tok:
        t = self.peek()
        if t.word != kw:
            self.p.error(t.span, "syntax", f"expected {kw!r}, got {t.text or 'end of line'!r}")
        return self.next()

    def name(self) -> _Tok:
        t = self.peek()
        if t.kind != "ident" or t.word in _KEYWORDS:
            self.p.error(t.span, "syntax", f"expected a name, got {t.text or 'end of line'!r}")
        return self.next()

    def label(self) -> _Tok:
        return self.name()

    def real(self) -> float:
        return _number(self.expect("num", "a number").text)

    def components(self, stop: tuple[str, ...]) -> list[complex]:
        out = []
        while True:
            if self.peek().text == "(":
                self.next()
                re_ = self.real()
                self.expect_punct(",")
                im = self.real()
                self.expect_punct(")")
                out.append(complex(re_, im))
            else:
                out.append(complex(self.real(), 0.0))
            if self.peek().text != ",":
                return out
            self.next()


def parse(text: str) -> Protocol | list[ParseError]:
    """Parse ``.qwp`` text into a validated :class:`Protocol`, or the list of errors.

    Every error in the input is collected: the parser recovers at line
    boundaries and does not report follow-on errors for names whose
    declaration already failed.
    """
    return _Parser(text).run()


def parse_strict(text: str) -> Protocol:
    """Like :func:`parse`, but raises :class:`ProtocolSyntaxError` on errors."""
    out = parse(text)
    if isinstance(out, list):
        raise ProtocolSyntaxError(out)
    return out


def parse_file(path: str | Path) -> Protocol:
    return parse_strict(Path(path).read_text(encoding="utf-8"))


def builtin_path(name: str) -> Path:
    return DATA_DIR / f"{name}.qwp"


def load_builtin(name: str) -> Protocol:
    if name not in BUILTIN:
        raise KeyError(f"no built-in scenario {name!r}")
    return parse_file(builtin_path(name))


# -- canonical writer -------------------------------------------------------

def _num(x: float) -> str:
    return repr(float(x))


def _comp(z: complex) -> str:
    return _num(z.real) if z.imag == 0 else f"({_num(z.real)},{_num(z.imag)})"


def _vector(v) -> str:
    return ", ".join(_comp(complex(z)) for z in v)


def _step_line(s) -> str:
    if isinstance(s, Prepare):
        return f"prepare {s.subsystem} " + (s.label if s.label is not None else f"[{_vector(s.vector)}]")
    if isinstance(s, (Premeasure, CatalyticPremeasure)):
        return s.describe()
    if isinstance(s, Collapse):
        return s.describe()
    if isinstance(s, Report):
        return s.describe()
    raise TypeError(f"cannot serialize {s!r}")


def serialize(p: Protocol) -> str:
    """Canonical text: header, systems, bases, actual history, steps."""
    lines = [f"qwp {VERSION}"]
    lines += [f"system {n}:{d}" for n, d in p.layout.subsystems]
    for b in p.bases.values():
        rows = "; ".join(f"{lab}: {_vector(v)}" for lab, v in zip(b.labels, b.vectors))
        lines.append(f"basis {b.name} on {b.subsystem} = [{rows}]")
    lines += ["actual " + _step_line(s) for s in p.history]
    lines += [_step_line(s) for s in p.steps]
    return "\n".join(lines) + "\n"
