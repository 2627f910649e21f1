"""Parsers for the two surface dialects.

SAPIC scripts (.sapic): optional `theory N begin .. end` wrapper, `functions:`
and `equations:` blocks, optional `free:` names, `let Name = P` macros (macro
names are capitalized, which disambiguates them from in-process lets), lemma
blocks (kept as raw text, not interpreted), and a `process:` section.

StatVerif scripts (.sv): `fun f/n.`, `reduc d(..) = t [; ..].`, `free c.`,
`query ...` (raw), `let name = P.` macros, and a final `process P`.

Shared conventions: quoted 'idents' and unbound bare identifiers are nullary
public constructors; variables are created only by binders (inside destructor
rules and multiset-construct facts, unbound identifiers are variables instead);
one-argument out/in use the public channel constant c; `if M = N then P else Q`
desugars to a let over the equal destructor. Macros are stored as token ranges
and re-parsed at each reference, so their free identifiers resolve in the
scope of the reference site.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .terms import (
    CONSTRUCTOR, DESTRUCTOR, DestructorRule, FuncSymbol, ModelError,
    SymbolicModel, Term, app, make_model, pname, term_vars, var,
)
from .process import (
    DEFAULT_CHANNEL, Delete, Event, Fact, FactLike, In, Insert, Let, Lock,
    Lookup, Msr, Nil, Out, Parallel, Pos, Process, Repl, Restrict, SvAssign,
    SvInit, SvLock, SvRead, SvUnlock, Unlock,
)


class ParseError(Exception):
    def __init__(self, message: str, pos: Pos = None) -> None:
        if pos:
            message = f"{pos[0]}:{pos[1]}: {message}"
        super().__init__(message)
        self.pos = pos


@dataclass
class Diagnostic:
    rule: str
    message: str
    pos: Pos = None

    def __str__(self) -> str:
        loc = f"{self.pos[0]}:{self.pos[1]}: " if self.pos else ""
        return f"{loc}[{self.rule}] {self.message}"


@dataclass
class ParsedScript:
    dialect: str
    model: SymbolicModel
    process: Process
    free_names: tuple[str, ...] = ()
    queries: tuple[str, ...] = ()
    lemmas: tuple[str, ...] = ()
    diagnostics: list[Diagnostic] = field(default_factory=list)
    fact_linearity: dict[str, bool] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Tokenizer


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\(\*.*?\*\)|//[^\n]*)
  | (?P<quoted>'[A-Za-z_][A-Za-z0-9_]*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>\d+)
  | (?P<sym>\|->|\]->|:=|\|\||==>|-\[|[()\[\],;.!|=/:<>@#&~*+-])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | quoted | sym | eof
    text: str
    pos: tuple[int, int]


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    i = 0
    line, col = 1, 1
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise ParseError(f"unexpected character {text[i]!r}", (line, col))
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("ws", "comment"):
            if kind == "quoted":
                out.append(Token("quoted", tok[1:-1], (line, col)))
            else:
                out.append(Token(kind, tok, (line, col)))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        i = m.end()
    out.append(Token("eof", "", (line, col)))
    return out


def _balance_step(t: Token, depth: int) -> int:
    if t.text in ("(", "[") and t.kind == "sym":
        return depth + 1
    if t.text in (")", "]") and t.kind == "sym":
        return depth - 1
    return depth


# ---------------------------------------------------------------------------
# Process parser (shared by both dialects)


class _Scope:
    __slots__ = ("vars", "names")

    def __init__(self, vars: set[str] | None = None, names: set[str] | None = None) -> None:
        self.vars = vars or set()
        self.names = names or set()

    def bind_var(self, name: str) -> "_Scope":
        return _Scope(self.vars | {name}, self.names - {name})

    def bind_name(self, name: str) -> "_Scope":
        return _Scope(self.vars - {name}, self.names | {name})


class _Parser:
    def __init__(self, tokens: list[Token], dialect: str, model: SymbolicModel,
                 macros: dict[str, tuple[int, int]], free_names: set[str],
                 all_tokens: list[Token] | None = None) -> None:
        self.toks = tokens
        self.i = 0
        self.dialect = dialect
        self.model = model
        self.macros = macros  # name -> [start, end) into all_tokens
        self.all_tokens = all_tokens if all_tokens is not None else tokens
        self.free_names = free_names
        self.diagnostics: list[Diagnostic] = []
        self.fact_linearity: dict[str, bool] = {}
        self._fresh = [0]
        self._all_idents = {t.text for t in self.all_tokens if t.kind == "ident"}
        self._macro_depth = 0

    # -- token helpers

    def peek(self, k: int = 0) -> Token:
        j = min(self.i + k, len(self.toks) - 1)
        return self.toks[j]

    def next(self) -> Token:
        t = self.peek()
        if t.kind != "eof":
            self.i += 1
        return t

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.kind != "eof" and t.text == text

    def eat(self, text: str) -> Token:
        t = self.peek()
        if t.kind == "eof" or t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text!r}", t.pos)
        return self.next()

    def eat_ident(self, what: str = "identifier") -> Token:
        t = self.peek()
        if t.kind != "ident":
            raise ParseError(f"expected {what}, found {t.text!r}", t.pos)
        return self.next()

    def fresh_var(self, base: str) -> str:
        while True:
            name = f"{base}{self._fresh[0]}"
            self._fresh[0] += 1
            if name not in self._all_idents:
                return name

    # -- terms

    def parse_term(self, scope: _Scope, rule_ctx: bool = False) -> Term:
        t = self.peek()
        if t.kind == "quoted":
            self.next()
            return self.model.constant(t.text)
        if t.kind == "sym" and t.text == "(":
            self.next()
            inner = self.parse_term(scope, rule_ctx)
            self.eat(")")
            return inner
        if t.kind != "ident":
            raise ParseError(f"expected a term, found {t.text!r}", t.pos)
        self.next()
        name = t.text
        if self.at("("):
            f = self.model.symbol(name)
            if f is None:
                raise ParseError(f"unknown function symbol {name}", t.pos)
            self.next()
            args: list[Term] = []
            if not self.at(")"):
                args.append(self.parse_term(scope, rule_ctx))
                while self.at(","):
                    self.next()
                    args.append(self.parse_term(scope, rule_ctx))
            self.eat(")")
            if len(args) != f.arity:
                raise ParseError(f"{f} applied to {len(args)} arguments", t.pos)
            return app(f, args)
        if name in scope.vars:
            return var(name)
        if name in scope.names or name in self.free_names:
            return pname(name)
        f = self.model.symbol(name)
        if f is not None:
            if f.arity != 0:
                raise ParseError(f"{f} needs arguments", t.pos)
            if f.kind != CONSTRUCTOR:
                raise ParseError(f"destructor {name} cannot stand alone", t.pos)
            return app(f, ())
        if rule_ctx:
            return var(name)
        return self.model.constant(name)

    def parse_factlike(self, scope: _Scope, rule_ctx: bool = False) -> FactLike:
        t = self.eat_ident("event symbol")
        args: list[Term] = []
        if self.at("("):
            self.next()
            if not self.at(")"):
                args.append(self.parse_term(scope, rule_ctx))
                while self.at(","):
                    self.next()
                    args.append(self.parse_term(scope, rule_ctx))
            self.eat(")")
        return FactLike(t.text, tuple(args))

    def parse_fact(self, scope: _Scope) -> Fact:
        persistent = False
        if self.at("!"):
            self.next()
            persistent = True
        t = self.eat_ident("fact symbol")
        sym = t.text
        seen = self.fact_linearity.get(sym)
        if seen is None:
            self.fact_linearity[sym] = persistent
        elif seen != persistent:
            self.diagnostics.append(Diagnostic(
                "fact-linearity", f"fact {sym} used both linear and persistent", t.pos))
        args: list[Term] = []
        self.eat("(")
        if not self.at(")"):
            args.append(self.parse_term(scope, rule_ctx=True))
            while self.at(","):
                self.next()
                args.append(self.parse_term(scope, rule_ctx=True))
        self.eat(")")
        return Fact(sym, tuple(args), persistent)

    # -- processes

    def parse_parallel(self, scope: _Scope) -> Process:
        left = self.parse_seq(scope)
        while self.at("|") or self.at("||"):
            pos = self.next().pos
            right = self.parse_seq(scope)
            left = Parallel(left, right, pos=pos)
        return left

    def parse_cont(self, scope: _Scope) -> Process:
        if self.at(";"):
            self.next()
            return self.parse_parallel(scope)
        return Nil()

    def _parse_else(self, scope: _Scope) -> Process:
        if self.at("else"):
            self.next()
            return self.parse_parallel(scope)
        return Nil()

    def parse_seq(self, scope: _Scope) -> Process:
        t = self.peek()
        pos = t.pos
        if t.kind == "sym" and t.text == "!":
            self.next()
            return Repl(self.parse_seq(scope), pos=pos)
        if t.kind == "sym" and t.text == "(":
            self.next()
            inner = self.parse_parallel(scope)
            self.eat(")")
            return inner
        if t.kind == "int" and t.text == "0":
            self.next()
            return Nil(pos=pos)
        if t.kind == "sym" and t.text == "[":
            return self._parse_bracket(scope, pos)
        if t.kind != "ident":
            raise ParseError(f"expected a process, found {t.text!r}", t.pos)

        kw = t.text
        if kw == "new":
            self.next()
            n = self.eat_ident("name").text
            self.eat(";")
            return Restrict(n, self.parse_parallel(scope.bind_name(n)), pos=pos)
        if kw == "out" and self.peek(1).text == "(":
            self.next()
            self.eat("(")
            first = self.parse_term(scope)
            if self.at(","):
                self.next()
                chan, payload = first, self.parse_term(scope)
            else:
                chan, payload = self._default_channel(), first
            self.eat(")")
            return Out(chan, payload, self.parse_cont(scope), pos=pos)
        if kw == "in" and self.peek(1).text == "(":
            self.next()
            self.eat("(")
            if self._input_has_two_args():
                chan = self.parse_term(scope)
                self.eat(",")
            else:
                chan = self._default_channel()
            vname = self._input_pattern(scope, pos)
            self.eat(")")
            return In(chan, vname, self.parse_cont(scope.bind_var(vname)), pos=pos)
        if kw == "let":
            self.next()
            x = self.eat_ident("variable").text
            self.eat("=")
            expr = self.parse_term(scope)
            self.eat("in")
            then = self.parse_parallel(scope.bind_var(x))
            return Let(x, expr, then, self._parse_else(scope), pos=pos)
        if kw == "if":
            self.next()
            lhs = self.parse_term(scope)
            self.eat("=")
            rhs = self.parse_term(scope)
            self.eat("then")
            x = self.fresh_var("eq")
            eq = self.model.destructors["equal"]
            then = self.parse_parallel(scope)
            return Let(x, app(eq, (lhs, rhs)), then, self._parse_else(scope), pos=pos)
        if kw == "event":
            self.next()
            fl = self.parse_factlike(scope)
            return Event(fl, self.parse_cont(scope), pos=pos)
        if kw == "insert" and self.dialect == "sapic":
            self.next()
            key = self.parse_term(scope)
            self.eat(",")
            value = self.parse_term(scope)
            return Insert(key, value, self.parse_cont(scope), pos=pos)
        if kw == "delete" and self.dialect == "sapic":
            self.next()
            return Delete(self.parse_term(scope), self.parse_cont(scope), pos=pos)
        if kw == "lookup" and self.dialect == "sapic":
            self.next()
            key = self.parse_term(scope)
            self.eat("as")
            x = self.eat_ident("variable").text
            self.eat("in")
            then = self.parse_parallel(scope.bind_var(x))
            return Lookup(key, x, then, self._parse_else(scope), pos=pos)
        if kw == "lock":
            self.next()
            if self.dialect == "statverif":
                return SvLock(self.parse_cont(scope), pos=pos)
            return Lock(self.parse_term(scope), self.parse_cont(scope), pos=pos)
        if kw == "unlock":
            self.next()
            if self.dialect == "statverif":
                return SvUnlock(self.parse_cont(scope), pos=pos)
            return Unlock(self.parse_term(scope), self.parse_cont(scope), pos=pos)
        if kw == "read" and self.dialect == "statverif":
            self.next()
            cell = pname(self.eat_ident("cell name").text)
            self.eat("as")
            x = self.eat_ident("variable").text
            return SvRead(cell, x, self.parse_cont(scope.bind_var(x)), pos=pos)
        if self.dialect == "statverif" and self.peek(1).text == ":=":
            cell = pname(self.next().text)
            self.eat(":=")
            value = self.parse_term(scope)
            return SvAssign(cell, value, self.parse_cont(scope), pos=pos)
        if kw in self.macros:
            self.next()
            return self._inline_macro(kw, scope, pos)
        raise ParseError(f"expected a process, found {kw!r}", t.pos)

    def _default_channel(self) -> Term:
        return self.model.constant(DEFAULT_CHANNEL)

    def _input_has_two_args(self) -> bool:
        depth = 0
        j = self.i
        while True:
            t = self.toks[min(j, len(self.toks) - 1)]
            if t.kind == "eof":
                raise ParseError("unterminated input", t.pos)
            if t.kind == "sym":
                if t.text in ("(", "["):
                    depth += 1
                elif t.text in (")", "]"):
                    if depth == 0:
                        return False
                    depth -= 1
                elif t.text == "," and depth == 0:
                    return True
            j += 1

    def _input_pattern(self, scope: _Scope, pos: Pos) -> str:
        t = self.peek()
        if t.kind == "ident" and self.peek(1).text == ")":
            self.next()
            return t.text
        pattern = self.parse_term(scope, rule_ctx=True)
        self.diagnostics.append(Diagnostic(
            "input-pattern",
            f"input must bind a variable, found pattern {pattern!r}", pos))
        return self.fresh_var("inpat")

    def _parse_bracket(self, scope: _Scope, pos: Pos) -> Process:
        self.eat("[")
        if self.dialect == "statverif":
            cell = pname(self.eat_ident("cell name").text)
            self.eat("|->")
            value = self.parse_term(scope)
            self.eat("]")
            return SvInit(cell, value, pos=pos)
        lhs = self._parse_fact_list(scope, closer="]")
        binds: set[str] = set()
        for f in lhs:
            for a in f.args:
                binds |= term_vars(a)
        binds -= scope.vars
        inner = _Scope(scope.vars | binds, scope.names)
        self.eat("-[")
        events: list[FactLike] = []
        if not self.at("]->"):
            events.append(self.parse_factlike(inner, rule_ctx=True))
            while self.at(","):
                self.next()
                events.append(self.parse_factlike(inner, rule_ctx=True))
        self.eat("]->")
        self.eat("[")
        rhs = self._parse_fact_list(inner, closer="]")
        return Msr(tuple(lhs), tuple(events), tuple(rhs), self.parse_cont(inner),
                   binds=frozenset(binds), pos=pos)

    def _parse_fact_list(self, scope: _Scope, closer: str) -> list[Fact]:
        facts: list[Fact] = []
        if not self.at(closer):
            facts.append(self.parse_fact(scope))
            while self.at(","):
                self.next()
                facts.append(self.parse_fact(scope))
        self.eat(closer)
        return facts

    def _inline_macro(self, name: str, scope: _Scope, pos: Pos) -> Process:
        if self._macro_depth > 32:
            raise ParseError(f"macro recursion involving {name}", pos)
        start, end = self.macros[name]
        body = self.all_tokens[start:end] + [Token("eof", "", pos or (0, 0))]
        sub = _Parser(body, self.dialect, self.model, self.macros,
                      self.free_names, all_tokens=self.all_tokens)
        sub.fact_linearity = self.fact_linearity
        sub._fresh = self._fresh
        sub._macro_depth = self._macro_depth + 1
        out = sub.parse_parallel(scope)
        tok = sub.peek()
        if tok.kind != "eof":
            raise ParseError(f"unexpected {tok.text!r} in macro {name}", tok.pos)
        self.diagnostics.extend(sub.diagnostics)
        return out


# ---------------------------------------------------------------------------
# Destructor-rule parsing shared by both dialects


def _split_clauses(toks: list[Token], start: int, end: int) -> Iterator[tuple[int, int]]:
    depth = 0
    s = start
    for j in range(start, end):
        t = toks[j]
        depth = _balance_step(t, depth)
        if t.kind == "sym" and t.text in (";", ",") and depth == 0:
            yield (s, j)
            s = j + 1
    if s < end:
        yield (s, end)


def _clause_arity(toks: list[Token], open_paren: int) -> int:
    depth = 0
    count = 0
    j = open_paren
    while True:
        t = toks[j]
        if t.kind == "eof":
            raise ParseError("unterminated clause", t.pos)
        if t.text == "(":
            depth += 1
            if depth == 1 and toks[j + 1].text != ")":
                count = 1
        elif t.text == ")":
            depth -= 1
            if depth == 0:
                return count
        elif t.text == "," and depth == 1:
            count += 1
        j += 1


def _build_model_from_clauses(toks: list[Token], constructors: list[FuncSymbol],
                              rule_ranges: list[tuple[int, int]], mode: str) -> SymbolicModel:
    heads: dict[str, FuncSymbol] = {}
    clauses: list[tuple[FuncSymbol, tuple[int, int]]] = []
    for start, end in rule_ranges:
        for s, e in _split_clauses(toks, start, end):
            head = toks[s]
            if head.kind != "ident" or toks[s + 1].text != "(":
                raise ParseError("expected a destructor clause", head.pos)
            arity = _clause_arity(toks, s + 1)
            f = heads.get(head.text)
            if f is None:
                f = FuncSymbol(head.text, arity, DESTRUCTOR)
                heads[head.text] = f
            elif f.arity != arity:
                raise ParseError(f"clauses for {head.text} disagree on arity", head.pos)
            clauses.append((f, (s, e)))

    scratch = SymbolicModel()
    for c in constructors:
        if c.name in scratch.constructors or c.name in heads:
            raise ParseError(f"duplicate symbol {c.name}")
        scratch.constructors[c.name] = c
    scratch.destructors.update(heads)

    rules: list[DestructorRule] = []
    for f, (s, e) in clauses:
        sub = _Parser(toks[s:e] + [Token("eof", "", toks[min(e, len(toks) - 1)].pos)],
                      "statverif", scratch, {}, set())
        lhs_term = sub.parse_term(_Scope(), rule_ctx=True)
        sub.eat("=")
        rhs = sub.parse_term(_Scope(), rule_ctx=True)
        if sub.peek().kind != "eof":
            raise ParseError(f"unexpected {sub.peek().text!r} in rule", sub.peek().pos)
        if lhs_term.fn != f:
            raise ParseError(f"clause head mismatch for {f.name}", toks[s].pos)
        rules.append(DestructorRule(f, lhs_term.args, rhs))

    try:
        return make_model(constructors, list(heads.values()), rules, mode=mode)
    except ModelError as err:
        raise ParseError(str(err)) from err


# ---------------------------------------------------------------------------
# StatVerif script parser


def parse_statverif(text: str) -> ParsedScript:
    toks = tokenize(text)
    constructors: list[FuncSymbol] = []
    rule_ranges: list[tuple[int, int]] = []
    free_names: set[str] = set()
    queries: list[str] = []
    macros: dict[str, tuple[int, int]] = {}
    main_range: Optional[tuple[int, int]] = None
    i = 0

    def until_dot(j: int) -> int:
        depth = 0
        while toks[j].kind != "eof":
            t = toks[j]
            depth = _balance_step(t, depth)
            if t.kind == "sym" and t.text == "." and depth == 0:
                return j
            j += 1
        raise ParseError("missing '.'", toks[j].pos)

    while toks[i].kind != "eof":
        t = toks[i]
        if t.text == "fun" and t.kind == "ident":
            if toks[i + 1].kind != "ident" or toks[i + 2].text != "/" or toks[i + 3].kind != "int":
                raise ParseError("expected fun name/arity", t.pos)
            constructors.append(FuncSymbol(toks[i + 1].text, int(toks[i + 3].text), CONSTRUCTOR))
            i += 4
            if toks[i].text == ".":
                i += 1
            continue
        if t.text == "free" and t.kind == "ident":
            j = until_dot(i + 1)
            free_names.update(tok.text for tok in toks[i + 1:j] if tok.kind == "ident")
            i = j + 1
            continue
        if t.text == "reduc" and t.kind == "ident":
            j = until_dot(i + 1)
            rule_ranges.append((i + 1, j))
            i = j + 1
            continue
        if t.text == "query" and t.kind == "ident":
            j = until_dot(i + 1)
            queries.append(" ".join(tok.text for tok in toks[i + 1:j]))
            i = j + 1
            continue
        if t.text == "let" and toks[i + 1].kind == "ident" and toks[i + 2].text == "=":
            j = until_dot(i + 3)
            macros[toks[i + 1].text] = (i + 3, j)
            i = j + 1
            continue
        if t.text == "process" and t.kind == "ident":
            main_range = (i + 1, len(toks) - 1)
            break
        raise ParseError(f"unexpected {t.text!r} at top level", t.pos)

    if main_range is None:
        raise ParseError("script has no process", toks[-1].pos)

    model = _build_model_from_clauses(toks, constructors, rule_ranges, mode="statverif")
    p = _Parser(toks, "statverif", model, macros, free_names)
    p.i = main_range[0]
    proc = p.parse_parallel(_Scope())
    tok = p.peek()
    if tok.kind != "eof" and tok.text != ".":
        raise ParseError(f"unexpected {tok.text!r} after process", tok.pos)
    return ParsedScript("statverif", model, proc, tuple(sorted(free_names)),
                        tuple(queries), (), p.diagnostics, p.fact_linearity)


# ---------------------------------------------------------------------------
# SAPIC script parser


def _is_macro_def(toks: list[Token], j: int) -> bool:
    return (toks[j].text == "let" and toks[j + 1].kind == "ident"
            and toks[j + 1].text[0].isupper() and toks[j + 2].text == "=")


def parse_sapic(text: str) -> ParsedScript:
    toks = tokenize(text)
    i = 0
    if toks[0].text == "theory":
        i = 1
        while toks[i].kind != "eof" and toks[i].text != "begin":
            i += 1
        if toks[i].text != "begin":
            raise ParseError("theory without begin", toks[0].pos)
        i += 1

    def section_end(j: int) -> int:
        depth = 0
        while toks[j].kind != "eof":
            t = toks[j]
            depth = _balance_step(t, depth)
            if depth == 0 and t.kind == "ident":
                if t.text in ("functions", "equations", "free") and toks[j + 1].text == ":":
                    return j
                if t.text == "process" and toks[j + 1].text == ":":
                    return j
                if t.text in ("lemma", "end"):
                    return j
                if _is_macro_def(toks, j):
                    return j
            j += 1
        return j

    fun_decls: list[tuple[str, int, Pos]] = []
    eq_ranges: list[tuple[int, int]] = []
    free_names: set[str] = set()
    macros: dict[str, tuple[int, int]] = {}
    lemmas: list[str] = []
    main_range: Optional[tuple[int, int]] = None

    while toks[i].kind != "eof":
        t = toks[i]
        if t.text == "end" and t.kind == "ident":
            break
        if t.text == "functions" and toks[i + 1].text == ":":
            j = section_end(i + 2)
            k = i + 2
            while k < j:
                if toks[k].kind == "ident" and toks[k + 1].text == "/" and toks[k + 2].kind == "int":
                    fun_decls.append((toks[k].text, int(toks[k + 2].text), toks[k].pos))
                    k += 3
                elif toks[k].text == ",":
                    k += 1
                else:
                    raise ParseError(f"bad functions entry {toks[k].text!r}", toks[k].pos)
            i = j
            continue
        if t.text == "equations" and toks[i + 1].text == ":":
            j = section_end(i + 2)
            eq_ranges.append((i + 2, j))
            i = j
            continue
        if t.text == "free" and toks[i + 1].text == ":":
            j = section_end(i + 2)
            free_names.update(tok.text for tok in toks[i + 2:j] if tok.kind == "ident")
            i = j
            continue
        if _is_macro_def(toks, i):
            j = section_end(i + 3)
            macros[toks[i + 1].text] = (i + 3, j)
            i = j
            continue
        if t.text == "lemma":
            j = section_end(i + 1)
            lemmas.append(" ".join(tok.text for tok in toks[i + 1:j]))
            i = j
            continue
        if t.text == "process" and toks[i + 1].text == ":":
            j = section_end(i + 2)
            if main_range is not None:
                raise ParseError("multiple process sections", t.pos)
            main_range = (i + 2, j)
            i = j
            continue
        raise ParseError(f"unexpected {t.text!r} at top level (the main process "
                         f"needs a 'process:' section)", t.pos)

    if main_range is None:
        raise ParseError("script has no process", toks[-1].pos)

    head_names: set[str] = set()
    for rng in eq_ranges:
        for s, _e in _split_clauses(toks, *rng):
            if toks[s].kind == "ident":
                head_names.add(toks[s].text)
    constructors = [FuncSymbol(n, a, CONSTRUCTOR) for n, a, _ in fun_decls if n not in head_names]
    model = _build_model_from_clauses(toks, constructors, eq_ranges, mode="sapic")
    for n, a, pos in fun_decls:
        if n in head_names:
            declared = model.destructors.get(n)
            if declared is None or declared.arity != a:
                raise ParseError(f"declaration {n}/{a} does not match its equations", pos)

    p = _Parser(toks, "sapic", model, macros, free_names)
    p.i = main_range[0]
    proc = p.parse_parallel(_Scope())
    if p.i < main_range[1]:
        raise ParseError(f"unexpected {p.peek().text!r} after process", p.peek().pos)
    return ParsedScript("sapic", model, proc, tuple(sorted(free_names)),
                        (), tuple(lemmas), p.diagnostics, p.fact_linearity)


def parse_script(text: str, dialect: str) -> ParsedScript:
    if dialect == "sapic":
        return parse_sapic(text)
    if dialect == "statverif":
        return parse_statverif(text)
    raise ParseError(f"unknown dialect {dialect!r}")
