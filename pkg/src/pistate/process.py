"""Process ASTs shared by the SAPIC and StatVerif dialects.

One node type per construct; the sv_* nodes belong to the StatVerif dialect,
insert/delete/lookup/lock/unlock/msr to SAPIC. Nodes are frozen dataclasses so
structural equality and hashing work across the encoder and the engines; parse
positions are carried but excluded from comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

from .terms import Term, apply_subst, pname, pretty_term, term_names, term_vars, var

Pos = Optional[tuple[int, int]]


@dataclass(frozen=True)
class Fact:
    symbol: str
    args: tuple[Term, ...]
    persistent: bool = False

    def __str__(self) -> str:
        bang = "!" if self.persistent else ""
        if not self.args:
            return f"{bang}{self.symbol}()"
        return f"{bang}{self.symbol}({', '.join(pretty_term(a) for a in self.args)})"


@dataclass(frozen=True)
class FactLike:
    """An event label: symbol with (possibly no) term arguments."""

    symbol: str
    args: tuple[Term, ...] = ()

    def __str__(self) -> str:
        if not self.args:
            return self.symbol
        return f"{self.symbol}({', '.join(pretty_term(a) for a in self.args)})"


@dataclass(frozen=True)
class Process:
    pos: Pos = field(default=None, kw_only=True, compare=False, repr=False)


@dataclass(frozen=True)
class Nil(Process):
    pass


@dataclass(frozen=True)
class Parallel(Process):
    left: Process
    right: Process


@dataclass(frozen=True)
class Repl(Process):
    body: Process


@dataclass(frozen=True)
class Restrict(Process):
    name: str
    body: Process


@dataclass(frozen=True)
class Out(Process):
    channel: Term
    payload: Term
    cont: Process


@dataclass(frozen=True)
class In(Process):
    channel: Term
    var: str
    cont: Process


@dataclass(frozen=True)
class Let(Process):
    var: str
    expr: Term  # destructor term
    then: Process
    els: Process


@dataclass(frozen=True)
class Event(Process):
    fact: FactLike
    cont: Process


@dataclass(frozen=True)
class Insert(Process):
    key: Term
    value: Term
    cont: Process


@dataclass(frozen=True)
class Delete(Process):
    key: Term
    cont: Process


@dataclass(frozen=True)
class Lookup(Process):
    key: Term
    var: str
    then: Process
    els: Process


@dataclass(frozen=True)
class Lock(Process):
    term: Term
    cont: Process


@dataclass(frozen=True)
class Unlock(Process):
    term: Term
    cont: Process


@dataclass(frozen=True)
class Msr(Process):
    lhs: tuple[Fact, ...]
    events: tuple[FactLike, ...]
    rhs: tuple[Fact, ...]
    cont: Process
    binds: frozenset[str] = frozenset()  # variables of lhs bound here, not by outer binders


@dataclass(frozen=True)
class SvInit(Process):
    cell: Term  # a name before execution, a nonce at runtime
    value: Term


@dataclass(frozen=True)
class SvAssign(Process):
    cell: Term
    value: Term
    cont: Process


@dataclass(frozen=True)
class SvRead(Process):
    cell: Term
    var: str
    cont: Process


@dataclass(frozen=True)
class SvLock(Process):
    cont: Process


@dataclass(frozen=True)
class SvUnlock(Process):
    cont: Process


SAPIC_ONLY = (Insert, Delete, Lookup, Lock, Unlock, Msr)
STATVERIF_ONLY = (SvInit, SvAssign, SvRead, SvLock, SvUnlock)


def children(p: Process) -> tuple[Process, ...]:
    if isinstance(p, Parallel):
        return (p.left, p.right)
    if isinstance(p, Repl):
        return (p.body,)
    if isinstance(p, Restrict):
        return (p.body,)
    if isinstance(p, (Let, Lookup)):
        return (p.then, p.els)
    if isinstance(p, (Out, In, Event, Insert, Delete, Lock, Unlock, Msr,
                      SvAssign, SvRead, SvLock, SvUnlock)):
        return (p.cont,)
    return ()


def walk(p: Process) -> Iterator[Process]:
    yield p
    for c in children(p):
        yield from walk(c)


def node_terms(p: Process) -> tuple[Term, ...]:
    """The terms appearing directly at this node (not in children)."""
    if isinstance(p, Out):
        return (p.channel, p.payload)
    if isinstance(p, In):
        return (p.channel,)
    if isinstance(p, Let):
        return (p.expr,)
    if isinstance(p, Event):
        return p.fact.args
    if isinstance(p, Insert):
        return (p.key, p.value)
    if isinstance(p, Delete):
        return (p.key,)
    if isinstance(p, (Lock, Unlock)):
        return (p.term,)
    if isinstance(p, Msr):
        out: list[Term] = []
        for f in p.lhs + p.rhs:
            out.extend(f.args)
        for e in p.events:
            out.extend(e.args)
        return tuple(out)
    if isinstance(p, (SvInit, SvAssign)):
        return (p.cell, p.value)
    if isinstance(p, SvRead):
        return (p.cell,)
    return ()


def free_vars(p: Process) -> set[str]:
    if isinstance(p, In):
        return term_vars(p.channel) | (free_vars(p.cont) - {p.var})
    if isinstance(p, Let):
        return term_vars(p.expr) | (free_vars(p.then) - {p.var}) | free_vars(p.els)
    if isinstance(p, Lookup):
        return term_vars(p.key) | (free_vars(p.then) - {p.var}) | free_vars(p.els)
    if isinstance(p, SvRead):
        return free_vars(p.cont) - {p.var}
    if isinstance(p, Msr):
        own: set[str] = set()
        for t in node_terms(p):
            own |= term_vars(t)
        return (own | free_vars(p.cont)) - p.binds
    out: set[str] = set()
    for t in node_terms(p):
        out |= term_vars(t)
    for c in children(p):
        out |= free_vars(c)
    return out


def free_names(p: Process) -> set[str]:
    own: set[str] = set()
    for t in node_terms(p):
        own |= term_names(t)
    for c in children(p):
        own |= free_names(c)
    if isinstance(p, Restrict):
        own -= {p.name}
    return own


def is_closed(p: Process) -> bool:
    return not free_vars(p)


def _subst_node(p: Process, env: dict[str, Term], names: dict[str, Term]) -> Process:
    """Apply substitutions to this node's terms only (children untouched)."""

    def s(t: Term) -> Term:
        return apply_subst(t, env, names)

    if isinstance(p, Out):
        return replace(p, channel=s(p.channel), payload=s(p.payload))
    if isinstance(p, In):
        return replace(p, channel=s(p.channel))
    if isinstance(p, Let):
        return replace(p, expr=s(p.expr))
    if isinstance(p, Event):
        return replace(p, fact=FactLike(p.fact.symbol, tuple(s(a) for a in p.fact.args)))
    if isinstance(p, Insert):
        return replace(p, key=s(p.key), value=s(p.value))
    if isinstance(p, Delete):
        return replace(p, key=s(p.key))
    if isinstance(p, (Lock, Unlock)):
        return replace(p, term=s(p.term))
    if isinstance(p, Msr):
        return replace(
            p,
            lhs=tuple(Fact(f.symbol, tuple(s(a) for a in f.args), f.persistent) for f in p.lhs),
            events=tuple(FactLike(e.symbol, tuple(s(a) for a in e.args)) for e in p.events),
            rhs=tuple(Fact(f.symbol, tuple(s(a) for a in f.args), f.persistent) for f in p.rhs),
        )
    if isinstance(p, (SvInit, SvAssign)):
        return replace(p, cell=s(p.cell), value=s(p.value))
    if isinstance(p, SvRead):
        return replace(p, cell=s(p.cell))
    return p


def substitute(p: Process, env: dict[str, Term] | None = None,
               names: dict[str, Term] | None = None) -> Process:
    """Capture-naive substitution; callers must have distinct binders (alpha_rename)."""
    env = env or {}
    names = names or {}
    p = _subst_node(p, env, names)
    if isinstance(p, Parallel):
        return replace(p, left=substitute(p.left, env, names), right=substitute(p.right, env, names))
    if isinstance(p, Repl):
        return replace(p, body=substitute(p.body, env, names))
    if isinstance(p, Restrict):
        return replace(p, body=substitute(p.body, env, names))
    if isinstance(p, (Let, Lookup)):
        return replace(p, then=substitute(p.then, env, names), els=substitute(p.els, env, names))
    if isinstance(p, (Out, In, Event, Insert, Delete, Lock, Unlock, Msr,
                      SvAssign, SvRead, SvLock, SvUnlock)):
        return replace(p, cont=substitute(p.cont, env, names))
    return p


class _Renamer:
    def __init__(self, used: set[str]) -> None:
        self.used = set(used)

    def fresh(self, base: str) -> str:
        if base not in self.used:
            self.used.add(base)
            return base
        i = 1
        while f"{base}_{i}" in self.used:
            i += 1
        name = f"{base}_{i}"
        self.used.add(name)
        return name


def alpha_rename(p: Process) -> Process:
    """Rename binders so all bound names/variables are pairwise distinct and
    distinct from free ones. Free names and variables are untouched."""
    used = free_vars(p) | free_names(p)
    r = _Renamer(used)

    def go(q: Process, env: dict[str, Term], names: dict[str, Term]) -> Process:
        q = _subst_node(q, env, names)
        if isinstance(q, Restrict):
            new = r.fresh(q.name)
            names2 = {**names, q.name: pname(new)} if new != q.name else names
            return replace(q, name=new, body=go(q.body, env, names2))
        if isinstance(q, In):
            new = r.fresh(q.var)
            env2 = {**env, q.var: var(new)} if new != q.var else env
            return replace(q, var=new, cont=go(q.cont, env2, names))
        if isinstance(q, (Let, Lookup)):
            new = r.fresh(q.var)
            env2 = {**env, q.var: var(new)} if new != q.var else env
            return replace(q, var=new, then=go(q.then, env2, names), els=go(q.els, env, names))
        if isinstance(q, SvRead):
            new = r.fresh(q.var)
            env2 = {**env, q.var: var(new)} if new != q.var else env
            return replace(q, var=new, cont=go(q.cont, env2, names))
        if isinstance(q, Msr):
            env2 = dict(env)
            mapping: dict[str, str] = {}
            for v in sorted(q.binds):
                new = r.fresh(v)
                mapping[v] = new
                if new != v:
                    env2[v] = var(new)
            q2 = _subst_node(q, env2, names) if mapping else q
            return replace(q2, binds=frozenset(mapping.values()),
                           cont=go(q.cont, env2, names))
        if isinstance(q, Parallel):
            return replace(q, left=go(q.left, env, names), right=go(q.right, env, names))
        if isinstance(q, Repl):
            return replace(q, body=go(q.body, env, names))
        if isinstance(q, (Out, Event, Insert, Delete, Lock, Unlock,
                          SvAssign, SvLock, SvUnlock)):
            return replace(q, cont=go(q.cont, env, names))
        return q

    return go(p, {}, {})


def rename_binders(p: Process, suffix: str) -> Process:
    """Unfold-time renaming for replication: every binder gets the suffix."""

    def go(q: Process, env: dict[str, Term], names: dict[str, Term]) -> Process:
        q = _subst_node(q, env, names)
        if isinstance(q, Restrict):
            new = q.name + suffix
            return replace(q, name=new, body=go(q.body, env, {**names, q.name: pname(new)}))
        if isinstance(q, In):
            new = q.var + suffix
            return replace(q, var=new, cont=go(q.cont, {**env, q.var: var(new)}, names))
        if isinstance(q, (Let, Lookup)):
            new = q.var + suffix
            return replace(q, var=new, then=go(q.then, {**env, q.var: var(new)}, names),
                           els=go(q.els, env, names))
        if isinstance(q, SvRead):
            new = q.var + suffix
            return replace(q, var=new, cont=go(q.cont, {**env, q.var: var(new)}, names))
        if isinstance(q, Msr):
            env2 = dict(env)
            newbinds = []
            for v in sorted(q.binds):
                env2[v] = var(v + suffix)
                newbinds.append(v + suffix)
            q2 = _subst_node(q, env2, names)
            return replace(q2, binds=frozenset(newbinds), cont=go(q.cont, env2, names))
        if isinstance(q, Parallel):
            return replace(q, left=go(q.left, env, names), right=go(q.right, env, names))
        if isinstance(q, Repl):
            return replace(q, body=go(q.body, env, names))
        if isinstance(q, (Out, Event, Insert, Delete, Lock, Unlock,
                          SvAssign, SvLock, SvUnlock)):
            return replace(q, cont=go(q.cont, env, names))
        return q

    return go(p, {}, {})


# ---------------------------------------------------------------------------
# Pretty-printing (both dialects)


DEFAULT_CHANNEL = "c"


def _pt(t: Term, sapic: bool) -> str:
    return pretty_term(t, quote_constants=sapic)


def _is_default_channel(t: Term) -> bool:
    from .terms import APP
    return t.kind == APP and t.fn.arity == 0 and t.fn.name == DEFAULT_CHANNEL


def _captures_else(p: Process) -> bool:
    """Would a following 'else' token attach inside p when printed?"""
    if isinstance(p, (Let, Lookup)):
        return True if isinstance(p.els, Nil) else _captures_else(p.els)
    if isinstance(p, (Out, In, Event, Insert, Delete, Lock, Unlock, Msr,
                      SvAssign, SvRead, SvLock, SvUnlock)):
        return _captures_else(p.cont)
    if isinstance(p, Restrict):
        return _captures_else(p.body)
    return False


def pretty_process(p: Process, dialect: str = "sapic") -> str:
    sapic = dialect == "sapic"

    def atom(q: Process) -> str:
        s = pp(q)
        if isinstance(q, (Nil, SvInit)):
            return s
        return f"({s})"

    def branch_then(q: Process, has_else: bool) -> str:
        s = pp(q)
        if has_else and _captures_else(q):
            return f"({s})"
        return s

    def cont(q: Process) -> str:
        return "" if isinstance(q, Nil) else f"; {pp(q)}"

    def pp(q: Process) -> str:
        if isinstance(q, Nil):
            return "0"
        if isinstance(q, Parallel):
            parts = []
            stack = [q]
            while stack:
                node = stack.pop()
                if isinstance(node, Parallel):
                    stack.append(node.right)
                    stack.append(node.left)
                else:
                    parts.append(node)
            sep = " || " if sapic else " | "
            return sep.join(pp(x) if isinstance(x, (Nil, SvInit)) else atom(x)
                            for x in parts)
        if isinstance(q, Repl):
            return f"!{atom(q.body)}"
        if isinstance(q, Restrict):
            return f"new {q.name}{cont(q.body)}"
        if isinstance(q, Out):
            if sapic and _is_default_channel(q.channel):
                return f"out({_pt(q.payload, sapic)}){cont(q.cont)}"
            return f"out({_pt(q.channel, sapic)}, {_pt(q.payload, sapic)}){cont(q.cont)}"
        if isinstance(q, In):
            if sapic and _is_default_channel(q.channel):
                return f"in({q.var}){cont(q.cont)}"
            return f"in({_pt(q.channel, sapic)}, {q.var}){cont(q.cont)}"
        if isinstance(q, Let):
            has_else = not isinstance(q.els, Nil)
            s = f"let {q.var} = {_pt(q.expr, sapic)} in {branch_then(q.then, has_else)}"
            if has_else:
                s += f" else {pp(q.els)}"
            return s
        if isinstance(q, Event):
            lbl = q.fact.symbol
            if q.fact.args:
                lbl += f"({', '.join(_pt(a, sapic) for a in q.fact.args)})"
            return f"event {lbl}{cont(q.cont)}"
        if isinstance(q, Insert):
            return f"insert {_pt(q.key, sapic)}, {_pt(q.value, sapic)}{cont(q.cont)}"
        if isinstance(q, Delete):
            return f"delete {_pt(q.key, sapic)}{cont(q.cont)}"
        if isinstance(q, Lookup):
            has_else = not isinstance(q.els, Nil)
            s = f"lookup {_pt(q.key, sapic)} as {q.var} in {branch_then(q.then, has_else)}"
            if has_else:
                s += f" else {pp(q.els)}"
            return s
        if isinstance(q, Lock):
            return f"lock {_pt(q.term, sapic)}{cont(q.cont)}"
        if isinstance(q, Unlock):
            return f"unlock {_pt(q.term, sapic)}{cont(q.cont)}"
        if isinstance(q, Msr):
            def facts(fs):
                return ", ".join(str(f) for f in fs)
            evs = ", ".join(str(e) for e in q.events)
            return f"[{facts(q.lhs)}] -[{evs}]-> [{facts(q.rhs)}]{cont(q.cont)}"
        if isinstance(q, SvInit):
            return f"[{_pt(q.cell, sapic)} |-> {_pt(q.value, sapic)}]"
        if isinstance(q, SvAssign):
            return f"{_pt(q.cell, sapic)} := {_pt(q.value, sapic)}{cont(q.cont)}"
        if isinstance(q, SvRead):
            return f"read {_pt(q.cell, sapic)} as {q.var}{cont(q.cont)}"
        if isinstance(q, SvLock):
            return f"lock{cont(q.cont)}"
        if isinstance(q, SvUnlock):
            return f"unlock{cont(q.cont)}"
        raise TypeError(f"unknown process node {q!r}")

    return pp(p)
