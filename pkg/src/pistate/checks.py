"""Static restrictions the dialects impose on parsed processes.

Each violation carries a short rule tag: input-pattern (inputs must bind a
variable), msr-free-var (free variables of a multiset construct's lhs may only
occur as direct fact arguments), msr-unbound-rhs (rhs/event variables must be
bound by the lhs), duplicate-init, init-context, cell-not-restricted,
par-under-lock, lock-under-lock, unbalanced-unlock, fact-linearity, dialect.
"""

from __future__ import annotations

from dataclasses import dataclass

from .parser import Diagnostic, ParsedScript
from .process import (
    Fact, In, Let, Lookup, Lock, Msr, Nil, Parallel, Process, Repl, Restrict,
    SAPIC_ONLY, STATVERIF_ONLY, SvAssign, SvInit, SvLock, SvRead, SvUnlock,
    Unlock, children, walk,
)
from .terms import NAME, VAR, term_vars


def _check_dialect_gate(p: Process, dialect: str, out: list[Diagnostic]) -> None:
    wrong = STATVERIF_ONLY if dialect == "sapic" else SAPIC_ONLY
    for node in walk(p):
        if isinstance(node, wrong):
            out.append(Diagnostic(
                "dialect", f"{type(node).__name__} construct is not part of the "
                f"{dialect} dialect", node.pos))


def _check_msr(p: Process, out: list[Diagnostic]) -> None:
    def go(q: Process, bound: set[str]) -> None:
        if isinstance(q, Msr):
            free = q.binds
            for fact in q.lhs:
                for arg in fact.args:
                    if arg.kind == VAR and arg.name in free:
                        continue
                    nested = term_vars(arg) & free
                    if nested:
                        out.append(Diagnostic(
                            "msr-free-var",
                            f"free variable(s) {sorted(nested)} of the lhs occur "
                            f"under a constructor in {fact}", q.pos))
            allowed = bound | free
            for fact in q.rhs:
                loose = set().union(*(term_vars(a) for a in fact.args)) - allowed \
                    if fact.args else set()
                if loose:
                    out.append(Diagnostic(
                        "msr-unbound-rhs",
                        f"rhs fact {fact} uses variable(s) {sorted(loose)} not bound "
                        f"by the lhs", q.pos))
            for ev in q.events:
                loose = set().union(*(term_vars(a) for a in ev.args)) - allowed \
                    if ev.args else set()
                if loose:
                    out.append(Diagnostic(
                        "msr-unbound-rhs",
                        f"event {ev} uses variable(s) {sorted(loose)} not bound "
                        f"by the lhs", q.pos))
            go(q.cont, bound | free)
            return
        if isinstance(q, In):
            go(q.cont, bound | {q.var})
            return
        if isinstance(q, (Let, Lookup)):
            go(q.then, bound | {q.var})
            go(q.els, bound)
            return
        if isinstance(q, SvRead):
            go(q.cont, bound | {q.var})
            return
        for c in children(q):
            go(c, bound)

    go(p, set())


def _check_statverif_state(p: Process, out: list[Diagnostic]) -> None:
    inits: dict[str, int] = {}
    for node in walk(p):
        if isinstance(node, SvInit):
            key = node.cell.name if node.cell.name else str(node.cell)
            inits[key] = inits.get(key, 0) + 1
    for cell, n in sorted(inits.items()):
        if n > 1:
            out.append(Diagnostic(
                "duplicate-init", f"cell {cell} is initialized {n} times"))

    def context(q: Process, clean: bool, restricted: set[str]) -> None:
        if isinstance(q, SvInit):
            if not clean:
                out.append(Diagnostic(
                    "init-context",
                    f"[{q.cell!r} |-> ...] may occur only under restriction, "
                    f"parallel, or replication", q.pos))
            if q.cell.kind == NAME and q.cell.name not in restricted:
                out.append(Diagnostic(
                    "cell-not-restricted",
                    f"cell {q.cell.name} is not bound by an enclosing restriction", q.pos))
            return
        if isinstance(q, Restrict):
            context(q.body, clean, restricted | {q.name})
            return
        if isinstance(q, (Parallel, Repl)):
            for c in children(q):
                context(c, clean, restricted)
            return
        for c in children(q):
            context(c, False, restricted)

    context(p, True, set())


def _check_lock_discipline(p: Process, out: list[Diagnostic]) -> None:
    def go(q: Process, locked: bool) -> None:
        if isinstance(q, SvLock):
            if locked:
                out.append(Diagnostic("lock-under-lock", "lock while already locked", q.pos))
            go(q.cont, True)
            return
        if isinstance(q, SvUnlock):
            if not locked:
                out.append(Diagnostic("unbalanced-unlock", "unlock without a lock", q.pos))
            go(q.cont, False)
            return
        if isinstance(q, (Parallel, Repl)) and locked:
            out.append(Diagnostic(
                "par-under-lock",
                "parallel or replication between lock and unlock", q.pos))
            for c in children(q):
                go(c, locked)
            return
        if isinstance(q, SvInit) and locked:
            out.append(Diagnostic(
                "par-under-lock", "cell initialization between lock and unlock", q.pos))
            return
        for c in children(q):
            go(c, locked)

    go(p, False)


def _check_fact_linearity(p: Process, out: list[Diagnostic]) -> None:
    seen: dict[str, bool] = {}
    for node in walk(p):
        if isinstance(node, Msr):
            for fact in node.lhs + node.rhs:
                prev = seen.get(fact.symbol)
                if prev is None:
                    seen[fact.symbol] = fact.persistent
                elif prev != fact.persistent:
                    out.append(Diagnostic(
                        "fact-linearity",
                        f"fact {fact.symbol} used both linear and persistent", node.pos))
                    seen[fact.symbol] = fact.persistent


def check_restrictions(p: Process, dialect: str) -> list[Diagnostic]:
    """All AST-level restriction checks for the given dialect; empty = clean."""
    out: list[Diagnostic] = []
    _check_dialect_gate(p, dialect, out)
    if dialect == "sapic":
        _check_msr(p, out)
        _check_fact_linearity(p, out)
    else:
        _check_statverif_state(p, out)
        _check_lock_discipline(p, out)
    return out


def check_script(parsed: ParsedScript) -> list[Diagnostic]:
    """Parser-collected violations (input patterns, linearity) plus AST checks."""
    return list(parsed.diagnostics) + check_restrictions(parsed.process, parsed.dialect)
