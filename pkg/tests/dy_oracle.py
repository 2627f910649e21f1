"""Independent derivability oracle used to cross-check the deduction engine.

Locality-based fixpoint with no recipes and no saturation ordering: the
derivable set is computed inside a finite universe (subterms of K and the
target, closed under raw destructor outputs, optionally padded with one layer
of constructor applications) by naive monotone iteration.
"""

from __future__ import annotations

import itertools

from pistate.terms import (
    ADVERSARY, APP, CONSTRUCTOR, NONCE, SymbolicModel, Term, app,
    eval_destructor, subterms,
)
from pistate.deduction import Knowledge


def _universe(model: SymbolicModel, know: Knowledge, t: Term,
              compose_layer: bool) -> set[Term]:
    uni: set[Term] = set()
    for e in know.entries:
        uni |= set(subterms(e))
    uni |= set(subterms(t))
    # Close the universe itself (not derivability) under destructor outputs so
    # key-derivation results like ek(n) are representable.
    changed = True
    while changed:
        changed = False
        members = list(uni)
        for d in model.destructors.values():
            if d.name == "equal":
                continue
            for combo in itertools.product(members, repeat=d.arity):
                out = eval_destructor(model, d, combo)
                if out is not None and out not in uni:
                    uni.add(out)
                    changed = True
    if compose_layer:
        members = list(uni)
        for c in model.constructors.values():
            if c.arity == 0 or c.arity > 2:
                continue
            for combo in itertools.product(members, repeat=c.arity):
                if model.grammar_ok(c, combo):
                    uni.add(app(c, combo))
    return uni


def oracle_derivable(model: SymbolicModel, know: Knowledge, t: Term,
                     compose_layer: bool = False) -> bool:
    uni = _universe(model, know, t, compose_layer)
    derived: set[Term] = set(know.entries)
    derived |= {u for u in uni if u.kind == NONCE and u.nonce.sort == ADVERSARY}
    changed = True
    while changed:
        changed = False
        members = list(derived)
        for d in model.destructors.values():
            if d.name == "equal":
                continue
            for combo in itertools.product(members, repeat=d.arity):
                out = eval_destructor(model, d, combo)
                if out is not None and out in uni and out not in derived:
                    derived.add(out)
                    changed = True
        for u in uni:
            if u in derived or u.kind != APP or u.fn.kind != CONSTRUCTOR:
                continue
            if all(a in derived for a in u.args) and model.grammar_ok(u.fn, u.args):
                derived.add(u)
                changed = True
    return t in derived
