"""Dolev-Yao deduction: saturation, derivability decisions, recipe synthesis.

A recipe is a destructor term over handles x_1, x_2, ... (one per knowledge
entry, in order), adversary nonces, and public constructors. Evaluating a
recipe against the knowledge it was synthesized from never yields bottom.

The decision procedure is destructor saturation followed by a composition
check, which is complete for the rule shapes admitted by the terms module
(subterm rules plus key-derivation rules). Saturation terminates because every
rule application yields either a subterm of its arguments or one constructor
over such subterms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .terms import (
    ADVERSARY, APP, CONSTRUCTOR, NONCE, VAR, Nonce, SymbolicModel, Term,
    UsageError, app, eval_destructor, eval_term, is_constructor_term, is_ground,
    var,
)


def handle(i: int) -> Term:
    """The recipe variable addressing knowledge entry i (1-based)."""
    return var(f"x_{i}")


@dataclass(frozen=True)
class Knowledge:
    """Messages sent to the adversary so far, plus the restricted nonces."""

    entries: tuple[Term, ...] = ()
    restricted: frozenset[Nonce] = frozenset()

    def __post_init__(self) -> None:
        for t in self.entries:
            if not (is_ground(t) and is_constructor_term(t)):
                raise UsageError(f"knowledge entry {t!r} is not a ground message")

    def extended(self, t: Term) -> "Knowledge":
        return Knowledge(self.entries + (t,), self.restricted)

    def restrict(self, n: Nonce) -> "Knowledge":
        return Knowledge(self.entries, self.restricted | {n})

    def substitution(self) -> dict[str, Term]:
        return {f"x_{i}": t for i, t in enumerate(self.entries, start=1)}

    def __contains__(self, t: Term) -> bool:
        return t in self.entries


def recipe_eval(model: SymbolicModel, know: Knowledge, recipe: Term) -> Optional[Term]:
    """Evaluate a recipe against the knowledge; None is bottom."""
    subst = know.substitution()

    def fill(t: Term) -> Term:
        if t.kind == VAR:
            if t.name not in subst:
                raise UsageError(f"recipe handle {t.name} out of range")
            return subst[t.name]
        if t.kind == APP:
            return app(t.fn, tuple(fill(a) for a in t.args))
        return t

    return eval_term(model, fill(recipe))


def saturate(model: SymbolicModel, know: Knowledge) -> dict[Term, Term]:
    """Least fixed point of destructor application over the knowledge.

    Returns value -> recipe, insertion-ordered: entries first (handles, earlier
    indices win ties), then discoveries in round order, which makes recipes
    minimal-depth with ties broken by entry order. `equal` is skipped: its only
    rule returns its own argument, so it can never grow the set.
    """
    sat: dict[Term, Term] = {}
    for i, t in enumerate(know.entries, start=1):
        sat.setdefault(t, handle(i))
    dests = [d for name, d in model.destructors.items() if name != "equal"]
    changed = True
    while changed:
        changed = False
        values = list(sat.keys())
        for d in dests:
            rules = model.active_rules(d)
            if not rules:
                continue
            for combo in itertools.product(values, repeat=d.arity):
                out = eval_destructor(model, d, combo)
                if out is not None and out not in sat:
                    sat[out] = app(d, tuple(sat[v] for v in combo))
                    changed = True
    return sat


def derivable(model: SymbolicModel, know: Knowledge, t: Term) -> Optional[Term]:
    """Return a recipe witnessing K |- t, or None if t is not derivable."""
    if not (is_ground(t) and is_constructor_term(t)):
        raise UsageError(f"derivability target {t!r} is not a ground message")
    sat = saturate(model, know)
    memo: dict[Term, Optional[Term]] = {}

    def compose(u: Term) -> Optional[Term]:
        if u in memo:
            return memo[u]
        memo[u] = None  # cycle guard; composition recursion is on subterms anyway
        r = sat.get(u)
        if r is None:
            if u.kind == NONCE and u.nonce.sort == ADVERSARY:
                r = u
            elif u.kind == APP and u.fn.kind == CONSTRUCTOR and model.grammar_ok(u.fn, u.args):
                parts = [compose(a) for a in u.args]
                if all(p is not None for p in parts):
                    r = app(u.fn, tuple(parts))
        memo[u] = r
        return r

    return compose(t)


@dataclass
class DerivabilityCache:
    """Memoizes derivability decisions against a fixed knowledge."""

    model: SymbolicModel
    know: Knowledge
    _sat: Optional[dict[Term, Term]] = field(default=None, repr=False)
    _memo: dict[Term, Optional[Term]] = field(default_factory=dict, repr=False)

    def saturated(self) -> dict[Term, Term]:
        if self._sat is None:
            self._sat = saturate(self.model, self.know)
        return self._sat

    def recipe_for(self, t: Term) -> Optional[Term]:
        if t in self._memo:
            return self._memo[t]
        r = self.saturated().get(t)
        if r is None:
            if t.kind == NONCE and t.nonce.sort == ADVERSARY:
                r = t
            elif t.kind == APP and t.fn.kind == CONSTRUCTOR and self.model.grammar_ok(t.fn, t.args):
                parts = [self.recipe_for(a) for a in t.args]
                if all(p is not None for p in parts):
                    r = app(t.fn, tuple(parts))
        self._memo[t] = r
        return r

    def derivable(self, t: Term) -> bool:
        return self.recipe_for(t) is not None
