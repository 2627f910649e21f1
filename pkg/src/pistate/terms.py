"""Term algebra: constructors, destructors, nonces, and destructor evaluation.

Terms are interned: the factory functions (var, pname, nonce_term, app) return
a shared object per distinct term, so equality is identity and terms can sit in
sets and dicts with O(1) membership. All values are immutable after creation;
the intern table is guarded by a lock so factories can be called from any thread.

Equality between ground terms is realized purely by oriented destructor rules
plus syntactic comparison: `terms_equal` asks the `equal` destructor, whose only
rule is equal(x, x) = x, so on interned ground terms it coincides with identity.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional


class UsageError(Exception):
    """An operation was called outside its contract (arity mismatch, unbound variable)."""


class ModelError(Exception):
    """A symbolic model is ill-formed (bad rule shape, overlapping rules, duplicate symbol)."""


CONSTRUCTOR = "constructor"
DESTRUCTOR = "destructor"

PROTOCOL = "protocol"
ADVERSARY = "adversary"


@dataclass(frozen=True)
class FuncSymbol:
    name: str
    arity: int
    kind: str  # CONSTRUCTOR or DESTRUCTOR

    def __str__(self) -> str:
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True)
class Nonce:
    id: int
    sort: str  # PROTOCOL or ADVERSARY
    label: str = "n"

    def __str__(self) -> str:
        return f"{self.label}.{self.id}"


class NonceFactory:
    """Issues nonces with ids unique within this factory.

    Engines own a factory per run so that nonce ids (and therefore printed
    traces) are deterministic for a fixed action sequence.
    """

    def __init__(self, start: int = 0) -> None:
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def fresh(self, sort: str, label: str = "n") -> Nonce:
        if sort not in (PROTOCOL, ADVERSARY):
            raise UsageError(f"unknown nonce sort {sort!r}")
        with self._lock:
            return Nonce(next(self._counter), sort, label)


_default_factory = NonceFactory()


def fresh_nonce(sort: str, label: str = "n") -> Nonce:
    """Library-level fresh nonce; ids are unique within the process lifetime."""
    return _default_factory.fresh(sort, label)


# Term kinds.
VAR = "var"
NAME = "name"
NONCE = "nonce"
APP = "app"


class Term:
    """Interned term node. Construct only through var/pname/nonce_term/app."""

    __slots__ = ("kind", "name", "nonce", "fn", "args")

    kind: str
    name: Optional[str]
    nonce: Optional[Nonce]
    fn: Optional[FuncSymbol]
    args: tuple["Term", ...]

    def __repr__(self) -> str:
        return pretty_term(self)

    # Identity equality/hash (object defaults) are correct because of interning.


_intern_lock = threading.Lock()
_intern: dict[tuple, Term] = {}


def _mk(key: tuple, kind: str, name=None, nonce=None, fn=None, args=()) -> Term:
    with _intern_lock:
        t = _intern.get(key)
        if t is None:
            t = Term.__new__(Term)
            t.kind = kind
            t.name = name
            t.nonce = nonce
            t.fn = fn
            t.args = args
            _intern[key] = t
        return t


def var(name: str) -> Term:
    return _mk((VAR, name), VAR, name=name)


def pname(name: str) -> Term:
    """A pi-calculus name leaf; only appears in process ASTs, never at runtime."""
    return _mk((NAME, name), NAME, name=name)


def nonce_term(n: Nonce) -> Term:
    return _mk((NONCE, n), NONCE, nonce=n)


def app(fn: FuncSymbol, args: list[Term] | tuple[Term, ...]) -> Term:
    args = tuple(args)
    if len(args) != fn.arity:
        raise UsageError(f"{fn} applied to {len(args)} arguments")
    return _mk((APP, fn, args), APP, fn=fn, args=args)


def is_ground(t: Term) -> bool:
    """No variables and no unresolved pi-names."""
    if t.kind in (VAR, NAME):
        return False
    if t.kind == APP:
        return all(is_ground(a) for a in t.args)
    return True


def is_constructor_term(t: Term) -> bool:
    """Destructor-free (a message, not a destructor term)."""
    if t.kind == APP:
        return t.fn.kind == CONSTRUCTOR and all(is_constructor_term(a) for a in t.args)
    return True


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if t.kind == APP:
        for a in t.args:
            yield from subterms(a)


def term_size(t: Term) -> int:
    return 1 + sum(term_size(a) for a in t.args) if t.kind == APP else 1


def term_depth(t: Term) -> int:
    if t.kind == APP and t.args:
        return 1 + max(term_depth(a) for a in t.args)
    return 1


def term_vars(t: Term) -> set[str]:
    if t.kind == VAR:
        return {t.name}
    if t.kind == APP:
        out: set[str] = set()
        for a in t.args:
            out |= term_vars(a)
        return out
    return set()


def term_names(t: Term) -> set[str]:
    if t.kind == NAME:
        return {t.name}
    if t.kind == APP:
        out: set[str] = set()
        for a in t.args:
            out |= term_names(a)
        return out
    return set()


def apply_subst(t: Term, env: dict[str, Term] | None = None,
                names: dict[str, Term] | None = None) -> Term:
    """Substitute variables via env and pi-names via names, bottom-up."""
    if t.kind == VAR:
        return env[t.name] if env and t.name in env else t
    if t.kind == NAME:
        return names[t.name] if names and t.name in names else t
    if t.kind == APP:
        new = tuple(apply_subst(a, env, names) for a in t.args)
        return t if new == t.args else app(t.fn, new)
    return t


def pretty_term(t: Term, quote_constants: bool = False) -> str:
    """Print a term in the surface syntax; nonces print as label.id."""
    if t.kind == VAR or t.kind == NAME:
        return t.name
    if t.kind == NONCE:
        return str(t.nonce)
    if not t.args:
        return f"'{t.fn.name}'" if quote_constants else t.fn.name
    inner = ", ".join(pretty_term(a, quote_constants) for a in t.args)
    return f"{t.fn.name}({inner})"


def term_sort_key(t: Term) -> tuple:
    """Deterministic ordering key for enumeration output."""
    return (term_depth(t), term_size(t), pretty_term(t))


# ---------------------------------------------------------------------------
# Destructor rules and pattern matching


@dataclass(frozen=True)
class DestructorRule:
    head: FuncSymbol
    lhs: tuple[Term, ...]
    rhs: Term

    def __str__(self) -> str:
        args = ", ".join(pretty_term(p) for p in self.lhs)
        return f"{self.head.name}({args}) = {pretty_term(self.rhs)}"


def match_pattern(pattern: Term, value: Term, subst: dict[str, Term]) -> bool:
    """Syntactic matching; non-linear patterns require identical bindings."""
    if pattern.kind == VAR:
        bound = subst.get(pattern.name)
        if bound is None:
            subst[pattern.name] = value
            return True
        return bound is value
    if pattern.kind == APP:
        if value.kind != APP or value.fn != pattern.fn:
            return False
        return all(match_pattern(p, v, subst) for p, v in zip(pattern.args, value.args))
    return pattern is value


def _rename_apart(t: Term, suffix: str) -> Term:
    if t.kind == VAR:
        return var(t.name + suffix)
    if t.kind == APP:
        return app(t.fn, tuple(_rename_apart(a, suffix) for a in t.args))
    return t


def _unifiable(ps: tuple[Term, ...], qs: tuple[Term, ...]) -> bool:
    """First-order syntactic unification of two pattern tuples (occurs check included)."""
    subst: dict[str, Term] = {}

    def walk(t: Term) -> Term:
        while t.kind == VAR and t.name in subst:
            t = subst[t.name]
        return t

    def occurs(name: str, t: Term) -> bool:
        t = walk(t)
        if t.kind == VAR:
            return t.name == name
        return t.kind == APP and any(occurs(name, a) for a in t.args)

    def unify(a: Term, b: Term) -> bool:
        a, b = walk(a), walk(b)
        if a is b:
            return True
        if a.kind == VAR:
            if occurs(a.name, b):
                return False
            subst[a.name] = b
            return True
        if b.kind == VAR:
            return unify(b, a)
        if a.kind == APP and b.kind == APP and a.fn == b.fn:
            return all(unify(x, y) for x, y in zip(a.args, b.args))
        return False

    return all(unify(p, q) for p, q in zip(ps, qs))


def _is_subterm_rule(rule: DestructorRule) -> bool:
    """rhs occurs inside the lhs tuple (the strictly subterm-convergent shape)."""
    if rule.rhs.kind == VAR:
        return True
    return any(rule.rhs in set(subterms(p)) for p in rule.lhs)


def _is_key_derivation_rule(rule: DestructorRule) -> bool:
    """rhs = C(x1..xk) over distinct lhs variables, lhs not all bare variables.

    The shape of the public-key derivation rules that must be filtered in SAPIC
    mode but stay active in StatVerif mode; keeps saturation finite.
    """
    r = rule.rhs
    if r.kind != APP or r.fn.kind != CONSTRUCTOR:
        return False
    if not all(a.kind == VAR for a in r.args):
        return False
    if len({a.name for a in r.args}) != len(r.args):
        return False
    return any(p.kind == APP for p in rule.lhs)


# ---------------------------------------------------------------------------
# Symbolic model


GrammarCheck = Callable[[FuncSymbol, tuple[Term, ...]], bool]


@dataclass
class SymbolicModel:
    """Constructors, destructors and oriented rules, with mode-dependent filtering.

    mode "sapic" deactivates rules that are not strictly subterm-convergent
    (the public-key derivation rules); mode "statverif" keeps them active.
    """

    constructors: dict[str, FuncSymbol] = field(default_factory=dict)
    destructors: dict[str, FuncSymbol] = field(default_factory=dict)
    rules: list[DestructorRule] = field(default_factory=list)
    mode: str = "statverif"
    strict_grammar: bool = False
    grammar: Optional[GrammarCheck] = None
    filtered_rules: list[DestructorRule] = field(default_factory=list)
    _by_head: dict[str, list[DestructorRule]] = field(default_factory=dict, repr=False)

    def active_rules(self, d: FuncSymbol) -> list[DestructorRule]:
        return self._by_head.get(d.name, [])

    def symbol(self, name: str) -> Optional[FuncSymbol]:
        return self.constructors.get(name) or self.destructors.get(name)

    def constant(self, name: str) -> Term:
        """Nullary public constructor, auto-registered on first use."""
        f = self.constructors.get(name)
        if f is None:
            if name in self.destructors:
                raise ModelError(f"{name} is a destructor, not a constant")
            f = FuncSymbol(name, 0, CONSTRUCTOR)
            self.constructors[name] = f
        elif f.arity != 0:
            raise ModelError(f"constant {name} clashes with {f}")
        return app(f, ())

    def grammar_ok(self, fn: FuncSymbol, args: tuple[Term, ...]) -> bool:
        if not self.strict_grammar or self.grammar is None:
            return True
        return self.grammar(fn, args)


EQUAL = FuncSymbol("equal", 2, DESTRUCTOR)
_EQUAL_RULE = None  # populated lazily; needs var()


def _equal_rule() -> DestructorRule:
    global _EQUAL_RULE
    if _EQUAL_RULE is None:
        x = var("x")
        _EQUAL_RULE = DestructorRule(EQUAL, (x, x), x)
    return _EQUAL_RULE


def make_model(constructors: list[FuncSymbol], destructors: list[FuncSymbol],
               rules: list[DestructorRule], mode: str = "statverif",
               strict_grammar: bool = False,
               grammar: Optional[GrammarCheck] = None) -> SymbolicModel:
    """Validate and assemble a model; always ensures the equal destructor exists."""
    if mode not in ("sapic", "statverif"):
        raise ModelError(f"unknown mode {mode!r}")
    m = SymbolicModel(mode=mode, strict_grammar=strict_grammar, grammar=grammar)
    for f in constructors:
        if f.kind != CONSTRUCTOR:
            raise ModelError(f"{f} declared as constructor with kind {f.kind}")
        if m.symbol(f.name):
            raise ModelError(f"duplicate symbol {f.name}")
        m.constructors[f.name] = f
    for d in destructors:
        if d.kind != DESTRUCTOR:
            raise ModelError(f"{d} declared as destructor with kind {d.kind}")
        if m.symbol(d.name):
            raise ModelError(f"duplicate symbol {d.name}")
        m.destructors[d.name] = d
    if "equal" not in m.destructors:
        m.destructors["equal"] = EQUAL
        rules = rules + [_equal_rule()]

    for r in rules:
        if m.destructors.get(r.head.name) != r.head:
            raise ModelError(f"rule head {r.head} is not a declared destructor")
        if len(r.lhs) != r.head.arity:
            raise ModelError(f"rule {r} has wrong arity for {r.head}")
        lhs_vars: set[str] = set()
        for p in r.lhs:
            _check_pattern_symbols(m, p)
            lhs_vars |= term_vars(p)
        _check_pattern_symbols(m, r.rhs)
        if not term_vars(r.rhs) <= lhs_vars:
            raise ModelError(f"rule {r}: rhs variables not bound by lhs")
        if not (_is_subterm_rule(r) or _is_key_derivation_rule(r)):
            raise ModelError(
                f"rule {r} is not subterm-convergent (and not a key-derivation shape); refused")

    for r in rules:
        group = m._by_head.setdefault(r.head.name, [])
        for other in group:
            renamed = tuple(_rename_apart(p, "#r") for p in other.lhs)
            if _unifiable(r.lhs, renamed):
                raise ModelError(f"overlapping rules for {r.head.name}: {other} vs {r}")
        group.append(r)
    m.rules = list(rules)

    if mode == "sapic":
        m.filtered_rules = [r for r in rules if not _is_subterm_rule(r)]
        for r in m.filtered_rules:
            m._by_head[r.head.name].remove(r)
    return m


def _check_pattern_symbols(m: SymbolicModel, t: Term) -> None:
    if t.kind == APP:
        if t.fn.kind != CONSTRUCTOR:
            raise ModelError(f"destructor {t.fn} nested inside a rule pattern")
        if m.constructors.get(t.fn.name) != t.fn:
            raise ModelError(f"rule uses undeclared constructor {t.fn}")
        for a in t.args:
            _check_pattern_symbols(m, a)


# ---------------------------------------------------------------------------
# Evaluation


def eval_destructor(model: SymbolicModel, d: FuncSymbol, args: list[Term] | tuple[Term, ...]) -> Optional[Term]:
    """Apply the unique matching rule; None encodes bottom."""
    if d.kind != DESTRUCTOR:
        raise UsageError(f"{d} is not a destructor")
    args = tuple(args)
    if len(args) != d.arity:
        raise UsageError(f"{d} applied to {len(args)} arguments")
    for a in args:
        if not is_ground(a):
            raise UsageError(f"eval_destructor on non-ground argument {a!r}")
    for rule in model.active_rules(d):
        subst: dict[str, Term] = {}
        if all(match_pattern(p, v, subst) for p, v in zip(rule.lhs, args)):
            return apply_subst(rule.rhs, subst)
    return None


def eval_term(model: SymbolicModel, t: Term) -> Optional[Term]:
    """Innermost-first evaluation of a ground destructor term; None is bottom.

    Constructor applications respect the message-type grammar when the model's
    strict flag is on: an ill-typed application evaluates to bottom, per the
    partial eval_F reading.
    """
    if t.kind == VAR:
        raise UsageError(f"unbound variable {t.name} in destructor term")
    if t.kind == NAME:
        raise UsageError(f"unresolved name {t.name} in destructor term")
    if t.kind != APP:
        return t
    evaluated = []
    for a in t.args:
        v = eval_term(model, a)
        if v is None:
            return None
        evaluated.append(v)
    if t.fn.kind == CONSTRUCTOR:
        if not model.grammar_ok(t.fn, tuple(evaluated)):
            return None
        return app(t.fn, evaluated)
    return eval_destructor(model, t.fn, evaluated)


def terms_equal(model: SymbolicModel, t: Term, u: Term) -> bool:
    """The equivalence induced by the equal destructor on ground messages."""
    return eval_destructor(model, model.destructors["equal"], (t, u)) is not None


# ---------------------------------------------------------------------------
# Built-in public-key encryption and signatures model


_PK_CONSTRUCTORS = [
    ("enc", 3), ("ek", 1), ("dk", 1), ("sig", 3), ("vk", 1), ("sk", 1),
    ("pair", 2), ("string0", 1), ("string1", 1), ("empty", 0),
    ("garbageSig", 2), ("garbage", 1), ("garbageEnc", 2),
]

_PK_DESTRUCTORS = [
    ("dec", 2), ("isenc", 1), ("isek", 1), ("isdk", 1), ("ekof", 1),
    ("ekofdk", 1), ("verify", 2), ("issig", 1), ("isvk", 1), ("issk", 1),
    ("vkof", 1), ("vkofsk", 1), ("fst", 1), ("snd", 1),
    ("unstring0", 1), ("unstring1", 1), ("equal", 2),
]


def _pk_grammar(fn: FuncSymbol, args: tuple[Term, ...]) -> bool:
    def is_nonce(t: Term) -> bool:
        return t.kind == NONCE

    def is_string(t: Term) -> bool:
        while t.kind == APP and t.fn.name in ("string0", "string1"):
            t = t.args[0]
        return t.kind == APP and t.fn.name == "empty"

    def headed(t: Term, name: str) -> bool:
        return t.kind == APP and t.fn.name == name

    n = fn.name
    if n == "enc":
        return headed(args[0], "ek") and is_nonce(args[2])
    if n == "sig":
        return headed(args[0], "sk") and is_nonce(args[2])
    if n in ("ek", "dk", "vk", "sk", "garbage"):
        return is_nonce(args[0])
    if n in ("garbageEnc", "garbageSig"):
        return is_nonce(args[1])
    if n in ("string0", "string1"):
        return is_string(args[0])
    # pair, empty, plus any auto-registered public constant.
    return True


def pkenc_sig_model(mode: str = "statverif", strict_grammar: bool = True) -> SymbolicModel:
    """The public-key-encryption-and-signatures algebra with its reduc rules."""
    cons = {n: FuncSymbol(n, a, CONSTRUCTOR) for n, a in _PK_CONSTRUCTORS}
    dest = {n: FuncSymbol(n, a, DESTRUCTOR) for n, a in _PK_DESTRUCTORS}
    t1, t2, t3, m_, s_, x_, y_ = (var(v) for v in ("t1", "t2", "t3", "m", "s", "x", "y"))

    def c(name: str, *args: Term) -> Term:
        return app(cons[name], args)

    rules = [
        DestructorRule(dest["dec"], (c("dk", t1), c("enc", c("ek", t1), m_, t2)), m_),
        DestructorRule(dest["isek"], (c("ek", t1),), c("ek", t1)),
        DestructorRule(dest["isenc"], (c("enc", c("ek", t1), t2, t3),), c("enc", c("ek", t1), t2, t3)),
        DestructorRule(dest["isenc"], (c("garbageEnc", c("ek", t1), t2),), c("garbageEnc", c("ek", t1), t2)),
        DestructorRule(dest["fst"], (c("pair", x_, y_),), x_),
        DestructorRule(dest["snd"], (c("pair", x_, y_),), y_),
        DestructorRule(dest["ekof"], (c("enc", c("ek", t1), m_, t2),), c("ek", t1)),
        DestructorRule(dest["ekof"], (c("garbageEnc", t1, t2),), t1),
        DestructorRule(dest["equal"], (x_, x_), x_),
        DestructorRule(dest["verify"], (c("vk", t1), c("sig", c("sk", t1), t2, t3)), t2),
        DestructorRule(dest["issig"], (c("sig", c("sk", t1), t2, t3),), c("sig", c("sk", t1), t2, t3)),
        DestructorRule(dest["issig"], (c("garbageSig", t1, t2),), c("garbageSig", t1, t2)),
        DestructorRule(dest["vkof"], (c("sig", c("sk", t1), t2, t3),), c("vk", t1)),
        DestructorRule(dest["vkof"], (c("garbageSig", t1, t2),), t1),
        DestructorRule(dest["isvk"], (c("vk", t1),), c("vk", t1)),
        DestructorRule(dest["unstring0"], (c("string0", s_),), s_),
        DestructorRule(dest["unstring1"], (c("string1", s_),), s_),
        DestructorRule(dest["isdk"], (c("dk", t1),), c("dk", t1)),
        DestructorRule(dest["ekofdk"], (c("dk", t1),), c("ek", t1)),
        DestructorRule(dest["issk"], (c("sk", t1),), c("sk", t1)),
        DestructorRule(dest["vkofsk"], (c("sk", t1),), c("vk", t1)),
    ]
    return make_model(list(cons.values()), list(dest.values()), rules,
                      mode=mode, strict_grammar=strict_grammar, grammar=_pk_grammar)
