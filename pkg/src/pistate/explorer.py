"""Bounded Dolev-Yao adversary: exhaustive exploration up to bounds, verdicts.

Exploration branches over every enabled action; for adversary inputs it
branches over a payload candidate set derived from the saturated knowledge:

  * every saturated value (counted as recipe depth 1, like a handle),
  * up to max_new_adv_nonces fresh adversary nonces,
  * instances of the term shapes the process can actually distinguish --
    equality-test operands, destructor-rule patterns unified against each
    syntactic destructor application, state keys, lock tokens, and fact
    argument patterns -- nested up to max_recipe_depth, measured on the
    synthesized recipe (leaves are depth 1).

Payloads outside every tested shape are branch-equivalent to a fresh
adversary nonce, and adversary-composed payloads never extend what is
derivable from the knowledge (composition of derivables is derivable), so
pruning them preserves verdicts for the supported trace properties. Shape
demands are collected per syntactic application; deeply chained destructor
demands may require raising max_recipe_depth or bounds.exhaustive_recipes,
which switches to the full constructor closure (viable only for tiny models).

Exploration order is deterministic: actions in enabled order, payloads in
(depth, print) order, depth-first. Configurations are merged via a canonical
key over the resolved state; for the pair-derivability property the set of
raised-but-not-yet-derivable pairs is part of the key, so merging never hides
a violation.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Optional

from .deduction import DerivabilityCache, Knowledge
from .process import (
    Delete, Event, Fact, In, Insert, Let, Lock, Lookup, Msr, Out, Process,
    Repl, Restrict, SvAssign, SvInit, SvRead, Unlock, node_terms, substitute,
    walk,
)
from . import sapic
from . import statverif as sv
from .sapic import (
    Action, AdvInput, AdvOutput, Comm, SapicConfig, Schedule, Trace, TraceStep,
    enabled_actions, initial_config, step,
)
from .terms import (
    ADVERSARY, APP, DESTRUCTOR, NONCE, VAR, Nonce, SymbolicModel, Term,
    UsageError, app, apply_subst, nonce_term, pretty_term, subterms,
    term_depth, term_sort_key, term_vars, var,
)


@dataclass(frozen=True)
class Bounds:
    max_steps: int = 30
    max_repl_unfold: int = 2
    max_recipe_depth: int = 3
    max_new_adv_nonces: int = 1
    exhaustive_recipes: bool = False


@dataclass(frozen=True)
class PropertySpec:
    kind: str  # "absence" | "never_both_derivable" | "custom"
    symbol: str = ""
    predicate: Optional[Callable[[Trace], bool]] = None

    @staticmethod
    def absence(symbol: str) -> "PropertySpec":
        return PropertySpec("absence", symbol)

    @staticmethod
    def never_both_derivable(symbol: str) -> "PropertySpec":
        return PropertySpec("never_both_derivable", symbol)

    @staticmethod
    def custom(predicate: Callable[[Trace], bool]) -> "PropertySpec":
        return PropertySpec("custom", predicate=predicate)


@dataclass(frozen=True)
class Verdict:
    holds: bool
    witness: Optional[Trace] = None
    truncated: bool = False
    explored: int = 0

    @property
    def kind(self) -> str:
        return "holds-within-bounds" if self.holds else "violated"


# ---------------------------------------------------------------------------
# Payload shapes


_HOLE_PREFIX = "?h"


def _holes_of(t: Term) -> set[str]:
    return term_vars(t)


def _as_shape(t: Term, counter: itertools.count) -> Term:
    """Rename variables to hole names so shapes from different sites never clash."""
    mapping: dict[str, Term] = {}
    for v in sorted(term_vars(t)):
        mapping[v] = var(f"{_HOLE_PREFIX}{next(counter)}")
    return apply_subst(t, mapping)


def _demand_match(pattern: Term, arg: Term, binding: dict[str, Term],
                  demands: list[Term]) -> bool:
    """Directed match of a rule pattern against a process term; positions where
    the process term is opaque (a variable or a nested destructor application)
    demand the instantiated pattern."""
    opaque = arg.kind == VAR or (arg.kind == APP and arg.fn.kind == DESTRUCTOR)
    if opaque:
        if pattern.kind != VAR:
            demands.append(apply_subst(pattern, binding))
        return True
    if pattern.kind == VAR:
        prev = binding.get(pattern.name)
        if prev is None:
            binding[pattern.name] = arg
            return True
        return prev is arg
    if pattern.kind == APP and arg.kind == APP and pattern.fn == arg.fn:
        return all(_demand_match(p, a, binding, demands)
                   for p, a in zip(pattern.args, arg.args))
    return pattern is arg


def collect_payload_shapes(model: SymbolicModel, p0: Process) -> list[Term]:
    """Shape templates (terms with hole variables) worth sending as payloads."""
    counter = itertools.count()
    shapes: list[Term] = []
    seen: set[str] = set()

    def add(t: Term) -> None:
        if t.kind == VAR:
            return
        shape = _as_shape(t, counter)
        key = pretty_term(apply_subst(
            shape, {v: var("?") for v in term_vars(shape)}))
        if key not in seen:
            seen.add(key)
            shapes.append(shape)

    for node in walk(p0):
        terms = list(node_terms(node))
        if isinstance(node, (Insert, Lookup, Delete)):
            add(node.key if not isinstance(node, Lookup) else node.key)
        if isinstance(node, (Lock, Unlock)):
            add(node.term)
        if isinstance(node, (SvInit, SvAssign, SvRead)):
            add(node.cell)
        if isinstance(node, Msr):
            for f in node.lhs:
                for a in f.args:
                    add(a)
        for t in terms:
            for u in subterms(t):
                if u.kind != APP or u.fn.kind != DESTRUCTOR:
                    continue
                if u.fn.name == "equal":
                    add(u.args[0])
                    add(u.args[1])
                    continue
                for rule in model.active_rules(u.fn):
                    binding: dict[str, Term] = {}
                    demands: list[Term] = []
                    if all(_demand_match(p, a, binding, demands)
                           for p, a in zip(rule.lhs, u.args)):
                        for d in demands:
                            add(d)
    return shapes


def _recipe_depth(recipe: Term) -> int:
    if recipe.kind == APP and recipe.args:
        return 1 + max(_recipe_depth(a) for a in recipe.args)
    return 1


class PayloadEnumerator:
    """Enumerates candidate payload (value, recipe) pairs for one knowledge."""

    def __init__(self, model: SymbolicModel, shapes: list[Term], bounds: Bounds,
                 adv_pool: tuple[Term, ...]) -> None:
        self.model = model
        self.shapes = shapes
        self.bounds = bounds
        self.adv_pool = adv_pool[: bounds.max_new_adv_nonces]

    def candidates(self, cache: DerivabilityCache,
                   names: dict[str, Term]) -> list[tuple[Term, Term]]:
        maxd = self.bounds.max_recipe_depth
        values: dict[Term, Term] = {}  # value -> recipe

        def admit(value: Term) -> bool:
            if value in values:
                return False
            recipe = cache.recipe_for(value)
            if recipe is None or _recipe_depth(recipe) > maxd:
                return False
            values[value] = recipe
            return True

        for v in cache.saturated():
            admit(v)
        for n in self.adv_pool:
            admit(n)
        if self.bounds.exhaustive_recipes:
            self._exhaustive(cache, values, maxd)
        else:
            self._demanded(cache, names, values)
        out = sorted(values.items(), key=lambda kv: term_sort_key(kv[0]))
        return out

    def _demanded(self, cache: DerivabilityCache, names: dict[str, Term],
                  values: dict[Term, Term]) -> None:
        maxd = self.bounds.max_recipe_depth

        def admit(value: Term) -> bool:
            if value in values:
                return False
            recipe = cache.recipe_for(value)
            if recipe is None or _recipe_depth(recipe) > maxd:
                return False
            values[value] = recipe
            return True

        for _round in range(max(1, maxd)):
            fills = list(values.keys())
            added = False
            for shape in self.shapes:
                grounded = apply_subst(shape, names=names)
                holes = sorted(term_vars(grounded))
                if not holes:
                    if _is_message(grounded) and admit(grounded):
                        added = True
                    continue
                if len(fills) ** len(holes) > 200_000:
                    continue  # degenerate shape; exhaustive flag covers it
                for combo in itertools.product(fills, repeat=len(holes)):
                    inst = apply_subst(grounded, dict(zip(holes, combo)))
                    if _is_message(inst) and admit(inst):
                        added = True
            if not added:
                break

    def _exhaustive(self, cache: DerivabilityCache, values: dict[Term, Term],
                    maxd: int) -> None:
        def admit(value: Term) -> bool:
            if value in values:
                return False
            recipe = cache.recipe_for(value)
            if recipe is None or _recipe_depth(recipe) > maxd:
                return False
            values[value] = recipe
            return True

        changed = True
        while changed:
            changed = False
            fills = list(values.keys())
            for c in self.model.constructors.values():
                if c.arity == 0:
                    if admit(app(c, ())):
                        changed = True
                    continue
                for combo in itertools.product(fills, repeat=c.arity):
                    if self.model.grammar_ok(c, combo) and admit(app(c, combo)):
                        changed = True


def _is_message(t: Term) -> bool:
    if t.kind == VAR:
        return False
    if t.kind == APP:
        return t.fn.kind != DESTRUCTOR and all(_is_message(a) for a in t.args)
    return t.kind == NONCE or t.kind == APP


def adv_nonce_pool(count: int) -> tuple[Term, ...]:
    # ids far above any protocol nonce_seq so the two ranges never collide
    return tuple(nonce_term(Nonce(10_000_000 + i, ADVERSARY, "adv"))
                 for i in range(count))


# ---------------------------------------------------------------------------
# Successor generation and canonical state keys


def _resolved_procs(cfg: SapicConfig) -> tuple[Process, ...]:
    if not cfg.env and not cfg.names:
        return cfg.procs
    return tuple(substitute(p, cfg.env, cfg.names) for p in cfg.procs)


def config_key(cfg: SapicConfig, extra: tuple = ()) -> tuple:
    procs = _resolved_procs(cfg)
    return (
        frozenset(Counter(zip(procs, cfg.repl_budget)).items()),
        frozenset(cfg.cells),
        frozenset(Counter(cfg.msstate).items()),
        frozenset(cfg.locks),
        frozenset(cfg.know.entries),
        extra,
    )


def successors(model: SymbolicModel, cfg: SapicConfig, enum: PayloadEnumerator,
               greedy_match: bool = False) -> Iterator[tuple[Action, SapicConfig, TraceStep]]:
    cache = DerivabilityCache(model, cfg.know)
    for action in enabled_actions(model, cfg, greedy_match):
        if isinstance(action, AdvInput):
            for value, recipe in enum.candidates(cache, cfg.names):
                act = AdvInput(action.index, action.channel, recipe)
                try:
                    cfg2, ts = step(model, cfg, act, greedy_match)
                except UsageError:
                    continue
                yield act, cfg2, ts
        else:
            try:
                cfg2, ts = step(model, cfg, action, greedy_match)
            except UsageError:
                continue
            yield action, cfg2, ts


# ---------------------------------------------------------------------------
# Exploration


def explore(model: SymbolicModel, p0: Process, bounds: Bounds,
            greedy_match: bool = False) -> Iterator[Trace]:
    """Depth-first enumeration of maximal traces within bounds.

    A trace is yielded at every leaf: a configuration with no enabled actions,
    an exhausted step budget, or a configuration already visited on another
    path (recorded as truncated via the final marker step count).
    """
    enum = PayloadEnumerator(model, collect_payload_shapes(model, p0), bounds,
                             adv_nonce_pool(bounds.max_new_adv_nonces))
    cfg0 = initial_config(model, p0, default_repl_budget=bounds.max_repl_unfold)
    published = cfg0.know.entries
    visited: set[tuple] = set()

    def dfs(cfg: SapicConfig, depth: int) -> Iterator[Trace]:
        key = config_key(cfg)
        if key in visited:
            yield Trace(cfg.raised, published, truncated=True)
            return
        visited.add(key)
        if depth >= bounds.max_steps:
            yield Trace(cfg.raised, published, truncated=True)
            return
        extended = False
        for _act, cfg2, _ts in successors(model, cfg, enum, greedy_match):
            extended = True
            yield from dfs(cfg2, depth + 1)
        if not extended:
            yield Trace(cfg.raised, published)

    yield from dfs(cfg0, 0)


def check(model: SymbolicModel, p0: Process, bounds: Bounds, prop: PropertySpec,
          greedy_match: bool = False) -> Verdict:
    """Explore and decide the property; returns the first counterexample in
    deterministic depth-first order."""
    enum = PayloadEnumerator(model, collect_payload_shapes(model, p0), bounds,
                             adv_nonce_pool(bounds.max_new_adv_nonces))
    cfg0 = initial_config(model, p0, default_repl_budget=bounds.max_repl_unfold)
    published = cfg0.know.entries
    visited: set[tuple] = set()
    explored = 0
    truncated = False

    def trace_of(cfg: SapicConfig) -> Trace:
        return Trace(cfg.raised, published)

    def pending_pairs(cfg: SapicConfig) -> tuple[tuple[Term, Term], ...]:
        if prop.kind != "never_both_derivable":
            return ()
        pairs = []
        for ts in cfg.raised:
            for e in ts.events:
                if e.symbol == prop.symbol and len(e.args) == 2:
                    pairs.append((e.args[0], e.args[1]))
        return tuple(sorted(set(pairs), key=lambda p: (pretty_term(p[0]), pretty_term(p[1]))))

    def violated(cfg: SapicConfig, ts: Optional[TraceStep]) -> bool:
        if prop.kind == "absence":
            steps = cfg.raised if ts is None else (ts,)
            return any(e.symbol == prop.symbol for s in steps for e in s.events)
        if prop.kind == "never_both_derivable":
            pairs = pending_pairs(cfg)
            if not pairs:
                return False
            cache = DerivabilityCache(model, cfg.know)
            return any(cache.derivable(t1) and cache.derivable(t2) for t1, t2 in pairs)
        if prop.kind == "custom":
            return not prop.predicate(trace_of(cfg))
        raise UsageError(f"unknown property kind {prop.kind}")

    if violated(cfg0, None):
        return Verdict(False, trace_of(cfg0), False, 1)

    stack: list[SapicConfig] = [cfg0]
    depths: list[int] = [0]
    while stack:
        cfg = stack.pop()
        depth = depths.pop()
        key = config_key(cfg, pending_pairs(cfg))
        if key in visited:
            continue
        visited.add(key)
        explored += 1
        if depth >= bounds.max_steps:
            truncated = True
            continue
        succ = list(successors(model, cfg, enum, greedy_match))
        for act, cfg2, ts in succ:
            if violated(cfg2, ts):
                return Verdict(False, trace_of(cfg2), truncated, explored + 1)
        # push in reverse so the first successor is explored first
        for act, cfg2, ts in reversed(succ):
            stack.append(cfg2)
            depths.append(depth + 1)
    return Verdict(True, None, truncated, explored)


def check_secrecy_statverif(model: SymbolicModel, p0: Process, secret: Term,
                            bounds: Bounds) -> Verdict:
    """Lemma-style secrecy reduction: encode with the listener harness and
    check that the flag event stays absent."""
    harness = sv.secrecy_harness(model, p0, secret)
    return check(model, harness, bounds, PropertySpec.absence(sv.NOT_SECRET))


# ---------------------------------------------------------------------------
# Differential simulation between the direct interpreter and the encoding


@dataclass
class DiffReport:
    forward_unmatched: list[str] = field(default_factory=list)
    backward_unmatched: list[str] = field(default_factory=list)
    sv_configs: int = 0
    sapic_configs: int = 0

    @property
    def clean(self) -> bool:
        return not self.forward_unmatched and not self.backward_unmatched

    def summary(self) -> str:
        if self.clean:
            return (f"simulation ok: {self.sv_configs} direct configs vs "
                    f"{self.sapic_configs} encoded configs, no unmatched transitions")
        lines = [f"unmatched transitions: {len(self.forward_unmatched)} forward, "
                 f"{len(self.backward_unmatched)} backward"]
        lines += [f"  forward:  {s}" for s in self.forward_unmatched[:10]]
        lines += [f"  backward: {s}" for s in self.backward_unmatched[:10]]
        return "\n".join(lines)


def _sv_successors(model: SymbolicModel, cfg: sv.StatConfig, enum: PayloadEnumerator
                   ) -> Iterator[tuple[Action, sv.StatConfig, sv.SvLabel]]:
    cache = DerivabilityCache(model, cfg.know)
    for action in sv.sv_enabled_actions(model, cfg):
        if isinstance(action, AdvInput):
            for _value, recipe in enum.candidates(cache, {}):
                act = AdvInput(action.index, action.channel, recipe)
                try:
                    cfg2, lbl = sv.sv_step(model, cfg, act)
                except UsageError:
                    continue
                yield act, cfg2, lbl
        else:
            try:
                cfg2, lbl = sv.sv_step(model, cfg, action)
            except UsageError:
                continue
            yield action, cfg2, lbl


def _sapic_observable(ts: TraceStep) -> Optional[tuple]:
    if ts.kind == "event":
        if len(ts.events) == 1:
            e = ts.events[0]
            return ("event", e.symbol, e.args)
        return ("events", tuple((e.symbol, e.args) for e in ts.events))
    if ts.kind == "know":
        return ("K", ts.know)
    # adv_input payload values are matched via the state, not the label
    return None


def _sv_observable(lbl: sv.SvLabel) -> Optional[tuple]:
    if lbl.kind == "in":
        return None
    return lbl.observable()


def _enc_key(cfg: SapicConfig) -> tuple:
    return config_key(cfg) + (cfg.nonce_seq, cfg.unfold_seq)


def differential_statverif(model: SymbolicModel, p0: Process, bounds: Bounds,
                           config_cap: int = 200,
                           encode_override: Optional[Callable[[sv.StatConfig, Term], SapicConfig]] = None,
                           search_depth: int = 6) -> DiffReport:
    """Check mutual simulation of the direct semantics and its encoding.

    Forward: every direct transition O1 -> O2 must be matched by a path from
    encode(O1) to encode(O2) with the same observable. Backward: every single
    step from encode(O1) must be extendable by silent steps (<= search_depth)
    to the encoding of some direct successor (or of O1 itself).
    """
    report = DiffReport()
    p0 = sv.alpha_rename(p0)
    lock_token = sv._fresh_lock_token(model, p0)
    encode = encode_override or (lambda o, l: sv.encode_config(model, o, l))
    enum = PayloadEnumerator(model, collect_payload_shapes(model, p0), bounds,
                             adv_nonce_pool(bounds.max_new_adv_nonces))

    start = sv.sv_initial_config(model, p0, default_repl_budget=bounds.max_repl_unfold,
                                 rename=False)
    frontier = [start]
    seen: set[tuple] = set()
    sv_edges: list[tuple[sv.StatConfig, Action, sv.StatConfig, sv.SvLabel]] = []
    while frontier and len(seen) < config_cap:
        cfg = frontier.pop(0)
        key = _sv_key(cfg)
        if key in seen:
            continue
        seen.add(key)
        for act, cfg2, lbl in _sv_successors(model, cfg, enum):
            sv_edges.append((cfg, act, cfg2, lbl))
            frontier.append(cfg2)
    report.sv_configs = len(seen)

    sapic_seen: set[tuple] = set()

    def sapic_succs(c: SapicConfig):
        return list(successors(model, c, enum))

    # Forward simulation: search for a matching path of <= search_depth steps.
    for (o1, act, o2, lbl) in sv_edges:
        e1 = encode(o1, lock_token)
        target = _enc_key(encode(o2, lock_token))
        want = _sv_observable(lbl)
        if not _find_path(model, e1, target, want, search_depth, sapic_succs):
            report.forward_unmatched.append(
                f"{lbl.kind} step from direct config (action {act}) has no encoded match")

    # Backward simulation: every encoded step extends to some encoded direct config.
    for o1 in _sv_collect(model, start, enum, config_cap):
        e1 = encode(o1, lock_token)
        if _enc_key(e1) in sapic_seen:
            continue
        sapic_seen.add(_enc_key(e1))
        succs2 = [o2 for _a, o2, _l in _sv_successors(model, o1, enum)]
        reach = [o1] + succs2
        # include two direct steps: encoded sequences may span several sv steps
        for o2 in succs2:
            for _a, o3, _l in _sv_successors(model, o2, enum):
                reach.append(o3)
        target_keys = {_enc_key(encode(o, lock_token)) for o in reach}
        for act, c2, ts in sapic_succs(e1):
            if not _silent_reaches(model, c2, target_keys, search_depth, sapic_succs):
                report.backward_unmatched.append(
                    f"encoded step {act} from a direct config reaches no encoded "
                    f"direct configuration")
    report.sapic_configs = len(sapic_seen)
    return report


def _sv_key(cfg: sv.StatConfig) -> tuple:
    return (
        frozenset(Counter(zip(cfg.procs, cfg.repl_budget)).items()),
        frozenset(cfg.cells),
        frozenset(cfg.know.entries),
        cfg.nonce_seq,
        cfg.unfold_seq,
    )


def _sv_collect(model: SymbolicModel, start: sv.StatConfig, enum: PayloadEnumerator,
                cap: int) -> list[sv.StatConfig]:
    out: list[sv.StatConfig] = []
    seen: set[tuple] = set()
    frontier = [start]
    while frontier and len(out) < cap:
        cfg = frontier.pop(0)
        key = _sv_key(cfg)
        if key in seen:
            continue
        seen.add(key)
        out.append(cfg)
        for _a, cfg2, _l in _sv_successors(model, cfg, enum):
            frontier.append(cfg2)
    return out


def _find_path(model: SymbolicModel, start: SapicConfig, target: tuple,
               want: Optional[tuple], depth: int, succs) -> bool:
    """BFS for a path whose observable sequence is [want] (or [] if None)
    ending at the target key."""
    frontier: list[tuple[SapicConfig, bool]] = [(start, want is None)]
    seen: set[tuple] = set()
    for _ in range(depth + 1):
        nxt: list[tuple[SapicConfig, bool]] = []
        for cfg, done in frontier:
            key = _enc_key(cfg) + (done,)
            if key in seen:
                continue
            seen.add(key)
            if done and _enc_key(cfg) == target:
                return True
            for _a, cfg2, ts in succs(cfg):
                obs = _sapic_observable(ts)
                if obs is None:
                    nxt.append((cfg2, done))
                elif not done and obs == want:
                    nxt.append((cfg2, True))
        frontier = nxt
        if not frontier:
            break
    return False


def _silent_reaches(model: SymbolicModel, start: SapicConfig, targets: set[tuple],
                    depth: int, succs) -> bool:
    if _enc_key(start) in targets:
        return True
    frontier = [start]
    seen: set[tuple] = set()
    for _ in range(depth):
        nxt = []
        for cfg in frontier:
            key = _enc_key(cfg)
            if key in seen:
                continue
            seen.add(key)
            for _a, cfg2, ts in succs(cfg):
                if _sapic_observable(ts) is not None:
                    continue
                if _enc_key(cfg2) in targets:
                    return True
                nxt.append(cfg2)
        frontier = nxt
        if not frontier:
            break
    return False
