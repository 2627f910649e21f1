"""The SAPIC symbolic reduction machine.

Configurations are immutable values; `step` is a pure function of (config,
action), so runs are reproducible and branches can be explored independently.
Parallel compositions are split into the process multiset eagerly and nil
entries dropped, which matches the evaluation-context discipline: the
adversary schedules one multiset entry per step.

Replication entries carry an optional unfold budget (None = unbounded); the
engine enforces it so bounded exploration and scripted runs share semantics.
Process terms are evaluated against the per-config variable environment and
name interpretation; an evaluation that bottoms disables the action (this can
only happen under the strict message-type grammar or a destructor term in a
let, which has its own else edge).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

from .deduction import DerivabilityCache, Knowledge, recipe_eval
from .process import (
    Delete, Event, Fact, FactLike, In, Insert, Let, Lock, Lookup, Msr, Nil,
    Out, Parallel, Process, Repl, Restrict, Unlock, free_names, free_vars,
    pretty_process, rename_binders, alpha_rename,
)
from .terms import (
    PROTOCOL, VAR, Nonce, SymbolicModel, Term, UsageError, apply_subst,
    eval_term, nonce_term, pretty_term, terms_equal, term_vars,
)


# ---------------------------------------------------------------------------
# Actions and trace steps


@dataclass(frozen=True)
class Schedule:
    index: int


@dataclass(frozen=True)
class AdvInput:
    index: int
    channel: Term  # recipe
    payload: Optional[Term] = None  # recipe; filled in by the explorer


@dataclass(frozen=True)
class AdvOutput:
    index: int
    channel: Term  # recipe


@dataclass(frozen=True)
class Comm:
    sender: int
    receiver: int


Action = Schedule | AdvInput | AdvOutput | Comm


def action_json(a: Action) -> dict:
    if isinstance(a, Schedule):
        return {"type": "schedule", "index": a.index}
    if isinstance(a, AdvInput):
        return {"type": "adv_input", "index": a.index,
                "channel": pretty_term(a.channel),
                "payload": pretty_term(a.payload) if a.payload is not None else None}
    if isinstance(a, AdvOutput):
        return {"type": "adv_output", "index": a.index, "channel": pretty_term(a.channel)}
    return {"type": "comm", "sender": a.sender, "receiver": a.receiver}


@dataclass(frozen=True)
class TraceStep:
    kind: str  # "event" | "know" | "silent"
    action: Action
    events: tuple[FactLike, ...] = ()
    know: Optional[Term] = None


@dataclass(frozen=True)
class Trace:
    steps: tuple[TraceStep, ...]
    initial_knowledge: tuple[Term, ...] = ()
    truncated: bool = False

    @property
    def events(self) -> tuple[FactLike, ...]:
        out: list[FactLike] = []
        for s in self.steps:
            out.extend(s.events)
        return tuple(out)

    def event_names(self) -> tuple[str, ...]:
        return tuple(e.symbol for e in self.events)

    def to_json_lines(self) -> str:
        lines = []
        for i, s in enumerate(self.steps):
            rec: dict = {"step": i, "kind": s.kind, "action": action_json(s.action)}
            if s.events:
                rec["event"] = [{"symbol": e.symbol,
                                 "args": [pretty_term(a) for a in e.args]} for e in s.events]
            if s.know is not None:
                rec["know"] = pretty_term(s.know)
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Configurations


@dataclass(frozen=True)
class SapicConfig:
    restricted: frozenset[Nonce]
    cells: tuple[tuple[Term, Term], ...]
    msstate: tuple[Fact, ...]
    procs: tuple[Process, ...]
    know: Knowledge
    locks: tuple[Term, ...]
    env: dict[str, Term]
    names: dict[str, Term]
    raised: tuple[TraceStep, ...] = ()
    repl_budget: tuple[Optional[int], ...] = ()
    default_repl_budget: Optional[int] = None
    nonce_seq: int = 0
    unfold_seq: int = 0

    def eval(self, model: SymbolicModel, t: Term) -> Optional[Term]:
        return eval_term(model, apply_subst(t, self.env, self.names))


def _split(p: Process) -> list[Process]:
    if isinstance(p, Parallel):
        return _split(p.left) + _split(p.right)
    if isinstance(p, Nil):
        return []
    return [p]


def _budgets_for(parts: list[Process], default: Optional[int]) -> list[Optional[int]]:
    return [default if isinstance(q, Repl) else None for q in parts]


def initial_config(model: SymbolicModel, p0: Process,
                   default_repl_budget: Optional[int] = None,
                   rename: bool = True) -> SapicConfig:
    """Start state: free names mapped to fresh protocol nonces and published."""
    if free_vars(p0):
        raise UsageError(f"process is not closed: free variables {sorted(free_vars(p0))}")
    if rename:
        p0 = alpha_rename(p0)
    names: dict[str, Term] = {}
    published: list[Term] = []
    seq = 0
    for a in sorted(free_names(p0)):
        n = nonce_term(Nonce(seq, PROTOCOL, a))
        seq += 1
        names[a] = n
        published.append(n)
    parts = _split(p0)
    return SapicConfig(
        restricted=frozenset(),
        cells=(),
        msstate=(),
        procs=tuple(parts),
        know=Knowledge(tuple(published)),
        locks=(),
        env={},
        names=names,
        repl_budget=tuple(_budgets_for(parts, default_repl_budget)),
        default_repl_budget=default_repl_budget,
        nonce_seq=seq,
    )


# ---------------------------------------------------------------------------
# Sub-protocols


def f_mem(model: SymbolicModel, entries: list[Term] | tuple[Term, ...],
          t: Term) -> Optional[int]:
    """Smallest index whose entry is equal (via the equal destructor) to t."""
    for i, u in enumerate(entries):
        if terms_equal(model, u, t):
            return i
    return None


def f_match(model: SymbolicModel, lhs: tuple[Fact, ...], msstate: tuple[Fact, ...],
            env: dict[str, Term], names: dict[str, Term],
            greedy: bool = False) -> Optional[dict[str, Term]]:
    """Ground the free variables of lhs against the fact multiset.

    Stage 1 matches linear facts, consuming candidates from a working copy;
    stage 2 checks persistent facts without consumption. Facts are tried in
    syntactic order against candidates in insertion order. The default search
    backtracks across candidate choices; greedy=True commits to the first
    candidate per fact, which is the literal one-pass reading and incomplete.
    """
    linear = [f for f in lhs if not f.persistent]
    persistent = [f for f in lhs if f.persistent]

    def match_fact(pattern: Fact, fact: Fact, tau: dict[str, Term]) -> Optional[dict[str, Term]]:
        if pattern.symbol != fact.symbol or len(pattern.args) != len(fact.args):
            return None
        tau2 = dict(tau)
        for pat, val in zip(pattern.args, fact.args):
            if pat.kind == VAR and pat.name not in env and pat.name not in tau2:
                tau2[pat.name] = val
            else:
                loose = term_vars(pat) - set(env) - set(tau2)
                if loose:
                    raise UsageError(
                        f"free variable(s) {sorted(loose)} nested under a constructor "
                        f"in {pattern}; rejected by the lhs argument restriction")
                got = eval_term(model, apply_subst(pat, {**env, **tau2}, names))
                if got is None or not terms_equal(model, got, val):
                    return None
        return tau2

    def stage(facts: list[Fact], avail: list[Fact], consume: bool,
              tau: dict[str, Term]) -> Optional[dict[str, Term]]:
        if not facts:
            return tau
        pattern = facts[0]
        for idx, candidate in enumerate(avail):
            tau2 = match_fact(pattern, candidate, tau)
            if tau2 is None:
                continue
            rest = avail[:idx] + avail[idx + 1:] if consume else avail
            result = stage(facts[1:], rest, consume, tau2)
            if result is not None or greedy:
                return result
        return None

    tau = stage(linear, list(msstate), True, {})
    if tau is None:
        return None
    return stage(persistent, list(msstate), False, tau)


def _ground_fact(model: SymbolicModel, f: Fact, env: dict[str, Term],
                 names: dict[str, Term]) -> Optional[Fact]:
    args = []
    for a in f.args:
        v = eval_term(model, apply_subst(a, env, names))
        if v is None:
            return None
        args.append(v)
    return Fact(f.symbol, tuple(args), f.persistent)


def _ground_event(model: SymbolicModel, e: FactLike, env: dict[str, Term],
                  names: dict[str, Term]) -> Optional[FactLike]:
    args = []
    for a in e.args:
        v = eval_term(model, apply_subst(a, env, names))
        if v is None:
            return None
        args.append(v)
    return FactLike(e.symbol, tuple(args))


# ---------------------------------------------------------------------------
# Enabled actions


def enabled_actions(model: SymbolicModel, cfg: SapicConfig,
                    greedy_match: bool = False) -> list[Action]:
    """Deterministic list of actions with a defined successor.

    adv_input actions are templates: the payload recipe is supplied by the
    caller (the explorer enumerates them). Identical sibling entries yield one
    action (symmetry reduction over exact duplicates).
    """
    out: list[Action] = []
    cache = DerivabilityCache(model, cfg.know)
    seen: set[tuple[Process, Optional[int]]] = set()
    in_indices: list[int] = []
    for j, q in enumerate(cfg.procs):
        if isinstance(q, In):
            in_indices.append(j)

    for i, p in enumerate(cfg.procs):
        budget = cfg.repl_budget[i]
        sig = (p, budget)
        if sig in seen:
            continue
        seen.add(sig)
        if isinstance(p, (Restrict, Let, Event, Insert, Delete, Lookup)):
            if isinstance(p, Event):
                if _ground_event(model, p.fact, cfg.env, cfg.names) is None:
                    continue
            out.append(Schedule(i))
        elif isinstance(p, Repl):
            if budget is None or budget > 0:
                out.append(Schedule(i))
        elif isinstance(p, Lock):
            m = cfg.eval(model, p.term)
            if m is not None and f_mem(model, cfg.locks, m) is None:
                out.append(Schedule(i))
        elif isinstance(p, Unlock):
            m = cfg.eval(model, p.term)
            if m is not None and f_mem(model, cfg.locks, m) is not None:
                out.append(Schedule(i))
        elif isinstance(p, Msr):
            if f_match(model, p.lhs, cfg.msstate, cfg.env, cfg.names, greedy_match) is not None:
                out.append(Schedule(i))
        elif isinstance(p, Out):
            chan = cfg.eval(model, p.channel)
            if chan is None or cfg.eval(model, p.payload) is None:
                continue
            for j in in_indices:
                other = cfg.procs[j]
                c2 = cfg.eval(model, other.channel)
                if c2 is not None and terms_equal(model, chan, c2):
                    out.append(Comm(i, j))
            r = cache.recipe_for(chan)
            if r is not None:
                out.append(AdvOutput(i, r))
        elif isinstance(p, In):
            chan = cfg.eval(model, p.channel)
            if chan is None:
                continue
            r = cache.recipe_for(chan)
            if r is not None:
                out.append(AdvInput(i, r))
    return out


# ---------------------------------------------------------------------------
# Step


def _replace(cfg: SapicConfig, i: int, parts: list[Process], **changes) -> SapicConfig:
    procs = cfg.procs[:i] + tuple(parts) + cfg.procs[i + 1:]
    budgets = (cfg.repl_budget[:i] + tuple(_budgets_for(parts, cfg.default_repl_budget))
               + cfg.repl_budget[i + 1:])
    return replace(cfg, procs=procs, repl_budget=budgets, **changes)


def step(model: SymbolicModel, cfg: SapicConfig, action: Action,
         greedy_match: bool = False) -> tuple[SapicConfig, TraceStep]:
    """Apply one reduction; raises UsageError on a non-enabled action."""
    silent = TraceStep("silent", action)

    if isinstance(action, Schedule):
        i = action.index
        if not (0 <= i < len(cfg.procs)):
            raise UsageError(f"no process at index {i}")
        p = cfg.procs[i]
        if isinstance(p, Restrict):
            n = Nonce(cfg.nonce_seq, PROTOCOL, p.name)
            nt = nonce_term(n)
            cfg2 = _replace(cfg, i, _split(p.body),
                            restricted=cfg.restricted | {n},
                            names={**cfg.names, p.name: nt},
                            nonce_seq=cfg.nonce_seq + 1)
            return _raised(cfg2, silent)
        if isinstance(p, Let):
            v = cfg.eval(model, p.expr)
            if v is not None:
                cfg2 = _replace(cfg, i, _split(p.then), env={**cfg.env, p.var: v})
            else:
                cfg2 = _replace(cfg, i, _split(p.els))
            return _raised(cfg2, silent)
        if isinstance(p, Event):
            ev = _ground_event(model, p.fact, cfg.env, cfg.names)
            if ev is None:
                raise UsageError(f"event arguments of {p.fact} do not evaluate")
            ts = TraceStep("event", action, events=(ev,))
            return _raised(_replace(cfg, i, _split(p.cont)), ts)
        if isinstance(p, Repl):
            budget = cfg.repl_budget[i]
            if budget is not None and budget <= 0:
                raise UsageError("replication budget exhausted")
            copy = rename_binders(p.body, f"~{cfg.unfold_seq}")
            parts = _split(copy)
            procs = cfg.procs[:i] + tuple(parts) + (p,) + cfg.procs[i + 1:]
            budgets = (cfg.repl_budget[:i]
                       + tuple(_budgets_for(parts, cfg.default_repl_budget))
                       + (None if budget is None else budget - 1,)
                       + cfg.repl_budget[i + 1:])
            cfg2 = replace(cfg, procs=procs, repl_budget=budgets,
                           unfold_seq=cfg.unfold_seq + 1)
            return _raised(cfg2, silent)
        if isinstance(p, Insert):
            m = cfg.eval(model, p.key)
            n = cfg.eval(model, p.value)
            if m is None or n is None:
                raise UsageError("insert arguments do not evaluate")
            idx = f_mem(model, [k for k, _ in cfg.cells], m)
            if idx is not None:
                cells = cfg.cells[:idx] + ((m, n),) + cfg.cells[idx + 1:]
            else:
                cells = cfg.cells + ((m, n),)
            return _raised(_replace(cfg, i, _split(p.cont), cells=cells), silent)
        if isinstance(p, Delete):
            m = cfg.eval(model, p.key)
            if m is None:
                raise UsageError("delete key does not evaluate")
            idx = f_mem(model, [k for k, _ in cfg.cells], m)
            cells = cfg.cells if idx is None else cfg.cells[:idx] + cfg.cells[idx + 1:]
            return _raised(_replace(cfg, i, _split(p.cont), cells=cells), silent)
        if isinstance(p, Lookup):
            m = cfg.eval(model, p.key)
            if m is None:
                raise UsageError("lookup key does not evaluate")
            idx = f_mem(model, [k for k, _ in cfg.cells], m)
            if idx is not None:
                value = cfg.cells[idx][1]
                cfg2 = _replace(cfg, i, _split(p.then), env={**cfg.env, p.var: value})
            else:
                cfg2 = _replace(cfg, i, _split(p.els))
            return _raised(cfg2, silent)
        if isinstance(p, Lock):
            m = cfg.eval(model, p.term)
            if m is None or f_mem(model, cfg.locks, m) is not None:
                raise UsageError("lock not available")
            return _raised(_replace(cfg, i, _split(p.cont), locks=cfg.locks + (m,)), silent)
        if isinstance(p, Unlock):
            m = cfg.eval(model, p.term)
            idx = None if m is None else f_mem(model, cfg.locks, m)
            if idx is None:
                raise UsageError("unlock of a lock that is not held")
            locks = cfg.locks[:idx] + cfg.locks[idx + 1:]
            return _raised(_replace(cfg, i, _split(p.cont), locks=locks), silent)
        if isinstance(p, Msr):
            tau = f_match(model, p.lhs, cfg.msstate, cfg.env, cfg.names, greedy_match)
            if tau is None:
                raise UsageError("multiset construct does not match")
            env2 = {**cfg.env, **tau}
            consumed: list[Fact] = []
            for f in p.lhs:
                if f.persistent:
                    continue
                g = _ground_fact(model, f, env2, cfg.names)
                if g is None:
                    raise UsageError("lhs fact does not ground")
                consumed.append(g)
            ms = list(cfg.msstate)
            for g in consumed:
                ms.remove(g)  # one occurrence per linear fact
            added = []
            for f in p.rhs:
                g = _ground_fact(model, f, env2, cfg.names)
                if g is None:
                    raise UsageError("rhs fact does not ground")
                added.append(g)
            events = []
            for e in p.events:
                ev = _ground_event(model, e, env2, cfg.names)
                if ev is None:
                    raise UsageError("event does not ground")
                events.append(ev)
            ts = TraceStep("event" if events else "silent", action, events=tuple(events))
            cfg2 = _replace(cfg, i, _split(p.cont), msstate=tuple(ms) + tuple(added),
                            env=env2)
            return _raised(cfg2, ts)
        raise UsageError(f"process head {type(p).__name__} has no internal step")

    if isinstance(action, Comm):
        i, j = action.sender, action.receiver
        if i == j or not (0 <= i < len(cfg.procs)) or not (0 <= j < len(cfg.procs)):
            raise UsageError("bad communication indices")
        snd, rcv = cfg.procs[i], cfg.procs[j]
        if not isinstance(snd, Out) or not isinstance(rcv, In):
            raise UsageError("communication endpoints are not out/in")
        c1, c2 = cfg.eval(model, snd.channel), cfg.eval(model, rcv.channel)
        if c1 is None or c2 is None or not terms_equal(model, c1, c2):
            raise UsageError("channels do not agree")
        payload = cfg.eval(model, snd.payload)
        if payload is None:
            raise UsageError("payload does not evaluate")
        parts_i = _split(snd.cont)
        parts_j = _split(rcv.cont)
        # replace higher index first to keep positions stable
        cfg2 = _replace(cfg, max(i, j), parts_i if i > j else parts_j)
        cfg2 = _replace(cfg2, min(i, j), parts_j if i > j else parts_i,
                        env={**cfg.env, rcv.var: payload})
        return _raised(cfg2, TraceStep("silent", action))

    if isinstance(action, AdvOutput):
        i = action.index
        p = cfg.procs[i] if 0 <= i < len(cfg.procs) else None
        if not isinstance(p, Out):
            raise UsageError("adv_output needs an out process")
        chan = cfg.eval(model, p.channel)
        got = recipe_eval(model, cfg.know, action.channel)
        if chan is None or got is None or not terms_equal(model, got, chan):
            raise UsageError("channel recipe does not match")
        payload = cfg.eval(model, p.payload)
        if payload is None:
            raise UsageError("payload does not evaluate")
        cfg2 = _replace(cfg, i, _split(p.cont), know=cfg.know.extended(payload))
        return _raised(cfg2, TraceStep("know", action, know=payload))

    if isinstance(action, AdvInput):
        i = action.index
        p = cfg.procs[i] if 0 <= i < len(cfg.procs) else None
        if not isinstance(p, In):
            raise UsageError("adv_input needs an in process")
        if action.payload is None:
            raise UsageError("adv_input has no payload recipe")
        chan = cfg.eval(model, p.channel)
        got = recipe_eval(model, cfg.know, action.channel)
        if chan is None or got is None or not terms_equal(model, got, chan):
            raise UsageError("channel recipe does not match")
        payload = recipe_eval(model, cfg.know, action.payload)
        if payload is None:
            raise UsageError("payload recipe evaluates to bottom")
        cfg2 = _replace(cfg, i, _split(p.cont), env={**cfg.env, p.var: payload})
        return _raised(cfg2, TraceStep("silent", action))

    raise UsageError(f"unknown action {action!r}")


def _raised(cfg: SapicConfig, ts: TraceStep) -> tuple[SapicConfig, TraceStep]:
    return replace(cfg, raised=cfg.raised + (ts,)), ts


def run_trace(model: SymbolicModel, p0: Process, script: list[Action],
              greedy_match: bool = False,
              default_repl_budget: Optional[int] = None) -> Trace:
    """Fold `step` over the script from the initial configuration."""
    cfg = initial_config(model, p0, default_repl_budget)
    published = cfg.know.entries
    steps: list[TraceStep] = []
    for pos, action in enumerate(script):
        try:
            cfg, ts = step(model, cfg, action, greedy_match)
        except UsageError as err:
            raise UsageError(f"action {pos} not enabled: {err}") from err
        steps.append(ts)
    return Trace(tuple(steps), published)


def run_to_config(model: SymbolicModel, p0: Process, script: list[Action],
                  greedy_match: bool = False,
                  default_repl_budget: Optional[int] = None) -> SapicConfig:
    cfg = initial_config(model, p0, default_repl_budget)
    for pos, action in enumerate(script):
        try:
            cfg, _ = step(model, cfg, action, greedy_match)
        except UsageError as err:
            raise UsageError(f"action {pos} not enabled: {err}") from err
    return cfg
