"""Direct StatVerif interpreter and the encoding into SAPIC.

The interpreter substitutes eagerly: variable bindings and restricted names are
pushed into the process terms at each step, so configurations are directly
comparable. The encoder is the structural map over the lock boolean b with a
distinguished lock-token constant; cell names survive encoding unchanged, so a
StatVerif configuration and its encoding can be aligned state by state (they
also share the nonce and unfold counters for exactly that reason).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .deduction import DerivabilityCache, Knowledge, recipe_eval
from . import sapic
from .process import (
    Event, FactLike, In, Insert, Let, Lock, Lookup, Nil, Out, Parallel,
    Process, Repl, Restrict, SvAssign, SvInit, SvLock, SvRead, SvUnlock,
    Unlock, free_names, free_vars, rename_binders, substitute, walk,
    alpha_rename,
)
from .terms import (
    NAME, NONCE, PROTOCOL, Nonce, SymbolicModel, Term, UsageError, app,
    apply_subst, eval_term, nonce_term, pretty_term, terms_equal, term_vars,
    var,
)


class EncodingError(Exception):
    """A construct has no encoding row for the current lock boolean."""


# ---------------------------------------------------------------------------
# Semantic configurations and the direct interpreter


@dataclass(frozen=True)
class SvLabel:
    kind: str  # "silent" | "event" | "out" | "in"
    event: Optional[FactLike] = None
    channel: Optional[Term] = None
    payload: Optional[Term] = None

    def observable(self) -> Optional[tuple]:
        if self.kind == "event":
            e = self.event
            return ("event", e.symbol, e.args)
        if self.kind == "out":
            return ("K", self.payload)
        if self.kind == "in":
            return ("K-in", self.channel, self.payload)
        return None


@dataclass(frozen=True)
class StatConfig:
    restricted: frozenset[Nonce]
    cells: tuple[tuple[Term, Term], ...]
    procs: tuple[tuple[Process, int], ...]  # (ground process, beta)
    know: Knowledge
    repl_budget: tuple[Optional[int], ...] = ()
    default_repl_budget: Optional[int] = None
    nonce_seq: int = 0
    unfold_seq: int = 0

    def betas(self) -> tuple[int, ...]:
        return tuple(b for _, b in self.procs)


def _split_entries(p: Process, beta: int) -> list[tuple[Process, int]]:
    if isinstance(p, Parallel):
        return _split_entries(p.left, beta) + _split_entries(p.right, beta)
    if isinstance(p, Nil):
        return []
    return [(p, beta)]


def _entry_budgets(entries: list[tuple[Process, int]],
                   default: Optional[int]) -> list[Optional[int]]:
    return [default if isinstance(q, Repl) else None for q, _ in entries]


def sv_initial_config(model: SymbolicModel, p0: Process,
                      default_repl_budget: Optional[int] = None,
                      rename: bool = True) -> StatConfig:
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
    entries = _split_entries(substitute(p0, names=names), 0)
    return StatConfig(
        restricted=frozenset(),
        cells=(),
        procs=tuple(entries),
        know=Knowledge(tuple(published)),
        repl_budget=tuple(_entry_budgets(entries, default_repl_budget)),
        default_repl_budget=default_repl_budget,
        nonce_seq=seq,
    )


def _cell_index(model: SymbolicModel, cells, key: Term) -> Optional[int]:
    for i, (k, _) in enumerate(cells):
        if terms_equal(model, k, key):
            return i
    return None


def sv_enabled_actions(model: SymbolicModel, cfg: StatConfig) -> list[sapic.Action]:
    out: list[sapic.Action] = []
    cache = DerivabilityCache(model, cfg.know)
    others_unlocked = [all(b2 == 0 for k, (_, b2) in enumerate(cfg.procs) if k != i)
                       for i in range(len(cfg.procs))]
    seen: set[tuple[Process, int, Optional[int]]] = set()
    in_indices = [j for j, (q, _) in enumerate(cfg.procs) if isinstance(q, In)]

    for i, (p, beta) in enumerate(cfg.procs):
        sig = (p, beta, cfg.repl_budget[i])
        if sig in seen:
            continue
        seen.add(sig)
        if isinstance(p, (Restrict, Let, Event)):
            out.append(sapic.Schedule(i))
        elif isinstance(p, Repl):
            budget = cfg.repl_budget[i]
            if budget is None or budget > 0:
                out.append(sapic.Schedule(i))
        elif isinstance(p, SvInit):
            if (p.cell.kind == NONCE and p.cell.nonce in cfg.restricted
                    and _cell_index(model, cfg.cells, p.cell) is None):
                out.append(sapic.Schedule(i))
        elif isinstance(p, SvAssign):
            if _cell_index(model, cfg.cells, p.cell) is not None and others_unlocked[i]:
                out.append(sapic.Schedule(i))
        elif isinstance(p, SvRead):
            if _cell_index(model, cfg.cells, p.cell) is not None and others_unlocked[i]:
                out.append(sapic.Schedule(i))
        elif isinstance(p, SvLock):
            if beta == 0 and others_unlocked[i]:
                out.append(sapic.Schedule(i))
        elif isinstance(p, SvUnlock):
            if beta == 1:
                out.append(sapic.Schedule(i))
        elif isinstance(p, Out):
            chan = eval_term(model, p.channel)
            if chan is None or eval_term(model, p.payload) is None:
                continue
            for j in in_indices:
                c2 = eval_term(model, cfg.procs[j][0].channel)
                if c2 is not None and terms_equal(model, chan, c2):
                    out.append(sapic.Comm(i, j))
            r = cache.recipe_for(chan)
            if r is not None:
                out.append(sapic.AdvOutput(i, r))
        elif isinstance(p, In):
            chan = eval_term(model, p.channel)
            if chan is None:
                continue
            r = cache.recipe_for(chan)
            if r is not None:
                out.append(sapic.AdvInput(i, r))
    return out


def _sv_replace(cfg: StatConfig, i: int, entries: list[tuple[Process, int]],
                **changes) -> StatConfig:
    procs = cfg.procs[:i] + tuple(entries) + cfg.procs[i + 1:]
    budgets = (cfg.repl_budget[:i]
               + tuple(_entry_budgets(entries, cfg.default_repl_budget))
               + cfg.repl_budget[i + 1:])
    return replace(cfg, procs=procs, repl_budget=budgets, **changes)


def sv_step(model: SymbolicModel, cfg: StatConfig,
            action: sapic.Action) -> tuple[StatConfig, SvLabel]:
    silent = SvLabel("silent")

    if isinstance(action, sapic.Schedule):
        i = action.index
        if not (0 <= i < len(cfg.procs)):
            raise UsageError(f"no process at index {i}")
        p, beta = cfg.procs[i]
        others0 = all(b2 == 0 for k, (_, b2) in enumerate(cfg.procs) if k != i)
        if isinstance(p, Restrict):
            n = Nonce(cfg.nonce_seq, PROTOCOL, p.name)
            body = substitute(p.body, names={p.name: nonce_term(n)})
            return _sv_replace(cfg, i, _split_entries(body, beta),
                               restricted=cfg.restricted | {n},
                               nonce_seq=cfg.nonce_seq + 1), silent
        if isinstance(p, Let):
            v = eval_term(model, p.expr)
            if v is not None:
                nxt = substitute(p.then, env={p.var: v})
            else:
                nxt = p.els
            return _sv_replace(cfg, i, _split_entries(nxt, beta)), silent
        if isinstance(p, Event):
            args = []
            for a in p.fact.args:
                v = eval_term(model, a)
                if v is None:
                    raise UsageError("event argument does not evaluate")
                args.append(v)
            ev = FactLike(p.fact.symbol, tuple(args))
            return (_sv_replace(cfg, i, _split_entries(p.cont, beta)),
                    SvLabel("event", event=ev))
        if isinstance(p, Repl):
            budget = cfg.repl_budget[i]
            if budget is not None and budget <= 0:
                raise UsageError("replication budget exhausted")
            copy = rename_binders(p.body, f"~{cfg.unfold_seq}")
            entries = _split_entries(copy, 0)
            procs = cfg.procs[:i] + tuple(entries) + ((p, beta),) + cfg.procs[i + 1:]
            budgets = (cfg.repl_budget[:i]
                       + tuple(_entry_budgets(entries, cfg.default_repl_budget))
                       + (None if budget is None else budget - 1,)
                       + cfg.repl_budget[i + 1:])
            return replace(cfg, procs=procs, repl_budget=budgets,
                           unfold_seq=cfg.unfold_seq + 1), silent
        if isinstance(p, SvInit):
            if beta != 0:
                raise UsageError("initialization under lock")
            if not (p.cell.kind == NONCE and p.cell.nonce in cfg.restricted):
                raise UsageError("cell is not a restricted name")
            if _cell_index(model, cfg.cells, p.cell) is not None:
                raise UsageError("cell already initialized")
            v = eval_term(model, p.value)
            if v is None:
                raise UsageError("cell value does not evaluate")
            return _sv_replace(cfg, i, [], cells=cfg.cells + ((p.cell, v),)), silent
        if isinstance(p, SvAssign):
            idx = _cell_index(model, cfg.cells, p.cell)
            if idx is None or not others0:
                raise UsageError("assign not enabled")
            v = eval_term(model, p.value)
            if v is None:
                raise UsageError("assigned value does not evaluate")
            cells = cfg.cells[:idx] + ((cfg.cells[idx][0], v),) + cfg.cells[idx + 1:]
            return _sv_replace(cfg, i, _split_entries(p.cont, beta), cells=cells), silent
        if isinstance(p, SvRead):
            idx = _cell_index(model, cfg.cells, p.cell)
            if idx is None or not others0:
                raise UsageError("read not enabled")
            nxt = substitute(p.cont, env={p.var: cfg.cells[idx][1]})
            return _sv_replace(cfg, i, _split_entries(nxt, beta)), silent
        if isinstance(p, SvLock):
            if beta != 0 or not others0:
                raise UsageError("lock not available")
            return _sv_replace(cfg, i, _split_entries(p.cont, 1)), silent
        if isinstance(p, SvUnlock):
            if beta != 1:
                raise UsageError("unlock without holding the lock")
            return _sv_replace(cfg, i, _split_entries(p.cont, 0)), silent
        raise UsageError(f"process head {type(p).__name__} has no internal step")

    if isinstance(action, sapic.Comm):
        i, j = action.sender, action.receiver
        snd, bs = cfg.procs[i]
        rcv, br = cfg.procs[j]
        if not isinstance(snd, Out) or not isinstance(rcv, In):
            raise UsageError("communication endpoints are not out/in")
        c1, c2 = eval_term(model, snd.channel), eval_term(model, rcv.channel)
        if c1 is None or c2 is None or not terms_equal(model, c1, c2):
            raise UsageError("channels do not agree")
        payload = eval_term(model, snd.payload)
        if payload is None:
            raise UsageError("payload does not evaluate")
        cont_r = substitute(rcv.cont, env={rcv.var: payload})
        cfg2 = _sv_replace(cfg, max(i, j),
                           _split_entries(snd.cont if i > j else cont_r,
                                          bs if i > j else br))
        cfg2 = _sv_replace(cfg2, min(i, j),
                           _split_entries(cont_r if i > j else snd.cont,
                                          br if i > j else bs))
        return cfg2, SvLabel("silent")

    if isinstance(action, sapic.AdvOutput):
        i = action.index
        p, beta = cfg.procs[i]
        if not isinstance(p, Out):
            raise UsageError("adv_output needs an out process")
        chan = eval_term(model, p.channel)
        got = recipe_eval(model, cfg.know, action.channel)
        if chan is None or got is None or not terms_equal(model, got, chan):
            raise UsageError("channel recipe does not match")
        payload = eval_term(model, p.payload)
        if payload is None:
            raise UsageError("payload does not evaluate")
        cfg2 = _sv_replace(cfg, i, _split_entries(p.cont, beta),
                           know=cfg.know.extended(payload))
        return cfg2, SvLabel("out", payload=payload)

    if isinstance(action, sapic.AdvInput):
        i = action.index
        p, beta = cfg.procs[i]
        if not isinstance(p, In):
            raise UsageError("adv_input needs an in process")
        if action.payload is None:
            raise UsageError("adv_input has no payload recipe")
        chan = eval_term(model, p.channel)
        got = recipe_eval(model, cfg.know, action.channel)
        if chan is None or got is None or not terms_equal(model, got, chan):
            raise UsageError("channel recipe does not match")
        payload = recipe_eval(model, cfg.know, action.payload)
        if payload is None:
            raise UsageError("payload recipe evaluates to bottom")
        cont = substitute(p.cont, env={p.var: payload})
        return (_sv_replace(cfg, i, _split_entries(cont, beta)),
                SvLabel("in", channel=chan, payload=payload))

    raise UsageError(f"unknown action {action!r}")


# ---------------------------------------------------------------------------
# Encoding into SAPIC (structural map over the lock boolean)


LOCK_TOKEN_BASE = "l"


def _fresh_lock_token(model: SymbolicModel, p: Process) -> Term:
    used = free_names(p) | free_vars(p)
    base = LOCK_TOKEN_BASE
    name = base
    k = 0
    while name in used or (model.symbol(name) is not None and model.symbol(name).arity != 0):
        k += 1
        name = f"{base}{k}"
    return model.constant(name)


class _FreshVars:
    def __init__(self, p: Process) -> None:
        self.used = set(free_vars(p))
        for node in walk(p):
            for attr in ("var",):
                v = getattr(node, attr, None)
                if isinstance(v, str):
                    self.used.add(v)
        self.k = 0

    def fresh(self, base: str) -> str:
        while True:
            name = f"{base}_{self.k}"
            self.k += 1
            if name not in self.used:
                self.used.add(name)
                return name


def encode_process(p: Process, b: int = 0, model: Optional[SymbolicModel] = None,
                   lock_token: Optional[Term] = None,
                   _fresh: Optional[_FreshVars] = None) -> Process:
    """The structural encoding of a StatVerif process at lock boolean b.

    The lock token defaults to a fresh public constant (registered in the
    model); x_s variables for assignments are fresh per occurrence.
    """
    if lock_token is None:
        if model is None:
            raise UsageError("encode_process needs a model to mint the lock token")
        lock_token = _fresh_lock_token(model, p)
    fresh = _fresh or _FreshVars(p)
    l = lock_token

    def enc(q: Process, b: int) -> Process:
        if isinstance(q, Nil):
            return q  # the b = 1 case is a totality extension: 0 keeps the lock
        if isinstance(q, Parallel):
            if b == 1:
                raise EncodingError("parallel under lock: unreachable under lock discipline")
            return Parallel(enc(q.left, 0), enc(q.right, 0))
        if isinstance(q, Repl):
            if b == 1:
                raise EncodingError("replication under lock: unreachable under lock discipline")
            return Repl(enc(q.body, 0))
        if isinstance(q, Restrict):
            return Restrict(q.name, enc(q.body, b))
        if isinstance(q, In):
            return In(q.channel, q.var, enc(q.cont, b))
        if isinstance(q, Out):
            return Out(q.channel, q.payload, enc(q.cont, b))
        if isinstance(q, Let):
            return Let(q.var, q.expr, enc(q.then, b), enc(q.els, b))
        if isinstance(q, Event):
            return Event(q.fact, enc(q.cont, b))
        if isinstance(q, SvInit):
            if b == 1:
                raise EncodingError("initialization under lock: unreachable under lock discipline")
            return Insert(q.cell, q.value, Nil())
        if isinstance(q, SvLock):
            if b == 1:
                raise EncodingError("lock under lock: unreachable under lock discipline")
            return Lock(l, enc(q.cont, 1))
        if isinstance(q, SvUnlock):
            if b == 0:
                raise EncodingError("unlock without lock: unreachable under lock discipline")
            return Unlock(l, enc(q.cont, 0))
        if isinstance(q, SvAssign):
            xs = fresh.fresh("x_s")
            inner = Insert(q.cell, q.value, Unlock(l, enc(q.cont, 0)) if b == 0
                           else enc(q.cont, 1))
            body = Lookup(q.cell, xs, inner, Nil())
            return Lock(l, body) if b == 0 else body
        if isinstance(q, SvRead):
            if b == 0:
                return Lock(l, Lookup(q.cell, q.var, Unlock(l, enc(q.cont, 0)), Nil()))
            return Lookup(q.cell, q.var, enc(q.cont, 1), Nil())
        raise EncodingError(f"cannot encode SAPIC construct {type(q).__name__}")

    return enc(p, b)


def encode_config(model: SymbolicModel, cfg: StatConfig,
                  lock_token: Term) -> sapic.SapicConfig:
    """Map a StatVerif configuration to the corresponding SAPIC configuration."""
    fresh = _FreshVars(Nil())
    for q, _ in cfg.procs:
        fresh.used |= free_vars(q)
        for node in walk(q):
            v = getattr(node, "var", None)
            if isinstance(v, str):
                fresh.used.add(v)
    procs: list[Process] = []
    any_locked = any(b == 1 for _, b in cfg.procs)
    for q, b in cfg.procs:
        procs.append(encode_process(q, b, lock_token=lock_token, _fresh=fresh))
    return sapic.SapicConfig(
        restricted=cfg.restricted,
        cells=cfg.cells,
        msstate=(),
        procs=tuple(procs),
        know=cfg.know,
        locks=(lock_token,) if any_locked else (),
        env={},
        names={},
        repl_budget=cfg.repl_budget,
        default_repl_budget=cfg.default_repl_budget,
        nonce_seq=cfg.nonce_seq,
        unfold_seq=cfg.unfold_seq,
    )


NOT_SECRET = "NotSecret"
ATTACK_CHANNEL = "attch"


def secrecy_harness(model: SymbolicModel, p0: Process, m: Term) -> Process:
    """The encoded composition of p0 with the listener that flags derivability
    of m: receiving anything equal to m on the attack channel raises NotSecret."""
    if term_vars(m):
        raise UsageError(f"secret {m!r} contains variables")
    fresh = _FreshVars(p0)
    x = fresh.fresh("x")
    y = fresh.fresh("y")
    attch = model.constant(ATTACK_CHANNEL)
    eq = model.destructors["equal"]
    listener = In(attch, x, Let(y, app(eq, (var(x), m)),
                                Event(FactLike(NOT_SECRET, ()), Nil()), Nil()))
    return encode_process(Parallel(listener, p0), 0, model=model)
