"""Seeded random generators over the built-in public-key model, shared by tests."""

from __future__ import annotations

import random

from pistate.terms import (
    ADVERSARY, PROTOCOL, NonceFactory, SymbolicModel, Term, app, nonce_term,
    pkenc_sig_model,
)
from pistate.deduction import Knowledge


class TermGen:
    def __init__(self, model: SymbolicModel, rng: random.Random,
                 n_protocol: int = 4, n_adversary: int = 2) -> None:
        self.model = model
        self.rng = rng
        factory = NonceFactory()
        self.protocol = [nonce_term(factory.fresh(PROTOCOL, f"n{i}")) for i in range(n_protocol)]
        self.adversary = [nonce_term(factory.fresh(ADVERSARY, f"e{i}")) for i in range(n_adversary)]

    def c(self, name: str, *args: Term) -> Term:
        return app(self.model.constructors[name], args)

    def nonce(self) -> Term:
        return self.rng.choice(self.protocol + self.adversary)

    def string(self, depth: int) -> Term:
        t = self.c("empty")
        for _ in range(self.rng.randrange(depth)):
            t = self.c(self.rng.choice(["string0", "string1"]), t)
        return t

    def term(self, depth: int) -> Term:
        """A random well-typed ground message of depth <= depth."""
        if depth <= 1:
            return self.nonce() if self.rng.random() < 0.8 else self.c("empty")
        pick = self.rng.randrange(10)
        if pick == 0:
            return self.nonce()
        if pick == 1:
            return self.c(self.rng.choice(["ek", "dk", "vk", "sk"]), self.nonce())
        if pick == 2:
            return self.c("pair", self.term(depth - 1), self.term(depth - 1))
        if pick == 3:
            return self.c("enc", self.c("ek", self.nonce()), self.term(depth - 2), self.nonce())
        if pick == 4:
            return self.c("sig", self.c("sk", self.nonce()), self.term(depth - 2), self.nonce())
        if pick == 5:
            return self.string(depth)
        if pick == 6:
            return self.c("garbage", self.nonce())
        if pick == 7:
            return self.c("garbageEnc", self.term(depth - 1), self.nonce())
        if pick == 8:
            return self.c("garbageSig", self.term(depth - 1), self.nonce())
        return self.c("pair", self.term(depth - 1), self.term(depth - 1))

    def knowledge(self, max_entries: int = 5, depth: int = 4) -> Knowledge:
        n = self.rng.randrange(max_entries + 1)
        return Knowledge(tuple(self.term(depth) for _ in range(n)))

    def target(self, know: Knowledge, depth: int = 4) -> Term:
        """Half the time a subterm of the knowledge (interesting), else fresh."""
        from pistate.terms import subterms
        pool = [s for e in know.entries for s in subterms(e)]
        if pool and self.rng.random() < 0.5:
            return self.rng.choice(pool)
        return self.term(depth)


def make_gen(seed: int, **kw) -> TermGen:
    return TermGen(pkenc_sig_model(), random.Random(seed), **kw)
