import pytest
from hypothesis import given, settings, strategies as st

from pistate import terms as T
from pistate.terms import (
    ADVERSARY, PROTOCOL, DestructorRule, FuncSymbol, ModelError, NonceFactory,
    UsageError, app, eval_destructor, eval_term, fresh_nonce, make_model,
    nonce_term, pkenc_sig_model, pretty_term, terms_equal, var,
)


@pytest.fixture(scope="module")
def model():
    return pkenc_sig_model()


@pytest.fixture(scope="module")
def ns():
    f = NonceFactory()
    return {k: nonce_term(f.fresh(PROTOCOL, k)) for k in ("n1", "n2", "m", "r", "r2", "a", "b", "c")}


def c(model, name, *args):
    return app(model.constructors[name], args)


def d(model, name, *args):
    return app(model.destructors[name], args)


class TestEvalDestructor:
    def test_dec_matching_key(self, model, ns):
        ct = c(model, "enc", c(model, "ek", ns["n1"]), ns["m"], ns["r"])
        assert eval_destructor(model, model.destructors["dec"], (c(model, "dk", ns["n1"]), ct)) is ns["m"]

    def test_dec_key_mismatch_is_bottom(self, model, ns):
        ct = c(model, "enc", c(model, "ek", ns["n2"]), ns["m"], ns["r"])
        assert eval_destructor(model, model.destructors["dec"], (c(model, "dk", ns["n1"]), ct)) is None

    def test_fst_pair(self, model, ns):
        p = c(model, "pair", ns["a"], ns["b"])
        assert eval_destructor(model, model.destructors["fst"], (p,)) is ns["a"]

    def test_verify_signature(self, model, ns):
        s = c(model, "sig", c(model, "sk", ns["n1"]), ns["m"], ns["r"])
        assert eval_destructor(model, model.destructors["verify"], (c(model, "vk", ns["n1"]), s)) is ns["m"]

    def test_arity_mismatch_is_usage_error_not_bottom(self, model, ns):
        with pytest.raises(UsageError):
            eval_destructor(model, model.destructors["fst"], (ns["a"], ns["b"]))

    def test_non_ground_argument_rejected(self, model):
        with pytest.raises(UsageError):
            eval_destructor(model, model.destructors["fst"], (var("x"),))


class TestEvalTerm:
    def test_snd_nested_pair(self, model, ns):
        t = d(model, "snd", c(model, "pair", ns["a"], c(model, "pair", ns["b"], ns["c"])))
        assert eval_term(model, t) is c(model, "pair", ns["b"], ns["c"])

    def test_equal_distinct_nonces_is_bottom(self, model, ns):
        assert eval_term(model, d(model, "equal", ns["a"], ns["b"])) is None

    def test_unstring0_string0_empty(self, model):
        t = d(model, "unstring0", c(model, "string0", c(model, "empty")))
        assert eval_term(model, t) is c(model, "empty")

    def test_bottom_propagates(self, model, ns):
        inner = d(model, "fst", ns["a"])  # fst of a nonce is bottom
        assert eval_term(model, d(model, "snd", c(model, "pair", inner, ns["b"]))) is None
        # but as direct pair argument the pair itself is fine
        assert eval_term(model, c(model, "pair", ns["a"], ns["b"])) is not None

    def test_unbound_variable_is_usage_error(self, model):
        with pytest.raises(UsageError):
            eval_term(model, var("x"))

    def test_determinism(self, model, ns):
        t = d(model, "dec", c(model, "dk", ns["n1"]),
              c(model, "enc", c(model, "ek", ns["n1"]), c(model, "pair", ns["a"], ns["b"]), ns["r"]))
        assert eval_term(model, t) is eval_term(model, t)


class TestTermsEqual:
    def test_reflexive(self, model, ns):
        assert terms_equal(model, ns["m"], ns["m"])

    def test_injective_constructors(self, model, ns):
        assert not terms_equal(model, c(model, "pair", ns["a"], ns["b"]), c(model, "pair", ns["a"], ns["c"]))

    def test_randomized_encryptions_differ(self, model, ns):
        e1 = c(model, "enc", c(model, "ek", ns["n1"]), ns["m"], ns["r"])
        e2 = c(model, "enc", c(model, "ek", ns["n1"]), ns["m"], ns["r2"])
        assert not terms_equal(model, e1, e2)


class TestNonces:
    def test_freshness(self):
        a, b = fresh_nonce(PROTOCOL), fresh_nonce(PROTOCOL)
        assert a.id != b.id

    def test_sort(self):
        assert fresh_nonce(ADVERSARY).sort == ADVERSARY

    def test_many_distinct(self):
        ids = {fresh_nonce(PROTOCOL).id for _ in range(10_000)}
        assert len(ids) == 10_000

    def test_unknown_sort_rejected(self):
        with pytest.raises(UsageError):
            fresh_nonce("public")


class TestInterning:
    def test_identical_terms_are_same_object(self, model, ns):
        assert c(model, "pair", ns["a"], ns["b"]) is c(model, "pair", ns["a"], ns["b"])

    def test_arity_checked_at_build(self, model, ns):
        with pytest.raises(UsageError):
            app(model.constructors["pair"], (ns["a"],))


class TestModes:
    def test_sapic_mode_filters_exactly_the_key_derivation_rules(self):
        m = pkenc_sig_model(mode="sapic")
        assert sorted(r.head.name for r in m.filtered_rules) == ["ekofdk", "vkof", "vkofsk"]

    def test_filtered_rules_inactive_in_sapic_mode(self, ns):
        m = pkenc_sig_model(mode="sapic")
        assert eval_destructor(m, m.destructors["ekofdk"], (app(m.constructors["dk"], (ns["n1"],)),)) is None

    def test_filtered_rules_active_in_statverif_mode(self, model, ns):
        assert eval_destructor(model, model.destructors["ekofdk"],
                               (c(model, "dk", ns["n1"]),)) is c(model, "ek", ns["n1"])

    def test_active_sapic_rules_are_subterm_convergent(self):
        m = pkenc_sig_model(mode="sapic")
        for rules in m._by_head.values():
            for r in rules:
                assert T._is_subterm_rule(r), str(r)


class TestModelValidation:
    def test_equal_always_present(self):
        m = make_model([], [], [])
        assert "equal" in m.destructors
        x = nonce_term(fresh_nonce(PROTOCOL))
        assert terms_equal(m, x, x)

    def test_duplicate_symbol_rejected(self):
        f = FuncSymbol("f", 1, T.CONSTRUCTOR)
        with pytest.raises(ModelError):
            make_model([f, f], [], [])

    def test_overlapping_rules_rejected(self):
        h = FuncSymbol("h", 1, T.CONSTRUCTOR)
        dd = FuncSymbol("d", 1, T.DESTRUCTOR)
        r1 = DestructorRule(dd, (app(h, (var("x"),)),), var("x"))
        r2 = DestructorRule(dd, (var("y"),), var("y"))
        with pytest.raises(ModelError):
            make_model([h], [dd], [r1, r2])

    def test_rhs_must_use_lhs_vars(self):
        h = FuncSymbol("h", 1, T.CONSTRUCTOR)
        dd = FuncSymbol("d", 1, T.DESTRUCTOR)
        with pytest.raises(ModelError):
            make_model([h], [dd], [DestructorRule(dd, (app(h, (var("x"),)),), var("z"))])

    def test_growing_rule_refused(self):
        h = FuncSymbol("h", 1, T.CONSTRUCTOR)
        dd = FuncSymbol("d", 1, T.DESTRUCTOR)
        grow = DestructorRule(dd, (app(h, (var("x"),)),), app(h, (app(h, (var("x"),)),)))
        with pytest.raises(ModelError):
            make_model([h], [dd], [grow])


def grammar_holds(model, t):
    if t.kind != T.APP:
        return True
    return model.grammar_ok(t.fn, t.args) and all(grammar_holds(model, a) for a in t.args)


class TestStrictGrammar:
    def test_ill_typed_enc_is_bottom(self, model, ns):
        assert eval_term(model, c(model, "enc", ns["a"], ns["m"], ns["r"])) is None

    def test_non_nonce_randomness_is_bottom(self, model, ns):
        assert eval_term(model, c(model, "enc", c(model, "ek", ns["n1"]), ns["m"],
                                  c(model, "pair", ns["a"], ns["b"]))) is None

    def test_user_models_default_loose(self):
        m = make_model([FuncSymbol("h", 1, T.CONSTRUCTOR)], [], [])
        assert not m.strict_grammar

    def test_grammar_closed_under_evaluation(self):
        import random
        import sys
        sys.path.insert(0, str(__import__("pathlib").Path(__file__).parent))
        from gen import make_gen
        g = make_gen(7)
        m = g.model
        rng = random.Random(11)
        for _ in range(300):
            t = g.term(4)
            assert grammar_holds(m, t)
            dd = rng.choice(list(m.destructors.values()))
            args = tuple(g.term(3) for _ in range(dd.arity))
            out = eval_destructor(m, dd, args)
            if out is not None:
                assert grammar_holds(m, out)


# Equivalence-relation property over random ground messages.
_leaf = st.sampled_from([nonce_term(NonceFactory().fresh(PROTOCOL, f"q{i}")) for i in range(3)])


@st.composite
def ground_messages(draw, depth=3):
    m = pkenc_sig_model()
    if depth <= 1 or draw(st.booleans()):
        return draw(_leaf)
    which = draw(st.integers(0, 2))
    if which == 0:
        return app(m.constructors["pair"],
                   (draw(ground_messages(depth=depth - 1)), draw(ground_messages(depth=depth - 1))))
    if which == 1:
        return app(m.constructors["garbage"], (draw(_leaf),))
    return app(m.constructors["ek"], (draw(_leaf),))


@settings(max_examples=120, deadline=None)
@given(ground_messages(), ground_messages(), ground_messages())
def test_terms_equal_is_an_equivalence(t, u, v):
    m = pkenc_sig_model()
    assert terms_equal(m, t, t)
    assert terms_equal(m, t, u) == terms_equal(m, u, t)
    if terms_equal(m, t, u) and terms_equal(m, u, v):
        assert terms_equal(m, t, v)


def test_pretty_round_trips_structure(model, ns):
    t = c(model, "enc", c(model, "ek", ns["n1"]), c(model, "pair", ns["a"], ns["b"]), ns["r"])
    assert pretty_term(t) == f"enc(ek({ns['n1'].nonce}), pair({ns['a'].nonce}, {ns['b'].nonce}), {ns['r'].nonce})"
