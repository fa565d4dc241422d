import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cmpswhe import fixtures
from cmpswhe.cipher import decrypt, decrypt_raw, encrypt_private, encrypt_public
from cmpswhe.errors import CapacityError, ExprSyntaxError, ModulusMismatchError, OrderError, UnboundVariableError
from cmpswhe.expr import Add, BinOp, Lit, Mul, Neg, Pow, Sub, Var, error_bound, eval_expr, eval_plain, parse_expr, plan_expr
from cmpswhe.ops import (
    blind_add,
    blind_binop,
    blind_cumsum,
    blind_mul,
    blind_neg,
    blind_pow,
    blind_square,
    blind_sub,
    blind_sum,
    homogenize,
    semiblind,
)

from .exprgen import python_value, random_expr


def enc(sk, p, seed=0, **kw):
    return encrypt_private(p, sk, random.Random(seed), **kw)


def test_homogenize_identity(sk):
    ct = enc(sk, 9)
    assert homogenize(ct, 1) is ct


def test_homogenize_raises_order(sk):
    ct = homogenize(enc(sk, 1234), 2)
    assert ct.order == 2
    assert decrypt(ct, sk) == 1234


def test_homogenize_cannot_lower(sk):
    ct = blind_mul(enc(sk, 2), enc(sk, 3))
    with pytest.raises(OrderError):
        homogenize(ct, 1)


def test_homogenize_residues_scaled_by_a(sk):
    ct = enc(sk, 5)
    up = homogenize(ct, 3)
    m, u = ct.matrix(), up.matrix()
    for i, b in enumerate(sk.mset.moduli):
        factor = pow(sk.a, 2, b)
        assert all(int(u[i, j]) == int(m[i, j]) * factor % b for j in range(sk.m_slots))


def test_mixed_order_addition(sk):
    rng = random.Random(3)
    for _ in range(20):
        x, y, z = (rng.randrange(1000) for _ in range(3))
        r = blind_add(blind_mul(enc(sk, x, 1), enc(sk, y, 2)), enc(sk, z, 3))
        assert r.order == 2
        assert decrypt(r, sk) == x * y + z


def test_worked_add_correct_slots(worked):
    _, sk = worked
    s = blind_add(enc(sk, 68, eta=10), enc(sk, 78, eta=7))
    m = s.matrix()
    assert tuple(int(m[i, t]) for i, t in enumerate(sk.template)) == (9, 21, 30)


@pytest.mark.parametrize(
    "fn, expected",
    [
        (lambda sk: blind_sub(enc(sk, 77, 1), enc(sk, 77, 2)), 0),
        (lambda sk: blind_mul(enc(sk, 12, 1), enc(sk, 11, 2)), 132),
        (lambda sk: blind_neg(enc(sk, 5)), -5),
        (lambda sk: blind_pow(enc(sk, 7), 2), 49),
        (lambda sk: blind_pow(enc(sk, 3), 3), 27),
        (lambda sk: semiblind("mul", enc(sk, 6), 7), 42),
        (lambda sk: semiblind("sub", enc(sk, 10), 3), 7),
        (lambda sk: semiblind("add", enc(sk, 31), 0), 31),
        (lambda sk: blind_square(enc(sk, -9)), 81),
        (lambda sk: blind_add(enc(sk, 8), blind_neg(enc(sk, 8, 4))), 0),
    ],
)
def test_operation_examples(sk, fn, expected):
    assert decrypt(fn(sk), sk) == expected


def test_neg_is_an_involution(sk):
    ct = enc(sk, 123)
    assert blind_neg(blind_neg(ct)) == ct


def test_pow_one_is_identity(sk):
    ct = enc(sk, 4)
    assert blind_pow(ct, 1) == ct


@pytest.mark.parametrize("k", [0, -1, 1.5])
def test_pow_rejects_bad_exponents(sk, k):
    with pytest.raises(ValueError):
        blind_pow(enc(sk, 2), k)


def test_order_overflow_is_a_capacity_error(sk):
    with pytest.raises(CapacityError):
        blind_pow(enc(sk, 2), 13)


def test_semiblind_equals_public_operand(sk):
    ct = enc(sk, 21)
    for op in ("add", "sub", "mul"):
        assert semiblind(op, ct, 4) == blind_binop(op, ct, encrypt_public(4, sk.pk))


def test_group_mismatch(sk, fast_keys):
    with pytest.raises(ModulusMismatchError):
        blind_add(enc(sk, 1), enc(fast_keys[1], 1))


def test_unknown_operation(sk):
    with pytest.raises(ValueError):
        blind_binop("div", enc(sk, 1), enc(sk, 2))


def test_slot_uniform_propagation(sk):
    pub = encrypt_public(3, sk.pk)
    assert blind_add(pub, pub).slot_uniform
    assert not blind_add(pub, enc(sk, 3)).slot_uniform


@given(
    ox=st.integers(1, 3), oy=st.integers(1, 3), k=st.integers(1, 3),
    op=st.sampled_from(["add", "sub", "mul"]),
)
def test_order_bookkeeping(fast_keys, ox, oy, k, op):
    _, sk = fast_keys
    x = homogenize(enc(sk, 2), ox) if ox > 1 else enc(sk, 2)
    y = homogenize(enc(sk, 3), oy) if oy > 1 else enc(sk, 3)
    if op == "mul":
        if ox + oy > 6:
            return
        assert blind_binop(op, x, y).order == ox + oy
    else:
        assert blind_binop(op, x, y).order == max(ox, oy)
    if ox * k <= 6:
        assert blind_pow(x, k).order == ox * k


@given(x=st.integers(0, 65535), y=st.integers(0, 65535), seed=st.integers(0, 10**6))
def test_subtraction_residues_never_negative(sk, x, y, seed):
    d = blind_sub(enc(sk, x, seed), enc(sk, y, seed + 1))
    m = d.matrix()
    for i, b in enumerate(sk.mset.moduli):
        assert all(0 <= int(v) < b for v in m[i])
    assert decrypt(d, sk) == x - y


@given(values=st.lists(st.integers(0, 1024), min_size=1, max_size=40), seed=st.integers(0, 10**6))
def test_additive_error_bound(sk, values, seed):
    rng = random.Random(seed)
    total = blind_sum(encrypt_private(values, sk, rng))
    err = decrypt_raw(total, sk) - sum(values)
    assert 0 <= err < Fraction(len(values) * sk.eta_max, sk.a)


@given(x=st.integers(0, 4096), y=st.integers(0, 4096), seed=st.integers(0, 10**6))
def test_multiplicative_error_identity(sk, x, y, seed):
    rng = random.Random(seed)
    e1, e2 = rng.randrange(sk.eta_max), rng.randrange(sk.eta_max)
    prod = blind_mul(encrypt_private(x, sk, rng, eta=e1), encrypt_private(y, sk, rng, eta=e2))
    a = sk.a
    assert decrypt_raw(prod, sk) - x * y == Fraction(e1 * y + e2 * x, a) + Fraction(e1 * e2, a * a)


def test_blind_sum_and_cumsum(sk):
    vals = np.arange(12).reshape(3, 4)
    ct = encrypt_private(vals, sk, random.Random(0))
    assert list(decrypt(blind_sum(ct, axis=0), sk)) == list(vals.sum(axis=0))
    assert list(decrypt(blind_sum(ct, axis=-1), sk)) == list(vals.sum(axis=1))
    assert decrypt(blind_cumsum(ct, axis=1), sk).tolist() == vals.cumsum(axis=1).tolist()
    with pytest.raises(ValueError):
        blind_sum(ct, axis=2)


# ------------------------------------------------------------------ parser

@pytest.mark.parametrize(
    "text, tree",
    [
        ("(x*y)+z", Add(Mul(Var("x"), Var("y")), Var("z"))),
        ("x^2 - 3*y", Sub(Pow(Var("x"), 2), Mul(Lit(3), Var("y")))),
        ("-x^2", Neg(Pow(Var("x"), 2))),
        ("a - b - c", Sub(Sub(Var("a"), Var("b")), Var("c"))),
        ("2*-x", Mul(Lit(2), Neg(Var("x")))),
        ("x^2^3", Pow(Pow(Var("x"), 2), 3)),
        ("  long_name1 ", Var("long_name1")),
    ],
)
def test_parse_examples(text, tree):
    assert parse_expr(text) == tree


@pytest.mark.parametrize("text", ["x^y", "(x+y", "x+)", "x $ y", "", "x^-1", "3 4", "x^"])
def test_parse_errors(text):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(text)
    assert isinstance(info.value, SyntaxError)


def test_syntax_error_reports_position():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr("x + $")
    assert info.value.pos == 4


def test_parser_agrees_with_python():
    rng = random.Random(42)
    for _ in range(500):
        text = random_expr(rng, 4)
        env = {k: rng.randrange(-50, 50) for k in "xyz"}
        assert eval_plain(parse_expr(text), env) == python_value(text, env)


def test_worked_expression(worked):
    pk, sk = worked
    x, y = fixtures.figure_ciphertexts(pk)
    assert decrypt(eval_expr("x+y", {"x": x, "y": y}), sk, "floor") == 146


def test_eval_examples(sk):
    env = {k: enc(sk, v, i) for i, (k, v) in enumerate({"x": 3, "y": 4, "z": 5}.items())}
    assert decrypt(eval_expr("x*y+z", env), sk) == 17
    assert decrypt(eval_expr("x-x", env), sk) == 0
    assert decrypt(eval_expr("2*x^2 - 3*y + 7", env), sk) == 13


def test_eval_unbound_variable(sk):
    with pytest.raises(UnboundVariableError) as info:
        eval_expr("x+w", {"x": enc(sk, 1)})
    assert "w" in str(info.value)


def test_eval_capacity_reports_sizes(sk):
    with pytest.raises(CapacityError) as info:
        eval_expr("x^20", {"x": enc(sk, 2)})
    assert info.value.required > info.value.available == sk.mset.product


def test_plan_tracks_order_and_terms(pk):
    plan = plan_expr(parse_expr("(x+y)*(x+z) + 3"), pk)
    assert plan.order == 2
    assert plan.terms == 5


def test_error_bound_covers_observed_error(sk):
    rng = random.Random(5)
    node = parse_expr("x*y*z + x^2")
    for _ in range(20):
        vals = {k: rng.randrange(1025) for k in "xyz"}
        env = {k: encrypt_private(v, sk, rng) for k, v in vals.items()}
        err = abs(decrypt_raw(eval_expr(node, env), sk) - eval_plain(node, vals))
        assert err <= error_bound(node, vals, sk.a, sk.eta_max) < Fraction(1, 2)
