"""Arithmetic expressions over ciphertexts.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { "*" unary } ;
    unary   = "-" unary | power ;
    power   = primary { "^" INT } ;
    primary = INT | NAME | "(" expr ")" ;
    INT     = digit { digit } ;
    NAME    = (letter | "_") { letter | digit | "_" } ;

``^`` binds tightest and takes only a non-negative integer literal;
``-x^2`` is ``-(x^2)``. Literals are encrypted with the public key when the
expression is evaluated, so evaluation never needs the private key.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .cipher import Ciphertext, encrypt_public
from .errors import CapacityError, ExprSyntaxError, UnboundVariableError
from .keys import PublicKey
from .ops import blind_binop, blind_neg, blind_pow


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str  # "+", "-", "*"
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


def Add(left, right):
    return BinOp("+", left, right)


def Sub(left, right):
    return BinOp("-", left, right)


def Mul(left, right):
    return BinOp("*", left, right)


_TOKEN = re.compile(r"(\d+)|([A-Za-z_]\w*)|(\S)")


def _tokenize(text):
    tokens = []
    for m in _TOKEN.finditer(text):
        if m.group(1):
            tokens.append(("int", m.group(1), m.start()))
        elif m.group(2):
            tokens.append(("name", m.group(2), m.start()))
        else:
            ch = m.group(3)
            if ch not in "+-*^()":
                raise ExprSyntaxError(f"unknown token {ch!r}", text, m.start())
            tokens.append(("op", ch, m.start()))
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, self.text, tok[2])

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[:2] == ("op", "*"):
            self.take()
            node = BinOp("*", node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.primary()
        while self.peek()[:2] == ("op", "^"):
            self.take()
            tok = self.peek()
            if tok[0] != "int":
                raise self.error("exponent must be a non-negative integer literal", tok)
            self.take()
            node = Pow(node, int(tok[1]))
        return node

    def primary(self):
        tok = self.take()
        kind, value, _ = tok
        if kind == "int":
            return Lit(int(value))
        if kind == "name":
            return Var(value)
        if tok[:2] == ("op", "("):
            node = self.expr()
            if self.peek()[:2] != ("op", ")"):
                raise self.error("unbalanced parenthesis: expected ')'")
            self.take()
            return node
        if kind == "end":
            raise self.error("unexpected end of expression", tok)
        raise self.error(f"unexpected {value!r}", tok)


def parse_expr(text: str):
    return _Parser(text).parse()


def variables(node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Lit):
        return set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, Pow):
        return variables(node.base)
    return variables(node.left) | variables(node.right)


def eval_plain(node, env: dict[str, int]) -> int:
    """Evaluate over plaintext integers (the reference for blind evaluation)."""
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariableError(node.name) from None
    if isinstance(node, Neg):
        return -eval_plain(node.operand, env)
    if isinstance(node, Pow):
        return eval_plain(node.base, env) ** node.exponent
    left, right = eval_plain(node.left, env), eval_plain(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    return left * right


@dataclass(frozen=True)
class Plan:
    """Static bookkeeping for a subtree.

    ``order`` is the number of amplification factors, ``terms`` an upper
    bound on the monomial count ``w``, ``bound`` an upper bound on the
    magnitude of the amplified value ``a**order * f + noise``.
    """

    order: int
    terms: int
    bound: int


def plan_expr(node, pk: PublicKey, orders: dict[str, int] | None = None) -> Plan:
    """Capacity plan for ``node``; raises :class:`CapacityError` on overflow.

    Variables are assumed bounded by the public key's envelope ``max_p``;
    randomization noise is below ``a`` (keys guarantee ``eta_max < a``).
    """
    orders = orders or {}
    a, limit = pk.a, pk.mset.product // 2

    def walk(n) -> Plan:
        if isinstance(n, Lit):
            p = Plan(1, 1, a * abs(n.value))
        elif isinstance(n, Var):
            t = orders.get(n.name, 1)
            p = Plan(t, 1, a**t * (pk.envelope.max_p + 1))
        elif isinstance(n, Neg):
            p = walk(n.operand)
        elif isinstance(n, Pow):
            if n.exponent < 1:
                raise ValueError("x^0 is not supported: exponents must be >= 1")
            inner = walk(n.base)
            p = Plan(inner.order * n.exponent, inner.terms**n.exponent, inner.bound**n.exponent)
        else:
            lhs, rhs = walk(n.left), walk(n.right)
            if n.op == "*":
                p = Plan(lhs.order + rhs.order, lhs.terms * rhs.terms, lhs.bound * rhs.bound)
            else:
                t = max(lhs.order, rhs.order)
                bound = lhs.bound * a ** (t - lhs.order) + rhs.bound * a ** (t - rhs.order)
                p = Plan(t, lhs.terms + rhs.terms, bound)
        if p.bound >= limit:
            raise CapacityError(
                f"expression needs a modulus product above {2 * p.bound} "
                f"(order t={p.order}, terms w={p.terms}) but only "
                f"{pk.mset.product} is available",
                required=2 * p.bound + 1,
                available=pk.mset.product,
            )
        return p

    return walk(node)


def eval_expr(node, env: dict[str, Ciphertext], pk: PublicKey | None = None) -> Ciphertext:
    """Evaluate ``node`` blindly over the ciphertexts bound in ``env``."""
    if isinstance(node, str):
        node = parse_expr(node)
    for name in sorted(variables(node)):
        if name not in env:
            raise UnboundVariableError(name)
    if pk is None:
        if not env:
            raise ValueError("a public key is needed when no variables are bound")
        pk = next(iter(env.values())).pk
    plan_expr(node, pk, {k: v.order for k, v in env.items()})

    def walk(n) -> Ciphertext:
        if isinstance(n, Lit):
            return encrypt_public(n.value, pk)
        if isinstance(n, Var):
            return env[n.name]
        if isinstance(n, Neg):
            return blind_neg(walk(n.operand))
        if isinstance(n, Pow):
            return blind_pow(walk(n.base), n.exponent)
        op = {"+": "add", "-": "sub", "*": "mul"}[n.op]
        return blind_binop(op, walk(n.left), walk(n.right))

    return walk(node)


def error_bound(node, values: dict[str, int], a: int, eta_max: int) -> Fraction:
    """Upper bound on ``|decrypt_raw - f|`` for fresh private encryptions.

    Each variable carries noise ``eta/a`` with ``0 <= eta < eta_max``;
    literals are public encryptions and carry none. Products propagate
    ``|X e2| + |Y e1| + |e1 e2|``. Decryption in nearest mode is exact when
    the bound is below 1/2.
    """
    leaf = Fraction(eta_max, a)

    def walk(n):
        # returns (|value|, error bound)
        if isinstance(n, Lit):
            return abs(n.value), Fraction(0)
        if isinstance(n, Var):
            return abs(values[n.name]), leaf
        if isinstance(n, Neg):
            return walk(n.operand)
        if isinstance(n, Pow):
            v, e = walk(n.base)
            acc_v, acc_e = v, e
            for _ in range(n.exponent - 1):
                acc_v, acc_e = acc_v * v, acc_v * e + v * acc_e + acc_e * e
            return acc_v, acc_e
        (lv, le), (rv, re_) = walk(n.left), walk(n.right)
        if n.op == "*":
            return lv * rv, lv * re_ + rv * le + le * re_
        return lv + rv, le + re_

    return walk(node)[1]
