"""Immutable expression trees: parsing, printing, differentiation, evaluation.

Nodes are hash-consed: building the same structure twice returns the same
object, so structural equality is identity and derivatives of repeated
subexpressions are shared.  Construction applies constant folding and a
handful of local identities (``x+0``, ``x*1``, ``x*0``, ``x^1``, ``x^0``,
``c1*(c2*u)``, ``u+u``, ``u*u``); nothing attempts a canonical form.

Constants written in the source text are exact :class:`fractions.Fraction`
values.  Transcendental folds (``exp(1)``, ``sqrt(2)``) degrade to floats.
"""

from __future__ import annotations

import math
import re
import threading
import weakref
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import DomainError, EvalError, ParseError

__all__ = [
    "Expr",
    "const",
    "var",
    "parse",
    "diff",
    "evaluate",
    "equiv_numeric",
    "substitute",
    "as_expr",
    "to_string",
    "tree_size",
    "dag_size",
    "evaluate_many",
    "matrix_det",
    "matrix_inverse",
    "ZERO",
    "ONE",
]

CONST = "const"
VAR = "var"
ADD = "add"
SUB = "sub"
MUL = "mul"
DIV = "div"
POW = "pow"
EXP = "exp"
LOG = "log"
SQRT = "sqrt"
NEG = "neg"

FUNCTIONS = (EXP, LOG, SQRT)

_intern = weakref.WeakValueDictionary()
_intern_lock = threading.Lock()


class Expr:
    """A node of an expression tree.

    Do not instantiate directly; use :func:`const`, :func:`var`,
    :func:`parse` or the arithmetic operators.
    """

    __slots__ = ("kind", "args", "value", "free", "__weakref__")

    def __init__(self, kind, args, value):
        self.kind = kind
        self.args = args
        self.value = value
        if kind == VAR:
            self.free = frozenset((value,))
        elif args:
            self.free = frozenset().union(*(a.free for a in args))
        else:
            self.free = frozenset()

    def __setattr__(self, name, value):
        if hasattr(self, "free"):
            raise AttributeError("Expr nodes are immutable")
        object.__setattr__(self, name, value)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __rpow__(self, other):
        return power(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    @property
    def is_const(self):
        return self.kind == CONST

    def __str__(self):
        return to_string(self)

    def __repr__(self):
        text = to_string(self, limit=200)
        return f"Expr({text!r})"

    def __reduce__(self):
        return (parse, (to_string(self),))


def _node(kind, args=(), value=None):
    if kind == CONST:
        key = (kind, type(value), value)
    else:
        key = (kind, value, tuple(id(a) for a in args))
    with _intern_lock:
        node = _intern.get(key)
        if node is None:
            node = Expr(kind, tuple(args), value)
            _intern[key] = node
    return node


def const(value) -> Expr:
    """Constant node.  Integers and Fractions stay exact; floats stay floats."""
    if isinstance(value, (bool, np.bool_)):
        value = int(value)
    if isinstance(value, (int, np.integer)):
        value = Fraction(int(value))
    elif isinstance(value, (float, np.floating)):
        value = float(value)
        if value.is_integer():
            value = Fraction(int(value))
    elif not isinstance(value, Fraction):
        raise TypeError(f"cannot make a constant from {value!r}")
    return _node(CONST, (), value)


def var(name: str) -> Expr:
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
        raise ValueError(f"invalid variable name {name!r}")
    return _node(VAR, (), name)


ZERO = const(0)
ONE = const(1)
TWO = const(2)


def as_expr(obj) -> Expr:
    if isinstance(obj, Expr):
        return obj
    if isinstance(obj, str):
        return parse(obj)
    return const(obj)


# ---------------------------------------------------------------------------
# construction with folding
# ---------------------------------------------------------------------------


def _is_zero(e):
    return e.kind == CONST and e.value == 0


def _is_one(e):
    return e.kind == CONST and e.value == 1


def _usable(v):
    if isinstance(v, Fraction):
        return True
    return isinstance(v, float) and math.isfinite(v)


def _fold_pow(a, b):
    """Exact power of constants, or None when it must stay symbolic."""
    try:
        if isinstance(b, Fraction) and b.denominator == 1:
            if a == 0 and b < 0:
                return None
            if isinstance(a, Fraction):
                return a ** int(b)
            r = a ** int(b)
        else:
            if a < 0:
                return None
            if a == 0:
                return Fraction(0) if b > 0 else None
            if isinstance(a, Fraction) and isinstance(b, Fraction):
                root = _exact_root(a, b.denominator)
                if root is not None:
                    return root ** b.numerator
            r = float(a) ** float(b)
    except (OverflowError, ZeroDivisionError):
        return None
    return r if _usable(r) else None


def _exact_root(q, n):
    def iroot(k):
        if k < 0:
            return None
        r = round(k ** (1.0 / n))
        for c in (r - 1, r, r + 1):
            if c >= 0 and c**n == k:
                return c
        return None

    if q < 0 or q.numerator > 10**300 or q.denominator > 10**300:
        return None
    p, d = iroot(q.numerator), iroot(q.denominator)
    if p is None or d is None:
        return None
    return Fraction(p, d)


def _split(e):
    """Write e as coefficient * rest."""
    if e.kind == MUL and e.args[0].kind == CONST:
        return e.args[0].value, e.args[1]
    if e.kind == NEG:
        c, u = _split(e.args[0])
        return -c, u
    return Fraction(1), e


def _scaled(c, u):
    if c == 0:
        return ZERO
    if c == 1:
        return u
    if u is ONE:
        return const(c)
    if c == -1:
        return neg(u)
    return _node(MUL, (const(c), u))


def _base_exp(e):
    if e.kind == POW and e.args[1].kind == CONST:
        return e.args[0], e.args[1].value
    return e, Fraction(1)


def add(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        r = a.value + b.value
        if _usable(r):
            return const(r)
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    ca, ua = _split(a)
    cb, ub = _split(b)
    if ua is ub:
        return _scaled(ca + cb, ua)
    if b.kind == NEG:
        return sub(a, b.args[0])
    if b.kind == CONST and b.value < 0:
        return sub(a, const(-b.value))
    return _node(ADD, (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        r = a.value - b.value
        if _usable(r):
            return const(r)
    if _is_zero(b):
        return a
    if _is_zero(a):
        return neg(b)
    ca, ua = _split(a)
    cb, ub = _split(b)
    if ua is ub:
        return _scaled(ca - cb, ua)
    if b.kind == NEG:
        return add(a, b.args[0])
    if b.kind == CONST and b.value < 0:
        return add(a, const(-b.value))
    return _node(SUB, (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        r = a.value * b.value
        if _usable(r):
            return const(r)
    if _is_zero(a) or _is_zero(b):
        return ZERO
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if b.kind == CONST:
        a, b = b, a
    if a.kind == CONST:
        cb, ub = _split(b)
        return _scaled(a.value * cb, ub)
    ca, ua = _split(a)
    cb, ub = _split(b)
    if ca != 1 or cb != 1:
        return _scaled(ca * cb, mul(ua, ub))
    ba, pa = _base_exp(a)
    bb, pb = _base_exp(b)
    if ba is bb:
        return power(ba, const(pa + pb))
    return _node(MUL, (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if b.kind == CONST:
        if b.value == 0:
            return _node(DIV, (a, b))
        if a.kind == CONST:
            r = a.value / b.value
            if _usable(r):
                return const(r)
        inv = 1 / b.value
        if _usable(inv):
            return mul(const(inv), a)
        return _node(DIV, (a, b))
    if _is_zero(a):
        return ZERO
    if a is b:
        return ONE
    ca, ua = _split(a)
    if ca != 1 and ua is not ONE:
        return _scaled(ca, div(ua, b))
    cb, ub = _split(b)
    if cb != 1 and _usable(1 / cb):
        return _scaled(1 / cb, div(a, ub))
    ba, pa = _base_exp(a)
    bb, pb = _base_exp(b)
    if ba is bb:
        return power(ba, const(pa - pb))
    return _node(DIV, (a, b))


def power(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        r = _fold_pow(a.value, b.value)
        if r is not None:
            return const(r)
    if b.kind == CONST:
        if b.value == 0:
            return ONE
        if b.value == 1:
            return a
        integral = isinstance(b.value, Fraction) and b.value.denominator == 1
        if integral and a.kind == POW and a.args[1].kind == CONST:
            return power(a.args[0], const(a.args[1].value * b.value))
        if integral and a.kind in (MUL, NEG):
            c, u = _split(a)
            if c != 1:
                cc = _fold_pow(c, b.value)
                if cc is not None:
                    return _scaled(cc, power(u, b))
    if _is_one(a):
        return ONE
    return _node(POW, (a, b))


def neg(a: Expr) -> Expr:
    if a.kind == CONST:
        return const(-a.value)
    if a.kind == NEG:
        return a.args[0]
    if a.kind == MUL and a.args[0].kind == CONST:
        return _scaled(-a.args[0].value, a.args[1])
    return _node(NEG, (a,))


def exp(a: Expr) -> Expr:
    a = as_expr(a)
    if a.kind == CONST:
        if a.value == 0:
            return ONE
        try:
            r = math.exp(a.value)
        except OverflowError:
            r = math.inf
        if _usable(r):
            return const(r)
    return _node(EXP, (a,))


def log(a: Expr) -> Expr:
    a = as_expr(a)
    if a.kind == CONST and a.value > 0:
        if a.value == 1:
            return ZERO
        return const(math.log(a.value))
    if a.kind == EXP:
        return a.args[0]
    return _node(LOG, (a,))


def sqrt(a: Expr) -> Expr:
    a = as_expr(a)
    if a.kind == CONST and a.value >= 0:
        if isinstance(a.value, Fraction):
            root = _exact_root(a.value, 2)
            if root is not None:
                return const(root)
        return const(math.sqrt(a.value))
    return _node(SQRT, (a,))


_BUILDERS = {EXP: exp, LOG: log, SQRT: sqrt}


def _rebuild(e, args):
    kind = e.kind
    if kind == ADD:
        return add(*args)
    if kind == SUB:
        return sub(*args)
    if kind == MUL:
        return mul(*args)
    if kind == DIV:
        return div(*args)
    if kind == POW:
        return power(*args)
    if kind == NEG:
        return neg(args[0])
    return _BUILDERS[kind](args[0])


# ---------------------------------------------------------------------------
# differentiation and substitution
# ---------------------------------------------------------------------------


def diff(e, name: str, memo: dict | None = None) -> Expr:
    """Exact derivative of ``e`` with respect to variable ``name``.

    Every other variable is held constant.  ``memo`` may be shared across
    calls by a caller that owns the lifetime of the expressions (the moment
    tables do); by default each call starts fresh.
    """
    e = as_expr(e)
    if memo is None:
        memo = {}
    return _diff(e, name, memo)


def _diff(e, name, memo):
    if name not in e.free:
        return ZERO
    if e.kind == VAR:
        return ONE
    key = (id(e), name)
    hit = memo.get(key)
    if hit is not None:
        return hit[1]
    kind = e.kind
    if kind == ADD:
        a, b = e.args
        r = add(_diff(a, name, memo), _diff(b, name, memo))
    elif kind == SUB:
        a, b = e.args
        r = sub(_diff(a, name, memo), _diff(b, name, memo))
    elif kind == MUL:
        a, b = e.args
        r = add(mul(_diff(a, name, memo), b), mul(a, _diff(b, name, memo)))
    elif kind == DIV:
        a, b = e.args
        if name not in b.free:
            r = div(_diff(a, name, memo), b)
        elif name not in a.free:
            r = neg(div(mul(a, _diff(b, name, memo)), power(b, TWO)))
        else:
            num = sub(mul(_diff(a, name, memo), b), mul(a, _diff(b, name, memo)))
            r = div(num, power(b, TWO))
    elif kind == POW:
        a, b = e.args
        if name not in b.free:
            r = mul(mul(b, power(a, sub(b, ONE))), _diff(a, name, memo))
        elif name not in a.free:
            r = mul(mul(e, log(a)), _diff(b, name, memo))
        else:
            inner = add(mul(_diff(b, name, memo), log(a)), div(mul(b, _diff(a, name, memo)), a))
            r = mul(e, inner)
    elif kind == EXP:
        r = mul(e, _diff(e.args[0], name, memo))
    elif kind == LOG:
        r = div(_diff(e.args[0], name, memo), e.args[0])
    elif kind == SQRT:
        r = div(_diff(e.args[0], name, memo), mul(TWO, e))
    elif kind == NEG:
        r = neg(_diff(e.args[0], name, memo))
    else:  # pragma: no cover
        raise AssertionError(kind)
    memo[key] = (e, r)
    return r


def substitute(e, mapping: Mapping[str, object]) -> Expr:
    """Simultaneously replace variables by expressions (or numbers)."""
    e = as_expr(e)
    repl = {k: as_expr(v) for k, v in mapping.items()}
    memo = {}

    def go(node):
        if not (node.free & repl.keys()):
            return node
        if node.kind == VAR:
            return repl[node.value]
        hit = memo.get(id(node))
        if hit is not None:
            return hit[1]
        r = _rebuild(node, [go(a) for a in node.args])
        memo[id(node)] = (node, r)
        return r

    return go(e)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def evaluate(e, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` in double precision.

    Raises :class:`EvalError` for unbound variables and
    :class:`DomainError` (naming the subtree) for log of a non-positive
    number, division by zero, and similar.
    """
    e = as_expr(e)
    missing = e.free - bindings.keys()
    if missing:
        raise EvalError(f"unbound variable(s): {', '.join(sorted(missing))}")
    env = {k: float(v) for k, v in bindings.items() if k in e.free}
    return _eval(e, env, {})


def _eval(e, env, memo):
    kind = e.kind
    if kind == CONST:
        return float(e.value)
    if kind == VAR:
        return env[e.value]
    hit = memo.get(id(e))
    if hit is not None:
        return hit
    vals = [_eval(a, env, memo) for a in e.args]
    try:
        if kind == ADD:
            r = vals[0] + vals[1]
        elif kind == SUB:
            r = vals[0] - vals[1]
        elif kind == MUL:
            r = vals[0] * vals[1]
        elif kind == DIV:
            if vals[1] == 0:
                raise DomainError("division by zero", _short(e))
            r = vals[0] / vals[1]
        elif kind == POW:
            base, ex = vals
            if base < 0 and not float(ex).is_integer():
                raise DomainError("negative base with non-integer exponent", _short(e))
            if base == 0 and ex < 0:
                raise DomainError("zero raised to a negative power", _short(e))
            r = base**ex
        elif kind == EXP:
            r = math.exp(vals[0])
        elif kind == LOG:
            if vals[0] <= 0:
                raise DomainError("log of non-positive value", _short(e))
            r = math.log(vals[0])
        elif kind == SQRT:
            if vals[0] < 0:
                raise DomainError("sqrt of negative value", _short(e))
            r = math.sqrt(vals[0])
        else:
            r = -vals[0]
    except OverflowError:
        raise DomainError("overflow", _short(e)) from None
    if isinstance(r, complex) or not math.isfinite(r):
        raise DomainError("non-finite result", _short(e))
    memo[id(e)] = r
    return r


def _short(e):
    return to_string(e, limit=120)


def equiv_numeric(e1, e2, domain: Mapping[str, tuple], trials: int = 32,
                  tol: float = 1e-10, seed: int = 0, fixed: Mapping[str, float] | None = None) -> bool:
    """Probabilistic equality test of two expressions.

    Samples ``trials`` points uniformly (seeded) from the box ``domain``;
    points where either side is out of its domain are skipped.  ``fixed``
    binds variables that should not be sampled.
    """
    e1, e2 = as_expr(e1), as_expr(e2)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    fixed = dict(fixed or {})
    names = sorted(domain)
    for n in names:
        lo, hi = domain[n]
        if not hi > lo:
            raise ValueError(f"degenerate range for {n}: {domain[n]}")
    unbound = (e1.free | e2.free) - set(names) - fixed.keys()
    if unbound:
        raise EvalError(f"unbound variable(s): {', '.join(sorted(unbound))}")
    rng = np.random.default_rng(seed)
    used = 0
    for _ in range(trials):
        point = dict(fixed)
        for n in names:
            lo, hi = domain[n]
            point[n] = float(rng.uniform(lo, hi))
        try:
            v1 = evaluate(e1, point)
            v2 = evaluate(e2, point)
        except DomainError:
            continue
        used += 1
        if abs(v1 - v2) > tol * (1 + abs(v1)):
            return False
    if used == 0:
        raise DomainError("every sampled point was outside the domain")
    return True


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

_PREC = {ADD: 1, SUB: 1, MUL: 2, DIV: 2, NEG: 3, POW: 4}


def _const_text(v):
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator), (3 if v < 0 else 5)
        return f"{v.numerator}/{v.denominator}", (3 if v < 0 else 2)
    text = repr(v)
    return text, (3 if v < 0 else 5)


def _prec(e):
    if e.kind == CONST:
        return _const_text(e.value)[1]
    return _PREC.get(e.kind, 5)


def to_string(e, limit: int | None = None) -> str:
    """Print with the minimal parentheses the grammar needs.

    ``limit`` truncates very large trees (printing expands shared
    subexpressions, so the text can be exponentially longer than the DAG).
    """
    e = as_expr(e)
    if limit is not None:
        size = tree_size(e)
        if size > limit:
            head = _render(e)[:limit] if size < 10**5 else e.kind
            return f"{head}... <{size} nodes>"
    return _render(e)


def _render(e):
    memo = {}

    def wrap(child, min_prec):
        text = go(child)
        return f"({text})" if _prec(child) < min_prec else text

    def go(node):
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        k = node.kind
        if k == CONST:
            s = _const_text(node.value)[0]
        elif k == VAR:
            s = node.value
        elif k in FUNCTIONS:
            s = f"{k}({go(node.args[0])})"
        elif k == NEG:
            s = "-" + wrap(node.args[0], 3)
        elif k == POW:
            s = f"{wrap(node.args[0], 5)}^{wrap(node.args[1], 3)}"
        else:
            op = {ADD: " + ", SUB: " - ", MUL: "*", DIV: "/"}[k]
            p = _PREC[k]
            left = wrap(node.args[0], p)
            right_min = p + 1
            right = node.args[1]
            if _prec(right) == 3:
                # keep "a - -b" readable
                right_min = 4
            s = left + op + wrap(right, right_min)
        memo[id(node)] = s
        return s

    return go(e)


def tree_size(e) -> int:
    """Number of nodes in the fully expanded tree."""
    memo = {}

    def go(node):
        hit = memo.get(id(node))
        if hit is None:
            hit = 1 + sum(go(a) for a in node.args)
            memo[id(node)] = hit
        return hit

    return go(as_expr(e))


def dag_size(e) -> int:
    """Number of distinct nodes."""
    seen = set()
    stack = [as_expr(e)]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.extend(node.args)
    return len(seen)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    raw = text.encode()
    while True:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if rest.strip() == "":
                break
            start = pos + (len(rest) - len(rest.lstrip()))
            raise ParseError(f"unexpected character {text[start]!r}",
                             len(text[:start].encode()), {"NUMBER", "IDENT", "(", "-"})
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind if kind != "op" else m.group(kind), m.group(kind), len(text[:start].encode())))
        pos = m.end()
    tokens.append(("EOF", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind):
        tok = self.peek()
        if tok[0] != kind:
            raise ParseError(f"unexpected {_describe(tok)}", tok[2], {kind})
        return self.take()

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.take()
            return neg(self.unary())
        return self.factor()

    def factor(self):
        base = self.base()
        if self.peek()[0] == "^":
            self.take()
            return power(base, self.unary())
        return base

    def base(self):
        tok = self.peek()
        kind = tok[0]
        if kind == "number":
            self.take()
            return const(Fraction(tok[1]))
        if kind == "ident":
            self.take()
            if self.peek()[0] == "(":
                if tok[1] not in FUNCTIONS:
                    raise ParseError(f"unknown function {tok[1]!r}", tok[2], set(FUNCTIONS))
                self.take()
                arg = self.expr()
                self.expect(")")
                return _BUILDERS[tok[1]](arg)
            return var(tok[1])
        if kind == "(":
            self.take()
            inner = self.expr()
            self.expect(")")
            return inner
        raise ParseError(f"unexpected {_describe(tok)}", tok[2], {"NUMBER", "IDENT", "("})


def _describe(tok):
    return "end of input" if tok[0] == "EOF" else repr(tok[1])


def parse(text: str) -> Expr:
    """Parse an arithmetic expression.

    Grammar::

        expr   := term (("+"|"-") term)*
        term   := unary (("*"|"/") unary)*
        unary  := "-" unary | factor
        factor := base ("^" unary)?
        base   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

    >>> str(parse("x*(1-x/n)"))
    'x*(1 - x/n)'
    """
    p = _Parser(text)
    node = p.expr()
    tok = p.peek()
    if tok[0] != "EOF":
        raise ParseError(f"unexpected {_describe(tok)}", tok[2], {"+", "-", "*", "/", "^", "EOF"})
    return node


# ---------------------------------------------------------------------------
# small symbolic matrices
# ---------------------------------------------------------------------------


def matrix_det(m):
    """Determinant of a square matrix of Expr by cofactor expansion (size <= 4)."""
    n = len(m)
    if n == 1:
        return as_expr(m[0][0])
    if n > 4:
        raise ValueError("symbolic determinant limited to size 4")
    total = ZERO
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = mul(as_expr(m[0][j]), matrix_det(minor))
        total = add(total, term) if j % 2 == 0 else sub(total, term)
    return total


def matrix_inverse(m):
    """Inverse of a square Expr matrix via adjugate and determinant (size <= 4)."""
    n = len(m)
    m = [[as_expr(v) for v in row] for row in m]
    det = matrix_det(m)
    if n == 1:
        return [[div(ONE, det)]]
    inv = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(m) if k != i]
            cof = matrix_det(minor)
            if (i + j) % 2:
                cof = neg(cof)
            inv[j][i] = div(cof, det)
    return inv


def evaluate_many(exprs, bindings: Mapping[str, float]) -> list[float]:
    """Evaluate several expressions sharing one subexpression cache."""
    exprs = [as_expr(e) for e in exprs]
    free = frozenset().union(*(e.free for e in exprs)) if exprs else frozenset()
    missing = free - bindings.keys()
    if missing:
        raise EvalError(f"unbound variable(s): {', '.join(sorted(missing))}")
    env = {k: float(v) for k, v in bindings.items() if k in free}
    memo = {}
    return [_eval(e, env, memo) for e in exprs]
