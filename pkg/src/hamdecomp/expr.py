"""Closed-form expression functions with exact derivatives.

The grammar covers the usual arithmetic operators plus a small set of unary
functions: sin, cos, exp, sqrt, log, and the two compactly supported
primitives

    expflat(t) = exp(-1/t) for t > 0, 0 otherwise
    bump01(t)  = exp(1 - 1/(1 - t^2)) for |t| < 1, 0 otherwise

bump01 desugars at parse time to e*expflat(1 - t^2), so the derivative
closure only ever has to handle expflat. Derivatives of every node are again
expression trees; expflat's k-th derivative is R_k(1/t)*exp(-1/t) with R_k
given by the recursion R_0 = 1, R_{k+1}(u) = u^2 (R_k(u) - R_k'(u)), which the
evaluator applies directly so no division by a vanishing argument ever occurs.

Variables are x1..x9; q1..q4 and p1..p4 alias x1,x3,x5,x7 and x2,x4,x6,x8 in
the symplectic pairing (q_k, p_k) = (x_{2k-1}, x_{2k}).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["ExprError", "ExprFn", "parse_expr", "differentiate", "K_MAX"]

K_MAX = 8

# below this argument expflat and all its derivatives are 0 to double precision
_FLAT_TMIN = 1.2e-3


class ExprError(ValueError):
    """Syntax or arity error; carries the source offset."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


# ---------------------------------------------------------------------------
# AST nodes: lightweight classes with eval / diff / show


class Node:
    __slots__ = ()

    def diff(self, axis):
        raise NotImplementedError

    def eval(self, args):
        raise NotImplementedError

    def show(self, prec=0):
        raise NotImplementedError


class Const(Node):
    __slots__ = ("v",)

    def __init__(self, v):
        self.v = float(v)

    def diff(self, axis):
        return Const(0.0)

    def eval(self, args):
        return self.v

    def show(self, prec=0):
        if self.v == math.pi:
            return "pi"
        if self.v < 0 and prec > 0:
            return f"({self.v!r})"
        return repr(self.v)


class Var(Node):
    __slots__ = ("i",)

    def __init__(self, i):
        self.i = i

    def diff(self, axis):
        return Const(1.0 if axis == self.i else 0.0)

    def eval(self, args):
        return args[self.i]

    def show(self, prec=0):
        return f"x{self.i + 1}"


def _is_const(n, v=None):
    return isinstance(n, Const) and (v is None or n.v == v)


class Add(Node):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def diff(self, axis):
        return add(self.a.diff(axis), self.b.diff(axis))

    def eval(self, args):
        return self.a.eval(args) + self.b.eval(args)

    def show(self, prec=0):
        s = f"{self.a.show(1)} + {self.b.show(1)}"
        return f"({s})" if prec > 1 else s


class Sub(Node):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def diff(self, axis):
        return sub(self.a.diff(axis), self.b.diff(axis))

    def eval(self, args):
        return self.a.eval(args) - self.b.eval(args)

    def show(self, prec=0):
        s = f"{self.a.show(1)} - {self.b.show(2)}"
        return f"({s})" if prec > 1 else s


class Mul(Node):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def diff(self, axis):
        return add(mul(self.a.diff(axis), self.b), mul(self.a, self.b.diff(axis)))

    def eval(self, args):
        return self.a.eval(args) * self.b.eval(args)

    def show(self, prec=0):
        s = f"{self.a.show(2)}*{self.b.show(2)}"
        return f"({s})" if prec > 2 else s


class Div(Node):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def diff(self, axis):
        num = sub(mul(self.a.diff(axis), self.b), mul(self.a, self.b.diff(axis)))
        return div(num, mul(self.b, self.b))

    def eval(self, args):
        return self.a.eval(args) / self.b.eval(args)

    def show(self, prec=0):
        s = f"{self.a.show(2)}/{self.b.show(3)}"
        return f"({s})" if prec > 2 else s


class Pow(Node):
    """Base to a constant exponent. Non-constant exponents are rewritten to
    exp(e*log(b)) by the parser."""

    __slots__ = ("a", "k")

    def __init__(self, a, k):
        self.a, self.k = a, float(k)

    def diff(self, axis):
        return mul(mul(Const(self.k), powc(self.a, self.k - 1.0)), self.a.diff(axis))

    def eval(self, args):
        base = self.a.eval(args)
        if self.k == int(self.k):
            return np.power(base, int(self.k))
        return np.power(base, self.k)

    def show(self, prec=0):
        s = f"{self.a.show(4)}^{Const(self.k).show(4)}"
        return f"({s})" if prec > 3 else s


class Call(Node):
    """fn applied to an argument, differentiated k times in fn's own slot."""

    __slots__ = ("fn", "arg", "k")

    def __init__(self, fn, arg, k=0):
        self.fn, self.arg, self.k = fn, arg, k

    def diff(self, axis):
        outer = Call(self.fn, self.arg, self.k + 1)
        return mul(outer, self.arg.diff(axis))

    def eval(self, args):
        t = self.arg.eval(args)
        return _CALL_EVAL[self.fn](t, self.k)

    def show(self, prec=0):
        if self.k == 0:
            return f"{self.fn}({self.arg.show()})"
        return f"{self.fn}^({self.k})({self.arg.show()})"


# smart constructors fold constants and drop neutral elements so that
# repeated differentiation does not blow the tree up


def add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.v + b.v)
    return Add(a, b)


def sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.v - b.v)
    return Sub(a, b)


def mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.v * b.v)
    return Mul(a, b)


def div(a, b):
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b) and b.v != 0.0:
        return Const(a.v / b.v)
    return Div(a, b)


def powc(a, k):
    if k == 0.0:
        return Const(1.0)
    if k == 1.0:
        return a
    if _is_const(a):
        return Const(a.v**k)
    return Pow(a, k)


# ---------------------------------------------------------------------------
# evaluation of the unary calls and their k-th derivatives

_SQRT_COEF = {}
_LOG_SIGN = {}
_FLAT_POLY = {0: np.array([1.0])}


def _flat_poly(k):
    """Coefficients of R_k in increasing powers of u (R_k(1/t) e^{-1/t} is the
    k-th derivative of expflat)."""
    while k not in _FLAT_POLY:
        j = max(_FLAT_POLY) ; c = _FLAT_POLY[j]
        dc = c[1:] * np.arange(1, len(c))          # R_j'
        nxt = np.zeros(len(c) + 2)
        nxt[2 : 2 + len(c)] += c                   # u^2 R_j
        nxt[2 : 2 + len(dc)] -= dc                 # -u^2 R_j'
        _FLAT_POLY[j + 1] = nxt
    return _FLAT_POLY[k]


def _eval_sin(t, k):
    return (np.sin, np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v))[k % 4](t)


def _eval_cos(t, k):
    return (np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v), np.sin)[k % 4](t)


def _eval_exp(t, k):
    return np.exp(t)


def _eval_sqrt(t, k):
    if k == 0:
        return np.sqrt(t)
    if k not in _SQRT_COEF:
        c = 1.0
        for j in range(k):
            c *= 0.5 - j
        _SQRT_COEF[k] = c
    return _SQRT_COEF[k] * np.power(t, 0.5 - k)


def _eval_log(t, k):
    if k == 0:
        return np.log(t)
    sign = 1.0 if (k - 1) % 2 == 0 else -1.0
    return sign * math.factorial(k - 1) * np.power(t, -float(k))


def _eval_expflat(t, k):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    m = t > _FLAT_TMIN
    if np.any(m):
        tm = t[m]
        u = 1.0 / tm
        core = np.exp(-u)
        if k == 0:
            out[m] = core
        else:
            coef = _flat_poly(k)
            # Horner in u; coefficients are exact integers up to k ~ 20
            acc = np.zeros_like(u)
            for c in coef[::-1]:
                acc = acc * u + c
            out[m] = acc * core
    if out.ndim == 0:
        return float(out)
    return out


_CALL_EVAL = {
    "sin": _eval_sin,
    "cos": _eval_cos,
    "exp": _eval_exp,
    "sqrt": _eval_sqrt,
    "log": _eval_log,
    "expflat": _eval_expflat,
}

_FUNCTIONS = set(_CALL_EVAL) | {"bump01"}


# ---------------------------------------------------------------------------
# tokenizer / recursive-descent parser

_VAR_ALIASES = {}
for _k in range(1, 5):
    _VAR_ALIASES[f"q{_k}"] = 2 * _k - 2
    _VAR_ALIASES[f"p{_k}"] = 2 * _k - 1
for _k in range(1, 10):
    _VAR_ALIASES[f"x{_k}"] = _k - 1


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.max_var = -1

    def error(self, msg):
        raise ExprError(msg, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch):
        if self.peek() == ch:
            self.pos += 1
            return True
        return False

    def expect(self, ch):
        if not self.take(ch):
            self.error(f"expected '{ch}'")

    def ident(self):
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        return self.text[start : self.pos]

    def number(self):
        self.skip_ws()
        start = self.pos
        seen_digit = False
        while self.pos < len(self.text) and (self.text[self.pos].isdigit() or self.text[self.pos] == "."):
            seen_digit = seen_digit or self.text[self.pos].isdigit()
            self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(self.text) and self.text[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(self.text) and self.text[self.pos].isdigit():
                while self.pos < len(self.text) and self.text[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark
        if not seen_digit:
            self.error("malformed number")
        try:
            return float(self.text[start : self.pos])
        except ValueError:
            self.pos = start
            self.error("malformed number")

    def parse(self):
        node = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error("trailing input")
        return node

    def expr(self):
        node = self.term()
        while True:
            if self.take("+"):
                node = add(node, self.term())
            elif self.take("-"):
                node = sub(node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            if self.take("*"):
                node = mul(node, self.factor())
            elif self.take("/"):
                node = div(node, self.factor())
            else:
                return node

    def factor(self):
        # unary minus binds looser than ^ : -x^2 is -(x^2)
        if self.take("-"):
            return sub(Const(0.0), self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.take("^"):
            expo = self.factor()  # right associative; exponent may be signed
            if _is_const(expo):
                return powc(base, expo.v)
            # general exponent: b^e = exp(e*log(b)); caller owns domain validity
            return Call("exp", mul(expo, Call("log", base)))
        return base

    def atom(self):
        ch = self.peek()
        if ch == "(":
            self.take("(")
            node = self.expr()
            self.expect(")")
            return node
        if ch.isdigit() or ch == ".":
            return Const(self.number())
        if ch.isalpha():
            name = self.ident()
            if name in _FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                if name == "bump01":
                    # exp(1 - 1/(1-t^2)) = e * expflat(1 - t^2)
                    return mul(Const(math.e), Call("expflat", sub(Const(1.0), mul(arg, arg))))
                return Call(name, arg)
            if name == "pi":
                return Const(math.pi)
            if name == "e":
                return Const(math.e)
            if name in _VAR_ALIASES:
                idx = _VAR_ALIASES[name]
                self.max_var = max(self.max_var, idx)
                return Var(idx)
            self.pos -= len(name)
            self.error(f"unknown identifier '{name}'")
        if ch == "":
            self.error("unexpected end of input")
        self.error(f"unexpected character '{ch}'")


# ---------------------------------------------------------------------------
# public wrapper


class ExprFn:
    """A parsed closed-form function of nvars variables.

    Calling evaluates vectorized over numpy arrays; partial() returns a new
    ExprFn with the exact derivative tree. Total derivative order per request
    is capped at K_MAX.
    """

    def __init__(self, ast, nvars, text=None):
        self.ast = ast
        self.nvars = nvars
        self.text = text if text is not None else ast.show()
        self._partials = {}

    def __call__(self, *coords):
        if len(coords) != self.nvars:
            raise ValueError(f"expected {self.nvars} coordinate arrays, got {len(coords)}")
        arrs = [np.asarray(c, dtype=float) for c in coords]
        out = self.ast.eval(arrs)
        if np.isscalar(out) or (isinstance(out, np.ndarray) and out.ndim == 0):
            shape = np.broadcast(*arrs).shape if arrs else ()
            return np.full(shape, float(out)) if shape else float(out)
        return np.broadcast_to(out, np.broadcast(*arrs).shape).copy() if arrs else out

    def partial(self, axis, order=1):
        """Exact partial derivative along one axis, repeated `order` times."""
        if order < 0:
            raise ValueError("order must be >= 0")
        if order == 0:
            return self
        key = (axis, order)
        if key not in self._partials:
            prev = self.partial(axis, order - 1) if order > 1 else self
            node = prev.ast.diff(axis)
            self._partials[key] = ExprFn(node, self.nvars)
        return self._partials[key]

    def derivative(self, alpha):
        """Mixed partial for a multi-index alpha (tuple per axis)."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.nvars:
            raise ValueError("multi-index length must equal nvars")
        if any(a < 0 for a in alpha):
            raise ValueError("multi-index entries must be >= 0")
        if sum(alpha) > K_MAX:
            raise ValueError(f"total derivative order {sum(alpha)} exceeds K_MAX = {K_MAX}")
        fn = self
        for ax, a in enumerate(alpha):
            if a:
                fn = fn.partial(ax, a)
        return fn

    def __repr__(self):
        return f"ExprFn({self.text!r}, nvars={self.nvars})"


def parse_expr(text, nvars=None):
    """Parse the grammar into an ExprFn.

    nvars defaults to the highest variable index used (at least 1); syntax
    errors raise ExprError with the source offset.
    """
    p = _Parser(text)
    ast = p.parse()
    used = p.max_var + 1
    if nvars is None:
        nvars = max(used, 1)
    elif used > nvars:
        raise ExprError(f"expression uses {used} variables, declared {nvars}", 0)
    return ExprFn(ast, nvars, text=text)


def differentiate(f, alpha):
    """Exact mixed partial of an ExprFn; |alpha| capped at K_MAX."""
    return f.derivative(alpha)
