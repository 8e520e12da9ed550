"""Arithmetic expressions over state variables, constants and time.

Expressions are immutable trees with exact rational literals.  The module
provides substitution, numeric evaluation, a canonicalising simplifier and a
polynomial normal form used to decide identities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, n):
        return Pow(self, n)

    def __str__(self):
        return render(self)


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True, slots=True)
class NamedConst(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Param(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class StateVar(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class TimeVar(Expr):
    pass


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exp: int

    def __post_init__(self):
        if not isinstance(self.exp, int) or isinstance(self.exp, bool) or self.exp < 0:
            raise ValueError(f"exponent must be a non-negative integer, got {self.exp!r}")


class Apply(Expr):
    """Application of a named unary function."""
    __slots__ = ()
    fname = ""


@dataclass(frozen=True, slots=True)
class Sin(Apply):
    arg: Expr
    fname = "sin"


@dataclass(frozen=True, slots=True)
class Cos(Apply):
    arg: Expr
    fname = "cos"


@dataclass(frozen=True, slots=True)
class Tan(Apply):
    arg: Expr
    fname = "tan"


@dataclass(frozen=True, slots=True)
class Exp(Apply):
    arg: Expr
    fname = "exp"


@dataclass(frozen=True, slots=True)
class Sqrt(Apply):
    arg: Expr
    fname = "sqrt"


@dataclass(frozen=True, slots=True)
class Ln(Apply):
    arg: Expr
    fname = "ln"


FUNCTIONS: dict[str, type] = {c.fname: c for c in (Sin, Cos, Tan, Exp, Sqrt, Ln)}
NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}
BINARY = (Add, Sub, Mul, Div)
TIME = TimeVar()
ZERO = Num(0)
ONE = Num(1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)) and not isinstance(x, bool):
        return Num(Fraction(x))
    raise TypeError(f"cannot use {x!r} as an expression")


def apply_fn(fname: str, arg: Expr) -> Expr:
    return FUNCTIONS[fname](arg)


def children(e: Expr) -> tuple:
    if isinstance(e, BINARY):
        return (e.left, e.right)
    if isinstance(e, (Neg, Apply)):
        return (e.arg,)
    if isinstance(e, Pow):
        return (e.base,)
    return ()


def rebuild(e: Expr, kids: tuple) -> Expr:
    if isinstance(e, BINARY):
        return type(e)(kids[0], kids[1])
    if isinstance(e, (Neg, Apply)):
        return type(e)(kids[0])
    if isinstance(e, Pow):
        return Pow(kids[0], e.exp)
    return e


def map_leaves(e: Expr, fn: Callable[[Expr], Expr]) -> Expr:
    """Rebuild `e` with every leaf replaced by fn(leaf)."""
    kids = children(e)
    if not kids and not isinstance(e, (Neg, Apply, Pow)):
        return fn(e)
    new = tuple(map_leaves(k, fn) for k in kids)
    if all(a is b for a, b in zip(new, kids)):
        return e
    return rebuild(e, new)


def depth(e: Expr) -> int:
    kids = children(e)
    return 1 + max((depth(k) for k in kids), default=0)


def size(e: Expr) -> int:
    return 1 + sum(size(k) for k in children(e))


def subterms(e: Expr):
    yield e
    for k in children(e):
        yield from subterms(k)


# ---------------------------------------------------------------- variables

@dataclass(frozen=True)
class VarSet:
    state: frozenset
    params: frozenset
    uses_time: bool

    def __or__(self, other: "VarSet") -> "VarSet":
        return VarSet(self.state | other.state, self.params | other.params,
                      self.uses_time or other.uses_time)


EMPTY_VARS = VarSet(frozenset(), frozenset(), False)


@lru_cache(maxsize=65536)
def free_vars(e: Expr) -> VarSet:
    if isinstance(e, StateVar):
        return VarSet(frozenset([e.name]), frozenset(), False)
    if isinstance(e, Param):
        return VarSet(frozenset(), frozenset([e.name]), False)
    if isinstance(e, TimeVar):
        return VarSet(frozenset(), frozenset(), True)
    out = EMPTY_VARS
    for k in children(e):
        out = out | free_vars(k)
    return out


def substitute(e: Expr, sigma: Mapping[str, Expr]) -> Expr:
    """Simultaneously replace state variables by the expressions in `sigma`."""
    if not sigma:
        return e
    return map_leaves(e, lambda l: sigma.get(l.name, l) if isinstance(l, StateVar) else l)


def substitute_params(e: Expr, sigma: Mapping[str, Expr]) -> Expr:
    if not sigma:
        return e
    return map_leaves(e, lambda l: sigma.get(l.name, l) if isinstance(l, Param) else l)


def substitute_time(e: Expr, by: Expr) -> Expr:
    return map_leaves(e, lambda l: by if isinstance(l, TimeVar) else l)


def rename_state_to_params(e: Expr, prefix: str = "$") -> Expr:
    return map_leaves(e, lambda l: Param(prefix + l.name) if isinstance(l, StateVar) else l)


def is_transcendental(e: Expr) -> bool:
    return any(isinstance(s, Apply) for s in subterms(e))


# ---------------------------------------------------------------- evaluation

class EvalError(ArithmeticError):
    pass


class DivisionByZero(EvalError, ZeroDivisionError):
    pass


class DomainError(EvalError, ValueError):
    pass


class UnboundVariable(EvalError, KeyError):
    pass


def _lookup(env, key, label):
    try:
        return env[key]
    except KeyError:
        raise UnboundVariable(label) from None


def eval_numeric(e: Expr, env: Mapping, mode: str = "float"):
    """Evaluate `e` in `env` (names to numbers, TIME to the time value).

    mode="exact" uses Fractions and rejects transcendental nodes and named
    constants; mode="float" uses IEEE doubles.
    """
    if mode == "exact":
        return _eval_exact(e, env)
    if mode != "float":
        raise ValueError(f"unknown mode {mode!r}")
    return compile_float(e)(env)


def _eval_exact(e: Expr, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, (StateVar, Param)):
        return Fraction(_lookup(env, e.name, e.name))
    if isinstance(e, TimeVar):
        return Fraction(_lookup(env, TIME, "t"))
    if isinstance(e, NamedConst):
        raise DomainError(f"named constant {e.name} has no exact value")
    if isinstance(e, Apply):
        raise DomainError(f"{e.fname} is not available in exact mode")
    if isinstance(e, Neg):
        return -_eval_exact(e.arg, env)
    if isinstance(e, Pow):
        return _eval_exact(e.base, env) ** e.exp
    a = _eval_exact(e.left, env)
    b = _eval_exact(e.right, env)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    if b == 0:
        raise DivisionByZero(render(e))
    return a / b


def _f_sqrt(x):
    if x < 0:
        raise DomainError("sqrt of a negative number")
    return math.sqrt(x)


def _f_ln(x):
    if x <= 0:
        raise DomainError("ln of a non-positive number")
    return math.log(x)


def _f_tan(x):
    if abs(math.cos(x)) < 1e-15:
        raise DomainError("tan at a pole")
    return math.tan(x)


def _f_div(a, b):
    if b == 0:
        raise DivisionByZero("division by zero")
    return a / b


_PY_FUNCS = {"sin": "_sin", "cos": "_cos", "tan": "_tan", "exp": "_exp",
             "sqrt": "_sqrt", "ln": "_ln"}
_PY_NS = {"_sin": math.sin, "_cos": math.cos, "_tan": _f_tan, "_exp": math.exp,
          "_sqrt": _f_sqrt, "_ln": _f_ln, "_div": _f_div, "_T": TIME,
          "_pi": math.pi, "_e": math.e}


def _py_source(e: Expr) -> str:
    if isinstance(e, Num):
        return f"({float(e.value)!r})"
    if isinstance(e, (StateVar, Param)):
        return f"env[{e.name!r}]"
    if isinstance(e, TimeVar):
        return "env[_T]"
    if isinstance(e, NamedConst):
        return "_" + e.name if e.name in NAMED_CONSTANTS else f"env[{e.name!r}]"
    if isinstance(e, Neg):
        return f"(-{_py_source(e.arg)})"
    if isinstance(e, Pow):
        return f"({_py_source(e.base)}**{e.exp})"
    if isinstance(e, Apply):
        return f"{_PY_FUNCS[e.fname]}({_py_source(e.arg)})"
    a, b = _py_source(e.left), _py_source(e.right)
    if isinstance(e, Add):
        return f"({a}+{b})"
    if isinstance(e, Sub):
        return f"({a}-{b})"
    if isinstance(e, Mul):
        return f"({a}*{b})"
    return f"_div({a},{b})"


@lru_cache(maxsize=16384)
def compile_float(e: Expr) -> Callable[[Mapping], float]:
    """Compile `e` into a fast float evaluator taking an environment."""
    raw = eval("lambda env: " + _py_source(e), dict(_PY_NS))

    def run(env):
        try:
            return float(raw(env))
        except EvalError:
            raise
        except KeyError as exc:
            raise UnboundVariable(exc.args[0]) from None
        except ZeroDivisionError as exc:
            raise DivisionByZero(str(exc)) from None
        except (ValueError, OverflowError) as exc:
            raise DomainError(str(exc)) from None
    return run


# ---------------------------------------------------------------- rendering

_SUM, _PROD, _UNARY, _POW, _ATOM = 1, 2, 3, 4, 5


def _prec(e: Expr) -> int:
    if isinstance(e, Num):
        v = e.value
        if v.denominator != 1:
            return _PROD
        return _UNARY if v < 0 else _ATOM
    if isinstance(e, (Add, Sub)):
        return _SUM
    if isinstance(e, (Mul, Div)):
        return _PROD
    if isinstance(e, Neg):
        return _UNARY
    if isinstance(e, Pow):
        return _POW
    return _ATOM


def _fmt_num(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def _starts_negative(e: Expr) -> bool:
    if isinstance(e, Num):
        return e.value < 0
    if isinstance(e, Neg):
        return True
    if isinstance(e, BINARY):
        return _starts_negative(e.left)
    return False


def render(e: Expr, flow: bool = False) -> str:
    """Canonical infix text.  With flow=True state variables print as $x."""
    def r(x: Expr) -> str:
        return render(x, flow)

    def wrap(x: Expr, need: bool) -> str:
        s = r(x)
        return f"({s})" if need else s

    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, StateVar):
        return "$" + e.name if flow else e.name
    if isinstance(e, (Param, NamedConst)):
        return e.name
    if isinstance(e, TimeVar):
        return "t"
    if isinstance(e, Apply):
        return f"{e.fname}({r(e.arg)})"
    if isinstance(e, Neg):
        need = isinstance(e.arg, Num) or _prec(e.arg) < _UNARY
        return "-" + wrap(e.arg, need)
    if isinstance(e, Pow):
        need = _prec(e.base) <= _POW or isinstance(e.base, Num) and e.base.value < 0
        return f"{wrap(e.base, need)}^{e.exp}"
    if isinstance(e, (Add, Sub)):
        op = " + " if isinstance(e, Add) else " - "
        lhs = wrap(e.left, _prec(e.left) < _SUM)
        need = _prec(e.right) <= _SUM or _starts_negative(e.right)
        return lhs + op + wrap(e.right, need)
    # Mul / Div
    lhs = wrap(e.left, _prec(e.left) < _PROD)
    need = _prec(e.right) <= _PROD
    if isinstance(e, Div):
        left_int = isinstance(e.left, Num) and e.left.value.denominator == 1
        if left_int and isinstance(e.right, Num):
            need = True
        if _starts_negative(e.right):
            need = True
        return f"{lhs}/{wrap(e.right, need)}"
    return f"{lhs}*{wrap(e.right, need)}"


# ---------------------------------------------------------------- ordering

def order_key(e: Expr) -> tuple:
    """Total order on atoms: state < param < time < named constant < other."""
    if isinstance(e, StateVar):
        return (0, e.name)
    if isinstance(e, Param):
        return (1, e.name)
    if isinstance(e, TimeVar):
        return (2, "")
    if isinstance(e, NamedConst):
        return (3, e.name)
    if isinstance(e, Apply):
        return (4, e.fname, order_key(e.arg))
    return (5, render(e))


# ---------------------------------------------------------------- simplifier
#
# A pass turns an expression into a sum of terms c * prod(base^k) where the
# bases are atoms, function applications (with simplified arguments),
# multi-term sums appearing inside products, or an undefined x/0.  Rendering
# that structure in a fixed order gives a canonical form, so the pass is
# idempotent on its own output.

def _sqrt_exact(q: Fraction):
    if q < 0:
        return None
    a, b = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if a * a == q.numerator and b * b == q.denominator:
        return Fraction(a, b)
    return None


def _fold_apply(fname: str, arg: Expr):
    if not isinstance(arg, Num):
        return None
    v = arg.value
    if v == 0 and fname in ("sin", "tan", "sqrt"):
        return Fraction(0)
    if v == 0 and fname in ("cos", "exp"):
        return Fraction(1)
    if v == 1 and fname == "ln":
        return Fraction(0)
    if fname == "sqrt":
        return _sqrt_exact(v)
    return None


def _merge_into(acc: dict, other: dict, scale: Fraction = Fraction(1)):
    for k, c in other.items():
        n = acc.get(k, 0) + c * scale
        if n == 0:
            acc.pop(k, None)
        else:
            acc[k] = n


def _factors_key(factors: dict) -> tuple:
    return tuple(sorted(factors.items(), key=lambda kv: order_key(kv[0])))


class _Simp:
    def __init__(self):
        self.memo: dict = {}

    def expr(self, e: Expr) -> Expr:
        hit = self.memo.get(e)
        if hit is None:
            hit = self.render_sum(self.sum(e))
            self.memo[e] = hit
        return hit

    def sum(self, e: Expr) -> dict:
        if isinstance(e, Num):
            return {(): e.value} if e.value != 0 else {}
        if isinstance(e, Add):
            out = dict(self.sum(e.left))
            _merge_into(out, self.sum(e.right))
            return out
        if isinstance(e, Sub):
            out = dict(self.sum(e.left))
            _merge_into(out, self.sum(e.right), Fraction(-1))
            return out
        if isinstance(e, Neg):
            out: dict = {}
            _merge_into(out, self.sum(e.arg), Fraction(-1))
            return out
        coef, factors = self.prod(e)
        if coef == 0:
            return {}
        if len(factors) == 1:
            (base, k), = factors.items()
            if k == 1 and isinstance(base, (Add, Sub)):
                out = {}
                _merge_into(out, self.sum(base), coef)
                return out
        return {_factors_key(factors): coef}

    def prod(self, e: Expr):
        if isinstance(e, Mul):
            c1, f1 = self.prod(e.left)
            c2, f2 = self.prod(e.right)
            return c1 * c2, self._mul_factors(f1, f2, 1)
        if isinstance(e, Div):
            c1, f1 = self.prod(e.left)
            c2, f2 = self.prod(e.right)
            if c2 == 0:
                return Fraction(1), {Div(self.expr(e.left), ZERO): 1}
            return c1 / c2, self._mul_factors(f1, f2, -1)
        if isinstance(e, Pow):
            if e.exp == 0:
                return Fraction(1), {}
            c, f = self.prod(e.base)
            return c ** e.exp, {b: k * e.exp for b, k in f.items()}
        if isinstance(e, (StateVar, Param, TimeVar, NamedConst)):
            return Fraction(1), {e: 1}
        if isinstance(e, Apply):
            arg = self.expr(e.arg)
            v = _fold_apply(e.fname, arg)
            if v is not None:
                return v, {}
            return Fraction(1), {type(e)(arg): 1}
        s = self.sum(e)
        if not s:
            return Fraction(0), {}
        if len(s) == 1:
            (key, c), = s.items()
            return c, dict(key)
        return Fraction(1), {self.render_sum(s): 1}

    @staticmethod
    def _mul_factors(f1: dict, f2: dict, sign: int) -> dict:
        out = dict(f1)
        for b, k in f2.items():
            n = out.get(b, 0) + sign * k
            if n == 0:
                out.pop(b, None)
            else:
                out[b] = n
        return out

    @staticmethod
    def render_sum(s: dict) -> Expr:
        if not s:
            return ZERO

        def term_key(item):
            factors, _ = item
            deg = sum(abs(k) for _, k in factors)
            return (-deg, tuple((order_key(b), -k) for b, k in factors))

        acc = None
        for factors, c in sorted(s.items(), key=term_key):
            if not factors:
                t, neg = Num(abs(c)), c < 0
            else:
                t, neg = _render_term(abs(c), factors), c < 0
            if acc is None:
                if neg:
                    acc = Num(c) if not factors else Neg(t)
                else:
                    acc = t
            else:
                acc = Sub(acc, t) if neg else Add(acc, t)
        return acc


def _power(b: Expr, k: int) -> Expr:
    return b if k == 1 else Pow(b, k)


def _chain(items: list) -> Expr:
    out = items[0]
    for x in items[1:]:
        out = Mul(out, x)
    return out


def _render_term(c: Fraction, factors: tuple) -> Expr:
    num = [_power(b, k) for b, k in factors if k > 0]
    den = [_power(b, -k) for b, k in factors if k < 0]
    p, q = c.numerator, c.denominator
    if p != 1 or not num:
        num.insert(0, Num(p))
    if q != 1:
        den.insert(0, Num(q))
    top = _chain(num)
    return Div(top, _chain(den)) if den else top


def simplify(e: Expr) -> Expr:
    """Bounded-pass canonicalising rewrite; semantics preserved where defined."""
    bound = max(1, depth(e) * 4)
    cur = e
    for _ in range(bound):
        nxt = _Simp().expr(cur)
        if nxt == cur:
            break
        cur = nxt
    return cur


# ---------------------------------------------------------------- polynomials

@dataclass(frozen=True)
class FnAtom:
    """Opaque transcendental atom f(arg) with a normalised argument."""
    fname: str
    arg: "PolyNF"


@dataclass(frozen=True)
class InvAtom:
    """Opaque reciprocal 1/q of a non-monomial polynomial q (q monic)."""
    poly: "PolyNF"


def atom_key(a) -> tuple:
    if isinstance(a, FnAtom):
        return (4, a.fname, a.arg.sort_key())
    if isinstance(a, InvAtom):
        return (5, a.poly.sort_key())
    return order_key(a)


def _mono_key(m: tuple) -> tuple:
    return (-sum(abs(k) for _, k in m), tuple((atom_key(a), -k) for a, k in m))


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    if not m1:
        return m2
    if not m2:
        return m1
    d = dict(m1)
    for a, k in m2:
        n = d.get(a, 0) + k
        if n == 0:
            d.pop(a)
        else:
            d[a] = n
    return tuple(sorted(d.items(), key=lambda kv: atom_key(kv[0])))


class PolyNF:
    """Sparse polynomial: monomial (sorted (atom, exponent) tuple) -> coefficient.

    Exponents may be negative for atoms that appeared as monomial divisors;
    `side` holds the polynomials that were assumed non-zero on the way.
    """
    __slots__ = ("terms", "side", "_key")

    def __init__(self, terms: dict | None = None, side: frozenset = frozenset()):
        self.terms = {m: c for m, c in (terms or {}).items() if c != 0}
        self.side = side
        self._key = None

    @staticmethod
    def const(c) -> "PolyNF":
        return PolyNF({(): Fraction(c)})

    @staticmethod
    def atom(a) -> "PolyNF":
        return PolyNF({((a, 1),): Fraction(1)})

    def sort_key(self) -> tuple:
        if self._key is None:
            self._key = tuple((_mono_key(m), c) for m, c in
                              sorted(self.terms.items(), key=lambda mc: _mono_key(mc[0])))
        return self._key

    def __eq__(self, other):
        return isinstance(other, PolyNF) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        return f"PolyNF({render(self.to_expr())})"

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(m == () for m in self.terms)

    def constant_value(self) -> Fraction:
        return self.terms.get((), Fraction(0))

    def atoms(self) -> set:
        return {a for m in self.terms for a, _ in m}

    def degree(self) -> int:
        return max((sum(k for _, k in m) for m in self.terms), default=0)

    def items_sorted(self):
        return sorted(self.terms.items(), key=lambda mc: _mono_key(mc[0]))

    def __add__(self, other: "PolyNF") -> "PolyNF":
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return PolyNF(out, self.side | other.side)

    def __neg__(self) -> "PolyNF":
        return PolyNF({m: -c for m, c in self.terms.items()}, self.side)

    def __sub__(self, other: "PolyNF") -> "PolyNF":
        return self + (-other)

    def scale(self, c) -> "PolyNF":
        return PolyNF({m: v * c for m, v in self.terms.items()}, self.side)

    def __mul__(self, other: "PolyNF") -> "PolyNF":
        out: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return PolyNF(out, self.side | other.side)

    def __pow__(self, n: int) -> "PolyNF":
        out = PolyNF.const(1)
        out.side = self.side
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def with_side(self, side) -> "PolyNF":
        return PolyNF(self.terms, self.side | frozenset(side))

    def to_expr(self) -> Expr:
        """Rebuild an expression (in simplified canonical form)."""
        acc: Expr = ZERO
        for m, c in self.items_sorted():
            t: Expr = Num(c)
            for a, k in m:
                ae = _atom_expr(a)
                t = Mul(t, _power(ae, k)) if k > 0 else Div(t, _power(ae, -k))
            acc = Add(acc, t)
        return simplify(acc)


def _atom_expr(a) -> Expr:
    if isinstance(a, FnAtom):
        return apply_fn(a.fname, a.arg.to_expr())
    if isinstance(a, InvAtom):
        return Div(ONE, a.poly.to_expr())
    return a


def _monic(p: PolyNF):
    """Split p into (leading coefficient, p / leading coefficient)."""
    lead = p.items_sorted()[0][1]
    return lead, p.scale(1 / lead)


REWRITES = frozenset({"pythagoras", "exp_add"})


def poly_normalize(e: Expr, rewrites: Iterable[str] = ()) -> PolyNF:
    rw = frozenset(rewrites)
    unknown = rw - REWRITES
    if unknown:
        raise ValueError(f"unknown rewrites {sorted(unknown)}")
    return _norm(e, rw)


@lru_cache(maxsize=65536)
def _norm(e: Expr, rw: frozenset) -> PolyNF:
    if isinstance(e, Num):
        return PolyNF.const(e.value)
    if isinstance(e, (StateVar, Param, TimeVar, NamedConst)):
        return PolyNF.atom(e)
    if isinstance(e, Add):
        return _post(_norm(e.left, rw) + _norm(e.right, rw), rw)
    if isinstance(e, Sub):
        return _post(_norm(e.left, rw) - _norm(e.right, rw), rw)
    if isinstance(e, Neg):
        return -_norm(e.arg, rw)
    if isinstance(e, Mul):
        return _post(_norm(e.left, rw) * _norm(e.right, rw), rw)
    if isinstance(e, Pow):
        return _post(_norm(e.base, rw) ** e.exp, rw)
    if isinstance(e, Div):
        num = _norm(e.left, rw)
        den = _norm(e.right, rw)
        return _post(num * _reciprocal(den), rw)
    if isinstance(e, Apply):
        arg = _norm(e.arg, rw)
        if arg.is_constant():
            v = _fold_apply(e.fname, Num(arg.constant_value()))
            if v is not None:
                return PolyNF.const(v).with_side(arg.side)
        p = PolyNF.atom(FnAtom(e.fname, PolyNF(arg.terms)))
        return _post(p.with_side(arg.side), rw)
    raise TypeError(f"not an expression: {e!r}")


def _reciprocal(den: PolyNF) -> PolyNF:
    side = set(den.side)
    if den.is_zero():
        side.add(den)
        return PolyNF.atom(InvAtom(PolyNF())).with_side(side)
    if den.is_constant():
        return PolyNF.const(1 / den.constant_value()).with_side(side)
    if len(den.terms) == 1:
        (m, c), = den.terms.items()
        for a, _ in m:
            side.add(PolyNF.atom(a))
        inv = tuple((a, -k) for a, k in m)
        return PolyNF({inv: 1 / c}, frozenset(side))
    lead, q = _monic(den)
    q = PolyNF(q.terms)
    side.add(q)
    return PolyNF.atom(InvAtom(q)).scale(1 / lead).with_side(side)


def _post(p: PolyNF, rw: frozenset) -> PolyNF:
    if not rw:
        return p
    if "exp_add" in rw:
        p = _merge_exps(p)
    if "pythagoras" in rw:
        p = _pythagoras(p)
    return p


def _merge_exps(p: PolyNF) -> PolyNF:
    out = PolyNF(side=p.side)
    for m, c in p.terms.items():
        exps = [(a, k) for a, k in m if isinstance(a, FnAtom) and a.fname == "exp"]
        if len(exps) < 2 and not any(k != 1 for _, k in exps):
            out = out + PolyNF({m: c})
            continue
        rest = tuple((a, k) for a, k in m if not (isinstance(a, FnAtom) and a.fname == "exp"))
        arg = PolyNF()
        for a, k in exps:
            arg = arg + a.arg.scale(k)
        if arg.is_zero():
            out = out + PolyNF({rest: c})
        else:
            atom = FnAtom("exp", arg)
            out = out + PolyNF({_mono_mul(rest, ((atom, 1),)): c})
    return out


def _pythagoras(p: PolyNF) -> PolyNF:
    changed = True
    while changed:
        changed = False
        out = PolyNF(side=p.side)
        for m, c in p.terms.items():
            hit = next(((a, k) for a, k in m
                        if isinstance(a, FnAtom) and a.fname == "cos" and k >= 2), None)
            if hit is None:
                out = out + PolyNF({m: c})
                continue
            changed = True
            a, k = hit
            rest = tuple((b, j) for b, j in m if b != a)
            if k % 2:
                rest = _mono_mul(rest, ((a, 1),))
            sin2 = PolyNF({((FnAtom("sin", a.arg), 2),): Fraction(1)})
            out = out + PolyNF({rest: c}) * (PolyNF.const(1) - sin2) ** (k // 2)
        p = out
    return p


# ---------------------------------------------------------------- identities

@dataclass(frozen=True)
class Equal:
    pass


@dataclass(frozen=True)
class NotEqual:
    pass


@dataclass(frozen=True)
class Unknown:
    side_conditions: tuple = ()
    reason: str = ""


def _clear_inverses(p: PolyNF) -> PolyNF:
    for _ in range(32):
        invs = [a for a in p.atoms() if isinstance(a, InvAtom)]
        if not invs:
            return p
        inv = min(invs, key=atom_key)
        k = max(j for m in p.terms for a, j in m if a == inv)
        out = PolyNF(side=p.side)
        for m, c in p.terms.items():
            j = dict(m).get(inv, 0)
            rest = tuple((a, e) for a, e in m if a != inv)
            out = out + PolyNF({rest: c}) * inv.poly ** (k - j)
        p = out
    return p


def nonzero_entailed_by_literals(cond: Expr, assumptions) -> bool:
    """cond != 0 follows from an assumption literal a op b (op in !=, <, >)
    whose difference a - b is a non-zero rational multiple of cond."""
    pc = poly_normalize(cond)
    if pc.is_constant():
        return pc.constant_value() != 0
    for a in assumptions:
        op = getattr(a, "op", None)
        if op not in ("!=", "<", ">"):
            continue
        d = poly_normalize(Sub(a.lhs, a.rhs))
        ratio = _proportional(d, pc)
        if ratio is not None and ratio != 0:
            return True
    return False


def _proportional(a: PolyNF, b: PolyNF):
    if a.is_zero() or b.is_zero() or set(a.terms) != set(b.terms):
        return None
    ratio = None
    for m, c in a.terms.items():
        r = c / b.terms[m]
        if ratio is None:
            ratio = r
        elif r != ratio:
            return None
    return ratio


def equal_poly(a: Expr, b: Expr, assumptions=(), rewrites: Iterable[str] = (),
               entails: Callable[[Expr], bool] | None = None):
    """Decide a = b as a polynomial identity over opaque atoms.

    Division by a non-constant records the divisor as a side condition; the
    answer is Equal only when every such condition is a non-zero rational or
    follows from `assumptions` (or the `entails` callback, given an Expr that
    must be non-zero).
    """
    d = poly_normalize(Sub(a, b), rewrites)
    conds = [q.to_expr() for q in sorted(d.side, key=lambda q: q.sort_key())]
    cleared = _clear_inverses(PolyNF(d.terms))

    def resolved(c: Expr) -> bool:
        if nonzero_entailed_by_literals(c, assumptions):
            return True
        return bool(entails and entails(c))

    if cleared.is_zero():
        open_conds = tuple(c for c in conds if not resolved(c))
        if not open_conds:
            return Equal()
        return Unknown(open_conds, "unresolved divisor conditions")
    if any(isinstance(x, FnAtom) for x in cleared.atoms()):
        return Unknown(tuple(conds), "difference has opaque transcendental atoms")
    return NotEqual()
