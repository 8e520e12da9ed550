"""CAS bridge: a solver-agnostic intermediate representation, the Wolfram
expression datatype with parser and printers, DSolve request generation and
reply parsing, and an optional wolframscript runner."""
from __future__ import annotations

import os
import re
import shutil
import subprocess
from dataclasses import dataclass
from fractions import Fraction

from .. import symexpr as sx
from ..hybridprog import Subst
from ..symexpr import Expr
from .certify import FlowCandidate


class UnknownOperator(ValueError):
    pass


class ParseError(ValueError):
    pass


class CASUnavailable(RuntimeError):
    pass


# ---------------------------------------------------------------- IR

@dataclass(frozen=True)
class NConst:
    name: str


@dataclass(frozen=True)
class UOp:
    name: str
    arg: object


@dataclass(frozen=True)
class BOp:
    name: str
    left: object
    right: object


@dataclass(frozen=True)
class NNat:
    value: int


@dataclass(frozen=True)
class NInt:
    value: int


@dataclass(frozen=True)
class NReal:
    value: Fraction


@dataclass(frozen=True)
class CVar:
    name: str


@dataclass(frozen=True)
class SVar:
    name: str


@dataclass(frozen=True)
class IVar:
    pass


_BIN = {sx.Add: "plus", sx.Sub: "minus", sx.Mul: "times", sx.Div: "divide"}
_BIN_INV = {v: k for k, v in _BIN.items()}
_UN = {"uminus": sx.Neg, **{f: cls for f, cls in sx.FUNCTIONS.items()}}


def to_ir(e: Expr):
    if isinstance(e, sx.Num):
        v = e.value
        if v.denominator != 1:
            return NReal(v)
        return NNat(int(v)) if v >= 0 else NInt(int(v))
    if isinstance(e, sx.NamedConst):
        return NConst(e.name)
    if isinstance(e, sx.Param):
        return CVar(e.name)
    if isinstance(e, sx.StateVar):
        return SVar(e.name)
    if isinstance(e, sx.TimeVar):
        return IVar()
    if isinstance(e, sx.Neg):
        return UOp("uminus", to_ir(e.arg))
    if isinstance(e, sx.Apply):
        return UOp(e.fname, to_ir(e.arg))
    if isinstance(e, sx.Pow):
        return BOp("power", to_ir(e.base), NNat(e.exp))
    if type(e) in _BIN:
        return BOp(_BIN[type(e)], to_ir(e.left), to_ir(e.right))
    raise UnknownOperator(f"no IR operator for {type(e).__name__}")


def from_ir(ir) -> Expr:
    if isinstance(ir, (NNat, NInt)):
        return sx.Num(ir.value)
    if isinstance(ir, NReal):
        return sx.Num(ir.value)
    if isinstance(ir, NConst):
        if ir.name not in sx.NAMED_CONSTANTS:
            raise UnknownOperator(f"unknown constant {ir.name}")
        return sx.NamedConst(ir.name)
    if isinstance(ir, CVar):
        return sx.Param(ir.name)
    if isinstance(ir, SVar):
        return sx.StateVar(ir.name)
    if isinstance(ir, IVar):
        return sx.TIME
    if isinstance(ir, UOp):
        if ir.name not in _UN:
            raise UnknownOperator(ir.name)
        return _UN[ir.name](from_ir(ir.arg))
    if isinstance(ir, BOp):
        if ir.name == "power":
            if not isinstance(ir.right, NNat):
                raise UnknownOperator("power with a non-natural exponent")
            return sx.Pow(from_ir(ir.left), ir.right.value)
        if ir.name not in _BIN_INV:
            raise UnknownOperator(ir.name)
        return _BIN_INV[ir.name](from_ir(ir.left), from_ir(ir.right))
    raise UnknownOperator(f"not an IR node: {ir!r}")


# ---------------------------------------------------------------- Wolfram exprs

@dataclass(frozen=True)
class Int:
    value: int


@dataclass(frozen=True)
class Real:
    value: float


@dataclass(frozen=True)
class Id:
    name: str


@dataclass(frozen=True)
class Fun:
    name: str
    args: tuple


@dataclass(frozen=True)
class CurryFun:
    name: str
    argss: tuple  # tuple of argument tuples, applied left to right


def to_fullform(c) -> str:
    if isinstance(c, Int):
        return str(c.value)
    if isinstance(c, Real):
        return repr(float(c.value))
    if isinstance(c, Id):
        return c.name
    if isinstance(c, Fun):
        return f"{c.name}[{', '.join(to_fullform(a) for a in c.args)}]"
    if isinstance(c, CurryFun):
        return c.name + "".join("[" + ", ".join(to_fullform(a) for a in g) + "]" for g in c.argss)
    raise TypeError(f"not a CAS expression: {c!r}")


_INFIX = {"Plus": (" + ", 1), "Subtract": (" - ", 1), "Times": ("*", 2), "Divide": ("/", 2),
          "Power": ("^", 4)}


def to_input_form(c, prec: int = 0) -> str:
    """Conventional infix text (Wolfram InputForm style)."""
    if isinstance(c, Int):
        s = str(c.value)
        return f"({s})" if c.value < 0 and prec > 1 else s
    if isinstance(c, Real):
        s = repr(float(c.value))
        return f"({s})" if c.value < 0 and prec > 1 else s
    if isinstance(c, Id):
        return c.name
    if isinstance(c, Fun):
        if c.name in _INFIX and len(c.args) >= 2:
            op, p = _INFIX[c.name]
            parts = []
            for i, a in enumerate(c.args):
                right = i > 0
                need = p + (1 if (right and c.name in ("Subtract", "Divide")) or
                            (not right and c.name == "Power") else 0)
                parts.append(to_input_form(a, need))
            s = op.join(parts)
            return f"({s})" if p < prec else s
        if c.name == "Minus" and len(c.args) == 1:
            s = "-" + to_input_form(c.args[0], 3)
            return f"({s})" if prec > 1 else s
        if c.name == "Rational" and len(c.args) == 2:
            s = f"{to_input_form(c.args[0], 3)}/{to_input_form(c.args[1], 3)}"
            return f"({s})" if prec >= 2 else s
        if c.name == "List":
            return "{" + ", ".join(to_input_form(a) for a in c.args) + "}"
        if c.name == "Rule" and len(c.args) == 2:
            s = f"{to_input_form(c.args[0], 1)} -> {to_input_form(c.args[1], 1)}"
            return f"({s})" if prec > 0 else s
        if c.name == "Equal" and len(c.args) == 2:
            return f"{to_input_form(c.args[0], 1)} == {to_input_form(c.args[1], 1)}"
        return f"{c.name}[{', '.join(to_input_form(a) for a in c.args)}]"
    if isinstance(c, CurryFun):
        if (c.name == "Derivative" and len(c.argss) == 3 and len(c.argss[0]) == 1
                and isinstance(c.argss[0][0], Int) and len(c.argss[1]) == 1
                and isinstance(c.argss[1][0], Id)):
            ticks = "'" * c.argss[0][0].value
            return f"{c.argss[1][0].name}{ticks}[{', '.join(to_input_form(a) for a in c.argss[2])}]"
        return c.name + "".join("[" + ", ".join(to_input_form(a) for a in g) + "]"
                                for g in c.argss)
    raise TypeError(f"not a CAS expression: {c!r}")


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<real>\d+\.\d*(?:`[\d.]*)?(?:\*\^-?\d+)?)
  | (?P<int>\d+)
  | (?P<id>[A-Za-z$][A-Za-z0-9$]*)
  | (?P<sym>->|==|\[|\]|\{|\}|,|\+|-|\*|/|\^|\(|\)|')
""", re.VERBOSE)


def _tokens(text: str) -> list:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r} at {pos}")
        pos = m.end()
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group()))
    out.append(("eof", ""))
    return out


class _CASParser:
    def __init__(self, text: str):
        self.toks = _tokens(text)
        self.i = 0

    def peek(self, k: int = 0):
        return self.toks[self.i + k]

    def take(self, val=None):
        t = self.toks[self.i]
        if val is not None and t[1] != val:
            raise ParseError(f"expected {val!r}, got {t[1]!r}")
        self.i += 1
        return t

    def parse(self):
        e = self.rule()
        if self.peek()[0] != "eof":
            raise ParseError(f"trailing input at {self.peek()[1]!r}")
        return e

    def rule(self):
        lhs = self.equal()
        if self.peek()[1] == "->":
            self.take()
            return Fun("Rule", (lhs, self.rule()))
        return lhs

    def equal(self):
        lhs = self.sum()
        if self.peek()[1] == "==":
            self.take()
            return Fun("Equal", (lhs, self.sum()))
        return lhs

    def sum(self):
        terms = [self.product()]
        ops = []
        while self.peek()[1] in ("+", "-"):
            ops.append(self.take()[1])
            terms.append(self.product())
        if not ops:
            return terms[0]
        if all(o == "+" for o in ops):
            return Fun("Plus", tuple(terms))
        acc = terms[0]
        for o, t in zip(ops, terms[1:]):
            acc = Fun("Plus" if o == "+" else "Subtract", (acc, t))
        return acc

    def _starts_factor(self) -> bool:
        k, v = self.peek()
        return k in ("int", "real", "id") or v in ("(", "{")

    def product(self):
        factors = [self.unary()]
        ops = []
        while self.peek()[1] in ("*", "/") or self._starts_factor():
            op = self.take()[1] if self.peek()[1] in ("*", "/") else "*"
            ops.append(op)
            factors.append(self.unary())
        if not ops:
            return factors[0]
        if all(o == "*" for o in ops):
            return Fun("Times", tuple(factors))
        acc = factors[0]
        for o, f in zip(ops, factors[1:]):
            acc = Fun("Times" if o == "*" else "Divide", (acc, f))
        return acc

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            arg = self.unary()
            if isinstance(arg, Int):
                return Int(-arg.value)
            if isinstance(arg, Real):
                return Real(-arg.value)
            return Fun("Minus", (arg,))
        return self.power()

    def power(self):
        base = self.postfix()
        if self.peek()[1] == "^":
            self.take()
            return Fun("Power", (base, self.unary()))
        return base

    def postfix(self):
        k, v = self.peek()
        if k == "int":
            self.take()
            return Int(int(v))
        if k == "real":
            self.take()
            mant, _, exp = v.partition("*^")
            mant = mant.split("`")[0]
            return Real(float(mant) * (10 ** int(exp) if exp else 1))
        if v == "(":
            self.take()
            e = self.rule()
            self.take(")")
            return e
        if v == "{":
            self.take()
            args = self.args("}")
            return Fun("List", args)
        if k == "id":
            self.take()
            ticks = 0
            while self.peek()[1] == "'":
                self.take()
                ticks += 1
            groups = []
            while self.peek()[1] == "[":
                self.take()
                groups.append(self.args("]"))
            if ticks:
                return CurryFun("Derivative", ((Int(ticks),), (Id(v),), *groups))
            if not groups:
                return Id(v)
            if len(groups) == 1:
                return Fun(v, groups[0])
            return CurryFun(v, tuple(groups))
        raise ParseError(f"unexpected token {v!r}")

    def args(self, close: str) -> tuple:
        out = []
        if self.peek()[1] != close:
            out.append(self.rule())
            while self.peek()[1] == ",":
                self.take()
                out.append(self.rule())
        self.take(close)
        return tuple(out)


def parse_cas(text: str):
    return _CASParser(text).parse()


# ---------------------------------------------------------------- translation

_W_FUN = {"sin": "Sin", "cos": "Cos", "tan": "Tan", "exp": "Exp", "sqrt": "Sqrt", "ln": "Log"}
_W_FUN_INV = {v: k for k, v in _W_FUN.items()}
_W_BIN = {"plus": "Plus", "minus": "Subtract", "times": "Times", "divide": "Divide",
          "power": "Power"}
_W_CONST = {"pi": "Pi", "e": "E"}
_W_CONST_INV = {v: k for k, v in _W_CONST.items()}


def ir_to_cas(ir, names: dict, tvar: str = "t", applied: bool = True):
    """IR -> Wolfram expression; `names` maps source names to wire names."""
    if isinstance(ir, (NNat, NInt)):
        return Int(ir.value)
    if isinstance(ir, NReal):
        return Fun("Rational", (Int(ir.value.numerator), Int(ir.value.denominator)))
    if isinstance(ir, NConst):
        return Id(_W_CONST[ir.name])
    if isinstance(ir, CVar):
        return Id(names.get(ir.name, ir.name))
    if isinstance(ir, SVar):
        n = names.get(ir.name, ir.name)
        return Fun(n, (Id(tvar),)) if applied else Id(n)
    if isinstance(ir, IVar):
        return Id(tvar)
    if isinstance(ir, UOp):
        if ir.name == "uminus":
            return Fun("Minus", (ir_to_cas(ir.arg, names, tvar, applied),))
        if ir.name not in _W_FUN:
            raise UnknownOperator(ir.name)
        return Fun(_W_FUN[ir.name], (ir_to_cas(ir.arg, names, tvar, applied),))
    if isinstance(ir, BOp):
        if ir.name not in _W_BIN:
            raise UnknownOperator(ir.name)
        return Fun(_W_BIN[ir.name], (ir_to_cas(ir.left, names, tvar, applied),
                                     ir_to_cas(ir.right, names, tvar, applied)))
    raise UnknownOperator(f"not an IR node: {ir!r}")


_RESERVED = {"t", "E", "I", "C", "D", "N", "O", "K", "Pi"}


def _valid_wire(name: str) -> bool:
    return re.fullmatch(r"[a-z][A-Za-z0-9]*", name) is not None


def variable_mapping(frame, params=()) -> dict:
    """State vars -> a, b, c, ... alphabetically by source name; parameters
    keep their name when it is a valid, unclaimed Wolfram symbol."""
    letters = [chr(c) for c in range(ord("a"), ord("z") + 1) if chr(c) != "t"]
    mapping = {}
    for i, x in enumerate(sorted(frame)):
        mapping[x] = letters[i] if i < len(letters) else f"s{i}"
    taken = set(mapping.values()) | {v + "0" for v in mapping.values()} | _RESERVED
    k = 0
    for p in sorted(params):
        if _valid_wire(p) and p not in taken:
            mapping[p] = p
        else:
            k += 1
            while f"k{k}" in taken:
                k += 1
            mapping[p] = f"k{k}"
        taken.add(mapping[p])
    return mapping


def ir_to_cas_request(field_ir: dict, frame) -> tuple:
    """(DSolve request text, mapping source name -> wire name)."""
    params = set()
    for ir in field_ir.values():
        params |= _ir_params(ir)
    mapping = variable_mapping(frame, params)
    state = [x for x in sorted(frame)]
    eqs = []
    for x in state:
        lhs = CurryFun("Derivative", ((Int(1),), (Id(mapping[x]),), (Id("t"),)))
        eqs.append(Fun("Equal", (lhs, ir_to_cas(field_ir[x], mapping))))
    for x in state:
        a = mapping[x]
        eqs.append(Fun("Equal", (Fun(a, (Int(0),)), Id(a + "0"))))
    req = Fun("DSolve", (Fun("List", tuple(eqs)),
                         Fun("List", tuple(Id(mapping[x]) for x in state)), Id("t")))
    return to_input_form(req), mapping


def _ir_params(ir) -> set:
    if isinstance(ir, CVar):
        return {ir.name}
    if isinstance(ir, UOp):
        return _ir_params(ir.arg)
    if isinstance(ir, BOp):
        return _ir_params(ir.left) | _ir_params(ir.right)
    return set()


def field_request(fld: Subst, frame=None) -> tuple:
    frame = sorted(frame if frame is not None else fld.keys())
    return ir_to_cas_request({x: to_ir(fld.lookup(x)) for x in frame}, frame)


def _cas_to_expr(c, env: dict) -> Expr:
    """Wolfram expression -> Expr; env maps wire identifiers to Exprs."""
    if isinstance(c, Int):
        return sx.Num(c.value)
    if isinstance(c, Real):
        return sx.Num(Fraction(c.value).limit_denominator(10**9))
    if isinstance(c, Id):
        if c.name in env:
            return env[c.name]
        if c.name in _W_CONST_INV:
            return sx.NamedConst(_W_CONST_INV[c.name])
        raise UnknownOperator(f"unknown symbol {c.name}")
    if isinstance(c, Fun):
        args = [_cas_to_expr(a, env) for a in c.args]
        n = c.name
        if n == "Plus":
            return _fold(sx.Add, args)
        if n == "Times":
            return _fold(sx.Mul, args)
        if n == "Subtract" and len(args) == 2:
            return sx.Sub(*args)
        if n == "Divide" and len(args) == 2:
            return sx.Div(*args)
        if n == "Minus" and len(args) == 1:
            return sx.Neg(args[0])
        if n == "Rational" and len(args) == 2:
            return sx.Num(Fraction(c.args[0].value, c.args[1].value))
        if n == "Power" and len(c.args) == 2:
            base, ex = c.args
            if isinstance(base, Id) and base.name == "E":
                return sx.Exp(args[1])
            if isinstance(ex, Int):
                if ex.value >= 0:
                    return sx.Pow(args[0], ex.value)
                return sx.Div(sx.ONE, sx.Pow(args[0], -ex.value))
            if ex == Fun("Rational", (Int(1), Int(2))):
                return sx.Sqrt(args[0])
            raise UnknownOperator("non-integer power")
        if n in _W_FUN_INV and len(args) == 1:
            return sx.apply_fn(_W_FUN_INV[n], args[0])
        raise UnknownOperator(n)
    raise UnknownOperator(f"cannot translate {c!r}")


def _fold(op, args):
    acc = args[0]
    for a in args[1:]:
        acc = op(acc, a)
    return acc


def parse_cas_solution(text: str, mapping: dict, frame=None) -> FlowCandidate:
    """DSolve reply `{{a -> Function[{t}, body], ...}}` -> flow candidate."""
    tree = parse_cas(text)
    rules = tree
    if isinstance(rules, Fun) and rules.name == "List" and rules.args and \
            isinstance(rules.args[0], Fun) and rules.args[0].name == "List":
        rules = rules.args[0]
    if not (isinstance(rules, Fun) and rules.name == "List") or not rules.args:
        raise ParseError("no solution")
    inverse = {w: s for s, w in mapping.items()}
    shapes = []
    for r in rules.args:
        if not (isinstance(r, Fun) and r.name == "Rule" and len(r.args) == 2):
            raise ParseError("expected a rule")
        lhs, rhs = r.args
        if isinstance(lhs, Fun) and len(lhs.args) == 1 and isinstance(lhs.args[0], Id):
            shapes.append((lhs.name, lhs.args[0].name, rhs))      # a[t] -> body
        elif isinstance(lhs, Id) and isinstance(rhs, Fun) and rhs.name == "Function" \
                and len(rhs.args) == 2:
            params, b = rhs.args
            tv = params.args[0] if isinstance(params, Fun) and params.args else params
            if not isinstance(tv, Id):
                raise ParseError("unrecognised Function parameter")
            shapes.append((lhs.name, tv.name, b))
        else:
            raise ParseError("unrecognised rule shape")
    for wire, _, _ in shapes:
        if wire not in inverse:
            raise ParseError(f"unknown function {wire}")
    state = set(frame) if frame is not None else {inverse[w] for w, _, _ in shapes}
    body = {}
    for wire, tname, b in shapes:
        env = {}
        for src, w in mapping.items():
            if src in state:
                env[w + "0"] = sx.StateVar(src)
            else:
                env[w] = sx.Param(src)
        env[tname] = sx.TIME
        body[inverse[wire]] = _cas_to_expr(b, env)
    return FlowCandidate(tuple(body), Subst(body))


def run_wolfram(request: str, timeout: float = 60.0) -> str:
    binary = os.environ.get("ODECERT_WOLFRAMSCRIPT", "wolframscript")
    if shutil.which(binary) is None and not os.path.exists(binary):
        raise CASUnavailable(f"{binary} not found")
    proc = subprocess.run([binary, "-code", f"ToString[InputForm[{request}]]"],
                          capture_output=True, text=True, timeout=timeout)
    if proc.returncode != 0:
        raise CASUnavailable(proc.stderr.strip() or "wolframscript failed")
    return proc.stdout.strip()
