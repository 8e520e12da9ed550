"""Recursive-descent parser for expressions, predicates, programs and problem files."""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from . import hybridprog as hp
from . import symexpr as sx
from .symexpr import Expr, Num


class ProblemError(ValueError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{msg} (line {line}, column {col})" if line else msg)
        self.msg, self.line, self.col = msg, line, col


class DSLSyntaxError(ProblemError):
    pass


class UndeclaredName(ProblemError):
    pass


class DuplicateName(ProblemError):
    pass


KEYWORDS = {
    "problem", "constants", "assumes", "variables", "def", "goal", "real",
    "skip", "abort", "loop", "inv", "if", "else", "while", "hoare", "diamond",
    "witness", "using", "flow", "dinduct", "solve", "darboux", "ghost", "evol",
    "true", "false", "forall", "exists", "in", "pred",
}
SECTION_START = {"constants", "assumes", "variables", "def", "pred", "goal"}

_SYMBOLS = ["|_|", "==>", "~>", ":=", "<=", ">=", "!=", "==", "&&", "||",
            "↝", "⇒", "∧", "∨", "¬", "≤", "≥", "≠",
            "{", "}", "(", ")", "[", "]", ";", ",", ":", "?", "+", "-", "*",
            "/", "^", "=", "<", ">", "!", "|", "'", ".", "@"]
_ALIASES = {"↝": "~>", "⇒": "==>", "∧": "&&", "∨": "||", "¬": "!", "≤": "<=",
            "≥": ">=", "≠": "!=", "==": "="}
_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>(//|#)[^\n]*)"
    r"|(?P<num>\d+(\.\d+)?)"
    r"|(?P<dollar>\$[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<sym>" + "|".join(re.escape(s) for s in _SYMBOLS) + ")"
)
CMP_TOKENS = {"=", "<=", "<", ">=", ">", "!="}


@dataclass(frozen=True)
class Token:
    kind: str  # num | dollar | ident | kw | sym | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list:
    out = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group(kind)
        pos = m.end()
        if kind == "nl":
            line, line_start = line + 1, pos
            continue
        if kind in ("ws", "comment"):
            continue
        if kind == "ident" and tok in KEYWORDS:
            kind = "kw"
        if kind == "sym":
            tok = _ALIASES.get(tok, tok)
        out.append(Token(kind, tok, line, col))
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


@dataclass
class Scope:
    """Name resolution for identifiers.

    states/consts: declared names.  flow: bare `t` is time and `$x` is the
    initial value of x.  lenient: undeclared names become state variables.
    """
    states: frozenset = frozenset()
    consts: frozenset = frozenset()
    flow: bool = False
    time_ok: bool = False
    lenient: bool = False
    binders: frozenset = frozenset()

    def with_binder(self, name: str) -> "Scope":
        return Scope(self.states, self.consts, self.flow, self.time_ok,
                     self.lenient, self.binders | {name})

    def as_flow(self) -> "Scope":
        return Scope(self.states, self.consts, True, True, self.lenient, self.binders)

    def with_states(self, extra) -> "Scope":
        return Scope(self.states | frozenset(extra), self.consts, self.flow,
                     self.time_ok, self.lenient, self.binders)


class Parser:
    def __init__(self, text: str, scope: Scope | None = None):
        self.toks = tokenize(text)
        self.i = 0
        self.scope = scope or Scope(lenient=True, time_ok=True)
        self.defs: dict = {}

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("sym", "kw")

    def error(self, msg: str, tok: Token | None = None, cls=DSLSyntaxError):
        t = tok or self.tok
        return cls(msg, t.line, t.col)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected an identifier, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def done(self):
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")

    # -- expressions
    def expr(self) -> Expr:
        e = self.term()[0]
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            r = self.term()[0]
            e = sx.Add(e, r) if op == "+" else sx.Sub(e, r)
        return e

    def term(self):
        e, bare = self.unary()
        while self.at("*") or self.at("/"):
            op = self.tok.text
            self.i += 1
            r, rbare = self.unary()
            if op == "/" and bare and rbare:
                if r.value == 0:
                    e = sx.Div(e, r)
                else:
                    e = Num(e.value / r.value)
            else:
                e = sx.Mul(e, r) if op == "*" else sx.Div(e, r)
            bare = False
        return e, bare

    def unary(self):
        if self.accept("-"):
            e, bare = self.unary()
            if bare:
                return Num(-e.value), True
            return sx.Neg(e), False
        return self.power()

    def power(self):
        base, bare = self.primary()
        if self.accept("^"):
            return sx.Pow(base, self.exponent()), False
        return base, bare

    def exponent(self) -> int:
        t = self.tok
        if t.kind == "num" and "." not in t.text:
            self.i += 1
            return int(t.text)
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            try:
                v = sx.eval_numeric(e, {}, mode="exact")
            except sx.EvalError:
                v = None
            if v is not None and v.denominator == 1 and v >= 0:
                return int(v)
        raise self.error("exponent must be a non-negative integer literal", t)

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(Fraction(t.text)), True
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e, False
        if t.kind == "dollar":
            self.i += 1
            name = t.text[1:]
            if not self.scope.flow:
                raise self.error("initial-value references ($x) are only allowed in flows", t)
            if name not in self.scope.states and not self.scope.lenient:
                raise self.error(f"undeclared state variable {name!r}", t, UndeclaredName)
            return sx.StateVar(name), False
        if t.kind == "ident":
            self.i += 1
            if t.text in sx.FUNCTIONS and self.at("("):
                self.i += 1
                arg = self.expr()
                self.expect(")")
                return sx.apply_fn(t.text, arg), False
            return self.resolve(t), False
        raise self.error(f"expected an expression, found {t.text or 'end of input'!r}")

    def resolve(self, t: Token) -> Expr:
        name, s = t.text, self.scope
        if name in s.binders:
            return sx.Param(name)
        if s.flow and name == "t":
            return sx.TIME
        if name in s.states:
            return sx.StateVar(name)
        if name in s.consts:
            return sx.Param(name)
        if s.time_ok and name == "t":
            return sx.TIME
        if name in sx.NAMED_CONSTANTS:
            return sx.NamedConst(name)
        if s.lenient:
            return sx.StateVar(name)
        raise self.error(f"undeclared name {name!r}", t, UndeclaredName)

    # -- predicates
    def pred(self) -> hp.Pred:
        left = self.pred_or()
        if self.accept("==>"):
            return hp.Implies(left, self.pred())
        return left

    def pred_or(self) -> hp.Pred:
        p = self.pred_and()
        while self.accept("||"):
            p = hp.Or(p, self.pred_and())
        return p

    def pred_and(self) -> hp.Pred:
        p = self.pred_not()
        while self.accept("&&"):
            p = hp.And(p, self.pred_not())
        return p

    def pred_not(self) -> hp.Pred:
        if self.accept("!"):
            return hp.Not(self.pred_not())
        return self.pred_atom()

    def pred_atom(self) -> hp.Pred:
        if self.accept("@"):
            t = self.ident()
            d = self.defs.get(t.text)
            if not isinstance(d, hp.Pred):
                raise self.error(f"undeclared predicate {t.text!r}", t, UndeclaredName)
            return d
        if self.accept("true"):
            return hp.TRUE
        if self.accept("false"):
            return hp.FALSE
        if self.at("forall") or self.at("exists"):
            return self.quantifier()
        if self.at("("):
            save = self.i
            self.i += 1
            try:
                p = self.pred()
                self.expect(")")
                if self.tok.text not in CMP_TOKENS | {"+", "-", "*", "/", "^"}:
                    return p
            except ProblemError:
                pass
            self.i = save
        return self.comparison()

    def comparison(self) -> hp.Pred:
        lhs = self.expr()
        t = self.tok
        if t.kind != "sym" or t.text not in CMP_TOKENS:
            raise self.error(f"expected a comparison operator, found {t.text or 'end of input'!r}")
        self.i += 1
        return hp.Cmp(t.text, lhs, self.expr())

    def quantifier(self) -> hp.Pred:
        kind = hp.Forall if self.tok.text == "forall" else hp.Exists
        self.i += 1
        name = self.ident().text
        lo = hi = None
        if self.accept(">="):
            lo = self.expr()
        elif self.accept("<="):
            hi = self.expr()
        elif self.accept("in"):
            self.expect("[")
            lo = self.expr()
            self.expect(",")
            hi = self.expr()
            self.expect("]")
        self.expect(".")
        outer = self.scope
        self.scope = outer.with_binder(name)
        try:
            body = self.pred()
        finally:
            self.scope = outer
        return kind(name, lo, hi, body)

    # -- flows
    def flow_body(self) -> hp.Subst:
        self.expect("[")
        outer = self.scope
        self.scope = outer.as_flow()
        items = {}
        try:
            while not self.at("]"):
                t = self.ident()
                if t.text in items:
                    raise self.error(f"duplicate flow entry {t.text!r}", t, DuplicateName)
                if t.text not in outer.states and not outer.lenient:
                    raise self.error(f"undeclared state variable {t.text!r}", t, UndeclaredName)
                self.expect("~>")
                items[t.text] = self.expr()
                if not self.accept(","):
                    break
        finally:
            self.scope = outer
        self.expect("]")
        return hp.Subst(items)

    # -- programs
    def prog(self) -> hp.HProg:
        p = self.prog_seq()
        while self.accept("|_|"):
            p = hp.Choice(p, self.prog_seq())
        return p

    def _starts_prog(self, t: Token) -> bool:
        if t.kind == "ident":
            return True
        return t.text in ("skip", "abort", "?", "loop", "if", "while", "{", "(", "evol")

    def prog_seq(self) -> hp.HProg:
        p = self.prog_atom()
        while self.at(";") and self._starts_prog(self.peek()):
            self.i += 1
            p = hp.Seq(p, self.prog_atom())
        return p

    def prog_atom(self) -> hp.HProg:
        t = self.tok
        if self.accept("skip"):
            return hp.Skip()
        if self.accept("abort"):
            return hp.Abort()
        if self.accept("?"):
            return hp.Test(self.pred_not())
        if self.accept("("):
            p = self.prog()
            self.expect(")")
            return p
        if self.accept("loop"):
            self.expect("(")
            body = self.prog()
            self.expect(")")
            return hp.Star(body, self.opt_inv())
        if self.accept("if"):
            cond = self.pred()
            self.expect("{")
            a = self.prog()
            self.expect("}")
            self.expect("else")
            self.expect("{")
            b = self.prog()
            self.expect("}")
            return hp.If(cond, a, b)
        if self.accept("while"):
            cond = self.pred()
            inv = self.opt_inv()
            self.expect("{")
            body = self.prog()
            self.expect("}")
            return hp.While(cond, body, inv)
        if self.accept("evol"):
            flow = self.flow_body()
            guard = hp.TRUE
            if self.accept("|"):
                guard = self.pred_not()
            return hp.EvolFlow(flow, guard)
        if self.at("{"):
            return self.ode()
        if t.kind == "ident":
            if self.peek().text in (":=", ","):
                return self.assignment()
            self.i += 1
            if t.text not in self.defs:
                raise self.error(f"undeclared program {t.text!r}", t, UndeclaredName)
            d = self.defs[t.text]
            if not isinstance(d, hp.HProg):
                raise self.error(f"{t.text!r} is a flow, not a program", t)
            return d
        raise self.error(f"expected a program, found {t.text or 'end of input'!r}")

    def opt_inv(self):
        if self.accept("inv"):
            self.expect("(")
            p = self.pred()
            self.expect(")")
            return p
        return None

    def state_name(self) -> Token:
        t = self.ident()
        if t.text not in self.scope.states and not self.scope.lenient:
            raise self.error(f"undeclared state variable {t.text!r}", t, UndeclaredName)
        return t

    def assignment(self) -> hp.HProg:
        names = [self.state_name()]
        while self.accept(","):
            names.append(self.state_name())
        self.expect(":=")
        vals = [self.expr()]
        while self.accept(","):
            vals.append(self.expr())
        if len(vals) != len(names):
            raise self.error("assignment arity mismatch", names[0])
        seen = set()
        for n in names:
            if n.text in seen:
                raise self.error(f"variable {n.text!r} assigned twice", n, DuplicateName)
            seen.add(n.text)
        return hp.Assign(hp.Subst({n.text: v for n, v in zip(names, vals)}))

    def ode(self) -> hp.HProg:
        self.expect("{")
        field = {}
        while True:
            t = self.state_name()
            self.expect("'")
            self.expect("=")
            if t.text in field:
                raise self.error(f"duplicate derivative for {t.text!r}", t, DuplicateName)
            field[t.text] = self.expr()
            if not self.accept(","):
                break
        guard = hp.TRUE
        if self.accept("|"):
            guard = self.pred()
        self.expect("}")
        inv = self.opt_inv()
        cmd = hp.EvolutionCmd(tuple(field), hp.Subst(field), guard)
        return hp.Evolve(cmd, None, inv)

    # -- hints and goals
    def hint(self):
        self.expect("using")
        if self.accept("flow"):
            if self.tok.kind == "ident":
                t = self.ident()
                d = self.defs.get(t.text)
                if not isinstance(d, hp.Subst):
                    raise self.error(f"undeclared flow {t.text!r}", t, UndeclaredName)
                return hp.FlowHint(d)
            return hp.FlowHint(self.flow_body())
        if self.accept("dinduct"):
            return hp.DInductHint()
        if self.accept("solve"):
            return hp.SolveHint()
        if self.accept("darboux"):
            self.expect("(")
            e = self.expr()
            self.expect(",")
            c = self.expr()
            self.expect(",")
            rel = self.ident().text if self.tok.kind == "ident" else None
            if rel not in ("eq", "ge", "gt"):
                raise self.error("darboux relation must be eq, ge or gt")
            self.expect(")")
            return hp.DarbouxHint(e, c, rel)
        if self.accept("ghost"):
            self.expect("(")
            fresh = self.ident()
            if fresh.text in self.scope.states or fresh.text in self.scope.consts:
                raise self.error(f"ghost name {fresh.text!r} is not fresh", fresh, DuplicateName)
            self.expect(",")
            a = self.expr()
            self.expect(",")
            b = self.expr()
            self.expect(")")
            outer = self.scope
            self.scope = outer.with_states([fresh.text])
            try:
                inner = self.hint() if self.at("using") else hp.DInductHint()
            finally:
                self.scope = outer
            return hp.GhostHint(fresh.text, a, b, inner)
        raise self.error("unknown proof hint")

    def goalspec(self, name: str) -> hp.Goal:
        if self.accept("hoare"):
            kind = "hoare"
        elif self.accept("diamond"):
            kind = "diamond"
        else:
            raise self.error("expected 'hoare' or 'diamond'")
        self.expect("{")
        pre = self.pred()
        self.expect("}")
        prog = self.prog()
        self.expect("{")
        post = self.pred()
        self.expect("}")
        witness = None
        if kind == "diamond" and self.accept("witness"):
            self.expect("(")
            witness = self.expr()
            self.expect(")")
        hint = self.hint() if self.at("using") else hp.AutoHint()
        return hp.Goal(name, kind, pre, prog, post, witness, hint)

    def problem(self) -> hp.Problem:
        self.expect("problem")
        name = self.ident().text
        self.expect("{")
        consts, states, assumptions, goals = [], [], [], []
        declared: set = set()
        self.scope = Scope()

        def declare(t: Token, bucket: list):
            if t.text in declared:
                raise self.error(f"duplicate name {t.text!r}", t, DuplicateName)
            declared.add(t.text)
            bucket.append(t.text)

        while not self.at("}"):
            if self.accept("constants"):
                self.expect("{")
                while not self.at("}"):
                    declare(self.ident(), consts)
                    self.expect(":")
                    self.expect("real")
                    self.expect(";")
                self.expect("}")
            elif self.accept("variables"):
                self.expect("{")
                while not self.at("}"):
                    declare(self.ident(), states)
                    self.expect(";")
                self.expect("}")
            elif self.accept("assumes"):
                self.expect("{")
                while not self.at("}"):
                    assumptions.append(self.pred())
                    self.expect(";")
                self.expect("}")
            elif self.accept("def"):
                t = self.ident()
                if t.text in self.defs or t.text in declared:
                    raise self.error(f"duplicate name {t.text!r}", t, DuplicateName)
                self.expect("=")
                self.defs[t.text] = self.flow_body() if self.at("[") else self.prog()
                self.expect(";")
            elif self.accept("pred"):
                t = self.ident()
                if t.text in self.defs or t.text in declared:
                    raise self.error(f"duplicate name {t.text!r}", t, DuplicateName)
                self.expect("=")
                self.defs[t.text] = self.pred()
                self.expect(";")
            elif self.accept("goal"):
                t = self.ident()
                if any(g.name == t.text for g in goals):
                    raise self.error(f"duplicate goal {t.text!r}", t, DuplicateName)
                self.expect(":")
                goals.append(self.goalspec(t.text))
                self.expect(";")
            else:
                raise self.error(f"unexpected {self.tok.text or 'end of input'!r} in problem body")
            self.scope = Scope(frozenset(states), frozenset(consts))
        self.expect("}")
        self.done()
        return hp.Problem(name, tuple(consts), tuple(assumptions), tuple(states),
                          dict(self.defs), tuple(goals))


def _scope(states, params, flow: bool) -> Scope:
    if states is None:
        return Scope(frozenset(), frozenset(params or ()), flow, True, True)
    return Scope(frozenset(states), frozenset(params or ()), flow, True, False)


def parse_expr(text: str, states=None, params=(), flow: bool = False) -> Expr:
    """Parse an expression.  With states=None, unknown names are state variables."""
    p = Parser(text, _scope(states, params, flow))
    e = p.expr()
    p.done()
    return e


def parse_pred(text: str, states=None, params=()) -> hp.Pred:
    p = Parser(text, _scope(states, params, False))
    out = p.pred()
    p.done()
    return out


def parse_subst(text: str, states=None, params=(), flow: bool = True) -> hp.Subst:
    """Parse `[x ~> e, ...]`; by default in flow mode (t is time, $x initial)."""
    p = Parser(text, _scope(states, params, flow))
    out = p.flow_body() if flow else _plain_subst(p)
    p.done()
    return out


def _plain_subst(p: Parser) -> hp.Subst:
    p.expect("[")
    items = {}
    while not p.at("]"):
        t = p.ident()
        p.expect("~>")
        items[t.text] = p.expr()
        if not p.accept(","):
            break
    p.expect("]")
    return hp.Subst(items)


def parse_prog(text: str, states=None, params=(), defs=None) -> hp.HProg:
    p = Parser(text, _scope(states, params, False))
    if states is not None:
        p.scope.time_ok = False
    p.defs = dict(defs or {})
    out = p.prog()
    p.done()
    return out


def parse_problem(text: str) -> hp.Problem:
    return Parser(text).problem()


def load_problem(path) -> hp.Problem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())
