"""Small expression language for right-hand sides and cost integrands.

Grammar (EBNF, also documented in the README):

    expr    = term , { ( "+" | "-" ) , term } ;
    term    = factor , { ( "*" | "/" ) , factor } ;
    factor  = "-" , factor | power ;
    power   = atom , [ "^" , factor ] ;              (* right associative *)
    atom    = NUMBER | "t" | VAR | call | "(" , expr , ")" ;
    call    = FUNC , "(" , expr , { "," , expr } , ")"
            | "if" , "(" , cond , "," , expr , "," , expr , ")" ;
    cond    = expr , CMP , expr ;
    CMP     = ">=" | ">" | "<=" | "<" | "==" ;
    VAR     = ( "x" | "u" ) , DIGIT , { DIGIT } ;
    FUNC    = "sin" | "cos" | "exp" | "log" | "abs" | "sqrt"
            | "sign" | "min" | "max" ;

"^" binds tighter than unary minus, so ``-x1^2`` means ``-(x1^2)``.
Conditionals select branches exactly (no smoothing), and an untaken branch
is never a source of domain errors.

Evaluation guards: a multiplication with an exactly-zero factor evaluates
to zero even when the other factor is singular at that point, which gives
``x1*sin(1/x1)`` its continuous extension at ``x1 = 0``.  Division by zero
anywhere else, log/sqrt of a negative, and a fractional power of a
negative base raise :class:`EvalError`.

Expressions are immutable after parsing and evaluation is pure, so they
may be evaluated concurrently.  ``x``/``u`` entries of the environment may
be vectors of points (shape ``(n, B)``), in which case evaluation is
vectorised over the trailing axis.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionError, EvalError, ExprSyntaxError, UnknownIdentifier

__all__ = [
    "Expr",
    "EvalEnv",
    "parse",
    "evaluate",
    "to_source",
    "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "abs", "sqrt", "sign", "min", "max")
_ONE_ARG = {"sin", "cos", "exp", "log", "abs", "sqrt", "sign"}
_CMP_OPS = (">=", "<=", "==", ">", "<")


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x", "u" or "t"
    index: int  # 1-based; 0 for "t"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class If:
    cond: Cmp
    then: "Expr"
    other: "Expr"


Expr = Union[Num, Var, Neg, Bin, Call, If]


@dataclass
class EvalEnv:
    """Point (or batch of points) at which an expression is evaluated."""

    x: np.ndarray
    u: np.ndarray
    t: Union[float, np.ndarray] = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float)


# --------------------------------------------------------------------------
# Tokenizer
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<cmp>>=|<=|==|>|<)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            at = len(src) - len(stripped)
            raise ExprSyntaxError(at, "a token", stripped[0])
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        elif m.lastgroup == "cmp":
            tokens.append(("cmp", m.group("cmp"), m.start("cmp")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


# --------------------------------------------------------------------------
# Parser (recursive descent)
# --------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens, n: int, r: int):
        self.tokens = tokens
        self.i = 0
        self.n = n
        self.r = r

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, val, pos = self.peek()
        if val != text:
            raise ExprSyntaxError(pos, repr(text), val or "end of input")
        return self.advance()

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while self.peek()[1] in ("+", "-"):
            op = self.advance()[1]
            node = Bin(op, node, self.parse_term())
        return node

    def parse_term(self) -> Expr:
        node = self.parse_factor()
        while self.peek()[1] in ("*", "/"):
            op = self.advance()[1]
            node = Bin(op, node, self.parse_factor())
        return node

    def parse_factor(self) -> Expr:
        if self.peek()[1] == "-":
            self.advance()
            return Neg(self.parse_factor())
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        if self.peek()[1] == "^":
            self.advance()
            return Bin("^", base, self.parse_factor())
        return base

    def parse_atom(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(val))
        if val == "(":
            self.advance()
            node = self.parse_expr()
            self.expect(")")
            return node
        if kind == "ident":
            self.advance()
            if val == "if":
                return self.parse_if()
            if val in FUNCTIONS:
                return self.parse_call(val, pos)
            return self.parse_var(val, pos)
        raise ExprSyntaxError(pos, "a number, variable, function or '('", val or "end of input")

    def parse_call(self, func: str, pos: int) -> Expr:
        self.expect("(")
        args = [self.parse_expr()]
        while self.peek()[1] == ",":
            self.advance()
            args.append(self.parse_expr())
        self.expect(")")
        if func in _ONE_ARG and len(args) != 1:
            raise ExprSyntaxError(pos, f"1 argument to {func}", f"{len(args)} arguments")
        if func in ("min", "max") and len(args) < 2:
            raise ExprSyntaxError(pos, f"at least 2 arguments to {func}", f"{len(args)}")
        return Call(func, tuple(args))

    def parse_if(self) -> Expr:
        self.expect("(")
        left = self.parse_expr()
        kind, val, pos = self.peek()
        if kind != "cmp":
            raise ExprSyntaxError(pos, "a comparison operator", val or "end of input")
        self.advance()
        cond = Cmp(val, left, self.parse_expr())
        self.expect(",")
        then = self.parse_expr()
        self.expect(",")
        other = self.parse_expr()
        self.expect(")")
        return If(cond, then, other)

    def parse_var(self, name: str, pos: int) -> Expr:
        if name == "t":
            return Var("t", 0)
        m = re.fullmatch(r"([xu])(\d+)", name)
        if m is None:
            raise UnknownIdentifier(name, pos)
        kind, index = m.group(1), int(m.group(2))
        declared = self.n if kind == "x" else self.r
        if index < 1 or index > declared:
            raise DimensionError(name, index, declared)
        return Var(kind, index)


def parse(src: str, dims: tuple[int, int]) -> Expr:
    """Parse ``src`` against declared dimensions ``(n, r)``.

    Raises ExprSyntaxError / UnknownIdentifier / DimensionError with the
    offending position.
    """
    if not src or not src.strip():
        raise ExprSyntaxError(0, "a non-empty expression", "empty input")
    n, r = dims
    parser = _Parser(_tokenize(src), n, r)
    node = parser.parse_expr()
    kind, val, pos = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(pos, "end of input", val)
    return node


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def _lookup(node: Var, env: EvalEnv):
    if node.kind == "t":
        return np.asarray(env.t, dtype=float)
    arr = env.x if node.kind == "x" else env.u
    if node.index > arr.shape[0]:
        raise DimensionError(f"{node.kind}{node.index}", node.index, arr.shape[0])
    return arr[node.index - 1]


def _eval(node: Expr, env: EvalEnv):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return _lookup(node, env)
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Bin):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            # zero factor absorbs, even a singular co-factor
            raw = a * b
            return np.where((a == 0.0) | (b == 0.0), 0.0, raw)
        if node.op == "/":
            return np.divide(a, b)
        return np.power(a, b)
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        if node.func == "min":
            out = args[0]
            for a in args[1:]:
                out = np.minimum(out, a)
            return out
        if node.func == "max":
            out = args[0]
            for a in args[1:]:
                out = np.maximum(out, a)
            return out
        fn = {
            "sin": np.sin,
            "cos": np.cos,
            "exp": np.exp,
            "log": np.log,
            "abs": np.abs,
            "sqrt": np.sqrt,
            "sign": np.sign,
        }[node.func]
        return fn(args[0])
    if isinstance(node, If):
        cond = _eval_cond(node.cond, env)
        then = _eval(node.then, env)
        other = _eval(node.other, env)
        return np.where(cond, then, other)
    raise TypeError(f"not an expression node: {node!r}")


def _eval_cond(node: Cmp, env: EvalEnv):
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    return {
        ">=": np.greater_equal,
        ">": np.greater,
        "<=": np.less_equal,
        "<": np.less,
        "==": np.equal,
    }[node.op](a, b)


def _diagnose(node: Expr, env: EvalEnv) -> str:
    """Locate the operation that first produced a non-finite value."""
    with np.errstate(all="ignore"):
        if isinstance(node, (Num, Var)):
            return "non-finite input value"
        if isinstance(node, Neg):
            return _diagnose(node.operand, env)
        if isinstance(node, If):
            cond = _eval_cond(node.cond, env)
            branch = node.then if np.all(cond) else node.other
            if not np.all(np.isfinite(_eval(branch, env))):
                return _diagnose(branch, env)
            return "non-finite conditional result"
        children = []
        if isinstance(node, Bin):
            children = [node.left, node.right]
        elif isinstance(node, Call):
            children = list(node.args)
        for child in children:
            if not np.all(np.isfinite(_eval(child, env))):
                return _diagnose(child, env)
        if isinstance(node, Bin):
            if node.op == "/":
                return "division by zero"
            if node.op == "^":
                return "invalid power (fractional exponent of a negative base, or overflow)"
            return f"overflow in '{node.op}'"
        if isinstance(node, Call):
            return {
                "log": "log of a non-positive value",
                "sqrt": "sqrt of a negative value",
                "exp": "overflow in exp",
            }.get(node.func, f"non-finite result of {node.func}")
    return "non-finite result"


def evaluate(node: Expr, env: EvalEnv, strict: bool = True):
    """Evaluate an expression at ``env``.

    With ``strict`` (the default) any non-finite result raises
    :class:`EvalError`; with ``strict=False`` non-finite values propagate,
    which batched integrators use for per-trajectory divergence handling.
    """
    with np.errstate(all="ignore"):
        out = _eval(node, env)
    if strict and not np.all(np.isfinite(out)):
        raise EvalError(_diagnose(node, env))
    return out


# --------------------------------------------------------------------------
# Pretty printer
# --------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _src(node: Expr) -> tuple[str, int]:
    if isinstance(node, Num):
        return repr(node.value), _PREC["atom"]
    if isinstance(node, Var):
        return ("t" if node.kind == "t" else f"{node.kind}{node.index}"), _PREC["atom"]
    if isinstance(node, Neg):
        s, p = _src(node.operand)
        if p < _PREC["neg"]:
            s = f"({s})"
        return f"-{s}", _PREC["neg"]
    if isinstance(node, Bin):
        prec = _PREC[node.op]
        ls, lp = _src(node.left)
        rs, rp = _src(node.right)
        if node.op == "^":
            # left operand must outrank '^'; right side reparses as a factor
            if lp <= prec:
                ls = f"({ls})"
            if rp < _PREC["neg"]:
                rs = f"({rs})"
        else:
            if lp < prec:
                ls = f"({ls})"
            # + - * / parse left associative: a right child at the same
            # precedence level must keep its parentheses to round-trip
            if rp <= prec:
                rs = f"({rs})"
        return f"{ls} {node.op} {rs}", prec
    if isinstance(node, Call):
        args = ", ".join(_src(a)[0] for a in node.args)
        return f"{node.func}({args})", _PREC["atom"]
    if isinstance(node, If):
        c = node.cond
        cs = f"{_src(c.left)[0]} {c.op} {_src(c.right)[0]}"
        return (
            f"if({cs}, {_src(node.then)[0]}, {_src(node.other)[0]})",
            _PREC["atom"],
        )
    raise TypeError(f"not an expression node: {node!r}")


def to_source(node: Expr) -> str:
    """Render an AST back to parseable source text."""
    return _src(node)[0]
