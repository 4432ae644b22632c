"""
Expression parser for surface, field and profile formulas.
Parses closed-form text such as "sin(u)*cos(v)" into an immutable AST that
evaluates over plain reals or over jets.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple, Union

import numpy as np
from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, VisitError

from . import jets
from .errors import (ArityError, DivisionByZeroValue, DomainError, EvaluationError, ExpressionSyntaxError,
                     JetError, UnknownIdentifier)

logger = logging.getLogger(__name__)

GRAMMAR = r"""
    ?start: sum

    ?sum: product
        | sum "+" product       -> add
        | sum "-" product       -> sub

    ?product: unary
        | product "*" unary     -> mul
        | product "/" unary     -> div

    ?unary: power
        | "-" unary             -> neg

    ?power: atom
        | power "^" exponent    -> pow

    exponent: NUMBER            -> pos_exponent
        | "-" NUMBER            -> neg_exponent

    ?atom: NUMBER               -> number
        | NAME "(" [sum ("," sum)*] ")" -> call
        | NAME                  -> name
        | "(" sum ")"

    NUMBER: /(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?/
    NAME: /[A-Za-z_][A-Za-z0-9_]*/

    %ignore /\s+/
"""

_LARK = Lark(GRAMMAR, parser="lalr", propagate_positions=True, maybe_placeholders=False)

CONSTANTS = {"pi": math.pi}

FUNCTION_NAMES = tuple(jets.FUNCTIONS)

Span = Tuple[int, int]


# AST

@dataclass(frozen=True)
class Num:
    value: float
    span: Span = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    span: Span = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Const:
    name: str
    span: Span = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    span: Span = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    span: Span = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float
    span: Span = field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"
    span: Span = field(default=(0, 0), compare=False, repr=False)


Expr = Union[Num, Var, Const, Neg, BinOp, Pow, Call]


@dataclass(frozen=True)
class VectorExpr:
    """Three component expressions over a shared parameter set."""
    x: Expr
    y: Expr
    z: Expr
    params: Tuple[str, ...] = ("u", "v")

    @property
    def components(self) -> Tuple[Expr, Expr, Expr]:
        return (self.x, self.y, self.z)


def _binary(op):
    @v_args(meta=True)
    def build(self, meta, children):
        return BinOp(op, children[0], children[1], self._span(meta))
    return build


class _AstBuilder(Transformer):
    """Turns the lark parse tree into AST nodes, resolving identifiers."""

    def __init__(self, source: str, params: Sequence[str]):
        super().__init__()
        self._source = source
        self._params = tuple(params)

    def _span(self, meta) -> Span:
        if getattr(meta, "empty", True):
            return (0, 0)
        return (_byte_offset(self._source, meta.start_pos), _byte_offset(self._source, meta.end_pos))

    @v_args(meta=True)
    def number(self, meta, children):
        return Num(float(children[0]), self._span(meta))

    @v_args(meta=True)
    def name(self, meta, children):
        token = children[0]
        ident = str(token)
        if ident in self._params:
            return Var(ident, self._span(meta))
        if ident in CONSTANTS:
            return Const(ident, self._span(meta))
        raise UnknownIdentifier(ident, _byte_offset(self._source, token.start_pos))

    @v_args(meta=True)
    def call(self, meta, children):
        token, args = children[0], [c for c in children[1:] if c is not None]
        func = str(token)
        if func not in FUNCTION_NAMES:
            raise UnknownIdentifier(func, _byte_offset(self._source, token.start_pos))
        if len(args) != 1:
            raise ArityError(f"{func}() takes 1 argument, got {len(args)}")
        return Call(func, args[0], self._span(meta))

    @v_args(meta=True)
    def neg(self, meta, children):
        return Neg(children[0], self._span(meta))

    @v_args(meta=True)
    def pow(self, meta, children):
        return Pow(children[0], children[1], self._span(meta))

    def pos_exponent(self, children):
        return float(children[0])

    def neg_exponent(self, children):
        return -float(children[0])

    add = _binary("+")
    sub = _binary("-")
    mul = _binary("*")
    div = _binary("/")


def _byte_offset(source: str, char_pos: int) -> int:
    return len(source[:char_pos].encode("utf-8"))


def parse(src: str, params: Sequence[str] = ("u", "v")) -> Expr:
    """Parse an expression.

    Args:
        src: Expression text
        params: Declared parameter names

    Returns:
        Immutable AST

    Raises:
        ExpressionSyntaxError, UnknownIdentifier, ArityError
    """
    try:
        tree = _LARK.parse(src)
    except UnexpectedEOF:
        raise ExpressionSyntaxError("unexpected end of expression", len(src.encode("utf-8"))) from None
    except UnexpectedCharacters as e:
        raise ExpressionSyntaxError(f"unexpected character {src[e.pos_in_stream]!r}",
                                    _byte_offset(src, e.pos_in_stream)) from None
    except UnexpectedInput as e:
        pos = getattr(e, "pos_in_stream", None)
        if pos is None or pos < 0:
            token = getattr(e, "token", None)
            pos = getattr(token, "start_pos", None)
        offset = len(src.encode("utf-8")) if pos is None or pos < 0 else _byte_offset(src, pos)
        raise ExpressionSyntaxError("unexpected token", offset) from None

    try:
        return _AstBuilder(src, params).transform(tree)
    except VisitError as e:
        raise e.orig_exc from None


def parse_vector(x: str, y: str, z: str, params: Sequence[str] = ("u", "v")) -> VectorExpr:
    """Parse the three components of a vector-valued expression."""
    params = tuple(params)
    return VectorExpr(parse(x, params), parse(y, params), parse(z, params), params)


def to_source(expr: Expr) -> str:
    """Fully parenthesized text that parses back to the same AST."""
    if isinstance(expr, Num):
        return repr(float(expr.value))
    if isinstance(expr, (Var, Const)):
        return expr.name
    if isinstance(expr, Neg):
        return f"(-{to_source(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({to_source(expr.left)} {expr.op} {to_source(expr.right)})"
    if isinstance(expr, Pow):
        return f"({to_source(expr.base)}^{repr(float(expr.exponent))})"
    if isinstance(expr, Call):
        return f"{expr.func}({to_source(expr.arg)})"
    raise TypeError(f"not an expression node: {expr!r}")


# Evaluation

def _real_ln(x):
    if np.any(np.asarray(x) <= 0):
        raise DomainError("ln")
    return np.log(x)


def _real_sqrt(x):
    if np.any(np.asarray(x) <= 0):
        raise DomainError("sqrt")
    return np.sqrt(x)


REAL_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "ln": _real_ln,
    "sqrt": _real_sqrt,
}


def _evaluate(node: Expr, env: Dict[str, object]):
    try:
        if isinstance(node, Num):
            return node.value
        if isinstance(node, Const):
            return CONSTANTS[node.name]
        if isinstance(node, Var):
            if node.name not in env:
                raise EvaluationError(f"parameter '{node.name}' has no value", node.span)
            return env[node.name]
        if isinstance(node, Neg):
            return -_evaluate(node.operand, env)
        if isinstance(node, BinOp):
            left = _evaluate(node.left, env)
            right = _evaluate(node.right, env)
            if node.op == "+":
                return left + right
            if node.op == "-":
                return left - right
            if node.op == "*":
                return left * right
            if not isinstance(right, jets._Jet) and np.any(np.asarray(right) == 0):
                raise DivisionByZeroValue("division by zero")
            return left / right
        if isinstance(node, Pow):
            base = _evaluate(node.base, env)
            if isinstance(base, jets._Jet):
                return jets.power(base, node.exponent)
            return np.power(np.asarray(base, dtype=float), node.exponent)
        if isinstance(node, Call):
            arg = _evaluate(node.arg, env)
            if isinstance(arg, jets._Jet):
                return jets.FUNCTIONS[node.func](arg)
            return REAL_FUNCTIONS[node.func](arg)
    except JetError as e:
        if getattr(e, "span", None) is None:
            e.span = node.span
        raise
    raise TypeError(f"not an expression node: {node!r}")


def evaluate_real(expr: Expr, **values) -> np.ndarray:
    """Plain real evaluation; parameters passed by name."""
    return np.asarray(_evaluate(expr, values), dtype=float)


def eval_jet(expr: Expr, u: jets.Jet2, v: jets.Jet2, params: Sequence[str] = ("u", "v")) -> jets.Jet2:
    """Evaluate over bivariate jets sharing base points and order.

    Args:
        expr: Parsed expression
        u, v: Seed jets for the two parameters

    Returns:
        Jet2 whose coefficients are the exact partials of the expression
    """
    result = _evaluate(expr, {params[0]: u, params[1]: v})
    if not isinstance(result, jets.Jet2):
        shape = np.broadcast_shapes(u.batch_shape, v.batch_shape)
        result = u.constant_like(np.broadcast_to(np.asarray(result, dtype=float), shape))
    return result


def eval_jet1(expr: Expr, t: jets.Jet1, param: str = "t") -> jets.Jet1:
    """Evaluate a one-parameter expression over a univariate jet."""
    result = _evaluate(expr, {param: t})
    if not isinstance(result, jets.Jet1):
        result = t.constant_like(np.broadcast_to(np.asarray(result, dtype=float), t.batch_shape))
    return result


def eval_vector(vexpr: VectorExpr, u: jets.Jet2, v: jets.Jet2):
    """Jets of the three components."""
    return [eval_jet(c, u, v, vexpr.params) for c in vexpr.components]


def rename(expr: Expr, mapping: Dict[str, str]) -> Expr:
    """Copy of an AST with variables renamed."""
    if isinstance(expr, Var):
        return Var(mapping.get(expr.name, expr.name), expr.span)
    if isinstance(expr, Neg):
        return Neg(rename(expr.operand, mapping), expr.span)
    if isinstance(expr, BinOp):
        return BinOp(expr.op, rename(expr.left, mapping), rename(expr.right, mapping), expr.span)
    if isinstance(expr, Pow):
        return Pow(rename(expr.base, mapping), expr.exponent, expr.span)
    if isinstance(expr, Call):
        return Call(expr.func, rename(expr.arg, mapping), expr.span)
    return expr
