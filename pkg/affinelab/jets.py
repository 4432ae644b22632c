"""
Truncated Taylor arithmetic ("jets") in one and two variables.

Coefficients are stored as raw partial derivatives at the base point:
for a Jet2 of order N, coeffs[i, j] is d^(i+j) f / du^i dv^j for
i + j <= N (entries with i + j > N are kept at zero). Trailing axes of
the coefficient array are batch axes, so a single jet can carry the
expansions at a whole grid of base points.
"""

import math
import logging
from typing import List, Sequence, Tuple, Union

import numpy as np

from .errors import DivisionByZeroValue, DomainError, OrderError

logger = logging.getLogger(__name__)

MAX_ORDER = 8

Scalar = Union[float, int, np.ndarray]

_FACTORIALS = np.array([math.factorial(k) for k in range(2 * MAX_ORDER + 2)], dtype=float)


def _falling_factorial(p: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= (p - i)
    return out


class _Jet:
    """Shared arithmetic for Jet1 and Jet2."""

    _nvars = 0
    # numpy operands defer to the reflected jet operators
    __array_ufunc__ = None

    def __init__(self, coeffs, order: int):
        if order < 0 or order > MAX_ORDER:
            raise OrderError(f"jet order {order} outside [0, {MAX_ORDER}]")
        self.order = int(order)
        self.coeffs = np.asarray(coeffs, dtype=float)

    # layout hooks, provided by subclasses

    @classmethod
    def _factorial_table(cls, order: int) -> np.ndarray:
        raise NotImplementedError

    @classmethod
    def _mask(cls, order: int) -> np.ndarray:
        raise NotImplementedError

    def _convolve(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def truncate(self, order: int):
        raise NotImplementedError

    # common helpers

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.coeffs.shape[self._nvars:]

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[(0,) * self._nvars]

    @classmethod
    def _expand(cls, table: np.ndarray, batch_ndim: int) -> np.ndarray:
        return table.reshape(table.shape + (1,) * batch_ndim)

    def _normalized(self) -> np.ndarray:
        return self.coeffs / self._expand(self._factorial_table(self.order), len(self.batch_shape))

    @classmethod
    def _from_normalized(cls, norm: np.ndarray, order: int):
        batch_ndim = norm.ndim - cls._nvars
        return cls(norm * cls._expand(cls._factorial_table(order), batch_ndim), order)

    def constant_like(self, value: Scalar, order: int = None):
        """Constant jet with this jet's order (or the given one)."""
        order = self.order if order is None else order
        value = np.asarray(value, dtype=float)
        shape = (order + 1,) * self._nvars + value.shape
        coeffs = np.zeros(shape)
        coeffs[(0,) * self._nvars] = value
        return type(self)(coeffs, order)

    def _coerce(self, other) -> "_Jet":
        if isinstance(other, _Jet):
            if type(other) is not type(self):
                raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
            return other
        return self.constant_like(other)

    def _aligned(self, other) -> Tuple["_Jet", "_Jet"]:
        other = self._coerce(other)
        if other.order == self.order:
            return self, other
        order = min(self.order, other.order)
        return self.truncate(order), other.truncate(order)

    # arithmetic

    def __add__(self, other):
        a, b = self._aligned(other)
        return type(self)(a.coeffs + b.coeffs, a.order)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._aligned(other)
        return type(self)(a.coeffs - b.coeffs, a.order)

    def __rsub__(self, other):
        a, b = self._aligned(other)
        return type(self)(b.coeffs - a.coeffs, a.order)

    def __neg__(self):
        return type(self)(-self.coeffs, self.order)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if not isinstance(other, _Jet):
            factor = np.asarray(other, dtype=float)
            return type(self)(self.coeffs * factor, self.order)
        a, b = self._aligned(other)
        product = a._convolve(a._normalized(), b._normalized())
        return type(self)._from_normalized(product, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, _Jet):
            divisor = np.asarray(other, dtype=float)
            if np.any(divisor == 0):
                raise DivisionByZeroValue("division by zero constant")
            return type(self)(self.coeffs / divisor, self.order)
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, exponent):
        if isinstance(exponent, _Jet):
            raise TypeError("jet exponents are not supported")
        return power(self, float(exponent))

    def compose(self, derivatives: Sequence[Scalar]):
        """Apply a scalar function given its derivatives at the base value.

        Args:
            derivatives: f(a0), f'(a0), ..., f^(N)(a0), each batch shaped

        Returns:
            Jet of f(self), exact to the jet order
        """
        n = self.order
        increment = self - self.value
        result = self.constant_like(np.asarray(derivatives[n]) / _FACTORIALS[n])
        for k in range(n - 1, -1, -1):
            result = result * increment + np.asarray(derivatives[k]) / _FACTORIALS[k]
        return result

    def __repr__(self):
        return f"{type(self).__name__}(order={self.order}, value={self.value!r})"


class Jet2(_Jet):
    """Bivariate jet: coeffs[i, j] = d^(i+j) f / du^i dv^j at the base point."""

    _nvars = 2

    @classmethod
    def _factorial_table(cls, order: int) -> np.ndarray:
        f = _FACTORIALS[:order + 1]
        return np.outer(f, f)

    @classmethod
    def _mask(cls, order: int) -> np.ndarray:
        idx = np.arange(order + 1)
        return (idx[:, None] + idx[None, :]) <= order

    @classmethod
    def variable(cls, which: str, base: Scalar, order: int) -> "Jet2":
        """Seed jet for the coordinate u or v.

        Args:
            which: 'u' or 'v'
            base: Base coordinate (scalar or array of base points)
            order: Jet order N

        Returns:
            Jet2 with value base and unit first derivative in its own variable
        """
        if which not in ("u", "v"):
            raise ValueError(f"unknown jet variable '{which}'")
        base = np.asarray(base, dtype=float)
        jet = cls(np.zeros((order + 1, order + 1) + base.shape), order)
        jet.coeffs[0, 0] = base
        if order >= 1:
            jet.coeffs[(1, 0) if which == "u" else (0, 1)] = 1.0
        return jet

    @classmethod
    def variables(cls, u: Scalar, v: Scalar, order: int) -> Tuple["Jet2", "Jet2"]:
        """Both coordinate seeds at broadcast base points."""
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        return cls.variable("u", u, order), cls.variable("v", v, order)

    def _convolve(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        n = self.order
        batch = np.broadcast_shapes(a.shape[2:], b.shape[2:])
        out = np.zeros((n + 1, n + 1) + batch)
        for p in range(n + 1):
            for q in range(n + 1 - p):
                apq = a[p, q]
                if not np.any(apq):
                    continue
                out[p:, q:] += apq * b[:n + 1 - p, :n + 1 - q]
        return out * self._expand(self._mask(n), len(batch))

    def partial(self, i: int, j: int) -> np.ndarray:
        """Mixed partial d^(i+j)/du^i dv^j at the base point."""
        if i + j > self.order:
            raise OrderError(f"partial ({i},{j}) beyond jet order {self.order}")
        return self.coeffs[i, j]

    def derivative(self, which: str) -> "Jet2":
        """Jet of the partial derivative, one order lower."""
        n = self.order
        if n < 1:
            raise OrderError("cannot differentiate an order-0 jet")
        if which == "u":
            return Jet2(self.coeffs[1:n + 1, 0:n], n - 1)
        if which == "v":
            return Jet2(self.coeffs[0:n, 1:n + 1], n - 1)
        raise ValueError(f"unknown jet variable '{which}'")

    def truncate(self, order: int) -> "Jet2":
        if order > self.order:
            raise OrderError(f"cannot raise jet order {self.order} to {order}")
        coeffs = self.coeffs[:order + 1, :order + 1]
        return Jet2(coeffs * self._expand(self._mask(order), len(self.batch_shape)), order)

    def homogeneous(self, degree: int) -> List[np.ndarray]:
        """Raw partials of total degree m: [c_(m,0), c_(m-1,1), ..., c_(0,m)]."""
        if degree > self.order:
            raise OrderError(f"degree {degree} beyond jet order {self.order}")
        return [self.coeffs[degree - j, j] for j in range(degree + 1)]

    def taylor(self, du: Scalar, dv: Scalar, degrees: Sequence[int] = None) -> np.ndarray:
        """Evaluate the Taylor polynomial (optionally only some degrees) at offsets."""
        du = np.asarray(du, dtype=float)
        dv = np.asarray(dv, dtype=float)
        degrees = range(self.order + 1) if degrees is None else degrees
        total = 0.0
        for m in degrees:
            for j in range(m + 1):
                i = m - j
                total = total + self.coeffs[i, j] * du ** i * dv ** j / (_FACTORIALS[i] * _FACTORIALS[j])
        return total


class Jet1(_Jet):
    """Univariate jet: coeffs[i] = d^i f / dt^i at the base point."""

    _nvars = 1

    @classmethod
    def _factorial_table(cls, order: int) -> np.ndarray:
        return _FACTORIALS[:order + 1].copy()

    @classmethod
    def _mask(cls, order: int) -> np.ndarray:
        return np.ones(order + 1, dtype=bool)

    @classmethod
    def variable(cls, base: Scalar, order: int) -> "Jet1":
        base = np.asarray(base, dtype=float)
        jet = cls(np.zeros((order + 1,) + base.shape), order)
        jet.coeffs[0] = base
        if order >= 1:
            jet.coeffs[1] = 1.0
        return jet

    def _convolve(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        n = self.order
        batch = np.broadcast_shapes(a.shape[1:], b.shape[1:])
        out = np.zeros((n + 1,) + batch)
        for p in range(n + 1):
            if not np.any(a[p]):
                continue
            out[p:] += a[p] * b[:n + 1 - p]
        return out

    def partial(self, i: int) -> np.ndarray:
        if i > self.order:
            raise OrderError(f"derivative {i} beyond jet order {self.order}")
        return self.coeffs[i]

    def derivative(self) -> "Jet1":
        if self.order < 1:
            raise OrderError("cannot differentiate an order-0 jet")
        return Jet1(self.coeffs[1:], self.order - 1)

    def integral(self, constant: Scalar) -> "Jet1":
        """Antiderivative with the given value at the base point, one order higher."""
        coeffs = np.concatenate([np.asarray(constant, dtype=float)[None] * np.ones_like(self.coeffs[:1]),
                                 self.coeffs], axis=0)
        return Jet1(coeffs, self.order + 1)

    def truncate(self, order: int) -> "Jet1":
        if order > self.order:
            raise OrderError(f"cannot raise jet order {self.order} to {order}")
        return Jet1(self.coeffs[:order + 1], order)


# Elementary functions

def reciprocal(a: _Jet) -> _Jet:
    a0 = a.value
    if np.any(a0 == 0):
        raise DivisionByZeroValue("division by a jet with zero value")
    return power(a, -1.0)


def power(a: _Jet, p: float) -> _Jet:
    """a ** p for a constant exponent p."""
    if float(p).is_integer() and p >= 0:
        exponent = int(p)
        result = a.constant_like(np.ones(a.batch_shape))
        base = a
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result
    a0 = a.value
    if float(p).is_integer():
        if np.any(a0 == 0):
            raise DivisionByZeroValue("negative power of a jet with zero value")
    elif np.any(a0 <= 0):
        raise DomainError("pow", f"pow: non-integer exponent {p} needs a positive base")
    derivs = [_falling_factorial(p, k) * np.power(a0, p - k) for k in range(a.order + 1)]
    return a.compose(derivs)


def sqrt(a: _Jet) -> _Jet:
    if np.any(a.value <= 0):
        raise DomainError("sqrt")
    return power(a, 0.5)


def exp(a: _Jet) -> _Jet:
    e = np.exp(a.value)
    return a.compose([e] * (a.order + 1))


def ln(a: _Jet) -> _Jet:
    a0 = a.value
    if np.any(a0 <= 0):
        raise DomainError("ln")
    derivs = [np.log(a0)]
    for k in range(1, a.order + 1):
        derivs.append((-1.0) ** (k - 1) * _FACTORIALS[k - 1] / a0 ** k)
    return a.compose(derivs)


def sin(a: _Jet) -> _Jet:
    s, c = np.sin(a.value), np.cos(a.value)
    cycle = [s, c, -s, -c]
    return a.compose([cycle[k % 4] for k in range(a.order + 1)])


def cos(a: _Jet) -> _Jet:
    s, c = np.sin(a.value), np.cos(a.value)
    cycle = [c, -s, -c, s]
    return a.compose([cycle[k % 4] for k in range(a.order + 1)])


def tan(a: _Jet) -> _Jet:
    return sin(a) / cos(a)


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "exp": exp,
    "ln": ln,
    "sqrt": sqrt,
}


def jet_arith(a: _Jet, b: _Jet, op: str) -> _Jet:
    """Binary arithmetic by operator name (add, sub, mul, div)."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown jet operation '{op}'")


def jet_func(a: _Jet, fn: str, exponent: float = None) -> _Jet:
    """Elementary function by name (sin, cos, tan, exp, ln, sqrt, pow_const)."""
    if fn == "pow_const":
        if exponent is None:
            raise ValueError("pow_const needs an exponent")
        return power(a, exponent)
    try:
        return FUNCTIONS[fn](a)
    except KeyError:
        raise ValueError(f"unknown jet function '{fn}'") from None
