"""Forward-mode dual numbers over numpy arrays.

A ``Dual`` pairs ``value`` (any shape, real or complex) with ``tangent``,
which has the same shape plus one trailing axis holding the derivative with
respect to each seeded parameter. A 0-d ``Dual`` is a single dual scalar; a
1-d ``Dual`` carries a whole energy grid through one solve.

Complex duals are duals with a complex dtype: for real parameters the
tangent of ``re + i*im`` is ``re' + i*im'``, so ``.real`` and ``.imag``
recover the (re, im) pair of real duals.

Every physics routine is written against the helpers in this module, so the
same code runs on plain floats/ndarrays (fast evaluation) and on duals
(gradient evaluation). On duals the value path performs exactly the numpy
operations the plain path performs.
"""
from typing import Sequence

import numpy as np

from .errors import DivisionByZero, SqrtDomain, TangentWidthMismatch

WIDTH = 7


def _scale(tangent, factor):
    # multiply each tangent slot by a value-shaped factor
    return tangent * np.asarray(factor)[..., None]


def _check(a: "Dual", b: "Dual") -> None:
    if a.tangent.shape[-1] != b.tangent.shape[-1]:
        raise TangentWidthMismatch(a.tangent.shape[-1], b.tangent.shape[-1])


def _nonzero(divisor) -> None:
    if np.any(np.asarray(divisor) == 0):
        raise DivisionByZero("dual division by a zero value")


class Dual:
    __slots__ = ("value", "tangent")

    # ndarray (op) Dual must defer to the reflected Dual method
    __array_ufunc__ = None

    def __init__(self, value, tangent):
        value = np.asarray(value)
        tangent = np.asarray(tangent)
        if tangent.ndim == 0:
            raise ValueError("tangent needs a trailing parameter axis")
        shape = value.shape + tangent.shape[-1:]
        if tangent.shape != shape:
            tangent = np.broadcast_to(tangent, shape)
        self.value = value
        self.tangent = tangent

    @property
    def width(self) -> int:
        return self.tangent.shape[-1]

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        return f"Dual(value={self.value!r}, tangent={self.tangent!r})"

    def __getitem__(self, index) -> "Dual":
        # index addresses value axes only; Ellipsis would swallow the tangent axis
        return Dual(self.value[index], self.tangent[index])

    # ── arithmetic ──────────────────────────────────────────────────────────

    def __neg__(self) -> "Dual":
        return Dual(-self.value, -self.tangent)

    def __add__(self, other) -> "Dual":
        if isinstance(other, Dual):
            _check(self, other)
            return Dual(self.value + other.value, self.tangent + other.tangent)
        return Dual(self.value + other, self.tangent)

    def __radd__(self, other) -> "Dual":
        return Dual(other + self.value, self.tangent)

    def __sub__(self, other) -> "Dual":
        if isinstance(other, Dual):
            _check(self, other)
            return Dual(self.value - other.value, self.tangent - other.tangent)
        return Dual(self.value - other, self.tangent)

    def __rsub__(self, other) -> "Dual":
        return Dual(other - self.value, -self.tangent)

    def __mul__(self, other) -> "Dual":
        if isinstance(other, Dual):
            _check(self, other)
            return Dual(self.value * other.value,
                        _scale(self.tangent, other.value) + _scale(other.tangent, self.value))
        return Dual(self.value * other, _scale(self.tangent, other))

    def __rmul__(self, other) -> "Dual":
        return Dual(other * self.value, _scale(self.tangent, other))

    def __truediv__(self, other) -> "Dual":
        if isinstance(other, Dual):
            _check(self, other)
            _nonzero(other.value)
            numerator = _scale(self.tangent, other.value) - _scale(other.tangent, self.value)
            return Dual(self.value / other.value,
                        numerator / np.asarray(other.value * other.value)[..., None])
        _nonzero(other)
        return Dual(self.value / other, self.tangent / np.asarray(other)[..., None])

    def __rtruediv__(self, other) -> "Dual":
        _nonzero(self.value)
        return Dual(other / self.value,
                    -_scale(self.tangent, other) / np.asarray(self.value * self.value)[..., None])

    def __pow__(self, power) -> "Dual":
        if isinstance(power, Dual):
            raise TypeError("only constant exponents are supported")
        return Dual(self.value ** power, _scale(self.tangent, power * self.value ** (power - 1)))

    # ── complex helpers ─────────────────────────────────────────────────────

    @property
    def real(self) -> "Dual":
        return Dual(np.real(self.value), np.real(self.tangent))

    @property
    def imag(self) -> "Dual":
        return Dual(np.imag(self.value), np.imag(self.tangent))

    def conj(self) -> "Dual":
        return Dual(np.conj(self.value), np.conj(self.tangent))

    def abs2(self) -> "Dual":
        if np.iscomplexobj(self.value):
            re, im = self.value.real, self.value.imag
            return Dual(re * re + im * im,
                        2.0 * (_scale(self.tangent.real, re) + _scale(self.tangent.imag, im)))
        return Dual(self.value * self.value, 2.0 * _scale(self.tangent, self.value))

    # ── elementary functions ────────────────────────────────────────────────

    def sqrt(self) -> "Dual":
        if np.any(self.value < 0):
            raise SqrtDomain(f"sqrt of negative value {np.min(self.value)!r}")
        root = np.sqrt(self.value)
        # the derivative at exactly zero is unbounded; it is defined as 0
        with np.errstate(divide="ignore"):
            slope = np.where(root > 0, 0.5 / root, 0.0)
        return Dual(root, _scale(self.tangent, slope))

    def tanh(self) -> "Dual":
        th = np.tanh(self.value)
        return Dual(th, _scale(self.tangent, 1.0 - th * th))

    def exp(self) -> "Dual":
        e = np.exp(self.value)
        return Dual(e, _scale(self.tangent, e))

    def sum(self) -> "Dual":
        return Dual(np.sum(self.value), self.tangent.reshape(-1, self.width).sum(axis=0))


# ─── Generic helpers (plain or dual) ────────────────────────────────────────

def is_dual(x) -> bool:
    return isinstance(x, Dual)


def value_of(x):
    return x.value if isinstance(x, Dual) else np.asarray(x)


def complex_dual(re, im):
    """Build re + i*im from two real (dual) parts."""
    return re + 1j * im


def sqrt(x):
    if isinstance(x, Dual):
        return x.sqrt()
    x = np.asarray(x)
    if np.any(x < 0):
        raise SqrtDomain(f"sqrt of negative value {np.min(x)!r}")
    return np.sqrt(x)


def tanh(x):
    return x.tanh() if isinstance(x, Dual) else np.tanh(x)


def exp(x):
    return x.exp() if isinstance(x, Dual) else np.exp(x)


def abs2(z):
    if isinstance(z, Dual):
        return z.abs2()
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return z.real * z.real + z.imag * z.imag
    return z * z


def conj(z):
    return z.conj() if isinstance(z, Dual) else np.conj(z)


def real(z):
    return z.real if isinstance(z, Dual) else np.real(z)


def imag(z):
    return z.imag if isinstance(z, Dual) else np.imag(z)


def total(x):
    """Sum over every value axis."""
    return x.sum() if isinstance(x, Dual) else np.sum(x)


def _width(items) -> int:
    widths = {i.width for i in items if isinstance(i, Dual)}
    if len(widths) > 1:
        a, b = sorted(widths)[:2]
        raise TangentWidthMismatch(a, b)
    return widths.pop() if widths else 0


def _tangent(item, width: int):
    if isinstance(item, Dual):
        return item.tangent
    return np.zeros(np.shape(item) + (width,))


def stack(items: Sequence):
    """Stack along a new leading axis."""
    width = _width(items)
    values = np.stack([value_of(i) for i in items])
    if not width:
        return values
    return Dual(values, np.stack([np.broadcast_to(_tangent(i, width), np.shape(value_of(i)) + (width,))
                                  for i in items]))


def concatenate(items: Sequence):
    """Join along the leading axis."""
    width = _width(items)
    values = np.concatenate([value_of(i) for i in items])
    if not width:
        return values
    return Dual(values, np.concatenate([_tangent(i, width) for i in items]))


def where(condition, a, b):
    condition = np.asarray(condition)
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.where(condition, a, b)
    width = _width([a, b])
    return Dual(np.where(condition, value_of(a), value_of(b)),
                np.where(condition[..., None], _tangent(a, width), _tangent(b, width)))


# ─── Seeding and extraction ─────────────────────────────────────────────────

def seed(params) -> list:
    """One dual scalar per parameter, component i carrying tangent e_i."""
    values = params.to_array() if hasattr(params, "to_array") else np.asarray(params, dtype=float)
    basis = np.eye(len(values))
    return [Dual(v, basis[i]) for i, v in enumerate(values)]


def extract_value(s):
    v = value_of(s)
    return v.item() if np.ndim(v) == 0 else np.array(v)


def extract_gradient(s, width: int = WIDTH) -> np.ndarray:
    if isinstance(s, Dual):
        return np.array(s.tangent)
    return np.zeros(np.shape(s) + (width,))
