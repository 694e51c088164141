"""Exact arithmetic in the prime field F_p and binomial coefficients mod p."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

MAX_MODULUS = 1 << 16


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    d = 3
    while d * d <= n:
        if n % d == 0:
            return False
        d += 2
    return True


def check_modulus(p: int) -> None:
    """Reject moduli outside the supported range: prime, > 3, < 2^16."""
    if not isinstance(p, int) or p > MAX_MODULUS:
        raise ValueError(f"modulus {p!r} out of supported range")
    if p <= 3 or not is_prime(p):
        raise ValueError(f"modulus must be a prime > 3, got {p}")


def inv_mod(a: int, p: int) -> int:
    a %= p
    if a == 0:
        raise ZeroDivisionError("inverse of 0 in F_p")
    return pow(a, p - 2, p)


@lru_cache(maxsize=None)
def _factorials(p: int) -> tuple[int, ...]:
    fac = [1] * p
    for k in range(1, p):
        fac[k] = fac[k - 1] * k % p
    return tuple(fac)


def binom_digit(n: int, k: int, p: int) -> int:
    """binom(n, k) mod p for 0 <= n, k < p, via the factorial table."""
    if k < 0 or k > n:
        return 0
    fac = _factorials(p)
    return fac[n] * inv_mod(fac[k] * fac[n - k], p) % p


def binom_mod(n: int, k: int, p: int) -> int:
    """binom(n, k) mod p by Lucas' theorem, digit by digit in base p."""
    if k < 0 or k > n:
        return 0
    out = 1
    while n or k:
        out = out * binom_digit(n % p, k % p, p) % p
        if out == 0:
            return 0
        n //= p
        k //= p
    return out


def multi_binom(alpha: Iterable[int], beta: Iterable[int], p: int) -> int:
    """prod_i binom(alpha_i + beta_i, alpha_i) mod p, componentwise Lucas."""
    out = 1
    for a, b in zip(alpha, beta):
        if a < 0 or b < 0:
            raise ValueError("multi-indices must be componentwise nonnegative")
        out = out * binom_mod(a + b, a, p) % p
        if out == 0:
            return 0
    return out


@dataclass(frozen=True)
class Scalar:
    """A residue in F_p.  Arithmetic stays reduced into [0, p)."""

    value: int
    p: int

    def __post_init__(self):
        check_modulus(self.p)
        object.__setattr__(self, "value", self.value % self.p)

    def _coerce(self, other: "Scalar") -> int:
        if not isinstance(other, Scalar):
            raise TypeError(f"expected Scalar, got {type(other).__name__}")
        if other.p != self.p:
            raise ValueError(f"mixed moduli {self.p} and {other.p}")
        return other.value

    def __add__(self, other):
        return Scalar((self.value + self._coerce(other)) % self.p, self.p)

    def __sub__(self, other):
        return Scalar((self.value - self._coerce(other)) % self.p, self.p)

    def __mul__(self, other):
        return Scalar(self.value * self._coerce(other) % self.p, self.p)

    def __neg__(self):
        return Scalar(-self.value % self.p, self.p)

    def inv(self) -> "Scalar":
        return Scalar(inv_mod(self.value, self.p), self.p)

    def __bool__(self):
        return self.value != 0
