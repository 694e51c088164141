"""Shape parameters (m, p, t) of the algebra O(m,m;t) and its subalgebras."""

from __future__ import annotations

from dataclasses import dataclass, field

from .gfp import check_modulus


@dataclass(frozen=True)
class Params:
    """m pairs of variables over F_p with truncation heights t.

    pi_i = p^{t_i} - 1 bounds the divided-power exponents; xi = sum p^{t_i}
    is the top Z-degree of O(m,m;t).
    """

    m: int
    p: int
    t: tuple[int, ...]
    pi: tuple[int, ...] = field(init=False)
    xi: int = field(init=False)

    def __post_init__(self):
        check_modulus(self.p)
        if self.m < 3:
            raise ValueError(f"m must be >= 3, got {self.m}")
        t = tuple(int(x) for x in self.t)
        if len(t) != self.m or any(x < 1 for x in t):
            raise ValueError(f"t must be {self.m} positive integers, got {self.t}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "pi", tuple(self.p**x - 1 for x in t))
        object.__setattr__(self, "xi", sum(self.p**x for x in t))

    @property
    def n_vars(self) -> int:
        return 2 * self.m

    def is_even_index(self, r: int) -> bool:
        """True for directions 1..m (divided-power side)."""
        return 1 <= r <= self.m

    def prime_of(self, r: int) -> int:
        """The paired index r': i <-> i+m."""
        if not 1 <= r <= 2 * self.m:
            raise ValueError(f"direction {r} out of range 1..{2*self.m}")
        return r + self.m if r <= self.m else r - self.m

    def mu(self, r: int) -> int:
        """Parity of the direction r: 0 on 1..m, 1 on m+1..2m."""
        if not 1 <= r <= 2 * self.m:
            raise ValueError(f"direction {r} out of range 1..{2*self.m}")
        return 0 if r <= self.m else 1

    def label(self) -> str:
        tstr = ",".join(str(x) for x in self.t)
        return f"(m={self.m},p={self.p},t=({tstr}))"
