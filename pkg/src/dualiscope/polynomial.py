"""Exact multivariate polynomials over the rationals.

A :class:`SitePolynomial` has one variable per site; terms map exponent
tuples to nonzero :class:`~fractions.Fraction` coefficients.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence


class SitePolynomial:
    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple, object] | None = None):
        self.nvars = nvars
        clean = {}
        for exps, c in (terms or {}).items():
            if len(exps) != nvars:
                raise ValueError(f"exponent {exps} does not have {nvars} entries")
            if c != 0:
                clean[tuple(exps)] = Fraction(c) if isinstance(c, int) else c
        self.terms = clean

    @classmethod
    def constant(cls, c, nvars: int) -> "SitePolynomial":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, i: int, nvars: int) -> "SitePolynomial":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1})

    @classmethod
    def monomial(cls, exps: Sequence[int], c=1) -> "SitePolynomial":
        return cls(len(exps), {tuple(exps): c})

    def _coerce(self, other) -> "SitePolynomial":
        if isinstance(other, SitePolynomial):
            if other.nvars != self.nvars:
                raise ValueError("polynomials live on different site sets")
            return other
        return SitePolynomial.constant(other, self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return SitePolynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return SitePolynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, SitePolynomial):
            return SitePolynomial(self.nvars, {e: c * other for e, c in self.terms.items()})
        other = self._coerce(other)
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return SitePolynomial(self.nvars, out)

    __rmul__ = __mul__

    def diff(self, i: int) -> "SitePolynomial":
        out: dict = {}
        for e, c in self.terms.items():
            if e[i]:
                ne = e[:i] + (e[i] - 1,) + e[i + 1:]
                out[ne] = out.get(ne, 0) + c * e[i]
        return SitePolynomial(self.nvars, out)

    def times_var(self, i: int) -> "SitePolynomial":
        return SitePolynomial(
            self.nvars,
            {e[:i] + (e[i] + 1,) + e[i + 1:]: c for e, c in self.terms.items()},
        )

    def __call__(self, point: Sequence):
        total = 0
        for e, c in self.terms.items():
            term = c
            for v, k in zip(point, e):
                if k:
                    term = term * v**k
            total = total + term
        return total

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs_coefficient(self):
        return max((abs(c) for c in self.terms.values()), default=Fraction(0))

    def __eq__(self, other):
        if isinstance(other, SitePolynomial):
            return self.nvars == other.nvars and self.terms == other.terms
        return (self - other).is_zero()

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e, c in sorted(self.terms.items(), reverse=True):
            mono = "*".join(
                f"z{i}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k
            )
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)
