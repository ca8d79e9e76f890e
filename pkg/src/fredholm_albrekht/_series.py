"""Truncated multivariate polynomial arithmetic in the monomial basis.

Internal helper for the degree-by-degree solver.  A ``Series`` keeps one
monomial-coefficient vector per degree (canonical colex order of
:mod:`polytensor`) and discards everything above ``max_degree``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .polytensor import SymTensor, canonical_rank, multi_indices, num_coeffs


@lru_cache(maxsize=None)
def _product_plan(n: int, a: int, b: int):
    ta, tb = multi_indices(n, a), multi_indices(n, b)
    ia, ib, ic = [], [], []
    for p, s in enumerate(ta):
        for q, t in enumerate(tb):
            ia.append(p)
            ib.append(q)
            ic.append(canonical_rank(s + t, n))
    return np.array(ia, np.intp), np.array(ib, np.intp), np.array(ic, np.intp)


@lru_cache(maxsize=None)
def _derivative_plan(n: int, k: int, var: int):
    src, dst, fac = [], [], []
    for p, t in enumerate(multi_indices(n, k)):
        m = t.count(var)
        if m:
            rest = list(t)
            rest.remove(var)
            src.append(p)
            dst.append(canonical_rank(rest, n))
            fac.append(float(m))
    return np.array(src, np.intp), np.array(dst, np.intp), np.array(fac)


class Series:
    """Polynomial in ``n`` variables truncated above ``max_degree``."""

    __slots__ = ("n", "max_degree", "parts")

    def __init__(self, n: int, max_degree: int, parts: dict[int, np.ndarray] | None = None):
        self.n = n
        self.max_degree = max_degree
        self.parts: dict[int, np.ndarray] = {}
        for k, v in (parts or {}).items():
            if k <= max_degree:
                self.parts[k] = np.asarray(v, dtype=float)

    @classmethod
    def variable(cls, n: int, i: int, max_degree: int) -> "Series":
        v = np.zeros(n)
        v[i] = 1.0
        return cls(n, max_degree, {1: v})

    @classmethod
    def from_tensor(cls, t: SymTensor, max_degree: int) -> "Series":
        return cls(t.dim, max_degree, {t.degree: t.monomial_coeffs()})

    def part(self, k: int) -> np.ndarray:
        if k in self.parts:
            return self.parts[k]
        return np.zeros(num_coeffs(self.n, k))

    def to_tensor(self, k: int) -> SymTensor:
        return SymTensor.from_monomials(self.n, k, self.part(k))

    def copy(self) -> "Series":
        return Series(self.n, self.max_degree, {k: v.copy() for k, v in self.parts.items()})

    def __add__(self, other: "Series") -> "Series":
        out = self.copy()
        for k, v in other.parts.items():
            if k <= out.max_degree:
                out.parts[k] = out.part(k) + v
        return out

    def __sub__(self, other: "Series") -> "Series":
        return self + other * -1.0

    def __mul__(self, other) -> "Series":
        if not isinstance(other, Series):
            c = float(other)
            return Series(self.n, self.max_degree, {k: v * c for k, v in self.parts.items()})
        top = min(self.max_degree, other.max_degree)
        out: dict[int, np.ndarray] = {}
        for a, va in self.parts.items():
            for b, vb in other.parts.items():
                if a + b > top or not va.any() or not vb.any():
                    continue
                ia, ib, ic = _product_plan(self.n, a, b)
                acc = out.setdefault(a + b, np.zeros(num_coeffs(self.n, a + b)))
                np.add.at(acc, ic, va[ia] * vb[ib])
        return Series(self.n, top, out)

    __rmul__ = __mul__

    def diff(self, var: int) -> "Series":
        """Partial derivative (the cap is kept; stored parts are exact)."""
        out: dict[int, np.ndarray] = {}
        for k, v in self.parts.items():
            if k == 0:
                continue
            src, dst, fac = _derivative_plan(self.n, k, var)
            acc = np.zeros(num_coeffs(self.n, k - 1))
            acc[dst] = v[src] * fac
            out[k - 1] = acc
        return Series(self.n, self.max_degree, out)

    def truncated(self, max_degree: int) -> "Series":
        return Series(self.n, min(max_degree, self.max_degree), self.parts)


def compose(t: SymTensor, args: list[Series], max_degree: int) -> Series:
    """Substitute series ``args[i]`` for variable ``i`` of the form ``t``.

    Only nonzero coefficients are expanded, which keeps sparse dynamics cheap.
    """
    if len(args) != t.dim:
        raise ValueError(f"{len(args)} arguments for a form in {t.dim} variables")
    n = args[0].n
    out = Series(n, max_degree)
    mono = t.monomial_coeffs()
    cache: dict[tuple[int, ...], Series] = {}
    for rank, idx in enumerate(multi_indices(t.dim, t.degree)):
        c = mono[rank]
        if c == 0.0:
            continue
        prod = _product(idx, args, max_degree, cache)
        out = out + prod * c
    return out


def _product(idx, args, max_degree, cache):
    if idx in cache:
        return cache[idx]
    if len(idx) == 1:
        res = args[idx[0]].truncated(max_degree)
    else:
        res = _product(idx[:-1], args, max_degree, cache) * args[idx[-1]].truncated(max_degree)
    cache[idx] = res
    return res
