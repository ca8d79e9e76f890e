"""Fully symmetric coefficient tensors and graded polynomials.

A degree-k form over n variables is stored densely, one coefficient per sorted
index tuple, in graded colex order.  Its value follows the symmetric-sum
convention: sum over *all* ordered index tuples of ``coef[sorted(t)] * prod(x[t])``.
A sorted tuple therefore enters the polynomial with multinomial multiplicity.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "MultiIndex",
    "SymTensor",
    "GradedPoly",
    "canonical_rank",
    "num_coeffs",
    "multi_indices",
    "multiplicity",
    "symmetrize",
    "eval_tensor",
    "gradient",
    "contract",
    "format_coeff_text",
    "parse_coeff_text",
]


class MultiIndex(tuple):
    """Sorted (non-decreasing) tuple of variable indices."""

    def __new__(cls, indices: Iterable[int]):
        idx = tuple(sorted(int(i) for i in indices))
        if any(i < 0 for i in idx):
            raise ValueError(f"negative index in {idx}")
        return super().__new__(cls, idx)

    @property
    def degree(self) -> int:
        return len(self)


def num_coeffs(n: int, k: int) -> int:
    """Dimension of the degree-k symmetric space over n variables."""
    if k == 0:
        return 1
    return math.comb(n + k - 1, k)


def canonical_rank(mi: Sequence[int], n: int) -> int:
    """Colex position of a sorted multi-index within its degree.

    The rank does not depend on ``n``; ``n`` is only used for range checking.
    """
    idx = sorted(mi)
    for i in idx:
        if not 0 <= i < n:
            raise IndexError(f"index {i} out of range for dimension {n}")
    return sum(math.comb(i + t, t + 1) for t, i in enumerate(idx))


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All sorted degree-k tuples over n variables, in canonical rank order."""
    combos = itertools.combinations_with_replacement(range(n), k)
    return tuple(sorted(combos, key=lambda t: t[::-1]))


@lru_cache(maxsize=None)
def _index_array(n: int, k: int) -> np.ndarray:
    arr = np.array(multi_indices(n, k), dtype=np.intp)
    return arr.reshape(len(multi_indices(n, k)), k)


def multiplicity(mi: Sequence[int]) -> int:
    """Number of distinct orderings of a multi-index, k!/prod(m_i!)."""
    out = math.factorial(len(mi))
    for m in Counter(mi).values():
        out //= math.factorial(m)
    return out


@lru_cache(maxsize=None)
def _multiplicities(n: int, k: int) -> np.ndarray:
    return np.array([multiplicity(t) for t in multi_indices(n, k)], dtype=float)


@dataclass(frozen=True, eq=False)
class SymTensor:
    """Degree-k fully symmetric tensor over n variables (dense canonical storage)."""

    dim: int
    degree: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size != num_coeffs(self.dim, self.degree):
            raise ValueError(
                f"expected {num_coeffs(self.dim, self.degree)} coefficients for "
                f"dim={self.dim} degree={self.degree}, got {c.size}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, n: int, k: int) -> "SymTensor":
        return cls(n, k, np.zeros(num_coeffs(n, k)))

    @classmethod
    def from_dict(cls, n: int, k: int, values: Mapping[Sequence[int], float]) -> "SymTensor":
        """Set coefficients directly; keys in any order are sorted first."""
        c = np.zeros(num_coeffs(n, k))
        for key, v in values.items():
            if len(key) != k:
                raise ValueError(f"tuple {tuple(key)} has length {len(key)}, expected {k}")
            c[canonical_rank(key, n)] = v
        return cls(n, k, c)

    @classmethod
    def from_monomials(cls, n: int, k: int, mono: np.ndarray) -> "SymTensor":
        """Build from monomial coefficients (canonical order)."""
        return cls(n, k, np.asarray(mono, dtype=float) / _multiplicities(n, k))

    @classmethod
    def from_full(cls, arr: np.ndarray) -> "SymTensor":
        """Symmetrize a dense n^k array."""
        arr = np.asarray(arr, dtype=float)
        k = arr.ndim
        n = arr.shape[0] if k else 0
        if k == 0:
            return cls(n, 0, arr.reshape(1))
        sym = sum(np.transpose(arr, p) for p in itertools.permutations(range(k)))
        sym = sym / math.factorial(k)
        idx = _index_array(n, k)
        return cls(n, k, sym[tuple(idx.T)])

    def __getitem__(self, key: Sequence[int]) -> float:
        if len(key) != self.degree:
            raise IndexError(f"expected {self.degree} indices, got {len(key)}")
        return float(self.coeffs[canonical_rank(key, self.dim)])

    def items(self):
        return zip(multi_indices(self.dim, self.degree), self.coeffs)

    def nonzero_items(self):
        for t, v in self.items():
            if v != 0.0:
                yield t, float(v)

    def monomial_coeffs(self) -> np.ndarray:
        """Coefficients of the monomials, k!/prod(m!) times the stored value."""
        return self.coeffs * _multiplicities(self.dim, self.degree)

    def to_full(self) -> np.ndarray:
        """Dense n^k array with every ordering filled in."""
        n, k = self.dim, self.degree
        if k == 0:
            return np.array(self.coeffs[0])
        out = np.empty((n,) * k)
        for t in itertools.product(range(n), repeat=k):
            out[t] = self.coeffs[canonical_rank(t, n)]
        return out

    def __call__(self, state) -> float:
        return eval_tensor(self, state)

    def __add__(self, other: "SymTensor") -> "SymTensor":
        _check_same(self, other)
        return SymTensor(self.dim, self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        _check_same(self, other)
        return SymTensor(self.dim, self.degree, self.coeffs - other.coeffs)

    def __neg__(self) -> "SymTensor":
        return SymTensor(self.dim, self.degree, -self.coeffs)

    def __mul__(self, scalar: float) -> "SymTensor":
        return SymTensor(self.dim, self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def allclose(self, other: "SymTensor", atol: float = 1e-12) -> bool:
        _check_same(self, other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))


def _check_same(a: SymTensor, b: SymTensor) -> None:
    if (a.dim, a.degree) != (b.dim, b.degree):
        raise ValueError(
            f"shape mismatch: dim/degree {a.dim}/{a.degree} vs {b.dim}/{b.degree}"
        )


def symmetrize(
    raw: Mapping[Sequence[int], float], n: int | None = None, strict: bool = False
) -> SymTensor:
    """Average ordered-tuple values onto their sorted representative.

    Orderings missing from ``raw`` are skipped, not counted as zero.  With
    ``strict=True`` every ordering of every supplied tuple must be present.
    """
    if not raw:
        raise ValueError("symmetrize needs at least one entry")
    lengths = {len(t) for t in raw}
    if len(lengths) != 1:
        raise ValueError(f"inconsistent tuple lengths {sorted(lengths)}")
    k = lengths.pop()
    if n is None:
        n = 1 + max(max(t) for t in raw if len(t)) if k else 0
    sums: dict[tuple[int, ...], float] = {}
    counts: dict[tuple[int, ...], int] = {}
    for t, v in raw.items():
        key = tuple(sorted(t))
        sums[key] = sums.get(key, 0.0) + float(v)
        counts[key] = counts.get(key, 0) + 1
    if strict:
        for key, c in counts.items():
            if c != multiplicity(key):
                raise ValueError(
                    f"tuple {key}: {c} of {multiplicity(key)} orderings supplied"
                )
    return SymTensor.from_dict(n, k, {t: sums[t] / counts[t] for t in sums})


@lru_cache(maxsize=None)
def _monomial_plan(n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Parent rank and last variable so that mono_k = mono_{k-1}[parent] * x[last]."""
    tuples = multi_indices(n, k)
    parent = np.array([canonical_rank(t[:-1], n) for t in tuples], dtype=np.intp)
    last = np.array([t[-1] for t in tuples], dtype=np.intp)
    return parent, last


def monomial_values(state: np.ndarray, k: int) -> list[np.ndarray]:
    """Values of all sorted monomials of degree 0..k at ``state``."""
    x = np.asarray(state, dtype=float)
    n = x.shape[-1]
    out = [np.ones(x.shape[:-1] + (1,))]
    for d in range(1, k + 1):
        parent, last = _monomial_plan(n, d)
        out.append(out[-1][..., parent] * x[..., last])
    return out


def eval_tensor(t: SymTensor, state) -> float:
    x = np.asarray(state, dtype=float)
    if x.shape != (t.dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({t.dim},)")
    mono = monomial_values(x, t.degree)[t.degree]
    return float(mono @ t.monomial_coeffs())


def contract(t: SymTensor, slot_values: Sequence[np.ndarray]) -> SymTensor | float:
    """Fill the leading slots of ``t`` with the given vectors.

    Returns the remaining symmetric tensor, or a float when every slot is filled.
    """
    r = len(slot_values)
    if r > t.degree:
        raise ValueError(f"{r} slot values for a degree-{t.degree} tensor")
    full = t.to_full()
    for v in slot_values:
        v = np.asarray(v, dtype=float)
        if v.shape != (t.dim,):
            raise ValueError(f"slot value has shape {v.shape}, expected ({t.dim},)")
        full = np.tensordot(v, full, axes=(0, 0))
    if r == t.degree:
        return float(full)
    idx = _index_array(t.dim, t.degree - r)
    return SymTensor(t.dim, t.degree - r, full[tuple(idx.T)])


@dataclass(frozen=True, eq=False)
class GradedPoly:
    """Polynomial in n variables stored as one SymTensor per degree (degrees >= 1)."""

    dim: int
    terms: Mapping[int, SymTensor]

    def __post_init__(self):
        terms = dict(sorted(self.terms.items()))
        for k, t in terms.items():
            if k < 1:
                raise ValueError("graded polynomials start at degree 1")
            if t.dim != self.dim or t.degree != k:
                raise ValueError(f"term of degree {k} has dim/degree {t.dim}/{t.degree}")
        object.__setattr__(self, "terms", terms)

    @property
    def max_degree(self) -> int:
        return max(self.terms, default=0)

    def __getitem__(self, k: int) -> SymTensor:
        if k in self.terms:
            return self.terms[k]
        return SymTensor.zeros(self.dim, k)

    def __call__(self, state) -> float:
        return sum((eval_tensor(t, state) for t in self.terms.values()), 0.0)

    def truncate(self, degree: int) -> "GradedPoly":
        return GradedPoly(self.dim, {k: t for k, t in self.terms.items() if k <= degree})

    def gradient(self, state) -> np.ndarray:
        return gradient(self, state)


def gradient(p: GradedPoly, state) -> np.ndarray:
    """Exact gradient of a graded polynomial at ``state``."""
    x = np.asarray(state, dtype=float)
    if x.shape != (p.dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({p.dim},)")
    g = np.zeros(p.dim)
    for k, t in p.terms.items():
        full = t.to_full()
        for _ in range(k - 1):
            full = full @ x
        g += k * full
    return g


def format_coeff_text(t: SymTensor, **header) -> str:
    """Render a tensor in the line-oriented coefficient text format."""
    extra = "".join(f" {k}={v}" for k, v in header.items())
    lines = [f"# degree={t.degree} dim={t.dim} convention=symmetric-sum{extra}"]
    for idx, v in t.items():
        lines.append(",".join(str(i) for i in idx) + f",{v:.9e}")
    return "\n".join(lines) + "\n"


def parse_coeff_text(text: str) -> tuple[SymTensor, dict[str, str]]:
    """Inverse of :func:`format_coeff_text`; returns the tensor and header fields."""
    header: dict[str, str] = {}
    values: dict[tuple[int, ...], float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                header[key] = val
            continue
        *idx, v = line.split(",")
        values[tuple(int(i) for i in idx)] = float(v)
    k, n = int(header["degree"]), int(header["dim"])
    return SymTensor.from_dict(n, k, values), header
