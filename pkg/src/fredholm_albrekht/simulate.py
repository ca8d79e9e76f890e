"""Closed-loop simulation under full or monomial-masked polynomial feedback."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._series import Series
from .albrekht import PolyExpansion, PolySystem, _dynamics_series, _lagrangian_series, _state_vars
from .polytensor import GradedPoly, SymTensor, contract, multi_indices

__all__ = [
    "FeedbackPolicy",
    "SimConfig",
    "Trajectory",
    "CompareReport",
    "SimulationDiverged",
    "decay_mask",
    "integrate",
    "compare",
    "cost_consistency",
]


class SimulationDiverged(RuntimeError):
    pass


def decay_mask(mu, d: int, threshold: float, min_degree: int = 2) -> dict[int, frozenset]:
    """Monomials kept by the partial feedback, per degree ``min_degree..d``.

    A degree-k monomial z_i1...z_ik decays like exp((mu_i1+...+mu_ik) t) under
    the linear closed loop; it is kept iff that rate is >= ``threshold``.
    Degrees below ``min_degree`` are not masked.
    """
    re = np.real(np.asarray(mu))
    if re.max(initial=-np.inf) >= 0:
        raise ValueError("decay masks need a Hurwitz closed loop")
    n = len(re)
    return {
        k: frozenset(t for t in multi_indices(n, k) if re[list(t)].sum() >= threshold)
        for k in range(min_degree, d + 1)
    }


def _forms_matrix(forms: Sequence[SymTensor]) -> np.ndarray:
    return np.array([f.monomial_coeffs() for f in forms]).reshape(len(forms), -1)


class _PolyMap:
    """Vector of polynomials compiled to one monomial-coefficient matrix."""

    def __init__(self, n_in: int, blocks: Mapping[int, np.ndarray]):
        self.n_in = n_in
        self.blocks = {k: np.asarray(M, float) for k, M in sorted(blocks.items()) if np.any(M)}
        self.top = max(self.blocks, default=0)
        if not self.blocks:
            return
        exps = []
        for k in self.blocks:
            for t in multi_indices(n_in, k):
                exps.append(np.bincount(np.array(t, dtype=np.intp), minlength=n_in))
        self._exps = np.array(exps, dtype=np.intp)
        self._rows = np.arange(n_in)[None, :]
        self._matrix = np.hstack(list(self.blocks.values()))
        self._powers = np.arange(self.top + 1)

    def __call__(self, x: np.ndarray) -> np.ndarray | None:
        if not self.blocks:
            return None
        table = x[:, None] ** self._powers
        mono = table[self._rows, self._exps].prod(axis=1)
        return self._matrix @ mono


@dataclass(frozen=True, eq=False)
class FeedbackPolicy:
    """u = kappa(z), optionally dropping masked monomials of some degrees."""

    feedback: tuple[GradedPoly, ...]
    mask: Mapping[int, frozenset] | None = None
    _compiled: _PolyMap = field(init=False, repr=False)

    def __post_init__(self):
        fb = tuple(self.feedback)
        object.__setattr__(self, "feedback", fb)
        n = fb[0].dim
        degrees = sorted({k for p in fb for k in p.terms})
        blocks = {}
        for k in degrees:
            M = _forms_matrix([p[k] for p in fb])
            if self.mask is not None and k in self.mask:
                keep = self.mask[k]
                cols = [t in keep for t in multi_indices(n, k)]
                M = M * np.array(cols, dtype=float)
            blocks[k] = M
        object.__setattr__(self, "_compiled", _PolyMap(n, blocks))

    @classmethod
    def from_expansion(cls, exp: PolyExpansion, degree: int | None = None, mask=None) -> "FeedbackPolicy":
        d = exp.degree if degree is None else degree
        return cls(tuple(p.truncate(d) for p in exp.feedback), mask)

    @classmethod
    def from_kernels(cls, K1: np.ndarray, K2: SymTensor | None = None, K3: SymTensor | None = None, mask=None) -> "FeedbackPolicy":
        """Feedback nu_i = sum K1_ij z_j + sum K2_ijk z_j z_k + ... from kernel modes."""
        N = K1.shape[0]
        polys = []
        for i in range(N):
            e = np.zeros(N)
            e[i] = 1.0
            terms = {1: SymTensor(N, 1, K1[i])}
            for k, K in ((2, K2), (3, K3)):
                if K is not None:
                    terms[k] = contract(K, [e])
            polys.append(GradedPoly(N, terms))
        return cls(tuple(polys), mask)

    @property
    def dim(self) -> int:
        return self.feedback[0].dim

    def __call__(self, z) -> np.ndarray:
        out = self._compiled(np.asarray(z, float))
        return np.zeros(len(self.feedback)) if out is None else out


@dataclass(frozen=True)
class SimConfig:
    z0: tuple[float, ...]
    t_end: float = 5.0
    dt: float = 1e-4
    escape_radius: float = 1e3
    converge_tol: float = 1e-2

    def __post_init__(self):
        object.__setattr__(self, "z0", tuple(float(v) for v in self.z0))
        for name in ("t_end", "dt", "escape_radius", "converge_tol"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        if self.escape_radius <= 0 or self.converge_tol <= 0:
            raise ValueError("escape_radius and converge_tol must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    cost: np.ndarray
    status: str
    escape_time: float | None = None

    @property
    def label(self) -> str:
        if self.status == "Escaped":
            return f"Escaped({self.escape_time:.9e})"
        return self.status

    @property
    def final_norm(self) -> float:
        return float(np.linalg.norm(self.states[-1]))

    def subsample(self, stride: int) -> "Trajectory":
        sl = slice(None, None, stride)
        return Trajectory(self.times[sl], self.states[sl], self.controls[sl], self.cost[sl], self.status, self.escape_time)

    def to_csv(self, stride: int = 1) -> str:
        n, m = self.states.shape[1], self.controls.shape[1]
        cols = ["t"] + [f"zeta{i}" for i in range(n)] + [f"nu{i}" for i in range(m)] + ["cost"]
        data = np.column_stack([self.times, self.states, self.controls, self.cost])
        idx = np.arange(0, len(self.times), stride)
        if idx[-1] != len(self.times) - 1:
            idx = np.append(idx, len(self.times) - 1)
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row in data[idx]:
            buf.write(",".join(f"{v:.9e}" for v in row) + "\n")
        buf.write(f"# status={self.label}\n")
        return buf.getvalue()


def _system_of(gal) -> PolySystem:
    return gal.sys if hasattr(gal, "sys") else gal


def _closed_loop(sys: PolySystem, policy: FeedbackPolicy) -> _PolyMap:
    """Exact polynomial map z -> (f(z, u), l(z, u), u) with u = policy(z)."""
    n = sys.n
    blocks = policy._compiled.blocks
    dk = max(blocks, default=1)
    top = dk * max([2, *sys.dynamics_terms, *sys.lagrangian_terms])
    z = _state_vars(n, top)
    u = [Series(n, top, {k: M[j] for k, M in blocks.items()}) for j in range(sys.m)]
    rows = _dynamics_series(sys, z, u, top) + [_lagrangian_series(sys, z, u, top)] + u
    return _PolyMap(n, {k: np.array([r.part(k) for r in rows]) for k in range(1, top + 1)})


def integrate(gal, policy: FeedbackPolicy, cfg: SimConfig) -> Trajectory:
    """Classical RK4 on the closed loop with the running cost as an extra state."""
    sys = _system_of(gal)
    if policy.dim != sys.n or len(policy.feedback) != sys.m:
        raise ValueError("policy dimensions do not match the system")
    if len(cfg.z0) != sys.n:
        raise ValueError(f"z0 has {len(cfg.z0)} entries, system has {sys.n} states")
    loop = _closed_loop(sys, policy)
    n, m = sys.n, sys.m
    width = n + 1 + m

    def rhs(z):
        out = loop(z)
        if out is None:
            out = np.zeros(width)
        return out[:n], out[n], out[n + 1:]

    steps = int(round(cfg.t_end / cfg.dt))
    h = cfg.dt
    Z = np.empty((steps + 1, n))
    U = np.empty((steps + 1, m))
    C = np.empty(steps + 1)
    z = np.array(cfg.z0)
    c = 0.0
    status, t_esc, last = "HorizonReached", None, steps
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(steps + 1):
            k1, c1, u = rhs(z)
            Z[s], U[s], C[s] = z, u, c
            norm = np.linalg.norm(z)
            if not np.isfinite(norm) or not np.all(np.isfinite(u)) or norm > cfg.escape_radius:
                status, t_esc, last = "Escaped", s * h, s
                break
            if s == steps:
                break
            k2, c2, _ = rhs(z + 0.5 * h * k1)
            k3, c3, _ = rhs(z + 0.5 * h * k2)
            k4, c4, _ = rhs(z + h * k3)
            z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            c = c + (h / 6.0) * (c1 + 2 * c2 + 2 * c3 + c4)
    sl = slice(0, last + 1)
    if status != "Escaped" and np.linalg.norm(Z[last]) < cfg.converge_tol:
        status = "Converged"
    times = np.arange(last + 1) * h
    return Trajectory(times, Z[sl].copy(), U[sl].copy(), C[sl].copy(), status, t_esc)


@dataclass(frozen=True)
class CompareReport:
    per_mode_abs: tuple[float, ...]
    per_mode_rel: tuple[float, ...]
    aggregate: float

    def to_text(self) -> str:
        lines = ["mode,sup_abs_diff,sup_rel_diff"]
        for i, (a, r) in enumerate(zip(self.per_mode_abs, self.per_mode_rel)):
            lines.append(f"{i},{a:.9e},{r:.9e}")
        lines.append(f"aggregate,,{self.aggregate:.9e}")
        return "\n".join(lines) + "\n"


def compare(a: Trajectory, b: Trajectory) -> CompareReport:
    """Per-mode sup-norm differences, relative to the sup norm of ``a``."""
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories are on different time grids")
    diff = np.abs(a.states - b.states).max(axis=0)
    ref = np.abs(a.states).max(axis=0)
    rel = np.where(ref > 0, diff / np.where(ref > 0, ref, 1.0), diff)
    top = ref.max()
    agg = diff.max() / top if top > 0 else diff.max()
    return CompareReport(tuple(map(float, diff)), tuple(map(float, rel)), float(agg))


def cost_consistency(gal, expansion: PolyExpansion, z0, scales, t_end: float = 30.0, dt: float = 1e-3):
    """Rows (scale, simulated cost, polynomial cost, |gap|) under full feedback."""
    policy = FeedbackPolicy.from_expansion(expansion)
    z0 = np.asarray(z0, dtype=float)
    rows = []
    for s in scales:
        start = s * z0
        traj = integrate(gal, policy, SimConfig(tuple(start), t_end=t_end, dt=dt))
        if traj.status == "Escaped":
            raise SimulationDiverged(f"closed loop escaped from scale {s}")
        J = float(traj.cost[-1])
        pi = float(expansion.cost(start))
        rows.append((float(s), J, pi, abs(J - pi)))
    return rows
