"""Al'brekht's degree-by-degree optimal stabilization for polynomial systems.

The system is

    z' = F z + G u + f2(z, u) + f3(z, u) + ...
    l  = 1/2 (z'Qz + 2 z'Su + u'Ru) + l3(z, u) + ...

The LQR solution fixes the quadratic cost 1/2 z'Pz and linear feedback Kz.
Each higher cost degree then solves one linear equation whose operator is
``p -> grad(p) . (F + GK) z``, after which the matching feedback degree is
read off from the control-gradient HJB condition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from ._series import Series, compose
from .polytensor import (
    GradedPoly,
    SymTensor,
    canonical_rank,
    contract,
    gradient,
    multi_indices,
    num_coeffs,
)

log = logging.getLogger(__name__)

__all__ = [
    "AlbrekhtError",
    "NonStabilizable",
    "IndefiniteR",
    "DefectiveMatrix",
    "ResonantOperator",
    "PolySystem",
    "LqrData",
    "PolyExpansion",
    "are_residual",
    "solve_are",
    "closed_loop_spectrum",
    "cost_operator",
    "solve_cost_degree",
    "solve_feedback_degree",
    "expand",
    "hjb_residual",
    "residual_series",
]


class AlbrekhtError(Exception):
    pass


class NonStabilizable(AlbrekhtError):
    pass


class IndefiniteR(AlbrekhtError):
    pass


class DefectiveMatrix(AlbrekhtError):
    pass


class ResonantOperator(AlbrekhtError):
    pass


def _as_matrix(a, shape, name) -> np.ndarray:
    out = np.array(a, dtype=float).reshape(shape)
    out.setflags(write=False)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} has non-finite entries")
    return out


@dataclass(frozen=True, eq=False)
class PolySystem:
    """Polynomial control system with a polynomial Lagrangian.

    ``dynamics_terms[k]`` holds one degree-k SymTensor per state coordinate and
    ``lagrangian_terms[k]`` a single degree-k SymTensor; all of them are forms
    in the concatenated variables (z, u).
    """

    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray | None = None
    dynamics_terms: Mapping[int, Sequence[SymTensor]] = field(default_factory=dict)
    lagrangian_terms: Mapping[int, SymTensor] = field(default_factory=dict)

    def __post_init__(self):
        F = np.atleast_2d(np.array(self.F, dtype=float))
        n = F.shape[0]
        G = np.array(self.G, dtype=float).reshape(n, -1)
        m = G.shape[1]
        S = np.zeros((n, m)) if self.S is None else self.S
        for name, val, shape in (
            ("F", F, (n, n)),
            ("G", G, (n, m)),
            ("Q", self.Q, (n, n)),
            ("R", self.R, (m, m)),
            ("S", S, (n, m)),
        ):
            object.__setattr__(self, name, _as_matrix(val, shape, name))
        if not np.allclose(self.R, self.R.T):
            raise IndefiniteR("R is not symmetric")
        try:
            np.linalg.cholesky(self.R)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteR("R is not positive definite") from exc
        if not np.allclose(self.Q, self.Q.T):
            raise ValueError("Q is not symmetric")
        schur = self.Q - self.S @ np.linalg.solve(self.R, self.S.T)
        if np.linalg.eigvalsh((schur + schur.T) / 2).min() < -1e-10:
            raise ValueError("Q - S R^-1 S' is not positive semidefinite")

        dyn = {}
        for k, tensors in sorted(self.dynamics_terms.items()):
            tensors = tuple(tensors)
            if k < 2:
                raise ValueError("dynamics_terms start at degree 2")
            if len(tensors) != n:
                raise ValueError(f"degree {k}: need {n} tensors, got {len(tensors)}")
            for t in tensors:
                if t.dim != n + m or t.degree != k:
                    raise ValueError(f"degree {k} dynamics tensor has dim/degree {t.dim}/{t.degree}")
            dyn[k] = tensors
        lag = {}
        for k, t in sorted(self.lagrangian_terms.items()):
            if k < 3:
                raise ValueError("lagrangian_terms start at degree 3")
            if t.dim != n + m or t.degree != k:
                raise ValueError(f"degree {k} Lagrangian tensor has dim/degree {t.dim}/{t.degree}")
            lag[k] = t
        object.__setattr__(self, "dynamics_terms", dyn)
        object.__setattr__(self, "lagrangian_terms", lag)

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.G.shape[1]

    def dynamics(self, z, u) -> np.ndarray:
        """Right-hand side f(z, u) of the truncated dynamics."""
        z, u = np.asarray(z, float), np.asarray(u, float)
        w = np.concatenate([z, u])
        out = self.F @ z + self.G @ u
        for tensors in self.dynamics_terms.values():
            out = out + np.array([t(w) for t in tensors])
        return out

    def lagrangian(self, z, u) -> float:
        z, u = np.asarray(z, float), np.asarray(u, float)
        w = np.concatenate([z, u])
        val = 0.5 * (z @ self.Q @ z + 2 * z @ self.S @ u + u @ self.R @ u)
        return float(val + sum(t(w) for t in self.lagrangian_terms.values()))


@dataclass(frozen=True, eq=False)
class LqrData:
    P: np.ndarray
    K: np.ndarray
    mu: np.ndarray
    Psi: np.ndarray
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class PolyExpansion:
    """Taylor data of the optimal cost (degrees 2..d+1) and feedback (1..d)."""

    cost: GradedPoly
    feedback: tuple[GradedPoly, ...]
    degree: int

    def control(self, z) -> np.ndarray:
        return np.array([kp(z) for kp in self.feedback])


def are_residual(sys: PolySystem, P: np.ndarray) -> np.ndarray:
    PGS = P @ sys.G + sys.S
    return sys.F.T @ P + P @ sys.F + sys.Q - PGS @ np.linalg.solve(sys.R, PGS.T)


def _is_hurwitz(A: np.ndarray) -> bool:
    return bool(np.linalg.eigvals(A).real.max() < 0)


def _initial_gain(F: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Stabilizing gain by eigenvalue shift (Bass' method), zero if F is Hurwitz."""
    n, m = G.shape
    if _is_hurwitz(F):
        return np.zeros((m, n))
    eig = np.linalg.eigvals(F)
    beta = np.abs(eig.real).max() + 1.0
    A = F + beta * np.eye(n)
    # (F + beta I) Z + Z (F + beta I)' = 2 G G'
    Z = sla.solve_continuous_lyapunov(A, 2.0 * G @ G.T)
    Z = (Z + Z.T) / 2
    K = -G.T @ np.linalg.pinv(Z, rcond=1e-13)
    if not _is_hurwitz(F + G @ K):
        raise NonStabilizable("eigenvalue shift did not produce a stabilizing gain")
    return K


def solve_are(sys: PolySystem, tol: float = 1e-12, max_iter: int = 100) -> LqrData:
    """Newton-Kleinman iteration for the continuous-time ARE with cross term."""
    F, G, Q, R, S = sys.F, sys.G, sys.Q, sys.R, sys.S
    K = _initial_gain(F, G)
    P = np.zeros_like(F)
    best = np.inf
    for it in range(1, max_iter + 1):
        A = F + G @ K
        if not _is_hurwitz(A):
            raise NonStabilizable(f"closed loop lost stability at Newton step {it}")
        Qk = Q + S @ K + K.T @ S.T + K.T @ R @ K
        P = sla.solve_continuous_lyapunov(A.T, -Qk)
        P = (P + P.T) / 2
        K = -np.linalg.solve(R, (P @ G + S).T)
        res = np.linalg.norm(are_residual(sys, P))
        scale = 1.0 + np.linalg.norm(P)
        if res <= tol * scale:
            break
        # roundoff floor: stop once quadratic convergence stalls
        if res <= 1e-10 * scale and res >= 0.5 * best:
            break
        best = min(best, res)
    else:
        raise NonStabilizable(f"Newton-Kleinman did not converge in {max_iter} steps (residual {res:.3e})")
    if res > 1e-10 * scale:
        raise NonStabilizable(f"ARE residual {res:.3e} above tolerance")
    mu, Psi = _spectrum(F + G @ K)
    if mu.real.max() >= 0:
        raise NonStabilizable("closed loop is not Hurwitz")
    log.debug("ARE solved in %d Newton steps, residual %.3e", it, res)
    return LqrData(P=P, K=K, mu=mu, Psi=Psi, iterations=it, residual=float(res))


def _spectrum(A: np.ndarray, defect_tol: float = 1e-10):
    mu, W = np.linalg.eig(A.T)
    order = np.lexsort((mu.imag, -mu.real))
    mu, W = mu[order], W[:, order]
    Psi = (W / np.linalg.norm(W, axis=0)).T
    if np.isrealobj(A):
        # pin conjugate pairs so downstream real arithmetic stays exact
        i = 0
        while i < len(mu) - 1:
            if abs(mu[i].imag) > 0 and np.isclose(mu[i], np.conj(mu[i + 1])):
                mu[i + 1] = np.conj(mu[i])
                Psi[i + 1] = np.conj(Psi[i])
                i += 2
            else:
                i += 1
        if np.all(mu.imag == 0):
            mu, Psi = mu.real, Psi.real
    smin = np.linalg.svd(Psi, compute_uv=False).min()
    if smin < defect_tol:
        raise DefectiveMatrix(f"left eigenvectors are dependent (sigma_min={smin:.2e})")
    return mu, Psi


def closed_loop_spectrum(sys: PolySystem, lqr: LqrData):
    """Eigenvalues of F+GK (descending real part) and unit left row eigenvectors."""
    return _spectrum(sys.F + sys.G @ lqr.K)


def cost_operator(A: np.ndarray, degree: int) -> np.ndarray:
    """Matrix of p -> grad(p) . A z on degree-``degree`` monomials."""
    n = A.shape[0]
    size = num_coeffs(n, degree)
    L = np.zeros((size, size))
    for col, t in enumerate(multi_indices(n, degree)):
        for i in set(t):
            mult = t.count(i)
            rest = list(t)
            rest.remove(i)
            for j in np.flatnonzero(A[i]):
                L[canonical_rank(rest + [j], n), col] += mult * A[i, j]
    return L


# -- series assembly ---------------------------------------------------------


def _state_vars(n: int, top: int) -> list[Series]:
    return [Series.variable(n, i, top) for i in range(n)]


def _poly_series(p: GradedPoly, top: int, upto: int | None = None) -> Series:
    out = Series(p.dim, top)
    for k, t in p.terms.items():
        if upto is None or k <= upto:
            out = out + Series.from_tensor(t, top)
    return out


def _linear(row: np.ndarray, args: list[Series], top: int) -> Series:
    out = Series(args[0].n, top)
    for j in np.flatnonzero(row):
        out = out + args[j] * float(row[j])
    return out


def _quadratic(M: np.ndarray, a: list[Series], b: list[Series], top: int) -> Series:
    out = Series(a[0].n, top)
    for i, j in zip(*np.nonzero(M)):
        out = out + (a[i] * b[j]) * float(M[i, j])
    return out


def _control_series(exp_feedback, n: int, top: int, upto: int) -> list[Series]:
    return [_poly_series(kp, top, upto) for kp in exp_feedback]


def _dynamics_series(sys: PolySystem, z: list[Series], u: list[Series], top: int) -> list[Series]:
    w = z + u
    out = []
    for i in range(sys.n):
        s = _linear(sys.F[i], z, top) + _linear(sys.G[i], u, top)
        for tensors in sys.dynamics_terms.values():
            s = s + compose(tensors[i], w, top)
        out.append(s)
    return out


def _lagrangian_series(sys: PolySystem, z, u, top: int) -> Series:
    w = z + u
    s = (_quadratic(sys.Q, z, z, top) + _quadratic(sys.R, u, u, top)) * 0.5
    s = s + _quadratic(sys.S, z, u, top)
    for t in sys.lagrangian_terms.values():
        s = s + compose(t, w, top)
    return s


def _partial(t: SymTensor, var: int) -> SymTensor | float:
    """Derivative of a symmetric form with respect to one variable."""
    e = np.zeros(t.dim)
    e[var] = 1.0
    c = contract(t, [e])
    return c * t.degree


def _control_gradient_series(sys: PolySystem, grad_pi: list[Series], z, u, top: int) -> list[Series]:
    """grad(pi) . df/du_j + dl/du_j for each control j, along u = u(z)."""
    n, m = sys.n, sys.m
    w = z + u
    out = []
    for j in range(m):
        s = _linear(sys.S[:, j], z, top) + _linear(sys.R[j], u, top)
        for i in range(n):
            dfi = Series(n, top, {0: np.array([sys.G[i, j]])})
            for tensors in sys.dynamics_terms.values():
                d = _partial(tensors[i], n + j)
                dfi = dfi + compose(d, w, top)
            s = s + grad_pi[i] * dfi
        for t in sys.lagrangian_terms.values():
            d = _partial(t, n + j)
            s = s + compose(d, w, top)
        out.append(s)
    return out


def _check_partial(sys: PolySystem, partial: PolyExpansion, k: int, cost_top: int, fb_top: int):
    if partial.cost.dim != sys.n or len(partial.feedback) != sys.m:
        raise ValueError("expansion does not match system dimensions")
    missing = [d for d in range(2, cost_top + 1) if d not in partial.cost.terms]
    if missing:
        raise ValueError(f"degree-{k} solve needs cost degrees {missing}")
    for kp in partial.feedback:
        if any(d not in kp.terms for d in range(1, fb_top + 1)):
            raise ValueError(f"degree-{k} solve needs feedback degrees 1..{fb_top}")


def solve_cost_degree(
    sys: PolySystem, lqr: LqrData, partial: PolyExpansion, k: int, resonance_tol: float = 1e-12
) -> SymTensor:
    """Degree-(k+1) cost coefficients from the completing-the-square equation."""
    if k < 2:
        raise ValueError("cost degrees above 2 start at k=2")
    _check_partial(sys, partial, k, k, k - 1)
    n, top = sys.n, k + 1
    z = _state_vars(n, top)
    u = _control_series(partial.feedback, n, top, k - 1)
    f = _dynamics_series(sys, z, u, top)
    pi = _poly_series(partial.cost, top, upto=k)
    known = _lagrangian_series(sys, z, u, top)
    for i in range(n):
        known = known + pi.diff(i) * f[i]
    rhs = -known.part(top)
    L = cost_operator(sys.F + sys.G @ lqr.K, top)
    sv = np.linalg.svd(L, compute_uv=False)
    if sv.size and sv.min() <= resonance_tol * max(sv.max(), 1.0):
        raise ResonantOperator(f"degree-{top} cost operator is singular (sigma_min={sv.min():.2e})")
    mono = np.linalg.solve(L, rhs)
    return SymTensor.from_monomials(n, top, mono)


def solve_feedback_degree(sys: PolySystem, lqr: LqrData, partial: PolyExpansion, k: int) -> list[SymTensor]:
    """Degree-k feedback per control from the control-gradient HJB equation."""
    if k < 2:
        raise ValueError("feedback degrees above 1 start at k=2")
    _check_partial(sys, partial, k, k + 1, k - 1)
    n, top = sys.n, k
    z = _state_vars(n, top + 1)
    u = _control_series(partial.feedback, n, top + 1, k - 1)
    pi = _poly_series(partial.cost, top + 1, upto=k + 1)
    grad_pi = [pi.diff(i) for i in range(n)]
    g = _control_gradient_series(sys, grad_pi, z, u, top)
    G = np.array([gj.part(top) for gj in g])
    coeffs = -np.linalg.solve(sys.R, G)
    return [SymTensor.from_monomials(n, top, c) for c in coeffs]


def expand(sys: PolySystem, d: int, lqr: LqrData | None = None) -> PolyExpansion:
    """Cost through degree d+1 and feedback through degree d."""
    if d < 1:
        raise ValueError("expansion degree must be >= 1")
    lqr = lqr or solve_are(sys)
    n, m = sys.n, sys.m
    cost = {2: SymTensor.from_full(0.5 * lqr.P)}
    fb = [{1: SymTensor(n, 1, lqr.K[j])} for j in range(m)]
    for k in range(2, d + 1):
        partial = PolyExpansion(GradedPoly(n, cost), tuple(GradedPoly(n, f) for f in fb), k - 1)
        cost[k + 1] = solve_cost_degree(sys, lqr, partial, k)
        partial = PolyExpansion(GradedPoly(n, cost), tuple(GradedPoly(n, f) for f in fb), k - 1)
        for j, t in enumerate(solve_feedback_degree(sys, lqr, partial, k)):
            fb[j][k] = t
    return PolyExpansion(GradedPoly(n, cost), tuple(GradedPoly(n, f) for f in fb), d)


def _form_gradient(t: SymTensor, w: np.ndarray) -> np.ndarray:
    return gradient(GradedPoly(t.dim, {t.degree: t}), w)


def hjb_residual(sys: PolySystem, exp: PolyExpansion, state) -> tuple[float, np.ndarray]:
    """Both smooth HJB left-hand sides at ``state`` for the truncated data.

    Returns the scalar equation grad(pi).f + l and the control-gradient
    equation grad(pi).df/du + dl/du, both evaluated along u = kappa(z).
    """
    z = np.asarray(state, dtype=float)
    if z.shape != (sys.n,):
        raise ValueError(f"state has shape {z.shape}, expected ({sys.n},)")
    n = sys.n
    u = exp.control(z)
    w = np.concatenate([z, u])
    dpi = exp.cost.gradient(z)
    scalar = float(dpi @ sys.dynamics(z, u) + sys.lagrangian(z, u))
    dfdu = sys.G.copy()
    for tensors in sys.dynamics_terms.values():
        for i, t in enumerate(tensors):
            dfdu[i] += _form_gradient(t, w)[n:]
    dldu = sys.S.T @ z + sys.R @ u
    for t in sys.lagrangian_terms.values():
        dldu = dldu + _form_gradient(t, w)[n:]
    return scalar, dpi @ dfdu + dldu


def residual_series(sys: PolySystem, exp: PolyExpansion, top: int) -> tuple[Series, list[Series]]:
    """Both HJB residuals as truncated polynomials in z (through degree ``top``)."""
    n = sys.n
    z = _state_vars(n, top)
    u = _control_series(exp.feedback, n, top, exp.degree)
    pi = _poly_series(exp.cost, top + 1)
    grad_pi = [pi.diff(i) for i in range(n)]
    f = _dynamics_series(sys, z, u, top)
    scalar = _lagrangian_series(sys, z, u, top)
    for i in range(n):
        scalar = scalar + grad_pi[i].truncated(top) * f[i]
    return scalar, _control_gradient_series(sys, grad_pi, z, u, top)
