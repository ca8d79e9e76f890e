"""Exit criteria for the package, runnable from the CLI and from pytest.

Each check returns a :class:`Result`; tolerances are fixed here and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .albrekht import PolySystem, are_residual, expand, hjb_residual, solve_are
from .galerkin import cost_table, project
from .polytensor import SymTensor
from .simulate import FeedbackPolicy, SimConfig, compare, cost_consistency, decay_mask, integrate
from .spectral import SpectralModel, build_basis, compute_kernels, riccati_modes


@dataclass(frozen=True)
class Result:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}: {self.detail}"


def scalar_system() -> PolySystem:
    """x' = u + x^2 with l = (x^2 + u^2)/2."""
    return PolySystem(
        F=[[0.0]], G=[[1.0]], Q=[[1.0]], R=[[1.0]],
        dynamics_terms={2: [SymTensor.from_dict(2, 2, {(0, 0): 1.0})]},
    )


@lru_cache(maxsize=None)
def _printed_galerkin():
    gal = project(SpectralModel(build_basis(3)), 3, "as-printed")
    lqr = solve_are(gal.sys)
    return gal, lqr, expand(gal.sys, 3, lqr)


@lru_cache(maxsize=None)
def _figure_runs():
    gal, lqr, exp = _printed_galerkin()
    cfg = SimConfig((5.0, 5.0, 5.0), t_end=5.0, dt=1e-4)
    full = integrate(gal, FeedbackPolicy.from_expansion(exp), cfg)
    mask = decay_mask(lqr.mu, 3, -20.0)
    partial = integrate(gal, FeedbackPolicy.from_expansion(exp, mask=mask), cfg)
    return full, partial


def hamiltonian_are(sys: PolySystem) -> np.ndarray:
    """ARE solution from the stable invariant subspace of the Hamiltonian matrix."""
    Rinv = np.linalg.inv(sys.R)
    A = sys.F - sys.G @ Rinv @ sys.S.T
    Qt = sys.Q - sys.S @ Rinv @ sys.S.T
    H = np.block([[A, -sys.G @ Rinv @ sys.G.T], [-Qt, -A.T]])
    w, V = np.linalg.eig(H)
    stable = V[:, w.real < 0]
    n = sys.n
    X1, X2 = stable[:n], stable[n:]
    return np.real(X2 @ np.linalg.inv(X1))


def random_stabilizable(rng: np.random.Generator) -> PolySystem:
    n = int(rng.integers(1, 5))
    m = int(rng.integers(1, n + 1))
    F = rng.normal(size=(n, n))
    G = rng.normal(size=(n, m))
    W = rng.normal(size=(n + m, n + m))
    J = W @ W.T + 0.1 * np.eye(n + m)
    return PolySystem(F=F, G=G, Q=J[:n, :n], S=J[:n, n:], R=J[n:, n:])


def _monomials(rows) -> dict:
    return {(k, idx): c for k, idx, c in rows}


def check_diagonal_riccati() -> Result:
    N = 8
    Pi2, _, _ = riccati_modes(SpectralModel(build_basis(N)))
    lam = build_basis(N).lambdas
    expected = np.diag(lam + np.sqrt(lam**2 + 1))
    err = np.abs(Pi2 - expected).max()
    h11, h22 = Pi2[1, 1] / 2, Pi2[2, 2] / 2
    ok = err <= 1e-10 and abs(h11 - 0.0253) <= 5e-5 and abs(h22 - 0.0063) <= 5e-5
    return Result(1, "diagonal Riccati closed form", ok,
                  f"max|err|={err:.2e}, Pi11/2={h11:.6f}, Pi22/2={h22:.6f}")


def check_spectrum() -> Result:
    N = 8
    _, _, mu = riccati_modes(SpectralModel(build_basis(N)))
    lam = build_basis(N).lambdas
    err = np.abs(mu + np.sqrt(lam**2 + 1)).max()
    ok = err <= 1e-10 and abs(mu[3] + 88.8321) <= 1e-3
    return Result(2, "closed-loop spectrum", ok, f"max|mu+sqrt(l^2+1)|={err:.2e}, mu3={mu[3]:.6f}")


PRINTED_TABLE = {
    (2, (0, 0)): 0.5000, (2, (1, 1)): 0.0253, (2, (2, 2)): 0.0063,
    (3, (0, 0, 0)): 0.3333, (3, (0, 1, 1)): 0.0288, (3, (0, 2, 2)): 0.0066, (3, (1, 1, 2)): 0.0010,
    (4, (0, 0, 0, 0)): 0.1250, (4, (0, 0, 1, 1)): 0.0281, (4, (0, 0, 2, 2)): 0.0065,
    (4, (0, 1, 1, 2)): 0.0012, (4, (1, 1, 1, 1)): 0.0004, (4, (1, 1, 2, 2)): 0.0002,
}


def check_galerkin_table() -> Result:
    gal, _, exp = _printed_galerkin()
    mono = _monomials(cost_table(gal, 3, exp))
    worst = max(abs(mono[key] - v) for key, v in PRINTED_TABLE.items())
    z24 = abs(mono[(4, (2, 2, 2, 2))])
    ok = worst <= 1e-3 and z24 < 5e-5
    return Result(3, "Galerkin table reproduction", ok, f"max|err|={worst:.2e} over 13 entries, |c(z2^4)|={z24:.2e}")


def check_spectral_recursion() -> Result:
    kc = compute_kernels(SpectralModel(build_basis(8)), "paper-printed")
    p000 = kc.Pi3[(0, 0, 0)]
    c011 = 3 * kc.Pi3[(0, 1, 1)]
    c112 = 3 * kc.Pi3[(1, 1, 2)]
    p0000 = kc.Pi4[(0, 0, 0, 0)]
    ok = (abs(p000 - 1 / 3) <= 1e-12 and abs(c011 - 0.0288) <= 2e-4
          and abs(c112 - 0.00096) <= 5e-5 and abs(p0000 - 1 / 8) <= 1e-12)
    return Result(4, "spectral recursion checks", ok,
                  f"Pi000-1/3={p000 - 1 / 3:.1e}, c(z0z1^2)={c011:.6f}, "
                  f"c(z1^2z2)={c112:.6f}, Pi0000-1/8={p0000 - 1 / 8:.1e}")


def check_scalar_oracle() -> Result:
    exp = expand(scalar_system(), 3)
    got = [exp.cost[k].coeffs[0] for k in (2, 3, 4)] + [exp.feedback[0][k].coeffs[0] for k in (1, 2, 3)]
    want = [0.5, 1 / 3, 1 / 8, -1.0, -1.0, -0.5]
    err = max(abs(a - b) for a, b in zip(got, want))
    return Result(5, "scalar HJB oracle", err <= 1e-10, f"max|err|={err:.2e}")


def check_residual_order() -> Result:
    gal, _, exp = _printed_galerkin()
    rng = np.random.default_rng(20240605)
    s = 1e-2
    ratios = []
    for _ in range(20):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        r1 = abs(hjb_residual(gal.sys, exp, s * d)[0])
        r2 = abs(hjb_residual(gal.sys, exp, 0.5 * s * d)[0])
        ratios.append(r1 / r2 if r2 > 0 else math.inf)
    worst = min(ratios)
    return Result(6, "HJB residual order", worst >= 2**4 * 0.8, f"min ratio={worst:.2f} (need >= 12.8)")


def check_stabilization() -> Result:
    gal, _, exp = _printed_galerkin()
    full, _ = _figure_runs()
    lin = integrate(gal, FeedbackPolicy.from_expansion(exp, degree=1), SimConfig((1.1, 0.0, 0.0), t_end=5.0, dt=1e-4))
    ok = full.status == "Converged" and full.final_norm < 1e-2 and lin.status == "Escaped"
    return Result(7, "stabilization beyond the linear basin", ok,
                  f"cubic from (5,5,5): {full.status}, |z(5)|={full.final_norm:.6f}; "
                  f"linear from (1.1,0,0): {lin.label}")


def check_partial_feedback() -> Result:
    full, partial = _figure_runs()
    rep = compare(full, partial)
    finite = all(math.isfinite(v) for v in rep.per_mode_rel)
    ok = full.status == "Converged" and partial.status == "Converged" and finite
    rel = ", ".join(f"{v:.4f}" for v in rep.per_mode_rel)
    return Result(8, "partial-feedback experiment", ok,
                  f"full {full.status} |z|={full.final_norm:.6f}, partial {partial.status} "
                  f"|z|={partial.final_norm:.6f}, per-mode rel sup diff=({rel})")


def check_are_residuals() -> Result:
    systems = [scalar_system(), _printed_galerkin()[0].sys, SpectralModel(build_basis(8)).linear_system()]
    worst_res = 0.0
    for sys in systems:
        P = solve_are(sys).P
        worst_res = max(worst_res, np.linalg.norm(are_residual(sys, P)) / (1 + np.linalg.norm(P)))
    rng = np.random.default_rng(7)
    worst_gap = 0.0
    for _ in range(10):
        sys = random_stabilizable(rng)
        P = solve_are(sys).P
        worst_res = max(worst_res, np.linalg.norm(are_residual(sys, P)) / (1 + np.linalg.norm(P)))
        worst_gap = max(worst_gap, np.abs(P - hamiltonian_are(sys)).max())
    ok = worst_res <= 1e-10 and worst_gap <= 1e-8
    return Result(9, "ARE residual and Hamiltonian oracle", ok,
                  f"max residual/(1+|P|)={worst_res:.2e}, max|P-P_ham|={worst_gap:.2e}")


def check_cost_consistency() -> Result:
    sys = scalar_system()
    rows = cost_consistency(sys, expand(sys, 3), [1.0], [0.2, 0.1, 0.05])
    gaps = [r[3] for r in rows]
    f1, f2 = gaps[0] / gaps[1], gaps[1] / gaps[2]
    return Result(10, "cost consistency", f1 >= 20 and f2 >= 20,
                  f"gaps={gaps[0]:.3e},{gaps[1]:.3e},{gaps[2]:.3e}; factors {f1:.1f}, {f2:.1f}")


CRITERIA: tuple[Callable[[], Result], ...] = (
    check_diagonal_riccati,
    check_spectrum,
    check_galerkin_table,
    check_spectral_recursion,
    check_scalar_oracle,
    check_residual_order,
    check_stabilization,
    check_partial_feedback,
    check_are_residuals,
    check_cost_consistency,
)


def run_all() -> list[Result]:
    out = []
    for check in CRITERIA:
        try:
            out.append(check())
        except Exception as exc:  # a crashing check is a failed criterion
            num = CRITERIA.index(check) + 1
            out.append(Result(num, check.__name__, False, f"error: {exc!r}"))
    return out
