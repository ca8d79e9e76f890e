"""Mode-space kernels for the controlled reaction-diffusion problem on [0, 1].

    z_t = z_xx + Fmul z + Gmul u + (reaction), Neumann ends,
    cost 1/2 int int (z^2 + u^2) dx dt.

Kernels are expanded in the Neumann cosine eigenbasis.  The quadratic kernel
comes from the N-mode Riccati equation; the cubic and quartic kernels solve one
scalar equation per ordered mode tuple and are then symmetrized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .albrekht import PolySystem, solve_are
from .polytensor import SymTensor

__all__ = [
    "NeumannBasis",
    "SpectralModel",
    "KernelCoeffs",
    "VARIANTS",
    "build_basis",
    "triple_product",
    "coupling_tensor",
    "riccati_modes",
    "cubic_coeffs",
    "quartic_coeffs",
    "feedback_kernels",
    "compute_kernels",
    "kernel_on_grid",
]

Variant = Literal["paper-printed", "orthonormal"]
VARIANTS: tuple[str, ...] = ("paper-printed", "orthonormal")
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class NeumannBasis:
    """First N eigenpairs of d^2/dx^2 on [0, 1] with no-flux ends.

    phi_0 = 1, phi_i = sqrt(2) cos(i pi x), lambda_i = -(i pi)^2.
    """

    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one mode")

    @property
    def lambdas(self) -> np.ndarray:
        i = np.arange(self.N)
        return 0.0 - (i * np.pi) ** 2

    def values(self, x) -> np.ndarray:
        """phi_i(x) for every mode, shape (N, len(x))."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        i = np.arange(self.N)[:, None]
        out = SQRT2 * np.cos(i * np.pi * x[None, :])
        out[0] = 1.0
        return out


def build_basis(N: int) -> NeumannBasis:
    return NeumannBasis(N)


def triple_product(i: int, j: int, k: int) -> float:
    """Closed form of int_0^1 phi_i phi_j phi_k dx for the orthonormal basis."""
    idx = (i, j, k)
    if min(idx) < 0:
        raise ValueError("mode indices must be non-negative")
    nz = [a for a in idx if a != 0]
    if len(nz) == 0:
        return 1.0
    if len(nz) == 1:
        return 0.0
    if len(nz) == 2:
        return float(nz[0] == nz[1])
    a, b, c = idx
    return (SQRT2 / 2) * (float(a == b + c) + float(a == abs(b - c)))


def _printed_product(a: int, j: int, k: int) -> float:
    # unnormalized cosine product: cos(j)cos(k) = 1/2 (cos(j+k) + cos(j-k))
    return 0.5 * (float(a == j + k) + float(a == abs(j - k)))


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Reaction-diffusion control problem in mode space.

    ``F2`` is None for the pointwise square reaction z(x)^2; otherwise an
    explicit (N, N, N) orthonormal mode tensor F2[m, j, k], symmetric in (j, k).
    """

    basis: NeumannBasis
    Fmul: float = 0.0
    Gmul: float = 1.0
    F2: np.ndarray | None = None

    def __post_init__(self):
        if not (math.isfinite(self.Fmul) and math.isfinite(self.Gmul)):
            raise ValueError("Fmul and Gmul must be finite")
        if self.F2 is not None:
            F2 = np.array(self.F2, dtype=float)
            N = self.basis.N
            if F2.shape != (N, N, N):
                raise ValueError(f"F2 has shape {F2.shape}, expected {(N, N, N)}")
            if not np.allclose(F2, F2.transpose(0, 2, 1)):
                raise ValueError("F2 must be symmetric in its last two indices")
            F2.setflags(write=False)
            object.__setattr__(self, "F2", F2)

    @property
    def N(self) -> int:
        return self.basis.N

    @property
    def quad_kind(self) -> str:
        return "point-square" if self.F2 is None else "explicit"

    def linear_system(self) -> PolySystem:
        N = self.N
        return PolySystem(
            F=np.diag(self.basis.lambdas) + self.Fmul * np.eye(N),
            G=self.Gmul * np.eye(N),
            Q=np.eye(N),
            R=np.eye(N),
        )


def coupling_tensor(model: SpectralModel, variant: Variant) -> np.ndarray:
    """C[a, j, k]: coefficient of z_j z_k in the reaction projected on mode a."""
    N = model.N
    if variant == "orthonormal":
        if model.F2 is not None:
            return np.array(model.F2)
        fn = triple_product
    elif variant == "paper-printed":
        if model.F2 is not None:
            raise ValueError("the paper-printed variant is defined for the point-square reaction only")
        fn = _printed_product
    else:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    C = np.empty((N, N, N))
    for a in range(N):
        for j in range(N):
            for k in range(N):
                C[a, j, k] = fn(a, j, k)
    return C


def riccati_modes(model: SpectralModel):
    """Quadratic cost kernel, linear feedback kernel and closed-loop mode rates."""
    sys = model.linear_system()
    lqr = solve_are(sys)
    Pi2 = lqr.P
    K1 = -Pi2 * model.Gmul
    Acl = sys.F + sys.G @ lqr.K
    off = Acl - np.diag(np.diag(Acl))
    if np.abs(off).max(initial=0.0) > 1e-9 * (1 + np.abs(Acl).max()):
        raise ValueError("closed loop is not diagonal in the cosine basis")
    return Pi2, K1, np.diag(Acl).copy()


def _mu_sum(mu: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros((len(mu),) * order)
    for ax in range(order):
        shape = [1] * order
        shape[ax] = len(mu)
        out = out + mu.reshape(shape)
    return out


def cubic_coeffs(model: SpectralModel, Pi2: np.ndarray, mu: np.ndarray, variant: Variant = "paper-printed") -> SymTensor:
    """Solve 0 = (mu_i+mu_j+mu_k) Pi_ijk + sum_a Pi_ia C_ajk per ordered tuple, then symmetrize."""
    C = coupling_tensor(model, variant)
    src = np.einsum("ia,ajk->ijk", Pi2, C)
    raw = -src / _mu_sum(np.asarray(mu, float), 3)
    return SymTensor.from_full(raw)


def quartic_coeffs(
    model: SpectralModel, Pi2: np.ndarray, Pi3: SymTensor, mu: np.ndarray, variant: Variant = "paper-printed"
) -> SymTensor:
    """Ordered-tuple quartic solve with the symmetrized cubic kernel as input.

    0 = (mu_i+mu_j+mu_k+mu_l) Pi_ijkl + 3 sum_a Pi_ija C_akl - 9/2 G^2 sum_r Pi_ijr Pi_rkl
    """
    C = coupling_tensor(model, variant)
    P3 = Pi3.to_full()
    src = 3.0 * np.einsum("ija,akl->ijkl", P3, C)
    src -= 4.5 * model.Gmul**2 * np.einsum("ijr,rkl->ijkl", P3, P3)
    raw = -src / _mu_sum(np.asarray(mu, float), 4)
    return SymTensor.from_full(raw)


def feedback_kernels(Pi2: np.ndarray, Pi3: SymTensor, Pi4: SymTensor, Gmul: float):
    """Mode coefficients of the linear, quadratic and cubic feedback kernels."""
    return -Pi2 * Gmul, Pi3 * (-3.0 * Gmul), Pi4 * (-4.0 * Gmul)


@dataclass(frozen=True, eq=False)
class KernelCoeffs:
    Pi2: np.ndarray
    Pi3: SymTensor
    Pi4: SymTensor
    K1: np.ndarray
    K2: SymTensor
    K3: SymTensor
    mu: np.ndarray
    variant: str


def compute_kernels(model: SpectralModel, variant: Variant = "paper-printed") -> KernelCoeffs:
    Pi2, _, mu = riccati_modes(model)
    Pi3 = cubic_coeffs(model, Pi2, mu, variant)
    Pi4 = quartic_coeffs(model, Pi2, Pi3, mu, variant)
    K1, K2, K3 = feedback_kernels(Pi2, Pi3, Pi4, model.Gmul)
    return KernelCoeffs(Pi2, Pi3, Pi4, K1, K2, K3, mu, variant)


def kernel_on_grid(coeffs, degree: int, grid) -> np.ndarray:
    """Sample sum Pi_{i..} phi_i(x_1)...phi_l(x_k) on the tensor grid ``grid``^k."""
    grid = np.asarray(grid, dtype=float)
    if grid.min(initial=0.0) < 0 or grid.max(initial=0.0) > 1:
        raise ValueError("grid points must lie in [0, 1]")
    full = coeffs.to_full() if isinstance(coeffs, SymTensor) else np.asarray(coeffs, float)
    if full.ndim != degree:
        raise ValueError(f"coefficients have order {full.ndim}, expected {degree}")
    Phi = NeumannBasis(full.shape[0]).values(grid)
    out = full
    for _ in range(degree):
        # contract the leading mode axis; grid axes accumulate at the back
        out = np.tensordot(out, Phi, axes=(0, 0))
    return out
