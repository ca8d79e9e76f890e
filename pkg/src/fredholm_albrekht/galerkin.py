"""Galerkin projection of the reaction-diffusion problem onto N cosine modes."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .albrekht import PolyExpansion, PolySystem, expand
from .polytensor import SymTensor, multi_indices
from .spectral import NeumannBasis, SpectralModel, coupling_tensor

__all__ = [
    "AsPrintedUnavailable",
    "GalerkinSystem",
    "NORMALIZATIONS",
    "project",
    "quadratic_coefficients",
    "cost_table",
    "format_cost_table",
    "monomial_name",
    "system_to_text",
]

Normalization = Literal["orthonormal", "as-printed"]
NORMALIZATIONS: tuple[str, ...] = ("orthonormal", "as-printed")


class AsPrintedUnavailable(ValueError):
    """The as-printed system exists only for three point-square modes."""


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    sys: PolySystem
    normalization: str
    provenance: str

    @property
    def N(self) -> int:
        return self.sys.n


def project(model: SpectralModel, N: int | None = None, normalization: Normalization = "orthonormal") -> GalerkinSystem:
    """N-mode ODE control system with identity state and control weights.

    ``orthonormal`` projects onto the sqrt(2)-normalized cosines.  ``as-printed``
    is the fixed three-mode reference system, whose quadratic coefficients
    follow unnormalized cosine products.
    """
    N = model.N if N is None else int(N)
    if N < 1:
        raise ValueError("need at least one mode")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    if N != model.N:
        if model.F2 is not None:
            raise ValueError("explicit F2 tensors fix the mode count")
        model = SpectralModel(NeumannBasis(N), model.Fmul, model.Gmul)
    if normalization == "as-printed":
        if N != 3 or model.F2 is not None:
            raise AsPrintedUnavailable("as-printed normalization needs N=3 and the point-square reaction")
        C = coupling_tensor(model, "paper-printed")
    else:
        C = coupling_tensor(model, "orthonormal")

    dim = 2 * N
    quad = []
    for i in range(N):
        vals = {(j, k): C[i, j, k] for j, k in multi_indices(N, 2) if C[i, j, k] != 0.0}
        quad.append(SymTensor.from_dict(dim, 2, vals))
    sys = PolySystem(
        F=np.diag(model.basis.lambdas) + model.Fmul * np.eye(N),
        G=model.Gmul * np.eye(N),
        Q=np.eye(N),
        R=np.eye(N),
        dynamics_terms={2: quad} if any(t.coeffs.any() for t in quad) else {},
    )
    prov = f"reaction-diffusion N={N} Fmul={model.Fmul:g} Gmul={model.Gmul:g} reaction={model.quad_kind}"
    return GalerkinSystem(sys, normalization, prov)


def quadratic_coefficients(gal: GalerkinSystem) -> np.ndarray:
    """Dense C[i, j, k] of the quadratic state terms (symmetric in j, k)."""
    N = gal.N
    C = np.zeros((N, N, N))
    for i, t in enumerate(gal.sys.dynamics_terms.get(2, ())):
        C[i] = t.to_full()[:N, :N]
    return C


def monomial_name(idx, var: str = "zeta") -> str:
    parts = []
    for i in sorted(set(idx)):
        p = idx.count(i)
        parts.append(f"{var}{i}" + (f"^{p}" if p > 1 else ""))
    return "*".join(parts)


def cost_table(gal: GalerkinSystem, d: int = 3, expansion: PolyExpansion | None = None) -> list[tuple[int, tuple[int, ...], float]]:
    """Monomial coefficients of the optimal cost, degrees 2..d+1."""
    if not 1 <= d <= 3:
        raise ValueError("cost tables are produced for d in 1..3")
    exp = expansion or expand(gal.sys, d)
    rows = []
    for k, t in exp.cost.terms.items():
        for idx, c in zip(multi_indices(gal.N, k), t.monomial_coeffs()):
            rows.append((k, idx, float(c)))
    return rows


def format_cost_table(rows, tol: float = 0.0) -> str:
    lines = ["degree,monomial,coefficient"]
    for k, idx, c in rows:
        if abs(c) > tol:
            lines.append(f"{k},{monomial_name(idx)},{c:.9e}")
    return "\n".join(lines) + "\n"


def system_to_text(gal: GalerkinSystem) -> str:
    """Structured JSON listing of the projected system."""
    N = gal.N
    quad = []
    for i, t in enumerate(gal.sys.dynamics_terms.get(2, ())):
        for (j, k), v in t.nonzero_items():
            quad.append(f"{i}|{j},{k}|{v:.9e}")
    doc = {
        "normalization": gal.normalization,
        "provenance": gal.provenance,
        "N": N,
        "F_diag": [float(f"{v:.9e}") for v in np.diag(gal.sys.F)],
        "G_diag": [float(f"{v:.9e}") for v in np.diag(gal.sys.G)],
        "quadratic": quad,
    }
    return json.dumps(doc, indent=2) + "\n"
