"""Closed-form proximal operators for the supported simple regularizers."""

from __future__ import annotations

import numpy as np

from .problems import PsiSpec

__all__ = ["prox", "project_feasible", "katyusha_z_step"]


def prox(v: np.ndarray, t: float, psi: PsiSpec) -> np.ndarray:
    """argmin_y 1/2 ||y - v||^2 + t * psi(y).

    Scale then clamp: the squared-norm shrink v / (1 + t*mu_psi) followed by
    the box clamp solves the combined case exactly (the objective separates
    per coordinate and the scalar minimizer is the clamped shrink).
    """
    if not isinstance(psi, PsiSpec):
        raise TypeError(f"unsupported regularizer: {psi!r}")
    if t < 0:
        raise ValueError("prox scale t must be >= 0")
    y = np.asarray(v, dtype=float)
    if psi.mu_psi > 0:
        y = y / (1.0 + t * psi.mu_psi)
    if psi.has_box:
        y = np.clip(y, psi.lo, psi.hi)
    return y if y is not v else y.copy()


def project_feasible(v: np.ndarray, psi: PsiSpec) -> np.ndarray:
    """Nearest feasible point (box clamp; identity when there is no box)."""
    v = np.asarray(v, dtype=float)
    return np.clip(v, psi.lo, psi.hi) if psi.has_box else v.copy()


def katyusha_z_step(z: np.ndarray, x: np.ndarray, g: np.ndarray,
                    eta: float, sigma: float, M: float, psi: PsiSpec) -> np.ndarray:
    """Composite update for the z-sequence of the accelerated solver:

        z+ = prox_{s * psi}( (eta*sigma*x + z - (eta/M) g) / (1 + eta*sigma) ),
        s  = eta / ((1 + eta*sigma) * M).

    With sigma = 0 this reduces to a plain proximal gradient step from z.
    """
    denom = 1.0 + eta * sigma
    inner = (eta * sigma * x + z - (eta / M) * g) / denom
    return prox(inner, eta / (denom * M), psi)
