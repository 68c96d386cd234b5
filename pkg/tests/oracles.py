"""Closed-form references shared by the solver and acceptance tests."""

import math

import numpy as np
from scipy.linalg import expm


def shear_mode_amplitude(A: float, alpha: float, kappa: float, t: float) -> tuple[float, float]:
    """``(x(t), x'(t))`` for ``x'' = -kappa lam (x' + alpha x)``, ``x(0) = A``, ``x'(0) = 0``.

    ``u = x(t) sin(2 pi x_1) e_2`` is divergence free, so ``div eps(u) = -2 pi^2 u``
    and a linear law ``T = kappa eps`` reduces the Galerkin system to this ODE
    with ``lam = 2 pi^2``.
    """
    lam = 2.0 * math.pi**2
    M = np.array([[0.0, 1.0], [-kappa * lam * alpha, -kappa * lam]])
    x, xd = expm(M * t) @ np.array([A, 0.0])
    return float(x), float(xd)
