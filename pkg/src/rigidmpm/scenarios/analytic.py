"""Closed-form reference solutions for the benchmarks."""
from __future__ import annotations

import math

import numpy as np


def analytic_cube_stress(E, l, l0):
    """Uniaxial Hencky stress (nu = 0) for a bar of length l0 compressed to l."""
    if not (l > 0.0 and l0 > 0.0):
        raise ValueError("lengths must be positive")
    return E * math.log(l / l0) * (l0 / l)


def l2_stress_error(sigma_points, sigma_analytic, vol0):
    """(sum_p |sigma - sigma_p|^2 V_p0)^(1/2) for the axial stress component."""
    d = np.asarray(sigma_points, dtype=float) - sigma_analytic
    return float(np.sqrt(np.sum(d * d * np.asarray(vol0, dtype=float))))


def sphere_sticks(mu, theta_s):
    """Rolling without slip needs tan(theta) <= 3 mu (solid of inertia m r^2 / 2)."""
    return math.tan(theta_s) <= 3.0 * mu


def analytic_sphere_position(t, mu, theta_s=math.pi / 4, g=9.81):
    """Down-slope travel of the rolling body released from rest.

    Slip: (g t^2 / 2)(sin theta - mu cos theta); stick: g t^2 sin theta / 3.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    if mu < 0:
        raise ValueError("friction coefficient must be non-negative")
    if sphere_sticks(mu, theta_s):
        return g * t * t * math.sin(theta_s) / 3.0
    return 0.5 * g * t * t * (math.sin(theta_s) - mu * math.cos(theta_s))


def analytic_solid_sphere_position(t, mu, theta_s=math.pi / 4, g=9.81):
    """Same as above for a solid sphere (inertia 2/5 m r^2): stick law 5/14 g t^2 sin theta."""
    if math.tan(theta_s) <= 3.5 * mu:
        return 5.0 / 14.0 * g * t * t * math.sin(theta_s)
    return 0.5 * g * t * t * (math.sin(theta_s) - mu * math.cos(theta_s))


def oscillator_energy(m, k, x, v):
    return 0.5 * m * v * v + 0.5 * k * x * x
