"""Finite-strain constitutive models in Kirchhoff stress / logarithmic strain.

The elastic state is carried as the elastic left Cauchy-Green tensor
``b_e = F_e F_e^T``.  Elastic strain is ``eps = 0.5 log(b_e)``; plasticity is
returned in principal space, which for isotropic models is equivalent to the
exponential-map update of the multiplicative split.

Fourth-order tensors are stored as 9x9 matrices with index ``3*i + j``.
Stresses are positive in tension.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, MaterialError

_d = np.eye(3)
I9 = np.eye(9)
II9 = np.outer(_d.ravel(), _d.ravel())
ISYM9 = 0.5 * (np.einsum("ik,jl->ijkl", _d, _d) + np.einsum("il,jk->ijkl", _d, _d)).reshape(9, 9)
IDEV9 = ISYM9 - II9 / 3.0


def lame(E, nu):
    E = np.asarray(E, dtype=float)
    G = E / (2.0 * (1.0 + nu))
    K = E / (3.0 * (1.0 - 2.0 * nu))
    return G, K


def elastic_tensor(E, nu):
    """Isotropic elasticity as (..., 9, 9)."""
    G, K = lame(E, nu)
    G = np.asarray(G)[..., None, None]
    K = np.asarray(K)[..., None, None]
    return 2.0 * G * IDEV9 + K * II9


def _eig_spd(b):
    lam, vec = np.linalg.eigh(b)
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
        raise MaterialError("left Cauchy-Green tensor is not positive definite")
    return lam, vec


def _from_principal(vals, vec):
    return np.einsum("...ia,...a,...ja->...ij", vec, vals, vec)


def log_derivative(b):
    """d log(b) / d b for symmetric positive definite ``b`` as (..., 9, 9)."""
    lam, vec = _eig_spd(b)
    la = lam[..., :, None]
    lb = lam[..., None, :]
    diff = la - lb
    close = np.abs(diff) <= 1e-8 * np.maximum(la, lb)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(close, 2.0 / (la + lb), (np.log(la) - np.log(lb)) / np.where(close, 1.0, diff))
    nn = np.einsum("...iA,...jB->...ABij", vec, vec)
    nn = nn.reshape(nn.shape[:-2] + (9,))
    L = np.einsum("...AB,...ABi,...ABj->...ij", f, nn, nn)
    # symmetrise in (k, l) so the map acts consistently on symmetric increments
    L = L.reshape(L.shape[:-1] + (3, 3))
    L = 0.5 * (L + np.swapaxes(L, -1, -2))
    return L.reshape(L.shape[:-3] + (9, 9))


def b_derivative(b):
    """d b_tr / d h for b_tr -> (I + h) b_tr (I + h)^T at h = 0, as (..., 9, 9)."""
    B = np.einsum("ik,...jl->...ijkl", _d, b) + np.einsum("jk,...il->...ijkl", _d, b)
    return B.reshape(B.shape[:-4] + (9, 9))


def spatial_tangent(b_trial, dtau_deps, sigma, J):
    """Spatial consistent tangent ``a`` (..., 9, 9).

    ``dtau_deps`` is the algorithmic tangent of the Kirchhoff stress with
    respect to the trial log strain.  The result satisfies
    ``d f_vi = V g_j a_ijkl dh_kl`` for the internal force.
    """
    dtau_dh = dtau_deps @ (0.5 * log_derivative(b_trial)) @ b_derivative(b_trial)
    geo = np.einsum("...il,jk->...ijkl", sigma, _d).reshape(sigma.shape[:-2] + (9, 9))
    return dtau_dh / np.asarray(J)[..., None, None] - geo


@dataclass
class StressReturn:
    be: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray
    dtau_deps: np.ndarray
    plastic: np.ndarray
    J: np.ndarray
    b_trial: np.ndarray

    def tangent(self):
        return spatial_tangent(self.b_trial, self.dtau_deps, self.sigma, self.J)


class HenckyElastic:
    """Linear relation between Kirchhoff stress and logarithmic elastic strain."""

    def __init__(self, E, nu, rho):
        if not E > 0 or not (-1.0 < nu < 0.5) or not rho > 0:
            raise InvalidConfigError("elastic material needs E > 0, -1 < nu < 0.5, rho > 0")
        self.E, self.nu, self.rho = float(E), float(nu), float(rho)

    def _principal_return(self, eps, E):
        G, K = lame(E, self.nu)
        tr = eps.sum(-1, keepdims=True)
        tau = 2.0 * G[..., None] * (eps - tr / 3.0) + K[..., None] * tr
        return eps, tau, elastic_tensor(E, self.nu), np.zeros(eps.shape[:-1], dtype=bool)

    def update(self, b_trial, J, E=None):
        """Stress return for trial ``b_e`` (..., 3, 3) and total Jacobian ``J``."""
        b_trial = np.asarray(b_trial, dtype=float)
        if b_trial.ndim == 2:
            r = self.update(b_trial[None], np.reshape(J, 1), None if E is None else np.reshape(E, 1))
            return StressReturn(*(np.asarray(v)[0] for v in (r.be, r.tau, r.sigma, r.dtau_deps, r.plastic, r.J,
                                                                r.b_trial)))
        if E is None:
            E = np.full(b_trial.shape[:-2], self.E)
        E = np.broadcast_to(np.asarray(E, dtype=float), b_trial.shape[:-2])
        lam, vec = _eig_spd(b_trial)
        eps, tau_p, D, plastic = self._principal_return(0.5 * np.log(lam), E)
        if np.any(plastic):
            # plastic tangents are built in the principal frame
            R = _rotation9(vec[plastic])
            D[plastic] = R @ D[plastic] @ np.swapaxes(R, -1, -2)
        be = _from_principal(np.exp(2.0 * eps), vec)
        tau = _from_principal(tau_p, vec)
        J = np.asarray(J, dtype=float)
        return StressReturn(be, tau, tau / J[..., None, None], D, plastic, J, b_trial)


class DruckerPrager(HenckyElastic):
    """Perfectly plastic Drucker-Prager cone with non-associated flow.

    Yield function ``f = sqrt(J2) + eta p - xi c`` with ``p = tr(tau)/3``;
    the cone is matched to Mohr-Coulomb at triaxial compression.
    """

    def __init__(self, E, nu, rho, phi, psi, c):
        super().__init__(E, nu, rho)
        if not (0.0 <= psi <= phi < 90.0) or c < 0.0:
            raise InvalidConfigError("Drucker-Prager needs 0 <= psi <= phi < 90 deg and c >= 0")
        self.phi, self.psi, self.c = float(phi), float(psi), float(c)
        self.eta, self.xi = dp_constants(phi)
        self.eta_bar, _ = dp_constants(psi)

    def yield_function(self, tau):
        tau = np.asarray(tau, dtype=float)
        p = np.trace(tau, axis1=-2, axis2=-1) / 3.0
        s = tau - p[..., None, None] * _d
        sqJ2 = np.sqrt(0.5 * np.einsum("...ij,...ij->...", s, s))
        return sqJ2 + self.eta * p - self.xi * self.c

    def _principal_return(self, eps_tr, E):
        nu = self.nu
        G, K = lame(E, nu)
        eta, etab, xi, c = self.eta, self.eta_bar, self.xi, self.c
        tr = eps_tr.sum(-1)
        e_dev = eps_tr - tr[..., None] / 3.0
        s_tr = 2.0 * G[..., None] * e_dev
        p_tr = K * tr
        s_norm = np.sqrt(np.sum(s_tr * s_tr, -1))
        sqJ2 = s_norm / math.sqrt(2.0)
        f_tr = sqJ2 + eta * p_tr - xi * c
        tol = 1e-12 * np.maximum(E, 1.0)
        plastic = f_tr > tol

        D = np.array(elastic_tensor(E, nu))
        eps = eps_tr.copy()
        tau = s_tr + p_tr[..., None]
        if not np.any(plastic):
            return eps, tau, D, plastic

        idx = np.nonzero(plastic)
        Gp, Kp = G[idx], K[idx]
        A = 1.0 / (Gp + Kp * eta * etab)
        dgam = f_tr[idx] * A
        apex = sqJ2[idx] - Gp * dgam < 0.0
        with np.errstate(invalid="ignore", divide="ignore"):
            Np = np.where(s_norm[idx][:, None] > 0.0, s_tr[idx] / s_norm[idx][:, None], 0.0)
        s_new = s_tr[idx] - (math.sqrt(2.0) * Gp * dgam)[:, None] * Np
        p_new = p_tr[idx] - Kp * etab * dgam
        if eta > 0.0:
            p_apex = np.full(p_new.shape, xi * c / eta)
        else:
            p_apex = p_new
        s_new[apex] = 0.0
        p_new[apex] = p_apex[apex]
        tau_p = s_new + p_new[:, None]
        tau[idx] = tau_p
        # elastic strain from the returned stress
        eps[idx] = s_new / (2.0 * Gp[:, None]) + (p_new / (3.0 * Kp))[:, None]

        # algorithmic tangent, assembled in tensor form from principal data
        Dp = np.zeros((len(idx[0]), 9, 9))
        smooth = ~apex
        if np.any(smooth):
            g, k, a, dg = Gp[smooth], Kp[smooth], A[smooth], dgam[smooth]
            N = np.zeros((len(g), 3, 3))
            N[:, [0, 1, 2], [0, 1, 2]] = Np[smooth]
            N = N.reshape(-1, 9)
            one = _d.ravel()
            r2 = math.sqrt(2.0)
            w = r2 * g[:, None] * N + eta * k[:, None] * one
            NN = np.einsum("pi,pj->pij", N, N)
            Dp[smooth] = (2.0 * g[:, None, None] * IDEV9
                          - (r2 * g * a)[:, None, None] * np.einsum("pi,pj->pij", N, w)
                          - (2.0 * r2 * g * g * dg / s_norm[idx][smooth])[:, None, None] * (IDEV9 - NN)
                          + k[:, None, None] * II9
                          - (k * etab * a)[:, None, None] * np.einsum("i,pj->pij", one, w))
        D[idx] = Dp
        return eps, tau, D, plastic



def _rotation9(vec):
    """9x9 matrix mapping principal-frame tensor components to global ones."""
    R = np.einsum("...ia,...jb->...ijab", vec, vec)
    return R.reshape(R.shape[:-4] + (9, 9))


def dp_constants(angle_deg):
    """(eta, xi) of a Drucker-Prager cone through the Mohr-Coulomb compression meridian."""
    s = math.sin(math.radians(angle_deg))
    co = math.cos(math.radians(angle_deg))
    denom = math.sqrt(3.0) * (3.0 - s)
    return 6.0 * s / denom, 6.0 * co / denom


def hencky_update(F_e_trial, E, nu, J=None):
    F = np.asarray(F_e_trial, dtype=float)
    b = F @ np.swapaxes(F, -1, -2)
    if J is None:
        J = np.linalg.det(F)
    return HenckyElastic(E, nu, 1.0).update(b, J)


def drucker_prager_return(F_e_trial, model, J=None):
    F = np.asarray(F_e_trial, dtype=float)
    b = F @ np.swapaxes(F, -1, -2)
    if J is None:
        J = np.linalg.det(F)
    return model.update(b, J)


def consistent_tangent(ret):
    return ret.tangent()


# -- sand initialisation ------------------------------------------------------
def jaky_k0(phi_deg):
    return 1.0 - math.sin(math.radians(phi_deg))


def depth_stiffness(depth, unit_weight, E_ref, m_E, K0, p_ref=100e3, c=0.0):
    """Depth-dependent secant stiffness ``E_ref (sigma_v K0 / p_ref)^m``.

    ``sigma_v = depth * unit_weight``; it is floored at the cohesion ``c`` so
    the stiffness stays positive at the free surface.
    """
    depth = np.asarray(depth, dtype=float)
    if np.any(depth < 0.0):
        raise InvalidConfigError("depth must be non-negative")
    sv = np.maximum(depth * unit_weight, c)
    if np.any(sv * K0 <= 0.0):
        raise InvalidConfigError("stiffness floor needs c > 0 or positive depth")
    return E_ref * (sv * K0 / p_ref) ** m_E


def geostatic_be(depth, unit_weight, K0, E, nu):
    """Elastic left Cauchy-Green tensors reproducing geostatic stress.

    Vertical stress ``-unit_weight * depth`` along z and ``K0`` times that
    laterally, in a reference state with det(F) = 1 approximated by the
    elastic volume change (stresses are small relative to E).
    Returns (b_e, tau).
    """
    depth = np.asarray(depth, dtype=float)
    E = np.broadcast_to(np.asarray(E, dtype=float), depth.shape)
    sv = -unit_weight * depth
    tau_p = np.stack([K0 * sv, K0 * sv, sv], -1)
    G, K = lame(E, nu)
    p = tau_p.sum(-1) / 3.0
    eps = (tau_p - p[..., None]) / (2.0 * G[..., None]) + (p / (3.0 * K))[..., None]
    be = np.zeros(depth.shape + (3, 3))
    tau = np.zeros(depth.shape + (3, 3))
    for i in range(3):
        be[..., i, i] = np.exp(2.0 * eps[..., i])
        tau[..., i, i] = tau_p[..., i]
    return be, tau
