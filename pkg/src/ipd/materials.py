"""Stabilized hyperelastic laws evaluated on (non-local) deformation gradients.

Both laws split into an isochoric part and a volumetric penalty
``kappa/2 (ln J)^2``.  Functions are batched over leading axes: ``F`` has
shape ``(..., 3, 3)``.  2D gradients are embedded as plane strain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncompressibleLimitError, InvertedElementError


def numerical_bulk_modulus(shear_modulus, nu_stab):
    if nu_stab >= 0.5:
        raise IncompressibleLimitError(f"incompressible limit: nu_stab = {nu_stab} >= 0.5")
    return 2.0 * shear_modulus * (1.0 + nu_stab) / (3.0 * (1.0 - 2.0 * nu_stab))


def _det_inv_t(F):
    J = np.linalg.det(F)
    bad = np.flatnonzero(np.ravel(J) <= 0.0)
    if bad.size:
        raise InvertedElementError(int(bad[0]), float(np.ravel(J)[bad[0]]))
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    return J, FinvT


def neo_hookean(F, G, kappa):
    """Energy density and first Piola-Kirchhoff stress of the modified neo-Hookean law."""
    J, FinvT = _det_inv_t(F)
    trC = np.einsum("...ij,...ij->...", F, F)
    Jm23 = J ** (-2.0 / 3.0)
    lnJ = np.log(J)
    psi = 0.5 * G * (Jm23 * trC - 3.0) + 0.5 * kappa * lnJ ** 2
    P = (G * Jm23)[..., None, None] * (F - (trC / 3.0)[..., None, None] * FinvT) \
        + (kappa * lnJ)[..., None, None] * FinvT
    return psi, P


def mooney_rivlin(F, c1, c2, kappa):
    """Energy density and stress of the modified Mooney-Rivlin law.

    ``I2`` here is ``tr(C)^2 - tr(C^2)`` (twice the usual second invariant),
    which the ``J^(-4/3)/2`` prefactor compensates.
    """
    J, FinvT = _det_inv_t(F)
    C = np.einsum("...ki,...kj->...ij", F, F)
    I1 = np.einsum("...ii->...", C)
    I2 = I1 ** 2 - np.einsum("...ij,...ji->...", C, C)
    Jm23 = J ** (-2.0 / 3.0)
    Jm43 = Jm23 * Jm23
    lnJ = np.log(J)
    psi = c1 * (Jm23 * I1 - 3.0) + c2 * (0.5 * Jm43 * I2 - 3.0) + 0.5 * kappa * lnJ ** 2
    FC = F @ C
    P = (2.0 * c1 * Jm23)[..., None, None] * (F - (I1 / 3.0)[..., None, None] * FinvT) \
        + (2.0 * c2 * Jm43)[..., None, None] * (I1[..., None, None] * F - FC
                                                  - (I2 / 3.0)[..., None, None] * FinvT) \
        + (kappa * lnJ)[..., None, None] * FinvT
    return psi, P


def embed_plane_strain(F2):
    F2 = np.asarray(F2, float)
    F3 = np.zeros(F2.shape[:-2] + (3, 3))
    F3[..., :2, :2] = F2
    F3[..., 2, 2] = 1.0
    return F3


@dataclass(frozen=True)
class NeoHookean:
    shear_modulus: float
    nu_stab: float = 0.4

    def __post_init__(self):
        if self.shear_modulus <= 0:
            raise ValueError("shear modulus must be positive")

    @property
    def kappa(self):
        return numerical_bulk_modulus(self.shear_modulus, self.nu_stab)

    @property
    def stiffness(self):
        """Shear plus bulk modulus; sets the elastic time-step bound."""
        return self.shear_modulus + self.kappa

    def evaluate(self, F):
        return _evaluate(F, lambda F3: neo_hookean(F3, self.shear_modulus, self.kappa))


@dataclass(frozen=True)
class MooneyRivlin:
    c1: float
    c2: float
    nu_stab: float = 0.4

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0 or self.c1 + self.c2 <= 0:
            raise ValueError("Mooney-Rivlin parameters need c1, c2 >= 0 and c1 + c2 > 0")

    @property
    def shear_modulus(self):
        return self.c1 + self.c2

    @property
    def kappa(self):
        return numerical_bulk_modulus(self.shear_modulus, self.nu_stab)

    @property
    def stiffness(self):
        return 2.0 * self.shear_modulus + self.kappa

    def evaluate(self, F):
        return _evaluate(F, lambda F3: mooney_rivlin(F3, self.c1, self.c2, self.kappa))


def _evaluate(F, law):
    F = np.asarray(F, float)
    if F.shape[-1] == 2:
        psi, P = law(embed_plane_strain(F))
        return psi, P[..., :2, :2]
    return law(F)


def neo_hookean_stress(F, params):
    """(psi, P) for a single gradient or a batch; 2D input is plane strain."""
    return params.evaluate(F)


def mooney_rivlin_stress(F, params):
    return params.evaluate(F)
