"""Bilinear-power reaction kinetics between LDL and the released drug.

Both loss terms share the form k * y**a * z**b with species-specific rate
constants, so they vanish whenever either concentration is zero and are
increasing in each argument on the non-negative orthant.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError


def _check_nonnegative(y, z):
    if np.any(np.asarray(y) < 0) or np.any(np.asarray(z) < 0):
        raise ValueError("reaction kinetics are defined for non-negative concentrations only")


def power_rate(rate: float, exp_y: int, exp_z: int, y, z):
    """rate * y**exp_y * z**exp_z, elementwise."""
    _check_nonnegative(y, z)
    return rate * np.asarray(y, dtype=float) ** exp_y * np.asarray(z, dtype=float) ** exp_z


def power_rate_partials(rate: float, exp_y: int, exp_z: int, y, z):
    """Exact partial derivatives (d/dy, d/dz) of `power_rate`."""
    _check_nonnegative(y, z)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    dy = rate * exp_y * y ** (exp_y - 1) * z ** exp_z
    dz = rate * exp_z * y ** exp_y * z ** (exp_z - 1)
    return dy, dz


class ReactionKinetics:
    """Rate constants and exponents of the LDL/drug reaction pair."""

    def __init__(self, ldl_drug_rate: float, drug_ldl_rate: float,
                 ldl_exponent: int = 1, drug_exponent: int = 1):
        if ldl_drug_rate <= 0 or drug_ldl_rate <= 0:
            raise ParameterError("kinetics rate constants must be > 0")
        if int(ldl_exponent) != ldl_exponent or int(drug_exponent) != drug_exponent \
                or ldl_exponent < 1 or drug_exponent < 1:
            raise ParameterError("kinetics exponents must be positive integers")
        self.ldl_drug_rate = float(ldl_drug_rate)
        self.drug_ldl_rate = float(drug_ldl_rate)
        self.ldl_exponent = int(ldl_exponent)
        self.drug_exponent = int(drug_exponent)

    def ldl_loss(self, y, z):
        """LDL consumption rate R_y(y, z) in mg/(dL*s)."""
        return power_rate(self.ldl_drug_rate, self.ldl_exponent, self.drug_exponent, y, z)

    def drug_loss(self, y, z):
        """Drug consumption rate R_z(y, z) in ug/(mL*s)."""
        return power_rate(self.drug_ldl_rate, self.ldl_exponent, self.drug_exponent, y, z)

    def ldl_loss_partials(self, y, z):
        """(dR_y/dy, dR_y/dz), exact."""
        return power_rate_partials(self.ldl_drug_rate, self.ldl_exponent,
                                   self.drug_exponent, y, z)

    def __repr__(self):
        return (f"ReactionKinetics(ldl_drug_rate={self.ldl_drug_rate!r}, "
                f"drug_ldl_rate={self.drug_ldl_rate!r}, "
                f"ldl_exponent={self.ldl_exponent}, drug_exponent={self.drug_exponent})")
