"""Assembled wall transport model.

Bundles the three species' coefficient tables over a common mesh and
provides the vectorized right-hand side, steady-state solvers, the
stability (spectral abscissa) check, and the per-node input-output terms
(g, f, b) used by the release controller:

    g_i = dy_i/dt                  (LDL transport minus the drug reaction)
    f_i = drift part of d2y_i/dt2  (composition of neighbouring g's and
                                    the drug transport terms)
    b_i = release-to-acceleration gain, m * dR_y/dz * n_i

so that d2y_i/dt2 = f_i - b_i * u_i along trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ParameterError
from .kinetics import ReactionKinetics
from .params import EnvironmentParams, WallGeometry, SPECIES
from .wall import LumpedCoefficients, build_coefficients, build_mesh


@dataclass(frozen=True)
class WallModel:
    geometry: WallGeometry
    layers: np.ndarray
    transport: dict
    coeffs: dict
    kinetics: ReactionKinetics
    env: EnvironmentParams

    @classmethod
    def build(cls, geometry: WallGeometry, transport: dict, env: EnvironmentParams,
              kinetics: ReactionKinetics) -> "WallModel":
        coeffs = {sp: build_coefficients(geometry, transport[sp], env.filtration_velocity)
                  for sp in SPECIES}
        return cls(geometry, build_mesh(geometry), dict(transport), coeffs, kinetics, env)

    @classmethod
    def from_params(cls, params, refine: int = 1) -> "WallModel":
        geometry = params.geometry if refine == 1 else params.geometry.refined(refine)
        return cls.build(geometry, params.transport, params.env, params.kinetics)

    @property
    def q(self) -> int:
        return self.geometry.node_count

    def lumen(self, species: str) -> float:
        return self.env.lumen(species)

    def inflow(self, species: str, lumen: float | None = None) -> np.ndarray:
        """Constant boundary forcing vector L: lumen inflow at node 1."""
        L = np.zeros(self.q)
        L[0] = self.coeffs[species].c1[0] * (self.lumen(species) if lumen is None else lumen)
        return L

    def apply_transport(self, species: str, c: np.ndarray) -> np.ndarray:
        """A @ c for the species' tridiagonal transport matrix (no boundary forcing)."""
        k = self.coeffs[species]
        out = k.c2 * c
        out[1:] += k.c1[1:] * c[:-1]
        out[:-1] += k.c3[:-1] * c[1:]
        return out

    def transport_rate(self, species: str, c: np.ndarray,
                       lumen: float | None = None) -> np.ndarray:
        """A @ c + L, the full linear transport rate."""
        out = self.apply_transport(species, c)
        out[0] += self.coeffs[species].c1[0] * (self.lumen(species) if lumen is None else lumen)
        return out

    def banded(self, species: str) -> np.ndarray:
        """The species matrix in scipy solve_banded (1, 1) layout."""
        k = self.coeffs[species]
        ab = np.zeros((3, self.q))
        ab[0, 1:] = k.c3[:-1]
        ab[1, :] = k.c2
        ab[2, :-1] = k.c1[1:]
        return ab

    def dense(self, species: str) -> np.ndarray:
        k = self.coeffs[species]
        A = np.diag(k.c2)
        idx = np.arange(self.q - 1)
        A[idx + 1, idx] = k.c1[1:]
        A[idx, idx + 1] = k.c3[:-1]
        return A

    def rhs(self, y: np.ndarray, z: np.ndarray, n: np.ndarray,
            u: np.ndarray | float = 0.0):
        """Time derivatives (dy, dz, dn) of the three concentration fields."""
        r_y = self.kinetics.ldl_loss(y, z)
        r_z = self.kinetics.drug_loss(y, z)
        dy = self.transport_rate("ldl", y) - r_y
        dz = self.transport_rate("drug", z) - r_z + self.env.release_gain * n * u
        dn = self.transport_rate("carrier", n)
        return dy, dz, dn

    def steady_state(self, species: str, lumen: float | None = None) -> np.ndarray:
        """Solve A x + L = 0 for the species by direct tridiagonal elimination."""
        L = self.inflow(species, lumen)
        try:
            x = scipy.linalg.solve_banded((1, 1), self.banded(species), -L)
        except scipy.linalg.LinAlgError as exc:
            raise ParameterError(f"singular transport matrix for {species}: {exc}") from None
        if not np.all(np.isfinite(x)):
            raise ParameterError(f"singular transport matrix for {species}")
        residual = np.linalg.norm(self.apply_transport(species, x) + L)
        load = np.linalg.norm(L)
        if load > 0 and residual > 1e-10 * load:
            raise ParameterError(
                f"steady-state residual {residual!r} exceeds 1e-10 of the load for {species}")
        return x

    def ldl_equilibrium(self, lumen: float | None = None) -> np.ndarray:
        """Drug-free LDL steady profile; the uncontrolled baseline and initial state."""
        return self.steady_state("ldl", lumen)

    def spectral_abscissa(self, species: str) -> float:
        """Largest real part over the species matrix spectrum.

        The matrix is tridiagonal with non-negative off-diagonals; when all
        off-diagonal products are positive it is diagonally similar to a
        symmetric tridiagonal matrix, which keeps the check cheap at full
        mesh size.  Degenerate (zero-diffusion) cases fall back to a dense
        eigensolve.
        """
        k = self.coeffs[species]
        if self.q == 1:
            return float(k.c2[0])
        off = k.c1[1:] * k.c3[:-1]
        if np.all(off > 0):
            eigs = scipy.linalg.eigvalsh_tridiagonal(k.c2, np.sqrt(off))
            return float(np.max(eigs))
        return float(np.max(np.linalg.eigvals(self.dense(species)).real))

    def require_hurwitz(self, species: str) -> float:
        abscissa = self.spectral_abscissa(species)
        if abscissa >= 0:
            raise ParameterError(
                f"{species} transport matrix is not Hurwitz "
                f"(spectral abscissa {abscissa!r} >= 0)")
        return abscissa

    def carrier_steady_state(self) -> tuple[np.ndarray, float]:
        """Carrier steady profile n_ss and the verified spectral abscissa."""
        abscissa = self.require_hurwitz("carrier")
        return self.steady_state("carrier"), abscissa

    def io_dynamics(self, y: np.ndarray, z: np.ndarray, n: np.ndarray):
        """Per-node (g, f, b) vectors at the given state.

        Boundary conventions: the lumen values are constants (so g_0 = 0
        and z_0 enters the drug transport through the inflow vector), and
        node q has no right neighbour (its c3 is zero).
        """
        ky = self.coeffs["ldl"]
        g = self.transport_rate("ldl", y) - self.kinetics.ldl_loss(y, z)
        dry_dy, dry_dz = self.kinetics.ldl_loss_partials(y, z)
        z_rate = self.transport_rate("drug", z) - self.kinetics.drug_loss(y, z)
        g_left = np.concatenate(([0.0], g[:-1]))
        g_right = np.concatenate((g[1:], [0.0]))
        f = ky.c1 * g_left + (ky.c2 - dry_dy) * g + ky.c3 * g_right - dry_dz * z_rate
        b = self.env.release_gain * dry_dz * n
        return g, f, b

    def refined(self, factor: int) -> "WallModel":
        """The same physical model on a factor-times finer mesh."""
        if factor == 1:
            return self
        return WallModel.build(self.geometry.refined(factor), self.transport,
                               self.env, self.kinetics)

    def restrict_indices(self, factor: int) -> np.ndarray:
        """0-based indices of the fine nodes coincident with this model's nodes.

        Call on the coarse model; fine node j = factor * i for 1-based i.
        """
        return np.arange(1, self.q + 1) * factor - 1
