"""Node-to-layer mesh and the lumped finite-difference coefficient tables.

Each node i carries three rates (c1, c2, c3) so that the transport part of
the node ODE reads

    dc_i/dt = c1_i * c_{i-1} + c2_i * c_i + c3_i * c_{i+1}

with c_0 the lumen boundary value.  Interior nodes use the upwind
advection / central diffusion stencil

    c1 = (1 - sigma) V / h + D / h^2
    c2 = -(1 - sigma) V / h - 2 D / h^2 - k_r
    c3 = D / h^2

evaluated with the node's own layer properties.  Five nodes get special
forms: the first node after each of the three layer interfaces, the last
Intima node, and the outflow node q.  Interface-entry nodes receive
advective inflow at the upstream layer's rate while discharging and
reacting at their own layer's rates, with the diffusivities of the two
adjacent layers mixed; node q drops both the advective and diffusive
outflow to its absent right neighbour.  This pairing makes every
advective link donor-consistent, so all matrix column sums equal the
negated local reaction rate and the transport matrices are Hurwitz for
any physically valid parameter set.  Valid parameters always give
c1, c3 >= 0 and c2 <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .params import LAYER_NAMES, SpeciesTransport, WallGeometry


def build_mesh(geometry: WallGeometry) -> np.ndarray:
    """Map each of the q nodes to its layer index (1..4)."""
    layers = np.empty(geometry.node_count, dtype=np.int8)
    start = 0
    for k, count in enumerate(geometry.layer_nodes, start=1):
        layers[start:start + count] = k
        start += count
    return layers


@dataclass(frozen=True)
class LumpedCoefficients:
    """Per-node stencil rates (1/s) for one species."""

    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray

    def check_signs(self, name: str = "species"):
        bad = np.flatnonzero((self.c1 < 0) | (self.c3 < 0) | (self.c2 > 0))
        if bad.size:
            i = int(bad[0])
            raise ParameterError(
                f"coefficient sign condition violated for {name} at node {i + 1}: "
                f"c1={self.c1[i]!r} c2={self.c2[i]!r} c3={self.c3[i]!r}")


def build_coefficients(geometry: WallGeometry, transport: SpeciesTransport,
                       filtration_velocity: float) -> LumpedCoefficients:
    """Build the per-node (c1, c2, c3) table for one species.

    The optional ``geometry.symmetric_interfaces`` switch additionally
    applies the mixed-diffusivity treatment at the last node before each
    interface (off by default; only the five standard special cases are
    used otherwise).
    """
    if filtration_velocity < 0:
        raise ParameterError("filtration velocity must be >= 0")
    h = geometry.mesh_size
    q = geometry.node_count
    b1, b2, b3, _ = geometry.layer_bounds
    sigma = transport.reflection
    diff = transport.diffusivity
    react = transport.reaction_rate
    adv = [(1.0 - s) * filtration_velocity / h for s in sigma]
    dif = [d / h ** 2 for d in diff]

    layers = build_mesh(geometry)
    c1 = np.empty(q)
    c2 = np.empty(q)
    c3 = np.empty(q)
    for i in range(q):
        l = layers[i] - 1
        c1[i] = adv[l] + dif[l]
        c2[i] = -adv[l] - 2.0 * dif[l] - react[l]
        c3[i] = dif[l]

    def exit_node(i, own, down):
        # last node before an interface: own advection/reaction, mixed diffusion
        c1[i] = adv[own] + dif[own]
        c2[i] = -adv[own] - (dif[own] + dif[down]) - react[own]
        c3[i] = dif[down]

    if geometry.symmetric_interfaces:
        exit_node(b1 - 1, 0, 1)
        exit_node(b3 - 1, 2, 3)

    # the five standard special cases, later rules win on degenerate meshes
    c1[b1] = adv[0] + dif[0]                   # first Intima node: upstream inflow,
    c2[b1] = -adv[1] - (dif[0] + dif[1]) - react[1]  # own-layer outflow and loss
    c3[b1] = dif[1]
    exit_node(b2 - 1, 1, 2)                    # last Intima node
    c1[b2] = adv[1] + dif[2]                   # first IEL node: upstream advection into
    c2[b2] = -adv[2] - 2.0 * dif[2] - react[2]  # the node, own-layer dynamics otherwise
    c3[b2] = dif[2]
    c1[b3] = adv[2] + dif[2]                   # first Media node: left advection/diffusion
    c2[b3] = -adv[3] - (dif[2] + dif[3]) - react[3]  # in, own-layer loss
    c3[b3] = dif[3]
    c1[q - 1] = adv[3] + dif[3]                # outflow node q
    c2[q - 1] = -dif[3] - react[3]
    c3[q - 1] = 0.0

    coeffs = LumpedCoefficients(c1, c2, c3)
    coeffs.check_signs(transport.name)
    return coeffs


def layer_slices(geometry: WallGeometry) -> dict[str, slice]:
    """0-based node slices per layer name."""
    bounds = (0,) + geometry.layer_bounds
    return {name: slice(bounds[k], bounds[k + 1]) for k, name in enumerate(LAYER_NAMES)}
