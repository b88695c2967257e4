"""Stationary density of a controlled diffusion and measure-weighted costs.

The density is the probability null vector of the transposed generator
matrix, assembled with exactly the same upwind stencils and conservative
wall closure as policy evaluation.  That shared assembly is deliberate: it
makes the average cost under the optimally controlled density reproduce the
eigenvalue to solver precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .grid import Grid, check_vector_field
from .hamiltonian import HamiltonianModel, PotentialSpec, running_cost
from .operators import assemble_generator

ADJOINT_TOL = 1e-10


class ReducibleChainError(RuntimeError):
    """The adjoint null space is not one-dimensional positive."""


@dataclass
class DensityField:
    rho: np.ndarray  # (N,), zero on the boundary layer
    grid: Grid

    def mass(self) -> float:
        return float(self.rho.sum() * self.grid.spacing**self.grid.dim)


def stationary_density(grid: Grid, control: np.ndarray) -> DensityField:
    """Probability null vector of the transposed generator under a control.

    Solves A^T rho = 0 with the mass normalization sum(rho) h^d = 1 by
    replacing the origin row with the mass row; because the conservative
    closure gives A zero row sums, the replaced row's residual is controlled
    by the others and the full adjoint residual stays below 1e-10.
    """
    control = check_vector_field(control, grid)
    A, _ = assemble_generator(grid, control)  # state-constraint closure only
    at = A.T.tocsr()
    nint = grid.num_interior
    origin = grid.interior_index[grid.origin_id]
    hd = grid.spacing**grid.dim

    keep = np.ones(nint, dtype=bool)
    keep[origin] = False
    mass_row = sparse.csr_matrix((np.full(nint, hd), (np.zeros(nint, dtype=int), np.arange(nint))), shape=(1, nint))
    system = sparse.vstack([at[np.flatnonzero(keep)], mass_row], format="csc")
    b = np.zeros(nint)
    b[-1] = 1.0
    rho_int = spsolve(system, b)
    if not np.all(np.isfinite(rho_int)):
        raise ReducibleChainError("adjoint solve returned non-finite values")

    resid = np.abs(at @ rho_int).max() / max(np.abs(rho_int).max(), 1.0)
    if resid > ADJOINT_TOL:
        raise ReducibleChainError(
            f"adjoint residual {resid:.3e} exceeds {ADJOINT_TOL:.1e}; "
            "null space is not a clean one-dimensional eigenvector"
        )
    if rho_int.min() <= 0:
        floor = -1e-12 * rho_int.max()
        if rho_int.min() < floor:
            raise ReducibleChainError(
                f"adjoint null vector is not positive (min {rho_int.min():.3e}); "
                "chain appears reducible or the domain is too large for the "
                "density's dynamic range"
            )
        rho_int = np.maximum(rho_int, 0.0)
    rho_int /= rho_int.sum() * hd

    rho = np.zeros(grid.num_nodes)
    rho[grid.interior_ids] = rho_int
    return DensityField(rho=rho, grid=grid)


@dataclass
class GridMeasure:
    """Nonnegative weights on (x-node, control-atom) pairs with total mass 1."""

    weights: sparse.csr_matrix  # (num_nodes, num_atoms)
    xi_atoms: np.ndarray  # (num_atoms, d)
    grid: Grid
    clipped: int = 0  # nodes whose control fell outside the atom hull
    info: Optional[dict] = None

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def x_marginal(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()


def pair_measure(
    density: DensityField, control: np.ndarray, xi_atoms: np.ndarray
) -> GridMeasure:
    """Lift a density to the product grid: mass rho(x) h^d at the atom nearest
    to control(x).

    Controls outside the axis-aligned hull of the atoms are clipped to the
    nearest atom and counted.
    """
    grid = density.grid
    control = check_vector_field(control, grid)
    xi_atoms = np.atleast_2d(np.asarray(xi_atoms, dtype=float))
    if xi_atoms.shape[1] != grid.dim:
        raise ValueError("control atoms have wrong dimension")
    from scipy.spatial import cKDTree

    support = np.flatnonzero(density.rho > 0)
    tree = cKDTree(xi_atoms)
    _, nearest = tree.query(control[support])
    lo, hi = xi_atoms.min(axis=0), xi_atoms.max(axis=0)
    outside = np.any(
        (control[support] < lo - 1e-12) | (control[support] > hi + 1e-12), axis=1
    )
    hd = grid.spacing**grid.dim
    weights = sparse.csr_matrix(
        (density.rho[support] * hd, (support, nearest)),
        shape=(grid.num_nodes, xi_atoms.shape[0]),
    )
    return GridMeasure(
        weights=weights,
        xi_atoms=xi_atoms,
        grid=grid,
        clipped=int(outside.sum()),
    )


def exact_pair_measure(density: DensityField, control: np.ndarray) -> GridMeasure:
    """Pair measure whose atoms are the control's own node values (no snapping)."""
    grid = density.grid
    control = check_vector_field(control, grid)
    support = np.flatnonzero(density.rho > 0)
    atoms = control[support]
    hd = grid.spacing**grid.dim
    weights = sparse.csr_matrix(
        (density.rho[support] * hd, (support, np.arange(support.size))),
        shape=(grid.num_nodes, support.size),
    )
    return GridMeasure(weights=weights, xi_atoms=atoms, grid=grid, clipped=0)


def average_cost(
    density: DensityField,
    control: np.ndarray,
    model: HamiltonianModel,
    potential: PotentialSpec,
) -> float:
    """Integral of the running cost F(x, control(x)) against the density."""
    grid = density.grid
    control = check_vector_field(control, grid)
    ids = np.flatnonzero(density.rho > 0)
    costs = np.atleast_1d(running_cost(model, potential, grid.coords[ids], control[ids]))
    return float((costs * density.rho[ids]).sum() * grid.spacing**grid.dim)
