"""Assembly of the discrete drift-diffusion operator -Lap + xi . D.

One assembly routine serves the eigensolver, the stationary-density solve
and the measure program; sharing it is what makes the adjoint identities
between those modules hold to solver precision rather than to O(h).

Closures at the one-node boundary layer:

* ``state_constraint``: no boundary value is referenced.  Diffusion legs
  pointing at the wall are dropped (inward leg only) and advection at a
  wall-adjacent node differences inward regardless of the drift sign.  Every
  row then sums to zero, so the operator is a conservative generator and its
  transpose has a probability null vector.  Off-diagonals stay nonpositive
  as long as |drift| < 1/h, which the solvers check.

* ``dirichlet``: full centered/upwind stencils; legs hitting the boundary
  multiply a pinned value M and are returned as a right-hand-side
  contribution.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .grid import Grid

STATE_CONSTRAINT = "state_constraint"
DIRICHLET_BIG = "dirichlet_big"


def assemble_generator(
    grid: Grid,
    control: np.ndarray,
    boundary_mode: str = STATE_CONSTRAINT,
    dirichlet_value: float = 0.0,
) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Build the interior operator matrix for -Lap + control . D (upwind).

    Args:
        control: drift per node, shape (N, d) or (N_interior, d).
        boundary_mode: one of ``state_constraint`` or ``dirichlet_big``.
        dirichlet_value: pinned boundary value M for ``dirichlet_big``.

    Returns:
        (A, rhs) with A of shape (N_int, N_int) acting on interior values and
        rhs the boundary contribution to move to the right-hand side (zero in
        state-constraint mode).
    """
    if boundary_mode not in (STATE_CONSTRAINT, DIRICHLET_BIG):
        raise ValueError(f"unknown boundary mode {boundary_mode!r}")
    control = np.asarray(control, dtype=float)
    if control.shape == (grid.num_nodes, grid.dim):
        w_int = control[grid.interior_ids]
    elif control.shape == (grid.num_interior, grid.dim):
        w_int = control
    else:
        raise ValueError(f"control shape {control.shape} not understood")

    nint = grid.num_interior
    h = grid.spacing
    inv_h2 = 1.0 / h**2
    ids = np.arange(nint)
    dirichlet = boundary_mode == DIRICHLET_BIG

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    diag = np.zeros(nint)
    rhs = np.zeros(nint)

    neighbors = {
        (a, s): grid.interior_neighbor(a, s) for a in range(grid.dim) for s in (-1, 1)
    }

    # diffusion
    for a in range(grid.dim):
        for s in (-1, 1):
            nb = neighbors[(a, s)]
            inn = nb >= 0
            rows.append(ids[inn])
            cols.append(nb[inn])
            vals.append(np.full(int(inn.sum()), -inv_h2))
            diag[inn] += inv_h2
            if dirichlet:
                out = ~inn
                diag[out] += inv_h2
                rhs[out] += dirichlet_value * inv_h2

    # advection, upwinded by drift sign; s = -1 means backward difference
    for a in range(grid.dim):
        w = w_int[:, a]
        upwind_side = np.where(w > 0, -1, 1)
        active = w != 0
        for s in (-1, 1):
            sel = active & (upwind_side == s)
            nb = neighbors[(a, s)]
            inn = sel & (nb >= 0)
            rows.append(ids[inn])
            cols.append(nb[inn])
            vals.append(-np.abs(w[inn]) / h)
            diag[inn] += np.abs(w[inn]) / h
            out = sel & (nb < 0)
            if dirichlet:
                diag[out] += np.abs(w[out]) / h
                rhs[out] += np.abs(w[out]) / h * dirichlet_value
            else:
                # inward difference on the opposite side, sign-reversed legs
                ob = neighbors[(a, -s)]
                rows.append(ids[out])
                cols.append(ob[out])
                vals.append(np.abs(w[out]) / h)
                diag[out] -= np.abs(w[out]) / h

    rows.append(ids)
    cols.append(ids)
    vals.append(diag)
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nint, nint),
    )
    return A.tocsr(), rhs


def max_stable_drift(grid: Grid) -> float:
    """Drift magnitude beyond which the inward wall closure loses monotonicity."""
    return 1.0 / grid.spacing
