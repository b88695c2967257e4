"""Uniform lattice geometry and finite-difference stencils.

The domain is the box [-R, R]^d truncated to the largest symmetric lattice
with spacing h that contains the origin as a node.  Nodes are ordered
lexicographically by axis index (axis 0 slowest), and every field is a flat
numpy array over that ordering: shape (N,) for scalar fields, (N, d) for
vector fields.  The outermost node layer is the boundary; all stencil
operators write zeros there and leave boundary handling to the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MAX_NODES = 10**7


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric lattice on [-R, R]^d with d in {1, 2}."""

    dim: int
    radius: float
    spacing: float
    half_width: int  # nodes per axis = 2*half_width + 1

    @cached_property
    def nodes_per_axis(self) -> int:
        return 2 * self.half_width + 1

    @cached_property
    def num_nodes(self) -> int:
        return self.nodes_per_axis**self.dim

    @cached_property
    def axis_coords(self) -> np.ndarray:
        return (np.arange(self.nodes_per_axis) - self.half_width) * self.spacing

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (N, d), lexicographic node order."""
        mesh = np.meshgrid(*(self.axis_coords,) * self.dim, indexing="ij")
        out = np.stack([m.ravel() for m in mesh], axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        flat = mask.ravel()
        flat.setflags(write=False)
        return flat

    @cached_property
    def interior_ids(self) -> np.ndarray:
        ids = np.flatnonzero(self.interior_mask)
        ids.setflags(write=False)
        return ids

    @cached_property
    def num_interior(self) -> int:
        return self.interior_ids.size

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Map global node id -> interior-local id, -1 on the boundary."""
        out = np.full(self.num_nodes, -1, dtype=np.int64)
        out[self.interior_ids] = np.arange(self.num_interior)
        out.setflags(write=False)
        return out

    @cached_property
    def origin_id(self) -> int:
        n = self.nodes_per_axis
        return sum(self.half_width * n**k for k in range(self.dim))

    @cached_property
    def axis_strides(self) -> tuple[int, ...]:
        n = self.nodes_per_axis
        return tuple(n ** (self.dim - 1 - a) for a in range(self.dim))

    def interior_neighbor(self, axis: int, side: int) -> np.ndarray:
        """Interior-local id of each interior node's neighbor along an axis.

        side is -1 or +1; entries are -1 where the neighbor is a boundary
        node.  Used by the operator assembly.
        """
        stride = self.axis_strides[axis]
        return self.interior_index[self.interior_ids + side * stride]

    def nearest_interior(self, node_ids: np.ndarray) -> np.ndarray:
        """Global id of the interior node obtained by clamping each axis index."""
        n = self.nodes_per_axis
        rem = np.asarray(node_ids)
        out = np.zeros_like(rem)
        for stride in self.axis_strides:
            idx = rem // stride
            rem = rem % stride
            out += np.clip(idx, 1, n - 2) * stride
        return out


def build_grid(dim: int, radius: float, spacing: float) -> Grid:
    """Construct the symmetric lattice covering [-R, R]^d.

    Nodes per axis is 2*floor(R/h) + 1, so the origin is always a node and
    the lattice spans [-R, R] to within one spacing.  Solver-grade grids
    should keep radius >= 4*spacing; construction only requires one interior
    node.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if not (spacing > 0 and radius >= spacing):
        raise ValueError(
            f"need radius >= spacing > 0, got radius={radius}, spacing={spacing}"
        )
    half = int(np.floor(radius / spacing + 1e-12))
    n = 2 * half + 1
    if n**dim > MAX_NODES:
        raise ValueError(f"grid would have {n**dim} nodes (limit {MAX_NODES})")
    return Grid(dim=dim, radius=float(radius), spacing=float(spacing), half_width=half)


def check_scalar_field(values: np.ndarray, grid: Grid) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.num_nodes,):
        raise ValueError(f"scalar field shape {values.shape} != ({grid.num_nodes},)")
    if not np.all(np.isfinite(values)):
        raise ValueError("scalar field contains non-finite values")
    return values


def check_vector_field(values: np.ndarray, grid: Grid) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.num_nodes, grid.dim):
        raise ValueError(
            f"vector field shape {values.shape} != ({grid.num_nodes}, {grid.dim})"
        )
    if not np.all(np.isfinite(values)):
        raise ValueError("vector field contains non-finite values")
    return values


def _as_mesh(values: np.ndarray, grid: Grid) -> np.ndarray:
    return values.reshape(grid.shape)


def laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered second-difference Laplacian; zero on the boundary layer."""
    values = check_scalar_field(values, grid)
    u = _as_mesh(values, grid)
    h2 = grid.spacing**2
    out = np.zeros_like(u)
    core = (slice(1, -1),) * grid.dim
    for a in range(grid.dim):
        lo = tuple(slice(0, -2) if k == a else slice(1, -1) for k in range(grid.dim))
        hi = tuple(slice(2, None) if k == a else slice(1, -1) for k in range(grid.dim))
        out[core] += (u[hi] - 2.0 * u[core] + u[lo]) / h2
    return out.ravel()


def gradient_central(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered first differences on interior nodes; zero on the boundary."""
    values = check_scalar_field(values, grid)
    u = _as_mesh(values, grid)
    h = grid.spacing
    out = np.zeros((grid.num_nodes, grid.dim))
    core = (slice(1, -1),) * grid.dim
    grad = np.zeros(grid.shape)
    for a in range(grid.dim):
        lo = tuple(slice(0, -2) if k == a else slice(1, -1) for k in range(grid.dim))
        hi = tuple(slice(2, None) if k == a else slice(1, -1) for k in range(grid.dim))
        grad[...] = 0.0
        grad[core] = (u[hi] - u[lo]) / (2.0 * h)
        out[:, a] = grad.ravel()
    return out


def advect_upwind(values: np.ndarray, drift: np.ndarray, grid: Grid) -> np.ndarray:
    """drift . Du with first-order upwind differences selected per axis.

    Positive drift components use the backward difference, negative ones the
    forward difference, so the assembled operator matrix is monotone.  Zero
    on the boundary layer.
    """
    values = check_scalar_field(values, grid)
    drift = check_vector_field(drift, grid)
    u = _as_mesh(values, grid)
    h = grid.spacing
    out = np.zeros(grid.shape)
    core = (slice(1, -1),) * grid.dim
    for a in range(grid.dim):
        lo = tuple(slice(0, -2) if k == a else slice(1, -1) for k in range(grid.dim))
        hi = tuple(slice(2, None) if k == a else slice(1, -1) for k in range(grid.dim))
        w = drift[:, a].reshape(grid.shape)[core]
        back = (u[core] - u[lo]) / h
        fwd = (u[hi] - u[core]) / h
        out[core] += np.where(w > 0, back, np.where(w < 0, fwd, 0.0)) * w
    return out.ravel()


def gradient_inward_fallback(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Gradient for control extraction: centered inside, one-sided at walls.

    At interior nodes adjacent to the boundary the centered stencil would
    reference a boundary value, so the difference toward the interior is used
    instead.  Zero on the boundary layer.
    """
    values = check_scalar_field(values, grid)
    u = _as_mesh(values, grid)
    h = grid.spacing
    out = np.zeros((grid.num_nodes, grid.dim))
    core = (slice(1, -1),) * grid.dim
    for a in range(grid.dim):
        lo = tuple(slice(0, -2) if k == a else slice(1, -1) for k in range(grid.dim))
        hi = tuple(slice(2, None) if k == a else slice(1, -1) for k in range(grid.dim))
        grad = np.zeros(grid.shape)
        grad[core] = (u[hi] - u[lo]) / (2.0 * h)
        # wall-adjacent rows along this axis: replace by inward one-sided
        first = tuple(slice(1, 2) if k == a else slice(1, -1) for k in range(grid.dim))
        second = tuple(slice(2, 3) if k == a else slice(1, -1) for k in range(grid.dim))
        grad[first] = (u[second] - u[first]) / h
        last = tuple(slice(-2, -1) if k == a else slice(1, -1) for k in range(grid.dim))
        prev = tuple(slice(-3, -2) if k == a else slice(1, -1) for k in range(grid.dim))
        grad[last] = (u[last] - u[prev]) / h
        out[:, a] = grad.ravel()
    return out


def one_sided_differences(values: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis backward and forward differences with inward wall substitution.

    Returns (D_minus, D_plus), each of shape (N, d), zero on the boundary
    layer.  At interior nodes adjacent to a wall the missing one-sided
    difference is replaced by the inward one, matching the state-constraint
    operator closure, so that for any control w the upwind pairing
    sum_a w_a * (D_minus if w_a > 0 else D_plus) reproduces the assembled
    advection row exactly.
    """
    values = check_scalar_field(values, grid)
    u = _as_mesh(values, grid)
    h = grid.spacing
    dminus = np.zeros((grid.num_nodes, grid.dim))
    dplus = np.zeros((grid.num_nodes, grid.dim))
    core = (slice(1, -1),) * grid.dim
    for a in range(grid.dim):
        lo = tuple(slice(0, -2) if k == a else slice(1, -1) for k in range(grid.dim))
        hi = tuple(slice(2, None) if k == a else slice(1, -1) for k in range(grid.dim))
        back = np.zeros(grid.shape)
        fwd = np.zeros(grid.shape)
        back[core] = (u[core] - u[lo]) / h
        fwd[core] = (u[hi] - u[core]) / h
        first = tuple(slice(1, 2) if k == a else slice(1, -1) for k in range(grid.dim))
        last = tuple(slice(-2, -1) if k == a else slice(1, -1) for k in range(grid.dim))
        back[first] = fwd[first]
        fwd[last] = back[last]
        dminus[:, a] = back.ravel()
        dplus[:, a] = fwd.ravel()
    return dminus, dplus


def fill_boundary_nearest(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Copy each boundary node's value from its nearest interior node."""
    out = np.array(values, dtype=float, copy=True)
    boundary = np.flatnonzero(~grid.interior_mask)
    out[boundary] = out[grid.nearest_interior(boundary)]
    return out
