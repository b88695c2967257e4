"""Hamiltonians, their convex conjugates, optimal control maps, running cost.

Two closed-form families are supported: the pure power |p|^g / g with g > 1,
and its perturbation by a bounded drift, b(x).p + |p|^g / g.  Both have
exact conjugates, which keeps the duality-gap checks sharp.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import Grid

CONJUGATE_TOL = 1e-14


@dataclass(frozen=True)
class HamiltonianModel:
    kind: str  # "pure_power" | "drift_power"
    gamma: float
    gamma_star: float
    drift: Optional[Callable[[np.ndarray], np.ndarray]] = None
    drift_bound: float = 0.0
    eps_grad: float = 1e-12

    def drift_at(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.drift is None:
            return np.zeros_like(x)
        b = np.asarray(self.drift(x), dtype=float)
        if b.shape != x.shape:
            raise ValueError(f"drift returned shape {b.shape}, expected {x.shape}")
        return b


def pure_power(gamma: float, eps_grad: float = 1e-12) -> HamiltonianModel:
    """Hamiltonian |p|^gamma / gamma."""
    gamma = float(gamma)
    if not gamma > 1.0:
        raise ValueError("gamma must exceed 1")
    gstar = gamma / (gamma - 1.0)
    if abs(1.0 / gamma + 1.0 / gstar - 1.0) > CONJUGATE_TOL:
        raise ValueError("conjugate exponent identity failed")
    return HamiltonianModel("pure_power", gamma, gstar, eps_grad=eps_grad)


def drift_power(
    gamma: float,
    drift: Callable[[np.ndarray], np.ndarray],
    drift_bound: float,
    eps_grad: float = 1e-12,
) -> HamiltonianModel:
    """Hamiltonian b(x).p + |p|^gamma / gamma with sup|b| <= drift_bound."""
    base = pure_power(gamma, eps_grad)
    if not np.isfinite(drift_bound):
        raise ValueError("drift bound must be finite")
    return HamiltonianModel(
        "drift_power", base.gamma, base.gamma_star, drift, float(drift_bound), eps_grad
    )


def _norm(v: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.atleast_2d(v), axis=-1)


def hamiltonian_value(model: HamiltonianModel, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """H(x, p); vectorized over leading axes."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    out = _norm(p) ** model.gamma / model.gamma
    if model.kind == "drift_power":
        out = out + np.sum(model.drift_at(x) * p, axis=-1)
    return out if out.size > 1 else float(out[0])


def lagrangian_value(model: HamiltonianModel, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Convex conjugate L(x, xi); for the drift family |xi - b(x)|^g* / g*."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if model.kind == "drift_power":
        xi = xi - model.drift_at(x)
    out = _norm(xi) ** model.gamma_star / model.gamma_star
    return out if out.size > 1 else float(out[0])


def optimal_control(model: HamiltonianModel, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Gradient of H in p: the maximizing control |p|^(g-2) p (+ b(x)).

    The power term is continuous at p = 0 for gamma > 1 and is set to zero
    there; |p| below eps_grad is treated as zero to avoid overflow in the
    singular exponent when gamma < 2.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    mag = _norm(p)
    safe = np.where(mag > model.eps_grad, mag, 1.0)
    factor = np.where(mag > model.eps_grad, safe ** (model.gamma - 2.0), 0.0)
    out = factor[..., None] * p
    if model.kind == "drift_power":
        out = out + model.drift_at(x)
    return out if out.shape[0] > 1 else out[0]


def duality_gap(
    model: HamiltonianModel, x: np.ndarray, xi: np.ndarray, p: np.ndarray
) -> np.ndarray:
    """H(x,p) + L(x,xi) - xi.p, nonnegative with equality at xi = D_p H."""
    xi2 = np.atleast_2d(np.asarray(xi, dtype=float))
    p2 = np.atleast_2d(np.asarray(p, dtype=float))
    out = (
        hamiltonian_value(model, x, p2)
        + lagrangian_value(model, x, xi2)
        - np.sum(xi2 * p2, axis=-1)
    )
    out = np.atleast_1d(out)
    return out if out.size > 1 else float(out[0])


# ----------------------------------------------------------------------
# Potentials


@dataclass(frozen=True)
class PotentialSpec:
    """Running-cost potential f with gradient, evaluable at arbitrary points.

    Closed-form families are validated to satisfy f >= 1; tabulated data is
    taken as-is (scaled instances legitimately dip below 1) and yields its
    gradient by centered differences when not supplied.
    """

    family: str
    value_fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Callable[[np.ndarray], np.ndarray]
    params: dict

    def values(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.value_fn(x), dtype=float)

    def gradients(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.grad_fn(x), dtype=float)

    def on_grid(self, grid: Grid) -> np.ndarray:
        return self.values(grid.coords)

    def grad_on_grid(self, grid: Grid) -> np.ndarray:
        return self.gradients(grid.coords)


def _power_grad(x: np.ndarray, exponent: float, coeff: float) -> np.ndarray:
    # gradient of coeff*|x|^exponent, continuous at 0 for exponent > 1
    r = _norm(x)
    safe = np.where(r > 1e-300, r, 1.0)
    fac = np.where(r > 1e-300, coeff * exponent * safe ** (exponent - 2.0), 0.0)
    return fac[..., None] * x


def quadratic_power_potential(gamma: float) -> PotentialSpec:
    """f = 1 + |x|^gamma / gamma, the family with value function |x|^2 / 2."""
    gamma = float(gamma)
    return PotentialSpec(
        "quadratic_power",
        lambda x: 1.0 + _norm(x) ** gamma / gamma,
        lambda x: _power_grad(x, gamma, 1.0 / gamma),
        {"gamma": gamma},
    )


def power_beta_potential(beta: float) -> PotentialSpec:
    """f = 1 + |x|^beta."""
    beta = float(beta)
    if beta <= 0:
        raise ValueError("beta must be positive")
    return PotentialSpec(
        "power_beta",
        lambda x: 1.0 + _norm(x) ** beta,
        lambda x: _power_grad(x, beta, 1.0),
        {"beta": beta},
    )


def constant_potential(value: float) -> PotentialSpec:
    value = float(value)
    if value < 1.0:
        raise ValueError("constant potential must be >= 1")
    return PotentialSpec(
        "constant",
        lambda x: np.full(x.shape[0], value),
        lambda x: np.zeros_like(x),
        {"value": value},
    )


def _quartic_sine_values(x: np.ndarray) -> np.ndarray:
    r = _norm(x)
    return r**2 + np.sin(r**4) + 2.0


def _quartic_sine_grad(x: np.ndarray) -> np.ndarray:
    r = _norm(x)
    fac = 2.0 + 4.0 * r**2 * np.cos(r**4)
    return fac[..., None] * x


def _exp_abs_values(x: np.ndarray) -> np.ndarray:
    return 1.0 + np.exp(_norm(x))


def _exp_abs_grad(x: np.ndarray) -> np.ndarray:
    r = _norm(x)
    safe = np.where(r > 1e-300, r, 1.0)
    fac = np.where(r > 1e-300, np.exp(r) / safe, 0.0)
    return fac[..., None] * x


_NAMED = {
    "quartic_sine": (_quartic_sine_values, _quartic_sine_grad),
    "exp_abs": (_exp_abs_values, _exp_abs_grad),
}


def named_potential(name: str) -> PotentialSpec:
    """Built-in audit potentials: quartic_sine (|x|^2 + sin|x|^4 + 2), exp_abs (1 + e^|x|)."""
    if name not in _NAMED:
        raise ValueError(f"unknown potential {name!r}; options: {sorted(_NAMED)}")
    val, grad = _NAMED[name]
    return PotentialSpec("named", val, grad, {"name": name})


def tabulated_potential(
    grid: Grid, values: np.ndarray, grads: Optional[np.ndarray] = None
) -> PotentialSpec:
    """Potential sampled on a grid; gradient falls back to centered differences.

    Point evaluation snaps to the nearest node, which is exact for the
    solver-facing uses (all evaluations happen at nodes of the same grid).
    """
    from .grid import check_scalar_field, gradient_central

    values = check_scalar_field(values, grid)
    if grads is None:
        grads = gradient_central(values, grid)
        bnd = np.flatnonzero(~grid.interior_mask)
        grads[bnd] = grads[grid.nearest_interior(bnd)]
    grads = np.asarray(grads, dtype=float)

    def lookup_ids(x: np.ndarray) -> np.ndarray:
        idx = np.rint(x / grid.spacing).astype(np.int64) + grid.half_width
        idx = np.clip(idx, 0, grid.nodes_per_axis - 1)
        flat = np.zeros(x.shape[0], dtype=np.int64)
        for a, stride in enumerate(grid.axis_strides):
            flat += idx[:, a] * stride
        return flat

    return PotentialSpec(
        "tabulated",
        lambda x: values[lookup_ids(x)],
        lambda x: grads[lookup_ids(x)],
        {"grid": grid},
    )


def running_cost(
    model: HamiltonianModel,
    potential: PotentialSpec,
    x: np.ndarray,
    xi: np.ndarray,
) -> np.ndarray:
    """F(x, xi) = f(x) + L(x, xi)."""
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    out = potential.values(x2) + np.atleast_1d(lagrangian_value(model, x2, xi))
    return out if out.size > 1 else float(out[0])
