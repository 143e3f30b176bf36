"""Incompressible Navier-Stokes residuals and dimensional helpers.

The residual triple is the left-hand side of the 2-D momentum equations plus
the continuity equation, evaluated on predicted fields via the autodiff
engine. Exact solutions make all three components vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


class PoisonedParametersError(Exception):
    """Weights, activations or derivatives are inf or nan."""


class OutOfValidityError(Exception):
    """Inputs are outside the validity region of an empirical formula."""


@dataclass(frozen=True)
class FluidConstants:
    nu: float = 0.001  # kinematic viscosity

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("kinematic viscosity must be positive")


@dataclass(frozen=True)
class ResidualTriple:
    r_momentum_x: float
    r_momentum_y: float
    r_continuity: float


def reynolds(d, c: FluidConstants = FluidConstants()) -> float:
    """Re = u_inlet * d_y / nu."""
    return d.u_inlet * d.d_y / c.nu


def shedding_frequency(d, c: FluidConstants = FluidConstants()) -> float:
    """Empirical vortex-shedding frequency 0.21 (1 - 21/Re) u_inlet / d_y.

    Valid only above Re = 21 (the formula changes sign there).
    """
    re = reynolds(d, c)
    if re <= 21.0:
        raise OutOfValidityError(f"shedding formula needs Re > 21, got Re = {re:g}")
    return 0.21 * (1.0 - 21.0 / re) * (d.u_inlet / d.d_y)


def residual_of_fields(u: ad.Node, v: ad.Node, p: ad.Node,
                       x: ad.Node, y: ad.Node, t: ad.Node,
                       c: FluidConstants = FluidConstants()) -> ResidualTriple:
    """Residual triple for arbitrary scalar field graphs over leaves x, y, t.

    Derivatives are taken by reverse mode, twice for the viscous terms. The
    fields can be anything built from engine ops: a network prediction or a
    hand-built analytic solution.
    """
    ux, uy, ut = ad.grad(u, [x, y, t])
    vx, vy, vt = ad.grad(v, [x, y, t])
    px, py = ad.grad(p, [x, y])
    uxx = ad.grad(ux, [x])[0]
    uyy = ad.grad(uy, [y])[0]
    vxx = ad.grad(vx, [x])[0]
    vyy = ad.grad(vy, [y])[0]

    uval, vval = u.value.item(), v.value.item()
    r_x = (ut.value.item() + uval * ux.value.item() + vval * uy.value.item()
           + px.value.item() - c.nu * (uxx.value.item() + uyy.value.item()))
    r_y = (vt.value.item() + uval * vx.value.item() + vval * vy.value.item()
           + py.value.item() - c.nu * (vxx.value.item() + vyy.value.item()))
    r_c = ux.value.item() + vy.value.item()
    triple = ResidualTriple(r_x, r_y, r_c)
    if not all(np.isfinite(r) for r in (r_x, r_y, r_c)):
        raise PoisonedParametersError("non-finite residual")
    return triple


def residual_at(params, x: float, y: float, t: float, d,
                c: FluidConstants = FluidConstants()) -> ResidualTriple:
    """Residual of the surrogate's predicted fields at one space-time point."""
    from . import model  # deferred: model imports this module for the helpers

    u, v, p = model.predict_graph(params, x, y, t, d)
    leaves = ad.tagged_leaves(u)
    return residual_of_fields(u, v, p, leaves["x"], leaves["y"], leaves["t"], c)


def residual_nodes(derivs: dict, c: FluidConstants = FluidConstants()):
    """Residual graph nodes from a derivative-stream forward pass.

    ``derivs`` is the dict returned by ``model.graph_forward_with_derivs``;
    the result keeps weight gradients flowing, which is what the training
    loss needs. Returns (r_x, r_y, r_c) nodes of shape (n, 1).
    """
    nu = c.nu
    r_x = (derivs["u_t"] + derivs["u"] * derivs["u_x"] + derivs["v"] * derivs["u_y"]
           + derivs["p_x"] - nu * (derivs["u_xx"] + derivs["u_yy"]))
    r_y = (derivs["v_t"] + derivs["u"] * derivs["v_x"] + derivs["v"] * derivs["v_y"]
           + derivs["p_y"] - nu * (derivs["v_xx"] + derivs["v_yy"]))
    r_c = derivs["u_x"] + derivs["v_y"]
    return r_x, r_y, r_c


def taylor_green_graph(xv: float, yv: float, tv: float, nu: float = 0.001):
    """Hand-built graphs of the decaying Taylor-Green vortex fields.

    u = -cos x sin y e^(-2 nu t), v = sin x cos y e^(-2 nu t),
    p = -1/4 (cos 2x + cos 2y) e^(-4 nu t); an exact solution, so the
    residual triple vanishes identically.
    """
    x = ad.variable(xv, tag="x")
    y = ad.variable(yv, tag="y")
    t = ad.variable(tv, tag="t")
    decay = ad.exp(-2.0 * nu * t)
    u = -(ad.cos(x) * ad.sin(y)) * decay
    v = ad.sin(x) * ad.cos(y) * decay
    p = -0.25 * (ad.cos(2.0 * x) + ad.cos(2.0 * y)) * ad.exp(-4.0 * nu * t)
    return u, v, p, x, y, t
