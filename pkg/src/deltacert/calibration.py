"""Recover unknown line data and machine-frame conventions from equilibrium data.

Two routes are provided:

* :func:`recover_line_and_load` solves for the line impedance and load power
  in closed form from two equilibria of a generator-line-load system.  It
  uses only port quantities, so it does not depend on the machine model.
* :func:`calibrate` grid-searches ``(r, x)`` for every frame convention and
  keeps the triple whose computed equilibrium lies closest to the target.
"""

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
from scipy.optimize import minimize

from .errors import EquilibriumNotFoundError, InvalidInputError, WellPosednessError, IllPosedNetworkError
from .devices import ROTATIONS

REPRODUCTION_TOL = 5e-3
VARIANTS = tuple(product(sorted(ROTATIONS), ("d", "q"), (1, -1)))


def recover_line_and_load(equilibria):
    """Line impedance ``Z`` and load power ``S`` from equilibria of a two-bus system.

    Each equilibrium is ``(V_D1, V_Q1, I_D, I_Q)``: generator-bus voltage and
    the current drawn by the load (equal to the line current).  Uses
    ``S = V_1 conj(I) - Z |I|^2``, which is linear in ``(S, Z)``; two or more
    equilibria give a (least-squares) solution.

    Returns
    -------
    (Z, S, residual) : complex, complex, float
    """
    rows = np.atleast_2d(np.asarray(equilibria, float))
    if rows.shape[0] < 2 or rows.shape[1] != 4:
        raise InvalidInputError("need at least two equilibria given as (V_D1, V_Q1, I_D, I_Q)")
    V = rows[:, 0] + 1j * rows[:, 1]
    I = rows[:, 2] + 1j * rows[:, 3]
    A = np.stack([np.ones_like(V), np.abs(I) ** 2], axis=1)
    b = V * np.conj(I)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    S, Z = sol[0], sol[1]
    return complex(Z), complex(S), float(np.max(np.abs(A @ sol - b)))


@dataclass
class VariantFit:
    variant: tuple
    r: float
    x: float
    residual: float
    equilibrium: np.ndarray = None


@dataclass
class CalibrationResult:
    best: VariantFit
    fits: list
    tol: float = REPRODUCTION_TOL
    closed_form: dict = field(default_factory=dict)

    @property
    def reproduced(self):
        return self.best.residual <= self.tol

    @property
    def triple(self):
        return self.best.variant, self.best.r, self.best.x

    def summary(self):
        rot, fc, sgn = self.best.variant
        out = {
            "rotation": rot,
            "field_current": fc,
            "integral_sign": int(sgn),
            "r": float(self.best.r),
            "x": float(self.best.x),
            "residual": float(self.best.residual),
            "reproduced": bool(self.reproduced),
            "tolerance": self.tol,
            "variants": [
                {"rotation": f.variant[0], "field_current": f.variant[1], "integral_sign": int(f.variant[2]),
                 "r": float(f.r), "x": float(f.x), "residual": float(f.residual)}
                for f in self.fits
            ],
        }
        if self.closed_form:
            out["closed_form"] = self.closed_form
        return out


def equilibrium_residual(factory, variant, r, x, target):
    """Max-norm distance between the equilibrium found near ``target`` and ``target``."""
    target = np.asarray(target, float)
    try:
        asm = factory(variant, r, x)
        from .dae import find_equilibrium

        n = asm.n
        eq = find_equilibrium(asm, target[:n], target[n:])
    except (EquilibriumNotFoundError, WellPosednessError, IllPosedNetworkError, InvalidInputError):
        return np.inf, None
    z = eq.as_vector()
    return float(np.max(np.abs(z - target))), z


def calibrate(factory, target, r_values=None, x_values=None, variants=VARIANTS, refine=True,
              tol=REPRODUCTION_TOL):
    """Search frame convention and line data reproducing a target equilibrium.

    Parameters
    ----------
    factory : callable
        ``factory(variant, r, x)`` returns a ``SystemAssembly``; ``variant`` is
        ``(rotation, field_current, integral_sign)``.
    target : array_like
        Target ``(x*, u*)`` stacked.
    r_values, x_values : array_like, optional
        Search lattice, by default 0.01 steps on ``(0, 0.5]``.
    refine : bool
        Polish the best lattice point of each variant with Nelder-Mead,
        constrained to the box spanned by the lattice.
    """
    r_values = np.arange(1, 51) * 0.01 if r_values is None else np.asarray(r_values, float)
    x_values = np.arange(1, 51) * 0.01 if x_values is None else np.asarray(x_values, float)
    if np.any(r_values <= 0) or np.any(x_values <= 0):
        raise InvalidInputError("search lattice must be positive")
    fits = []
    for var in variants:
        best = VariantFit(tuple(var), np.nan, np.nan, np.inf)
        for r, xl in product(r_values, x_values):
            res, z = equilibrium_residual(factory, var, r, xl, target)
            if res < best.residual:
                best = VariantFit(tuple(var), float(r), float(xl), res, z)
        if refine and np.isfinite(best.residual):
            r_hi, x_hi = r_values.max(), x_values.max()

            def obj(v, var=var):
                # stay inside the searched box
                if v[0] <= 0 or v[1] <= 0 or v[0] > r_hi or v[1] > x_hi:
                    return 1e3
                res = equilibrium_residual(factory, var, v[0], v[1], target)[0]
                return res if np.isfinite(res) else 1e3
            sol = minimize(obj, [best.r, best.x], method="Nelder-Mead",
                           options={"xatol": 1e-7, "fatol": 1e-9, "maxiter": 400})
            if sol.fun < best.residual:
                res, z = equilibrium_residual(factory, var, sol.x[0], sol.x[1], target)
                best = replace(best, r=float(sol.x[0]), x=float(sol.x[1]), residual=res, equilibrium=z)
        fits.append(best)
    fits.sort(key=lambda f: f.residual)
    return CalibrationResult(fits[0], fits, tol)
