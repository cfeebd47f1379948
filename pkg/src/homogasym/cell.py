"""Periodic cell problems for the operator L = -Δ + div(α ·) and its adjoint.

The solves use GMRES right-preconditioned by the inverse Laplacian on the
mean-zero subspace, so the Krylov residual is the true residual of L.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import torus
from .errors import CompatibilityViolated, DimensionUnsupported, NonConvergence, NotPositive
from .torus import TorusField

log = logging.getLogger(__name__)

TOL_CELL = 1e-10
COMPAT_THRESHOLD = 1e-9
MIN_RESOLUTION = 16


class CellOperator:
    """Discrete L and L* for a fixed drift, with dealiased products."""

    def __init__(self, drift: TorusField, dealias: bool = True):
        drift = drift.as_vector()
        if min(drift.resolution) < MIN_RESOLUTION:
            raise ValueError(f"cell grids need at least {MIN_RESOLUTION} points per axis")
        self.dim = drift.dim
        self.shape = drift.resolution
        self.size = int(np.prod(self.shape))
        self._alpha = drift.values
        self._dealias = torus.Dealiaser(self.shape) if dealias else None
        if dealias:
            self._alpha_fine = [self._dealias.to_fine(a) for a in self._alpha]

    def _times_alpha(self, i: int, phi: np.ndarray) -> np.ndarray:
        if self._dealias is None:
            return torus.band_limit(self._alpha[i] * phi)
        return self._dealias.from_fine(self._alpha_fine[i] * self._dealias.to_fine(phi))

    def apply(self, phi: np.ndarray) -> np.ndarray:
        out = -torus.laplacian(phi)
        for i in range(self.dim):
            out += torus.derivative(self._times_alpha(i, phi), i)
        return out

    def apply_adjoint(self, psi: np.ndarray) -> np.ndarray:
        out = -torus.laplacian(psi)
        for i in range(self.dim):
            out -= self._times_alpha(i, torus.derivative(psi, i))
        return out

    def residual(self, phi: np.ndarray, rhs: np.ndarray, adjoint: bool = False) -> float:
        """Root-mean-square grid residual."""
        res = (self.apply_adjoint(phi) if adjoint else self.apply(phi)) - rhs
        return float(np.sqrt(np.mean(res**2)))

    def solve_mean_zero(self, rhs: np.ndarray, adjoint: bool = False, tol: float = TOL_CELL,
                        maxiter: int | None = None) -> tuple[np.ndarray, float]:
        """Mean-zero φ with Lφ = rhs (or L*φ = rhs); returns (φ, rms residual)."""
        rhs = torus.band_limit(rhs)
        if not np.any(rhs):
            return np.zeros(self.shape), 0.0
        apply = self.apply_adjoint if adjoint else self.apply
        n = self.size
        maxiter = 10 * n if maxiter is None else maxiter

        def precond(w):
            return -torus.inverse_laplacian(w.reshape(self.shape))

        op = LinearOperator((n, n), matvec=lambda w: apply(precond(w)).ravel(), dtype=float)
        restart = min(n, 120, maxiter)
        # the achievable residual is a round-off floor relative to |rhs|, so
        # GMRES stops on a relative target and refinement passes close any gap
        atol = 0.5 * tol * np.sqrt(n)
        phi = np.zeros(self.shape)
        used = 0
        for _ in range(4):
            target = rhs - apply(phi)
            if np.sqrt(np.mean(target**2)) <= 0.5 * tol or used >= maxiter:
                break
            cycles = max(1, min(8, -(-(maxiter - used) // restart)))
            w, _info = gmres(op, target.ravel(), rtol=1e-14, atol=atol, restart=restart,
                             maxiter=cycles)
            used += cycles * restart
            phi = phi + precond(w)
        res = self.residual(phi, rhs, adjoint)
        if res > tol:
            raise NonConvergence(f"cell solve stalled at residual {res:.3e}", residual=res,
                                 iterations=used)
        return phi, res


@dataclass(frozen=True)
class CellProblem:
    drift: TorusField
    rhs: TorusField
    kind: str = "direct"
    normalization: str = "mean-zero"
    f0: TorusField | None = None

    def __post_init__(self):
        if self.kind not in ("direct", "adjoint"):
            raise ValueError(f"unknown cell problem kind {self.kind!r}")
        if self.normalization not in ("mean-zero", "mean-one"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


def solve_f0(alpha1: TorusField, tol: float = TOL_CELL, maxiter: int | None = None,
             dealias: bool = True) -> TorusField:
    """Positive periodic solution of Lf0 = 0 with <f0> = 1."""
    op = CellOperator(alpha1, dealias)
    ones = np.ones(op.shape)
    g, _ = op.solve_mean_zero(-op.apply(ones), tol=tol, maxiter=maxiter)
    f0 = ones + g
    f0 = f0 / f0.mean()
    res = op.residual(f0, np.zeros(op.shape))
    if res > tol:
        raise NonConvergence(f"f0 residual {res:.3e} above {tol:.1e}", residual=res)
    if f0.min() <= 0:
        raise NotPositive(f"f0 has minimum {f0.min():.3e}; increase the cell resolution")
    return TorusField(f0, op.dim)


def _project(rhs: np.ndarray, weight: np.ndarray | None) -> np.ndarray:
    if weight is None:
        mean = rhs.mean()
        fix = np.full_like(rhs, mean)
    else:
        mean = (rhs * weight).mean()
        fix = np.full_like(rhs, mean)
    if abs(mean) > COMPAT_THRESHOLD:
        raise CompatibilityViolated(f"right-hand side has solvability defect {mean:.3e}")
    return rhs - fix


def solve_cell(problem: CellProblem, tol: float = TOL_CELL, maxiter: int | None = None,
               dealias: bool = True) -> TorusField:
    """Solve a direct or adjoint cell problem with the requested normalization.

    For the direct operator the solvability condition is <rhs> = 0 and the
    kernel is spanned by f0; for the adjoint it is <rhs f0> = 0 with the
    constants as kernel. Defects up to 1e-9 are projected away.
    """
    op = CellOperator(problem.drift, dealias)
    adjoint = problem.kind == "adjoint"
    rhs = problem.rhs.as_scalar().values if problem.rhs.dim == 1 else problem.rhs.values
    f0 = problem.f0
    if f0 is None and (adjoint or problem.normalization == "mean-one"):
        f0 = solve_f0(problem.drift, tol, maxiter, dealias)
    rhs = _project(rhs, f0.values if adjoint else None)
    phi, _ = op.solve_mean_zero(rhs, adjoint, tol, maxiter)
    if problem.normalization == "mean-one":
        phi = phi + (np.ones(op.shape) if adjoint else f0.values)
    return TorusField(phi, op.dim)


def solve_f1(alpha1: TorusField, c, f0: TorusField, **kw) -> TorusField:
    """First-order correctors, one per axis, stacked as a vector field."""
    alpha = alpha1.as_vector()
    c = np.atleast_1d(np.asarray(c, dtype=float))
    comps = []
    for i in range(alpha.dim):
        rhs = -f0.values * (alpha.values[i] - c[i]) + 2.0 * torus.derivative(f0.values, i)
        comps.append(solve_cell(CellProblem(alpha, TorusField(rhs, alpha.dim)), **kw).values)
    return TorusField(np.stack(comps), alpha.dim)


def solve_g1(alpha1: TorusField, alpha2: TorusField, f0: TorusField, **kw) -> TorusField:
    """Mean-zero g1 with L g1 = -(α2 f0²)' (one space dimension)."""
    if alpha1.dim != 1:
        raise DimensionUnsupported("g1 is defined only for N=1")
    a2 = alpha2.as_scalar().values
    rhs = -torus.derivative(a2 * f0.values**2, 0)
    return solve_cell(CellProblem(alpha1.as_vector(), TorusField(rhs, 1)), **kw)


def solve_chi(alpha1: TorusField, c, f0: TorusField | None = None, **kw) -> TorusField:
    """Adjoint correctors χ_j with L*χ_j = α_j - c_j and <χ_j> = 0."""
    alpha = alpha1.as_vector()
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if f0 is None:
        f0 = solve_f0(alpha, **kw)
    comps = []
    for j in range(alpha.dim):
        rhs = TorusField(alpha.values[j] - c[j], alpha.dim)
        prob = CellProblem(alpha, rhs, kind="adjoint", f0=f0)
        comps.append(solve_cell(prob, **kw).values)
    return TorusField(np.stack(comps), alpha.dim)


@dataclass(frozen=True)
class CellData:
    """Correctors shared by the effective coefficients and the two-scale ansatz."""

    alpha1: TorusField
    f0: TorusField
    c: np.ndarray
    f1: TorusField
    chi: TorusField
    alpha2: TorusField | None = None
    alpha3: TorusField | None = None
    g1: TorusField | None = None

    @property
    def dim(self) -> int:
        return self.f0.dim
