"""Effective drift, diffusion matrix and the one-dimensional Burgers coefficient."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import cell, torus
from .errors import DimensionUnsupported, NotCoercive
from .torus import TorusField


def compute_drift_c(alpha1: TorusField, f0: TorusField) -> np.ndarray:
    """c = <α1 f0>, the value that makes the first-order cell problem solvable."""
    alpha = alpha1.as_vector()
    axes = tuple(range(1, alpha.dim + 1))
    return (alpha.values * f0.values[None]).mean(axis=axes)


def compute_eta_direct(alpha1: TorusField, c, f1: TorusField) -> np.ndarray:
    alpha = alpha1.as_vector()
    c = np.atleast_1d(np.asarray(c, dtype=float))
    n = alpha.dim
    eta = np.eye(n)
    for i in range(n):
        for j in range(n):
            eta[i, j] -= ((alpha.values[i] - c[i]) * f1.values[j]).mean()
    return eta


def compute_eta_quadratic(alpha1: TorusField, c, chi: TorusField, f0: TorusField) -> np.ndarray:
    """Matrix Q of the form ξ ↦ <f0 |ξ + ∇(χ·ξ)|²>."""
    n = f0.dim
    grad_chi = np.stack([torus.gradient(chi.values[i]) for i in range(n)])  # [i, k] = ∂_k χ_i
    g = np.swapaxes(grad_chi, 0, 1) + np.eye(n).reshape((n, n) + (1,) * n)
    g = g.reshape(n, n, -1)
    q = np.einsum("kip,kjp,p->ij", g, g, f0.values.ravel()) / f0.values.size
    q = 0.5 * (q + q.T)
    lam = np.linalg.eigvalsh(q)
    if lam.min() <= 0:
        raise NotCoercive(f"quadratic form has eigenvalue {lam.min():.3e}")
    return q


def compute_a(alpha1: TorusField, alpha2: TorusField, c, f0: TorusField, g1: TorusField) -> float:
    if f0.dim != 1:
        raise DimensionUnsupported("the coefficient a exists only for N=1")
    a1 = alpha1.as_scalar().values
    a2 = alpha2.as_scalar().values
    c = float(np.atleast_1d(c)[0])
    return float((a2 * f0.values**2).mean() + ((a1 - c) * g1.values).mean())


def factorize(eta) -> tuple[np.ndarray, np.ndarray, float]:
    """P with P Pᵀ = S = (η+ηᵀ)/2, the eigenvalues of S and det S."""
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    s = 0.5 * (eta + eta.T)
    lam, vecs = np.linalg.eigh(s)
    if lam.min() <= 1e-12 * np.trace(s):
        raise NotCoercive(f"symmetrized diffusion has eigenvalue {lam.min():.3e}")
    p = vecs * np.sqrt(lam)[None, :]
    return p, lam, float(np.prod(lam))


@dataclass(frozen=True)
class EffectiveCoefficients:
    c: np.ndarray
    eta: np.ndarray
    a: float | None
    P: np.ndarray
    lambdas: np.ndarray
    detS: float
    residuals: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.eta.shape[0]

    @property
    def eta_sym(self) -> np.ndarray:
        return 0.5 * (self.eta + self.eta.T)

    @classmethod
    def from_eta(cls, eta, a: float | None = None, c=None) -> "EffectiveCoefficients":
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        p, lam, det = factorize(eta)
        n = eta.shape[0]
        if n != 1:
            a = None
        c = np.zeros(n) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
        return cls(c=c, eta=eta, a=None if a is None else float(a), P=p, lambdas=lam, detS=det)

    def report(self) -> dict:
        return {
            "N": self.dim,
            "c": self.c.tolist(),
            "eta": self.eta.tolist(),
            "eta_sym": self.eta_sym.tolist(),
            "a": self.a,
            "lambdas": self.lambdas.tolist(),
            "detS": self.detS,
            "residuals": dict(self.residuals),
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        rep = self.report()
        rows = ["key,value", f"N,{rep['N']}"]
        rows += [f"c_{i + 1},{v!r}" for i, v in enumerate(rep["c"])]
        for name in ("eta", "eta_sym"):
            for i, row in enumerate(rep[name]):
                rows += [f"{name}_{i + 1}{j + 1},{v!r}" for j, v in enumerate(row)]
        rows.append(f"a,{'' if rep['a'] is None else repr(rep['a'])}")
        rows += [f"lambda_{i + 1},{v!r}" for i, v in enumerate(rep["lambdas"])]
        rows.append(f"detS,{rep['detS']!r}")
        rows += [f"residual_{k},{float(v)!r}" for k, v in sorted(rep["residuals"].items())]
        return "\n".join(rows) + "\n"


def homogenize(alpha1: TorusField, alpha2: TorusField | None = None,
               alpha3: TorusField | None = None, **kw) -> tuple[EffectiveCoefficients, cell.CellData]:
    """Solve every corrector for the Taylor data and assemble the coefficients."""
    alpha1 = alpha1.as_vector()
    n = alpha1.dim
    f0 = cell.solve_f0(alpha1, **kw)
    c = compute_drift_c(alpha1, f0)
    f1 = cell.solve_f1(alpha1, c, f0, **kw)
    chi = cell.solve_chi(alpha1, c, f0, **kw)
    eta = compute_eta_direct(alpha1, c, f1)
    q = compute_eta_quadratic(alpha1, c, chi, f0)
    g1 = a = None
    if n == 1:
        if alpha2 is None:
            alpha2 = TorusField(np.zeros(alpha1.resolution), 1)
        g1 = cell.solve_g1(alpha1, alpha2, f0, **kw)
        a = compute_a(alpha1, alpha2, c, f0, g1)
    op = cell.CellOperator(alpha1)
    residuals = {
        "f0": op.residual(f0.values, np.zeros(op.shape)),
        "eta_cross": float(np.max(np.abs(0.5 * (eta + eta.T) - q))),
    }
    p, lam, det = factorize(eta)
    coeffs = EffectiveCoefficients(c=c, eta=eta, a=a, P=p, lambdas=lam, detS=det,
                                   residuals=residuals)
    data = cell.CellData(alpha1=alpha1, f0=f0, c=c, f1=f1, chi=chi, alpha2=alpha2,
                         alpha3=alpha3, g1=g1)
    return coeffs, data
