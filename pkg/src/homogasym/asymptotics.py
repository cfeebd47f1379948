"""Self-similar rescaling, the two-scale approximate solution and long-time diagnostics.

Conventions: R = e^τ = sqrt(1 + 2t), x = (y - ct)/R and the fast variable is
z = R x + c (R² - 1)/2, which equals y on the pulled-back grid.
"""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import hermite_e
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from . import cell, torus
from .effective import EffectiveCoefficients
from .errors import CompatibilityViolated, OutOfDomain, WeightTooSmall
from .profiles import SelfSimilarProfile, _box_derivative, stationary_profile
from .torus import TorusField


# -- rescaling ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RescaledState:
    tau: float
    t: float
    c: np.ndarray
    axes: tuple
    U: np.ndarray

    @property
    def R(self) -> float:
        return math.exp(self.tau)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shift(self) -> np.ndarray:
        return self.c * (self.R**2 - 1.0) / 2.0

    @property
    def cell_volume(self) -> float:
        return float(np.prod([ax[1] - ax[0] for ax in self.axes]))

    def integral(self, values: np.ndarray | None = None) -> float:
        vals = self.U if values is None else values
        return float(vals.sum() * self.cell_volume)

    def z_axes(self) -> list[np.ndarray]:
        return [self.R * ax + s for ax, s in zip(self.axes, self.shift)]


def _edges(centers: np.ndarray) -> np.ndarray:
    h = centers[1] - centers[0]
    return np.concatenate([centers - 0.5 * h, [centers[-1] + 0.5 * h]])


def _remap_axis(values: np.ndarray, src_edges: np.ndarray, dst_edges: np.ndarray,
                axis: int) -> np.ndarray:
    """Conservative transfer of cell masses along one axis (piecewise-constant density)."""
    vals = np.moveaxis(values, axis, -1)
    masses = vals * np.diff(src_edges)
    rows = masses.reshape(-1, masses.shape[-1])

    def cumulative(m):
        return np.concatenate([np.zeros((m.shape[0], 1)), np.cumsum(m, axis=1)], axis=1)

    def at_dst(cum):
        return np.stack([np.interp(dst_edges, src_edges, row) for row in cum])

    cum_abs = cumulative(np.abs(rows))
    caught = at_dst(cum_abs)
    leaked = cum_abs[:, -1] - (caught[:, -1] - caught[:, 0])
    if float(leaked.max(initial=0.0)) > 1e-12 * max(float(cum_abs[:, -1].max(initial=0.0)), 1e-300):
        raise OutOfDomain("rescaled field has mass outside the target grid")
    out = np.diff(at_dst(cumulative(rows)), axis=1) / np.diff(dst_edges)
    out = out.reshape(vals.shape[:-1] + (dst_edges.size - 1,))
    return np.moveaxis(out, -1, axis)


def to_self_similar(f: np.ndarray, y_axes, t: float, c, target_axes=None) -> RescaledState:
    """U(τ, x) = (1+2t)^{N/2} f(t, R x + ct) with τ = log R, R = sqrt(1+2t).

    Without ``target_axes`` the box grid is pulled back exactly, so no
    interpolation takes place. Otherwise cell masses are transferred
    conservatively onto the requested cell-centred grid.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    y_axes = [np.asarray(ax, dtype=float) for ax in y_axes]
    dim = len(y_axes)
    c = np.broadcast_to(np.asarray(c, dtype=float), (dim,)).copy()
    R = math.sqrt(1.0 + 2.0 * t)
    tau = math.log(R)
    x_axes = tuple((ax - ci * t) / R for ax, ci in zip(y_axes, c))
    U = f * R**dim
    if target_axes is None:
        return RescaledState(tau, t, c, x_axes, U)
    vals = U
    for d in range(dim):
        vals = _remap_axis(vals, _edges(x_axes[d]), _edges(np.asarray(target_axes[d])), d)
    return RescaledState(tau, t, c, tuple(np.asarray(a, dtype=float) for a in target_axes), vals)


def from_self_similar(state: RescaledState, y_axes=None) -> tuple[np.ndarray, tuple]:
    """Inverse map; returns (f, y_axes)."""
    R, t = state.R, state.t
    own = tuple(R * ax + ci * t for ax, ci in zip(state.axes, state.c))
    f = state.U / R**state.dim
    if y_axes is None:
        return f, own
    vals = f
    for d in range(state.dim):
        vals = _remap_axis(vals, _edges(own[d]), _edges(np.asarray(y_axes[d])), d)
    return vals, tuple(y_axes)


# -- derivative jets of the profile ---------------------------------------

class GaussianJet:
    """Exact derivatives of M (2π)^{-N/2} detS^{-1/2} exp(-xᵀS⁻¹x/2)."""

    def __init__(self, mass: float, s: np.ndarray):
        self.s = np.atleast_2d(s)
        self.dim = self.s.shape[0]
        self.s_inv = np.linalg.inv(self.s)
        self.norm = mass * (2 * np.pi) ** (-self.dim / 2) / math.sqrt(np.linalg.det(self.s))

    def derivs(self, x: np.ndarray, order: int = 4) -> list[np.ndarray]:
        s = float(self.s[0, 0])
        u = x / math.sqrt(s)
        F = self.norm * np.exp(-0.5 * u**2)
        out = []
        for k in range(order + 1):
            coef = np.zeros(k + 1)
            coef[k] = 1.0
            out.append((-1) ** k * s ** (-k / 2) * hermite_e.hermeval(u, coef) * F)
        return out

    def value_grad_hess(self, axes):
        x = np.meshgrid(*axes, indexing="ij")
        quad = sum(self.s_inv[i, j] * x[i] * x[j] for i in range(self.dim) for j in range(self.dim))
        F = self.norm * np.exp(-0.5 * quad)
        g = [sum(self.s_inv[i, j] * x[j] for j in range(self.dim)) for i in range(self.dim)]
        grad = np.stack([-gi * F for gi in g])
        hess = np.stack([np.stack([(g[i] * g[j] - self.s_inv[i, j]) * F for j in range(self.dim)])
                         for i in range(self.dim)])
        return F, grad, hess


class StationaryJet:
    """One-dimensional F_M: values by spline, derivatives from ηF' = aF² - xF."""

    def __init__(self, prof: SelfSimilarProfile, eta: float, a: float):
        self.dim = 1
        self.eta, self.a = eta, a
        x = prof.axes[0]
        self._lo, self._hi = x[0], x[-1]
        self._spline = CubicSpline(x, prof.values)

    def derivs(self, x: np.ndarray, order: int = 4) -> list[np.ndarray]:
        F = np.where((x >= self._lo) & (x <= self._hi), self._spline(np.clip(x, self._lo, self._hi)), 0.0)
        a, eta = self.a, self.eta
        d = [F]
        d1 = (a * F**2 - x * F) / eta
        d.append(d1)
        d2 = (2 * a * F * d1 - F - x * d1) / eta
        d.append(d2)
        d3 = (2 * a * d1**2 + 2 * a * F * d2 - 2 * d1 - x * d2) / eta
        d.append(d3)
        d4 = (6 * a * d1 * d2 + 2 * a * F * d3 - 3 * d2 - x * d3) / eta
        d.append(d4)
        return d[: order + 1]


class GridJet:
    """Spectral derivatives on the profile grid, interpolated by cubic splines."""

    def __init__(self, prof: SelfSimilarProfile):
        self.dim = prof.dim
        self.prof = prof
        self._length = 2.0 * prof.half_width

    def derivs(self, x: np.ndarray, order: int = 4) -> list[np.ndarray]:
        grid = self.prof.axes[0]
        vals = self.prof.values
        out = []
        for _ in range(order + 1):
            spline = CubicSpline(grid, vals)
            inside = (x >= grid[0]) & (x <= grid[-1])
            out.append(np.where(inside, spline(np.clip(x, grid[0], grid[-1])), 0.0))
            vals = _box_derivative(vals, 0, self._length)
        return out

    def value_grad_hess(self, axes):
        n = self.dim
        F = self.prof.values
        grads = [_box_derivative(F, i, self._length) for i in range(n)]
        hess = [[_box_derivative(grads[j], i, self._length) for j in range(n)] for i in range(n)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

        def interp(v):
            return RegularGridInterpolator(self.prof.axes, v, method="cubic", bounds_error=False,
                                           fill_value=0.0)(pts)

        return (interp(F), np.stack([interp(g) for g in grads]),
                np.stack([np.stack([interp(h) for h in row]) for row in hess]))


def profile_jet(prof: SelfSimilarProfile, coeffs: EffectiveCoefficients):
    if prof.kind == "gaussian":
        return GaussianJet(prof.mass, coeffs.eta_sym)
    if prof.kind == "stationary" and prof.dim == 1:
        return StationaryJet(prof, float(coeffs.eta[0, 0]), float(coeffs.a or 0.0))
    return GridJet(prof)


# -- two-scale cell data ----------------------------------------------------

@dataclass(frozen=True)
class TwoScaleData:
    """Cell fields of U0, U1, U2 and the Taylor data used by the remainder."""

    dim: int
    c: np.ndarray
    f0: TorusField
    f1: TorusField
    g1: TorusField | None
    u2: dict
    alphas: tuple = ()

    def sample(self, fld: TorusField, z_axes, deriv=None) -> np.ndarray:
        return fld.sample(z_axes, deriv)


def _mean_zero_solve(alpha1: TorusField, rhs: np.ndarray, dim: int) -> tuple[TorusField, float]:
    mean = float(rhs.mean())
    sol = cell.solve_cell(cell.CellProblem(alpha1, TorusField(rhs - mean, dim)))
    return sol, mean


def two_scale_data(cell_data: cell.CellData, coeffs: EffectiveCoefficients,
                   alphas=None) -> TwoScaleData:
    """Solve the second-order cell problems of the approximate solution.

    Each right-hand side is split by the x-dependence it multiplies; its mean
    is removed, and the removed means must add up to the homogenized equation.
    """
    n = cell_data.dim
    a1 = cell_data.alpha1.as_vector()
    f0, f1, c = cell_data.f0.values, cell_data.f1.values, np.atleast_1d(cell_data.c)
    d = torus.derivative
    u2, means = {}, {}

    def solve(key, rhs):
        u2[key], means[key] = _mean_zero_solve(a1, rhs, n)

    solve("Q", f0)
    for i in range(n):
        for j in range(n):
            rhs = -(a1.values[i] - c[i]) * f1[j] + 2.0 * d(f1[j], i)
            solve(f"d2F_{i + 1}{j + 1}", rhs)
    a2 = None if cell_data.alpha2 is None else cell_data.alpha2.as_vector().values
    g1 = None
    if n == 1:
        g1 = cell_data.g1.values
        a2s = a2[0] if a2 is not None else np.zeros_like(f0)
        a3s = cell_data.alpha3.as_vector().values[0] if cell_data.alpha3 is not None \
            else np.zeros_like(f0)
        solve("dF2", -(a1.values[0] - c[0]) * g1 + 2.0 * d(g1, 0) - a2s * f0**2
              - d(a2s * f0 * f1[0], 0))
        solve("F3", -2.0 * d(a2s * f0 * g1, 0) - d(a3s * f0**3, 0))
    elif n == 2 and a2 is not None:
        solve("F2", -sum(d(a2[i] * f0**2, i) for i in range(n)))

    # the removed means reproduce the homogenized coefficients
    defect = abs(means["Q"] - 1.0)
    for i in range(n):
        for j in range(n):
            defect = max(defect, abs(means[f"d2F_{i + 1}{j + 1}"] - (coeffs.eta[i, j] - (i == j))))
    if n == 1:
        defect = max(defect, abs(means["dF2"] + (coeffs.a or 0.0)))
    if defect > 1e-8:
        raise CompatibilityViolated(f"second-order cell data disagree with coefficients ({defect:.2e})")
    if alphas is None:
        alphas = tuple(x for x in (cell_data.alpha1, cell_data.alpha2, cell_data.alpha3) if x is not None)
    return TwoScaleData(n, c, cell_data.f0, cell_data.f1,
                        None if g1 is None else cell_data.g1, u2,
                        tuple(al.as_vector() for al in alphas))


# -- approximate solution ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class ApproxSolution:
    tau: float
    R: float
    axes: tuple
    U0: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    F: SelfSimilarProfile | None = None

    @property
    def values(self) -> np.ndarray:
        return self.U0 + self.U1 / self.R + self.U2 / self.R**2


def _x_functions_1d(D, eta: float, a: float) -> dict:
    """X(x) and its first two derivatives for each U2 key (one dimension)."""
    F, F1, F2, F3, F4 = D
    sq = (F**2, 2 * F * F1, 2 * F1**2 + 2 * F * F2)
    dsq = (sq[1], sq[2], 6 * F1 * F2 + 2 * F * F3)
    return {
        "Q": tuple((1 - eta) * fd + a * s for fd, s in zip((F2, F3, F4), dsq)),
        "d2F_11": (F2, F3, F4),
        "dF2": dsq,
        "F3": (F**3, 3 * F**2 * F1, 6 * F * F1**2 + 3 * F**2 * F2),
        "F2": sq,
    }


def build_uapp(F: SelfSimilarProfile, tsd: TwoScaleData, coeffs: EffectiveCoefficients, tau: float,
               tau_offset: float = 0.0, axes=None) -> ApproxSolution:
    """Assemble U0 + U1/R + U2/R² at z = R x + c(R²-1)/2 with R = e^{tau_offset+tau}."""
    R = math.exp(tau_offset + tau)
    axes = F.axes if axes is None else tuple(np.asarray(a, dtype=float) for a in axes)
    z_axes = [R * ax + ci * (R**2 - 1) / 2 for ax, ci in zip(axes, tsd.c)]
    jet = profile_jet(F, coeffs)
    sample = lambda fld: fld.sample(z_axes)  # noqa: E731
    n = tsd.dim
    if n == 1:
        D = jet.derivs(axes[0], 4)
        X = _x_functions_1d(D, float(coeffs.eta[0, 0]), float(coeffs.a or 0.0))
        f0 = sample(tsd.f0)
        U0 = f0 * D[0]
        U1 = sample(tsd.f1)[0] * D[1] + sample(tsd.g1) * D[0] ** 2
        U2 = sum(sample(tsd.u2[k]) * X[k][0] for k in ("Q", "d2F_11", "dF2", "F3"))
    else:
        Fv, grad, hess = jet.value_grad_hess(axes)
        f1 = sample(tsd.f1)
        U0 = sample(tsd.f0) * Fv
        U1 = sum(f1[j] * grad[j] for j in range(n))
        lap = sum(hess[i, i] for i in range(n))
        xq = lap - sum(coeffs.eta[i, j] * hess[i, j] for i in range(n) for j in range(n))
        U2 = sample(tsd.u2["Q"]) * xq
        for i, j in itertools.product(range(n), range(n)):
            U2 = U2 + sample(tsd.u2[f"d2F_{i + 1}{j + 1}"]) * hess[i, j]
        if "F2" in tsd.u2:
            U2 = U2 + sample(tsd.u2["F2"]) * Fv**2
    return ApproxSolution(float(tau), R, axes, U0, U1, U2, F)


def uapp_remainder(F: SelfSimilarProfile, tsd: TwoScaleData, coeffs: EffectiveCoefficients,
                   tau: float, x: np.ndarray) -> np.ndarray:
    """Residual of the rescaled equation evaluated on U^app[F_M] (one dimension).

    The rescaled equation reads
        ∂τU - ∂x(xU) - ∂xxU + R ∂x((α1 - c)U) + R² ∂x B̃(z, U/R) = 0,
    with B̃(z, w) = Σ_{k≥2} α_k(z) w^k and total x-derivatives. Every term
    of U^app is a product φ(z) X(x); it is differentiated exactly with
    ∂x → ∂x + R∂z and ∂τ|x → ∂τ + (Rx + cR²)∂z.
    """
    if tsd.dim != 1:
        raise ValueError("the remainder is implemented for N=1")
    R = math.exp(tau)
    c = float(tsd.c[0])
    z = [R * x + c * (R**2 - 1) / 2]
    jet = profile_jet(F, coeffs)
    D = jet.derivs(x, 4)
    X = _x_functions_1d(D, float(coeffs.eta[0, 0]), float(coeffs.a or 0.0))
    terms = [
        (0, tsd.f0, (D[0], D[1], D[2])),
        (1, TorusField(tsd.f1.values[0], 1), (D[1], D[2], D[3])),
        (1, tsd.g1, X["F2"]),
    ] + [(2, tsd.u2[k], X[k]) for k in ("Q", "d2F_11", "dF2", "F3")]
    alpha = [al.as_scalar() for al in tsd.alphas]
    a1 = alpha[0].sample(z)
    a1p = alpha[0].sample(z, [1])
    W = np.zeros_like(x)
    Wx = np.zeros_like(x)  # partial derivatives at fixed z
    Wz = np.zeros_like(x)
    lin = np.zeros_like(x)
    for k, phi, (X0, X1, X2) in terms:
        p0, p1, p2 = (phi.sample(z, [o]) for o in (0, 1, 2))
        w = R ** (-k)
        W += w * p0 * X0
        Wx += w * p0 * X1
        Wz += w * p1 * X0
        # ∂τ of R^{-k}, -W, -x ∂xW, cR²∂zW (the Rx∂z pieces cancel), -(∂x + R∂z)²W,
        # R(α1-c)∂xW and R²∂z((α1-c)W)
        lin += w * (-k * p0 * X0 - p0 * X0 - x * p0 * X1 + c * R**2 * p1 * X0
                    - p0 * X2 - 2 * R * p1 * X1 - R**2 * p2 * X0
                    + R * (a1 - c) * p0 * X1 + R**2 * (a1p * p0 + (a1 - c) * p1) * X0)
    nonlin = np.zeros_like(x)
    wv = W / R
    for k, al in enumerate(alpha[1:], start=2):
        ak = al.sample(z)
        akp = al.sample(z, [1])
        # R² (∂x + R∂z)[α_k (W/R)^k]
        nonlin += R**2 * (k * ak * wv ** (k - 1) * (Wx + R * Wz) / R + R * akp * wv**k)
    return lin + nonlin


def remainder_l1(F: SelfSimilarProfile, tsd: TwoScaleData, coeffs: EffectiveCoefficients,
                 tau: float, points_per_period: int = 40) -> float:
    """∫|U^rem(τ, x)| dx on a midpoint grid resolving the fast period 1/R."""
    R = math.exp(tau)
    L = F.half_width
    n = int(math.ceil(2 * L * R * points_per_period))
    h = 2 * L / n
    x = -L + (np.arange(n) + 0.5) * h
    total = 0.0
    for start in range(0, n, 16384):
        total += float(np.abs(uapp_remainder(F, tsd, coeffs, tau, x[start:start + 16384])).sum())
    return total * h


def fit_decay_exponent(taus, values) -> float:
    """Slope of log(values) against τ by least squares."""
    return float(np.polyfit(np.asarray(taus), np.log(np.asarray(values)), 1)[0])


# -- diagnostics ------------------------------------------------------------

def compute_V(state: RescaledState, f0: TorusField) -> np.ndarray:
    if f0.values.min() <= 0:
        raise ValueError("f0 must be positive")
    return state.U / f0.sample(state.z_axes())


def diag_l1(state: RescaledState, f0: TorusField, fm_values: np.ndarray) -> float:
    """∫ |U - f0(z) F_M(x)| dx with F_M given on the state's grid."""
    return state.integral(np.abs(state.U - f0.sample(state.z_axes()) * fm_values))


def diag_quasi_lyapunov(state: RescaledState, uapp) -> float:
    vals = uapp.values if isinstance(uapp, ApproxSolution) else uapp
    return state.integral(np.abs(state.U - vals))


def diag_weighted(V: np.ndarray, axes, m: float | None = None) -> tuple[float, float]:
    """(∫ V² (1+|x|²)^{m/2}, ∫ |∇V|²) on a uniform tensor grid."""
    n = len(axes)
    m = 2 * n + 4 if m is None else m
    if m <= 2 * (n + 1):
        raise WeightTooSmall(f"weight exponent m={m} must exceed 2(N+1)={2 * (n + 1)}")
    x = np.meshgrid(*axes, indexing="ij")
    vol = float(np.prod([ax[1] - ax[0] for ax in axes]))
    r2 = sum(xi**2 for xi in x)
    l2w = float((V**2 * (1 + r2) ** (m / 2)).sum() * vol)
    spacing = [float(ax[1] - ax[0]) for ax in axes]
    grads = np.gradient(V, *spacing) if n > 1 else [np.gradient(V, spacing[0])]
    grad_l2 = float(sum((g**2).sum() for g in grads) * vol)
    return l2w, grad_l2


def diag_moment4(f: np.ndarray, y_axes, t: float, c) -> float:
    """(1+2t)^{-2} ∫ |f| |y - ct|⁴ dy."""
    y = np.meshgrid(*y_axes, indexing="ij")
    c = np.broadcast_to(np.asarray(c, dtype=float), (len(y_axes),))
    r2 = sum((yi - ci * t) ** 2 for yi, ci in zip(y, c))
    vol = float(np.prod([ax[1] - ax[0] for ax in y_axes]))
    return float((np.abs(f) * r2**2).sum() * vol / (1 + 2 * t) ** 2)


def diag_energy(state: RescaledState, tsd: TwoScaleData, m: float) -> float:
    """∫ U²/Ũ with Ũ = f0(z) h_m(x) + e^{-τ} f1(z)·∇h_m(x), h_m = (1+|x|²)^{-m/2}.

    Returns nan when Ũ is not positive on the grid (small τ).
    """
    z = state.z_axes()
    x = np.meshgrid(*state.axes, indexing="ij")
    r2 = sum(xi**2 for xi in x)
    hm = (1 + r2) ** (-m / 2)
    f1 = tsd.f1.sample(z)
    ut = tsd.f0.sample(z) * hm
    for i in range(state.dim):
        ut = ut + math.exp(-state.tau) * f1[i] * (-m * x[i] / (1 + r2) * hm)
    if ut.min() <= 0:
        return float("nan")
    return state.integral(state.U**2 / ut)


def fit_quasi_lyapunov(taus, H) -> float:
    """Smallest Ĉ ≥ 0 with H(τ_{k+1}) ≤ H(τ_k) + Ĉ e^{-τ_k} for consecutive outputs."""
    taus, H = np.asarray(taus), np.asarray(H)
    incr = (H[1:] - H[:-1]) * np.exp(taus[:-1])
    return float(max(0.0, incr.max(initial=0.0)))


def check_quasi_lyapunov(taus, H, C: float, rtol: float = 1e-12) -> bool:
    """H(τ') ≤ H(τ) + Ĉ e^{-τ} for every pair τ < τ' of outputs."""
    taus, H = np.asarray(taus), np.asarray(H)
    for i in range(len(taus)):
        bound = H[i] + C * math.exp(-taus[i]) + rtol * max(1.0, abs(H[i]))
        if np.any(H[i + 1:] > bound):
            return False
    return True


COLUMNS_BASE = ("t", "tau", "l1_error", "H", "weighted_l2", "grad_l2", "moment4", "mass")


@dataclass
class DiagnosticsSeries:
    dim: int = 1
    rows: list = field(default_factory=list)

    @property
    def columns(self) -> tuple:
        com = ("com_x",) if self.dim == 1 else tuple(f"com_x{i + 1}" for i in range(self.dim))
        return COLUMNS_BASE + com + ("linf",)

    def append(self, row: dict):
        if self.rows and row["tau"] <= self.rows[-1]["tau"]:
            raise ValueError("tau must increase strictly along a series")
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        if name.startswith("com_x"):
            idx = 0 if name == "com_x" else int(name[5:]) - 1
            return np.array([r["com"][idx] for r in self.rows])
        return np.array([r[name] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            vals = [r[k] for k in COLUMNS_BASE] + list(r["com"]) + [r["linf"]]
            buf.write(",".join(repr(float(v)) for v in vals) + "\n")
        return buf.getvalue()

    def quasi_lyapunov(self) -> tuple[float, bool]:
        taus, H = self.column("tau"), self.column("H")
        C = fit_quasi_lyapunov(taus, H)
        return C, check_quasi_lyapunov(taus, H, C)

    def ell_estimate(self) -> tuple[float, float]:
        """Final l1_error and its slope against τ over the last quarter of outputs."""
        taus, l1 = self.column("tau"), self.column("l1_error")
        k = max(2, len(taus) // 4)
        slope = float(np.polyfit(taus[-k:], l1[-k:], 1)[0]) if len(taus) >= 2 else 0.0
        return float(l1[-1]), slope


class DiagnosticsContext:
    """Everything needed to evaluate one DiagnosticsSeries row from a box field."""

    def __init__(self, tsd: TwoScaleData, coeffs: EffectiveCoefficients, mass: float,
                 weight_m: float | None = None, profile_points: int | None = None):
        self.tsd = tsd
        self.coeffs = coeffs
        self.mass = mass
        self.weight_m = 2 * tsd.dim + 4 if weight_m is None else weight_m
        self.F_M = stationary_profile(mass, coeffs, n=profile_points)
        self.jet = profile_jet(self.F_M, coeffs)

    def fm_on(self, axes) -> np.ndarray:
        if self.tsd.dim == 1:
            return self.jet.derivs(axes[0], 0)[0]
        return self.jet.value_grad_hess(axes)[0]

    def row(self, t: float, f: np.ndarray, y_axes, u_sup: float) -> dict:
        st = to_self_similar(f, y_axes, t, self.tsd.c)
        fm = self.fm_on(st.axes)
        uapp = build_uapp(self.F_M, self.tsd, self.coeffs, st.tau, axes=st.axes)
        V = compute_V(st, self.tsd.f0)
        l2w, grad = diag_weighted(V, st.axes, self.weight_m)
        y = np.meshgrid(*y_axes, indexing="ij")
        vol = float(np.prod([ax[1] - ax[0] for ax in y_axes]))
        af = np.abs(f)
        weight = af.sum()
        com = [float((yi * af).sum() / weight) if weight > 0 else 0.0 for yi in y]
        return {
            "t": float(t), "tau": st.tau,
            "l1_error": diag_l1(st, self.tsd.f0, fm),
            "H": diag_quasi_lyapunov(st, uapp),
            "weighted_l2": l2w, "grad_l2": grad,
            "moment4": diag_moment4(f, y_axes, t, self.tsd.c),
            "mass": float(f.sum() * vol),
            "com": com,
            "linf": float(u_sup),
        }
