"""Stationary self-similar profiles and the homogenized Fokker-Planck evolution.

Profiles live on a cell-centred grid of [-Lx, Lx]^N. Derivatives used for
residuals are spectral (the profiles decay to round-off at the box edge, so
the periodic extension is smooth); the evolution uses a conservative finite
volume scheme with Scharfetter-Gummel fluxes.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .effective import EffectiveCoefficients
from .errors import BlowUp, ShootingFailed

log = logging.getLogger(__name__)

TOL_PROF = 1e-6
DEFAULT_POINTS = {1: 2048, 2: 256}
BLOWUP_LEVEL = 1e6


def default_half_width(coeffs: EffectiveCoefficients) -> float:
    return 10.0 * max(1.0, float(np.sqrt(np.max(coeffs.lambdas))))


def cell_centers(half_width: float, n: int) -> np.ndarray:
    h = 2.0 * half_width / n
    return -half_width + (np.arange(n) + 0.5) * h


@dataclass(frozen=True, eq=False)
class SelfSimilarProfile:
    """Values of a profile on the tensor grid ``axes`` (cell centres)."""

    axes: tuple
    values: np.ndarray
    mass: float
    coeffs: EffectiveCoefficients | None = None
    kind: str = "grid"  # "gaussian" and "stationary" profiles have exact derivatives

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def spacing(self) -> tuple:
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)

    @property
    def half_width(self) -> float:
        ax = self.axes[0]
        return float(-ax[0] + 0.5 * (ax[1] - ax[0]))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def integral(self, values: np.ndarray | None = None) -> float:
        vals = self.values if values is None else values
        return float(vals.sum() * self.cell_volume)

    def l1_distance(self, other) -> float:
        vals = other.values if isinstance(other, SelfSimilarProfile) else other
        return self.integral(np.abs(self.values - vals))

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def with_values(self, values: np.ndarray, mass: float | None = None) -> "SelfSimilarProfile":
        mass = self.integral(values) if mass is None else mass
        return SelfSimilarProfile(self.axes, values, mass, self.coeffs)

    def decays(self, level: float = 1e-12) -> bool:
        """True when |F| is below ``level`` on the outer 10% band of the box."""
        band = np.zeros(self.values.shape, dtype=bool)
        for d, ax in enumerate(self.axes):
            outer = np.abs(ax) > 0.9 * self.half_width
            shape = [1] * self.dim
            shape[d] = ax.size
            band |= outer.reshape(shape)
        return bool(np.max(np.abs(self.values[band]), initial=0.0) <= level)

    def to_csv(self) -> str:
        cols = [f"x{i + 1}" for i in range(self.dim)] + ["F"]
        grids = [g.ravel() for g in self.mesh()]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row in zip(*grids, self.values.ravel()):
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def make_profile(values_fn, dim: int, half_width: float, n: int | None = None,
                 coeffs: EffectiveCoefficients | None = None) -> SelfSimilarProfile:
    n = DEFAULT_POINTS[dim] if n is None else n
    axes = tuple(cell_centers(half_width, n) for _ in range(dim))
    vals = np.asarray(values_fn(*np.meshgrid(*axes, indexing="ij")), dtype=float)
    prof = SelfSimilarProfile(axes, vals, 0.0, coeffs)
    return prof.with_values(vals)


# -- spectral derivatives on the box ------------------------------------

def _box_derivative(values: np.ndarray, axis: int, length: float) -> np.ndarray:
    n = values.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[axis] = n
    hat = np.fft.fft(values, axis=axis) * (1j * k).reshape(shape)
    return np.real(np.fft.ifft(hat, axis=axis))


def stationary_operator(prof: SelfSimilarProfile, coeffs: EffectiveCoefficients) -> np.ndarray:
    """-Σ η_ij ∂_ij F - div(xF) (+ a ∂_x F² when N=1) on the profile grid."""
    F = prof.values
    length = 2.0 * prof.half_width
    eta = coeffs.eta_sym
    grad = [_box_derivative(F, d, length) for d in range(prof.dim)]
    out = np.zeros_like(F)
    x = prof.mesh()
    for i in range(prof.dim):
        flux_i = sum(eta[i, j] * grad[j] for j in range(prof.dim)) + x[i] * F
        if prof.dim == 1 and coeffs.a:
            flux_i = flux_i - coeffs.a * F**2
        out -= _box_derivative(flux_i, i, length)
    return out


def profile_residual(prof: SelfSimilarProfile, coeffs: EffectiveCoefficients | None = None) -> float:
    coeffs = prof.coeffs if coeffs is None else coeffs
    return float(np.max(np.abs(stationary_operator(prof, coeffs))))


# -- stationary profiles ------------------------------------------------

def gaussian_profile(M: float, coeffs: EffectiveCoefficients, half_width: float | None = None,
                     n: int | None = None) -> SelfSimilarProfile:
    """Mass-M Gaussian stationary state M (2π)^{-N/2} detS^{-1/2} exp(-xᵀS⁻¹x/2)."""
    dim = coeffs.dim
    half_width = default_half_width(coeffs) if half_width is None else half_width
    s_inv = np.linalg.inv(coeffs.eta_sym)
    norm = M * (2.0 * np.pi) ** (-dim / 2) / np.sqrt(coeffs.detS)

    def values(*x):
        quad = sum(s_inv[i, j] * x[i] * x[j] for i in range(dim) for j in range(dim))
        return norm * np.exp(-0.5 * quad)

    prof = make_profile(values, dim, half_width, n, coeffs)
    return SelfSimilarProfile(prof.axes, prof.values, float(M), coeffs, "gaussian")


def _shoot(s: float, x: np.ndarray, eta: float, a: float) -> np.ndarray | None:
    """F on the grid x from F(0)=s > 0, or None when F escapes to infinity.

    Both half-lines are integrated together in the variable t=|x| using
    l = log F, for which ηl' = ±a e^l - t is free of the Gaussian decay.
    """
    left = x < 0
    tl, tr = -x[left][::-1], x[~left]
    t_eval = np.union1d(tl, tr)
    cap = np.log(s) + np.log(1e8)

    def rhs(t, y):
        return [(a * np.exp(y[0]) - t) / eta, (-a * np.exp(y[1]) - t) / eta]

    def escape(t, y):
        return max(y[0], y[1]) - cap

    escape.terminal = True
    sol = solve_ivp(rhs, (0.0, t_eval[-1]), [np.log(s)] * 2, method="DOP853", rtol=1e-13,
                    atol=1e-12, t_eval=t_eval, events=escape)
    if sol.status != 0 or sol.y.shape[1] != t_eval.size:
        return None
    right_vals = np.exp(np.interp(tr, sol.t, sol.y[0]))
    left_vals = np.exp(np.interp(tl, sol.t, sol.y[1]))[::-1]
    return np.concatenate([left_vals, right_vals])


def solve_fm_1d(M: float, eta: float, a: float, half_width: float | None = None,
                n: int | None = None) -> SelfSimilarProfile:
    """Stationary mass-M profile of the one-dimensional viscous Burgers-OU equation.

    The once-integrated equation ηF' = aF² - xF is shot outward from x=0 and
    F(0) is located by a bracketing root search on the grid mass.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    coeffs = EffectiveCoefficients.from_eta([[eta]], a=a)
    half_width = default_half_width(coeffs) if half_width is None else half_width
    n = DEFAULT_POINTS[1] if n is None else n
    x = cell_centers(half_width, n)
    h = x[1] - x[0]
    if M == 0:
        return SelfSimilarProfile((x,), np.zeros(n), 0.0, coeffs, "stationary")
    # F -> -F with a -> -a maps the negative-mass problem onto a positive one
    sgn = 1.0 if M > 0 else -1.0
    a_pos = sgn * a
    target = abs(M)

    def excess(s):
        if s <= 0.0:
            return -target
        vals = _shoot(s, x, eta, a_pos)
        if vals is None or not np.all(np.isfinite(vals)):
            return np.inf
        return vals.sum() * h - target

    lo, hi = 0.0, target / np.sqrt(2.0 * np.pi * eta)
    for _ in range(200):
        if excess(hi) > 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ShootingFailed(f"could not bracket mass {M}")
    # with a != 0 the mass blows up at a finite F(0); bisect until hi is finite
    while not np.isfinite(excess(hi)):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            raise ShootingFailed("mass diverges before reaching the target")
    try:
        s = brentq(excess, lo, hi, xtol=1e-15 * hi, rtol=1e-15, maxiter=200)
    except (ValueError, RuntimeError) as exc:
        raise ShootingFailed(f"root search on F(0) failed: {exc}") from exc
    vals = sgn * _shoot(s, x, eta, a_pos)
    if abs(vals.sum() * h - M) > 1e-10 * max(1.0, target):
        raise ShootingFailed(f"mass mismatch {vals.sum() * h - M:.3e} after root search")
    return SelfSimilarProfile((x,), vals, float(M), coeffs, "stationary")


def stationary_profile(M: float, coeffs: EffectiveCoefficients, half_width: float | None = None,
                       n: int | None = None) -> SelfSimilarProfile:
    """F_M for the given coefficients: nonlinear shooting when N=1 and a≠0."""
    if coeffs.dim == 1 and coeffs.a:
        prof = solve_fm_1d(M, float(coeffs.eta[0, 0]), coeffs.a, half_width, n)
        return SelfSimilarProfile(prof.axes, prof.values, prof.mass, coeffs, prof.kind)
    return gaussian_profile(M, coeffs, half_width, n)


# -- evolution ----------------------------------------------------------

def _bernoulli(z: np.ndarray) -> np.ndarray:
    """B(z) = z / (e^z - 1), evaluated stably."""
    out = np.ones_like(z)
    small = np.abs(z) < 1e-6
    zs = z[small]
    out[small] = 1.0 - zs / 2.0 + zs**2 / 12.0
    zl = z[~small]
    out[~small] = zl / np.expm1(zl)
    return out


def _bernoulli_prime(z: np.ndarray) -> np.ndarray:
    out = np.full_like(z, -0.5)
    small = np.abs(z) < 1e-4
    out[small] = -0.5 + z[small] / 6.0
    zl = z[~small]
    em = np.expm1(zl)
    out[~small] = (em - zl * np.exp(zl)) / em**2
    return out


class _FiniteVolume:
    """Conservative semi-discretization of ∂τF = div(xF + S∇F) - a ∂x F².

    Each face flux is J = (d/h)[B(-Pe) F_L - B(Pe) F_R] with Pe = h b / d,
    where b is the face velocity (-x, plus aF̄ in one dimension) and d the
    diagonal diffusivity. Cross-diffusion in 2D is added centrally.
    """

    def __init__(self, prof: SelfSimilarProfile, coeffs: EffectiveCoefficients):
        self.shape = prof.values.shape
        self.dim = prof.dim
        self.h = prof.spacing
        self.axes = prof.axes
        self.s = coeffs.eta_sym
        self.a = float(coeffs.a) if (self.dim == 1 and coeffs.a) else 0.0
        self._linear = None if self.a else self._assemble_linear()

    def _faces(self, d):
        x = self.axes[d]
        return 0.5 * (x[:-1] + x[1:])

    def _assemble_linear(self) -> sparse.csr_matrix:
        size = int(np.prod(self.shape))
        idx = np.arange(size).reshape(self.shape)
        rows, cols, vals = [], [], []

        def add(face_lo, face_hi, src, coef, h):
            # flux through the face between cells face_lo and face_hi, weight coef on src
            rows.extend([face_lo.ravel(), face_hi.ravel()])
            cols.extend([src.ravel(), src.ravel()])
            vals.extend([(-coef / h).ravel(), (coef / h).ravel()])

        for d in range(self.dim):
            h = self.h[d]
            dd = self.s[d, d]
            lo = np.take(idx, np.arange(self.shape[d] - 1), axis=d)
            hi = np.take(idx, np.arange(1, self.shape[d]), axis=d)
            shape = [1] * self.dim
            shape[d] = self.shape[d] - 1
            pe = (h * -self._faces(d) / dd).reshape(shape)
            pe = np.broadcast_to(pe, lo.shape)
            add(lo, hi, lo, dd / h * _bernoulli(-pe), h)
            add(lo, hi, hi, -dd / h * _bernoulli(pe), h)
            for e in range(self.dim):
                if e == d or self.s[d, e] == 0.0:
                    continue
                # -S_de ∂_e F at the d-face, averaged over both adjacent cells
                he = self.h[e]
                w = -self.s[d, e] / (4.0 * he)
                # neighbours outside the box count as zero
                for cells in (lo, hi):
                    for shift in (1, -1):
                        src = np.roll(cells, -shift, axis=e)
                        valid = np.ones(cells.shape, dtype=bool)
                        edge = [slice(None)] * self.dim
                        edge[e] = -1 if shift == 1 else 0
                        valid[tuple(edge)] = False
                        coef = np.full(int(valid.sum()), shift * w)
                        add(lo[valid], hi[valid], src[valid], coef, h)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))

    # one-dimensional nonlinear case
    def _flux_1d(self, F):
        h, d = self.h[0], self.s[0, 0]
        fl, fr = F[:-1], F[1:]
        b = -self._faces(0) + self.a * 0.5 * (fl + fr)
        pe = h * b / d
        return d / h * (_bernoulli(-pe) * fl - _bernoulli(pe) * fr), pe

    def rhs(self, _t, F):
        if self._linear is not None:
            return self._linear @ F
        J, _ = self._flux_1d(F)
        out = np.zeros_like(F)
        out[:-1] -= J / self.h[0]
        out[1:] += J / self.h[0]
        return out

    def jacobian(self, _t, F):
        if self._linear is not None:
            return self._linear
        h, d = self.h[0], self.s[0, 0]
        fl, fr = F[:-1], F[1:]
        J, pe = self._flux_1d(F)
        dpe = 0.5 * self.a * h / d
        common = (-_bernoulli_prime(-pe) * fl - _bernoulli_prime(pe) * fr) * dpe
        dj_l = d / h * (_bernoulli(-pe) + common)
        dj_r = d / h * (-_bernoulli(pe) + common)
        n = F.size
        main = np.zeros(n)
        main[:-1] -= dj_l / h
        main[1:] += dj_r / h
        upper = -dj_r / h
        lower = dj_l / h
        return sparse.diags([lower, main, upper], [-1, 0, 1], format="csr")


@dataclass(frozen=True)
class HomogenizedState:
    tau: float
    F: SelfSimilarProfile


@dataclass
class HomogenizedTrajectory:
    states: list = field(default_factory=list)
    reference: SelfSimilarProfile | None = None
    mass: list = field(default_factory=list)
    l1_to_fm: list = field(default_factory=list)
    residual: list = field(default_factory=list)

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.states])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("tau,mass,l1_to_FM,residual\n")
        for st, m, l1, r in zip(self.states, self.mass, self.l1_to_fm, self.residual):
            buf.write(",".join(repr(float(v)) for v in (st.tau, m, l1, r)) + "\n")
        return buf.getvalue()


def evolve_homogenized(F_init: SelfSimilarProfile, coeffs: EffectiveCoefficients, tau_end: float,
                       dtau: float = 0.1, rtol: float = 1e-9) -> HomogenizedTrajectory:
    """Run the homogenized equation from ``F_init`` and record outputs every dtau."""
    if dtau > 0.1 + 1e-12:
        raise ValueError("dtau must not exceed 0.1")
    fv = _FiniteVolume(F_init, coeffs)
    mass0 = F_init.integral()
    reference = stationary_profile(mass0, coeffs, F_init.half_width, F_init.axes[0].size)
    n_out = int(round(tau_end / dtau))
    t_eval = np.linspace(0.0, n_out * dtau, n_out + 1)
    scale = max(np.max(np.abs(F_init.values)), 1e-300)
    sol = solve_ivp(fv.rhs, (0.0, t_eval[-1]), F_init.values.ravel(), method="BDF",
                    jac=fv.jacobian, t_eval=t_eval, rtol=rtol, atol=1e-13 * scale,
                    max_step=dtau)
    if sol.status != 0:
        raise BlowUp(f"homogenized integration failed: {sol.message}")
    traj = HomogenizedTrajectory(reference=reference)
    for k, tau in enumerate(sol.t):
        vals = sol.y[:, k].reshape(F_init.values.shape)
        if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > BLOWUP_LEVEL:
            raise BlowUp(f"sup|F| exceeded {BLOWUP_LEVEL:g} at tau={tau:.3f}")
        prof = F_init.with_values(vals, mass=mass0)
        traj.states.append(HomogenizedState(float(tau), prof))
        traj.mass.append(prof.integral())
        traj.l1_to_fm.append(prof.l1_distance(reference))
        traj.residual.append(profile_residual(prof, coeffs))
    return traj
