"""Direct simulation of ∂t u + div_y A(y, u) = Δ_y u on a periodic box [-L, L)^N.

The unknown is the perturbation f = u - v of the periodic stationary state v,
which obeys ∂t f + div_y B(y, f) - Δf = 0 with B(y, f) = A(y, v + f) - A(y, v).
Since B(y, 0) = 0 identically, f = 0 is preserved exactly by the scheme.
Time stepping is Strang splitting: exact Fourier diffusion around an SSP-RK3
advection step with a conservative flux.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import cell, effective, torus
from .asymptotics import DiagnosticsContext, DiagnosticsSeries, two_scale_data
from .errors import BlowUp, CFLViolation, NewtonDiverged, NonConvergence, WrapContamination
from .flux import FluxModel, stationary_residual, taylor_flux_coeffs
from .torus import TorusField

log = logging.getLogger(__name__)

BLOWUP_LEVEL = 1e6
WRAP_BAND = 0.1
WRAP_LEVEL = 1e-6


def solve_stationary_periodic(flux: FluxModel, q: float, resolution: int = 64, tol: float = 1e-9,
                              maxiter: int = 50) -> TorusField:
    """Periodic v with <v> = q and -Δv + div_y A(y, v) = 0, by damped Newton.

    The Newton matrix is the cell operator with drift ∂_pA(y, v), inverted on
    mean-zero functions, so <v> stays q.
    """
    dim = flux.dim
    shape = (resolution,) * dim
    deal = torus.Dealiaser(shape)
    y = np.meshgrid(*TorusField.coordinates(dim, resolution), indexing="ij")
    v = TorusField(np.full(shape, float(q)), dim)

    def rms(r):
        return float(np.sqrt(np.mean(r**2)))

    res = stationary_residual(flux, v, deal)
    rn = rms(res)
    for _ in range(maxiter):
        if rn <= tol:
            return v
        op = cell.CellOperator(TorusField(flux.dpA(y, v.values), dim))
        try:
            dv, _ = op.solve_mean_zero(-res, tol=max(1e-3 * rn, 1e-13))
        except NonConvergence as exc:
            raise NewtonDiverged(f"Newton linear solve failed: {exc}", residual=rn) from exc
        lam = 1.0
        while lam >= 1.0 / 64:
            trial = TorusField(v.values + lam * dv, dim)
            res_t = stationary_residual(flux, trial, deal)
            if np.all(np.isfinite(res_t)) and rms(res_t) < (1 - 1e-4 * lam) * rn:
                v, res, rn = trial, res_t, rms(res_t)
                break
            lam /= 2
        else:
            raise NewtonDiverged(f"line search failed at residual {rn:.3e}", residual=rn)
    if rn <= tol:
        return v
    raise NewtonDiverged(f"Newton stopped at residual {rn:.3e}", residual=rn)


@dataclass(frozen=True)
class BoxGrid:
    dim: int
    L: int
    cells: int

    def __post_init__(self):
        if int(self.L) != self.L or self.L <= 0:
            raise ValueError("the box half-width L must be a positive integer")
        if self.cells < 8:
            raise ValueError("need at least 8 cells per axis")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.cells

    @property
    def axes(self) -> tuple:
        ax = -self.L + np.arange(self.cells) * self.h
        return (ax,) * self.dim

    @property
    def shape(self) -> tuple:
        return (self.cells,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def outer_band(self) -> np.ndarray:
        band = np.zeros(self.shape, dtype=bool)
        for y in self.mesh():
            band |= np.abs(y) >= (1.0 - WRAP_BAND) * self.L
        return band


@dataclass
class SimulationState:
    t: float
    f: np.ndarray
    v: np.ndarray
    dx: float
    dt: float = 0.0

    @property
    def u(self) -> np.ndarray:
        return self.v + self.f

    def save(self, path):
        """Binary grid dump (npz)."""
        np.savez(path, t=self.t, f=self.f, v=self.v, dx=self.dx, dt=self.dt)

    @classmethod
    def load(cls, path) -> "SimulationState":
        with np.load(path) as d:
            return cls(float(d["t"]), d["f"], d["v"], float(d["dx"]), float(d["dt"]))

    def slice_csv(self, y_axis: np.ndarray) -> str:
        """y, u, v, f along the first axis (through the box centre when N=2)."""
        f, v = self.f, self.v
        if f.ndim == 2:
            mid = f.shape[1] // 2
            f, v = f[:, mid], v[:, mid]
        buf = io.StringIO()
        buf.write("y,u,v,f\n")
        for row in zip(y_axis, v + f, v, f):
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()


class BoxSimulator:
    """Advection-diffusion stepping of f = u - v on a BoxGrid."""

    def __init__(self, flux: FluxModel, v: TorusField, grid: BoxGrid, scheme: str = "central4",
                 cfl: float = 0.8):
        if scheme not in ("central4", "rusanov"):
            raise ValueError(f"unknown scheme {scheme!r}")
        if flux.dim != grid.dim:
            raise ValueError("flux and grid dimensions differ")
        self.flux, self.grid, self.scheme, self.cfl = flux, grid, scheme, cfl
        self.v_box = v.sample(grid.axes)
        y = grid.mesh()
        self.alphas = [flux.dpA(y, self.v_box, k) / math.factorial(k)
                       for k in range(1, max(flux.degree, 1) + 1)]
        self._alpha_abs = [np.max(np.abs(a)) for a in self.alphas]
        k = [2 * np.pi * np.fft.fftfreq(grid.cells, d=grid.h)] * grid.dim
        k[-1] = 2 * np.pi * np.fft.rfftfreq(grid.cells, d=grid.h)
        kk = np.meshgrid(*k, indexing="ij")
        self._ksq = sum(ki**2 for ki in kk)

    # -- pieces of the splitting -------------------------------------------
    def B(self, f: np.ndarray) -> np.ndarray:
        out = self.alphas[0] * f
        fk = f
        for a in self.alphas[1:]:
            fk = fk * f
            out = out + a * fk
        return out

    def dB(self, f: np.ndarray) -> np.ndarray:
        out = self.alphas[0].copy()
        fk = np.ones_like(f)
        for k, a in enumerate(self.alphas[1:], start=2):
            fk = fk * f
            out = out + k * a * fk
        return out

    def speed_bound(self, fmax: float) -> float:
        return sum(k * a * fmax ** (k - 1) for k, a in enumerate(self._alpha_abs, start=1))

    def stable_dt(self, f: np.ndarray) -> float:
        speed = self.speed_bound(float(np.max(np.abs(f))))
        return self.cfl * self.grid.h / max(speed, 1e-12)

    def advection_rhs(self, f: np.ndarray) -> np.ndarray:
        B = self.B(f)
        out = np.zeros_like(f)
        for d in range(self.grid.dim):
            Bd = B[d]
            if self.scheme == "central4":
                phi = (-np.roll(Bd, 1, d) + 7 * Bd + 7 * np.roll(Bd, -1, d) - np.roll(Bd, -2, d)) / 12
            else:
                lam_c = np.abs(self.dB(f)[d])
                lam = np.maximum(lam_c, np.roll(lam_c, -1, d))
                fr = np.roll(f, -1, d)
                phi = 0.5 * (Bd + np.roll(Bd, -1, d)) - 0.5 * lam * (fr - f)
            out -= (phi - np.roll(phi, 1, d)) / self.grid.h
        return out

    def advect(self, f: np.ndarray, dt: float) -> np.ndarray:
        f1 = f + dt * self.advection_rhs(f)
        f2 = 0.75 * f + 0.25 * (f1 + dt * self.advection_rhs(f1))
        return f / 3 + 2 / 3 * (f2 + dt * self.advection_rhs(f2))

    def diffuse(self, f: np.ndarray, dt: float) -> np.ndarray:
        if dt == 0.0:
            return f
        axes = tuple(range(self.grid.dim))
        hat = np.fft.rfftn(f, axes=axes) * np.exp(-self._ksq * dt)
        return np.fft.irfftn(hat, s=f.shape, axes=axes)

    def check(self, f: np.ndarray, t: float):
        if not np.all(np.isfinite(f)) or np.max(np.abs(f)) > BLOWUP_LEVEL:
            raise BlowUp(f"solution left the bounded regime at t={t:.4g}")

    def step(self, state: SimulationState, dt: float) -> SimulationState:
        """One Strang step: half diffusion, advection, half diffusion."""
        if dt > self.stable_dt(state.f) * (1 + 1e-12):
            raise CFLViolation(f"dt={dt:.3e} exceeds the CFL bound {self.stable_dt(state.f):.3e}")
        f = self.diffuse(state.f, dt / 2)
        f = self.advect(f, dt)
        f = self.diffuse(f, dt / 2)
        self.check(f, state.t + dt)
        return SimulationState(state.t + dt, f, state.v, state.dx, dt)

    def advance(self, f: np.ndarray, t: float, t_to: float, max_dt: float | None = None):
        """March from t to t_to, merging adjacent half diffusion steps."""
        pending = 0.0
        steps = 0
        while t < t_to - 1e-12:
            # diffusion never increases sup|f|, so the bound taken before it stays valid
            dt = min(self.stable_dt(f), t_to - t)
            if max_dt is not None:
                dt = min(dt, max_dt)
            f = self.diffuse(f, pending + dt / 2)
            f = self.advect(f, dt)
            pending = dt / 2
            t += dt
            steps += 1
            if steps % 256 == 0:
                self.check(f, t)
        f = self.diffuse(f, pending)
        self.check(f, t)
        return f, t_to


# -- initial perturbations ---------------------------------------------------

def make_perturbation(spec: dict, grid: BoxGrid, seed: int = 0) -> np.ndarray:
    """Perturbation f_ini on the box.

    Kinds: ``gaussian`` (mass, center, width), ``box`` (mass, center, width),
    ``odd`` (amplitude, center, width; zero mass), ``algebraic`` (mass,
    center, width, m: profile (1+|y-y0|²/w²)^{-(m+N)/2}) and ``random``
    (mass, center, width, amplitude: Gaussian envelope with a seeded smooth
    random modulation).
    """
    kind = spec.get("kind", "gaussian")
    dim = grid.dim
    center = np.broadcast_to(np.asarray(spec.get("center", 0.0), dtype=float), (dim,))
    width = float(spec.get("width", 1.0))
    mass = float(spec.get("mass", 1.0))
    y = grid.mesh()
    r2 = sum((yi - ci) ** 2 for yi, ci in zip(y, center)) / width**2
    vol = grid.cell_volume
    if kind == "gaussian":
        f = np.exp(-r2 / 2)
    elif kind == "box":
        f = (r2 < 1.0).astype(float)
    elif kind == "algebraic":
        m = float(spec.get("m", 12))
        f = (1 + r2) ** (-(m + dim) / 2)
    elif kind == "odd":
        amp = float(spec.get("amplitude", 1.0))
        return amp * (y[0] - center[0]) / width * np.exp(-r2 / 2)
    elif kind == "random":
        rng = np.random.default_rng(seed)
        amp = float(spec.get("amplitude", 0.5))
        mod = np.ones(grid.shape)
        for _ in range(4):
            k = rng.integers(1, 4, size=dim)
            ph = rng.uniform(0, 2 * np.pi)
            mod = mod + amp / 4 * np.cos(sum(ki * (yi - ci) / width for ki, yi, ci in zip(k, y, center)) + ph)
        f = np.exp(-r2 / 2) * np.maximum(mod, 0.0)
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    total = f.sum() * vol
    return f * (mass / total) if total > 0 else f


# -- full runs ------------------------------------------------------------------

@dataclass
class SimulationConfig:
    flux: FluxModel
    q: float = 0.0
    L: int = 64
    cells: int = 8192
    t_end: float = 100.0
    output_times: tuple = ()
    perturbation: dict = field(default_factory=lambda: {"kind": "gaussian", "mass": 1.0})
    cell_resolution: int = 64
    scheme: str = "central4"
    cfl: float = 0.8
    seed: int = 0
    weight_m: float | None = None
    diagnostics: bool = True
    check_extent: bool = True

    def times(self) -> np.ndarray:
        if len(self.output_times):
            ts = np.asarray(sorted(set(float(t) for t in self.output_times)))
        else:
            ts = np.concatenate([[0.0], np.geomspace(1.0, self.t_end, 21)])
        return ts[ts <= self.t_end + 1e-12]


@dataclass
class Trajectory:
    times: list
    states: list
    series: DiagnosticsSeries | None
    coeffs: effective.EffectiveCoefficients
    mass: list
    linf_ok: bool
    wrap_fraction: list

    def mass_drift(self) -> float:
        m = np.asarray(self.mass)
        return float(np.max(np.abs(m - m[0])))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,mass,wrap_fraction\n")
        for t, m, w in zip(self.times, self.mass, self.wrap_fraction):
            buf.write(",".join(repr(float(v)) for v in (t, m, w)) + "\n")
        return buf.getvalue()


def predicted_extent(coeffs, t_end: float, center, width: float) -> float:
    """|y0 + c t| + 3σ(t) + width, maximised over t in {0, t_end}, σ² = 2 λmax t."""
    center = np.broadcast_to(np.asarray(center, dtype=float), coeffs.c.shape)
    spread = 3.0 * math.sqrt(2.0 * float(np.max(coeffs.lambdas)) * t_end) + 3.0 * width
    drift = max(float(np.max(np.abs(center))), float(np.max(np.abs(center + coeffs.c * t_end))))
    return drift + spread


def run_simulation(config: SimulationConfig) -> Trajectory:
    flux = config.flux
    grid = BoxGrid(flux.dim, int(config.L), int(config.cells))
    v = solve_stationary_periodic(flux, config.q, config.cell_resolution)
    alphas = taylor_flux_coeffs(flux, v, 3)
    coeffs, cell_data = effective.homogenize(*alphas)
    pert = config.perturbation
    if config.check_extent:
        extent = predicted_extent(coeffs, config.t_end, pert.get("center", 0.0),
                                  float(pert.get("width", 1.0)))
        if extent > 0.8 * grid.L:
            raise WrapContamination(
                f"predicted extent {extent:.1f} exceeds 0.8 L = {0.8 * grid.L:.1f}; "
                "enlarge the box or shorten the run")
    sim = BoxSimulator(flux, v, grid, config.scheme, config.cfl)
    f = make_perturbation(pert, grid, config.seed)
    l1_ini = float(np.abs(f).sum() * grid.cell_volume)
    u_bound = 10.0 * (float(np.max(np.abs(sim.v_box + f))) + 1.0)
    band = grid.outer_band()
    series = None
    ctx = None
    if config.diagnostics:
        tsd = two_scale_data(cell_data, coeffs, alphas)
        mass = float(f.sum() * grid.cell_volume)
        ctx = DiagnosticsContext(tsd, coeffs, mass, config.weight_m)
        series = DiagnosticsSeries(flux.dim)
    times, states, masses, wraps = [], [], [], []
    linf_ok = True
    t = 0.0
    for t_out in config.times():
        f, t = sim.advance(f, t, t_out)
        wrap = float(np.abs(f[band]).sum() * grid.cell_volume)
        if wrap > WRAP_LEVEL * l1_ini:
            raise WrapContamination(f"perturbation reached the box edge at t={t:.4g} "
                                    f"({wrap:.2e} in the outer band)")
        u_sup = float(np.max(np.abs(sim.v_box + f)))
        linf_ok = linf_ok and u_sup <= u_bound
        times.append(t)
        states.append(SimulationState(t, f.copy(), sim.v_box, grid.h))
        masses.append(float(f.sum() * grid.cell_volume))
        wraps.append(wrap / max(l1_ini, 1e-300))
        if ctx is not None:
            series.append(ctx.row(t, f, grid.axes, u_sup))
    if not linf_ok:
        log.warning("sup|u| exceeded the monitor bound %.3g", u_bound)
    return Trajectory(times, states, series, coeffs, masses, linf_ok, wraps)
