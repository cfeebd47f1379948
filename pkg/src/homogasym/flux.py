"""Space-periodic fluxes A(y, p), polynomial in p with trigonometric coefficients.

A(y, p) = Σ_m a_m(y) p^m where each a_m is an N-vector of trigonometric
series on T^N. This keeps p- and y-derivatives exact, which the Taylor data
of the shifted flux and the hypothesis checks rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import torus
from .errors import HypothesisViolated
from .torus import TorusField

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TrigSeries:
    """const + Σ amp cos(2π k·y + phase) on T^N."""

    const: float = 0.0
    terms: tuple = ()  # (amp, wavevector, phase)

    def __call__(self, y) -> np.ndarray:
        out = np.zeros(np.broadcast(*y).shape) + self.const
        for amp, k, phase in self.terms:
            arg = sum(TWO_PI * ki * yi for ki, yi in zip(k, y) if ki)
            out = out + amp * np.cos(arg + phase)
        return out

    def derivative(self, axis: int) -> "TrigSeries":
        terms = tuple((amp * TWO_PI * k[axis], k, phase + np.pi / 2)
                      for amp, k, phase in self.terms if k[axis])
        return TrigSeries(0.0, terms)

    @property
    def is_zero(self) -> bool:
        return self.const == 0.0 and all(amp == 0.0 for amp, _, _ in self.terms)

    def to_dict(self) -> dict:
        return {"const": self.const,
                "terms": [{"amp": a, "k": list(k), "phase": ph} for a, k, ph in self.terms]}

    @classmethod
    def from_dict(cls, d, dim: int) -> "TrigSeries":
        if isinstance(d, (int, float)):
            return cls(float(d))
        terms = []
        for t in d.get("terms", []):
            k = tuple(int(v) for v in np.atleast_1d(t["k"]))
            if len(k) != dim:
                raise ValueError(f"wavevector {k} does not have {dim} components")
            terms.append((float(t["amp"]), k, float(t.get("phase", 0.0))))
        return cls(float(d.get("const", 0.0)), tuple(terms))


def sine(amp: float, k, phase: float = 0.0) -> tuple:
    """Term amp·sin(2πk·y + phase) in the (amp, k, phase) cosine convention."""
    return (amp, tuple(k), phase - np.pi / 2)


def _unit(dim: int, i: int) -> tuple:
    return tuple(1 if j == i else 0 for j in range(dim))


@dataclass(frozen=True)
class FluxModel:
    """A(y, p) = Σ_m coeffs[m] p^m with ``coeffs[m]`` a tuple of N series."""

    dim: int
    coeffs: tuple
    p0: float = 0.0
    name: str = "polynomial"
    params: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def _poly(self, y, p, order: int, series) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        shape = np.broadcast(*y, p).shape
        out = np.zeros((self.dim,) + shape)
        for m in range(order, len(series)):
            fac = math.factorial(m) / math.factorial(m - order)
            pw = p ** (m - order)
            for i in range(self.dim):
                if not series[m][i].is_zero:
                    out[i] += fac * series[m][i](y) * pw
        return out

    def A(self, y, p) -> np.ndarray:
        return self._poly(y, p, 0, self.coeffs)

    def dpA(self, y, p, order: int = 1) -> np.ndarray:
        return self._poly(y, p, order, self.coeffs)

    def div_y(self, y, p, order: int = 0) -> np.ndarray:
        """Partial divergence Σ_i ∂_{y_i} A_i(y, p) at fixed p (and its p-derivatives)."""
        dseries = tuple(tuple(s[i].derivative(i) for i in range(self.dim)) for s in self.coeffs)
        return self._poly(y, p, order, dseries).sum(axis=0)

    def shifted(self, y, v, f) -> np.ndarray:
        """B(y, f) = A(y, v + f) - A(y, v)."""
        return self.A(y, v + f) - self.A(y, v)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "p0": self.p0, "name": self.name,
                "coeffs": [[s.to_dict() for s in comp] for comp in self.coeffs]}


# -- presets ------------------------------------------------------------

def _zero(dim):
    return tuple(TrigSeries() for _ in range(dim))


def linear_ratchet(dim: int = 1, omega=0.0, amplitude: float = 1.0) -> FluxModel:
    """A = (-ω - ∇ψ) p with ψ = amplitude Σ_i sin 2π y_i."""
    omega = np.broadcast_to(np.asarray(omega, dtype=float), (dim,))
    lin = tuple(
        TrigSeries(-float(omega[i]), ((-amplitude * TWO_PI, _unit(dim, i), 0.0),))
        for i in range(dim)
    )
    return FluxModel(dim, (_zero(dim), lin), 0.0, "linear_ratchet",
                     {"omega": omega.tolist(), "amplitude": amplitude})


def burgers(dim: int = 1, a0=0.0, a1: float = TWO_PI, b=1.0) -> FluxModel:
    """A_i = a_i(y) p + b_i p²/2 with a_i = a0_i + a1 sin 2π y_i.

    With a1 = 2π and a0 = 0 the linearization at v = 0 is a gradient drift.
    """
    a0 = np.broadcast_to(np.asarray(a0, dtype=float), (dim,))
    b = np.broadcast_to(np.asarray(b, dtype=float), (dim,))
    lin = tuple(TrigSeries(float(a0[i]), (sine(a1, _unit(dim, i)),)) for i in range(dim))
    quad = tuple(TrigSeries(0.5 * float(b[i])) for i in range(dim))
    return FluxModel(dim, (_zero(dim), lin, quad), 0.0, "burgers",
                     {"a0": a0.tolist(), "a1": a1, "b": b.tolist()})


def cubic(dim: int = 2, a1: float = TWO_PI, b: float = 1.0) -> FluxModel:
    """A_i = a1 sin(2π y_i) p + b p³."""
    lin = tuple(TrigSeries(0.0, (sine(a1, _unit(dim, i)),)) for i in range(dim))
    cub = tuple(TrigSeries(b) for _ in range(dim))
    return FluxModel(dim, (_zero(dim), lin, _zero(dim), cub), 0.0, "cubic", {"a1": a1, "b": b})


def quartic(dim: int = 1, a1: float = TWO_PI, b: float = 0.5, d: float = 0.1) -> FluxModel:
    """A_i = a1 sin(2π y_i) p + b p² + d (1 + ½cos 2π y_i) p⁴."""
    lin = tuple(TrigSeries(0.0, (sine(a1, _unit(dim, i)),)) for i in range(dim))
    quad = tuple(TrigSeries(b) for _ in range(dim))
    quart = tuple(TrigSeries(d, ((0.5 * d, _unit(dim, i), 0.0),)) for i in range(dim))
    return FluxModel(dim, (_zero(dim), lin, quad, _zero(dim), quart), 0.0, "quartic",
                     {"a1": a1, "b": b, "d": d})


def polynomial(dim: int, coeffs, p0: float = 0.0) -> FluxModel:
    """User flux from ``coeffs[m][i]``: a number or a TrigSeries dict."""
    parsed = tuple(tuple(TrigSeries.from_dict(c, dim) for c in comp) for comp in coeffs)
    for comp in parsed:
        if len(comp) != dim:
            raise ValueError(f"every power of p needs {dim} coefficient series")
    return FluxModel(dim, parsed, float(p0), "polynomial", {"coeffs": coeffs})


PRESETS = {
    "linear_ratchet": linear_ratchet,
    "burgers": burgers,
    "cubic": cubic,
    "quartic": quartic,
}


def make_flux(name: str, dim: int, **params) -> FluxModel:
    if name == "polynomial":
        return polynomial(dim, params["coeffs"], params.get("p0", 0.0))
    if name not in PRESETS:
        raise ValueError(f"unknown flux preset {name!r}")
    return PRESETS[name](dim=dim, **params)


# -- Taylor data and hypothesis checks ------------------------------------

def box_coordinates(field_: TorusField) -> list[np.ndarray]:
    return np.meshgrid(*TorusField.coordinates(field_.dim, field_.resolution), indexing="ij")


def taylor_flux_coeffs(flux: FluxModel, v: TorusField, kmax: int = 3) -> list[TorusField]:
    """α_k = ∂_p^k A(y, v(y)) / k! for k = 1..kmax as vector fields on v's grid."""
    y = box_coordinates(v)
    return [TorusField(flux.dpA(y, v.values, k) / math.factorial(k), v.dim)
            for k in range(1, kmax + 1)]


def remainder_constant(flux: FluxModel, v: TorusField, samples: int = 41) -> float:
    """Smallest C with |B - α1 f - α2 f² - α3 f³| ≤ C f⁴ on sampled (y, f), |f| ≤ 1."""
    y = box_coordinates(v)
    alphas = taylor_flux_coeffs(flux, v, 3)
    worst = 0.0
    for f in np.linspace(-1.0, 1.0, samples):
        if f == 0.0:
            continue
        rem = flux.shifted(y, v.values, f)
        for k, a in enumerate(alphas, start=1):
            rem = rem - a.values * f**k
        worst = max(worst, float(np.max(np.abs(rem))) / f**4)
    return worst


@dataclass(frozen=True)
class HypothesisReport:
    div_residual: float
    growth_exponent: float
    growth_bound: float
    passed: bool
    messages: tuple = ()

    def to_dict(self) -> dict:
        return {"div_residual": self.div_residual, "growth_exponent": self.growth_exponent,
                "growth_bound": self.growth_bound, "passed": self.passed,
                "messages": list(self.messages)}


def _growth_slope(values_fn, qs) -> float | None:
    mags = np.array([values_fn(q) for q in qs])
    if np.all(mags == 0.0):
        return None
    mags = np.maximum(mags, 1e-300)
    return float(np.polyfit(np.log(qs), np.log(mags), 1)[0])


def verify_hypotheses(flux: FluxModel, resolution: int = 64, p_range: float = 1.0,
                      strict: bool = False) -> HypothesisReport:
    """Grid check of div_y A(·, p0) = 0 and a growth fit of the increments.

    The exponent n is read off the large-q log-slopes of
    max |∂_pA(y,p+q) - ∂_pA(y,p)| and max |div_y A(y,p+q) - div_y A(y,p)|
    over grid points y and sampled |p| ≤ p_range; linear growth is always
    admissible, so n is at least 1.
    """
    dim = flux.dim
    res = min(resolution, 32) if dim > 1 else resolution
    y = np.meshgrid(*TorusField.coordinates(dim, res), indexing="ij")
    div_res = float(np.max(np.abs(flux.div_y(y, flux.p0))))
    ps = np.linspace(-p_range, p_range, 5)
    qs = np.logspace(4, 6, 5)

    def dp_increment(q):
        return max(float(np.max(np.abs(flux.dpA(y, p + q) - flux.dpA(y, p)))) for p in ps)

    def div_increment(q):
        return max(float(np.max(np.abs(flux.div_y(y, p + q) - flux.div_y(y, p)))) for p in ps)

    slopes = [s for s in (_growth_slope(dp_increment, qs), _growth_slope(div_increment, qs))
              if s is not None]
    n_eff = max([1.0] + [round(s, 3) for s in slopes])
    bound = (dim + 2) / dim
    messages = []
    if div_res > 1e-10:
        messages.append(f"div_y A(y, p0) does not vanish: max {div_res:.3e}")
    if not n_eff < bound:
        messages.append(f"growth exponent n = {n_eff:g} is not below (N+2)/N = {bound:g}")
    report = HypothesisReport(div_res, n_eff, bound, not messages, tuple(messages))
    if strict and messages:
        raise HypothesisViolated("; ".join(messages))
    return report


def stationary_residual(flux: FluxModel, v: TorusField, dealiaser=None) -> np.ndarray:
    """-Δv + div_y[A(y, v(y))] on the torus grid, with 3/2-rule dealiasing."""
    dealiaser = torus.Dealiaser(v.resolution) if dealiaser is None else dealiaser
    yf = np.meshgrid(*TorusField.coordinates(v.dim, dealiaser.fine_shape), indexing="ij")
    vf = dealiaser.to_fine(v.values)
    af = flux.A(yf, vf)
    flux_coarse = np.stack([dealiaser.from_fine(af[i]) for i in range(v.dim)])
    return -torus.laplacian(v.values) + torus.divergence(flux_coarse)
