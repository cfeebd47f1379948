"""Real fields on the unit torus T^N discretized by Fourier collocation.

Grids are uniform on [0, 1)^N without the duplicated endpoint. Every spectral
operation works in the band |k_i| < M_i / 2; the Nyquist mode of an even grid
is discarded so that first derivatives are exactly skew-adjoint on the grid.
"""
from __future__ import annotations

import functools
import io
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@functools.lru_cache(maxsize=128)
def _wavenumbers(m: int) -> np.ndarray:
    k = np.rint(np.fft.fftfreq(m, d=1.0 / m)).astype(float)
    if m % 2 == 0:
        k[m // 2] = 0.0
    return k


@functools.lru_cache(maxsize=128)
def _band_mask(m: int) -> np.ndarray:
    mask = np.ones(m)
    if m % 2 == 0:
        mask[m // 2] = 0.0
    return mask


def _axis_view(vec: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vec.size
    return vec.reshape(shape)


def _band(hat: np.ndarray) -> np.ndarray:
    for ax, m in enumerate(hat.shape):
        hat = hat * _axis_view(_band_mask(m), ax, hat.ndim)
    return hat


def band_limit(a: np.ndarray) -> np.ndarray:
    """Remove the Nyquist modes of ``a``."""
    return np.real(np.fft.ifftn(_band(np.fft.fftn(a))))


def derivative(a: np.ndarray, axis: int, order: int = 1) -> np.ndarray:
    hat = np.fft.fftn(a)
    ik = 1j * TWO_PI * _wavenumbers(a.shape[axis])
    hat = _band(hat) * _axis_view(ik**order, axis, a.ndim)
    return np.real(np.fft.ifftn(hat))


def gradient(a: np.ndarray) -> np.ndarray:
    return np.stack([derivative(a, ax) for ax in range(a.ndim)])


def divergence(v: np.ndarray) -> np.ndarray:
    return sum(derivative(v[i], i) for i in range(v.shape[0]))


def _ksq(shape) -> np.ndarray:
    ksq = np.zeros(shape)
    for ax, m in enumerate(shape):
        ksq = ksq + _axis_view((TWO_PI * _wavenumbers(m)) ** 2, ax, len(shape))
    return ksq


def laplacian(a: np.ndarray) -> np.ndarray:
    hat = _band(np.fft.fftn(a))
    return np.real(np.fft.ifftn(-_ksq(a.shape) * hat))


def inverse_laplacian(a: np.ndarray) -> np.ndarray:
    """Mean-zero solution of Δφ = a - <a>."""
    hat = _band(np.fft.fftn(a))
    ksq = _ksq(a.shape)
    # the zero mode and the discarded Nyquist modes are the only zeros of ksq
    safe = np.where(ksq == 0.0, 1.0, ksq)
    hat = np.where(ksq == 0.0, 0.0, -hat / safe)
    return np.real(np.fft.ifftn(hat))


class Dealiaser:
    """3/2-rule padding between a grid and its refined companion."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self.fine_shape = tuple(3 * m // 2 for m in self.shape)
        src, dst = [], []
        for m, mp in zip(self.shape, self.fine_shape):
            k = np.rint(np.fft.fftfreq(m, d=1.0 / m)).astype(int)
            keep = np.abs(k) < m / 2
            src.append(np.nonzero(keep)[0])
            dst.append(np.mod(k[keep], mp))
        self._src = np.ix_(*src)
        self._dst = np.ix_(*dst)
        self._scale = float(np.prod([mp / m for m, mp in zip(self.shape, self.fine_shape)]))

    def to_fine(self, a: np.ndarray) -> np.ndarray:
        hat = np.fft.fftn(a)
        fine = np.zeros(self.fine_shape, dtype=complex)
        fine[self._dst] = hat[self._src]
        return np.real(np.fft.ifftn(fine)) * self._scale

    def from_fine(self, a_fine: np.ndarray) -> np.ndarray:
        hat_f = np.fft.fftn(a_fine)
        hat = np.zeros(self.shape, dtype=complex)
        hat[self._src] = hat_f[self._dst] / self._scale
        return np.real(np.fft.ifftn(hat))

    def product(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.from_fine(self.to_fine(a) * self.to_fine(b))


def dealiased_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return Dealiaser(a.shape).product(a, b)


def _on_grid(pts: np.ndarray, m: int):
    """Grid indices of ``pts`` when every point is a grid node, else None."""
    idx = pts * m
    near = np.rint(idx)
    if np.max(np.abs(idx - near), initial=0.0) > 1e-9:
        return None
    return np.mod(near.astype(np.int64), m)


def sample_array(a: np.ndarray, axes_points, deriv=None, chunk: int = 8192) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``a`` on a tensor grid.

    ``axes_points`` holds one 1D array of coordinates per axis; coordinates
    may lie anywhere in R (the interpolant is periodic). ``deriv`` optionally
    gives a derivative order per axis.
    """
    ndim = a.ndim
    if len(axes_points) != ndim:
        raise ValueError(f"expected {ndim} coordinate arrays, got {len(axes_points)}")
    # reduce coordinates first: exp(2πikz) is 1-periodic but large z loses digits
    pts_all = [np.asarray(p, dtype=float).ravel() for p in axes_points]
    pts_all = [p - np.floor(p) for p in pts_all]
    if deriv is None or not any(deriv):
        idx = [_on_grid(p, m) for p, m in zip(pts_all, a.shape)]
        if all(i is not None for i in idx):
            return band_limit(a)[np.ix_(*idx)]
    hat = _band(np.fft.fftn(a)) / a.size
    if ndim == 1 and pts_all[0].size > chunk:
        pts = pts_all[0]
        return np.concatenate([
            sample_array(a, [pts[i:i + chunk]], deriv, chunk) for i in range(0, pts.size, chunk)
        ])
    res = hat
    for ax in range(ndim):
        k = _wavenumbers(a.shape[ax])
        basis = np.exp(1j * TWO_PI * np.outer(pts_all[ax], k))
        if deriv is not None and deriv[ax]:
            basis = basis * (1j * TWO_PI * k) ** deriv[ax]
        res = np.tensordot(res, basis, axes=([0], [1]))
    return np.real(res)


@dataclass(frozen=True, eq=False)
class TorusField:
    """Scalar or vector field sampled on a uniform grid of T^N.

    ``values`` has shape ``grid`` for a scalar and ``(N, *grid)`` for a vector.
    """

    values: np.ndarray
    dim: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if self.dim not in (1, 2, 3):
            raise ValueError(f"torus dimension must be 1, 2 or 3, got {self.dim}")
        if vals.ndim == self.dim + 1:
            if vals.shape[0] != self.dim:
                raise ValueError("a vector field needs exactly N components")
        elif vals.ndim != self.dim:
            raise ValueError(f"values of shape {vals.shape} do not match dim={self.dim}")

    # -- construction ---------------------------------------------------
    @staticmethod
    def coordinates(dim: int, m) -> list[np.ndarray]:
        ms = (m,) * dim if np.isscalar(m) else tuple(m)
        return [np.arange(mi) / mi for mi in ms]

    @classmethod
    def from_function(cls, func, dim: int, m) -> "TorusField":
        axes = cls.coordinates(dim, m)
        grids = np.meshgrid(*axes, indexing="ij")
        return cls(np.asarray(func(*grids), dtype=float), dim)

    @classmethod
    def constant(cls, value, dim: int, m, vector: bool = False) -> "TorusField":
        ms = (m,) * dim if np.isscalar(m) else tuple(m)
        if vector:
            value = np.broadcast_to(np.asarray(value, dtype=float), (dim,))
            vals = np.stack([np.full(ms, v) for v in value])
        else:
            vals = np.full(ms, float(value))
        return cls(vals, dim)

    # -- shape info -----------------------------------------------------
    @property
    def is_vector(self) -> bool:
        return self.values.ndim == self.dim + 1

    @property
    def components(self) -> int:
        return self.dim if self.is_vector else 1

    @property
    def resolution(self) -> tuple:
        return self.values.shape[-self.dim:]

    def component(self, i: int) -> "TorusField":
        if not self.is_vector:
            if i != 0:
                raise IndexError("scalar field has a single component")
            return self
        return TorusField(self.values[i], self.dim)

    def as_scalar(self) -> "TorusField":
        """Scalar view of a scalar field or of a one-component (N=1) vector."""
        if self.is_vector:
            if self.dim != 1:
                raise ValueError("only N=1 vector fields have a scalar view")
            return TorusField(self.values[0], 1)
        return self

    def as_vector(self) -> "TorusField":
        if self.is_vector:
            return self
        if self.dim != 1:
            raise ValueError("only N=1 scalar fields have a vector view")
        return TorusField(self.values[None, ...], 1)

    # -- reductions and calculus ----------------------------------------
    def mean(self):
        axes = tuple(range(-self.dim, 0))
        m = self.values.mean(axis=axes)
        return m if self.is_vector else float(m)

    def zero_mode(self):
        axes = tuple(range(-self.dim, 0))
        hat = np.fft.fftn(self.values, axes=axes)
        idx = (Ellipsis,) + (0,) * self.dim
        return np.real(hat[idx]) / np.prod(self.resolution)

    def derivative(self, axis: int, order: int = 1) -> "TorusField":
        if self.is_vector:
            return TorusField(np.stack([derivative(v, axis, order) for v in self.values]), self.dim)
        return TorusField(derivative(self.values, axis, order), self.dim)

    def grad(self) -> "TorusField":
        if self.is_vector:
            raise ValueError("gradient of a vector field is not supported")
        return TorusField(gradient(self.values), self.dim)

    def div(self) -> "TorusField":
        if not self.is_vector:
            raise ValueError("divergence needs a vector field")
        return TorusField(divergence(self.values), self.dim)

    def laplacian(self) -> "TorusField":
        if self.is_vector:
            return TorusField(np.stack([laplacian(v) for v in self.values]), self.dim)
        return TorusField(laplacian(self.values), self.dim)

    def sample(self, axes_points, deriv=None) -> np.ndarray:
        """Spectral interpolation on the tensor grid ``axes_points``."""
        if self.is_vector:
            return np.stack([sample_array(v, axes_points, deriv) for v in self.values])
        return sample_array(self.values, axes_points, deriv)

    def refine(self, m) -> "TorusField":
        """Resample on a finer (or coarser) grid by trigonometric interpolation."""
        return TorusField(self.sample(self.coordinates(self.dim, m)), self.dim)

    # -- arithmetic -----------------------------------------------------
    def _other(self, other):
        return other.values if isinstance(other, TorusField) else other

    def __add__(self, other):
        return TorusField(self.values + self._other(other), self.dim)

    __radd__ = __add__

    def __sub__(self, other):
        return TorusField(self.values - self._other(other), self.dim)

    def __rsub__(self, other):
        return TorusField(self._other(other) - self.values, self.dim)

    def __mul__(self, other):
        return TorusField(self.values * self._other(other), self.dim)

    __rmul__ = __mul__

    def __neg__(self):
        return TorusField(-self.values, self.dim)

    # -- serialization --------------------------------------------------
    def to_text(self) -> str:
        res = " ".join(str(m) for m in self.resolution)
        buf = io.StringIO()
        buf.write(f"# TorusField dims={self.dim} resolution={res} components={self.components}\n")
        for val in self.values.ravel(order="C"):
            buf.write(f"{float(val)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "TorusField":
        lines = text.strip().splitlines()
        header = lines[0].lstrip("#").split()
        if not header or header[0] != "TorusField":
            raise ValueError("missing TorusField header")
        meta, key = {}, None
        for tok in header[1:]:
            if "=" in tok:
                key, val = tok.split("=", 1)
                meta[key] = [val]
            elif key is not None:
                meta[key].append(tok)
        dim = int(meta["dims"][0])
        res = tuple(int(r) for r in meta["resolution"])
        comps = int(meta["components"][0])
        vals = np.array([float(v) for v in lines[1:]])
        shape = res if comps == 1 else (comps,) + res
        return cls(vals.reshape(shape), dim)

    def to_csv(self) -> str:
        axes = self.coordinates(self.dim, self.resolution)
        grids = [g.ravel() for g in np.meshgrid(*axes, indexing="ij")]
        cols = [f"z{i + 1}" for i in range(self.dim)]
        if self.is_vector:
            cols += [f"value_{i + 1}" for i in range(self.dim)]
            data = grids + [v.ravel() for v in self.values]
        else:
            cols += ["value"]
            data = grids + [self.values.ravel()]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row in zip(*data):
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()
