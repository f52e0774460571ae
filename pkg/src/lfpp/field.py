"""Sampling and transforming discrete log-correlated Gaussian fields.

The generator draws a Gaussian field on a padded torus by Fourier synthesis
(independent complex coefficients with variance proportional to 1/|k|^2, zero
mode dropped), windows it to the working grid, and pins the additive constant
by subtracting the circle average of radius 1 about the origin.  The spectral
amplitude is rescaled once per grid geometry so that the variance of
``avg(r=1/e) - avg(r=1)`` equals 1, which makes the circle-average process in
log scale a standard Brownian motion and gives the field the covariance
``Cov(h(x), h(y)) ~ -log|x - y|`` well inside the window.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
import scipy.fft

from .errors import DataError, GeometryError, ResolutionError, StateError

_MASK64 = (1 << 64) - 1

# |value of xi*h| above which exp() would overflow float64
EXP_GUARD = 700.0


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the working grid.

    ``n`` grid points per side cover [-half_width, half_width)^2 with spacing
    ``delta = 2*half_width/n``; node (i, j) sits at continuum point
    (-L + i*delta, -L + j*delta) and the origin maps to (n/2, n/2).
    Sampling is performed on a torus of side ``2*half_width*pad_factor``
    before windowing.  Power-of-two ``n`` is required only on the sampling
    path (FFT synthesis); small synthetic grids may use any ``n >= 2``.
    """

    n: int
    half_width: float
    pad_factor: int = 4

    def __post_init__(self):
        if self.n < 2:
            raise DataError(f"grid needs n >= 2, got {self.n}")
        if not self.half_width > 0:
            raise DataError(f"half_width must be positive, got {self.half_width}")
        if self.pad_factor < 2:
            raise DataError(f"pad_factor must be >= 2, got {self.pad_factor}")

    @property
    def delta(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def padded_n(self) -> int:
        return self.n * self.pad_factor

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return -self.half_width + self.delta * np.arange(self.n)

    def node_of(self, point) -> tuple[int, int]:
        """Nearest grid node of a continuum point; raises if off the grid."""
        x, y = float(point[0]), float(point[1])
        i = round((x + self.half_width) / self.delta)
        j = round((y + self.half_width) / self.delta)
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise GeometryError(f"point ({x}, {y}) maps outside the {self.n}x{self.n} grid")
        return i, j

    def coord_of(self, i: int, j: int) -> tuple[float, float]:
        return (-self.half_width + i * self.delta, -self.half_width + j * self.delta)


@dataclass
class Field:
    """A scalar field on a grid, with provenance.

    ``kind`` is "raw" or "mollified"; ``eps`` is the smoothing scale when
    mollified.  ``pad_values`` holds the full synthesis torus when the field
    came out of :func:`sample_field`; it is what mollification convolves so
    that no wrap artifact reaches the window.
    """

    spec: GridSpec
    values: np.ndarray
    seed: int | None = None
    kind: str = "raw"
    eps: float | None = None
    normalized: bool = False
    augmented: bool = False
    calibration: float = 1.0
    pad_values: np.ndarray | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.n, self.spec.n):
            raise DataError(
                f"values shape {self.values.shape} does not match grid n={self.spec.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError("field values must be finite")
        if self.kind not in ("raw", "mollified"):
            raise DataError(f"unknown field kind {self.kind!r}")
        if self.kind == "mollified" and not (self.eps and self.eps > 0):
            raise DataError("mollified field needs a positive eps")
        self.values.flags.writeable = False
        if self.pad_values is not None:
            self.pad_values.flags.writeable = False


def constant_field(spec: GridSpec, c: float, *, kind: str = "mollified",
                   eps: float | None = None) -> Field:
    """Synthetic constant field, used by deterministic test hooks."""
    values = np.full((spec.n, spec.n), float(c))
    if kind == "mollified" and eps is None:
        eps = 2.0 * spec.delta
    return Field(spec=spec, values=values, seed=None, kind=kind, eps=eps,
                 normalized=(c == 0.0))


def field_from_values(spec: GridSpec, values: np.ndarray, *, kind: str = "raw",
                      eps: float | None = None, seed: int | None = None) -> Field:
    """Wrap an explicit array as a Field (synthetic carrier for tests)."""
    if kind == "mollified" and eps is None:
        eps = 2.0 * spec.delta
    return Field(spec=spec, values=np.array(values, dtype=np.float64), seed=seed,
                 kind=kind, eps=eps)


@dataclass(frozen=True)
class Kernel:
    """Discrete smoothing kernel: a (2r+1)^2 stencil of nonnegative weights
    summing to 1, sampled from the heat kernel at time eps^2/2 and truncated
    at five per-axis standard deviations."""

    eps: float
    radius_cells: int
    weights: np.ndarray
    raw_mass: float  # stencil mass before renormalization

    def __post_init__(self):
        self.weights.flags.writeable = False


def make_kernel(eps: float, delta: float) -> Kernel:
    """Heat-kernel stencil at scale ``eps`` on a grid of spacing ``delta``."""
    if not (eps > 0 and delta > 0):
        raise DataError("eps and delta must be positive")
    if eps < 2.0 * delta:
        raise ResolutionError(
            f"kernel scale eps={eps} unresolvable at spacing delta={delta} (needs eps >= 2*delta)"
        )
    sigma = eps / math.sqrt(2.0)  # per-axis std dev of the heat kernel at t = eps^2/2
    radius = math.ceil(5.0 * sigma / delta)
    offsets = delta * np.arange(-radius, radius + 1)
    rr2 = offsets[:, None] ** 2 + offsets[None, :] ** 2
    # p_t(0, u) * delta^2 with t = eps^2/2, i.e. exp(-|u|^2/eps^2) / (pi eps^2)
    raw = np.exp(-rr2 / (eps * eps)) * (delta * delta / (math.pi * eps * eps))
    mass = float(raw.sum())
    return Kernel(eps=float(eps), radius_cells=radius, weights=raw / mass, raw_mass=mass)


def _bilinear_stencil(spec: GridSpec, xs: np.ndarray, ys: np.ndarray):
    """Bilinear interpolation stencil for continuum points.

    Returns flat arrays (ii, jj, ww): for each input point, four grid nodes
    and their weights.  Raises GeometryError if any stencil leaves the grid.
    """
    gx = (xs + spec.half_width) / spec.delta
    gy = (ys + spec.half_width) / spec.delta
    i0 = np.floor(gx).astype(np.int64)
    j0 = np.floor(gy).astype(np.int64)
    if i0.min() < 0 or j0.min() < 0 or i0.max() > spec.n - 2 or j0.max() > spec.n - 2:
        raise GeometryError("interpolation stencil leaves the grid")
    fx = gx - i0
    fy = gy - j0
    ii = np.stack([i0, i0 + 1, i0, i0 + 1])
    jj = np.stack([j0, j0, j0 + 1, j0 + 1])
    ww = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy])
    return ii.ravel(), jj.ravel(), ww.ravel()


def _circle_points(spec: GridSpec, center, radius: float):
    cx, cy = float(center[0]), float(center[1])
    if radius <= 0:
        raise GeometryError("circle radius must be positive")
    margin = 2.0 * spec.delta
    reach = radius + margin
    lim = spec.half_width - spec.delta
    if abs(cx) + reach > lim or abs(cy) + reach > lim:
        raise GeometryError(
            f"circle of radius {radius} about ({cx}, {cy}) exits the grid (margin 2*delta)"
        )
    k = max(64, math.ceil(2.0 * math.pi * radius / spec.delta))
    theta = 2.0 * math.pi * np.arange(k) / k
    return cx + radius * np.cos(theta), cy + radius * np.sin(theta)


def circle_average(fld: Field, center, radius: float) -> float:
    """Mean of bilinearly interpolated field values on a circle."""
    xs, ys = _circle_points(fld.spec, center, radius)
    ii, jj, ww = _bilinear_stencil(fld.spec, xs, ys)
    return float(np.dot(fld.values[ii, jj], ww) / len(xs))


def _circle_coeff_array(spec: GridSpec, center, radius: float) -> np.ndarray:
    """Window-sized coefficient array c with sum(c * values) = circle_average."""
    xs, ys = _circle_points(spec, center, radius)
    ii, jj, ww = _bilinear_stencil(spec, xs, ys)
    coeff = np.zeros((spec.n, spec.n))
    np.add.at(coeff, (ii, jj), ww / len(xs))
    return coeff


@functools.lru_cache(maxsize=4)
def _spectral_sigma(n_pad: int) -> np.ndarray:
    """Uncalibrated spectral amplitude 1/(sqrt(2 pi) |k|), zero mode dropped."""
    k = scipy.fft.fftfreq(n_pad, d=1.0 / n_pad)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    k2[0, 0] = 1.0  # placeholder; zero mode amplitude is set to 0 below
    sig = 1.0 / np.sqrt(2.0 * math.pi * k2)
    sig[0, 0] = 0.0
    return sig


def _functional_variance(spec: GridSpec, coeff: np.ndarray) -> float:
    """Exact variance of a linear functional sum(coeff * h) of the raw
    (uncalibrated) torus field, via the spectral covariance."""
    n_pad = spec.padded_n
    padded = np.zeros((n_pad, n_pad))
    padded[: spec.n, : spec.n] = coeff
    chat = scipy.fft.fft2(padded)
    sig = _spectral_sigma(n_pad)
    return float(np.sum((sig * np.abs(chat)) ** 2))


@functools.lru_cache(maxsize=8)
def grid_calibration(spec: GridSpec) -> float:
    """Spectral rescaling making Var(avg(1/e) - avg(1)) exactly 1.

    Deterministic per GridSpec; computed analytically from the synthesis
    spectrum and the same interpolation stencils circle_average uses.
    """
    coeff = _circle_coeff_array(spec, (0.0, 0.0), math.exp(-1.0)) - _circle_coeff_array(
        spec, (0.0, 0.0), 1.0
    )
    var = _functional_variance(spec, coeff)
    if var <= 0:
        raise DataError("degenerate synthesis spectrum")
    return 1.0 / math.sqrt(var)


def sample_field(spec: GridSpec, seed: int) -> Field:
    """Draw the raw field for (spec, seed); deterministic and bit-stable.

    Synthesis runs on the padded torus, the window is cut at the torus
    origin corner, and the additive level is fixed by subtracting the
    radius-1 circle average about the window origin.
    """
    if spec.n < 64:
        raise GeometryError(f"sampling needs n >= 64, got {spec.n}")
    if spec.n & (spec.n - 1):
        raise DataError(f"sampling needs power-of-two n, got {spec.n}")
    if spec.half_width <= 1.0 + 4.0 * spec.delta:
        raise GeometryError(
            f"half_width {spec.half_width} too small to contain the radius-1 "
            f"normalization circle (needs > 1 + 4*delta)"
        )
    n_pad = spec.padded_n
    kappa = grid_calibration(spec)
    rng = np.random.default_rng(int(seed) & _MASK64)
    coeffs = rng.standard_normal((n_pad, n_pad)) + 1j * rng.standard_normal((n_pad, n_pad))
    coeffs *= _spectral_sigma(n_pad)
    pad = scipy.fft.ifft2(coeffs, norm="forward").real
    del coeffs
    pad *= kappa
    window = pad[: spec.n, : spec.n].copy()
    probe = Field(spec=spec, values=window, seed=int(seed), kind="raw",
                  calibration=kappa)
    shift = circle_average(probe, (0.0, 0.0), 1.0)
    pad -= shift
    return Field(
        spec=spec,
        values=pad[: spec.n, : spec.n].copy(),
        seed=int(seed),
        kind="raw",
        normalized=True,
        calibration=kappa,
        pad_values=pad,
    )


def _torus_convolve(pad: np.ndarray, kernel: Kernel) -> np.ndarray:
    n_pad = pad.shape[0]
    r = kernel.radius_cells
    if 2 * r + 1 > n_pad:
        raise ResolutionError(
            f"kernel radius {r} cells does not fit on a torus of {n_pad} cells"
        )
    stencil = np.zeros_like(pad)
    idx = np.arange(-r, r + 1) % n_pad
    stencil[np.ix_(idx, idx)] = kernel.weights
    out = scipy.fft.irfft2(
        scipy.fft.rfft2(pad) * scipy.fft.rfft2(stencil), s=pad.shape
    )
    return out


def mollify(fld: Field, eps: float) -> Field:
    """Smooth a raw field with the heat-kernel stencil at scale ``eps``.

    The convolution runs on the synthesis torus so no wrap artifact reaches
    the window.  Fields loaded without their torus but with genuine seed
    provenance are re-synthesized first (bit-identical by determinism);
    synthetic fields fall back to periodic convolution of the window itself.
    The additive normalization is inherited, not re-zeroed.
    """
    if fld.kind != "raw":
        raise StateError("field is already mollified")
    kernel = make_kernel(eps, fld.spec.delta)
    pad = fld.pad_values
    if pad is None and fld.seed is not None and not fld.augmented:
        pad = sample_field(fld.spec, fld.seed).pad_values
    if pad is None:
        pad = fld.values  # synthetic carrier: its own torus
    out = _torus_convolve(np.asarray(pad, dtype=np.float64), kernel)
    return Field(
        spec=fld.spec,
        values=out[: fld.spec.n, : fld.spec.n].copy(),
        seed=fld.seed,
        kind="mollified",
        eps=float(eps),
        normalized=fld.normalized,
        augmented=fld.augmented,
        calibration=fld.calibration,
    )


def add_function(fld: Field, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Field:
    """Pointwise sum of a field and a deterministic function of position.

    ``f`` receives coordinate arrays (meshgrid of node positions) and must
    return finite values.  Seed provenance is kept with the augmented marker
    set; the normalization flag is recomputed.
    """
    ax = fld.spec.axis()
    fx = np.asarray(f(ax[:, None], ax[None, :]), dtype=np.float64)
    fx = np.broadcast_to(fx, fld.values.shape)
    if not np.all(np.isfinite(fx)):
        raise DataError("added function returned non-finite values")
    values = fld.values + fx
    pad = None
    if fld.pad_values is not None:
        n_pad = fld.spec.padded_n
        pax = -fld.spec.half_width + fld.spec.delta * np.arange(n_pad)
        pfx = np.broadcast_to(
            np.asarray(f(pax[:, None], pax[None, :]), dtype=np.float64),
            fld.pad_values.shape,
        )
        if not np.all(np.isfinite(pfx)):
            raise DataError("added function returned non-finite values")
        pad = fld.pad_values + pfx
    out = Field(
        spec=fld.spec,
        values=values,
        seed=fld.seed,
        kind=fld.kind,
        eps=fld.eps,
        normalized=False,
        augmented=True,
        calibration=fld.calibration,
        pad_values=pad,
    )
    try:
        out.normalized = abs(circle_average(out, (0.0, 0.0), 1.0)) <= 1e-9
    except GeometryError:
        out.normalized = False
    return out
