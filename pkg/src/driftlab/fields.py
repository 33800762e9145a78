"""Grids, sampled space-time fields, and discrete differential operators.

Everything downstream (norms, drift constructions, the solver, diagnostics)
works with `SpaceTimeField` objects: scalar or vector fields sampled on a
uniform cell-centered Cartesian grid with a uniform time axis.

Two boundary modes are supported:

* ``periodic`` -- all stencils wrap around;
* ``zero`` -- the field is extended by zero outside the box (ghost cells are
  zero), which is the natural discretization for the compactly supported
  counterexample drifts and for Dirichlet-framed solver runs.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

PERIODIC = "periodic"
ZERO = "zero"

_MAGIC = b"DLF1"


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered space-time grid.

    Spatial samples sit at cell centers ``lo + (i + 1/2) h``; time samples at
    ``t0 + j dt`` with ``dt = (t1 - t0)/(nt - 1)`` (a single snapshot grid may
    have ``nt = 1``).
    """

    n: int
    lo: tuple
    hi: tuple
    shape: tuple
    t0: float = 0.0
    t1: float = 1.0
    nt: int = 1
    bc: str = PERIODIC

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if len(self.lo) != self.n or len(self.hi) != self.n or len(self.shape) != self.n:
            raise ValueError("lo/hi/shape must have length n")
        if self.bc not in (PERIODIC, ZERO):
            raise ValueError("boundary mode must be 'periodic' or 'zero'")
        if any(h <= l for l, h in zip(self.lo, self.hi)) or any(s < 2 for s in self.shape):
            raise ValueError("degenerate spatial extent")
        if self.nt < 1 or (self.nt > 1 and self.t1 <= self.t0):
            raise ValueError("degenerate time axis")

    @property
    def h(self):
        return tuple((hi - lo) / s for lo, hi, s in zip(self.lo, self.hi, self.shape))

    @property
    def dt(self):
        return 0.0 if self.nt == 1 else (self.t1 - self.t0) / (self.nt - 1)

    @property
    def times(self):
        return np.linspace(self.t0, self.t1, self.nt)

    def axis(self, i):
        """Cell-center coordinates along spatial axis i."""
        h = self.h[i]
        return self.lo[i] + h * (np.arange(self.shape[i]) + 0.5)

    def meshgrid(self):
        return np.meshgrid(*[self.axis(i) for i in range(self.n)], indexing="ij")

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    def with_times(self, t0, t1, nt):
        return Grid(self.n, self.lo, self.hi, self.shape, t0, t1, nt, self.bc)


class SpaceTimeField:
    """Sampled scalar (ncomp=1) or vector (ncomp=n) field on a Grid.

    Scalar samples have shape (nt, *shape); vector samples (nt, *shape, n).
    """

    def __init__(self, grid, samples, ncomp=1, allow_nonfinite=False):
        samples = np.asarray(samples, dtype=float)
        want = (grid.nt,) + tuple(grid.shape) + (() if ncomp == 1 else (ncomp,))
        if samples.shape != want:
            raise ValueError(f"sample shape {samples.shape} != expected {want}")
        if ncomp not in (1, grid.n):
            raise ValueError("component count must be 1 or n")
        if not allow_nonfinite and not np.all(np.isfinite(samples)):
            raise ValueError("non-finite samples (pass allow_nonfinite for singular snapshots)")
        self.grid = grid
        self.ncomp = ncomp
        self.samples = samples

    @property
    def is_scalar(self):
        return self.ncomp == 1

    def copy(self):
        return SpaceTimeField(self.grid, self.samples.copy(), self.ncomp)

    @classmethod
    def from_function(cls, grid, fn, ncomp=1):
        """Sample fn(t, *X) (scalar) or fn(t, *X) -> (..., ncomp) on the grid."""
        X = grid.meshgrid()
        out = np.empty((grid.nt,) + tuple(grid.shape) + (() if ncomp == 1 else (ncomp,)))
        for j, t in enumerate(grid.times):
            out[j] = fn(t, *X)
        return cls(grid, out, ncomp)


def _shift(a, axis, off, bc):
    """Shifted copy of a spatial-axis slab with the grid's boundary handling."""
    if bc == PERIODIC:
        return np.roll(a, -off, axis=axis)
    out = np.zeros_like(a)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if off > 0:
        src[axis] = slice(off, None)
        dst[axis] = slice(None, -off)
    else:
        src[axis] = slice(None, off)
        dst[axis] = slice(-off, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _ddx(a, axis, h, bc):
    return (_shift(a, axis, 1, bc) - _shift(a, axis, -1, bc)) / (2.0 * h)


def gradient(f):
    """Centered-difference spatial gradient of a scalar field, per time slice."""
    if not f.is_scalar:
        raise ValueError("gradient expects a scalar field")
    g = f.grid
    comps = [_ddx(f.samples, 1 + i, g.h[i], g.bc) for i in range(g.n)]
    return SpaceTimeField(g, np.stack(comps, axis=-1), ncomp=g.n)


def divergence(v):
    """Centered-difference divergence of a vector field, per time slice."""
    g = v.grid
    if v.ncomp != g.n:
        raise ValueError("divergence expects an n-component field")
    out = np.zeros((g.nt,) + tuple(g.shape))
    for i in range(g.n):
        out += _ddx(v.samples[..., i], 1 + i, g.h[i], g.bc)
    return SpaceTimeField(g, out)


def laplacian(f):
    """Standard (2n+1)-point Laplacian of a scalar field, per time slice."""
    if not f.is_scalar:
        raise ValueError("laplacian expects a scalar field")
    g = f.grid
    out = np.zeros((g.nt,) + tuple(g.shape))
    for i in range(g.n):
        h2 = g.h[i] ** 2
        out += (_shift(f.samples, 1 + i, 1, g.bc) - 2.0 * f.samples
                + _shift(f.samples, 1 + i, -1, g.bc)) / h2
    return SpaceTimeField(g, out)


# ---------------------------------------------------------------------------
# shell sampling


def sphere_points(n, radius, npts):
    """Quadrature nodes, unit normals and weights on the sphere of given radius.

    2D: uniform angles. 3D: Fibonacci lattice. Weights are |surface|/npts, so
    they are nonnegative and sum to the surface measure exactly.
    """
    if n == 2:
        phi = 2.0 * np.pi * (np.arange(npts) + 0.5) / npts
        normals = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        area = 2.0 * np.pi * radius
    else:
        k = np.arange(npts)
        z = 1.0 - (2.0 * k + 1.0) / npts
        phi = np.pi * (1.0 + np.sqrt(5.0)) * k
        rxy = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        normals = np.stack([rxy * np.cos(phi), rxy * np.sin(phi), z], axis=-1)
        area = 4.0 * np.pi * radius ** 2
    points = radius * normals
    weights = np.full(npts, area / npts)
    return points, normals, weights


def default_shell_points(n, radius, h):
    """Point count that resolves the sphere at roughly the grid spacing."""
    if n == 2:
        return max(64, int(np.ceil(4.0 * np.pi * radius / h)))
    return max(256, int(np.ceil(8.0 * np.pi * radius ** 2 / h ** 2)))


@dataclass
class ShellSamples:
    """Interpolated samples of one field on spheres ∂B_r(center) at all times.

    samples[j] has shape (nt, npts_j) for scalar fields or (nt, npts_j, n) for
    vector fields; weights[j] sum to |∂B_{r_j}|.
    """

    center: tuple
    radii: np.ndarray
    samples: list
    normals: list
    weights: list


def shell_restrict(f, center, radii, npts=None):
    """Linear-interpolate f onto spheres around center, with quadrature weights."""
    g = f.grid
    center = np.asarray(center, dtype=float)
    hmin = min(g.h)
    mode = "grid-wrap" if g.bc == PERIODIC else "constant"
    all_samples, all_normals, all_weights = [], [], []
    flat = f.samples if f.is_scalar else f.samples
    for r in radii:
        for i in range(g.n):
            if g.bc != PERIODIC and (center[i] - r < g.lo[i] or center[i] + r > g.hi[i]):
                raise ValueError(f"shell r={r} exits the domain")
        m = npts or default_shell_points(g.n, r, hmin)
        pts, normals, w = sphere_points(g.n, r, m)
        pts = pts + center
        # fractional index coordinates of the cell-centered samples
        idx = [(pts[:, i] - g.lo[i]) / g.h[i] - 0.5 for i in range(g.n)]
        tidx = np.repeat(np.arange(g.nt), m)
        coords = [tidx] + [np.tile(c, g.nt) for c in idx]
        if f.is_scalar:
            vals = ndimage.map_coordinates(flat, coords, order=1, mode=mode, cval=0.0)
            vals = vals.reshape(g.nt, m)
        else:
            comps = [ndimage.map_coordinates(flat[..., c], coords, order=1, mode=mode, cval=0.0)
                     for c in range(g.n)]
            vals = np.stack([c.reshape(g.nt, m) for c in comps], axis=-1)
        all_samples.append(vals)
        all_normals.append(normals)
        all_weights.append(w)
    return ShellSamples(tuple(center), np.asarray(radii, dtype=float),
                        all_samples, all_normals, all_weights)


# ---------------------------------------------------------------------------
# flat binary dump format ("DLF1")
#
# little-endian header:
#   bytes 0:4   magic "DLF1"
#   int64       n
#   int64       ncomp
#   int64       nt
#   int64 * n   spatial resolution per axis
#   float64 * 2 t0 t1
#   float64 * 2n  lo_i hi_i per axis
#   int64       boundary mode (0 periodic, 1 zero)
# followed by row-major float64 samples, shape (nt, *shape[, ncomp]).


def write_field(path, f):
    g = f.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<3q", g.n, f.ncomp, g.nt))
        fh.write(struct.pack(f"<{g.n}q", *g.shape))
        fh.write(struct.pack("<2d", g.t0, g.t1))
        for i in range(g.n):
            fh.write(struct.pack("<2d", g.lo[i], g.hi[i]))
        fh.write(struct.pack("<q", 0 if g.bc == PERIODIC else 1))
        fh.write(np.ascontiguousarray(f.samples, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a DLF1 field dump")
        n, ncomp, nt = struct.unpack("<3q", fh.read(24))
        shape = struct.unpack(f"<{n}q", fh.read(8 * n))
        t0, t1 = struct.unpack("<2d", fh.read(16))
        lo, hi = [], []
        for _ in range(n):
            a, b = struct.unpack("<2d", fh.read(16))
            lo.append(a)
            hi.append(b)
        (bmode,) = struct.unpack("<q", fh.read(8))
        grid = Grid(n, tuple(lo), tuple(hi), tuple(shape), t0, t1, nt,
                    PERIODIC if bmode == 0 else ZERO)
        count = nt * int(np.prod(shape)) * ncomp
        data = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(float)
        full = (nt,) + tuple(shape) + (() if ncomp == 1 else (ncomp,))
        return SpaceTimeField(grid, data.reshape(full), ncomp, allow_nonfinite=True)
