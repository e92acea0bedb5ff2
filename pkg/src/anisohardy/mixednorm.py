"""Sampled fields, midpoint quadrature, and the iterated mixed norm.

A ``SampledField`` carries cell-center samples of a compactly supported
function on a uniform rectangular box; the field is zero outside the box.
The mixed norm integrates the first coordinate innermost, one exponent per
axis, with per-slice maxima for infinite exponents.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dilation import DilatedBall, Dilation
from .errors import BallOutsideGrid, GridMismatch

AMNF_MAGIC = b"AMNF"
AMNC_MAGIC = b"AMNC"


@dataclass(frozen=True)
class ExponentVector:
    """Per-axis integrability exponents with derived extremes.

    ``p_under`` defaults to ``0.9 * min(p_minus, 1)`` and must stay strictly
    below ``min(p_minus, 1)``.
    """

    p: tuple
    p_under: float = None

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        if not p or any(v <= 0 for v in p):
            raise ValueError("exponents must be positive")
        object.__setattr__(self, "p", p)
        cap = min(self.p_minus, 1.0)
        pu = self.p_under if self.p_under is not None else 0.9 * cap
        if not 0.0 < pu < cap:
            raise ValueError("p_under must lie in (0, min(p_minus, 1))")
        object.__setattr__(self, "p_under", float(pu))

    @property
    def p_minus(self) -> float:
        return min(v for v in self.p)

    @property
    def p_plus(self) -> float:
        return max(v for v in self.p)

    @property
    def n(self) -> int:
        return len(self.p)

    def scaled(self, a: float) -> "ExponentVector":
        return ExponentVector(tuple(a * v for v in self.p))


@dataclass
class SampledField:
    """Cell-center samples of a function on a uniform box.

    ``origin`` is the lower corner of the box; the sample for index
    ``(i_1, ..., i_n)`` sits at ``origin + (i + 1/2) * spacing``.  Values are
    stored row-major, axis ``j`` <-> coordinate ``x_{j+1}``.
    """

    values: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float).reshape(-1)
        self.spacing = np.asarray(self.spacing, dtype=float).reshape(-1)
        if self.values.ndim != len(self.origin) or len(self.origin) != len(self.spacing):
            raise ValueError("inconsistent dimensions")
        if any(s <= 0 for s in self.spacing):
            raise ValueError("spacing must be positive")
        if any(dim < 2 for dim in self.values.shape):
            raise ValueError("need at least 2 samples per axis")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def dims(self) -> tuple:
        return self.values.shape

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        dim = self.dims[axis]
        return self.origin[axis] + (np.arange(dim) + 0.5) * self.spacing[axis]

    def meshgrid(self) -> list:
        return np.meshgrid(*[self.axis_coords(a) for a in range(self.n)],
                           indexing="ij")

    def points(self) -> np.ndarray:
        """All sample locations, shape dims + (n,)."""
        return np.stack(self.meshgrid(), axis=-1)

    def same_grid(self, other: "SampledField") -> bool:
        return (self.dims == other.dims
                and np.allclose(self.origin, other.origin)
                and np.allclose(self.spacing, other.spacing))

    def like(self, values: np.ndarray) -> "SampledField":
        return SampledField(np.asarray(values, dtype=float),
                            self.origin.copy(), self.spacing.copy())

    def zeros_like(self) -> "SampledField":
        return self.like(np.zeros(self.dims))


def centered_grid(dims, halfwidth) -> SampledField:
    """Zero field on a box centered at the origin with the given half-widths."""
    dims = tuple(int(v) for v in np.atleast_1d(dims))
    hw = np.broadcast_to(np.asarray(halfwidth, dtype=float), (len(dims),))
    spacing = 2.0 * hw / np.asarray(dims)
    return SampledField(np.zeros(dims), -hw, spacing)


def field_from_function(grid: SampledField, fn) -> SampledField:
    """Sample ``fn(points)`` on the grid of ``grid``."""
    return grid.like(fn(grid.points()))


def mixed_norm(f: SampledField, p: ExponentVector) -> float:
    """Iterated mixed Lebesgue norm by midpoint quadrature.

    The innermost reduction runs over the first coordinate.  Infinite
    exponents take the exact maximum over the sampled slice.  Reductions use
    numpy's deterministic pairwise summation, so results are bit-stable.
    """
    if p.n != f.n:
        raise ValueError("exponent vector dimension mismatch")
    acc = np.abs(f.values)
    for axis in range(f.n):
        pi = p.p[axis]
        h = f.spacing[axis]
        if np.isinf(pi):
            acc = acc.max(axis=0)
        else:
            acc = (np.sum(acc ** pi, axis=0) * h) ** (1.0 / pi)
    return float(acc)


def lq_norm(f: SampledField, q: float) -> float:
    """Plain L^q quadrature norm (max for q = inf)."""
    if np.isinf(q):
        return float(np.abs(f.values).max())
    return float((np.sum(np.abs(f.values) ** q) * f.cell_volume) ** (1.0 / q))


def pointwise_power(f: SampledField, r: float) -> SampledField:
    """|f|**r sample-by-sample."""
    if r <= 0:
        raise ValueError("power must be positive")
    return f.like(np.abs(f.values) ** r)


def integrate_product(f: SampledField, g: SampledField) -> float:
    """Quadrature of ``f * g`` over the common grid."""
    if not f.same_grid(g):
        raise GridMismatch("fields sampled on different grids")
    return float(np.sum(f.values * g.values) * f.cell_volume)


def rasterize_ball(grid: SampledField, d: Dilation, ball: DilatedBall,
                   check_inside: bool = True) -> np.ndarray:
    """Boolean mask of grid cells whose centers lie in the dilated ball."""
    ext = d.ellipsoid_extent(ball.level)
    center = np.asarray(ball.center, dtype=float)
    lo = grid.origin
    hi = grid.origin + np.asarray(grid.dims) * grid.spacing
    if check_inside and (np.any(center - ext < lo) or np.any(center + ext > hi)):
        raise BallOutsideGrid(
            "ball at level %d does not fit inside the grid box" % ball.level
        )
    pts = grid.points() - center
    return d.in_ball(pts, ball.level)


def indicator_field(grid: SampledField, d: Dilation, ball: DilatedBall,
                    check_inside: bool = True) -> SampledField:
    return grid.like(rasterize_ball(grid, d, ball, check_inside).astype(float))


def indicator_ball_norm(d: Dilation, ball: DilatedBall, p: ExponentVector,
                        grid: SampledField) -> float:
    """Mixed norm of the rasterized ball indicator."""
    return mixed_norm(indicator_field(grid, d, ball), p)


def indicator_norm_any(grid: SampledField, mask, p: ExponentVector) -> float:
    """Mixed norm of an arbitrary boolean region mask."""
    return mixed_norm(grid.like(np.asarray(mask, dtype=float)), p)


# -- AMNF binary format -------------------------------------------------------
#
# magic "AMNF", version u32 = 1, n u32, dims u64[n], origin f64[n],
# spacing f64[n], payload f64 little-endian row-major.  The AMNC variant is
# identical except for its magic and a complex128 payload (re/im interleaved).


def write_field(path, f: SampledField) -> None:
    with open(path, "wb") as fh:
        _write_header(fh, AMNF_MAGIC, f.dims, f.origin, f.spacing)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path) -> SampledField:
    with open(path, "rb") as fh:
        dims, origin, spacing = _read_header(fh, AMNF_MAGIC)
        count = int(np.prod(dims))
        data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(dims)
        return SampledField(data.copy(), origin, spacing)


def write_complex_table(path, values: np.ndarray, origin, spacing) -> None:
    values = np.asarray(values, dtype=complex)
    origin = np.asarray(origin, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    with open(path, "wb") as fh:
        _write_header(fh, AMNC_MAGIC, values.shape, origin, spacing)
        fh.write(np.ascontiguousarray(values, dtype="<c16").tobytes())


def read_complex_table(path):
    with open(path, "rb") as fh:
        dims, origin, spacing = _read_header(fh, AMNC_MAGIC)
        count = int(np.prod(dims))
        data = np.frombuffer(fh.read(16 * count), dtype="<c16").reshape(dims)
        return data.copy(), origin, spacing


def _write_header(fh, magic, dims, origin, spacing):
    n = len(dims)
    fh.write(magic)
    fh.write(struct.pack("<II", 1, n))
    fh.write(struct.pack("<%dQ" % n, *dims))
    fh.write(struct.pack("<%dd" % n, *origin))
    fh.write(struct.pack("<%dd" % n, *spacing))


def _read_header(fh, magic):
    got = fh.read(4)
    if got != magic:
        raise ValueError("bad magic %r (expected %r)" % (got, magic))
    version, n = struct.unpack("<II", fh.read(8))
    if version != 1:
        raise ValueError("unsupported version %d" % version)
    dims = struct.unpack("<%dQ" % n, fh.read(8 * n))
    origin = np.array(struct.unpack("<%dd" % n, fh.read(8 * n)))
    spacing = np.array(struct.unpack("<%dd" % n, fh.read(8 * n)))
    return dims, origin, spacing
