"""Maximal operators on sampled fields.

Hardy-Littlewood, iterated one-dimensional, radial, non-tangential, grand,
truncated/decayed and Peetre maximal functions, all with suprema taken over
the grid.  Ball averages and ball maxima exploit the convexity of the
ellipsoid stencils: each stencil row along the first axis is an integer
interval, so averages reduce to prefix sums and maxima to 1-d sliding-window
filters.  Mollifier convolutions are direct summation with support truncation
(no FFT here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dilation import Dilation
from .errors import EmptyDictionary, EmptyRange
from .mixednorm import ExponentVector, SampledField
from .mollifiers import MollifierDescriptor, normalize_into_sn, require_nonzero_mean

# -- stencil geometry ---------------------------------------------------------


def ball_rows(d: Dilation, k: int, spacing, clip_dims=None) -> tuple:
    """Row decomposition of the level-k ball stencil on a grid.

    Returns ``(rows, count)`` where ``rows`` is a list of
    ``(col_offsets, lo, hi)`` - integer offsets along the trailing axes plus
    the inclusive offset interval along axis 0 - and ``count`` is the total
    number of lattice offsets in the stencil (including, when ``clip_dims``
    restricts the enumerated trailing offsets to ``|off| < dim``, the
    off-grid rows, whose cardinality is estimated from the interval
    formula).
    """
    spacing = np.asarray(spacing, dtype=float)
    key = ("rows", k, tuple(spacing),
           tuple(clip_dims) if clip_dims is not None else None)
    cache = d.__dict__.setdefault("_stencil_cache", {})
    if key in cache:
        return cache[key]
    q = d.level_form(k)
    ext = d.ellipsoid_extent(k) / spacing
    n = d.n
    h0 = spacing[0]

    def interval(col):
        rest = np.array(col, dtype=float) * spacing[1:]
        a = q[0, 0] * h0 * h0
        bq = 2.0 * h0 * float(q[0, 1:] @ rest)
        g = float(rest @ q[1:, 1:] @ rest) - d.c
        disc = bq * bq - 4.0 * a * g
        if disc <= 0.0:
            return None
        root = math.sqrt(disc)
        lo = int(math.floor((-bq - root) / (2.0 * a))) + 1
        hi = int(math.ceil((-bq + root) / (2.0 * a))) - 1

        def member(t):
            y = np.concatenate(([t * h0], rest))
            return float(y @ q @ y) < d.c

        while lo <= hi and not member(lo):
            lo += 1
        while lo <= hi and not member(hi):
            hi -= 1
        while member(lo - 1):
            lo -= 1
        while member(hi + 1):
            hi += 1
        return (lo, hi) if lo <= hi else None

    halves = [int(math.floor(ext[j])) + 1 for j in range(1, n)]
    if clip_dims is not None:
        reach = [min(halves[j - 1], int(clip_dims[j]) - 1)
                 for j in range(1, n)]
    else:
        reach = halves
    if n == 1:
        cols = [()]
    else:
        ranges = [np.arange(-reach[j - 1], reach[j - 1] + 1)
                  for j in range(1, n)]
        cols = [tuple(int(v) for v in c)
                for c in np.stack(np.meshgrid(*ranges, indexing="ij"),
                                  axis=-1).reshape(-1, n - 1)]
    rows = []
    count = 0
    for col in cols:
        iv = interval(col)
        if iv is None:
            continue
        rows.append((col, iv[0], iv[1]))
        count += iv[1] - iv[0] + 1
    if clip_dims is not None and any(r < h for r, h in zip(reach, halves)):
        count = _full_stencil_count(d, k, spacing)
    cache[key] = (rows, count)
    return rows, count


def _full_stencil_count(d: Dilation, k: int, spacing) -> int:
    """Lattice cardinality of the unclipped stencil, vectorized over rows."""
    spacing = np.asarray(spacing, dtype=float)
    q = d.level_form(k)
    ext = d.ellipsoid_extent(k) / spacing
    n = d.n
    h0 = spacing[0]
    if n == 1:
        iv = 2.0 * math.sqrt(d.c / q[0, 0]) / h0
        return int(iv) + 1
    ranges = [np.arange(-int(math.floor(ext[j])) - 1,
                        int(math.floor(ext[j])) + 2)
              for j in range(1, n)]
    cols = np.stack(np.meshgrid(*ranges, indexing="ij"),
                    axis=-1).reshape(-1, n - 1) * spacing[1:]
    a = q[0, 0] * h0 * h0
    bq = 2.0 * h0 * (cols @ q[0, 1:])
    g = np.einsum("ri,ij,rj->r", cols, q[1:, 1:], cols) - d.c
    disc = bq * bq - 4.0 * a * g
    ok = disc > 0.0
    root = np.sqrt(disc[ok])
    lo = np.floor((-bq[ok] - root) / (2.0 * a)) + 1
    hi = np.ceil((-bq[ok] + root) / (2.0 * a)) - 1
    return int(np.maximum(0.0, hi - lo + 1.0).sum())


def level_for_cell(d: Dilation, spacing) -> int:
    """Largest level whose stencil is the single cell {0}."""
    k = int(math.floor(math.log(float(np.prod(spacing))) / math.log(d.b)))
    while ball_rows(d, k, spacing)[1] > 1:
        k -= 1
    while ball_rows(d, k + 1, spacing)[1] == 1:
        k += 1
    return k


def level_for_box(d: Dilation, dims, spacing) -> int:
    """Smallest level whose ball contains the whole box diameter."""
    diam = float(np.linalg.norm(np.asarray(dims) * np.asarray(spacing)))
    k = 0
    while d.inradius(k) < diam:
        k += 1
    while k > 0 and d.inradius(k - 1) >= diam:
        k -= 1
    return k


def default_ball_levels(f: SampledField, d: Dilation) -> range:
    """Levels from one-cell coverage up to full-box coverage."""
    return range(level_for_cell(d, f.spacing),
                 level_for_box(d, f.dims, f.spacing) + 1)


def default_scale_range(f: SampledField, d: Dilation) -> range:
    """Mollifier scales matching the default ball levels (reflected)."""
    lv = default_ball_levels(f, d)
    return range(-lv.stop + 1, -lv.start + 1)


# -- row filters --------------------------------------------------------------


def _shift_nd(arr, offsets, fill=0.0):
    """out[idx] = arr[idx + offsets] with constant fill outside."""
    out = np.full_like(arr, fill)
    src = []
    dst = []
    for size, off in zip(arr.shape, offsets):
        off = int(off)
        if abs(off) >= size:
            return out
        if off >= 0:
            src.append(slice(off, size))
            dst.append(slice(0, size - off))
        else:
            src.append(slice(0, size + off))
            dst.append(slice(-off, size))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def _interval_sum_axis0(ps, lo, hi):
    """Sums over windows [i+lo, i+hi] along axis 0 from a prefix table."""
    n = ps.shape[0] - 1
    idx = np.arange(n)
    a = np.clip(idx + lo, 0, n)
    b = np.clip(idx + hi + 1, 0, n)
    return ps[b] - ps[a]


def _interval_extreme_axis0(arr, lo, hi, fill, minimum=False):
    """Extrema over windows [i+lo, i+hi] along axis 0 (grid values only).

    The array is padded so the gather stays in range even when windows
    reach far outside the grid.
    """
    size = hi - lo + 1
    pl, pr = max(0, -lo), max(0, hi)
    pad = [(pl, pr)] + [(0, 0)] * (arr.ndim - 1)
    g = np.pad(arr, pad, constant_values=fill)
    filt = ndimage.minimum_filter1d if minimum else ndimage.maximum_filter1d
    m = filt(g, size=size, axis=0, mode="constant", cval=fill)
    start = lo + pl + size // 2
    return m[start:start + arr.shape[0]]


def ball_sum(values: np.ndarray, rows) -> np.ndarray:
    """Sum of ``values`` over the stencil around every grid point."""
    ps = np.concatenate([np.zeros((1,) + values.shape[1:]),
                         np.cumsum(values, axis=0)], axis=0)
    out = np.zeros_like(values)
    for col, lo, hi in rows:
        row = _interval_sum_axis0(ps, lo, hi)
        out += _shift_nd(row, (0,) + col)
    return out


def ball_max(values: np.ndarray, rows, fill=0.0) -> np.ndarray:
    """Maximum of ``values`` over the stencil around every grid point."""
    out = np.full_like(values, fill)
    for col, lo, hi in rows:
        row = _interval_extreme_axis0(values, lo, hi, fill)
        np.maximum(out, _shift_nd(row, (0,) + col, fill), out)
    return out


def ball_min_mask(mask: np.ndarray, rows) -> np.ndarray:
    """Erosion of a boolean mask by the stencil (off-grid counts as False)."""
    vals = mask.astype(float)
    out = np.ones_like(vals)
    for col, lo, hi in rows:
        row = _interval_extreme_axis0(vals, lo, hi, 0.0, minimum=True)
        np.minimum(out, _shift_nd(row, (0,) + col, 0.0), out)
    return out >= 0.5


def ball_average(values: np.ndarray, rows, count: int) -> np.ndarray:
    """Stencil average; the divisor is the full stencil cardinality so that
    off-grid cells count as zeros (compact-support convention)."""
    return ball_sum(values, rows) / float(count)


# -- mollifier convolution ----------------------------------------------------


def scaled_kernel(phi: MollifierDescriptor, d: Dilation, k: int,
                  spacing, max_dims=None, trunc: float = 1e-12) -> np.ndarray:
    """Quadrature weights of ``b^k phi(A^k .)`` on the offset lattice.

    The kernel array has odd shape with the zero offset at its center and is
    truncated where ``|phi|`` falls below ``trunc`` times its maximum.
    """
    spacing = np.asarray(spacing, dtype=float)
    ak = d.matrix_power(k)
    aik = d.matrix_power(-k)
    rad = phi.support_radius(d.n)
    ext = rad * np.sqrt(np.sum(aik * aik, axis=1)) / spacing
    half = np.floor(ext).astype(int) + 1
    if max_dims is not None:
        half = np.minimum(half, np.asarray(max_dims, dtype=int))
    axes = [np.arange(-hh, hh + 1) for hh in half]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1) * spacing
    vals = phi.sample(mesh @ ak.T) * (d.b ** k) * float(np.prod(spacing))
    peak = np.abs(vals).max()
    if peak > 0.0:
        vals[np.abs(vals) < trunc * peak] = 0.0
    return vals


def convolve_scaled(f: SampledField, phi: MollifierDescriptor, d: Dilation,
                    k: int) -> np.ndarray:
    """Direct-summation convolution ``f * phi_k`` sampled on the grid."""
    w = scaled_kernel(phi, d, k, f.spacing, max_dims=np.asarray(f.dims))
    return ndimage.convolve(f.values, w, mode="constant", cval=0.0)


# -- maximal operators ---------------------------------------------------------


@dataclass
class MaximalParams:
    """Truncation level K, decay L, tangential order N and scale range."""

    K: int
    L: float = 0.0
    N: int = 1
    k_range: tuple = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.L < 0:
            raise ValueError("L must be >= 0")


def grand_order(p: ExponentVector, d: Dilation) -> int:
    """Default grand-maximal order from the exponent vector."""
    val = (1.0 / min(1.0, p.p_minus) - 1.0) * math.log(d.b) / math.log(d.lam_minus)
    return int(math.floor(val)) + 2


def _check_range(k_range):
    ks = list(k_range)
    if not ks:
        raise EmptyRange("empty scale range")
    return ks


def hl_maximal(f: SampledField, d: Dilation, k_range=None) -> SampledField:
    """Anisotropic Hardy-Littlewood maximal function (grid supremum)."""
    ks = _check_range(default_ball_levels(f, d) if k_range is None else k_range)
    absf = np.abs(f.values)
    out = np.zeros_like(absf)
    for k in ks:
        rows, count = ball_rows(d, k, f.spacing, f.dims)
        if count == 0:
            continue
        avg = ball_average(absf, rows, count)
        np.maximum(out, ball_max(avg, rows, 0.0), out)
    return f.like(out)


def iterated_maximal(f: SampledField) -> SampledField:
    """Composition of one-dimensional interval maximal operators, axis by
    axis (first axis innermost)."""
    vals = np.abs(f.values)
    for axis in range(f.n):
        moved = np.moveaxis(vals, axis, 0)
        shape = moved.shape
        lines = moved.reshape(shape[0], -1)
        res = _axis_interval_maximal(lines)
        vals = np.moveaxis(res.reshape(shape), 0, axis)
    return f.like(vals)


def _axis_interval_maximal(lines: np.ndarray) -> np.ndarray:
    """Interval maximal along axis 0, O(len^2) per line, vectorized over
    the batch axis."""
    length, batch = lines.shape
    ps = np.concatenate([np.zeros((1, batch)), np.cumsum(lines, axis=0)])
    best = np.full((length, batch), -np.inf)
    for a in range(length):
        widths = np.arange(1, length - a + 1, dtype=float)[:, None]
        avgs = (ps[a + 1:] - ps[a]) / widths           # rows b = a..len-1
        suffix = np.flip(np.maximum.accumulate(np.flip(avgs, 0), 0), 0)
        np.maximum(best[a:], suffix, best[a:])
    return best


def radial_maximal(f: SampledField, phi: MollifierDescriptor, d: Dilation,
                   k_range=None, check_mean: bool = True) -> SampledField:
    """sup_k |f * phi_k| over the scale range."""
    ks = _check_range(default_scale_range(f, d) if k_range is None else k_range)
    if check_mean:
        require_nonzero_mean(phi, d.n)
    out = np.zeros_like(f.values)
    for k in ks:
        np.maximum(out, np.abs(convolve_scaled(f, phi, d, k)), out)
    return f.like(out)


def nontangential_maximal(f: SampledField, phi: MollifierDescriptor,
                          d: Dilation, k_range=None,
                          check_mean: bool = True) -> SampledField:
    """sup over scales and over translates y in x + B_k (grid points)."""
    ks = _check_range(default_scale_range(f, d) if k_range is None else k_range)
    if check_mean:
        require_nonzero_mean(phi, d.n)
    out = np.zeros_like(f.values)
    for k in ks:
        conv = np.abs(convolve_scaled(f, phi, d, k))
        rows, count = ball_rows(d, -k, f.spacing, f.dims)
        if count:
            conv = ball_max(conv, rows, 0.0)
        np.maximum(out, conv, out)
    return f.like(out)


def grand_maximal(f: SampledField, dictionary, N: int, d: Dilation,
                  k_range=None) -> SampledField:
    """Pointwise max of non-tangential maximal functions over an S_N
    normalized dictionary (a computable lower bound for the grand maximal
    function)."""
    if not dictionary:
        raise EmptyDictionary("dictionary is empty")
    out = np.zeros_like(f.values)
    for phi in dictionary:
        scale = normalize_into_sn(phi, d, N)
        m = nontangential_maximal(f, phi, d, k_range, check_mean=False)
        np.maximum(out, scale * m.values, out)
    return f.like(out)


def _grid_rho(f: SampledField, d: Dilation) -> np.ndarray:
    key = ("rho", f.dims, tuple(f.origin), tuple(f.spacing))
    cache = d.__dict__.setdefault("_rho_cache", {})
    if key not in cache:
        cache[key] = d.rho_many(f.points())
    return cache[key]


def translate_weighted_sup(values: np.ndarray, f: SampledField, d: Dilation,
                           weight_of_rho) -> np.ndarray:
    """sup over grid translates y of ``values(y) * w(rho(x - y))``.

    ``weight_of_rho`` must be nonincreasing in rho; the supremum then equals
    the maximum over nested ball maxima with shell weights, which is what is
    computed here (one sliding-window pass per level).
    """
    m_lo = level_for_cell(d, f.spacing)
    m_hi = level_for_box(d, f.dims, f.spacing) + 1
    out = values * weight_of_rho(0.0)
    for m in range(m_lo, m_hi + 1):
        w = weight_of_rho(d.b ** (m - 1))
        if w <= 0.0:
            continue
        rows, count = ball_rows(d, m, f.spacing, f.dims)
        if count == 0:
            continue
        np.maximum(out, w * ball_max(values, rows, 0.0), out)
    return out


def truncated_maximals(f: SampledField, phi: MollifierDescriptor, d: Dilation,
                       params: MaximalParams, check_mean: bool = True) -> dict:
    """Truncated/decayed maximal variants M0KL, MKL and the tangential TNKL.

    The radial/non-tangential variants damp by
    ``max(1, rho(A^-K .))^-L (1 + b^(-k-K))^-L``; the tangential variant
    weights translates by ``max(1, rho(A^-k(x - y)))^-N`` (grid supremum).
    """
    if check_mean:
        require_nonzero_mean(phi, d.n)
    base = default_scale_range(f, d) if params.k_range is None \
        else range(params.k_range[0], params.k_range[1] + 1)
    ks = [k for k in base if k <= params.K]
    if not ks:
        raise EmptyRange("no scales <= K in range")
    K, L, N = params.K, params.L, params.N
    rho_x = _grid_rho(f, d)
    decay_x = np.maximum(1.0, d.b ** (-float(K)) * rho_x) ** (-L)
    m0 = np.zeros_like(f.values)
    mk = np.zeros_like(f.values)
    tn = np.zeros_like(f.values)
    for k in ks:
        conv = np.abs(convolve_scaled(f, phi, d, k))
        scale_decay = (1.0 + d.b ** (-k - K)) ** (-L)
        m0 = np.maximum(m0, conv * decay_x * scale_decay)
        damped = conv * decay_x
        rows, count = ball_rows(d, -k, f.spacing, f.dims)
        if count:
            mball = ball_max(damped, rows, 0.0)
        else:
            mball = damped
        mk = np.maximum(mk, mball * scale_decay)
        bk = d.b ** (-float(k))
        tang = translate_weighted_sup(
            damped, f, d, lambda rr, bk=bk: np.maximum(1.0, bk * rr) ** (-N))
        tn = np.maximum(tn, tang * scale_decay)
    return {"M0KL": f.like(m0), "MKL": f.like(mk), "TNKL": f.like(tn)}


def peetre_maximal(f: SampledField, phi: MollifierDescriptor, d: Dilation,
                   j: int, t: float) -> SampledField:
    """Translate-penalized supremum of |phi_j * f| with weight
    (1 + b^j rho(y))^-t over grid translates."""
    if t <= 0:
        raise ValueError("t must be positive")
    conv = np.abs(convolve_scaled(f, phi, d, j))
    bj = d.b ** float(j)
    out = translate_weighted_sup(conv, f, d,
                                 lambda rr: (1.0 + bj * rr) ** (-t))
    return f.like(out)
