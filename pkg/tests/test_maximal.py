"""Maximal operator tests against brute-force oracles on coarse grids."""

import numpy as np
import pytest

from anisohardy.dilation import new_dilation
from anisohardy.errors import EmptyDictionary, EmptyRange, ZeroMean
from anisohardy.family import default_family
from anisohardy.maximal import (
    MaximalParams, ball_rows, convolve_scaled, default_ball_levels,
    default_scale_range, grand_maximal, grand_order, hl_maximal,
    iterated_maximal, nontangential_maximal, peetre_maximal, radial_maximal,
    truncated_maximals,
)
from anisohardy.mixednorm import ExponentVector, centered_grid, field_from_function
from anisohardy.mollifiers import MollifierDescriptor, default_dictionary


@pytest.fixture(scope="module")
def iso():
    return new_dilation(2.0 * np.eye(2))


def small_field(dims=(20, 20), halfwidth=1.0):
    grid = centered_grid(dims, halfwidth)

    def fn(pts):
        return np.exp(-8.0 * np.sum(pts * pts, axis=-1))
    return field_from_function(grid, fn)


def hl_bruteforce(f, d, levels):
    """Triple loop over (k, y, x): the oracle for the HL maximal function."""
    vals = np.abs(f.values)
    dims = f.dims
    out = np.zeros(dims)
    for k in levels:
        rows, count = ball_rows(d, k, f.spacing)
        offs = [(t,) + col for col, lo, hi in rows for t in range(lo, hi + 1)]
        for i in range(dims[0]):
            for j in range(dims[1]):
                best = 0.0
                for (dy0, dy1) in offs:           # y = x + offset
                    yi, yj = i + dy0, j + dy1
                    acc = 0.0
                    for (dz0, dz1) in offs:       # z in y + B_k
                        zi, zj = yi + dz0, yj + dz1
                        if 0 <= zi < dims[0] and 0 <= zj < dims[1]:
                            acc += vals[zi, zj]
                    best = max(best, acc / count)
                out[i, j] = max(out[i, j], best)
    return out


def test_hl_matches_bruteforce(iso):
    f = small_field((12, 12))
    levels = [-4, -3]
    got = hl_maximal(f, iso, levels)
    want = hl_bruteforce(f, iso, levels)
    assert np.allclose(got.values, want, atol=1e-13)


def test_hl_constant_fixed(iso):
    grid = centered_grid((24, 24), 1.0)
    c = 0.7
    f = grid.like(np.full(grid.dims, c))
    out = hl_maximal(f, iso)
    assert np.allclose(out.values, c, atol=1e-12)


def test_hl_monotone(iso):
    rng = np.random.default_rng(0)
    grid = centered_grid((20, 20), 1.0)
    f = grid.like(np.abs(rng.normal(size=grid.dims)))
    g = grid.like(f.values + np.abs(rng.normal(size=grid.dims)))
    mf = hl_maximal(f, iso).values
    mg = hl_maximal(g, iso).values
    assert np.all(mf <= mg + 1e-13)
    with pytest.raises(EmptyRange):
        hl_maximal(f, iso, [])


def test_hl_indicator_decay(iso):
    # value at distance rho ~ b^m from a unit-ball indicator decays like b^-m
    grid = centered_grid((96, 96), 6.0)
    from anisohardy.dilation import DilatedBall
    from anisohardy.mixednorm import indicator_field
    f = indicator_field(grid, iso, DilatedBall((0.0, 0.0), 0))
    out = hl_maximal(f, iso).values
    pts = grid.points()
    rho = iso.rho_many(pts)
    for m in (2, 3):
        sel = np.abs(rho - iso.b**m) < 1e-9
        assert sel.any()
        vals = out[sel]
        lo, hi = vals.min(), vals.max()
        assert hi <= 8.0 * iso.b ** (-m - 1) * iso.b
        assert lo >= iso.b ** (-m - 1) / 8.0


def iterated_bruteforce(f):
    vals = np.abs(f.values)
    for axis in range(2):
        moved = np.moveaxis(vals, axis, 0)
        L = moved.shape[0]
        res = np.zeros_like(moved)
        for a in range(L):
            for b in range(a, L):
                seg = moved[a:b + 1].mean(axis=0)
                res[a:b + 1] = np.maximum(res[a:b + 1], seg[None])
        vals = np.moveaxis(res, 0, axis)
    return vals


def test_iterated_matches_bruteforce():
    rng = np.random.default_rng(2)
    grid = centered_grid((10, 9), 1.0)
    f = grid.like(rng.normal(size=grid.dims))
    got = iterated_maximal(f).values
    want = iterated_bruteforce(f)
    assert np.allclose(got, want, atol=1e-12)


def test_iterated_constant_and_separable():
    grid = centered_grid((16, 16), 1.0)
    f = grid.like(np.full(grid.dims, 2.5))
    assert np.allclose(iterated_maximal(f).values, 2.5)
    rng = np.random.default_rng(4)
    u = np.abs(rng.normal(size=16))
    v = np.abs(rng.normal(size=16))
    sep = grid.like(np.outer(u, v))
    got = iterated_maximal(sep).values
    gu = iterated_maximal(grid.like(np.broadcast_to(u[:, None], (16, 16)))).values
    gv = iterated_maximal(grid.like(np.broadcast_to(v[None, :], (16, 16)))).values
    assert np.allclose(got, gu[:, :1] * gv[:1, :], rtol=1e-10)


def test_hl_dominated_by_iterated(iso):
    for f in default_family(dims=(32, 32), count=6):
        mhl = hl_maximal(f, iso).values
        mit = iterated_maximal(f).values
        pos = mit > 1e-14
        assert np.all(mhl[pos] <= 40.0 * mit[pos])
        assert np.all(mhl[~pos] <= 1e-12)


def test_radial_zero_and_scale_shift(iso):
    grid = centered_grid((24, 24), 1.0)
    phi = MollifierDescriptor("gaussian", width=0.3)
    zero = grid.zeros_like()
    assert np.allclose(radial_maximal(zero, phi, iso).values, 0.0)
    with pytest.raises(ZeroMean):
        radial_maximal(small_field(), MollifierDescriptor("annulus-bandlimited",
                                                          width=0.3), iso)


def test_radial_dominated_by_hl(iso):
    # uniform-ball mollifier: radial maximal is a ball average, so it is
    # dominated by the HL maximal up to rasterization slack
    f = small_field((40, 40))
    w = iso.inradius(0)

    def unit_ball_profile(pts):
        inside = iso.in_ball(pts, 0)
        return inside.astype(float)

    phi = MollifierDescriptor.custom(unit_ball_profile,
                                     support_radius=iso.outradius(0) * 1.01)
    m0 = radial_maximal(f, phi, iso).values
    mhl = hl_maximal(f, iso).values
    slack = 1.0 + 4.0 * float(f.spacing.max()) / iso.inradius(0)
    assert np.all(m0 <= slack * mhl + 1e-12)


def test_nontangential_dominates_radial(iso):
    f = small_field((28, 28))
    phi = MollifierDescriptor("gaussian", width=0.35)
    m0 = radial_maximal(f, phi, iso).values
    m = nontangential_maximal(f, phi, iso).values
    assert np.all(m >= m0 - 1e-13)
    zero = centered_grid((28, 28), 1.0).zeros_like()
    assert np.allclose(nontangential_maximal(zero, phi, iso).values, 0.0)


def test_grand_maximal_dictionary(iso):
    f = small_field((24, 24))
    N = grand_order(ExponentVector((0.9, 1.1)), iso)
    dct = default_dictionary()
    full = grand_maximal(f, dct, N, iso).values
    half = grand_maximal(f, dct[:4], N, iso).values
    assert np.all(full >= half - 1e-13)          # sup over superset
    single = grand_maximal(f, dct[:1], N, iso).values
    from anisohardy.mollifiers import normalize_into_sn
    scale = normalize_into_sn(dct[0], iso, N)
    direct = nontangential_maximal(f, dct[0], iso, check_mean=False).values
    assert np.allclose(single, scale * direct, rtol=1e-12)
    with pytest.raises(EmptyDictionary):
        grand_maximal(f, [], N, iso)


def test_truncated_limits(iso):
    f = small_field((24, 24))
    phi = MollifierDescriptor("gaussian", width=0.35)
    scales = default_scale_range(f, iso)
    K = scales.stop - 1
    res = truncated_maximals(f, phi, iso, MaximalParams(K=K, L=0.0, N=2))
    m = nontangential_maximal(f, phi, iso).values
    assert np.allclose(res["MKL"].values, m, rtol=1e-12)
    # K monotonicity of the radial variant
    res_lo = truncated_maximals(f, phi, iso, MaximalParams(K=K - 2, L=0.0, N=2))
    assert np.all(res_lo["M0KL"].values <= res["M0KL"].values + 1e-13)
    # tangential dominates the non-tangential variant (weight <= 1)
    assert np.all(res["TNKL"].values >= res["MKL"].values - 1e-12)


def test_lemma_tangential_vs_hl_composition(iso):
    # pointwise bound of the tangential variant by HL of the decayed one
    f = small_field((24, 24))
    phi = MollifierDescriptor("gaussian", width=0.35)
    N = 2
    lam = 1.0 / N
    params = MaximalParams(K=0, L=1.0, N=N)
    res = truncated_maximals(f, phi, iso, params)
    t_pow = res["TNKL"].values ** lam
    mhl = hl_maximal(f.like(res["MKL"].values ** lam), iso).values
    pos = mhl > 1e-14
    ratio = t_pow[pos] / mhl[pos]
    assert np.isfinite(ratio).all()
    assert ratio.max() < 50.0


def peetre_bruteforce(f, phi, d, j, t):
    conv = np.abs(convolve_scaled(f, phi, d, j))
    dims = f.dims
    out = np.zeros(dims)
    pts_idx = [(i, jj) for i in range(dims[0]) for jj in range(dims[1])]
    for (i, jj) in pts_idx:
        best = 0.0
        for (yi, yj) in pts_idx:
            off = np.array([(yi - i) * f.spacing[0], (yj - jj) * f.spacing[1]])
            w = (1.0 + d.b**j * d.rho(off)) ** (-t)
            best = max(best, conv[yi, yj] * w)
        out[i, jj] = best
    return out


def test_peetre_matches_bruteforce(iso):
    f = small_field((10, 10))
    phi = MollifierDescriptor("gaussian", width=0.4)
    got = peetre_maximal(f, phi, iso, j=1, t=2.0).values
    want = peetre_bruteforce(f, phi, iso, 1, 2.0)
    assert np.allclose(got, want, rtol=1e-12)


def test_peetre_dominates_convolution(iso):
    f = small_field((20, 20))
    phi = MollifierDescriptor("gaussian", width=0.4)
    conv = np.abs(convolve_scaled(f, phi, iso, 0))
    pm = peetre_maximal(f, phi, iso, j=0, t=3.0).values
    assert np.all(pm >= conv - 1e-13)
    # large t: the translate penalty kills everything except y ~ 0
    pm_big = peetre_maximal(f, phi, iso, j=0, t=60.0).values
    assert np.allclose(pm_big, conv, rtol=1e-6, atol=1e-12)


def test_default_ranges(iso):
    f = small_field((32, 32))
    lv = default_ball_levels(f, iso)
    assert lv.start < lv.stop
    ks = default_scale_range(f, iso)
    assert ks.start < 0 < ks.stop
    assert grand_order(ExponentVector((0.5, 1.0)), iso) == 4
    assert grand_order(ExponentVector((1.5, 2.0)), iso) == 2
