"""Atom admissibility, validation, construction and coefficient functionals."""

import numpy as np
import pytest

from anisohardy.atoms import (
    Atom, AtomicCombination, AtomParams, coefficient_functional,
    finite_decomposition_functional, indicator_functional, load_manifest,
    make_atom, min_moment_order, save_combination, validate_atom,
)
from anisohardy.dilation import DilatedBall, new_dilation
from anisohardy.errors import DegenerateProfile
from anisohardy.mixednorm import (
    ExponentVector, centered_grid, indicator_ball_norm, mixed_norm,
    rasterize_ball,
)
from anisohardy.mollifiers import MollifierDescriptor


@pytest.fixture(scope="module")
def iso():
    return new_dilation(2.0 * np.eye(2))


@pytest.fixture(scope="module")
def grid():
    return centered_grid((128, 128), 3.0)


def test_min_moment_order(iso):
    assert min_moment_order(ExponentVector((1.0, 1.5)), iso) == 0
    # p_minus = 1/2, b = 4, lam_minus = 2: floor(1 * ln4/ln2) = 2
    assert min_moment_order(ExponentVector((0.5, 0.8)), iso) == 2
    # floor of a negative clamps to 0
    assert min_moment_order(ExponentVector((2.0, 3.0)), iso) == 0


def test_params_ranges(iso):
    p = ExponentVector((0.7, 0.9))
    with pytest.raises(ValueError):
        AtomParams(p, 1.0, 0)
    with pytest.raises(ValueError):
        AtomParams(p, 2.0, -1)
    assert AtomParams(p, np.inf, 0).admissible_for(iso)
    assert AtomParams(p, 2.0, 0).decomposition_ready()
    assert not AtomParams(ExponentVector((1.5, 3.0)), 2.0, 0).decomposition_ready()


def test_validate_zero_field(iso, grid):
    params = AtomParams(ExponentVector((0.7, 0.9)), 2.0, 1)
    ball = DilatedBall((0.0, 0.0), 1)
    cert = validate_atom(grid.zeros_like(), ball, params, iso)
    assert cert["supportOK"] and cert["sizeRatio"] == 0.0
    assert cert["maxMomentResidual"] == 0.0
    assert Atom(grid.zeros_like(), ball, params, cert).is_valid


def test_constant_shift_breaks_moments(iso, grid):
    p = ExponentVector((0.7, 0.9))
    params = AtomParams(p, 2.0, 0)
    ball = DilatedBall((0.0, 0.0), 1)
    atom = make_atom(MollifierDescriptor("moment-free-bump", width=0.8, order=1),
                     ball, params, iso, grid)
    assert atom.is_valid
    mask = rasterize_ball(grid, iso, ball)
    eps = 1e-3
    shifted = grid.like(atom.field.values + eps * mask)
    cert = validate_atom(shifted, ball, params, iso)
    # gamma = 0 moment becomes eps * |B| exactly (up to rounding)
    measure = cert["ballMeasure"]
    assert cert["maxMomentResidual"] * measure ** 0.5 == pytest.approx(
        eps * measure, rel=1e-9)
    assert not Atom(shifted, ball, params, cert).is_valid


def test_two_bump_closed_form(iso, grid):
    # c (1_{B-} - 1_{B+}) normalized to size ratio exactly one
    p = ExponentVector((0.7, 0.9))
    params = AtomParams(p, 2.0, 0)
    outer = DilatedBall((0.0, 0.0), 2)
    minus = rasterize_ball(grid, iso, DilatedBall((-0.8, 0.0), -1))
    plus = rasterize_ball(grid, iso, DilatedBall((0.8, 0.0), -1))
    diff = minus.astype(float) - plus.astype(float)
    cell = grid.cell_volume
    lr = (np.sum(np.abs(diff) ** 2) * cell) ** 0.5
    measure = rasterize_ball(grid, iso, outer).sum() * cell
    ind = indicator_ball_norm(iso, outer, p, grid)
    c = measure ** 0.5 / (ind * lr)
    a = grid.like(c * diff)
    cert = validate_atom(a, outer, params, iso)
    assert cert["supportOK"]
    assert cert["sizeRatio"] == pytest.approx(1.0, rel=1e-12)
    # the two rasterized sub-balls are congruent, so gamma = 0 cancels
    assert cert["maxMomentResidual"] <= 1e-12 * cert["lrNorm"]


def test_make_atom_gaussian_s1(iso, grid):
    p = ExponentVector((0.7, 0.9))
    params = AtomParams(p, np.inf, 1)
    ball = DilatedBall((0.3, -0.4), 1)
    atom = make_atom(MollifierDescriptor("gaussian", width=0.4), ball,
                     params, iso, grid)
    assert atom.is_valid
    assert atom.certificate["sizeRatio"] == pytest.approx(1.0, rel=1e-12)
    assert atom.certificate["maxMomentResidual"] <= 1e-10 * atom.certificate["lrNorm"]


def test_make_atom_moment_free_noop(iso, grid):
    # profile already moment-free: projection changes (almost) nothing
    p = ExponentVector((0.8, 1.0))
    params = AtomParams(p, 2.0, 0)
    ball = DilatedBall((0.0, 0.0), 1)
    prof = MollifierDescriptor("moment-free-bump", width=0.9, order=1)
    atom = make_atom(prof, ball, params, iso, grid)
    from anisohardy.atoms import intrinsic_coords
    mask = rasterize_ball(grid, iso, ball)
    u = intrinsic_coords(grid, iso, ball)
    stretch = prof.support_radius(2) / iso.inradius(0)
    raw = np.zeros(grid.dims)
    raw[mask] = prof.sample(u[mask] * stretch)
    direction = raw[mask] / np.linalg.norm(raw[mask])
    got = atom.field.values[mask] / np.linalg.norm(atom.field.values[mask])
    align = abs(float(direction @ got))
    assert align >= 1.0 - 1e-4


def test_make_atom_degenerate(iso, grid):
    p = ExponentVector((0.8, 1.0))
    params = AtomParams(p, 2.0, 0)
    ball = DilatedBall((0.0, 0.0), 1)

    def const(pts):
        return np.ones(pts.shape[:-1])

    with pytest.raises(DegenerateProfile):
        make_atom(MollifierDescriptor.custom(const, support_radius=10.0),
                  ball, params, iso, grid)


def test_isotropic_reduction_size(iso, grid):
    # classical normalization ||a||_r <= |B|^(1/r - 1/q) for p = (q, q)
    q = 0.8
    p = ExponentVector((q, q))
    params = AtomParams(p, 2.0, min_moment_order(p, iso))
    ball = DilatedBall((0.0, 0.0), 2)
    atom = make_atom(MollifierDescriptor("gaussian", width=0.4), ball,
                     params, iso, grid)
    measure = atom.certificate["ballMeasure"]
    assert atom.certificate["lrNorm"] <= measure ** (1.0 / 2.0 - 1.0 / q) * (
        1.0 + 1e-9)


def test_functional_single_term(iso, grid):
    p = ExponentVector((0.7, 0.9))
    params = AtomParams(p, 2.0, 0)
    atom = make_atom(MollifierDescriptor("gaussian", width=0.4),
                     DilatedBall((0.0, 0.0), 1), params, iso, grid)
    for lam in (1.0, -3.25, 0.5):
        combo = AtomicCombination([lam], [atom])
        assert coefficient_functional(combo, p, iso, grid) == pytest.approx(
            abs(lam), rel=1e-12)


def test_functional_disjoint_equal_balls(iso, grid):
    # grid-aligned centers keep rasterizations congruent; the closed form
    # for p = (q, q) is |lambda| N^(1/q), independent of p_under
    q = 0.75
    p = ExponentVector((q, q))
    lam = 1.7
    step = 16 * float(grid.spacing[0])
    centers = [(-step, -step), (step, -step), (-step, step), (step, step)]
    balls = [DilatedBall(c, -2) for c in centers]
    masks = [rasterize_ball(grid, iso, b) for b in balls]
    total = np.sum([m.astype(int) for m in masks], axis=0)
    assert total.max() == 1                   # pairwise disjoint
    val = indicator_functional([lam] * 4, balls, p, iso, grid)
    assert val == pytest.approx(lam * 4 ** (1.0 / q), rel=1e-10)


def test_lemma_ell1_domination(iso, grid):
    # sum |lambda_i| <= functional for exponents in (0, 1]^n
    rng = np.random.default_rng(12)
    p = ExponentVector((0.7, 0.9))
    for _ in range(100):
        m = rng.integers(1, 6)
        lambdas = rng.normal(size=m) * 3.0
        balls = []
        for _ in range(m):
            level = int(rng.integers(-2, 2))
            reach = 3.0 - iso.outradius(level)
            c = rng.uniform(-reach, reach, size=2)
            balls.append(DilatedBall(tuple(c), level))
        val = indicator_functional(lambdas, balls, p, iso, grid)
        assert np.sum(np.abs(lambdas)) <= val * (1.0 + 1e-12)


def test_finite_functional_matches_and_empty(iso, grid):
    p = ExponentVector((0.7, 0.9))
    params = AtomParams(p, 2.0, 0)
    atom = make_atom(MollifierDescriptor("gaussian", width=0.4),
                     DilatedBall((0.2, 0.1), 1), params, iso, grid)
    combo = AtomicCombination([2.0, -1.0], [atom, atom])
    assert finite_decomposition_functional(combo, p, iso, grid) == \
        coefficient_functional(combo, p, iso, grid)
    empty = AtomicCombination([], [])
    assert finite_decomposition_functional(empty, p, iso, grid) == 0.0


def test_split_atom_bounded_growth(iso, grid):
    # splitting an atom into two halves changes the functional by a bounded
    # factor (2^(1/p_under - 1) at most for identical balls)
    p = ExponentVector((0.7, 0.9))
    params = AtomParams(p, 2.0, 0)
    atom = make_atom(MollifierDescriptor("gaussian", width=0.4),
                     DilatedBall((0.0, 0.0), 1), params, iso, grid)
    whole = coefficient_functional(AtomicCombination([1.0], [atom]), p, iso, grid)
    halves = coefficient_functional(
        AtomicCombination([0.5, 0.5], [atom, atom]), p, iso, grid)
    factor = halves / whole
    assert 1.0 - 1e-12 <= factor <= 2.0 ** (1.0 / p.p_under - 1.0) + 1e-9


def test_manifest_roundtrip(iso, grid, tmp_path):
    p = ExponentVector((0.7, 0.9))
    params = AtomParams(p, 2.0, 0)
    a1 = make_atom(MollifierDescriptor("gaussian", width=0.4),
                   DilatedBall((0.0, 0.0), 1), params, iso, grid)
    a2 = make_atom(MollifierDescriptor("compact-bump", width=0.8),
                   DilatedBall((0.5, -0.25), 0), params, iso, grid)
    combo = AtomicCombination([1.5, -0.5], [a1, a2])
    path = tmp_path / "combo.txt"
    save_combination(path, combo, directory=str(tmp_path))
    rows = load_manifest(path)
    assert rows == [(1.5, (0.0, 0.0), 1), (-0.5, (0.5, -0.25), 0)]
    from anisohardy.mixednorm import read_field
    back = read_field(tmp_path / "atom_0000.amnf")
    assert np.array_equal(back.values, a1.field.values)
