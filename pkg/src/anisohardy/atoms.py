"""Atoms supported in dilated balls: admissibility, validation, construction,
and the indicator coefficient functionals for atomic combinations.

Sizes are checked against the rasterized ball measure (cell count times cell
volume) so that construction, validation and the indicator-norm cancellation
are mutually consistent on any grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dilation import DilatedBall, Dilation
from .errors import DegenerateProfile, GridMismatch
from .mixednorm import (
    ExponentVector, SampledField, indicator_ball_norm, mixed_norm,
    rasterize_ball,
)
from .mollifiers import MollifierDescriptor

MOMENT_TOL = 1e-10


def min_moment_order(p: ExponentVector, d: Dilation) -> int:
    """Least admissible vanishing-moment order (clamped to Z_+)."""
    val = (1.0 / p.p_minus - 1.0) * math.log(d.b) / math.log(d.lam_minus)
    return max(0, int(math.floor(val)))


@dataclass(frozen=True)
class AtomParams:
    """Exponent vector, integrability r in (1, inf], moment order s."""

    p: ExponentVector
    r: float
    s: int

    def __post_init__(self):
        if not self.r > 1.0:
            raise ValueError("r must exceed 1")
        if self.s < 0:
            raise ValueError("s must be a nonnegative integer")

    def admissible_for(self, d: Dilation) -> bool:
        return self.s >= min_moment_order(self.p, d)

    def decomposition_ready(self) -> bool:
        return self.r > max(self.p.p_plus, 1.0)


@dataclass
class Atom:
    """Candidate atom with its support ball and validation certificate."""

    field: SampledField
    ball: DilatedBall
    params: AtomParams
    certificate: dict

    @property
    def is_valid(self) -> bool:
        cert = self.certificate
        return (cert["supportOK"]
                and cert["sizeRatio"] <= 1.0 + cert["sizeSlack"]
                and cert["maxMomentResidual"] <= MOMENT_TOL * max(
                    cert["lrNorm"], 1e-300))


@dataclass
class AtomicCombination:
    """Weighted finite list of atoms."""

    lambdas: list
    atoms: list

    def __post_init__(self):
        if len(self.lambdas) != len(self.atoms):
            raise ValueError("weights and atoms must align")

    def reconstruct(self, grid: SampledField) -> SampledField:
        out = np.zeros(grid.dims)
        for lam, atom in zip(self.lambdas, self.atoms):
            if not atom.field.same_grid(grid):
                raise GridMismatch("atom sampled on a different grid")
            out += lam * atom.field.values
        return grid.like(out)


def intrinsic_coords(grid: SampledField, d: Dilation,
                     ball: DilatedBall) -> np.ndarray:
    """Ball-intrinsic coordinates ``A^-level (x - center)`` on the grid."""
    rel = grid.points() - np.asarray(ball.center, dtype=float)
    return rel @ d.matrix_power(-ball.level).T


def monomial_basis(u: np.ndarray, s: int, mask=None) -> np.ndarray:
    """Monomials of total degree <= s in intrinsic coordinates.

    Returns an array of shape (n_basis, ...) over the masked points.
    """
    n = u.shape[-1]
    coords = [u[..., j][mask] if mask is not None else u[..., j]
              for j in range(n)]
    basis = []
    if n == 2:
        for a in range(s + 1):
            for b in range(s + 1 - a):
                basis.append(coords[0] ** a * coords[1] ** b)
    elif n == 1:
        for a in range(s + 1):
            basis.append(coords[0] ** a)
    else:
        for a in range(s + 1):
            for b in range(s + 1 - a):
                for c in range(s + 1 - a - b):
                    basis.append(coords[0] ** a * coords[1] ** b
                                 * coords[2] ** c)
    return np.stack(basis)


def lr_norm_masked(values: np.ndarray, mask, cell: float, r: float) -> float:
    sel = np.abs(values[mask])
    if np.isinf(r):
        return float(sel.max()) if sel.size else 0.0
    return float((np.sum(sel ** r) * cell) ** (1.0 / r))


def validate_atom(a: SampledField, ball: DilatedBall, params: AtomParams,
                  d: Dilation) -> dict:
    """Quadrature certificate for the three atom conditions.

    ``sizeRatio`` is ``||a||_r ||1_B|| / |B|^(1/r)`` with the rasterized
    ball measure; ``maxMomentResidual`` is the largest intrinsic-coordinate
    moment, scaled to be comparable with ``||a||_r``.
    """
    mask = rasterize_ball(a, d, ball)
    cell = a.cell_volume
    outside_mass = float(np.sum(np.abs(a.values[~mask])) * cell)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("rasterized ball is empty on this grid")
    measure = count * cell
    lr = lr_norm_masked(a.values, mask, cell, params.r)
    ind_norm = mixed_norm(a.like(mask.astype(float)), params.p)
    if np.isinf(params.r):
        size_ratio = lr * ind_norm
        moment_scale = measure
    else:
        size_ratio = lr * ind_norm / measure ** (1.0 / params.r)
        moment_scale = measure ** (1.0 - 1.0 / params.r)
    u = intrinsic_coords(a, d, ball)
    basis = monomial_basis(u, params.s, mask)
    moments = basis @ (a.values[mask] * cell)
    resid = float(np.max(np.abs(moments))) / moment_scale
    h_over_diam = float(a.spacing.max()) / (2.0 * d.inradius(ball.level))
    return {
        "supportOK": outside_mass == 0.0,
        "sizeRatio": size_ratio,
        "maxMomentResidual": resid,
        "lrNorm": lr,
        "indicatorNorm": ind_norm,
        "ballMeasure": measure,
        "sizeSlack": 2.0 * h_over_diam,
    }


def make_atom(profile: MollifierDescriptor, ball: DilatedBall,
              params: AtomParams, d: Dilation, grid: SampledField) -> Atom:
    """Rescale a profile into the ball, project out polynomials of degree
    <= s, and normalize the size ratio to one.

    The profile template lives on the Euclidean ball of its support radius;
    it is shrunk so that support sits inside the inscribed ball of the
    ellipsoid, which keeps already-moment-free profiles moment-free up to
    quadrature error.
    """
    mask = rasterize_ball(grid, d, ball)
    u = intrinsic_coords(grid, d, ball)
    stretch = profile.support_radius(d.n) / d.inradius(0)
    vals = np.zeros(grid.dims)
    vals[mask] = profile.sample(u[mask] * stretch)
    raw_scale = float(np.max(np.abs(vals[mask]))) if mask.any() else 0.0

    basis = monomial_basis(u, params.s, mask)
    gram = basis @ basis.T
    rhs = basis @ vals[mask]
    coef, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    vals[mask] -= coef @ basis

    cell = grid.cell_volume
    measure = mask.sum() * cell
    lr = lr_norm_masked(vals, mask, cell, params.r)
    scale_ref = raw_scale if np.isinf(params.r) \
        else raw_scale * measure ** (1.0 / params.r)
    if raw_scale == 0.0 or lr <= 1e-10 * scale_ref:
        raise DegenerateProfile(
            "projection removed the profile (residual L^r %.3e)" % lr)
    ind_norm = indicator_ball_norm(d, ball, params.p, grid)
    target = 1.0 if np.isinf(params.r) else measure ** (1.0 / params.r)
    vals *= target / (ind_norm * lr)
    fld = grid.like(vals)
    cert = validate_atom(fld, ball, params, d)
    return Atom(fld, ball, params, cert)


def _indicator_aggregate(lambdas, balls, p: ExponentVector, d: Dilation,
                         grid: SampledField) -> float:
    acc = np.zeros(grid.dims)
    for lam, ball in zip(lambdas, balls):
        mask = rasterize_ball(grid, d, ball)
        norm = mixed_norm(grid.like(mask.astype(float)), p)
        acc += (abs(lam) / norm) ** p.p_under * mask
    return mixed_norm(grid.like(acc ** (1.0 / p.p_under)), p)


def coefficient_functional(combo: AtomicCombination, p: ExponentVector,
                           d: Dilation, grid: SampledField) -> float:
    """Mixed norm of the ell^p_under aggregated normalized ball indicators."""
    if not combo.atoms:
        return 0.0
    return _indicator_aggregate(combo.lambdas,
                                [a.ball for a in combo.atoms], p, d, grid)


def finite_decomposition_functional(combo: AtomicCombination,
                                    p: ExponentVector, d: Dilation,
                                    grid: SampledField) -> float:
    """Same functional restricted to the given finite list (no infimum)."""
    return coefficient_functional(combo, p, d, grid)


def indicator_functional(lambdas, balls, p: ExponentVector, d: Dilation,
                         grid: SampledField) -> float:
    """Functional on raw (lambda, ball) pairs, without atom payloads."""
    if len(lambdas) == 0:
        return 0.0
    return _indicator_aggregate(lambdas, balls, p, d, grid)


# -- combination manifest (text) ------------------------------------------------


def save_combination(path, combo: AtomicCombination, directory=None) -> None:
    """Write ``lambda center... level`` per line; atom payloads go to
    ``directory`` as AMNF files when given."""
    from .mixednorm import write_field
    lines = []
    for i, (lam, atom) in enumerate(zip(combo.lambdas, combo.atoms)):
        center = " ".join("%.17g" % c for c in atom.ball.center)
        lines.append("%.17g %s %d" % (lam, center, atom.ball.level))
        if directory is not None:
            write_field("%s/atom_%04d.amnf" % (directory, i), atom.field)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def load_manifest(path) -> list:
    """Parse the text manifest into (lambda, center, level) tuples."""
    out = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            lam = float(parts[0])
            level = int(parts[-1])
            center = tuple(float(v) for v in parts[1:-1])
            out.append((lam, center, level))
    return out
