"""Constructive Calderon-Zygmund / atomic decomposition on sampled fields.

Level sets of the grand maximal field are covered by Whitney families of
dilated balls, smooth partitions of unity are built from a fixed bump scaled
per ball, local polynomial components are removed by weighted projections
(with second-generation corrections between consecutive levels), and the
differences are normalized into atoms.

Grid conventions: the complement of a region includes everything off the
grid, so regions are always bounded; all memberships are cell-center tests.
The telescoped series is truncated to a finite level range; the part below
the bottom level is returned explicitly as the ``good`` field, and the
reconstruction residual measures the exactness of

    f = good + sum_k sum_i lambda_i^k a_i^k

on the grid, which certifies every constructed object.  The sup norm of the
good part is reported separately (it cannot drop below the box-dilution
floor on a finite grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .atoms import Atom, AtomParams, indicator_functional, monomial_basis
from .dilation import DilatedBall, Dilation
from .errors import (
    CoverageFailure, EmptyDenominator, IllConditioned, ResidualTooLarge,
)
from .maximal import ball_min_mask, ball_rows, grand_maximal, grand_order
from .mixednorm import ExponentVector, SampledField, mixed_norm, rasterize_ball
from .mollifiers import default_dictionary

COND_LIMIT = 1e8


def level_set(mf: SampledField, k: int) -> np.ndarray:
    """Super-level mask {mf > 2^k}."""
    return mf.values > 2.0 ** k


@dataclass
class WhitneyCover:
    """Centers/levels of the cover plus its machine-checked properties."""

    centers: list                 # grid index tuples
    levels: list                  # ball levels l_i
    t: int
    report: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.centers)

    def ball(self, grid: SampledField, i: int,uplift: int = 0) -> DilatedBall:
        idx = np.asarray(self.centers[i], dtype=float)
        center = grid.origin + (idx + 0.5) * grid.spacing
        return DilatedBall(tuple(center), self.levels[i] + uplift)


def _reach_levels(omega: np.ndarray, grid: SampledField, d: Dilation):
    """reach(x) = max m with x + B_m inside the region (off-grid counts as
    complement); returns (reach array, m_floor)."""
    from .maximal import level_for_cell
    m_floor = level_for_cell(d, grid.spacing)
    reach = np.full(grid.dims, m_floor - 1, dtype=int)
    reach[omega] = m_floor
    current = omega.copy()
    m = m_floor
    while current.any():
        m += 1
        rows, count = ball_rows(d, m, grid.spacing, grid.dims)
        if ball_covers_box := (d.inradius(m) >= float(
                np.linalg.norm(np.asarray(grid.dims) * grid.spacing))):
            break
        eroded = ball_min_mask(omega, rows) & current
        reach[eroded] = m
        current = eroded
    return reach, m_floor


def whitney_cover(omega: np.ndarray, grid: SampledField, d: Dilation,
                  t: int) -> WhitneyCover:
    """Greedy Whitney cover of a grid region by dilated balls.

    Candidates are scanned by decreasing interior depth; a candidate is
    accepted when its core ball at level ``l - omega`` is disjoint from all
    accepted cores.  The five cover properties are machine-checked on the
    result.
    """
    omega = np.asarray(omega, dtype=bool)
    if not omega.any():
        return WhitneyCover([], [], t, {"empty": True})
    reach, m_floor = _reach_levels(omega, grid, d)
    flat_idx = np.nonzero(omega.reshape(-1))[0]
    order = np.lexsort((flat_idx, -reach.reshape(-1)[flat_idx]))
    occupancy = np.zeros(grid.dims, dtype=bool)
    covered = np.zeros(grid.dims, dtype=bool)
    centers, levels = [], []
    core_masks = []
    for pos in order:
        fi = flat_idx[pos]
        idx = np.unravel_index(fi, grid.dims)
        lvl = int(reach[idx]) - t
        core = _ball_mask_at(grid, d, idx, lvl - d.omega)
        if (occupancy & core).any():
            continue
        occupancy |= core
        centers.append(tuple(int(v) for v in idx))
        levels.append(lvl)
        core_masks.append(core)
        covered |= _ball_mask_at(grid, d, idx, lvl)
        if covered[omega].all():
            # remaining candidates are already covered; keep scanning only
            # for depth ties is unnecessary for the cover properties
            if (covered & omega).sum() == omega.sum():
                break
    cover = WhitneyCover(centers, levels, t)
    cover.report = check_whitney(cover, omega, grid, d, reach)
    if not cover.report["covers"]:
        raise CoverageFailure("greedy cover missed %d cells"
                              % cover.report["uncovered"])
    return cover


def _ball_mask_at(grid: SampledField, d: Dilation, idx, level: int):
    """Rasterized ball around the cell-center ``idx`` via the offset stencil."""
    rows, _ = ball_rows(d, level, grid.spacing, grid.dims)
    mask = np.zeros(grid.dims, dtype=bool)
    base = tuple(int(v) for v in idx)
    for col, lo, hi in rows:
        target = [base[j + 1] + col[j] for j in range(len(col))]
        if any(tj < 0 or tj >= grid.dims[j + 1] for j, tj in enumerate(target)):
            continue
        a = max(0, base[0] + lo)
        b = min(grid.dims[0] - 1, base[0] + hi)
        if a > b:
            continue
        mask[(slice(a, b + 1),) + tuple(target)] = True
    return mask


def check_whitney(cover: WhitneyCover, omega, grid: SampledField,
                  d: Dilation, reach=None) -> dict:
    """Machine-check the five cover properties (grid-sense)."""
    omega = np.asarray(omega, dtype=bool)
    k = len(cover)
    if k == 0:
        return {"empty": True, "covers": not omega.any(), "uncovered":
                int(omega.sum()), "disjointCores": True, "proximity": True,
                "levelComparability": True, "overlapCount": 0}
    if reach is None:
        reach, _ = _reach_levels(omega, grid, d)
    union = np.zeros(grid.dims, dtype=bool)
    cores = np.zeros(grid.dims, dtype=int)
    t = cover.t
    masks_enlarged = []
    out_corners = []
    for i in range(k):
        idx, lvl = cover.centers[i], cover.levels[i]
        union |= _ball_mask_at(grid, d, idx, lvl)
        cores += _ball_mask_at(grid, d, idx, lvl - d.omega).astype(int)
        masks_enlarged.append(_ball_mask_at(grid, d, idx, lvl + t - 2 * d.omega))
    covers = bool(union[omega].all())
    disjoint = int(cores.max()) <= 1
    # (iii): reach equals l + t by construction; re-check from the reach map
    proximity = all(reach[cover.centers[i]] == cover.levels[i] + t
                    for i in range(k))
    # (iv) and (v) on the enlarged balls
    level_ok = True
    overlap = 0
    out_of_level = 0
    for i in range(k):
        cnt = 0
        for j in range(k):
            if (masks_enlarged[i] & masks_enlarged[j]).any():
                cnt += 1
                if abs(cover.levels[i] - cover.levels[j]) > d.omega:
                    out_of_level += 1
                    level_ok = False
        overlap = max(overlap, cnt)
    return {"covers": covers, "uncovered": int(omega.sum() - union[omega].sum()),
            "disjointCores": disjoint, "proximity": proximity,
            "levelComparability": level_ok, "outOfLevelPairs": out_of_level,
            "overlapCount": overlap, "empty": False}


# -- partition of unity ---------------------------------------------------------


def _smoothstep(s):
    """C-infinity ramp: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    a = np.zeros_like(s)
    b = np.zeros_like(s)
    pos = s > 0
    a[pos] = np.exp(-1.0 / s[pos])
    neg = s < 1
    b[neg] = np.exp(-1.0 / (1.0 - s[neg]))
    return a / (a + b)


def bump_profile(d: Dilation, u: np.ndarray) -> np.ndarray:
    """Smooth bump, identically 1 on the unit ellipsoid, supported in its
    omega-fold dilate."""
    v0 = np.einsum("...i,ij,...j->...", u, d.S, u) / d.c
    m = d.matrix_power(-d.omega)
    q = m.T @ d.S @ m
    kappa = 1.0 / float(np.max(np.linalg.eigvals(
        np.linalg.solve(d.S, q)).real))
    return _smoothstep((kappa - v0) / (kappa - 1.0))


def partition_of_unity(cover: WhitneyCover, grid: SampledField,
                       d: Dilation) -> list:
    """Fields eta_i = xi_i / sum_j xi_j with xi the per-ball scaled bump.

    The sum is exactly 1 on the covered region; supports stay inside the
    omega-enlarged balls.
    """
    pts = grid.points()
    xis = []
    for i in range(len(cover)):
        ball = cover.ball(grid, i)
        u = (pts - np.asarray(ball.center)) @ d.matrix_power(-ball.level).T
        xis.append(bump_profile(d, u))
    denom = np.sum(xis, axis=0) if xis else np.zeros(grid.dims)
    out = []
    for i, xi in enumerate(xis):
        mask = xi > 0.0
        if mask.any() and not (denom[mask] > 0.0).all():
            raise EmptyDenominator("bump support escapes the covered region")
        eta = np.zeros(grid.dims)
        eta[mask] = xi[mask] / denom[mask]
        out.append(grid.like(eta))
    return out


# -- weighted polynomial projection ---------------------------------------------


def _project_coeffs(values: np.ndarray, weight: np.ndarray, basis: np.ndarray):
    """Solve <P, q w> = <F, q w> for all q in the span of ``basis``.

    Least squares handles weight masses concentrated on few cells; returns
    (coefficients, condition number of the weighted Gram).
    """
    gram = (basis * weight) @ basis.T
    rhs = (basis * weight) @ values
    coef, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    sv = np.linalg.svd(gram, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    return coef, cond


def poly_project(f: SampledField, eta: SampledField, s: int, d: Dilation,
                 ball: DilatedBall, raise_ill: bool = True):
    """Orthogonal projection of f onto polynomials of degree <= s under the
    eta weight, in ball-intrinsic monomials.

    Returns ``(coefficients, condition)``; raises IllConditioned above 1e8
    unless ``raise_ill`` is disabled.
    """
    mask = eta.values > 0.0
    if not mask.any():
        raise ValueError("weight is identically zero")
    pts = f.points()
    u = (pts - np.asarray(ball.center)) @ d.matrix_power(-ball.level).T
    basis = monomial_basis(u, s, mask)
    coef, cond = _project_coeffs(f.values[mask], eta.values[mask], basis)
    if raise_ill and cond > COND_LIMIT:
        raise IllConditioned("weighted Gram condition %.3e" % cond)
    return coef, cond


def poly_eval(coef, s: int, d: Dilation, ball: DilatedBall,
              grid: SampledField, mask=None) -> np.ndarray:
    """Evaluate the projected polynomial on (part of) the grid."""
    pts = grid.points()
    u = (pts - np.asarray(ball.center)) @ d.matrix_power(-ball.level).T
    basis = monomial_basis(u, s, mask)
    vals = coef @ basis
    if mask is None:
        return vals.reshape(grid.dims)
    out = np.zeros(grid.dims)
    out[mask] = vals
    return out


# -- single-height split ---------------------------------------------------------


def cz_split(f: SampledField, lam: float, d: Dilation, N: int = None,
             mf: SampledField = None, s: int = 0, dictionary=None) -> dict:
    """Split at one height: good = f 1_{complement} + sum P_i eta_i,
    bad_i = (f - P_i) eta_i; the sum reconstructs f exactly on the grid."""
    if mf is None:
        dictionary = dictionary or default_dictionary()
        mf = grand_maximal(f, dictionary, N or 2, d)
    omega = mf.values > lam
    if not omega.any():
        return {"good": f, "bad": [], "cover": WhitneyCover([], [], 4 * d.omega)}
    cover = whitney_cover(omega, f, d, t=4 * d.omega)
    etas = partition_of_unity(cover, f, d)
    bad = []
    good = f.values * (~omega)
    for i, eta in enumerate(etas):
        ball = cover.ball(f, i)
        coef, _ = poly_project(f, eta, s, d, ball, raise_ill=False)
        mask = eta.values > 0.0
        p_vals = poly_eval(coef, s, d, ball, f, mask)
        bad.append(f.like((f.values - p_vals) * eta.values))
        good = good + p_vals * eta.values
    return {"good": f.like(good), "bad": bad, "cover": cover}


# -- full atomic decomposition ----------------------------------------------------


@dataclass
class DecompositionResult:
    atoms: list
    lambdas: list
    atom_levels: list             # k of each atom
    good: SampledField
    residual: float
    good_sup: float
    functional: float
    c_tilde: float
    covers: dict                  # k -> WhitneyCover
    k_range: tuple
    cond_max: float


def atomic_decompose(f: SampledField, p: ExponentVector, r: float, s: int,
                     d: Dilation, k_lo: int = None, k_hi: int = None,
                     recon_tol: float = 1e-6, dictionary=None,
                     N: int = None, mf: SampledField = None
                     ) -> DecompositionResult:
    """Telescoped Whitney/projection decomposition of a compactly supported
    sampled function into atoms with explicit truncation floor.

    Levels run over ``k_lo <= k < k_hi`` with super-level sets of the grand
    maximal field at heights 2^k (t = 6 omega covers); atoms are the
    normalized two-generation differences.  The bottom part ``g_{k_lo}`` is
    returned as ``good``.  Raises ResidualTooLarge when the truncated
    identity fails beyond ``recon_tol``.
    """
    if dictionary is None:
        dictionary = default_dictionary()
    if N is None:
        N = grand_order(p, d)
    if mf is None:
        mf = grand_maximal(f, dictionary, N, d)
    mx = float(mf.values.max())
    if mx <= 0.0:
        zero = f.zeros_like()
        return DecompositionResult([], [], [], zero, 0.0, 0.0, 0.0, 0.0, {},
                                   (0, 0), 1.0)
    if k_hi is None:
        k_hi = int(math.ceil(math.log2(mx)))
        if 2.0 ** k_hi < mx:
            k_hi += 1
    mn = float(mf.values.min())
    plateau = int(math.floor(math.log2(max(mn, 1e-300))))
    if k_lo is None:
        k_lo = max(plateau, int(math.floor(math.log2(mx * recon_tol))) - 2)
    k_lo = min(k_lo, k_hi - 1)

    t = 6 * d.omega
    uplift = 4 * d.omega
    params = AtomParams(p, np.inf, s)

    # per-level construction, from the top down; the k+1 generation feeds k
    prev = {"cover": WhitneyCover([], [], t), "etas": [], "coefs": [],
            "balls": [], "masks": []}
    raw_atoms = []                    # (k, i, h values, support ball)
    covers = {}
    cond_max = 1.0
    good_vals = None
    for k in range(k_hi - 1, k_lo - 1, -1):
        omega_k = level_set(mf, k)
        if not omega_k.any():
            cur = {"cover": WhitneyCover([], [], t), "etas": [], "coefs": [],
                   "balls": [], "masks": []}
        else:
            cover = whitney_cover(omega_k, f, d, t)
            covers[k] = cover
            etas = partition_of_unity(cover, f, d)
            coefs, balls, masks = [], [], []
            for i, eta in enumerate(etas):
                ball = cover.ball(f, i)
                coef, cond = poly_project(f, eta, s, d, ball, raise_ill=False)
                cond_max = max(cond_max, cond)
                coefs.append(coef)
                balls.append(ball)
                masks.append(eta.values > 0.0)
            cur = {"cover": cover, "etas": etas, "coefs": coefs,
                   "balls": balls, "masks": masks}

        # b_i^k = (f - P_i^k) eta_i^k for the current level
        b_cur = []
        for i in range(len(cur["etas"])):
            pv = poly_eval(cur["coefs"][i], s, d, cur["balls"][i], f,
                           cur["masks"][i])
            b_cur.append((f.values - pv) * cur["etas"][i].values)

        # h_i^k = b_i^k - sum_j (b_j^{k+1} eta_i^k - P_{ij}^{k+1} eta_j^{k+1})
        for i in range(len(cur["etas"])):
            h = b_cur[i].copy()
            eta_i = cur["etas"][i].values
            for j in range(len(prev["etas"])):
                if not (cur["masks"][i] & prev["masks"][j]).any():
                    continue
                corr = prev["b_vals"][j] * eta_i
                fj = (f.values - prev["p_vals"][j]) * eta_i
                u_mask = prev["masks"][j]
                basis = _ball_basis(f, d, prev["balls"][j], s, u_mask)
                coef, cond = _project_coeffs(
                    fj[u_mask], prev["etas"][j].values[u_mask], basis)
                cond_max = max(cond_max, cond)
                pij = np.zeros(f.dims)
                pij[u_mask] = coef @ basis
                h = h - corr + pij * prev["etas"][j].values
            support = DilatedBall(cur["balls"][i].center,
                                  cur["balls"][i].level + uplift)
            raw_atoms.append((k, i, h, support))

        prev = cur
        prev["b_vals"] = b_cur
        prev["p_vals"] = [poly_eval(cur["coefs"][i], s, d, cur["balls"][i],
                                    f, cur["masks"][i])
                          for i in range(len(cur["etas"]))]

    # bottom good part g_{k_lo} = f 1_{complement} + sum P_i eta_i
    omega_lo = level_set(mf, k_lo)
    if not omega_lo.any():
        good_vals = f.values.copy()
    else:
        good_vals = f.values * (~omega_lo)
        for i in range(len(prev["etas"])):
            good_vals = good_vals + prev["p_vals"][i] * prev["etas"][i].values

    # normalize: C~ frozen as the observed max of ||h||_inf / 2^k
    c_tilde = 0.0
    for k, i, h, support in raw_atoms:
        c_tilde = max(c_tilde, float(np.max(np.abs(h))) / 2.0 ** k)
    atoms, lambdas, levels_out = [], [], []
    recon = good_vals.copy()
    from .atoms import validate_atom
    for k, i, h, support in raw_atoms:
        hsup = float(np.max(np.abs(h)))
        if hsup == 0.0:
            continue
        ind = mixed_norm(f.like(
            rasterize_ball(f, d, support, check_inside=False).astype(float)),
            p)
        lam = c_tilde * 2.0 ** k * ind
        vals = h / lam
        fldh = f.like(vals)
        cert = validate_atom(fldh, support, params, d)
        atoms.append(Atom(fldh, support, params, cert))
        lambdas.append(lam)
        levels_out.append(k)
        recon = recon + h
    residual = float(np.max(np.abs(f.values - recon)))
    fmax = float(np.max(np.abs(f.values)))
    rel = residual / fmax if fmax > 0 else residual
    good_sup = float(np.max(np.abs(good_vals))) / fmax if fmax > 0 else 0.0
    func = indicator_functional(lambdas, [a.ball for a in atoms], p, d, f) \
        if atoms else 0.0
    result = DecompositionResult(atoms, lambdas, levels_out, f.like(good_vals),
                                 rel, good_sup, func, c_tilde, covers,
                                 (k_lo, k_hi), cond_max)
    if rel > recon_tol:
        raise ResidualTooLarge(
            "truncated reconstruction off by %.3e (> %.1e); k range (%d, %d)"
            % (rel, recon_tol, k_lo, k_hi))
    return result


def _ball_basis(grid: SampledField, d: Dilation, ball: DilatedBall, s: int,
                mask) -> np.ndarray:
    pts = grid.points()
    u = (pts - np.asarray(ball.center)) @ d.matrix_power(-ball.level).T
    return monomial_basis(u, s, mask)
