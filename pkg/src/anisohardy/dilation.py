"""Anisotropic geometry: expansive matrix, ellipsoid, dilated balls, step quasi-norm.

The scaling structure is generated by an expansive matrix ``A`` (all eigenvalue
moduli > 1).  An ellipsoid ``Delta = {x: x^T S x < c}`` of unit volume is built
from the Lyapunov-type series ``S = sum_k (A^-k)^T A^-k``; the dilated balls are
``B_k = A^k Delta`` with ``|B_k| = b^k``, ``b = |det A|``.  The step quasi-norm
takes the value ``b^(m-1)`` on ``B_m \\ B_{m-1}`` and scales exactly under ``A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, NotExpansive, SingularMatrix

_UNIT_BALL_VOLUME = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


@dataclass(frozen=True)
class DilatedBall:
    """Translate ``center + B_level`` of the dilated ellipsoid family."""

    center: tuple
    level: int

    def volume(self, d: "Dilation") -> float:
        return d.b ** self.level


class Dilation:
    """Immutable bundle of the geometry derived from an expansive matrix.

    Attributes
    ----------
    A : ndarray
        The expansive matrix (n x n).
    n : int
        Space dimension.
    b : float
        ``|det A|``.
    lam_minus, lam_plus : float
        Spectral bounds, equal to min/max eigenvalue modulus for
        diagonalizable ``A`` and adjusted strictly outward otherwise.
    S : ndarray
        Symmetric positive definite ellipsoid form.
    c : float
        Level so that ``{x: x^T S x < c}`` has volume one.
    r : float
        Expansion ratio with ``Delta subset r Delta subset A Delta``.
    omega : int
        Least integer with ``r**omega >= 2``.
    H : float
        Quasi-triangle constant ``b**omega``.
    """

    def __init__(self, A, b, lam_minus, lam_plus, S, c, r, omega):
        self.A = A
        self.n = A.shape[0]
        self.b = b
        self.lam_minus = lam_minus
        self.lam_plus = lam_plus
        self.S = S
        self.c = c
        self.r = r
        self.omega = omega
        self.H = b ** omega
        self._Ainv = np.linalg.inv(A)
        self._pow = {0: np.eye(self.n)}   # cache of A^k, k in Z
        self._qform = {}                  # cache of (A^-k)^T S A^-k

    # -- cached matrix powers -------------------------------------------------

    def matrix_power(self, k: int) -> np.ndarray:
        """``A**k`` for integer ``k`` (negative powers use the exact inverse)."""
        p = self._pow.get(k)
        if p is None:
            if k > 0:
                p = self.matrix_power(k - 1) @ self.A
            else:
                p = self.matrix_power(k + 1) @ self._Ainv
            self._pow[k] = p
        return p

    def level_form(self, k: int) -> np.ndarray:
        """Quadratic form of ``B_k``: ``y in B_k  iff  y^T Q_k y < c``."""
        q = self._qform.get(k)
        if q is None:
            with np.errstate(over="ignore", invalid="ignore"):
                m = self.matrix_power(-k)
                q = m.T @ self.S @ m
            self._qform[k] = q
        return q

    # -- membership and quasi-norm --------------------------------------------

    def in_ball(self, points, k: int):
        """Strict membership of ``points`` (shape (..., n)) in ``B_k``.

        Overflow in the quadratic form at extreme levels yields inf/nan,
        which compares as "outside"; the monotone level scans tolerate that.
        """
        pts = np.asarray(points, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            q = self.level_form(k)
            val = np.einsum("...i,ij,...j->...", pts, q, pts)
        return val < self.c

    def level_of(self, x) -> int:
        """Minimal integer ``m`` with ``A^-m x`` in the ellipsoid (x != 0)."""
        x = np.asarray(x, dtype=float)
        nx = float(np.linalg.norm(x))
        m = int(math.ceil(math.log(max(nx, 1e-300)) / math.log(self.lam_minus)))
        # monotone scan around the seed; membership in B_m is monotone in m
        while not self.in_ball(x, m):
            m += 1
        while self.in_ball(x, m - 1):
            m -= 1
        return m

    def rho(self, x) -> float:
        """Step homogeneous quasi-norm; 0 at the origin, ``b**(m-1)`` on
        ``B_m \\ B_{m-1}``.

        Points of Euclidean norm below 1e-120 are treated as the origin so
        the level search stays inside double range.
        """
        x = np.asarray(x, dtype=float)
        if float(np.linalg.norm(x)) < 1e-120:
            return 0.0
        return self.b ** (self.level_of(x) - 1)

    def inradius(self, k: int) -> float:
        """Radius of the largest Euclidean ball inside ``B_k``."""
        return math.sqrt(self.c / float(np.linalg.eigvalsh(self.level_form(k)).max()))

    def outradius(self, k: int) -> float:
        """Radius of the smallest Euclidean ball containing ``B_k``."""
        return math.sqrt(self.c / float(np.linalg.eigvalsh(self.level_form(k)).min()))

    def level_window(self, norm_min: float, norm_max: float) -> tuple:
        """Levels ``(lo, hi)`` with ``B_lo`` missing every point of norm
        >= norm_min and ``B_hi`` containing every point of norm <= norm_max."""
        lo = 0
        while self.outradius(lo) >= norm_min:
            lo -= 1
        hi = 0
        while self.inradius(hi) <= norm_max:
            hi += 1
        return lo, hi

    def rho_many(self, points) -> np.ndarray:
        """Vectorized quasi-norm over an array of points, shape (..., n)."""
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, self.n)
        out = np.zeros(len(flat))
        nz = np.linalg.norm(flat, axis=1) >= 1e-120
        if np.any(nz):
            idx = np.nonzero(nz)[0]
            sub = flat[idx]
            norms = np.linalg.norm(sub, axis=1)
            lo, hi = self.level_window(float(norms.min()), float(norms.max()))
            level = np.full(len(sub), hi, dtype=int)
            pending = np.ones(len(sub), dtype=bool)
            for m in range(lo + 1, hi + 1):
                if not pending.any():
                    break
                inside = self.in_ball(sub[pending], m)
                sel = np.nonzero(pending)[0][inside]
                level[sel] = m
                pending[sel] = False
            out[idx] = self.b ** (level - 1.0)
        return out.reshape(shape)

    def ellipsoid_extent(self, k: int) -> np.ndarray:
        """Half-widths of the bounding box of ``B_k`` along the axes."""
        q = self.level_form(k)
        qinv = np.linalg.inv(q)
        return np.sqrt(self.c * np.diag(qinv))


def new_dilation(A, tol: float = 1e-12) -> Dilation:
    """Construct the geometry for an expansive matrix.

    The ellipsoid form is the truncated series ``S = sum_k (A^-k)^T A^-k``
    (stopped when the added term's spectral norm drops below ``tol``), the
    level ``c`` solves the closed-form unit-volume equation, and the
    expansion ratio is ``r = (1 - 1/lam_max(S))**(-1/2)``, which makes
    ``Delta subset r Delta subset A Delta`` hold by the generalized
    eigenvalue criterion.

    Raises
    ------
    NotExpansive
        If some eigenvalue modulus is <= 1 + tol.
    SingularMatrix
        If ``A`` is (numerically) singular.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    n = A.shape[0]
    if n not in (1, 2, 3):
        raise ValueError("supported dimensions are 1, 2, 3")
    det = np.linalg.det(A)
    if abs(det) < 1e-300:
        raise SingularMatrix("det A = %g" % det)
    eigvals, eigvecs = np.linalg.eig(A)
    moduli = np.abs(eigvals)
    if moduli.min() <= 1.0 + tol:
        raise NotExpansive(
            "eigenvalue moduli %s not all > 1 + tol" % np.array_str(moduli)
        )
    b = abs(det)

    # Lyapunov-type series for the ellipsoid form.
    Ainv = np.linalg.inv(A)
    S = np.eye(n)
    term = np.eye(n)
    for _ in range(10_000):
        term = Ainv.T @ term @ Ainv
        S = S + term
        if np.linalg.norm(term, 2) < tol:
            break
    S = 0.5 * (S + S.T)

    # unit volume: |{x: x^T S x < c}| = c^{n/2} V_n / sqrt(det S) = 1
    c = (math.sqrt(np.linalg.det(S)) / _UNIT_BALL_VOLUME[n]) ** (2.0 / n)
    lam_max_S = float(np.linalg.eigvalsh(S).max())
    r = (1.0 - 1.0 / lam_max_S) ** -0.5
    omega = int(math.ceil(math.log(2.0) / math.log(r)))
    if r ** omega < 2.0:   # guard against ceil rounding down at the boundary
        omega += 1

    # spectral bounds: exact at the spectrum for diagonalizable A, strictly
    # outside it otherwise
    lam_lo, lam_hi = float(moduli.min()), float(moduli.max())
    if _is_diagonalizable(A, eigvals, eigvecs):
        lam_minus, lam_plus = lam_lo, lam_hi
    else:
        adj = max(tol, 1e-6)
        lam_minus, lam_plus = lam_lo / (1.0 + adj), lam_hi * (1.0 + adj)

    return Dilation(A, b, lam_minus, lam_plus, S, c, r, omega)


def _is_diagonalizable(A, eigvals, eigvecs) -> bool:
    n = A.shape[0]
    if len(np.unique(np.round(eigvals, 9))) == n:
        return True
    try:
        cond = np.linalg.cond(eigvecs)
    except np.linalg.LinAlgError:
        return False
    return bool(np.isfinite(cond) and cond < 1e8)


def ball_membership(d: Dilation, ball: DilatedBall, y) -> bool:
    """Strict quadratic-form membership ``y in center + B_level``."""
    dy = np.asarray(y, dtype=float) - np.asarray(ball.center, dtype=float)
    return bool(d.in_ball(dy, ball.level))


def quasi_norm_comparison(d: Dilation, points) -> dict:
    """Smallest constant C >= 1 making the two-sided power comparisons between
    ``rho`` and the Euclidean norm hold at every sampled point.

    Points with ``rho >= 1`` are checked against the ``ln(lam)/ln(b)`` power
    pair for large arguments, points with ``rho < 1`` against the reversed
    pair.  Returns ``{"Cmax": C}``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise EmptyInput("no points given")
    pts = pts.reshape(-1, d.n)
    e_minus = math.log(d.lam_minus) / math.log(d.b)
    e_plus = math.log(d.lam_plus) / math.log(d.b)
    cmax = 1.0
    for x in pts:
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            continue
        rx = d.rho(x)
        if rx >= 1.0:
            cmax = max(cmax, rx ** e_minus / nx, nx / rx ** e_plus)
        else:
            cmax = max(cmax, rx ** e_plus / nx, nx / rx ** e_minus)
    return {"Cmax": cmax}


def mc_ball_volume(d: Dilation, k: int, samples: int = 200_000,
                   seed: int = 0) -> float:
    """Monte-Carlo volume of ``B_k`` by rejection over its bounding box."""
    rng = np.random.default_rng(seed)
    ext = d.ellipsoid_extent(k)
    pts = rng.uniform(-ext, ext, size=(samples, d.n))
    frac = float(np.mean(d.in_ball(pts, k)))
    box = float(np.prod(2.0 * ext))
    return frac * box
