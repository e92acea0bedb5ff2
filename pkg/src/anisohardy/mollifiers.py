"""Mollifier profiles and their Schwartz-seminorm normalization records.

Profiles are analytic in closed form (gaussian, compact bump, radially
orthogonalized moment-free bump, difference-of-gaussians) so they can be
sampled at arbitrary lattice offsets.  Seminorm records ``sup |d^a phi| *
max(1, rho^m)`` are estimated with second-order centered differences on a
fine reference grid and cached per dilation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dilation import Dilation
from .errors import NotInSN, ZeroMean

_REF_POINTS = 161   # reference grid per axis for seminorm / mass estimation


def _bump_radial(r):
    """exp(-1/(1-r^2)) on r < 1, zero outside; C-infinity."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    t = r[inside]
    out[inside] = np.exp(-1.0 / (1.0 - t * t))
    return out


@dataclass
class MollifierDescriptor:
    """Named smooth profile with parameters and cached normalization data.

    ``name`` is one of ``gaussian``, ``compact-bump``, ``moment-free-bump``,
    ``annulus-bandlimited`` or ``ball-uniform``; a ``custom`` profile takes
    an explicit callable.  ``width`` scales the support / standard deviation
    and ``order`` is the vanishing-moment order of the moment-free variants.
    """

    name: str
    width: float = 1.0
    order: int = 0
    fn: object = None
    _cache: dict = field(default_factory=dict, repr=False)

    @staticmethod
    def custom(fn, support_radius: float, name: str = "custom"):
        return MollifierDescriptor(name=name, width=support_radius, fn=fn)

    # -- evaluation -----------------------------------------------------------

    def sample(self, points) -> np.ndarray:
        """Profile values at ``points`` (shape (..., n))."""
        pts = np.asarray(points, dtype=float)
        n = pts.shape[-1]
        r2 = np.sum(pts * pts, axis=-1)
        w = self.width
        if self.fn is not None:
            return np.asarray(self.fn(pts), dtype=float)
        if self.name == "gaussian":
            return np.exp(-0.5 * r2 / w**2) / (2.0 * math.pi * w**2) ** (n / 2.0)
        if self.name == "compact-bump":
            return _bump_radial(np.sqrt(r2) / w) / self._bump_mass(n)
        if self.name == "moment-free-bump":
            coef = self._radial_coef(n)
            t = r2 / w**2
            poly = np.polynomial.polynomial.polyval(t, coef)
            return _bump_radial(np.sqrt(r2) / w) * poly
        if self.name == "annulus-bandlimited":
            # zero-mean difference of mass-one gaussians
            s1, s2 = w, 2.0 * w
            g1 = np.exp(-0.5 * r2 / s1**2) / (2.0 * math.pi * s1**2) ** (n / 2.0)
            g2 = np.exp(-0.5 * r2 / s2**2) / (2.0 * math.pi * s2**2) ** (n / 2.0)
            return g1 - g2
        if self.name == "ball-uniform":
            vol = _euclid_ball_volume(n, w)
            return (r2 < w * w).astype(float) / vol
        raise ValueError("unknown mollifier %r" % self.name)

    def support_radius(self, n: int = 2) -> float:
        """Euclidean radius beyond which the profile is negligible (< 1e-12
        of its maximum) or identically zero."""
        if self.name in ("compact-bump", "moment-free-bump", "ball-uniform",
                         "custom"):
            return self.width
        if self.name == "gaussian":
            return self.width * math.sqrt(2.0 * math.log(1e12))
        if self.name == "annulus-bandlimited":
            return 2.0 * self.width * math.sqrt(2.0 * math.log(1e12))
        return self.width

    def mass(self, n: int = 2) -> float:
        """Integral of the profile (analytic where available)."""
        if self.name == "gaussian" or self.name == "ball-uniform":
            return 1.0
        if self.name == "annulus-bandlimited":
            return 0.0
        key = ("mass", n)
        if key not in self._cache:
            self._cache[key] = self._numeric_mass(n)
        return self._cache[key]

    # -- internals ------------------------------------------------------------

    def _reference_grid(self, n: int):
        rad = self.support_radius(n)
        ax = np.linspace(-rad, rad, _REF_POINTS)
        h = ax[1] - ax[0]
        mesh = np.meshgrid(*([ax] * n), indexing="ij")
        return np.stack(mesh, axis=-1), h

    def _numeric_mass(self, n: int) -> float:
        pts, h = self._reference_grid(n)
        return float(np.sum(self.sample(pts)) * h**n)

    def _bump_mass(self, n: int) -> float:
        key = ("bumpmass", n)
        if key not in self._cache:
            pts, h = self._reference_grid(n)
            r = np.sqrt(np.sum(pts * pts, axis=-1))
            self._cache[key] = float(np.sum(_bump_radial(r / self.width)) * h**n)
        return self._cache[key]

    def _radial_coef(self, n: int) -> np.ndarray:
        """Coefficients of the radial polynomial q(t), t = |x/w|^2, that kills
        all moments of bump * q up to the requested order."""
        key = ("radcoef", n)
        if key in self._cache:
            return self._cache[key]
        m_max = self.order // 2          # even moments 0..order
        deg = m_max + 1
        # radial quadrature of bump(r) r^(2m + n - 1) on [0, 1]
        nodes = 4001
        rr = (np.arange(nodes) + 0.5) / nodes
        wgt = _bump_radial(rr) * rr ** (n - 1) / nodes
        basis = rr[None, :] ** (2 * np.arange(deg + 1)[:, None])   # t^j = r^(2j)
        gram = basis @ (wgt * basis).T
        # orthogonalize t^deg against span{1, ..., t^(deg-1)}
        coef = np.zeros(deg + 1)
        coef[deg] = 1.0
        sol = np.linalg.solve(gram[:deg, :deg], gram[:deg, deg])
        coef[:deg] = -sol
        # scale so the profile peak is O(1)
        tpk = np.argmax(np.abs(_bump_radial(rr) *
                               np.polynomial.polynomial.polyval(rr**2, coef)))
        peak = abs(_bump_radial(rr[tpk]) *
                   np.polynomial.polynomial.polyval(rr[tpk] ** 2, coef))
        coef = coef / max(peak, 1e-300)
        self._cache[key] = coef
        return coef

    def schwartz_record(self, d: Dilation, N: int) -> dict:
        """Seminorm table ``{(alpha, m): sup rho^m |d^alpha phi|}`` for
        ``|alpha| <= N, m <= N``, by centered differences on the reference
        grid."""
        key = ("record", id(d), N, d.n)
        if key in self._cache:
            return self._cache[key]
        pts, h = self._reference_grid(d.n)
        vals = self.sample(pts)
        rho = d.rho_many(pts)
        record = {}
        stack = {(0,) * d.n: vals}
        for alpha in _multi_indices(d.n, N):
            arr = _derivative(stack, alpha, h)
            for m in range(N + 1):
                record[(alpha, m)] = float(np.max(np.abs(arr) * rho**m))
        self._cache[key] = record
        return record

    def sn_norm(self, d: Dilation, N: int) -> float:
        """sup over |alpha| <= N of sup |d^alpha phi| max(1, rho^N)."""
        rec = self.schwartz_record(d, N)
        out = 0.0
        for alpha in _multi_indices(d.n, N):
            out = max(out, rec[(alpha, 0)], rec[(alpha, N)])
        return out


def _euclid_ball_volume(n: int, radius: float) -> float:
    return {1: 2.0 * radius, 2: math.pi * radius**2,
            3: 4.0 * math.pi / 3.0 * radius**3}[n]


def _multi_indices(n: int, order: int):
    """All multi-indices with total degree <= order."""
    if n == 1:
        return [(a,) for a in range(order + 1)]
    if n == 2:
        return [(a, b) for a in range(order + 1)
                for b in range(order + 1 - a)]
    return [(a, b, c) for a in range(order + 1)
            for b in range(order + 1 - a)
            for c in range(order + 1 - a - b)]


def _derivative(stack: dict, alpha: tuple, h: float) -> np.ndarray:
    """Mixed partial by chained second-order central differences, memoized."""
    if alpha in stack:
        return stack[alpha]
    axis = next(i for i, a in enumerate(alpha) if a > 0)
    parent = tuple(a - (1 if i == axis else 0) for i, a in enumerate(alpha))
    arr = np.gradient(_derivative(stack, parent, h), h, axis=axis)
    stack[alpha] = arr
    return arr


def normalize_into_sn(phi: MollifierDescriptor, d: Dilation, N: int):
    """Scale factor putting the profile into the S_N unit ball.

    Returns ``1 / sn_norm``; raises NotInSN when the seminorm is degenerate.
    """
    norm = phi.sn_norm(d, N)
    if not np.isfinite(norm) or norm <= 0.0:
        raise NotInSN("seminorm of %s is %g" % (phi.name, norm))
    return 1.0 / norm


def require_nonzero_mean(phi: MollifierDescriptor, n: int) -> None:
    if abs(phi.mass(n)) < 1e-10:
        raise ZeroMean("profile %s has (numerically) zero integral" % phi.name)


def default_dictionary() -> list:
    """Eight-profile dictionary used by the grand maximal function."""
    return [
        MollifierDescriptor("gaussian", width=0.25),
        MollifierDescriptor("gaussian", width=0.45),
        MollifierDescriptor("gaussian", width=0.7),
        MollifierDescriptor("compact-bump", width=0.5),
        MollifierDescriptor("compact-bump", width=0.9),
        MollifierDescriptor("moment-free-bump", width=0.7, order=1),
        MollifierDescriptor("moment-free-bump", width=1.1, order=1),
        MollifierDescriptor("annulus-bandlimited", width=0.3),
    ]
