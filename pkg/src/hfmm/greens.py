"""Free-space and layered-media Green's functions for the 2-D Helmholtz equation.

Everything here is direct (non-hierarchical) evaluation: the free-space
kernel, the spectral (Sommerfeld) representations, interface reflectance
coefficients, and the adaptive-quadrature oracle for the scattered field.
The fast summation path is validated against these routines.

Conventions
-----------
The interface sits at y = 0 (two-layer) with a second interface at y = -d
for the three-layer medium; sources and targets live in y > 0.  The
vertical spectral wavenumber kappa = sqrt(lambda^2 - k^2) uses the
outgoing-wave branch: positive real for |lambda| > k and -i*sqrt(k^2 -
lambda^2) for |lambda| < k.  The propagating part of every integral is
parameterized by lambda = -k cos(tau), tau in [0, pi], which makes
kappa = -i k sin(tau) and never touches the branch cut.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

from .specfun import hankel0

__all__ = [
    "Point2",
    "PolarOffset",
    "MediaConfig",
    "QuadratureConvergenceError",
    "polar_offset",
    "mirror_image",
    "line_image_density",
    "vertical_wavenumber",
    "reflectance",
    "three_layer_sigma",
    "free_space",
    "free_space_spectral",
    "scattered_direct",
    "scattered_batch",
    "domain_green",
]


class QuadratureConvergenceError(RuntimeError):
    """Adaptive quadrature did not converge within the node budget."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float


@dataclass(frozen=True)
class PolarOffset:
    rho: float
    theta: float  # radians in (-pi, pi]


def _xy(p):
    if isinstance(p, Point2):
        return p.x, p.y
    return float(p[0]), float(p[1])


def polar_offset(dx: float, dy: float) -> PolarOffset:
    """Polar form of the Cartesian offset (dx, dy)."""
    return PolarOffset(rho=float(np.hypot(dx, dy)), theta=float(np.arctan2(dy, dx)))


def mirror_image(p) -> Point2:
    """Reflection about the interface y = 0."""
    x, y = _xy(p)
    return Point2(x, -y)


def line_image_density(alpha: float, s) -> complex:
    """Complex line-image charge density 2*i*alpha*exp(i*alpha*s)."""
    return 2j * alpha * np.exp(1j * alpha * np.asarray(s, dtype=float))


@dataclass(frozen=True)
class MediaConfig:
    """Medium description: wavenumbers, impedance parameter, layer geometry.

    variant is one of "free", "two-layer", "three-layer".  k1 is the
    (top-layer) wavenumber in every variant; alpha the impedance
    parameter of the two-layer interface; k2, k3, d the middle/bottom
    wavenumbers and middle-layer thickness of the three-layer medium
    (interfaces at y = 0 and y = -d).
    """

    variant: str
    k1: float
    alpha: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if self.variant not in ("free", "two-layer", "three-layer"):
            raise ValueError(f"unknown media variant {self.variant!r}")
        if self.k1 <= 0:
            raise ValueError("wavenumber must be positive")
        if self.variant == "three-layer":
            if self.k2 <= 0 or self.k3 <= 0:
                raise ValueError("wavenumbers must be positive")
            if self.d <= 0:
                raise ValueError("layer thickness must be positive")
            if self.k2 > self.k1:
                # A denser middle layer traps guided modes, which put real
                # poles of sigma_1 on the evanescent contour; the real-axis
                # quadrature used throughout does not apply then.
                raise ValueError("middle-layer wavenumber k2 > k1 is not supported "
                                 "(guided-mode poles on the integration contour)")

    @classmethod
    def free(cls, k: float) -> "MediaConfig":
        return cls(variant="free", k1=k)

    @classmethod
    def two_layer(cls, k: float, alpha: float) -> "MediaConfig":
        return cls(variant="two-layer", k1=k, alpha=alpha)

    @classmethod
    def three_layer(cls, k1: float, k2: float, k3: float, d: float) -> "MediaConfig":
        return cls(variant="three-layer", k1=k1, k2=k2, k3=k3, d=d)

    @property
    def k(self) -> float:
        return self.k1

    def rescaled(self, length_scale: float) -> "MediaConfig":
        """Medium in coordinates scaled by length_scale (y' = y * scale).

        Wavenumbers and the impedance parameter divide by the scale,
        thicknesses multiply.
        """
        return MediaConfig(
            variant=self.variant,
            k1=self.k1 / length_scale,
            alpha=self.alpha / length_scale,
            k2=self.k2 / length_scale if self.variant == "three-layer" else 0.0,
            k3=self.k3 / length_scale if self.variant == "three-layer" else 0.0,
            d=self.d * length_scale if self.variant == "three-layer" else 0.0,
        )

    def fingerprint(self) -> str:
        return (f"{self.variant};k1={self.k1!r};alpha={self.alpha!r};"
                f"k2={self.k2!r};k3={self.k3!r};d={self.d!r}")


def vertical_wavenumber(lam_sq, k: float, branch: int = -1):
    """kappa = sqrt(lam^2 - k^2) from the (real) lam^2.

    Positive real on the evanescent side |lam| > k.  On the propagating
    side the root is imaginary and the branch matters: branch=-1 gives
    the outgoing choice -i*sqrt(k^2 - lam^2) (what the lambda = -k cos
    tau parameterization produces), branch=+1 the principal square root
    +i*sqrt(k^2 - lam^2).
    """
    lam_sq = np.asarray(lam_sq, dtype=float)
    diff = lam_sq - k * k
    pos = np.sqrt(np.maximum(diff, 0.0))
    neg = branch * 1j * np.sqrt(np.maximum(-diff, 0.0))
    return np.where(diff >= 0.0, pos.astype(complex), neg)


def three_layer_sigma(media: MediaConfig, lam_sq, path: str = "evanescent", kappa1=None):
    """Spectral reflection/transmission coefficients (sigma1, sigma2+, sigma2-, sigma3).

    Solves, per spectral node, the 4x4 linear system expressing field and
    normal-derivative continuity at the two interfaces.

    path selects the branch of kappa_2, kappa_3 where lam^2 < k_j^2: on
    the propagating contour all three follow the -i branch of kappa_1,
    which makes an equal-wavenumber medium exactly reflection-free; on
    the evanescent contour (where lam >= k_1 and kappa_1 is real) the
    lower-layer roots take the principal branch.
    """
    if media.variant != "three-layer":
        raise ValueError("three_layer_sigma requires a three-layer medium")
    if path not in ("propagating", "evanescent"):
        raise ValueError("path must be 'propagating' or 'evanescent'")
    lower = -1 if path == "propagating" else 1
    lam_sq = np.atleast_1d(np.asarray(lam_sq, dtype=float))
    # kappa1, when supplied by the caller from the contour parameterization,
    # is more accurate than recomputing sqrt(lam_sq - k1^2) near lam = k1.
    if kappa1 is None:
        k1_ = vertical_wavenumber(lam_sq, media.k1, branch=-1)
        k2_ = vertical_wavenumber(lam_sq, media.k2, branch=lower)
        k3_ = vertical_wavenumber(lam_sq, media.k3, branch=lower)
    else:
        k1_ = np.atleast_1d(np.asarray(kappa1, dtype=complex))
        # lam^2 - k_j^2 = kappa1^2 + (k1^2 - k_j^2) avoids the
        # catastrophic cancellation of lam_sq - k_j^2 near lam = k_j
        # (kappa1^2 is real on both contour parameterizations).
        k1sq = (k1_ * k1_).real

        def lower_root(kj):
            diff = k1sq + (media.k1 ** 2 - kj ** 2)
            pos = np.sqrt(np.maximum(diff, 0.0))
            neg = lower * 1j * np.sqrt(np.maximum(-diff, 0.0))
            return np.where(diff >= 0.0, pos.astype(complex), neg)

        k2_ = lower_root(media.k2)
        k3_ = lower_root(media.k3)
    if np.any(k1_ == 0.0) or np.any(k2_ == 0.0) or np.any(k3_ == 0.0):
        raise ValueError("spectral node exactly on a branch point (kappa = 0)")
    e = np.exp(-k2_ * media.d)
    n = lam_sq.size
    mat = np.zeros((n, 4, 4), dtype=complex)
    rhs = np.zeros((n, 4), dtype=complex)
    mat[:, 0, 0] = 1.0 / k1_
    mat[:, 0, 1] = -1.0 / k2_
    mat[:, 0, 2] = -e / k2_
    mat[:, 1, 1] = e / k2_
    mat[:, 1, 2] = 1.0 / k2_
    mat[:, 1, 3] = -1.0 / k3_
    mat[:, 2, 0] = 1.0
    mat[:, 2, 1] = 1.0
    mat[:, 2, 2] = -e
    mat[:, 3, 1] = e
    mat[:, 3, 2] = -1.0
    mat[:, 3, 3] = -1.0
    rhs[:, 0] = -1.0 / k1_
    rhs[:, 2] = 1.0
    try:
        sol = np.linalg.solve(mat, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular three-layer spectral system: {exc}") from exc
    resid = np.abs(np.einsum("nij,nj->ni", mat, sol) - rhs).max(axis=1)
    scale = np.abs(mat).max(axis=(1, 2)) * np.maximum(np.abs(sol).max(axis=1), 1.0)
    worst = float((resid / scale).max())
    if not np.isfinite(worst) or worst > 1e-8:
        raise ValueError(
            f"ill-conditioned three-layer spectral system (relative residual {worst:.2e})")
    return sol[:, 0], sol[:, 1], sol[:, 2], sol[:, 3]


def reflectance(media: MediaConfig, kappa1):
    """Spectral reflectance evaluated at the top-layer vertical wavenumber.

    Two-layer: (kappa + i*alpha) / (kappa - i*alpha).  Three-layer:
    sigma1 from the 4x4 interface system (lambda^2 recovered from
    kappa1^2 + k1^2, which is real on both split branches).  Free space
    returns 0.
    """
    kappa1 = np.asarray(kappa1, dtype=complex)
    if media.variant == "free":
        return np.zeros(kappa1.shape, dtype=complex)
    if media.variant == "two-layer":
        denom = kappa1 - 1j * media.alpha
        if np.any(np.abs(denom) < 1e-12 * max(1.0, abs(media.alpha))):
            raise ValueError("reflectance pole kappa = i*alpha on the evaluation path")
        return (kappa1 + 1j * media.alpha) / denom
    lam_sq = kappa1 * kappa1 + media.k1 ** 2
    if np.any(np.abs(lam_sq.imag) > 1e-9 * (1.0 + np.abs(lam_sq.real))):
        raise ValueError("kappa1 must come from the propagating or evanescent parameterization")
    # kappa1 real (t >= 0) means the evanescent contour; -i k sin(tau) the
    # propagating one.  The two are not mixed in a single call.
    path = "propagating" if np.any(kappa1.imag < -1e-300) else "evanescent"
    sigma1, _, _, _ = three_layer_sigma(media, lam_sq.real, path=path,
                                        kappa1=kappa1.ravel())
    return sigma1.reshape(kappa1.shape)


def free_space(k: float, x, x0) -> complex:
    """Free-space kernel (i/4) H_0^(1)(k * distance)."""
    x1, y1 = _xy(x)
    x2, y2 = _xy(x0)
    r = np.hypot(x1 - x2, y1 - y2)
    if r == 0.0:
        raise ValueError("free_space is singular at coincident points")
    return complex(0.25j * hankel0(k * r))


def free_space_spectral(k: float, x, x0, rules) -> complex:
    """Free-space kernel through the propagating/evanescent split.

    Validation-only path; requires a nonzero vertical separation.
    rules is a SommerfeldRules bundle (fixed-node Legendre + generalized
    Laguerre).
    """
    x1, y1 = _xy(x)
    x2, y2 = _xy(x0)
    dx = x1 - x2
    dy = abs(y1 - y2)
    if dy == 0.0:
        raise ValueError("split spectral form requires |y - y0| > 0")
    prop = rules.propagating
    tau, w = prop.nodes, prop.weights
    val_p = np.sum(w * np.exp(1j * k * (dy * np.sin(tau) - dx * np.cos(tau))))

    # The evanescent integrand peaks at the scale t ~ k (through the
    # 1/sqrt(t^2 + k^2) factor) and decays at the scale 1/dy; a single
    # fixed rule cannot serve both when k*dy is small, so this part is
    # panel-doubled to convergence with a breakpoint at t = k.
    def f_evan(t):
        root = np.sqrt(t * t + k * k)
        return np.exp(-t * dy) * 2.0 * np.cos(root * dx) / root

    T = max(2.0 * k, 45.0 / dy)
    interior = (k,) if k < T else ()
    val_e = _adaptive_gl(f_evan, 0.0, T, 1e-13, interior=interior)
    return complex(0.25j / np.pi * val_p + 0.25 / np.pi * val_e)


# ---------------------------------------------------------------------------
# Adaptive panel-doubling quadrature (the oracle's engine)


@lru_cache(maxsize=None)
def _gl_base(n=16):
    x, w = roots_legendre(n)
    return x, w


def _panel_nodes(a, b, panels, n=16):
    x, w = _gl_base(n)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def spectral_breakpoints(media: MediaConfig, path: str, upper: float):
    """Integration-variable values where the reflectance has a kink.

    Three-layer sigma_1 is analytic in kappa_2 and kappa_3, so it picks
    up square-root branch points where lambda crosses k_2 or k_3.  On
    the propagating contour (variable tau, lambda = -k_1 cos tau) that
    happens for k_j < k_1; on the evanescent contour (variable t,
    lambda = sqrt(t^2 + k_1^2)) for k_j > k_1.  Two-layer reflectance
    is smooth and yields no breakpoints.
    """
    pts = []
    if media.variant == "three-layer":
        k1 = media.k1
        for kj in (media.k2, media.k3):
            if path == "propagating" and kj < k1:
                pts.append(float(np.arccos(kj / k1)))
                pts.append(float(np.arccos(-kj / k1)))
            elif path == "evanescent" and kj > k1:
                pts.append(float(np.sqrt(kj * kj - k1 * k1)))
    return sorted({p for p in pts if 0.0 < p < upper})


def _segment_maps(a, b, interior):
    """Per-segment cosine maps u in [0,1] -> x in [s0,s1].

    The map x = s0 + (s1-s0)(1-cos(pi u))/2 clusters nodes quadratically
    at both segment ends, which turns endpoint square-root kinks into
    analytic integrands and keeps panel doubling exponentially
    convergent.
    """
    edges = [a] + list(interior) + [b]
    maps = []
    for s0, s1 in zip(edges[:-1], edges[1:]):
        h = s1 - s0

        def xw(u, s0=s0, h=h):
            x = s0 + 0.5 * h * (1.0 - np.cos(np.pi * u))
            w = 0.5 * h * np.pi * np.sin(np.pi * u)
            return x, w

        maps.append(xw)
    return maps


def _adaptive_gl(f, a, b, tol, interior=(), max_panels=4096):
    """Panel-doubling composite Gauss-Legendre for a vectorized integrand.

    The range is split at the interior breakpoints and each segment is
    integrated under the cosine substitution; panels double per segment
    until two successive levels agree.
    """
    total = 0.0 + 0.0j
    maps = _segment_maps(a, b, interior)
    seg_tol = tol / len(maps)
    for xw in maps:
        prev = None
        panels = 1
        while True:
            u, wu = _panel_nodes(0.0, 1.0, panels)
            x, w = xw(u)
            val = np.sum(wu * w * f(x))
            if prev is not None and abs(val - prev) <= seg_tol * max(1.0, abs(val)):
                break
            if panels >= max_panels:
                raise QuadratureConvergenceError(
                    f"panel-doubling quadrature on [{a:g},{b:g}] did not converge to {tol:g}")
            prev = val
            panels *= 2
        total += val
    return total


def _check_layered_geometry(media, y, y0):
    if media.variant == "free":
        raise ValueError("scattered field is zero in free space")
    if y0 <= 0:
        raise ValueError("layered evaluation requires the source in the top layer (y0 > 0)")
    if y + y0 <= 0:
        # y slightly below the interface is allowed: the spectral form
        # continues there, which finite-difference boundary checks use.
        raise ValueError("layered evaluation requires y + y0 > 0")


def _evanescent_cutoff(media, dy, tol):
    # e^{-T dy} below tol (with margin) bounds the dropped tail.
    return max(2.0 * media.k1, (-np.log(max(tol, 1e-16)) + 8.0) / dy)


def scattered_direct(media: MediaConfig, x, x0, tol: float = 1e-12) -> complex:
    """Brute-force scattered field u^s(x; x0) by adaptive Sommerfeld quadrature.

    The spectral integral is split into the propagating part over
    [0, pi] (after lambda = -k cos tau) and the evanescent part over
    [0, T] with T chosen so the dropped tail is below tol.
    """
    if not 1e-14 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-14, 1e-6]")
    x1, y1 = _xy(x)
    x2, y2 = _xy(x0)
    _check_layered_geometry(media, y1, y2)
    k = media.k1
    dx = x1 - x2
    dy = y1 + y2

    def f_prop(tau):
        kappa = -1j * k * np.sin(tau)
        return np.exp(1j * k * (dy * np.sin(tau) - dx * np.cos(tau))) * reflectance(media, kappa)

    val_p = 0.25j / np.pi * _adaptive_gl(
        f_prop, 0.0, np.pi, tol,
        interior=spectral_breakpoints(media, "propagating", np.pi))

    T = _evanescent_cutoff(media, dy, tol)

    def f_evan(t):
        root = np.sqrt(t * t + k * k)
        return (np.exp(-t * dy) / root * 2.0 * np.cos(root * dx)
                * reflectance(media, t.astype(complex)))

    val_e = 0.25 / np.pi * _adaptive_gl(
        f_evan, 0.0, T, tol,
        interior=spectral_breakpoints(media, "evanescent", T))
    return complex(val_p + val_e)


def scattered_batch(media: MediaConfig, dx, dy, tol: float = 1e-12) -> np.ndarray:
    """Scattered field for many (dx, dy) offsets at once.

    dx = x - x0 and dy = y + y0 as arrays; panel counts are doubled
    until the whole batch is converged.  Used by the O(N^2) reference
    driver, where per-pair adaptivity would be too slow.
    """
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if media.variant == "free":
        return np.zeros(dx.shape, dtype=complex)
    if np.any(dy <= 0):
        raise ValueError("layered evaluation requires y + y0 > 0")
    k = media.k1

    def prop_value(tau, w):
        sigma = reflectance(media, -1j * k * np.sin(tau))
        ph = np.exp(1j * k * (dy[:, None] * np.sin(tau)[None, :]
                              - dx[:, None] * np.cos(tau)[None, :]))
        return ph @ (w * sigma)

    def evan_value(t, w):
        root = np.sqrt(t * t + k * k)
        sigma = reflectance(media, t.astype(complex))
        base = w * sigma / root
        mat = np.exp(-np.outer(dy, t)) * 2.0 * np.cos(np.outer(dx, root))
        return mat @ base

    T = _evanescent_cutoff(media, float(dy.min()), tol)

    out = np.zeros(dx.shape, dtype=complex)
    jobs = ((prop_value, 0.25j / np.pi, 0.0, np.pi, "propagating"),
            (evan_value, 0.25 / np.pi, 0.0, T, "evanescent"))
    for fn, scale, a, b, path in jobs:
        maps = _segment_maps(a, b, spectral_breakpoints(media, path, b))
        seg_tol = tol / len(maps)
        for xw in maps:
            prev = None
            panels = 2
            while True:
                u, wu = _panel_nodes(0.0, 1.0, panels)
                x, w = xw(u)
                val = fn(x, wu * w)
                if prev is not None:
                    err = np.max(np.abs(val - prev) / np.maximum(1.0, np.abs(val)))
                    if err <= seg_tol:
                        break
                if panels > 4096:
                    raise QuadratureConvergenceError(
                        "batched Sommerfeld quadrature did not converge")
                prev = val
                panels *= 2
            out = out + scale * val
    return out


def domain_green(media: MediaConfig, x, x0, tol: float = 1e-12) -> complex:
    """Total field: free-space kernel plus the interface-scattered part."""
    g = free_space(media.k1, x, x0)
    if media.variant == "free":
        return g
    return g + scattered_direct(media, x, x0, tol)
