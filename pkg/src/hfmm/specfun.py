"""Integer-order Bessel and Hankel functions of real positive argument.

These are the kernel primitives behind every expansion and translation
operator: J_n for multipole coefficients and local evaluation, H_n^(1)
for outgoing expansions and multipole-to-local translations.

Order sweeps (all orders 0..nmax at once) are the workhorse interface.
J_n uses Miller's downward recurrence, anchored on the order-0/1 values,
which is stable for the full order range needed here (up to 2P+2 with P
as large as 39).  Y_n uses the three-term recurrence run upward from
Y_0, Y_1, which is stable because |Y_n| grows with n.
"""

from __future__ import annotations

import numpy as np
from scipy.special import j0 as _j0, j1 as _j1, y0 as _y0, y1 as _y1

__all__ = [
    "SUPPORTED_MAX_ARG",
    "bessel_j",
    "bessel_y",
    "hankel1",
    "bessel_j_sweep",
    "bessel_y_sweep",
    "hankel1_sweep",
    "hankel0",
]

# Beyond this the low-frequency expansion regime targeted here does not apply.
SUPPORTED_MAX_ARG = 1.0e4

# Rescaling threshold for Miller's downward recurrence: unnormalized values
# grow toward low orders and can overflow for small arguments.
_MILLER_BIG = 1.0e250
_MILLER_SMALL = 1.0e-250


def _check_arg(x, allow_zero):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("argument must be nonnegative")
    if not allow_zero and np.any(x == 0.0):
        raise ValueError("argument must be positive (logarithmic singularity at 0)")
    if np.any(x > SUPPORTED_MAX_ARG):
        raise ValueError(f"argument exceeds supported range (x <= {SUPPORTED_MAX_ARG:g})")
    return x


def _miller_start(nmax, xmax):
    # Start high enough that the downward recurrence has converged to the
    # minimal solution by the time it reaches nmax.
    base = max(nmax, int(xmax))
    return base + 20 + int(2.0 * np.sqrt(max(base, 40)))


def bessel_j_sweep(nmax: int, x) -> np.ndarray:
    """J_n(x) for all orders n = 0..nmax.

    Parameters
    ----------
    nmax : int
        Highest order, >= 0.
    x : float or array
        Argument(s), 0 <= x <= SUPPORTED_MAX_ARG.

    Returns
    -------
    ndarray of shape (nmax+1,) + shape(x).
    """
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    x = _check_arg(x, allow_zero=True)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.zeros((nmax + 1,) + x.shape)

    zero = x == 0.0
    out[0, zero] = 1.0
    if np.all(zero):
        return out.reshape(nmax + 1) if scalar else out

    xs = x[~zero]
    m_start = _miller_start(nmax, float(xs.max()))

    fp = np.zeros_like(xs)          # unnormalized J_{n+1}
    fc = np.full_like(xs, 1e-30)    # unnormalized J_n
    vals = np.zeros((nmax + 1, xs.size))
    for n in range(m_start, -1, -1):
        fm = (2.0 * (n + 1) / xs) * fc - fp
        fp, fc = fc, fm
        big = np.abs(fc) > _MILLER_BIG
        if np.any(big):
            fc[big] *= _MILLER_SMALL
            fp[big] *= _MILLER_SMALL
            vals[:, big] *= _MILLER_SMALL
        if n <= nmax:
            vals[n] = fc

    # Anchor on whichever of J_0, J_1 is larger to avoid dividing near a zero.
    # After the loop fc, fp hold the unnormalized order-0 and order-1 values.
    a0, a1 = _j0(xs), _j1(xs)
    use0 = np.abs(a0) >= np.abs(a1)
    unnorm1 = vals[1] if nmax >= 1 else fp
    denom = np.where(use0, vals[0], unnorm1)
    scale = np.where(use0, a0, a1) / denom
    vals *= scale

    out[:, ~zero] = vals
    return out.reshape(nmax + 1) if scalar else out


def bessel_y_sweep(nmax: int, x) -> np.ndarray:
    """Y_n(x) for all orders n = 0..nmax (x > 0), by upward recurrence."""
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    x = _check_arg(x, allow_zero=False)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    vals = np.empty((nmax + 1,) + x.shape)
    vals[0] = _y0(x)
    if nmax >= 1:
        vals[1] = _y1(x)
    for n in range(1, nmax):
        vals[n + 1] = (2.0 * n / x) * vals[n] - vals[n - 1]
    return vals.reshape(nmax + 1) if scalar else vals


def hankel1_sweep(nmax: int, x) -> np.ndarray:
    """H_n^(1)(x) = J_n(x) + i Y_n(x) for n = 0..nmax (x > 0)."""
    return bessel_j_sweep(nmax, x) + 1j * bessel_y_sweep(nmax, x)


def hankel0(x) -> np.ndarray:
    """H_0^(1)(x), vectorized fast path for the near-field kernel."""
    x = np.asarray(x, dtype=float)
    return _j0(x) + 1j * _y0(x)


def _reflect_sign(n):
    return -1.0 if (n & 1) else 1.0


def bessel_j(n: int, x: float) -> float:
    """Bessel function of the first kind, integer order, x >= 0.

    Negative orders via J_{-n}(x) = (-1)^n J_n(x).
    """
    m = abs(int(n))
    val = float(bessel_j_sweep(m, float(x))[m])
    return _reflect_sign(n) * val if n < 0 else val


def bessel_y(n: int, x: float) -> float:
    """Bessel function of the second kind, integer order, x > 0."""
    m = abs(int(n))
    val = float(bessel_y_sweep(m, float(x))[m])
    return _reflect_sign(n) * val if n < 0 else val


def hankel1(n: int, x: float) -> complex:
    """Hankel function of the first kind, H_n^(1)(x) = J_n(x) + i Y_n(x)."""
    return complex(bessel_j(n, x), bessel_y(n, x))
